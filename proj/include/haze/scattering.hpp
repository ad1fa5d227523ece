#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

#include "haze/errors.hpp"
#include "haze/image.hpp"
#include "haze/rng.hpp"

namespace haze {

constexpr double kDefaultEpsilon = 0.05;   // minimal observable contrast
constexpr double kDefaultTmin = 1e-3;      // transmission floor for inversion

/// Homogeneous haze parameters: per-channel airlight color, visibility in
/// meters, and the contrast threshold that defines visibility.
struct ScatteringParams {
    Vec3 airlight{0.0, 0.0, 0.0};
    double visibility = 0.0;
    double epsilon = kDefaultEpsilon;

    void validate() const {
        if (!(visibility > 0.0) || !std::isfinite(visibility))
            throw std::domain_error("ScatteringParams: visibility must be positive");
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw std::domain_error("ScatteringParams: epsilon must lie in (0,1)");
        for (double a : airlight)
            if (!(a >= 0.0 && a <= 1.0))
                throw std::domain_error("ScatteringParams: airlight outside [0,1]");
    }
};

/// Attenuation rate per meter. Visibility is the distance at which a black
/// object's contrast against the horizon drops to epsilon, so
/// beta * visibility == -ln(epsilon).
inline double extinction_coefficient(double visibility, double epsilon) {
    if (!(visibility > 0.0) || !std::isfinite(visibility))
        throw std::domain_error("extinction_coefficient: visibility must be positive");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::domain_error("extinction_coefficient: epsilon must lie in (0,1)");
    return -std::log(epsilon) / visibility;
}

/// Per-pixel transmission T = exp(-beta * R), in (0,1], 1 where R = 0.
inline ScalarField transmission_map(const ScalarField& range, double beta) {
    if (!(beta > 0.0) || !std::isfinite(beta))
        throw std::domain_error("transmission_map: beta must be positive");

    ScalarField t(range.height, range.width);
    for (std::size_t p = 0; p < range.size(); ++p) {
        if (!(range.v[p] >= 0.0) || !std::isfinite(range.v[p]))
            throw std::domain_error("transmission_map: range must be finite and non-negative");
        t.v[p] = std::exp(-beta * range.v[p]);
    }
    return t;
}

/// Koschmieder blend: I = I' * T + A * (1 - T). The output is a per-channel
/// convex combination of the clear value and the airlight.
inline RasterImage synthesize_haze(const RasterImage& clear, const ScalarField& range,
                                   const ScatteringParams& params) {
    params.validate();
    require_same_shape(clear, range, "synthesize_haze");
    require_unit_range(clear, "synthesize_haze");

    const double beta = extinction_coefficient(params.visibility, params.epsilon);
    RasterImage out(clear.height, clear.width);
    for (std::size_t p = 0; p < range.size(); ++p) {
        if (!(range.v[p] >= 0.0) || !std::isfinite(range.v[p]))
            throw std::domain_error("synthesize_haze: range must be finite and non-negative");
        const double t = std::exp(-beta * range.v[p]);
        for (int c = 0; c < 3; ++c) {
            // Convex combination; the clamp only absorbs last-ulp rounding.
            const double x = clear.v[p * 3 + c] * t + params.airlight[c] * (1.0 - t);
            out.v[p * 3 + c] = std::clamp(x, 0.0, 1.0);
        }
    }
    return out;
}

struct InvertOptions {
    double t_min = kDefaultTmin;
    /// Floor transmissions below t_min instead of raising LowTransmissionError.
    bool clamp_low_transmission = false;
};

struct InvertResult {
    RasterImage image;
    /// Channel values that fell outside [0,1] and were clamped.
    std::size_t clamped_values = 0;
    /// Pixels whose transmission was floored at t_min (clamp mode only).
    std::size_t floored_pixels = 0;
};

/// Algebraic inverse of the Koschmieder blend: I' = (I - A*(1-T)) / T.
/// Amplifies by 1/T, so transmissions below t_min are rejected unless the
/// caller opts into flooring.
inline InvertResult invert_haze(const RasterImage& hazy, const ScalarField& range,
                                const ScatteringParams& params, const InvertOptions& opts = {}) {
    params.validate();
    require_same_shape(hazy, range, "invert_haze");
    require_unit_range(hazy, "invert_haze");
    if (!(opts.t_min > 0.0 && opts.t_min <= 1.0))
        throw std::domain_error("invert_haze: t_min must lie in (0,1]");

    const double beta = extinction_coefficient(params.visibility, params.epsilon);
    InvertResult r;
    r.image = RasterImage(hazy.height, hazy.width);
    for (std::size_t p = 0; p < range.size(); ++p) {
        double t = std::exp(-beta * range.v[p]);
        if (t < opts.t_min) {
            if (!opts.clamp_low_transmission)
                throw LowTransmissionError("invert_haze: transmission " + std::to_string(t) +
                                           " below floor " + std::to_string(opts.t_min));
            t = opts.t_min;
            ++r.floored_pixels;
        }
        for (int c = 0; c < 3; ++c) {
            const double x = (hazy.v[p * 3 + c] - params.airlight[c] * (1.0 - t)) / t;
            const double clamped = std::clamp(x, 0.0, 1.0);
            if (clamped != x) ++r.clamped_values;
            r.image.v[p * 3 + c] = clamped;
        }
    }
    return r;
}

/// Per-channel contrast against the airlight baseline: C = (I - A) / A.
/// Signed; a black pixel has contrast -1 in every channel.
inline RasterImage contrast_map(const RasterImage& image, const Vec3& airlight) {
    for (double a : airlight)
        if (!(a > 0.0))
            throw std::domain_error("contrast_map: airlight channels must be positive");
    RasterImage out(image.height, image.width);
    for (std::size_t p = 0; p < image.pixel_count(); ++p)
        for (int c = 0; c < 3; ++c)
            out.v[p * 3 + c] = (image.v[p * 3 + c] - airlight[c]) / airlight[c];
    return out;
}

/// One of the five haze color families, with the base color and the radius
/// of the per-channel uniform jitter applied when sampling.
struct AirlightFamily {
    std::string_view name;
    Vec3 base{0.0, 0.0, 0.0};
    double jitter = 0.05;
};

inline const std::array<AirlightFamily, 5>& airlight_families() {
    static const std::array<AirlightFamily, 5> families{{
        {"white", {0.95, 0.95, 0.95}, 0.05},
        {"blue-grey", {0.75, 0.78, 0.82}, 0.05},
        {"yellow", {0.85, 0.80, 0.60}, 0.05},
        {"grey", {0.70, 0.70, 0.70}, 0.05},
        {"sepia", {0.70, 0.60, 0.45}, 0.05},
    }};
    return families;
}

inline const AirlightFamily& airlight_family(std::string_view name) {
    for (const auto& f : airlight_families())
        if (f.name == name) return f;
    throw std::invalid_argument("unknown airlight family: " + std::string(name));
}

/// Deterministic airlight draw: base color plus per-channel uniform jitter,
/// clamped to [0,1]^3.
inline Vec3 sample_airlight(const AirlightFamily& family, std::uint64_t seed) {
    Rng rng(seed);
    Vec3 a;
    for (int c = 0; c < 3; ++c) {
        const double u = rng.uniform(-family.jitter, family.jitter);
        a[c] = std::clamp(family.base[c] + u, 0.0, 1.0);
    }
    return a;
}

}  // namespace haze
