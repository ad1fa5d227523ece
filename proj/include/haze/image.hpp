#pragma once

#include <array>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace haze {

using Vec3 = std::array<double, 3>;

/// H x W field of per-pixel scalars (depth/range in meters, transmission,
/// per-pixel loss values). Row-major, index (i, j) with i the row.
struct ScalarField {
    int height = 0;
    int width = 0;
    std::vector<double> v;

    ScalarField() = default;
    ScalarField(int h, int w, double fill = 0.0)
        : height(h), width(w), v(static_cast<std::size_t>(h) * w, fill) {}

    double& at(int i, int j) { return v[static_cast<std::size_t>(i) * width + j]; }
    double at(int i, int j) const { return v[static_cast<std::size_t>(i) * width + j]; }
    std::size_t size() const { return v.size(); }
    bool same_shape(const ScalarField& o) const { return height == o.height && width == o.width; }
};

/// H x W x 3 field of light intensities, interleaved RGB. Intensities are
/// linear values in [0,1] for images; contrast maps reuse the container
/// with signed values.
struct RasterImage {
    int height = 0;
    int width = 0;
    std::vector<double> v;

    RasterImage() = default;
    RasterImage(int h, int w, double fill = 0.0)
        : height(h), width(w), v(static_cast<std::size_t>(h) * w * 3, fill) {}
    RasterImage(int h, int w, const Vec3& fill) : RasterImage(h, w) {
        for (std::size_t p = 0; p < pixel_count(); ++p)
            for (int c = 0; c < 3; ++c) v[p * 3 + c] = fill[c];
    }

    double& at(int i, int j, int c) { return v[(static_cast<std::size_t>(i) * width + j) * 3 + c]; }
    double at(int i, int j, int c) const { return v[(static_cast<std::size_t>(i) * width + j) * 3 + c]; }
    std::size_t pixel_count() const { return static_cast<std::size_t>(height) * width; }
    bool same_shape(const RasterImage& o) const { return height == o.height && width == o.width; }
    bool same_shape(const ScalarField& o) const { return height == o.height && width == o.width; }
};

/// Per-pixel boolean mask stored as 0/1 bytes.
struct BoolField {
    int height = 0;
    int width = 0;
    std::vector<std::uint8_t> v;

    BoolField() = default;
    BoolField(int h, int w, bool fill = false)
        : height(h), width(w), v(static_cast<std::size_t>(h) * w, fill ? 1 : 0) {}

    bool at(int i, int j) const { return v[static_cast<std::size_t>(i) * width + j] != 0; }
    void set(int i, int j, bool b) { v[static_cast<std::size_t>(i) * width + j] = b ? 1 : 0; }
    std::size_t count() const {
        std::size_t n = 0;
        for (auto b : v) n += b != 0;
        return n;
    }
};

inline void require_nonempty(int height, int width, const char* what) {
    if (height <= 0 || width <= 0)
        throw std::invalid_argument(std::string(what) + ": empty field (" +
                                    std::to_string(height) + "x" + std::to_string(width) + ")");
}

template <class A, class B>
void require_same_shape(const A& a, const B& b, const char* what) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument(std::string(what) + ": shape mismatch (" +
                                    std::to_string(a.height) + "x" + std::to_string(a.width) + " vs " +
                                    std::to_string(b.height) + "x" + std::to_string(b.width) + ")");
}

inline void require_finite(const ScalarField& f, const char* what) {
    for (double x : f.v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

inline void require_finite(const RasterImage& f, const char* what) {
    for (double x : f.v)
        if (!std::isfinite(x)) throw std::invalid_argument(std::string(what) + ": non-finite value");
}

inline void require_unit_range(const RasterImage& img, const char* what) {
    for (double x : img.v)
        if (!(x >= 0.0 && x <= 1.0))
            throw std::invalid_argument(std::string(what) + ": intensity outside [0,1]");
}

inline void require_nonnegative(const ScalarField& f, const char* what) {
    for (double x : f.v)
        if (!(x >= 0.0)) throw std::invalid_argument(std::string(what) + ": negative or NaN value");
}

inline double max_abs_diff(const RasterImage& a, const RasterImage& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.v.size(); ++k) m = std::max(m, std::abs(a.v[k] - b.v[k]));
    return m;
}

inline double max_abs_diff(const ScalarField& a, const ScalarField& b) {
    double m = 0.0;
    for (std::size_t k = 0; k < a.v.size(); ++k) m = std::max(m, std::abs(a.v[k] - b.v[k]));
    return m;
}

inline double field_mean(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace haze
