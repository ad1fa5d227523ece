#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "haze/errors.hpp"
#include "haze/image.hpp"
#include "haze/losses.hpp"
#include "haze/rng.hpp"
#include "haze/scattering.hpp"

namespace haze {

/// Which parameters the solver estimates. Fixed parameters must be supplied
/// through KnownParams.
enum class DecomposeMode {
    FixAV,  // airlight and visibility given, estimate range only
    FixA,   // airlight given, estimate range and visibility
    Full,   // estimate range, airlight, and visibility
};

struct KnownParams {
    std::optional<Vec3> airlight;
    std::optional<double> visibility;
};

struct SolverConfig {
    int max_iters = 2000;
    /// Step size on the latent parameters; scaled per-parameter by running
    /// first/second gradient moments.
    double step = 1e-2;
    /// Converged when the best loss improves by less than tol (relative)
    /// over tol_window iterations.
    double tol = 1e-6;
    int tol_window = 20;
    double moment1 = 0.9;
    double moment2 = 0.999;
    double moment_eps = 1e-8;
    /// Uniform perturbation radius applied to the free initial latents,
    /// drawn from `seed`. Zero disables it.
    double init_jitter = 0.01;
    std::uint64_t seed = 0;
    LossWeights weights{};
    /// A pixel constrains the range only if some channel of the clear image
    /// differs from the airlight by at least this much.
    double identifiability_threshold = 0.1;
    /// Floor for the closed-form transmission estimate used at init.
    double t_min = kDefaultTmin;

    void validate() const {
        if (max_iters < 1) throw std::invalid_argument("SolverConfig: max_iters must be >= 1");
        if (!(tol > 0.0)) throw std::invalid_argument("SolverConfig: tol must be positive");
        if (tol_window < 1) throw std::invalid_argument("SolverConfig: tol_window must be >= 1");
        if (!(step > 0.0)) throw std::invalid_argument("SolverConfig: step must be positive");
    }
};

struct DecomposeResult {
    ScalarField range;
    Vec3 airlight{0.0, 0.0, 0.0};
    double visibility = 0.0;
    /// visibility / d_ref_estimate. The objective is invariant under a joint
    /// rescaling of range and visibility, so only this ratio is determined
    /// by the data when visibility is not given.
    double relative_visibility = 0.0;
    /// Max recovered range over the identifiability mask.
    double d_ref_estimate = 0.0;
    /// Best-so-far loss per iteration (non-increasing).
    std::vector<LossBreakdown> loss_trace;
    LossBreakdown final_loss;
    bool converged = false;
    int iterations = 0;
    BoolField identifiability_mask;
};

struct CoarseInit {
    ScalarField range;
    Vec3 airlight{0.0, 0.0, 0.0};
    double visibility = 0.0;
    BoolField identifiable;
};

namespace detail {

inline double softplus(double x) { return x > 30.0 ? x : std::log1p(std::exp(x)); }
inline double softplus_inv(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }
inline double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}
inline double logit(double p) { return std::log(p / (1.0 - p)); }

inline double quantile_of(std::vector<double> xs, double q) {
    if (xs.empty()) return 0.0;
    const std::size_t k = static_cast<std::size_t>(q * (xs.size() - 1));
    auto mid = xs.begin() + k;
    std::nth_element(xs.begin(), mid, xs.end());
    return *mid;
}

inline BoolField identifiability(const RasterImage& clear, const Vec3& airlight, double threshold) {
    BoolField mask(clear.height, clear.width);
    for (std::size_t p = 0; p < clear.pixel_count(); ++p) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c) d = std::max(d, std::abs(clear.v[p * 3 + c] - airlight[c]));
        mask.v[p] = d >= threshold ? 1 : 0;
    }
    return mask;
}

struct TransmissionEstimate {
    double t_hat = 1.0;
    /// The combined ratio fell strictly inside (t_min, 1); clipped or
    /// signal-free pixels carry no usable shape information.
    bool in_range = false;
};

// Median over the informative channels of the per-channel transmission ratio
// (I - A) / (I' - A), clipped to [t_min, 1]. A channel is informative when
// the clear value is far enough from the airlight for the division to mean
// something.
inline TransmissionEstimate transmission_ratio(const RasterImage& hazy, const RasterImage& clear,
                                               const Vec3& airlight, std::size_t p, double t_min) {
    constexpr double kChannelSignalMin = 0.05;
    std::array<double, 3> r;
    int n = 0;
    for (int c = 0; c < 3; ++c) {
        const double den = clear.v[p * 3 + c] - airlight[c];
        if (std::abs(den) < kChannelSignalMin) continue;
        const double t = (hazy.v[p * 3 + c] - airlight[c]) / den;
        if (std::isfinite(t)) r[n++] = t;
    }
    TransmissionEstimate est;
    if (n == 0) return est;
    std::sort(r.begin(), r.begin() + n);
    const double combined = n == 3 ? r[1] : (n == 2 ? 0.5 * (r[0] + r[1]) : r[0]);
    est.in_range = combined > t_min && combined < 1.0;
    est.t_hat = std::clamp(combined, t_min, 1.0);
    return est;
}

}  // namespace detail

/// Starting point for the solver. Airlight comes from the brightest-decile
/// mean of the hazy image (haze pushes every pixel toward the airlight);
/// per-pixel transmissions follow in closed form, giving the shape of the
/// range field. When visibility is not given the field is normalized so its
/// robust max is 1 and the visibility scale is picked by a 16-point log grid
/// scan of the reconstruction error against that fixed shape (the objective
/// determines only range/visibility ratios, so the scan fixes the gauge).
inline CoarseInit coarse_init(const RasterImage& hazy, const RasterImage& clear, double epsilon,
                              const KnownParams& known = {}, double t_min = kDefaultTmin,
                              double identifiability_threshold = 0.1, double alpha = 0.15) {
    require_same_shape(hazy, clear, "coarse_init");
    require_nonempty(hazy.height, hazy.width, "coarse_init");
    if (!(epsilon > 0.0 && epsilon < 1.0))
        throw std::domain_error("coarse_init: epsilon must lie in (0,1)");
    const std::size_t n = hazy.pixel_count();

    CoarseInit init;
    if (known.airlight) {
        init.airlight = *known.airlight;
    } else {
        std::vector<double> brightness(n);
        for (std::size_t p = 0; p < n; ++p)
            brightness[p] = (hazy.v[p * 3] + hazy.v[p * 3 + 1] + hazy.v[p * 3 + 2]) / 3.0;
        std::vector<double> sorted = brightness;
        const std::size_t k = std::max<std::size_t>(1, n / 10);
        std::nth_element(sorted.begin(), sorted.end() - k, sorted.end());
        const double cut = sorted[n - k];
        Vec3 acc{0.0, 0.0, 0.0};
        std::size_t cnt = 0;
        for (std::size_t p = 0; p < n && cnt < k; ++p) {
            if (brightness[p] < cut) continue;
            ++cnt;
            for (int c = 0; c < 3; ++c) acc[c] += hazy.v[p * 3 + c];
        }
        for (int c = 0; c < 3; ++c) init.airlight[c] = std::clamp(acc[c] / cnt, 0.0, 1.0);
    }

    init.identifiable = detail::identifiability(clear, init.airlight, identifiability_threshold);
    if (init.identifiable.count() == 0)
        throw DegenerateDecompositionError(
            "coarse_init: no pixel distinguishes the clear image from the airlight; "
            "the range field is unconstrained everywhere");

    // Unit-extinction range shape: -ln(T) per pixel. Pixels whose ratio was
    // clipped (or carried no channel signal) take the scene median instead.
    std::vector<double> r_unit(n, -1.0);
    std::vector<double> ident_vals;
    ident_vals.reserve(n);
    for (std::size_t p = 0; p < n; ++p) {
        if (!init.identifiable.v[p]) continue;
        const auto est = detail::transmission_ratio(hazy, clear, init.airlight, p, t_min);
        if (!est.in_range) continue;
        r_unit[p] = -std::log(est.t_hat);
        ident_vals.push_back(r_unit[p]);
    }
    std::vector<double> fill_src = ident_vals;
    const double fill = detail::quantile_of(std::move(fill_src), 0.5);
    for (std::size_t p = 0; p < n; ++p)
        if (r_unit[p] < 0.0) r_unit[p] = fill;

    init.range = ScalarField(hazy.height, hazy.width);

    if (known.visibility) {
        init.visibility = *known.visibility;
        const double beta = extinction_coefficient(init.visibility, epsilon);
        for (std::size_t p = 0; p < n; ++p) init.range.v[p] = r_unit[p] / beta;
        return init;
    }

    const double scale = detail::quantile_of(ident_vals, 0.995);
    const double grid_lo = 0.05, grid_hi = 20.0;
    if (scale < 1e-6) {
        // No measurable attenuation; assume maximum visibility.
        init.visibility = grid_hi;
        for (std::size_t p = 0; p < n; ++p) init.range.v[p] = 0.0;
        return init;
    }

    // Shape with robust max 1; scan visibility candidates against it.
    for (std::size_t p = 0; p < n; ++p) init.range.v[p] = r_unit[p] / scale;
    double best_v = grid_lo, best_loss = std::numeric_limits<double>::infinity();
    for (int g = 0; g < 16; ++g) {
        const double v = grid_lo * std::pow(grid_hi / grid_lo, g / 15.0);
        ScatteringParams params{init.airlight, v, epsilon};
        const RasterImage rec = synthesize_haze(clear, init.range, params);
        const double loss = photometric_theta(rec, hazy, alpha);
        if (loss < best_loss) {  // ties keep the smaller candidate
            best_loss = loss;
            best_v = v;
        }
    }
    init.visibility = best_v;
    return init;
}

/// Recovers {range, airlight, visibility} from a hazy/clear pair by direct
/// first-order minimization of the reconstruction + smoothness objective.
/// Feasibility is kept by construction: the range field is a softplus of a
/// latent field, visibility is log-parameterized, airlight channels are
/// logistic-parameterized. Deterministic for fixed inputs and seed.
inline DecomposeResult decompose(const RasterImage& hazy, const RasterImage& clear, double epsilon,
                                 DecomposeMode mode, const KnownParams& known = {},
                                 const SolverConfig& config = {}) {
    config.validate();
    require_same_shape(hazy, clear, "decompose");
    require_unit_range(hazy, "decompose");
    require_unit_range(clear, "decompose");

    const bool fix_a = mode != DecomposeMode::Full;
    const bool fix_v = mode == DecomposeMode::FixAV;
    if (fix_a != known.airlight.has_value())
        throw std::invalid_argument(fix_a ? "decompose: mode requires a known airlight"
                                          : "decompose: airlight must not be supplied in Full mode");
    if (fix_v != known.visibility.has_value())
        throw std::invalid_argument(fix_v ? "decompose: mode requires a known visibility"
                                          : "decompose: visibility must only be supplied in FixAV mode");
    if (known.visibility && !(*known.visibility > 0.0))
        throw std::domain_error("decompose: known visibility must be positive");

    if (max_abs_diff(hazy, clear) < 1e-4)
        throw DegenerateDecompositionError(
            "decompose: hazy and clear images coincide (max abs diff < 1e-4); zero haze is "
            "reproduced by any visibility, so the parameters are unrecoverable");

    const CoarseInit init = coarse_init(hazy, clear, epsilon, known, config.t_min,
                                        config.identifiability_threshold, config.weights.alpha);
    const std::size_t n = hazy.pixel_count();

    // Latent parameterization.
    const double r_floor = std::max(1e-6, 1e-4 * init.visibility);
    std::vector<double> r_lat(n);
    for (std::size_t p = 0; p < n; ++p)
        r_lat[p] = detail::softplus_inv(std::max(init.range.v[p], r_floor));
    double v_lat = std::log(init.visibility);
    std::array<double, 3> a_lat;
    for (int c = 0; c < 3; ++c)
        a_lat[c] = detail::logit(std::clamp(init.airlight[c], 1e-4, 1.0 - 1e-4));

    if (config.init_jitter > 0.0) {
        Rng rng(config.seed);
        for (std::size_t p = 0; p < n; ++p)
            r_lat[p] += rng.uniform(-config.init_jitter, config.init_jitter);
        if (!fix_v) v_lat += rng.uniform(-config.init_jitter, config.init_jitter);
        if (!fix_a)
            for (int c = 0; c < 3; ++c)
                a_lat[c] += rng.uniform(-config.init_jitter, config.init_jitter);
    }

    TotalLossGradEngine engine(hazy, clear, epsilon, config.weights);
    ScalarField range(hazy.height, hazy.width);
    Vec3 airlight;
    auto materialize = [&] {
        for (std::size_t p = 0; p < n; ++p) range.v[p] = detail::softplus(r_lat[p]);
        for (int c = 0; c < 3; ++c) airlight[c] = detail::sigmoid(a_lat[c]);
    };

    // First/second moment accumulators for the adaptive step.
    std::vector<double> m_r(n, 0.0), s_r(n, 0.0);
    double m_v = 0.0, s_v = 0.0;
    std::array<double, 3> m_a{0, 0, 0}, s_a{0, 0, 0};

    DecomposeResult out;
    out.loss_trace.reserve(static_cast<std::size_t>(config.max_iters) + 1);

    std::vector<double> best_r_lat = r_lat;
    double best_v_lat = v_lat;
    std::array<double, 3> best_a_lat = a_lat;
    LossBreakdown best_loss;

    materialize();
    {
        const auto& e0 = engine.eval(range, airlight, std::exp(v_lat));
        best_loss = e0.loss;
        out.loss_trace.push_back(best_loss);
    }

    int iter = 0;
    for (; iter < config.max_iters; ++iter) {
        materialize();
        const double vis = std::exp(v_lat);
        const auto& e = engine.eval(range, airlight, vis);

        if (e.loss.total < best_loss.total) {
            best_loss = e.loss;
            best_r_lat = r_lat;
            best_v_lat = v_lat;
            best_a_lat = a_lat;
        }
        out.loss_trace.push_back(best_loss);

        // Convergence: best loss stopped improving over the window.
        const std::size_t t = out.loss_trace.size() - 1;
        if (static_cast<int>(t) >= config.tol_window) {
            const double prev = out.loss_trace[t - config.tol_window].total;
            if (prev - best_loss.total <= config.tol * std::max(prev, 1e-30)) {
                out.converged = true;
                ++iter;
                break;
            }
        }
        if (best_loss.total < 1e-15) {
            out.converged = true;
            ++iter;
            break;
        }

        const double b1 = config.moment1, b2 = config.moment2;
        const double bc1 = 1.0 - std::pow(b1, iter + 1);
        const double bc2 = 1.0 - std::pow(b2, iter + 1);
        auto step_of = [&](double& m, double& s, double g) {
            m = b1 * m + (1.0 - b1) * g;
            s = b2 * s + (1.0 - b2) * g * g;
            return config.step * (m / bc1) / (std::sqrt(s / bc2) + config.moment_eps);
        };

        for (std::size_t p = 0; p < n; ++p) {
            const double g = e.d_range[p] * detail::sigmoid(r_lat[p]);
            r_lat[p] -= step_of(m_r[p], s_r[p], g);
        }
        if (!fix_v) v_lat -= step_of(m_v, s_v, e.d_visibility * vis);
        if (!fix_a)
            for (int c = 0; c < 3; ++c) {
                const double a = airlight[c];
                a_lat[c] -= step_of(m_a[c], s_a[c], e.d_airlight[c] * a * (1.0 - a));
            }
    }
    out.iterations = iter;

    r_lat = std::move(best_r_lat);
    v_lat = best_v_lat;
    a_lat = best_a_lat;
    materialize();
    out.range = range;
    out.airlight = fix_a ? *known.airlight : airlight;
    out.visibility = fix_v ? *known.visibility : std::exp(v_lat);
    out.final_loss = best_loss;

    out.identifiability_mask =
        detail::identifiability(clear, out.airlight, config.identifiability_threshold);
    double dref = 0.0;
    for (std::size_t p = 0; p < n; ++p)
        if (out.identifiability_mask.v[p]) dref = std::max(dref, out.range.v[p]);
    if (dref == 0.0)
        for (std::size_t p = 0; p < n; ++p) dref = std::max(dref, out.range.v[p]);
    out.d_ref_estimate = dref;
    out.relative_visibility = dref > 0.0 ? out.visibility / dref : 0.0;
    return out;
}

// ---------------------------------------------------------------------------
// Gradient verification.
// ---------------------------------------------------------------------------

struct GradCheckEntry {
    std::string param;
    double analytic = 0.0;
    double numeric = 0.0;
    double rel_err = 0.0;
};

struct GradCheckReport {
    std::vector<GradCheckEntry> entries;
    double max_rel_err = 0.0;
    double tolerance = 1e-4;
    bool passed = false;
    /// Sampled range pixels whose gradient is numerically zero; the data does
    /// not constrain them (e.g. zero-texture scenes).
    std::size_t unconstrained_range_pixels = 0;
};

/// Recomputes the summary fields from the entries (used after edits in tests
/// and by gradient_check itself). The relative-error denominator is floored
/// at a small fraction of the largest gradient entry: components that
/// contribute negligibly to the gradient vector sit below the noise floor of
/// central differences and cannot be compared at relative precision.
inline void finalize_gradcheck(GradCheckReport& rep) {
    double scale = 0.0;
    for (const auto& e : rep.entries)
        scale = std::max({scale, std::abs(e.analytic), std::abs(e.numeric)});
    const double floor = std::max(1e-4 * scale, 1e-12);
    rep.max_rel_err = 0.0;
    rep.unconstrained_range_pixels = 0;
    for (auto& e : rep.entries) {
        const double m = std::max(std::abs(e.analytic), std::abs(e.numeric));
        e.rel_err = std::abs(e.analytic - e.numeric) / std::max(m, floor);
        rep.max_rel_err = std::max(rep.max_rel_err, e.rel_err);
        if (e.param.rfind("range", 0) == 0 && m < 1e-10) ++rep.unconstrained_range_pixels;
    }
    rep.passed = rep.max_rel_err <= rep.tolerance;
}

/// Central-difference check of the analytic gradients in the solver's latent
/// parameterization (log visibility, logistic airlight, softplus range), with
/// step `fd_step` on each latent. Checks visibility, all airlight channels,
/// and `n_range_pixels` seed-sampled range pixels.
inline GradCheckReport gradient_check(const RasterImage& hazy, const RasterImage& clear,
                                      const ScalarField& range, const Vec3& airlight,
                                      double visibility, double epsilon,
                                      const LossWeights& weights = {}, std::uint64_t seed = 0,
                                      int n_range_pixels = 32, double fd_step = 1e-4,
                                      double tolerance = 1e-4) {
    TotalLossGradEngine engine(hazy, clear, epsilon, weights);
    const auto eval_total = [&](const ScalarField& r, const Vec3& a, double v) {
        return total_loss(hazy, clear, r, a, v, epsilon, weights).total;
    };
    const auto& e = engine.eval(range, airlight, visibility);

    GradCheckReport rep;
    rep.tolerance = tolerance;

    {
        const double v_lat = std::log(visibility);
        const double f1 = eval_total(range, airlight, std::exp(v_lat + fd_step));
        const double f0 = eval_total(range, airlight, std::exp(v_lat - fd_step));
        rep.entries.push_back(
            {"log_visibility", e.d_visibility * visibility, (f1 - f0) / (2.0 * fd_step), 0.0});
    }
    static const char* kChan[3] = {"airlight_r", "airlight_g", "airlight_b"};
    for (int c = 0; c < 3; ++c) {
        const double a_lat = detail::logit(std::clamp(airlight[c], 1e-6, 1.0 - 1e-6));
        Vec3 ap = airlight, am = airlight;
        ap[c] = detail::sigmoid(a_lat + fd_step);
        am[c] = detail::sigmoid(a_lat - fd_step);
        const double f1 = eval_total(range, ap, visibility);
        const double f0 = eval_total(range, am, visibility);
        rep.entries.push_back({kChan[c], e.d_airlight[c] * airlight[c] * (1.0 - airlight[c]),
                               (f1 - f0) / (2.0 * fd_step), 0.0});
    }

    Rng rng(seed);
    const std::size_t n = range.size();
    const int count = std::min<int>(n_range_pixels, static_cast<int>(n));
    std::vector<std::size_t> picks;
    while (static_cast<int>(picks.size()) < count) {
        const std::size_t p = rng.next_below(n);
        if (std::find(picks.begin(), picks.end(), p) == picks.end()) picks.push_back(p);
    }
    ScalarField rp = range;
    for (auto p : picks) {
        const double r_lat = detail::softplus_inv(range.v[p]);
        rp.v[p] = detail::softplus(r_lat + fd_step);
        const double f1 = eval_total(rp, airlight, visibility);
        rp.v[p] = detail::softplus(r_lat - fd_step);
        const double f0 = eval_total(rp, airlight, visibility);
        rp.v[p] = range.v[p];
        rep.entries.push_back({"range[" + std::to_string(p) + "]",
                               e.d_range[p] * detail::sigmoid(r_lat),
                               (f1 - f0) / (2.0 * fd_step), 0.0});
    }

    finalize_gradcheck(rep);
    return rep;
}

}  // namespace haze
