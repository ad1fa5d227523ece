#pragma once

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <vector>

#include "haze/image.hpp"
#include "haze/scattering.hpp"

namespace haze {

/// Weights of the training objective. alpha mixes L1 against SSIM inside the
/// photometric distance; beta_smooth scales the edge-aware smoothness term.
struct LossWeights {
    double alpha = 0.15;
    double beta_smooth = 0.001;
    /// Divide each range field by its mean before applying the photometric
    /// distance in the consistency term.
    bool normalize_consistency = true;
};

struct LossBreakdown {
    double reconstruction = 0.0;
    double consistency = 0.0;
    double smoothness = 0.0;
    double total = 0.0;

    static LossBreakdown make(double rec, double cons, double smooth) {
        LossBreakdown b;
        b.reconstruction = rec;
        b.consistency = cons;
        b.smoothness = smooth;
        b.total = rec + cons + smooth;
        return b;
    }
};

/// SSIM stabilizers; defaults are the usual (0.01)^2 and (0.03)^2 for a unit
/// dynamic range.
struct SsimOptions {
    double c1 = 1e-4;
    double c2 = 9e-4;
};

namespace detail {

// 3-tap mean along rows; the one-pixel border is mirrored (for radius 1,
// symmetric reflection coincides with edge replication).
inline void box3_h(int h, int w, const double* in, double* out) {
    for (int i = 0; i < h; ++i) {
        const double* r = in + static_cast<std::size_t>(i) * w;
        double* o = out + static_cast<std::size_t>(i) * w;
        for (int j = 0; j < w; ++j) {
            const int jm = j > 0 ? j - 1 : 0;
            const int jp = j < w - 1 ? j + 1 : w - 1;
            o[j] = (r[jm] + r[j] + r[jp]) / 3.0;
        }
    }
}

inline void box3_v(int h, int w, const double* in, double* out) {
    for (int i = 0; i < h; ++i) {
        const int im = i > 0 ? i - 1 : 0;
        const int ip = i < h - 1 ? i + 1 : h - 1;
        const double* a = in + static_cast<std::size_t>(im) * w;
        const double* b = in + static_cast<std::size_t>(i) * w;
        const double* c = in + static_cast<std::size_t>(ip) * w;
        double* o = out + static_cast<std::size_t>(i) * w;
        for (int j = 0; j < w; ++j) o[j] = (a[j] + b[j] + c[j]) / 3.0;
    }
}

inline void box3(int h, int w, const double* in, double* tmp, double* out) {
    box3_h(h, w, in, tmp);
    box3_v(h, w, tmp, out);
}

inline void box3_h_adjoint(int h, int w, const double* g, double* out) {
    std::fill(out, out + static_cast<std::size_t>(h) * w, 0.0);
    for (int i = 0; i < h; ++i) {
        const double* gr = g + static_cast<std::size_t>(i) * w;
        double* o = out + static_cast<std::size_t>(i) * w;
        for (int j = 0; j < w; ++j) {
            const int jm = j > 0 ? j - 1 : 0;
            const int jp = j < w - 1 ? j + 1 : w - 1;
            const double s = gr[j] / 3.0;
            o[jm] += s;
            o[j] += s;
            o[jp] += s;
        }
    }
}

inline void box3_v_adjoint(int h, int w, const double* g, double* out) {
    std::fill(out, out + static_cast<std::size_t>(h) * w, 0.0);
    for (int i = 0; i < h; ++i) {
        const int im = i > 0 ? i - 1 : 0;
        const int ip = i < h - 1 ? i + 1 : h - 1;
        const double* gr = g + static_cast<std::size_t>(i) * w;
        for (int j = 0; j < w; ++j) {
            const double s = gr[j] / 3.0;
            out[static_cast<std::size_t>(im) * w + j] += s;
            out[static_cast<std::size_t>(i) * w + j] += s;
            out[static_cast<std::size_t>(ip) * w + j] += s;
        }
    }
}

// Transpose of box3: adjoints compose in reverse order.
inline void box3_adjoint(int h, int w, const double* g, double* tmp, double* out) {
    box3_v_adjoint(h, w, g, tmp);
    box3_h_adjoint(h, w, tmp, out);
}

// Windowed first/second moments of one plane.
struct PlaneStats {
    std::vector<double> mean;    // B x
    std::vector<double> sq;      // B (x.x)
};

inline PlaneStats plane_stats(int h, int w, const double* x, std::vector<double>& scratch) {
    const std::size_t n = static_cast<std::size_t>(h) * w;
    PlaneStats s;
    s.mean.resize(n);
    s.sq.resize(n);
    scratch.resize(2 * n);
    double* tmp = scratch.data();
    double* prod = scratch.data() + n;
    box3(h, w, x, tmp, s.mean.data());
    for (std::size_t p = 0; p < n; ++p) prod[p] = x[p] * x[p];
    box3(h, w, prod, tmp, s.sq.data());
    return s;
}

// Per-pixel SSIM of two planes, accumulated into map_accum; returns the sum
// over pixels.
inline double ssim_plane_accum(int h, int w, const double* x, const double* y,
                               const SsimOptions& o, double* map_accum) {
    const std::size_t n = static_cast<std::size_t>(h) * w;
    std::vector<double> scratch;
    PlaneStats sx = plane_stats(h, w, x, scratch);
    PlaneStats sy = plane_stats(h, w, y, scratch);
    std::vector<double> prod(n), xym(n), tmp(n);
    for (std::size_t p = 0; p < n; ++p) prod[p] = x[p] * y[p];
    box3(h, w, prod.data(), tmp.data(), xym.data());

    double sum = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        const double mx = sx.mean[p], my = sy.mean[p];
        const double vx = sx.sq[p] - mx * mx;
        const double vy = sy.sq[p] - my * my;
        const double cxy = xym[p] - mx * my;
        const double a1 = 2.0 * mx * my + o.c1;
        const double a2 = 2.0 * cxy + o.c2;
        const double b1 = mx * mx + my * my + o.c1;
        const double b2 = vx + vy + o.c2;
        const double s = (a1 * a2) / (b1 * b2);
        sum += s;
        if (map_accum) map_accum[p] += s;
    }
    return sum;
}

}  // namespace detail

struct SsimResult {
    double mean = 0.0;
    ScalarField map;  // per-pixel score, channel-averaged for color images
};

/// SSIM with a 3x3 uniform window and mirrored borders. Scores lie in
/// [-1, 1]; identical inputs score exactly 1.
inline SsimResult ssim(const RasterImage& x, const RasterImage& y, const SsimOptions& o = {}) {
    require_same_shape(x, y, "ssim");
    require_nonempty(x.height, x.width, "ssim");
    const int h = x.height, w = x.width;
    const std::size_t n = static_cast<std::size_t>(h) * w;

    SsimResult r;
    r.map = ScalarField(h, w, 0.0);
    std::vector<double> px(n), py(n);
    double sum = 0.0;
    for (int c = 0; c < 3; ++c) {
        for (std::size_t p = 0; p < n; ++p) {
            px[p] = x.v[p * 3 + c];
            py[p] = y.v[p * 3 + c];
        }
        sum += detail::ssim_plane_accum(h, w, px.data(), py.data(), o, r.map.v.data());
    }
    for (auto& m : r.map.v) m /= 3.0;
    r.mean = sum / (3.0 * static_cast<double>(n));
    return r;
}

inline SsimResult ssim(const ScalarField& x, const ScalarField& y, const SsimOptions& o = {}) {
    require_same_shape(x, y, "ssim");
    require_nonempty(x.height, x.width, "ssim");
    SsimResult r;
    r.map = ScalarField(x.height, x.width, 0.0);
    const double sum =
        detail::ssim_plane_accum(x.height, x.width, x.v.data(), y.v.data(), o, r.map.v.data());
    r.mean = sum / static_cast<double>(x.size());
    return r;
}

/// Photometric distance: alpha * mean|x-y| + (1-alpha) * (1-SSIM)/2.
inline double photometric_theta(const RasterImage& x, const RasterImage& y, double alpha = 0.15,
                                const SsimOptions& o = {}) {
    require_same_shape(x, y, "photometric_theta");
    double l1 = 0.0;
    for (std::size_t k = 0; k < x.v.size(); ++k) l1 += std::abs(x.v[k] - y.v[k]);
    l1 /= static_cast<double>(x.v.size());
    if (alpha >= 1.0) return l1;  // skip the SSIM pass on the pure-L1 branch
    return alpha * l1 + (1.0 - alpha) * (1.0 - ssim(x, y, o).mean) / 2.0;
}

inline double photometric_theta(const ScalarField& x, const ScalarField& y, double alpha = 0.15,
                                const SsimOptions& o = {}) {
    require_same_shape(x, y, "photometric_theta");
    double l1 = 0.0;
    for (std::size_t k = 0; k < x.v.size(); ++k) l1 += std::abs(x.v[k] - y.v[k]);
    l1 /= static_cast<double>(x.v.size());
    if (alpha >= 1.0) return l1;
    return alpha * l1 + (1.0 - alpha) * (1.0 - ssim(x, y, o).mean) / 2.0;
}

/// Sum of the photometric distances of both reconstructions to the target.
inline double reconstruction_loss(const RasterImage& recon1, const RasterImage& recon2,
                                  const RasterImage& target, double alpha = 0.15) {
    return photometric_theta(recon1, target, alpha) + photometric_theta(recon2, target, alpha);
}

/// Photometric distance between the two estimated range fields, each divided
/// by its mean first so the SSIM branch sees near-unit values.
inline double consistency_loss(const ScalarField& r1, const ScalarField& r2, double alpha = 0.15,
                               bool normalize = true) {
    require_same_shape(r1, r2, "consistency_loss");
    if (!normalize) return photometric_theta(r1, r2, alpha);
    const double m1 = field_mean(r1.v);
    const double m2 = field_mean(r2.v);
    if (!(m1 > 0.0) || !(m2 > 0.0)) return photometric_theta(r1, r2, alpha);
    ScalarField n1 = r1, n2 = r2;
    for (auto& x : n1.v) x /= m1;
    for (auto& x : n2.v) x /= m2;
    return photometric_theta(n1, n2, alpha);
}

namespace detail {

// Edge weights exp(-|d I'|), with the image gradient magnitude averaged over
// channels. wx has shape h x (w-1), wy has (h-1) x w.
inline void edge_weights(const RasterImage& clear, std::vector<double>& wx, std::vector<double>& wy) {
    const int h = clear.height, w = clear.width;
    wx.assign(static_cast<std::size_t>(h) * (w - 1 > 0 ? w - 1 : 0), 0.0);
    wy.assign(static_cast<std::size_t>(h - 1 > 0 ? h - 1 : 0) * w, 0.0);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j + 1 < w; ++j) {
            double g = 0.0;
            for (int c = 0; c < 3; ++c) g += std::abs(clear.at(i, j + 1, c) - clear.at(i, j, c));
            wx[static_cast<std::size_t>(i) * (w - 1) + j] = std::exp(-g / 3.0);
        }
    for (int i = 0; i + 1 < h; ++i)
        for (int j = 0; j < w; ++j) {
            double g = 0.0;
            for (int c = 0; c < 3; ++c) g += std::abs(clear.at(i + 1, j, c) - clear.at(i, j, c));
            wy[static_cast<std::size_t>(i) * w + j] = std::exp(-g / 3.0);
        }
}

// Single-branch edge-aware smoothness of the mean-normalized inverse range;
// forward differences, last column/row dropped, each direction averaged over
// its own valid pixels. Returns the unweighted value and optionally the
// gradient w.r.t. the range field.
inline double smoothness_plane(const ScalarField& range, const std::vector<double>& wx,
                               const std::vector<double>& wy, std::vector<double>* grad) {
    const int h = range.height, w = range.width;
    const std::size_t n = range.size();
    for (double r : range.v)
        if (!(r > 0.0))
            throw std::domain_error("smoothness_loss: range must be strictly positive");

    std::vector<double> inv(n);
    double m = 0.0;
    for (std::size_t p = 0; p < n; ++p) {
        inv[p] = 1.0 / range.v[p];
        m += inv[p];
    }
    m /= static_cast<double>(n);
    std::vector<double> rstar(n);
    for (std::size_t p = 0; p < n; ++p) rstar[p] = inv[p] / m;

    const double nx = static_cast<double>(h) * (w - 1);
    const double ny = static_cast<double>(h - 1) * w;
    std::vector<double> gstar;
    if (grad) gstar.assign(n, 0.0);

    double value = 0.0;
    if (w > 1) {
        double sx = 0.0;
        for (int i = 0; i < h; ++i)
            for (int j = 0; j + 1 < w; ++j) {
                const std::size_t p = static_cast<std::size_t>(i) * w + j;
                const double d = rstar[p + 1] - rstar[p];
                const double wgt = wx[static_cast<std::size_t>(i) * (w - 1) + j];
                sx += std::abs(d) * wgt;
                if (grad) {
                    const double s = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * wgt / nx;
                    gstar[p + 1] += s;
                    gstar[p] -= s;
                }
            }
        value += sx / nx;
    }
    if (h > 1) {
        double sy = 0.0;
        for (int i = 0; i + 1 < h; ++i)
            for (int j = 0; j < w; ++j) {
                const std::size_t p = static_cast<std::size_t>(i) * w + j;
                const double d = rstar[p + w] - rstar[p];
                const double wgt = wy[p];
                sy += std::abs(d) * wgt;
                if (grad) {
                    const double s = (d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0)) * wgt / ny;
                    gstar[p + w] += s;
                    gstar[p] -= s;
                }
            }
        value += sy / ny;
    }

    if (grad) {
        // rstar = inv / mean(inv): the mean couples every pixel.
        double dot = 0.0;
        for (std::size_t p = 0; p < n; ++p) dot += gstar[p] * inv[p];
        const double mean_term = dot / (m * m * static_cast<double>(n));
        grad->assign(n, 0.0);
        for (std::size_t p = 0; p < n; ++p) {
            const double ginv = gstar[p] / m - mean_term;
            (*grad)[p] = -ginv * inv[p] * inv[p];  // d(1/R)/dR = -1/R^2
        }
    }
    return value;
}

}  // namespace detail

/// Edge-aware smoothness of one mean-normalized inverse range field.
inline double smoothness_loss(const ScalarField& range, const RasterImage& clear,
                              double beta_smooth = 0.001) {
    require_same_shape(clear, range, "smoothness_loss");
    require_nonempty(range.height, range.width, "smoothness_loss");
    std::vector<double> wx, wy;
    detail::edge_weights(clear, wx, wy);
    return beta_smooth * detail::smoothness_plane(range, wx, wy, nullptr);
}

/// Two-branch smoothness, summed.
inline double smoothness_loss(const ScalarField& r1, const ScalarField& r2,
                              const RasterImage& clear, double beta_smooth = 0.001) {
    require_same_shape(clear, r1, "smoothness_loss");
    require_same_shape(clear, r2, "smoothness_loss");
    std::vector<double> wx, wy;
    detail::edge_weights(clear, wx, wy);
    return beta_smooth * (detail::smoothness_plane(r1, wx, wy, nullptr) +
                          detail::smoothness_plane(r2, wx, wy, nullptr));
}

/// Full objective with two range branches: reconstruction of the hazy image
/// from each branch, consistency between the branches, and smoothness.
inline LossBreakdown total_loss(const RasterImage& hazy, const RasterImage& clear,
                                const ScalarField& r1, const ScalarField& r2, const Vec3& airlight,
                                double visibility, double epsilon, const LossWeights& w = {}) {
    require_same_shape(hazy, clear, "total_loss");
    require_same_shape(hazy, r1, "total_loss");
    require_same_shape(hazy, r2, "total_loss");
    ScatteringParams params{airlight, visibility, epsilon};
    const RasterImage rec1 = synthesize_haze(clear, r1, params);
    const RasterImage rec2 = synthesize_haze(clear, r2, params);
    const double l1 = photometric_theta(rec1, hazy, w.alpha) + photometric_theta(rec2, hazy, w.alpha);
    const double l2 = consistency_loss(r1, r2, w.alpha, w.normalize_consistency);
    const double l3 = smoothness_loss(r1, r2, clear, w.beta_smooth);
    return LossBreakdown::make(l1, l2, l3);
}

/// Single-field form: the one range field serves both branches, so the
/// consistency term vanishes and the other terms double.
inline LossBreakdown total_loss(const RasterImage& hazy, const RasterImage& clear,
                                const ScalarField& range, const Vec3& airlight, double visibility,
                                double epsilon, const LossWeights& w = {}) {
    require_same_shape(hazy, clear, "total_loss");
    require_same_shape(hazy, range, "total_loss");
    ScatteringParams params{airlight, visibility, epsilon};
    const RasterImage rec = synthesize_haze(clear, range, params);
    const double l1 = 2.0 * photometric_theta(rec, hazy, w.alpha);
    const double l3 = 2.0 * smoothness_loss(range, clear, w.beta_smooth);
    return LossBreakdown::make(l1, 0.0, l3);
}

/// Evaluates the single-field objective together with its analytic gradients
/// w.r.t. the raw parameters (range pixels, airlight channels, visibility).
/// Owns all scratch buffers, so repeated eval() calls do not allocate.
class TotalLossGradEngine {
  public:
    struct Evaluation {
        LossBreakdown loss;
        std::vector<double> d_range;
        Vec3 d_airlight{0.0, 0.0, 0.0};
        double d_visibility = 0.0;
    };

    TotalLossGradEngine(const RasterImage& hazy, const RasterImage& clear, double epsilon,
                        const LossWeights& weights = {}, const SsimOptions& ssim_opts = {})
        : h_(hazy.height), w_(hazy.width), n_(hazy.pixel_count()), epsilon_(epsilon),
          weights_(weights), ssim_(ssim_opts) {
        require_same_shape(hazy, clear, "TotalLossGradEngine");
        require_nonempty(h_, w_, "TotalLossGradEngine");
        if (!(epsilon > 0.0 && epsilon < 1.0))
            throw std::domain_error("TotalLossGradEngine: epsilon must lie in (0,1)");

        detail::edge_weights(clear, wx_, wy_);
        for (int c = 0; c < 3; ++c) {
            yc_[c].resize(n_);
            clearc_[c].resize(n_);
            for (std::size_t p = 0; p < n_; ++p) {
                yc_[c][p] = hazy.v[p * 3 + c];
                clearc_[c][p] = clear.v[p * 3 + c];
            }
            ystats_[c] = detail::plane_stats(h_, w_, yc_[c].data(), scratch_);
        }
        t_.resize(n_);
        x_.resize(n_);
        xsq_.resize(n_);
        xy_.resize(n_);
        mx_.resize(n_);
        x2m_.resize(n_);
        xym_.resize(n_);
        gmu_.resize(n_);
        gx2_.resize(n_);
        gxy_.resize(n_);
        adj_.resize(n_);
        tmp_.resize(n_);
        gx_.resize(n_);
        gt_.resize(n_);
    }

    const Evaluation& eval(const ScalarField& range, const Vec3& airlight, double visibility) {
        if (static_cast<std::size_t>(range.height) * range.width != n_)
            throw std::invalid_argument("TotalLossGradEngine::eval: shape mismatch");
        const double beta = extinction_coefficient(visibility, epsilon_);
        const double alpha = weights_.alpha;
        const double inv3n = 1.0 / (3.0 * static_cast<double>(n_));

        for (std::size_t p = 0; p < n_; ++p) t_[p] = std::exp(-beta * range.v[p]);

        std::fill(gt_.begin(), gt_.end(), 0.0);
        out_.d_airlight = {0.0, 0.0, 0.0};

        double l1_abs = 0.0;
        double ssim_sum = 0.0;
        for (int c = 0; c < 3; ++c) {
            const double a = airlight[c];
            const double* cl = clearc_[c].data();
            const double* y = yc_[c].data();
            for (std::size_t p = 0; p < n_; ++p) {
                x_[p] = cl[p] * t_[p] + a * (1.0 - t_[p]);
                xsq_[p] = x_[p] * x_[p];
                xy_[p] = x_[p] * y[p];
            }
            detail::box3(h_, w_, x_.data(), tmp_.data(), mx_.data());
            detail::box3(h_, w_, xsq_.data(), tmp_.data(), x2m_.data());
            detail::box3(h_, w_, xy_.data(), tmp_.data(), xym_.data());

            const std::vector<double>& my = ystats_[c].mean;
            const std::vector<double>& y2m = ystats_[c].sq;
            for (std::size_t p = 0; p < n_; ++p) {
                const double vx = x2m_[p] - mx_[p] * mx_[p];
                const double vy = y2m[p] - my[p] * my[p];
                const double cxy = xym_[p] - mx_[p] * my[p];
                const double a1 = 2.0 * mx_[p] * my[p] + ssim_.c1;
                const double a2 = 2.0 * cxy + ssim_.c2;
                const double b1 = mx_[p] * mx_[p] + my[p] * my[p] + ssim_.c1;
                const double b2 = vx + vy + ssim_.c2;
                const double denom = b1 * b2;
                const double s = (a1 * a2) / denom;
                ssim_sum += s;
                const double ds_da1 = a2 / denom;
                const double ds_da2 = a1 / denom;
                const double ds_db1 = -s / b1;
                const double ds_db2 = -s / b2;
                gmu_[p] = ds_da1 * 2.0 * my[p] - ds_da2 * 2.0 * my[p] + ds_db1 * 2.0 * mx_[p] -
                          ds_db2 * 2.0 * mx_[p];
                gx2_[p] = ds_db2;
                gxy_[p] = 2.0 * ds_da2;
            }

            // dS_sum/dx = B^T gmu + 2x .* B^T gx2 + y .* B^T gxy
            detail::box3_adjoint(h_, w_, gmu_.data(), tmp_.data(), gx_.data());
            detail::box3_adjoint(h_, w_, gx2_.data(), tmp_.data(), adj_.data());
            for (std::size_t p = 0; p < n_; ++p) gx_[p] += 2.0 * x_[p] * adj_[p];
            detail::box3_adjoint(h_, w_, gxy_.data(), tmp_.data(), adj_.data());
            for (std::size_t p = 0; p < n_; ++p) gx_[p] += y[p] * adj_[p];

            // dTheta/dx, then doubled for the two identical branches.
            const double ssim_coef = -(1.0 - alpha) * 0.5 * inv3n;
            double a_grad = 0.0;
            for (std::size_t p = 0; p < n_; ++p) {
                const double d = x_[p] - y[p];
                l1_abs += std::abs(d);
                const double sgn = d > 0.0 ? 1.0 : (d < 0.0 ? -1.0 : 0.0);
                const double g = 2.0 * (alpha * sgn * inv3n + ssim_coef * gx_[p]);
                gt_[p] += g * (cl[p] - a);
                a_grad += g * (1.0 - t_[p]);
            }
            out_.d_airlight[c] = a_grad;
        }

        const double theta = alpha * l1_abs * inv3n +
                             (1.0 - alpha) * (1.0 - ssim_sum * inv3n) / 2.0;

        const double smooth_raw = detail::smoothness_plane(range, wx_, wy_, &smooth_grad_);

        out_.d_range.assign(n_, 0.0);
        double g_beta = 0.0;
        const double smooth_scale = 2.0 * weights_.beta_smooth;
        for (std::size_t p = 0; p < n_; ++p) {
            const double dt_dr = -beta * t_[p];
            out_.d_range[p] = gt_[p] * dt_dr + smooth_scale * smooth_grad_[p];
            g_beta += gt_[p] * (-range.v[p] * t_[p]);
        }
        out_.d_visibility = g_beta * (-beta / visibility);  // d beta / dV = -beta / V

        out_.loss = LossBreakdown::make(2.0 * theta, 0.0, smooth_scale * smooth_raw);
        return out_;
    }

  private:
    int h_, w_;
    std::size_t n_;
    double epsilon_;
    LossWeights weights_;
    SsimOptions ssim_;
    std::vector<double> yc_[3], clearc_[3];
    detail::PlaneStats ystats_[3];
    std::vector<double> wx_, wy_;
    std::vector<double> t_, x_, xsq_, xy_, mx_, x2m_, xym_;
    std::vector<double> gmu_, gx2_, gxy_, adj_, tmp_, gx_, gt_;
    std::vector<double> smooth_grad_, scratch_;
    Evaluation out_;
};

}  // namespace haze
