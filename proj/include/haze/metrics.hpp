#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "haze/errors.hpp"
#include "haze/image.hpp"

namespace haze {

/// Depth evaluation protocol: ground-truth pixels <= 0 are invalid, both maps
/// are clamped to [min_depth, max_depth], and predictions are optionally
/// rescaled by median(gt)/median(pred) first.
struct DepthEvalConfig {
    double min_depth = 1e-3;
    double max_depth = 80.0;
    bool median_scaling = false;
};

struct DepthEvalReport {
    double abs_rel = 0.0;
    double sq_rel = 0.0;
    double rms = 0.0;
    double rms_log = 0.0;
    double delta_1 = 0.0;
    double delta_2 = 0.0;
    double delta_3 = 0.0;
    std::size_t valid_pixel_count = 0;
};

namespace detail {

inline double median_of(std::vector<double> xs) {
    const std::size_t n = xs.size();
    auto mid = xs.begin() + n / 2;
    std::nth_element(xs.begin(), mid, xs.end());
    double m = *mid;
    if (n % 2 == 0) {
        auto lo = std::max_element(xs.begin(), mid);
        m = (m + *lo) / 2.0;
    }
    return m;
}

}  // namespace detail

inline DepthEvalReport eval_depth(const ScalarField& pred, const ScalarField& gt,
                                  const DepthEvalConfig& cfg = {}) {
    require_same_shape(pred, gt, "eval_depth");
    if (!(cfg.min_depth > 0.0) || !(cfg.max_depth > cfg.min_depth))
        throw std::invalid_argument("eval_depth: need 0 < min_depth < max_depth");

    std::vector<std::size_t> valid;
    valid.reserve(gt.size());
    for (std::size_t p = 0; p < gt.size(); ++p)
        if (std::isfinite(gt.v[p]) && gt.v[p] > 0.0) valid.push_back(p);
    if (valid.empty()) throw NoValidPixelsError("eval_depth: no pixels with valid ground truth");

    double scale = 1.0;
    if (cfg.median_scaling) {
        std::vector<double> ps, gs;
        ps.reserve(valid.size());
        gs.reserve(valid.size());
        for (auto p : valid) {
            ps.push_back(pred.v[p]);
            gs.push_back(gt.v[p]);
        }
        const double mp = detail::median_of(std::move(ps));
        if (!(mp > 0.0)) throw std::domain_error("eval_depth: non-positive prediction median");
        scale = detail::median_of(std::move(gs)) / mp;
    }

    DepthEvalReport r;
    r.valid_pixel_count = valid.size();
    const double n = static_cast<double>(valid.size());
    double abs_rel = 0.0, sq_rel = 0.0, sq = 0.0, sq_log = 0.0;
    double d1 = 0.0, d2 = 0.0, d3 = 0.0;
    const double t1 = 1.25, t2 = 1.25 * 1.25, t3 = 1.25 * 1.25 * 1.25;
    for (auto p : valid) {
        const double dp = std::clamp(pred.v[p] * scale, cfg.min_depth, cfg.max_depth);
        const double dg = std::clamp(gt.v[p], cfg.min_depth, cfg.max_depth);
        const double diff = dp - dg;
        abs_rel += std::abs(diff) / dg;
        sq_rel += diff * diff / dg;
        sq += diff * diff;
        const double dl = std::log(dp) - std::log(dg);
        sq_log += dl * dl;
        const double ratio = std::max(dp / dg, dg / dp);
        d1 += ratio < t1;
        d2 += ratio < t2;
        d3 += ratio < t3;
    }
    r.abs_rel = abs_rel / n;
    r.sq_rel = sq_rel / n;
    r.rms = std::sqrt(sq / n);
    r.rms_log = std::sqrt(sq_log / n);
    r.delta_1 = d1 / n;
    r.delta_2 = d2 / n;
    r.delta_3 = d3 / n;
    return r;
}

struct ScalarErrorReport {
    double rmse = 0.0;
    double mae = 0.0;
    double mape = 0.0;  // percent
};

/// RMSE / MAE / MAPE over paired scalar predictions. MAPE is reported in
/// percent and requires nonzero ground truth.
inline ScalarErrorReport eval_scalar(const std::vector<double>& preds,
                                     const std::vector<double>& gts) {
    if (preds.size() != gts.size())
        throw std::invalid_argument("eval_scalar: length mismatch");
    if (preds.empty()) throw std::invalid_argument("eval_scalar: empty input");

    std::vector<std::size_t> zero_idx;
    for (std::size_t i = 0; i < gts.size(); ++i)
        if (gts[i] == 0.0) zero_idx.push_back(i);
    if (!zero_idx.empty()) {
        std::string msg = "eval_scalar: MAPE undefined for zero ground truth at indices";
        for (auto i : zero_idx) msg += " " + std::to_string(i);
        throw std::domain_error(msg);
    }

    const double n = static_cast<double>(preds.size());
    double sq = 0.0, abs = 0.0, ape = 0.0;
    for (std::size_t i = 0; i < preds.size(); ++i) {
        const double d = preds[i] - gts[i];
        sq += d * d;
        abs += std::abs(d);
        ape += std::abs(d) / std::abs(gts[i]);
    }
    return {std::sqrt(sq / n), abs / n, 100.0 * ape / n};
}

}  // namespace haze
