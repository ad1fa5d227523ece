#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <numeric>

#include "haze/metrics.hpp"
#include "test_util.hpp"

using namespace haze;
using Catch::Approx;

namespace {

// Straight per-pixel reimplementation of the depth metrics, kept deliberately
// naive so the library version has an independent reference.
DepthEvalReport naive_eval_depth(const ScalarField& pred, const ScalarField& gt,
                                 const DepthEvalConfig& cfg) {
    std::vector<double> ps, gs;
    for (int i = 0; i < gt.height; ++i)
        for (int j = 0; j < gt.width; ++j)
            if (gt.at(i, j) > 0.0) {
                ps.push_back(pred.at(i, j));
                gs.push_back(gt.at(i, j));
            }
    double scale = 1.0;
    if (cfg.median_scaling) {
        std::vector<double> p2 = ps, g2 = gs;
        std::sort(p2.begin(), p2.end());
        std::sort(g2.begin(), g2.end());
        auto med = [](const std::vector<double>& v) {
            const std::size_t n = v.size();
            return n % 2 ? v[n / 2] : (v[n / 2 - 1] + v[n / 2]) / 2.0;
        };
        scale = med(g2) / med(p2);
    }
    DepthEvalReport r;
    r.valid_pixel_count = ps.size();
    for (std::size_t i = 0; i < ps.size(); ++i) {
        const double p = std::clamp(ps[i] * scale, cfg.min_depth, cfg.max_depth);
        const double g = std::clamp(gs[i], cfg.min_depth, cfg.max_depth);
        r.abs_rel += std::abs(p - g) / g;
        r.sq_rel += (p - g) * (p - g) / g;
        r.rms += (p - g) * (p - g);
        r.rms_log += (std::log(p) - std::log(g)) * (std::log(p) - std::log(g));
        const double ratio = std::max(p / g, g / p);
        r.delta_1 += ratio < 1.25;
        r.delta_2 += ratio < 1.25 * 1.25;
        r.delta_3 += ratio < 1.25 * 1.25 * 1.25;
    }
    const double n = static_cast<double>(ps.size());
    r.abs_rel /= n;
    r.sq_rel /= n;
    r.rms = std::sqrt(r.rms / n);
    r.rms_log = std::sqrt(r.rms_log / n);
    r.delta_1 /= n;
    r.delta_2 /= n;
    r.delta_3 /= n;
    return r;
}

}  // namespace

TEST_CASE("perfect predictions score zero error and full accuracy") {
    const ScalarField gt = testutil::random_field(1, 12, 12, 0.5, 60.0);
    const DepthEvalReport r = eval_depth(gt, gt);
    REQUIRE(r.abs_rel == 0.0);
    REQUIRE(r.sq_rel == 0.0);
    REQUIRE(r.rms == 0.0);
    REQUIRE(r.rms_log == 0.0);
    REQUIRE(r.delta_1 == 1.0);
    REQUIRE(r.delta_2 == 1.0);
    REQUIRE(r.delta_3 == 1.0);
    REQUIRE(r.valid_pixel_count == gt.size());
}

TEST_CASE("doubling the depth gives AbsRel 1 and fails every delta threshold") {
    const ScalarField gt = testutil::random_field(2, 8, 8, 1.0, 20.0);
    ScalarField pred = gt;
    for (auto& x : pred.v) x *= 2.0;
    DepthEvalConfig cfg;
    cfg.max_depth = 1e6;  // keep the clamp out of the way
    const DepthEvalReport r = eval_depth(pred, gt, cfg);
    REQUIRE(r.abs_rel == Approx(1.0).epsilon(1e-12));
    // ratio 2 exceeds 1.25^3 = 1.953125, so even the loosest threshold fails
    REQUIRE(r.delta_1 == 0.0);
    REQUIRE(r.delta_2 == 0.0);
    REQUIRE(r.delta_3 == 0.0);
}

TEST_CASE("two-pixel worked example") {
    ScalarField gt(1, 2), pred(1, 2);
    gt.at(0, 0) = 2.0;
    gt.at(0, 1) = 4.0;
    pred.at(0, 0) = 3.0;
    pred.at(0, 1) = 3.0;
    DepthEvalConfig cfg;
    cfg.max_depth = 100.0;
    const DepthEvalReport r = eval_depth(pred, gt, cfg);
    REQUIRE(r.abs_rel == Approx(0.375).epsilon(1e-15));  // (0.5 + 0.25) / 2
    REQUIRE(r.rms == Approx(1.0).epsilon(1e-15));        // sqrt((1 + 1) / 2)
    REQUIRE(r.sq_rel == Approx((0.5 + 0.25) / 2.0).epsilon(1e-15));
    const double rl = std::sqrt((std::pow(std::log(1.5), 2) + std::pow(std::log(0.75), 2)) / 2.0);
    REQUIRE(r.rms_log == Approx(rl).epsilon(1e-15));
}

TEST_CASE("matches the naive double-loop oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        const ScalarField gt = testutil::random_field(seed, 16, 16, 0.0, 90.0);
        const ScalarField pred = testutil::random_field(seed + 1000, 16, 16, 0.1, 90.0);
        for (bool ms : {false, true}) {
            DepthEvalConfig cfg;
            cfg.median_scaling = ms;
            const DepthEvalReport a = eval_depth(pred, gt, cfg);
            const DepthEvalReport b = naive_eval_depth(pred, gt, cfg);
            REQUIRE(a.valid_pixel_count == b.valid_pixel_count);
            REQUIRE(a.abs_rel == Approx(b.abs_rel).margin(1e-12));
            REQUIRE(a.sq_rel == Approx(b.sq_rel).margin(1e-12));
            REQUIRE(a.rms == Approx(b.rms).margin(1e-12));
            REQUIRE(a.rms_log == Approx(b.rms_log).margin(1e-12));
            REQUIRE(a.delta_1 == b.delta_1);
            REQUIRE(a.delta_2 == b.delta_2);
            REQUIRE(a.delta_3 == b.delta_3);
        }
    }
}

TEST_CASE("invalid ground truth pixels are excluded; none at all is an error") {
    ScalarField gt(2, 2, 0.0);
    gt.at(0, 0) = 10.0;
    ScalarField pred(2, 2, 12.0);
    const DepthEvalReport r = eval_depth(pred, gt);
    REQUIRE(r.valid_pixel_count == 1);

    ScalarField none(2, 2, 0.0);
    REQUIRE_THROWS_AS(eval_depth(pred, none), NoValidPixelsError);
}

TEST_CASE("delta accuracies are monotone in the threshold") {
    for (std::uint64_t seed = 0; seed < 8; ++seed) {
        const ScalarField gt = testutil::random_field(seed + 31, 10, 10, 0.5, 50.0);
        const ScalarField pred = testutil::random_field(seed + 77, 10, 10, 0.5, 50.0);
        const DepthEvalReport r = eval_depth(pred, gt);
        REQUIRE(r.delta_1 <= r.delta_2);
        REQUIRE(r.delta_2 <= r.delta_3);
    }
}

TEST_CASE("metrics are invariant to pixel permutation") {
    const ScalarField gt = testutil::random_field(91, 6, 8, 0.5, 40.0);
    const ScalarField pred = testutil::random_field(92, 6, 8, 0.5, 40.0);
    ScalarField gt_p = gt, pred_p = pred;
    // Reverse both in lockstep.
    std::reverse(gt_p.v.begin(), gt_p.v.end());
    std::reverse(pred_p.v.begin(), pred_p.v.end());
    const DepthEvalReport a = eval_depth(pred, gt);
    const DepthEvalReport b = eval_depth(pred_p, gt_p);
    REQUIRE(a.abs_rel == Approx(b.abs_rel).margin(1e-12));
    REQUIRE(a.rms == Approx(b.rms).margin(1e-12));
    REQUIRE(a.delta_1 == b.delta_1);
}

TEST_CASE("median scaling is a no-op on scale-aligned predictions") {
    ScalarField gt(1, 3), pred(1, 3);
    gt.at(0, 0) = 1.0;
    gt.at(0, 1) = 2.0;
    gt.at(0, 2) = 3.0;
    pred.at(0, 0) = 0.9;
    pred.at(0, 1) = 2.0;  // medians agree
    pred.at(0, 2) = 3.3;
    DepthEvalConfig off, on;
    on.median_scaling = true;
    const DepthEvalReport a = eval_depth(pred, gt, off);
    const DepthEvalReport b = eval_depth(pred, gt, on);
    REQUIRE(a.abs_rel == b.abs_rel);
    REQUIRE(a.delta_1 == b.delta_1);
    REQUIRE(a.delta_2 == b.delta_2);
    REQUIRE(a.delta_3 == b.delta_3);

    // And it fully repairs a pure scale error.
    ScalarField doubled = gt;
    for (auto& x : doubled.v) x *= 2.0;
    const DepthEvalReport c = eval_depth(doubled, gt, on);
    REQUIRE(c.abs_rel == Approx(0.0).margin(1e-12));
    REQUIRE(c.delta_1 == 1.0);
}

TEST_CASE("depth caps clamp both maps") {
    ScalarField gt(1, 1, 120.0), pred(1, 1, 500.0);
    const DepthEvalReport r = eval_depth(pred, gt);  // both clamp to 80
    REQUIRE(r.abs_rel == 0.0);
    REQUIRE(r.delta_1 == 1.0);
}

TEST_CASE("scalar metrics") {
    REQUIRE(eval_scalar({1.0, 2.0}, {1.0, 2.0}).rmse == 0.0);
    REQUIRE(eval_scalar({1.0, 2.0}, {1.0, 2.0}).mape == 0.0);

    // 10% multiplicative error: MAPE is 10 percent.
    std::vector<double> gts{2.0, 5.0, 9.0}, preds;
    for (double g : gts) preds.push_back(1.1 * g);
    REQUIRE(eval_scalar(preds, gts).mape == Approx(10.0).epsilon(1e-12));

    // Hand case: errors (-1, +1) against (2, 2).
    const ScalarErrorReport r = eval_scalar({1.0, 3.0}, {2.0, 2.0});
    REQUIRE(r.rmse == Approx(1.0).epsilon(1e-15));
    REQUIRE(r.mae == Approx(1.0).epsilon(1e-15));
    REQUIRE(r.mape == Approx(50.0).epsilon(1e-15));
}

TEST_CASE("scalar metrics input validation") {
    REQUIRE_THROWS_AS(eval_scalar({1.0}, {1.0, 2.0}), std::invalid_argument);
    REQUIRE_THROWS_AS(eval_scalar({}, {}), std::invalid_argument);
    try {
        eval_scalar({1.0, 2.0, 3.0}, {1.0, 0.0, 3.0});
        FAIL("expected domain_error");
    } catch (const std::domain_error& e) {
        REQUIRE(std::string(e.what()).find("indices 1") != std::string::npos);
    }
}
