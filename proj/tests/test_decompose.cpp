#include <catch2/catch_amalgamated.hpp>

#include <algorithm>

#include "haze/decompose.hpp"
#include "haze/synthetic.hpp"
#include "test_util.hpp"

using namespace haze;
using Catch::Approx;

namespace {

double median(std::vector<double> xs) {
    REQUIRE(!xs.empty());
    auto mid = xs.begin() + xs.size() / 2;
    std::nth_element(xs.begin(), mid, xs.end());
    return *mid;
}

// The objective only pins range/visibility up to a joint scale; align the
// recovered visibility to the truth with the median range ratio over the
// identifiability mask before comparing.
double aligned_vis_rel_err(const SyntheticScene& sc, const DecomposeResult& r) {
    std::vector<double> ratios;
    for (std::size_t p = 0; p < sc.range.size(); ++p)
        if (r.identifiability_mask.v[p]) ratios.push_back(sc.range.v[p] / r.range.v[p]);
    const double scale = median(std::move(ratios));
    return std::abs(r.visibility * scale - sc.params.visibility) / sc.params.visibility;
}

}  // namespace

TEST_CASE("identical hazy and clear inputs are rejected as degenerate") {
    const RasterImage img = testutil::random_image(1, 12, 16);
    REQUIRE_THROWS_AS(decompose(img, img, 0.05, DecomposeMode::Full), DegenerateDecompositionError);
}

TEST_CASE("known parameters must match the mode") {
    SceneOptions so;
    so.height = 8;
    so.width = 8;
    const SyntheticScene sc = make_synthetic_scene(3, so);

    KnownParams with_a;
    with_a.airlight = sc.params.airlight;
    KnownParams with_av = with_a;
    with_av.visibility = sc.params.visibility;

    REQUIRE_THROWS_AS(decompose(sc.hazy, sc.clear, 0.05, DecomposeMode::Full, with_a),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(decompose(sc.hazy, sc.clear, 0.05, DecomposeMode::FixA, {}),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(decompose(sc.hazy, sc.clear, 0.05, DecomposeMode::FixA, with_av),
                      std::invalid_argument);
    REQUIRE_THROWS_AS(decompose(sc.hazy, sc.clear, 0.05, DecomposeMode::FixAV, with_a),
                      std::invalid_argument);
}

TEST_CASE("coarse init estimates the airlight from the brightest decile") {
    // Hazy image: dull everywhere except a bright sky patch that equals the
    // airlight exactly.
    const Vec3 a{0.9, 0.85, 0.8};
    RasterImage hazy(10, 10, 0.35);
    RasterImage clear(10, 10, 0.2);
    for (int j = 0; j < 10; ++j)
        for (int c = 0; c < 3; ++c) hazy.at(0, j, c) = a[c];
    const CoarseInit init = coarse_init(hazy, clear, 0.05);
    for (int c = 0; c < 3; ++c) REQUIRE(init.airlight[c] == Approx(a[c]).margin(0.02));
}

TEST_CASE("coarse init grid scan lands near the true visibility-to-range ratio") {
    for (std::uint64_t seed = 10; seed < 14; ++seed) {
        SceneOptions so;
        so.height = 24;
        so.width = 32;
        const SyntheticScene sc = make_synthetic_scene(seed, so);
        const CoarseInit init = coarse_init(sc.hazy, sc.clear, sc.params.epsilon);

        double max0 = 0.0, maxt = 0.0;
        for (std::size_t p = 0; p < sc.range.size(); ++p) {
            if (!init.identifiable.v[p]) continue;
            max0 = std::max(max0, init.range.v[p]);
            maxt = std::max(maxt, sc.range.v[p]);
        }
        const double vr0 = init.visibility / max0;
        const double vrt = sc.params.visibility / maxt;
        REQUIRE(vr0 / vrt < 2.0);
        REQUIRE(vrt / vr0 < 2.0);
    }
}

TEST_CASE("coarse init with no attenuation signal maxes out the visibility grid") {
    const RasterImage img = testutil::random_image(8, 10, 10);
    const CoarseInit init = coarse_init(img, img, 0.05);  // hazy == clear: T-hat = 1
    REQUIRE(init.visibility == Approx(20.0));
    for (double r : init.range.v) REQUIRE(r == 0.0);
}

TEST_CASE("coarse init needs at least one identifiable pixel") {
    RasterImage hazy(6, 6, 0.7);
    RasterImage clear(6, 6, 0.7);  // clear == brightest-decile airlight estimate
    REQUIRE_THROWS_AS(coarse_init(hazy, clear, 0.05), DegenerateDecompositionError);
}

TEST_CASE("full-mode decomposition recovers parameters on a synthetic scene") {
    SceneOptions so;
    so.height = 32;
    so.width = 48;
    const SyntheticScene sc = make_synthetic_scene(101, so);
    const DecomposeResult r = decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::Full);

    REQUIRE(aligned_vis_rel_err(sc, r) < 0.05);
    for (int c = 0; c < 3; ++c)
        REQUIRE(std::abs(r.airlight[c] - sc.params.airlight[c]) < 0.05);
    REQUIRE(r.visibility > 0.0);
    REQUIRE(r.relative_visibility > 0.0);
    for (double x : r.range.v) REQUIRE(x >= 0.0);
}

TEST_CASE("fix-av mode recovers the range field") {
    SceneOptions so;
    so.height = 32;
    so.width = 48;
    const SyntheticScene sc = make_synthetic_scene(102, so);
    KnownParams known;
    known.airlight = sc.params.airlight;
    known.visibility = sc.params.visibility;
    const DecomposeResult r =
        decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::FixAV, known);

    REQUIRE(r.visibility == sc.params.visibility);
    REQUIRE(r.airlight == sc.params.airlight);

    double abs_rel = 0.0;
    std::size_t n = 0;
    for (std::size_t p = 0; p < sc.range.size(); ++p) {
        if (!r.identifiability_mask.v[p]) continue;
        abs_rel += std::abs(r.range.v[p] - sc.range.v[p]) / sc.range.v[p];
        ++n;
    }
    REQUIRE(n > 0);
    REQUIRE(abs_rel / n < 0.05);
}

TEST_CASE("identifiability mask marks pixels far from the airlight") {
    SceneOptions so;
    so.height = 16;
    so.width = 16;
    const SyntheticScene sc = make_synthetic_scene(103, so);
    const DecomposeResult r = decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::Full);
    for (std::size_t p = 0; p < sc.range.size(); ++p) {
        double d = 0.0;
        for (int c = 0; c < 3; ++c)
            d = std::max(d, std::abs(sc.clear.v[p * 3 + c] - r.airlight[c]));
        REQUIRE(r.identifiability_mask.v[p] == (d >= 0.1 ? 1 : 0));
    }
}

TEST_CASE("loss trace is non-increasing and the best iterate is returned") {
    SceneOptions so;
    so.height = 12;
    so.width = 16;
    const SyntheticScene sc = make_synthetic_scene(104, so);
    SolverConfig cfg;
    cfg.max_iters = 150;
    const DecomposeResult r =
        decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::Full, {}, cfg);
    REQUIRE(!r.loss_trace.empty());
    for (std::size_t i = 1; i < r.loss_trace.size(); ++i)
        REQUIRE(r.loss_trace[i].total <= r.loss_trace[i - 1].total + 1e-9);
    REQUIRE(r.final_loss.total == r.loss_trace.back().total);

    // Returned loss matches an independent evaluation of the returned params.
    const LossBreakdown check = total_loss(sc.hazy, sc.clear, r.range, r.airlight, r.visibility,
                                           sc.params.epsilon);
    REQUIRE(check.total == Approx(r.final_loss.total).epsilon(1e-9));
}

TEST_CASE("truth never beats the estimate by more than the smoothness prior") {
    // Constant-range scene: the smoothness term vanishes at the truth, so the
    // true parameters must score within tolerance of the solver's optimum.
    const RasterImage clear = testutil::random_image(40, 16, 20);
    ScalarField range(16, 20, 30.0);
    const ScatteringParams params{{0.75, 0.78, 0.82}, 45.0, 0.05};
    const RasterImage hazy = synthesize_haze(clear, range, params);

    const LossBreakdown truth =
        total_loss(hazy, clear, range, params.airlight, params.visibility, params.epsilon);
    REQUIRE(truth.total <= 1e-9);

    const DecomposeResult r = decompose(hazy, clear, params.epsilon, DecomposeMode::Full);
    REQUIRE(truth.total <= r.final_loss.total + 1e-6);
}

TEST_CASE("decomposition is deterministic for a fixed seed") {
    SceneOptions so;
    so.height = 12;
    so.width = 12;
    const SyntheticScene sc = make_synthetic_scene(105, so);
    SolverConfig cfg;
    cfg.max_iters = 80;
    cfg.seed = 7;
    const DecomposeResult a =
        decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::Full, {}, cfg);
    const DecomposeResult b =
        decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::Full, {}, cfg);
    REQUIRE(a.range.v == b.range.v);
    REQUIRE(a.airlight == b.airlight);
    REQUIRE(a.visibility == b.visibility);
    REQUIRE(a.final_loss.total == b.final_loss.total);
    REQUIRE(a.iterations == b.iterations);

    cfg.seed = 8;
    const DecomposeResult c =
        decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::Full, {}, cfg);
    REQUIRE(a.range.v != c.range.v);  // the jitter actually depends on the seed
}

TEST_CASE("hitting the iteration cap reports non-convergence instead of throwing") {
    SceneOptions so;
    so.height = 10;
    so.width = 10;
    const SyntheticScene sc = make_synthetic_scene(106, so);
    SolverConfig cfg;
    cfg.max_iters = 3;
    const DecomposeResult r =
        decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::Full, {}, cfg);
    REQUIRE_FALSE(r.converged);
    REQUIRE(r.iterations == 3);
}

TEST_CASE("fixing the airlight does not hurt visibility recovery") {
    // Statistical check over seeds on one scene: the median gauge-aligned
    // visibility error of FixA stays within that of Full.
    SceneOptions so;
    so.height = 24;
    so.width = 24;
    const SyntheticScene sc = make_synthetic_scene(107, so);
    KnownParams with_a;
    with_a.airlight = sc.params.airlight;

    std::vector<double> err_fixa, err_full;
    for (std::uint64_t seed = 0; seed < 21; ++seed) {
        SolverConfig cfg;
        cfg.seed = seed;
        cfg.max_iters = 400;
        err_fixa.push_back(aligned_vis_rel_err(
            sc, decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::FixA, with_a, cfg)));
        err_full.push_back(aligned_vis_rel_err(
            sc, decompose(sc.hazy, sc.clear, sc.params.epsilon, DecomposeMode::Full, {}, cfg)));
    }
    REQUIRE(median(err_fixa) <= median(err_full) + 1e-9);
}

TEST_CASE("gradient check passes on a seed-0 scene") {
    SceneOptions so;
    so.height = 8;
    so.width = 8;
    const SyntheticScene sc = make_synthetic_scene(0, so);
    const GradCheckReport rep = gradient_check_scene(sc, 0);
    REQUIRE(rep.passed);
    REQUIRE(rep.max_rel_err <= 1e-4);
    REQUIRE(rep.entries.size() == 1 + 3 + 32);
}

TEST_CASE("gradient check flags unconstrained range pixels on a zero-texture scene") {
    // Zero-texture clear image, evaluated at an airlight equal to that
    // uniform color: the reconstruction I'*T + A*(1-T) collapses to the
    // constant clear value, so no data term constrains any range pixel (the
    // smoothness prior is disabled to expose that).
    const Vec3 gray{0.55, 0.55, 0.55};
    RasterImage clear(8, 8, gray);
    const ScalarField range = testutil::random_field(55, 8, 8, 5.0, 20.0);
    const ScatteringParams params{{0.9, 0.85, 0.8}, 18.0, 0.05};
    const RasterImage hazy = synthesize_haze(clear, range, params);

    ScalarField rp = range;
    for (auto& x : rp.v) x *= 0.9;
    LossWeights w;
    w.beta_smooth = 0.0;
    const GradCheckReport rep =
        gradient_check(hazy, clear, rp, gray, params.visibility * 1.2, params.epsilon, w, 1);
    REQUIRE(rep.unconstrained_range_pixels == 32);
    REQUIRE(rep.passed);
}

TEST_CASE("a corrupted analytic gradient is surfaced as a failure") {
    SceneOptions so;
    so.height = 8;
    so.width = 8;
    const SyntheticScene sc = make_synthetic_scene(1, so);
    GradCheckReport rep = gradient_check_scene(sc, 1);
    REQUIRE(rep.passed);

    // Flip the sign of the largest entry, as a broken backward pass would.
    auto worst = std::max_element(rep.entries.begin(), rep.entries.end(),
                                  [](const GradCheckEntry& x, const GradCheckEntry& y) {
                                      return std::abs(x.analytic) < std::abs(y.analytic);
                                  });
    worst->analytic = -worst->analytic;
    finalize_gradcheck(rep);
    REQUIRE_FALSE(rep.passed);
}
