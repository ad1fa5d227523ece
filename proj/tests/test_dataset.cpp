#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "haze/dataset.hpp"
#include "haze/synthetic.hpp"
#include "test_util.hpp"

using namespace haze;
using Catch::Approx;
namespace fs = std::filesystem;

namespace {

struct Fixture {
    testutil::TempDir dir{"dataset"};
    std::string clear_dir, depth_dir;
    CameraIntrinsics k{40.0, 40.0, 12.0, 8.0, 24, 16};

    explicit Fixture(int n_images = 2, bool pfm_depth = false) {
        clear_dir = dir.file("clear");
        depth_dir = dir.file("depth");
        fs::create_directories(clear_dir);
        fs::create_directories(depth_dir);
        for (int i = 0; i < n_images; ++i) {
            const std::string stem = "img" + std::to_string(i);
            RasterImage clear(16, 24);
            Rng rng(500 + i);
            for (auto& x : clear.v) x = static_cast<double>(rng.next_below(256)) / 255.0;
            write_png_rgb8(clear_dir + "/" + stem + ".png", clear);

            ScalarField depth(16, 24);
            for (auto& x : depth.v) x = rng.uniform(4.0, 40.0);
            if (pfm_depth)
                write_pfm(depth_dir + "/" + stem + ".pfm", depth);
            else
                write_png16_depth(depth_dir + "/" + stem + ".png", depth, 256.0);
        }
    }
};

}  // namespace

TEST_CASE("dataset generation emits one sample per image and scale") {
    Fixture fx(2);
    DatasetOptions opt;
    opt.scales = {0.3, 0.8, 1.0};
    const std::string out = fx.dir.file("out");
    const Manifest m = make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, out);

    REQUIRE(m.records.size() == 6);
    std::set<std::string> ids;
    for (const auto& r : m.records) {
        REQUIRE(ids.insert(r.id).second);
        REQUIRE(fs::exists(r.hazy_path));
        REQUIRE(fs::exists(r.sidecar_path));
        REQUIRE(r.epsilon == 0.05);
        REQUIRE(r.d_ref > 0.0);
        if (r.v_rel >= 1.0) {
            REQUIRE(r.no_haze);
            REQUIRE_FALSE(r.v_abs.has_value());
        } else {
            REQUIRE(r.v_abs.has_value());
            REQUIRE(*r.v_abs == Approx(r.v_rel * r.d_ref));
        }
    }
    REQUIRE(fs::exists(fs::path(out) / "manifest.json"));

    const Manifest back = manifest_from_json(read_json_file((fs::path(out) / "manifest.json").string()));
    REQUIRE(back.records.size() == m.records.size());
    REQUIRE(back.records[3].id == m.records[3].id);
    REQUIRE(back.records[3].airlight == m.records[3].airlight);
}

TEST_CASE("scale one reproduces the clear image exactly") {
    Fixture fx(1);
    DatasetOptions opt;
    opt.scales = {1.0};
    const Manifest m =
        make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, fx.dir.file("out1"));
    REQUIRE(m.records.size() == 1);
    const RasterImage clear = read_png_rgb8(m.records[0].source_clear);
    const RasterImage hazy = read_png_rgb8(m.records[0].hazy_path);
    REQUIRE(max_abs_diff(clear, hazy) == 0.0);
}

TEST_CASE("hazy samples agree with a direct synthesis from the sidecar") {
    Fixture fx(1, /*pfm_depth=*/true);
    DatasetOptions opt;
    opt.scales = {0.5};
    const Manifest m =
        make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, fx.dir.file("out2"));
    const ManifestRecord& rec = m.records[0];

    const RasterImage clear = read_png_rgb8(rec.source_clear);
    const ScalarField depth = read_pfm_scalar(rec.source_depth);
    const ScalarField range = depth_to_range(depth, fx.k);
    const RasterImage expect =
        synthesize_haze(clear, range, {rec.airlight, *rec.v_abs, rec.epsilon});
    const RasterImage hazy = read_png_rgb8(rec.hazy_path);
    REQUIRE(max_abs_diff(expect, hazy) <= 0.5 / 255.0 + 1e-12);  // 8-bit quantization only
}

TEST_CASE("empty scale list produces an empty manifest without error") {
    Fixture fx(2);
    DatasetOptions opt;
    opt.scales = {};
    const Manifest m =
        make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, fx.dir.file("out3"));
    REQUIRE(m.records.empty());
    REQUIRE(fs::exists(fs::path(fx.dir.file("out3")) / "manifest.json"));
}

TEST_CASE("unpaired inputs are rejected with the offenders listed") {
    Fixture fx(2);
    write_png_rgb8(fx.clear_dir + "/orphan.png", RasterImage(16, 24, 0.5));
    DatasetOptions opt;
    try {
        make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, fx.dir.file("out4"));
        FAIL("expected IngestionError");
    } catch (const IngestionError& e) {
        REQUIRE(std::string(e.what()).find("orphan") != std::string::npos);
    }
}

TEST_CASE("generation is deterministic and independent of worker count") {
    Fixture fx(2);
    DatasetOptions opt;
    opt.scales = {0.4, 0.9};
    opt.seed = 12345;
    const std::string out_a = fx.dir.file("a"), out_b = fx.dir.file("b"), out_c = fx.dir.file("c");
    const Manifest ma = make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, out_a);
    const Manifest mb = make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, out_b);
    opt.jobs = 4;
    const Manifest mc = make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, out_c);

    REQUIRE(ma.records.size() == mb.records.size());
    for (std::size_t i = 0; i < ma.records.size(); ++i) {
        const std::string name = fs::path(ma.records[i].hazy_path).filename().string();
        REQUIRE(testutil::files_equal(out_a + "/" + name, out_b + "/" + name));
        REQUIRE(testutil::files_equal(out_a + "/" + name, out_c + "/" + name));
        const std::string side = fs::path(ma.records[i].sidecar_path).filename().string();
        REQUIRE(testutil::files_equal(out_a + "/" + side, out_b + "/" + side));
        REQUIRE(testutil::files_equal(out_a + "/" + side, out_c + "/" + side));
    }
}

TEST_CASE("per-sample airlight depends on the sample, not on processing order") {
    Fixture fx(1);
    DatasetOptions opt;
    opt.scales = {0.2, 0.5, 0.9};
    opt.airlight_spec = "grey";
    opt.seed = 42;
    const Manifest m =
        make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, fx.dir.file("out5"));
    REQUIRE(m.records[0].airlight != m.records[1].airlight);
    for (const auto& r : m.records)
        REQUIRE(r.airlight == sample_airlight(airlight_family("grey"), hash_seed(42, r.sample_index)));
}

TEST_CASE("d_ref override and depth sidecar scale are honored") {
    Fixture fx(1);
    // Add a sidecar halving the depth scale: depths double.
    write_json_file(fx.depth_dir + "/img0.json", json{{"depth_scale", 128.0}});
    DatasetOptions opt;
    opt.scales = {0.5};
    opt.d_ref = 200.0;
    const Manifest m =
        make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, opt, fx.dir.file("out6"));
    REQUIRE(m.records[0].d_ref == 200.0);
    REQUIRE(*m.records[0].v_abs == Approx(100.0));
    REQUIRE_THROWS_AS([&] {
        DatasetOptions bad;
        bad.scales = {1.5};
        make_visibility_dataset(fx.clear_dir, fx.depth_dir, fx.k, bad, fx.dir.file("out7"));
    }(), std::invalid_argument);
}
