#pragma once

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "haze/errors.hpp"
#include "haze/geometry.hpp"
#include "haze/io.hpp"
#include "haze/parallel.hpp"
#include "haze/rng.hpp"
#include "haze/scattering.hpp"

namespace haze {

struct DatasetOptions {
    std::vector<double> scales{0.1, 0.3, 0.5, 0.8, 1.0};
    double epsilon = kDefaultEpsilon;
    /// Reference distance turning relative into absolute visibility.
    /// Unset: maximum valid range of each scene.
    std::optional<double> d_ref;
    /// Airlight family name, or "mixed" to rotate through all five.
    std::string airlight_spec = "mixed";
    std::uint64_t seed = 0;
    int jobs = 1;
    /// Raw-to-meters divisor for 16-bit PNG depth maps without a sidecar.
    double depth_png_scale = 256.0;
};

struct ManifestRecord {
    std::string id;
    std::string hazy_path;
    std::string sidecar_path;
    std::string source_clear;
    std::string source_depth;
    double v_rel = 0.0;
    /// Absolute visibility in meters; unset for the no-haze scale 1.
    std::optional<double> v_abs;
    double d_ref = 0.0;
    Vec3 airlight{0.0, 0.0, 0.0};
    std::string family;
    double epsilon = 0.0;
    std::uint64_t sample_seed = 0;
    std::size_t sample_index = 0;
    bool no_haze = false;
};

struct Manifest {
    std::uint64_t seed = 0;
    std::vector<ManifestRecord> records;
};

inline json manifest_record_to_json(const ManifestRecord& r) {
    json j{{"id", r.id},
           {"hazy", r.hazy_path},
           {"sidecar", r.sidecar_path},
           {"source_clear", r.source_clear},
           {"source_depth", r.source_depth},
           {"v_rel", r.v_rel},
           {"v_abs", r.v_abs ? json(*r.v_abs) : json()},
           {"d_ref", r.d_ref},
           {"airlight", r.airlight},
           {"family", r.family},
           {"epsilon", r.epsilon},
           {"seed", r.sample_seed},
           {"sample_index", r.sample_index},
           {"no_haze", r.no_haze}};
    return j;
}

inline ManifestRecord manifest_record_from_json(const json& j) {
    ManifestRecord r;
    r.id = j.at("id").get<std::string>();
    r.hazy_path = j.at("hazy").get<std::string>();
    r.sidecar_path = j.value("sidecar", "");
    r.source_clear = j.value("source_clear", "");
    r.source_depth = j.value("source_depth", "");
    r.v_rel = j.at("v_rel").get<double>();
    if (j.contains("v_abs") && !j["v_abs"].is_null()) r.v_abs = j["v_abs"].get<double>();
    r.d_ref = j.value("d_ref", 0.0);
    if (j.contains("airlight")) r.airlight = j["airlight"].get<Vec3>();
    r.family = j.value("family", "");
    r.epsilon = j.value("epsilon", kDefaultEpsilon);
    r.sample_seed = j.value("seed", std::uint64_t{0});
    r.sample_index = j.value("sample_index", std::size_t{0});
    r.no_haze = j.value("no_haze", false);
    return r;
}

inline json manifest_to_json(const Manifest& m) {
    json records = json::array();
    for (const auto& r : m.records) records.push_back(manifest_record_to_json(r));
    return json{{"schema", "hazekit/manifest/v1"}, {"seed", m.seed}, {"records", records}};
}

inline Manifest manifest_from_json(const json& j) {
    Manifest m;
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& rj : j.at("records")) m.records.push_back(manifest_record_from_json(rj));
    return m;
}

namespace detail {

inline bool has_ext(const std::filesystem::path& p, std::initializer_list<const char*> exts) {
    const auto e = p.extension().string();
    for (const char* x : exts)
        if (e == x) return true;
    return false;
}

/// Depth file to meters: PFM directly, 16-bit PNG divided by the sidecar
/// scale (default when no sidecar exists).
inline ScalarField load_depth(const std::filesystem::path& path, double default_png_scale) {
    if (path.extension() == ".pfm") return read_pfm_scalar(path.string());
    double scale = default_png_scale;
    const auto sidecar = std::filesystem::path(path).replace_extension(".json");
    if (std::filesystem::exists(sidecar)) {
        const json j = read_json_file(sidecar.string());
        scale = j.value("depth_scale", default_png_scale);
    }
    return read_png16_depth(path.string(), scale);
}

}  // namespace detail

/// For every clear/depth pair and every relative visibility in
/// options.scales, synthesizes one hazy sample under a deterministic
/// per-sample airlight draw, writes it next to a JSON sidecar recording the
/// generation parameters, and returns (and writes) the manifest. Scale 1
/// means no haze and reproduces the clear image exactly.
inline Manifest make_visibility_dataset(const std::string& clear_dir, const std::string& depth_dir,
                                        const CameraIntrinsics& intrinsics,
                                        const DatasetOptions& options, const std::string& out_dir) {
    namespace fs = std::filesystem;
    intrinsics.validate();
    for (double s : options.scales)
        if (!(s > 0.0 && s <= 1.0))
            throw std::invalid_argument("make_visibility_dataset: scales must lie in (0,1]");
    if (options.airlight_spec != "mixed") airlight_family(options.airlight_spec);  // validate name

    std::map<std::string, fs::path> clears, depths;
    for (const auto& e : fs::directory_iterator(clear_dir))
        if (e.is_regular_file() && detail::has_ext(e.path(), {".png", ".pfm"}))
            clears[e.path().stem().string()] = e.path();
    for (const auto& e : fs::directory_iterator(depth_dir))
        if (e.is_regular_file() && detail::has_ext(e.path(), {".png", ".pfm"}))
            depths[e.path().stem().string()] = e.path();

    std::vector<std::string> offenders;
    for (const auto& [stem, p] : clears)
        if (!depths.count(stem)) offenders.push_back("missing depth for " + p.string());
    for (const auto& [stem, p] : depths)
        if (!clears.count(stem)) offenders.push_back("missing clear image for " + p.string());
    if (!offenders.empty())
        throw IngestionError("make_visibility_dataset: unpaired inputs", offenders);

    fs::create_directories(out_dir);

    std::vector<std::string> stems;
    for (const auto& [stem, p] : clears) stems.push_back(stem);  // std::map: sorted

    Manifest manifest;
    manifest.seed = options.seed;
    const std::size_t n_scales = options.scales.size();
    manifest.records.resize(stems.size() * n_scales);

    parallel_for(options.jobs, stems.size(), [&](std::size_t ii) {
        const std::string& stem = stems[ii];
        const fs::path clear_path = clears.at(stem);
        const fs::path depth_path = depths.at(stem);
        const RasterImage clear = read_image_any(clear_path.string());
        const ScalarField depth = detail::load_depth(depth_path, options.depth_png_scale);
        require_same_shape(clear, depth, "make_visibility_dataset");
        const ScalarField range = depth_to_range(depth, intrinsics);

        double max_range = 0.0;
        for (double r : range.v)
            if (std::isfinite(r)) max_range = std::max(max_range, r);
        const double d_ref = options.d_ref.value_or(max_range);

        for (std::size_t si = 0; si < n_scales; ++si) {
            const std::size_t sample_index = ii * n_scales + si;
            const double scale = options.scales[si];
            const std::uint64_t sample_seed = hash_seed(options.seed, sample_index);

            const AirlightFamily& family =
                options.airlight_spec == "mixed"
                    ? airlight_families()[sample_index % airlight_families().size()]
                    : airlight_family(options.airlight_spec);
            const Vec3 airlight = sample_airlight(family, sample_seed);

            ManifestRecord rec;
            rec.sample_index = sample_index;
            rec.sample_seed = sample_seed;
            rec.v_rel = scale;
            rec.d_ref = d_ref;
            rec.airlight = airlight;
            rec.family = std::string(family.name);
            rec.epsilon = options.epsilon;
            rec.source_clear = clear_path.string();
            rec.source_depth = depth_path.string();

            char suffix[32];
            std::snprintf(suffix, sizeof(suffix), "__v%g", scale);
            rec.id = stem + suffix;
            const std::string ext = clear_path.extension().string();
            rec.hazy_path = (fs::path(out_dir) / (rec.id + ext)).string();
            rec.sidecar_path = (fs::path(out_dir) / (rec.id + ".json")).string();

            RasterImage hazy;
            if (scale >= 1.0) {
                rec.no_haze = true;
                hazy = clear;
            } else {
                if (!(d_ref > 0.0))
                    throw std::domain_error("make_visibility_dataset: scene " + stem +
                                            " has no positive range; cannot scale visibility");
                rec.v_abs = scale * d_ref;
                ScatteringParams params{airlight, *rec.v_abs, options.epsilon};
                hazy = synthesize_haze(clear, range, params);
            }
            write_image_any(rec.hazy_path, hazy);

            json sidecar{{"id", rec.id},
                         {"v_rel", rec.v_rel},
                         {"v_abs", rec.v_abs ? json(*rec.v_abs) : json()},
                         {"d_ref", rec.d_ref},
                         {"airlight", rec.airlight},
                         {"family", rec.family},
                         {"epsilon", rec.epsilon},
                         {"seed", rec.sample_seed},
                         {"source_clear", rec.source_clear},
                         {"source_depth", rec.source_depth},
                         {"no_haze", rec.no_haze}};
            write_json_file(rec.sidecar_path, sidecar);
            manifest.records[sample_index] = std::move(rec);
        }
    });

    std::set<std::string> ids;
    for (const auto& r : manifest.records)
        if (!ids.insert(r.id).second)
            throw std::invalid_argument("make_visibility_dataset: duplicate sample id " + r.id);

    write_json_file((fs::path(out_dir) / "manifest.json").string(), manifest_to_json(manifest));
    return manifest;
}

}  // namespace haze
