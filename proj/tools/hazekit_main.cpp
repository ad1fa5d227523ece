// hazekit: synthesis, decomposition, and evaluation of hazy driving scenes.
//
// Exit codes: 0 success, 2 input/usage error, 3 domain error (degenerate
// decomposition, unattainable inversion, singular fit, failed check).

#include <cstdio>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "haze/dataset.hpp"
#include "haze/decompose.hpp"
#include "haze/geometry.hpp"
#include "haze/io.hpp"
#include "haze/metrics.hpp"
#include "haze/parallel.hpp"
#include "haze/pm25.hpp"
#include "haze/synthetic.hpp"

namespace fs = std::filesystem;
using haze::json;

namespace {

constexpr const char* kReportSchema = "hazekit/report/v1";
constexpr int kExitInput = 2;
constexpr int kExitDomain = 3;

void write_report(const std::optional<std::string>& report_path,
                  const std::optional<std::string>& out_dir, json report) {
    report["schema"] = kReportSchema;
    if (report_path) {
        haze::write_json_file(*report_path, report);
    } else if (out_dir) {
        haze::write_json_file((fs::path(*out_dir) / "report.json").string(), report);
    }
}

haze::ScalarField load_depth_like(const std::string& path, double png_scale) {
    const auto ext = fs::path(path).extension().string();
    if (ext == ".pfm") return haze::read_pfm_scalar(path);
    if (ext == ".png") return haze::read_png16_depth(path, png_scale);
    throw haze::IngestionError("unsupported depth format: " + path);
}

haze::ScalarField crop_field(const haze::ScalarField& f, const std::vector<int>& crop) {
    const int x = crop[0], y = crop[1], w = crop[2], h = crop[3];
    if (x < 0 || y < 0 || w <= 0 || h <= 0 || x + w > f.width || y + h > f.height)
        throw std::invalid_argument("crop rectangle out of bounds");
    haze::ScalarField out(h, w);
    for (int i = 0; i < h; ++i)
        for (int j = 0; j < w; ++j) out.at(i, j) = f.at(y + i, x + j);
    return out;
}

// Pairs files by stem when pred/gt are directories, else a single pair.
std::vector<std::pair<std::string, std::string>> pair_inputs(const std::string& pred,
                                                             const std::string& gt) {
    if (!fs::is_directory(pred) && !fs::is_directory(gt)) return {{pred, gt}};
    if (!fs::is_directory(pred) || !fs::is_directory(gt))
        throw haze::IngestionError("prediction and ground truth must both be files or both directories");
    std::map<std::string, std::string> preds, gts;
    for (const auto& e : fs::directory_iterator(pred)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".pfm" || ext == ".png"))
            preds[e.path().stem().string()] = e.path().string();
    }
    for (const auto& e : fs::directory_iterator(gt)) {
        const auto ext = e.path().extension().string();
        if (e.is_regular_file() && (ext == ".pfm" || ext == ".png"))
            gts[e.path().stem().string()] = e.path().string();
    }
    std::vector<std::string> offenders;
    std::vector<std::pair<std::string, std::string>> pairs;
    for (const auto& [stem, p] : preds) {
        auto it = gts.find(stem);
        if (it == gts.end())
            offenders.push_back("missing ground truth for " + p);
        else
            pairs.emplace_back(p, it->second);
    }
    for (const auto& [stem, g] : gts)
        if (!preds.count(stem)) offenders.push_back("missing prediction for " + g);
    if (!offenders.empty()) throw haze::IngestionError("unpaired evaluation inputs", offenders);
    return pairs;
}

haze::DecomposeMode parse_mode(const std::string& s) {
    if (s == "full") return haze::DecomposeMode::Full;
    if (s == "fix-a") return haze::DecomposeMode::FixA;
    if (s == "fix-av") return haze::DecomposeMode::FixAV;
    throw CLI::ValidationError("--mode", "expected full, fix-a, or fix-av");
}

json loss_to_json(const haze::LossBreakdown& l) {
    return json{{"reconstruction", l.reconstruction},
                {"consistency", l.consistency},
                {"smoothness", l.smoothness},
                {"total", l.total}};
}

// ---------------------------------------------------------------------------
// synthesize
// ---------------------------------------------------------------------------

struct SynthesizeArgs {
    std::string clear_dir, depth_dir, intrinsics, out_dir;
    std::vector<double> scales{0.1, 0.3, 0.5, 0.8, 1.0};
    double epsilon = haze::kDefaultEpsilon;
    double d_ref = 0.0;  // 0: per-scene max range
    std::string airlight = "mixed";
    std::uint64_t seed = 0;
    int jobs = 1;
    double depth_scale = 256.0;
    std::optional<std::string> report;
};

int cmd_synthesize(const SynthesizeArgs& a) {
    haze::DatasetOptions opt;
    opt.scales = a.scales;
    opt.epsilon = a.epsilon;
    if (a.d_ref > 0.0) opt.d_ref = a.d_ref;
    opt.airlight_spec = a.airlight;
    opt.seed = a.seed;
    opt.jobs = a.jobs;
    opt.depth_png_scale = a.depth_scale;

    const haze::CameraIntrinsics k = haze::read_intrinsics(a.intrinsics);
    const haze::Manifest m =
        haze::make_visibility_dataset(a.clear_dir, a.depth_dir, k, opt, a.out_dir);

    std::map<double, std::size_t> per_scale;
    for (const auto& r : m.records) ++per_scale[r.v_rel];
    for (const auto& [scale, count] : per_scale)
        std::printf("scale %g: %zu samples\n", scale, count);
    std::printf("wrote %zu samples to %s\n", m.records.size(), a.out_dir.c_str());

    json per_scale_json;
    for (const auto& [scale, count] : per_scale) {
        char key[32];
        std::snprintf(key, sizeof(key), "%g", scale);
        per_scale_json[key] = count;
    }
    write_report(a.report, a.out_dir,
                 json{{"command", "synthesize"},
                      {"samples", m.records.size()},
                      {"per_scale", per_scale_json},
                      {"manifest", (fs::path(a.out_dir) / "manifest.json").string()},
                      {"seed", a.seed}});
    return 0;
}

// ---------------------------------------------------------------------------
// decompose
// ---------------------------------------------------------------------------

struct DecomposeArgs {
    std::string hazy, clear, manifest, mode = "full", known, out_dir = ".";
    double epsilon = haze::kDefaultEpsilon;
    std::uint64_t seed = 0;
    int jobs = 1;
    int max_iters = 2000;
    double step = 1e-2;
    double tol = 1e-6;
    std::optional<std::string> report;
};

struct DecomposeJob {
    std::string id;
    std::string hazy_path, clear_path;
    haze::KnownParams known;
    std::optional<double> true_v_rel;
    std::optional<haze::Vec3> true_airlight;
};

struct DecomposeOutcome {
    bool ok = false;
    std::string error;
    json summary;
    double v_rel_err = -1.0;
    double airlight_mae = -1.0;
};

int cmd_decompose(const DecomposeArgs& a) {
    const haze::DecomposeMode mode = parse_mode(a.mode);
    const bool needs_a = mode != haze::DecomposeMode::Full;
    const bool needs_v = mode == haze::DecomposeMode::FixAV;

    std::vector<DecomposeJob> jobs;
    if (!a.manifest.empty()) {
        const haze::Manifest m = haze::manifest_from_json(haze::read_json_file(a.manifest));
        for (const auto& rec : m.records) {
            DecomposeJob j;
            j.id = rec.id;
            j.hazy_path = rec.hazy_path;
            j.clear_path = rec.source_clear;
            if (needs_a) j.known.airlight = rec.airlight;
            if (needs_v && rec.v_abs) j.known.visibility = *rec.v_abs;
            j.true_v_rel = rec.v_rel;
            j.true_airlight = rec.airlight;
            jobs.push_back(std::move(j));
        }
    } else {
        if (a.hazy.empty() || a.clear.empty())
            throw haze::IngestionError("decompose needs --hazy and --clear, or --manifest");
        DecomposeJob j;
        j.id = fs::path(a.hazy).stem().string();
        j.hazy_path = a.hazy;
        j.clear_path = a.clear;
        if (needs_a || needs_v) {
            if (a.known.empty())
                throw haze::IngestionError("mode " + a.mode + " needs --known parameters");
            const json kj = haze::read_json_file(a.known);
            if (needs_a) j.known.airlight = kj.at("airlight").get<haze::Vec3>();
            if (needs_v) j.known.visibility = kj.at("visibility").get<double>();
        }
        // A sidecar next to the hazy file provides reference values for the summary.
        const auto sidecar = fs::path(a.hazy).replace_extension(".json");
        if (fs::exists(sidecar)) {
            const json sj = haze::read_json_file(sidecar.string());
            if (sj.contains("v_rel")) j.true_v_rel = sj["v_rel"].get<double>();
            if (sj.contains("airlight")) j.true_airlight = sj["airlight"].get<haze::Vec3>();
        }
        jobs.push_back(std::move(j));
    }

    fs::create_directories(a.out_dir);
    std::vector<DecomposeOutcome> outcomes(jobs.size());

    haze::parallel_for(a.jobs, jobs.size(), [&](std::size_t i) {
        const DecomposeJob& job = jobs[i];
        DecomposeOutcome& out = outcomes[i];
        try {
            const haze::RasterImage hazy = haze::read_image_any(job.hazy_path);
            const haze::RasterImage clear = haze::read_image_any(job.clear_path);
            haze::SolverConfig cfg;
            cfg.max_iters = a.max_iters;
            cfg.step = a.step;
            cfg.tol = a.tol;
            cfg.seed = haze::hash_seed(a.seed, i);
            if (needs_v && !job.known.visibility)
                throw std::domain_error("no absolute visibility available for " + job.id);
            const haze::DecomposeResult r =
                haze::decompose(hazy, clear, a.epsilon, mode, job.known, cfg);

            const std::string base = (fs::path(a.out_dir) / job.id).string();
            haze::write_pfm(base + "_range.pfm", r.range);
            haze::write_png_mask(base + "_mask.png", r.identifiability_mask);
            json params{{"schema", kReportSchema},
                        {"id", job.id},
                        {"mode", a.mode},
                        {"visibility", r.visibility},
                        {"relative_visibility", r.relative_visibility},
                        {"d_ref_estimate", r.d_ref_estimate},
                        {"airlight", r.airlight},
                        {"converged", r.converged},
                        {"iterations", r.iterations},
                        {"final_loss", loss_to_json(r.final_loss)},
                        {"seed", cfg.seed}};
            haze::write_json_file(base + "_params.json", params);

            out.ok = true;
            out.summary = params;
            if (job.true_v_rel && *job.true_v_rel > 0.0)
                out.v_rel_err = std::abs(r.relative_visibility - *job.true_v_rel) / *job.true_v_rel;
            if (job.true_airlight) {
                double mae = 0.0;
                for (int c = 0; c < 3; ++c) mae += std::abs(r.airlight[c] - (*job.true_airlight)[c]);
                out.airlight_mae = mae / 3.0;
            }
        } catch (const std::exception& e) {
            out.ok = false;
            out.error = e.what();
        }
    });

    std::size_t ok_count = 0;
    double v_mape = 0.0, a_mae = 0.0;
    std::size_t v_cnt = 0, a_cnt = 0;
    json samples = json::array();
    for (std::size_t i = 0; i < jobs.size(); ++i) {
        const auto& out = outcomes[i];
        if (out.ok) {
            ++ok_count;
            const auto& p = out.summary;
            std::printf("%s: V=%.6g V_rel=%.4f A=(%.4f,%.4f,%.4f) converged=%d loss=%.6g\n",
                        jobs[i].id.c_str(), p["visibility"].get<double>(),
                        p["relative_visibility"].get<double>(), p["airlight"][0].get<double>(),
                        p["airlight"][1].get<double>(), p["airlight"][2].get<double>(),
                        p["converged"].get<bool>() ? 1 : 0, p["final_loss"]["total"].get<double>());
            json s = out.summary;
            s.erase("schema");
            samples.push_back(s);
            if (out.v_rel_err >= 0.0) {
                v_mape += out.v_rel_err;
                ++v_cnt;
            }
            if (out.airlight_mae >= 0.0) {
                a_mae += out.airlight_mae;
                ++a_cnt;
            }
        } else {
            std::printf("%s: FAILED (%s)\n", jobs[i].id.c_str(), out.error.c_str());
            samples.push_back(json{{"id", jobs[i].id}, {"error", out.error}});
        }
    }

    json report{{"command", "decompose"},
                {"mode", a.mode},
                {"samples", samples},
                {"succeeded", ok_count},
                {"failed", jobs.size() - ok_count},
                {"seed", a.seed}};
    if (v_cnt > 0) {
        report["v_rel_mape_percent"] = 100.0 * v_mape / v_cnt;
        std::printf("summary: MAPE(V_rel) = %.3f%% over %zu samples\n", 100.0 * v_mape / v_cnt, v_cnt);
    }
    if (a_cnt > 0) {
        report["airlight_mae"] = a_mae / a_cnt;
        std::printf("summary: MAE(A) = %.5f over %zu samples\n", a_mae / a_cnt, a_cnt);
    }
    write_report(a.report, a.out_dir, report);

    if (ok_count == 0 && !jobs.empty()) return kExitDomain;
    return 0;
}

// ---------------------------------------------------------------------------
// dehaze
// ---------------------------------------------------------------------------

struct DehazeArgs {
    std::string hazy, range, out, sidecar;
    std::vector<double> airlight;
    double visibility = 0.0;
    double epsilon = haze::kDefaultEpsilon;
    double t_min = haze::kDefaultTmin;
    bool clamp = false;
    std::optional<std::string> report;
};

int cmd_dehaze(const DehazeArgs& a) {
    const haze::RasterImage hazy = haze::read_image_any(a.hazy);
    const haze::ScalarField range = haze::read_pfm_scalar(a.range);

    haze::ScatteringParams params;
    params.epsilon = a.epsilon;
    if (!a.sidecar.empty()) {
        const json sj = haze::read_json_file(a.sidecar);
        params.airlight = sj.at("airlight").get<haze::Vec3>();
        if (!sj.contains("v_abs") || sj["v_abs"].is_null())
            throw std::domain_error("sidecar has no absolute visibility (no-haze sample?)");
        params.visibility = sj["v_abs"].get<double>();
        params.epsilon = sj.value("epsilon", a.epsilon);
    } else {
        if (a.airlight.size() != 3)
            throw haze::IngestionError("dehaze needs --airlight r,g,b or --sidecar");
        params.airlight = {a.airlight[0], a.airlight[1], a.airlight[2]};
        params.visibility = a.visibility;
    }

    haze::InvertOptions opts;
    opts.t_min = a.t_min;
    opts.clamp_low_transmission = a.clamp;
    const haze::InvertResult r = haze::invert_haze(hazy, range, params, opts);
    haze::write_image_any(a.out, r.image);
    std::printf("wrote %s (clamped values: %zu, floored pixels: %zu)\n", a.out.c_str(),
                r.clamped_values, r.floored_pixels);
    write_report(a.report, std::nullopt,
                 json{{"command", "dehaze"},
                      {"output", a.out},
                      {"clamped_values", r.clamped_values},
                      {"floored_pixels", r.floored_pixels}});
    return 0;
}

// ---------------------------------------------------------------------------
// eval-depth
// ---------------------------------------------------------------------------

struct EvalDepthArgs {
    std::string pred, gt, pairs_file, intrinsics;
    double min_depth = 1e-3, max_depth = 80.0;
    bool median_scaling = false;
    bool pred_is_range = false;
    std::vector<int> crop;
    double depth_scale = 256.0;
    std::optional<std::string> report;
};

int cmd_eval_depth(const EvalDepthArgs& a) {
    std::vector<std::pair<std::string, std::string>> pairs;
    if (!a.pairs_file.empty()) {
        const json pj = haze::read_json_file(a.pairs_file);
        for (const auto& rec : pj.at("pairs"))
            pairs.emplace_back(rec.at("pred").get<std::string>(), rec.at("gt").get<std::string>());
        if (pairs.empty()) throw haze::IngestionError("no pairs listed in " + a.pairs_file);
    } else {
        if (a.pred.empty() || a.gt.empty())
            throw haze::IngestionError("eval-depth needs --pred and --gt, or --pairs");
        pairs = pair_inputs(a.pred, a.gt);
    }
    haze::DepthEvalConfig cfg{a.min_depth, a.max_depth, a.median_scaling};
    std::optional<haze::CameraIntrinsics> k;
    if (a.pred_is_range) {
        if (a.intrinsics.empty())
            throw haze::IngestionError("--pred-is-range needs --intrinsics for the conversion");
        k = haze::read_intrinsics(a.intrinsics);
    }

    json per_image = json::array();
    haze::DepthEvalReport mean;
    std::printf("%-24s %8s %8s %8s %8s %8s %8s %8s\n", "image", "AbsRel", "SqRel", "RMS", "RMSlog",
                "d1", "d2", "d3");
    for (const auto& [pp, gp] : pairs) {
        haze::ScalarField pred = load_depth_like(pp, a.depth_scale);
        haze::ScalarField gt = load_depth_like(gp, a.depth_scale);
        if (k) pred = haze::range_to_depth(pred, *k);
        if (!a.crop.empty()) {
            pred = crop_field(pred, a.crop);
            gt = crop_field(gt, a.crop);
        }
        const haze::DepthEvalReport r = haze::eval_depth(pred, gt, cfg);
        const std::string id = fs::path(pp).stem().string();
        std::printf("%-24s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", id.c_str(), r.abs_rel,
                    r.sq_rel, r.rms, r.rms_log, r.delta_1, r.delta_2, r.delta_3);
        per_image.push_back(json{{"id", id},
                                 {"abs_rel", r.abs_rel},
                                 {"sq_rel", r.sq_rel},
                                 {"rms", r.rms},
                                 {"rms_log", r.rms_log},
                                 {"delta_1", r.delta_1},
                                 {"delta_2", r.delta_2},
                                 {"delta_3", r.delta_3},
                                 {"valid_pixels", r.valid_pixel_count}});
        mean.abs_rel += r.abs_rel;
        mean.sq_rel += r.sq_rel;
        mean.rms += r.rms;
        mean.rms_log += r.rms_log;
        mean.delta_1 += r.delta_1;
        mean.delta_2 += r.delta_2;
        mean.delta_3 += r.delta_3;
    }
    const double n = static_cast<double>(pairs.size());
    std::printf("%-24s %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f %8.4f\n", "mean", mean.abs_rel / n,
                mean.sq_rel / n, mean.rms / n, mean.rms_log / n, mean.delta_1 / n, mean.delta_2 / n,
                mean.delta_3 / n);

    write_report(a.report, std::nullopt,
                 json{{"command", "eval-depth"},
                      {"per_image", per_image},
                      {"mean",
                       {{"abs_rel", mean.abs_rel / n},
                        {"sq_rel", mean.sq_rel / n},
                        {"rms", mean.rms / n},
                        {"rms_log", mean.rms_log / n},
                        {"delta_1", mean.delta_1 / n},
                        {"delta_2", mean.delta_2 / n},
                        {"delta_3", mean.delta_3 / n}}},
                      {"median_scaling", a.median_scaling},
                      {"min_depth", a.min_depth},
                      {"max_depth", a.max_depth}});
    return 0;
}

// ---------------------------------------------------------------------------
// eval-scalar
// ---------------------------------------------------------------------------

struct EvalScalarArgs {
    std::string csv;
    std::optional<std::string> report;
};

int cmd_eval_scalar(const EvalScalarArgs& a) {
    std::ifstream in(a.csv);
    if (!in) throw haze::IngestionError("cannot open: " + a.csv);
    std::string line;
    if (!std::getline(in, line)) throw haze::IngestionError("empty CSV: " + a.csv);
    std::vector<double> preds, gts;
    int lineno = 1;
    std::vector<std::string> bad;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string p, g;
        if (!std::getline(ss, p, ',') || !std::getline(ss, g, ',')) {
            bad.push_back(a.csv + ":" + std::to_string(lineno) + ": expected 2 columns");
            continue;
        }
        try {
            preds.push_back(std::stod(p));
            gts.push_back(std::stod(g));
        } catch (const std::exception&) {
            bad.push_back(a.csv + ":" + std::to_string(lineno) + ": not a number");
        }
    }
    if (!bad.empty()) throw haze::IngestionError("bad CSV rows", bad);

    const haze::ScalarErrorReport r = haze::eval_scalar(preds, gts);
    std::printf("rmse=%.6g mae=%.6g mape=%.4f%%\n", r.rmse, r.mae, r.mape);
    write_report(a.report, std::nullopt,
                 json{{"command", "eval-scalar"},
                      {"count", preds.size()},
                      {"rmse", r.rmse},
                      {"mae", r.mae},
                      {"mape_percent", r.mape}});
    return 0;
}

// ---------------------------------------------------------------------------
// fit-pm25 / predict-pm25
// ---------------------------------------------------------------------------

struct FitPm25Args {
    std::string csv, out;
    int order = 6;
    std::vector<double> rh_bins;
    std::optional<std::string> report;
};

int cmd_fit_pm25(const FitPm25Args& a) {
    const auto samples = haze::read_pm25_csv(a.csv);
    json out;
    json report{{"command", "fit-pm25"}, {"order", a.order}, {"samples", samples.size()}};
    if (a.rh_bins.empty()) {
        const haze::Pm25Model m = haze::fit_pm25(samples, a.order);
        out = haze::pm25_model_to_json(m);
        std::printf("fitted order-%d model on %zu samples: rmse=%.4g mae=%.4g mape=%.3f%%\n",
                    a.order, samples.size(), m.training_error.rmse, m.training_error.mae,
                    m.training_error.mape);
        report["training_error"] = out["training_error"];
    } else {
        const haze::StratifiedFitResult r = haze::stratified_fit(samples, a.rh_bins, a.order);
        json models = json::array();
        for (const auto& m : r.models) {
            models.push_back(haze::pm25_model_to_json(m));
            std::printf("RH [%.2g,%.2g): %zu samples, rmse=%.4g mae=%.4g mape=%.3f%%\n", m.rh_lo,
                        m.rh_hi, m.sample_count, m.training_error.rmse, m.training_error.mae,
                        m.training_error.mape);
        }
        for (const auto& w : r.warnings) std::printf("warning: skipped bin %s\n", w.c_str());
        if (r.unassigned_samples > 0)
            std::printf("warning: %zu samples fall outside every bin\n", r.unassigned_samples);
        out = json{{"models", models}, {"warnings", r.warnings}};
        report["models"] = models.size();
        report["warnings"] = r.warnings;
    }
    haze::write_json_file(a.out, out);
    report["model_file"] = a.out;
    write_report(a.report, std::nullopt, report);
    return 0;
}

struct PredictPm25Args {
    std::string model;
    double visibility = 0.0;
    double rh = -1.0;
    std::optional<std::string> report;
};

int cmd_predict_pm25(const PredictPm25Args& a) {
    const json mj = haze::read_json_file(a.model);
    haze::Pm25Model model;
    if (mj.contains("models")) {
        if (a.rh < 0.0)
            throw haze::IngestionError("stratified model file needs --rh to select the bin");
        bool found = false;
        for (const auto& m : mj["models"]) {
            const double lo = m.value("rh_lo", 0.0), hi = m.value("rh_hi", 1.0);
            if (a.rh >= lo && a.rh < hi) {
                model = haze::pm25_model_from_json(m);
                found = true;
                break;
            }
        }
        if (!found) throw std::domain_error("no fitted model covers relative humidity " +
                                            std::to_string(a.rh));
    } else {
        model = haze::pm25_model_from_json(mj);
    }
    const haze::Pm25Prediction p = haze::predict_pm25(model, a.visibility);
    std::printf("pm25 = %.4f ug/m^3%s\n", p.value,
                p.clamped_negative ? " (raw polynomial negative, clamped to 0)" : "");
    write_report(a.report, std::nullopt,
                 json{{"command", "predict-pm25"},
                      {"visibility", a.visibility},
                      {"pm25", p.value},
                      {"clamped_negative", p.clamped_negative}});
    return 0;
}

// ---------------------------------------------------------------------------
// gradcheck
// ---------------------------------------------------------------------------

struct GradcheckArgs {
    std::uint64_t seed = 0;
    int height = 8, width = 8;
    int pixels = 32;
    double step = 1e-4;
    double tolerance = 1e-4;
    std::optional<std::string> report;
};

int cmd_gradcheck(const GradcheckArgs& a) {
    haze::SceneOptions so;
    so.height = a.height;
    so.width = a.width;
    const haze::SyntheticScene sc = haze::make_synthetic_scene(a.seed, so);
    const haze::GradCheckReport rep =
        haze::gradient_check_scene(sc, a.seed, {}, a.pixels, a.step, a.tolerance);

    for (const auto& e : rep.entries)
        std::printf("%-16s analytic=% .10e numeric=% .10e rel_err=%.3e\n", e.param.c_str(),
                    e.analytic, e.numeric, e.rel_err);
    std::printf("max_rel_err=%.3e tolerance=%.1e unconstrained=%zu => %s\n", rep.max_rel_err,
                rep.tolerance, rep.unconstrained_range_pixels, rep.passed ? "PASS" : "FAIL");

    json entries = json::array();
    for (const auto& e : rep.entries)
        entries.push_back(json{{"param", e.param},
                               {"analytic", e.analytic},
                               {"numeric", e.numeric},
                               {"rel_err", e.rel_err}});
    write_report(a.report, std::nullopt,
                 json{{"command", "gradcheck"},
                      {"seed", a.seed},
                      {"height", a.height},
                      {"width", a.width},
                      {"entries", entries},
                      {"max_rel_err", rep.max_rel_err},
                      {"tolerance", rep.tolerance},
                      {"unconstrained_range_pixels", rep.unconstrained_range_pixels},
                      {"passed", rep.passed}});
    return rep.passed ? 0 : kExitDomain;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"haze synthesis, decomposition, and evaluation"};
    app.require_subcommand(1);

    SynthesizeArgs syn;
    auto* s = app.add_subcommand("synthesize", "generate a multi-visibility hazy dataset");
    s->add_option("--clear", syn.clear_dir, "directory of clear images (.png/.pfm)")->required();
    s->add_option("--depth", syn.depth_dir, "directory of depth maps (.png 16-bit/.pfm)")->required();
    s->add_option("--intrinsics", syn.intrinsics, "camera intrinsics JSON")->required();
    s->add_option("--out,-o", syn.out_dir, "output directory")->required();
    s->add_option("--scales", syn.scales, "relative visibilities in (0,1]")->delimiter(',');
    s->add_option("--epsilon", syn.epsilon, "minimal observable contrast");
    s->add_option("--d-ref", syn.d_ref, "reference distance (default: scene max range)");
    s->add_option("--airlight", syn.airlight, "family name or 'mixed'");
    s->add_option("--seed", syn.seed, "RNG seed");
    s->add_option("--jobs", syn.jobs, "parallel workers");
    s->add_option("--depth-scale", syn.depth_scale, "raw-to-meters divisor for PNG16 depth");
    s->add_option("--report", [&syn](const std::vector<std::string>& v) { syn.report = v[0]; return true; },
                  "machine-readable report path");

    DecomposeArgs dec;
    auto* d = app.add_subcommand("decompose", "recover range, airlight, visibility from a hazy/clear pair");
    d->add_option("--hazy", dec.hazy, "hazy image");
    d->add_option("--clear", dec.clear, "clear image");
    d->add_option("--manifest", dec.manifest, "batch over a synthesize manifest");
    d->add_option("--mode", dec.mode, "full | fix-a | fix-av");
    d->add_option("--known", dec.known, "JSON with known airlight/visibility (fix modes)");
    d->add_option("--out,-o", dec.out_dir, "output directory");
    d->add_option("--epsilon", dec.epsilon, "minimal observable contrast");
    d->add_option("--seed", dec.seed, "RNG seed");
    d->add_option("--jobs", dec.jobs, "parallel workers");
    d->add_option("--max-iters", dec.max_iters, "iteration cap");
    d->add_option("--step", dec.step, "solver step size");
    d->add_option("--tol", dec.tol, "convergence tolerance");
    d->add_option("--report", [&dec](const std::vector<std::string>& v) { dec.report = v[0]; return true; },
                  "machine-readable report path");

    DehazeArgs deh;
    auto* h = app.add_subcommand("dehaze", "invert the haze model given range and parameters");
    h->add_option("--hazy", deh.hazy, "hazy image")->required();
    h->add_option("--range", deh.range, "range field (.pfm)")->required();
    h->add_option("--out,-o", deh.out, "output image")->required();
    h->add_option("--airlight", deh.airlight, "airlight r,g,b")->delimiter(',');
    h->add_option("--visibility", deh.visibility, "visibility in meters");
    h->add_option("--sidecar", deh.sidecar, "sidecar JSON with airlight/v_abs/epsilon");
    h->add_option("--epsilon", deh.epsilon, "minimal observable contrast");
    h->add_option("--t-min", deh.t_min, "transmission floor");
    h->add_flag("--clamp", deh.clamp, "floor low transmissions instead of failing");
    h->add_option("--report", [&deh](const std::vector<std::string>& v) { deh.report = v[0]; return true; },
                  "machine-readable report path");

    EvalDepthArgs ed;
    auto* e = app.add_subcommand("eval-depth", "depth error metrics against ground truth");
    e->add_option("--pred", ed.pred, "prediction file or directory");
    e->add_option("--gt", ed.gt, "ground truth file or directory");
    e->add_option("--pairs", ed.pairs_file, "JSON manifest listing {pred, gt} pairs");
    e->add_option("--min-depth", ed.min_depth, "lower clamp in meters");
    e->add_option("--max-depth", ed.max_depth, "upper clamp in meters");
    e->add_flag("--median-scaling", ed.median_scaling, "scale predictions by median(gt)/median(pred)");
    e->add_flag("--pred-is-range", ed.pred_is_range, "predictions are range maps; convert via intrinsics");
    e->add_option("--intrinsics", ed.intrinsics, "camera intrinsics JSON (for --pred-is-range)");
    e->add_option("--crop", ed.crop, "evaluation crop x,y,w,h")->delimiter(',')->expected(4);
    e->add_option("--depth-scale", ed.depth_scale, "raw-to-meters divisor for PNG16 depth");
    e->add_option("--report", [&ed](const std::vector<std::string>& v) { ed.report = v[0]; return true; },
                  "machine-readable report path");

    EvalScalarArgs es;
    auto* es_cmd = app.add_subcommand("eval-scalar", "RMSE/MAE/MAPE over a pred,gt CSV");
    es_cmd->add_option("--csv", es.csv, "CSV with header and columns pred,gt")->required();
    es_cmd->add_option("--report", [&es](const std::vector<std::string>& v) { es.report = v[0]; return true; },
                       "machine-readable report path");

    FitPm25Args fp;
    auto* f = app.add_subcommand("fit-pm25", "fit the polynomial visibility-to-PM2.5 model");
    f->add_option("--csv", fp.csv, "CSV: visibility,pm25,relative_humidity")->required();
    f->add_option("--order", fp.order, "polynomial order");
    f->add_option("--rh-bins", fp.rh_bins, "humidity bin edges (stratified fit)")->delimiter(',');
    f->add_option("--out,-o", fp.out, "model JSON output")->required();
    f->add_option("--report", [&fp](const std::vector<std::string>& v) { fp.report = v[0]; return true; },
                  "machine-readable report path");

    PredictPm25Args pp;
    auto* p = app.add_subcommand("predict-pm25", "evaluate a fitted PM2.5 model");
    p->add_option("--model", pp.model, "model JSON from fit-pm25")->required();
    p->add_option("--visibility", pp.visibility, "relative visibility in (0,1]")->required();
    p->add_option("--rh", pp.rh, "relative humidity (stratified models)");
    p->add_option("--report", [&pp](const std::vector<std::string>& v) { pp.report = v[0]; return true; },
                  "machine-readable report path");

    GradcheckArgs gc;
    auto* g = app.add_subcommand("gradcheck", "verify analytic objective gradients on a synthetic scene");
    g->add_option("--seed", gc.seed, "scene + sampling seed");
    g->add_option("--height", gc.height, "scene height");
    g->add_option("--width", gc.width, "scene width");
    g->add_option("--pixels", gc.pixels, "number of range pixels to check");
    g->add_option("--step", gc.step, "finite-difference step");
    g->add_option("--tolerance", gc.tolerance, "max relative error to pass");
    g->add_option("--report", [&gc](const std::vector<std::string>& v) { gc.report = v[0]; return true; },
                  "machine-readable report path");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& ex) {
        return app.exit(ex);
    } catch (const CLI::ParseError& ex) {
        app.exit(ex);
        return kExitInput;
    }

    try {
        if (*s) return cmd_synthesize(syn);
        if (*d) return cmd_decompose(dec);
        if (*h) return cmd_dehaze(deh);
        if (*e) return cmd_eval_depth(ed);
        if (*es_cmd) return cmd_eval_scalar(es);
        if (*f) return cmd_fit_pm25(fp);
        if (*p) return cmd_predict_pm25(pp);
        if (*g) return cmd_gradcheck(gc);
    } catch (const haze::IngestionError& ex) {
        std::cerr << "input error: " << ex.what() << "\n";
        return kExitInput;
    } catch (const std::invalid_argument& ex) {
        std::cerr << "input error: " << ex.what() << "\n";
        return kExitInput;
    } catch (const std::domain_error& ex) {
        std::cerr << "domain error: " << ex.what() << "\n";
        return kExitDomain;
    } catch (const std::filesystem::filesystem_error& ex) {
        std::cerr << "input error: " << ex.what() << "\n";
        return kExitInput;
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << "\n";
        return kExitInput;
    }
    return 0;
}
