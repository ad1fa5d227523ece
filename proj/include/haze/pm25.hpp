#pragma once

#include <cmath>
#include <fstream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "json.hpp"

#include "haze/errors.hpp"
#include "haze/metrics.hpp"

namespace haze {

/// One calibration point: relative visibility in (0,1], PM2.5 mass
/// concentration in ug/m^3, relative humidity in [0,1].
struct Pm25Sample {
    double visibility = 0.0;
    double pm25 = 0.0;
    double relative_humidity = 0.0;

    void validate() const {
        if (!(visibility > 0.0 && visibility <= 1.0))
            throw std::domain_error("Pm25Sample: visibility must lie in (0,1]");
        if (!(pm25 >= 0.0)) throw std::domain_error("Pm25Sample: pm25 must be non-negative");
        if (!(relative_humidity >= 0.0 && relative_humidity <= 1.0))
            throw std::domain_error("Pm25Sample: relative humidity must lie in [0,1]");
    }
};

/// Polynomial concentration model: pm25(V) = sum_i c_i V^i.
struct Pm25Model {
    std::vector<double> coefficients;  // c_0 .. c_k
    int order = 0;
    /// Humidity bin this model was fitted on; [0,1] when unstratified.
    double rh_lo = 0.0;
    double rh_hi = 1.0;
    ScalarErrorReport training_error;
    std::size_t sample_count = 0;
};

struct Pm25Prediction {
    double value = 0.0;
    /// Raw polynomial dipped below zero and was clamped.
    bool clamped_negative = false;
};

/// Horner evaluation of the fitted polynomial, clamped at zero.
inline Pm25Prediction predict_pm25(const Pm25Model& model, double visibility) {
    if (!(visibility > 0.0 && visibility <= 1.0))
        throw std::domain_error("predict_pm25: visibility must lie in (0,1]");
    if (model.coefficients.empty()) throw std::domain_error("predict_pm25: empty model");
    double y = 0.0;
    for (auto it = model.coefficients.rbegin(); it != model.coefficients.rend(); ++it)
        y = y * visibility + *it;
    Pm25Prediction p;
    p.clamped_negative = y < 0.0;
    p.value = p.clamped_negative ? 0.0 : y;
    return p;
}

/// Least-squares polynomial fit of degree `order` via column-pivoted QR of
/// the Vandermonde matrix. Requires at least order+1 samples with distinct
/// visibilities.
inline Pm25Model fit_pm25(const std::vector<Pm25Sample>& samples, int order) {
    if (order < 0) throw std::invalid_argument("fit_pm25: order must be non-negative");
    const int cols = order + 1;
    if (static_cast<int>(samples.size()) < cols)
        throw SingularFitError("fit_pm25: need at least " + std::to_string(cols) + " samples, got " +
                               std::to_string(samples.size()));
    for (const auto& s : samples) s.validate();

    Eigen::MatrixXd vmat(samples.size(), cols);
    Eigen::VectorXd rho(samples.size());
    for (std::size_t i = 0; i < samples.size(); ++i) {
        double pw = 1.0;
        for (int j = 0; j < cols; ++j) {
            vmat(static_cast<Eigen::Index>(i), j) = pw;
            pw *= samples[i].visibility;
        }
        rho(static_cast<Eigen::Index>(i)) = samples[i].pm25;
    }

    Eigen::ColPivHouseholderQR<Eigen::MatrixXd> qr(vmat);
    qr.setThreshold(1e-10);
    if (qr.rank() < cols)
        throw SingularFitError("fit_pm25: rank-deficient Vandermonde system (duplicate "
                               "visibilities or too little spread) for order " +
                               std::to_string(order));
    const Eigen::VectorXd c = qr.solve(rho);

    Pm25Model m;
    m.order = order;
    m.coefficients.assign(c.data(), c.data() + cols);
    m.sample_count = samples.size();

    std::vector<double> preds, gts;
    preds.reserve(samples.size());
    gts.reserve(samples.size());
    bool any_zero_gt = false;
    for (const auto& s : samples) {
        double y = 0.0;
        for (auto it = m.coefficients.rbegin(); it != m.coefficients.rend(); ++it)
            y = y * s.visibility + *it;
        preds.push_back(y);
        gts.push_back(s.pm25);
        any_zero_gt |= s.pm25 == 0.0;
    }
    if (!any_zero_gt) {
        m.training_error = eval_scalar(preds, gts);
    } else {
        // MAPE undefined; keep RMSE/MAE only.
        double sq = 0.0, ab = 0.0;
        for (std::size_t i = 0; i < preds.size(); ++i) {
            const double d = preds[i] - gts[i];
            sq += d * d;
            ab += std::abs(d);
        }
        m.training_error.rmse = std::sqrt(sq / preds.size());
        m.training_error.mae = ab / preds.size();
        m.training_error.mape = std::numeric_limits<double>::quiet_NaN();
    }
    return m;
}

struct StratifiedFitResult {
    std::vector<Pm25Model> models;
    /// Bins skipped for lack of samples, as "[lo,hi): n" strings.
    std::vector<std::string> warnings;
    /// Samples falling outside every bin (e.g. RH exactly 1 with bins ending
    /// at a half-open 1).
    std::size_t unassigned_samples = 0;
};

/// One fit per humidity bin; bins are half-open [lo, hi) over strictly
/// increasing edges. Underpopulated bins are skipped with a warning record.
inline StratifiedFitResult stratified_fit(const std::vector<Pm25Sample>& samples,
                                          const std::vector<double>& bin_edges, int order) {
    if (bin_edges.size() < 2) throw std::invalid_argument("stratified_fit: need >= 2 bin edges");
    for (std::size_t i = 0; i + 1 < bin_edges.size(); ++i)
        if (!(bin_edges[i] < bin_edges[i + 1]))
            throw std::invalid_argument("stratified_fit: bin edges must be strictly increasing");
    if (!(bin_edges.front() >= 0.0 && bin_edges.back() <= 1.0 + 1e-12))
        throw std::invalid_argument("stratified_fit: bin edges must lie within [0,1]");

    StratifiedFitResult out;
    std::size_t assigned = 0;
    for (std::size_t b = 0; b + 1 < bin_edges.size(); ++b) {
        const double lo = bin_edges[b], hi = bin_edges[b + 1];
        std::vector<Pm25Sample> bin;
        for (const auto& s : samples)
            if (s.relative_humidity >= lo && s.relative_humidity < hi) bin.push_back(s);
        assigned += bin.size();
        if (static_cast<int>(bin.size()) < order + 1) {
            std::ostringstream oss;
            oss << "[" << lo << "," << hi << "): " << bin.size() << " samples, need " << order + 1;
            out.warnings.push_back(oss.str());
            continue;
        }
        try {
            Pm25Model m = fit_pm25(bin, order);
            m.rh_lo = lo;
            m.rh_hi = hi;
            out.models.push_back(std::move(m));
        } catch (const SingularFitError& e) {
            std::ostringstream oss;
            oss << "[" << lo << "," << hi << "): " << e.what();
            out.warnings.push_back(oss.str());
        }
    }
    out.unassigned_samples = samples.size() - assigned;
    return out;
}

// ---------------------------------------------------------------------------
// CSV ingestion and model serialization.
// ---------------------------------------------------------------------------

/// Reads samples from CSV with header columns visibility, pm25,
/// relative_humidity (in that order).
inline std::vector<Pm25Sample> read_pm25_csv(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw IngestionError("cannot open: " + path);
    std::string line;
    if (!std::getline(in, line)) throw IngestionError("empty CSV: " + path);

    std::vector<Pm25Sample> samples;
    std::vector<std::string> bad;
    int lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string a, b, c;
        if (!std::getline(ss, a, ',') || !std::getline(ss, b, ',') || !std::getline(ss, c, ',')) {
            bad.push_back(path + ":" + std::to_string(lineno) + ": expected 3 columns");
            continue;
        }
        try {
            Pm25Sample s{std::stod(a), std::stod(b), std::stod(c)};
            s.validate();
            samples.push_back(s);
        } catch (const std::exception& e) {
            bad.push_back(path + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    if (!bad.empty()) throw IngestionError("bad CSV rows", bad);
    return samples;
}

inline nlohmann::json pm25_model_to_json(const Pm25Model& m) {
    return nlohmann::json{{"order", m.order},
                          {"coefficients", m.coefficients},
                          {"rh_lo", m.rh_lo},
                          {"rh_hi", m.rh_hi},
                          {"sample_count", m.sample_count},
                          {"training_error",
                           {{"rmse", m.training_error.rmse},
                            {"mae", m.training_error.mae},
                            {"mape", std::isnan(m.training_error.mape)
                                         ? nlohmann::json()
                                         : nlohmann::json(m.training_error.mape)}}}};
}

inline Pm25Model pm25_model_from_json(const nlohmann::json& j) {
    Pm25Model m;
    m.order = j.at("order").get<int>();
    m.coefficients = j.at("coefficients").get<std::vector<double>>();
    m.rh_lo = j.value("rh_lo", 0.0);
    m.rh_hi = j.value("rh_hi", 1.0);
    m.sample_count = j.value("sample_count", std::size_t{0});
    if (j.contains("training_error")) {
        const auto& t = j["training_error"];
        m.training_error.rmse = t.value("rmse", 0.0);
        m.training_error.mae = t.value("mae", 0.0);
        m.training_error.mape =
            t.contains("mape") && !t["mape"].is_null() ? t["mape"].get<double>()
                                                       : std::numeric_limits<double>::quiet_NaN();
    }
    if (m.coefficients.size() != static_cast<std::size_t>(m.order) + 1)
        throw IngestionError("pm25 model: coefficient count does not match order");
    return m;
}

}  // namespace haze
