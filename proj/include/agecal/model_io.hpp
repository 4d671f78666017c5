#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "agecal/csv.hpp"
#include "agecal/gp.hpp"

namespace agecal {

inline constexpr int kModelFormatVersion = 1;

/// Serializes a fitted model as versioned JSON. Doubles round-trip exactly, so
/// a reloaded model reproduces predictions bit-identically.
inline std::string model_to_json(const GpModel& model) {
    nlohmann::json j;
    j["format_version"] = kModelFormatVersion;
    j["hyperparameters"] = {{"theta_t", model.h.theta_t},
                            {"theta_soc", model.h.theta_soc},
                            {"theta_dt", model.h.theta_dt},
                            {"sigma_f2", model.h.sigma_f2},
                            {"sigma_n2", model.h.sigma_n2}};
    j["pinned"] = std::vector<std::string>(model.h.pinned.begin(), model.h.pinned.end());
    nlohmann::json rows = nlohmann::json::array();
    for (const auto& r : training_rows_of(model))
        rows.push_back({{"dt_days", r.dt},
                        {"inv_temp_per_k", r.inv_temp},
                        {"soc_pct", r.soc},
                        {"dq_pct", r.dq}});
    j["training_rows"] = std::move(rows);
    j["jitter_used"] = model.jitter_used;
    j["log_marginal_likelihood"] = model.lml;
    j["fit_seed"] = model.fit_seed;
    return j.dump(2) + "\n";
}

inline void save_model(const std::filesystem::path& path, const GpModel& model) {
    write_file_atomic(path, model_to_json(model));
}

inline GpModel model_from_json(const std::string& text) {
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(std::string("model file: ") + e.what());
    }
    if (!j.contains("format_version") || j["format_version"].get<int>() != kModelFormatVersion)
        throw ParseError("model file: missing or unsupported format_version");

    Hyperparameters h;
    const auto& jh = j.at("hyperparameters");
    h.theta_t = jh.at("theta_t").get<double>();
    h.theta_soc = jh.at("theta_soc").get<double>();
    h.theta_dt = jh.at("theta_dt").get<double>();
    h.sigma_f2 = jh.at("sigma_f2").get<double>();
    h.sigma_n2 = jh.at("sigma_n2").get<double>();
    for (const auto& p : j.at("pinned")) h.pinned.insert(p.get<std::string>());

    std::vector<TrainingRow> rows;
    for (const auto& jr : j.at("training_rows")) {
        TrainingRow r;
        r.dt = jr.at("dt_days").get<double>();
        r.inv_temp = jr.at("inv_temp_per_k").get<double>();
        r.soc = jr.at("soc_pct").get<double>();
        r.dq = jr.at("dq_pct").get<double>();
        r.validate();
        rows.push_back(r);
    }
    if (rows.empty()) throw ParseError("model file: no training rows");

    GpModel model = assemble_model(rows, h, j.at("fit_seed").get<std::uint64_t>());
    return model;
}

inline GpModel load_model(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open model file: " + path.string());
    std::string text((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
    return model_from_json(text);
}

} // namespace agecal
