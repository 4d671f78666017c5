#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agecal/csv.hpp"
#include "agecal/dataset.hpp"
#include "agecal/errors.hpp"
#include "agecal/gp.hpp"
#include "agecal/rng.hpp"

namespace agecal {

/// Desk-scale stand-in for a storage ageing campaign: Arrhenius in
/// temperature, affine in SOC, linear in time, with optional initial-rise and
/// knee artifacts plus Gaussian measurement noise.
struct SynthConfig {
    double pre_exponential = 5e4;    // percent/day; a few percent lost per 1000 days
    double activation_temp = 5000.0; // Kelvin (Ea/R lump)
    double soc_a0 = 0.3;
    double soc_a1 = 0.007;           // per percent SOC
    double noise_std = 0.05;         // percent
    double rise_amplitude = 0.0;     // percent; > 0 injects a Phase-1 bump
    double rise_duration = 100.0;    // days to the bump peak
    double knee_day = 0.0;           // <= 0 disables the knee
    double knee_slope_factor = 4.0;
    std::uint64_t seed = 42;
};

struct SynthCondition {
    double temp_c = 25.0;
    double soc = 50.0;
    double duration = 1000.0; // days
    double cadence = 28.0;    // days between characterizations
};

struct RateEntry {
    double temp_c = 0.0;
    double soc = 0.0;
    double rate_pct_per_day = 0.0;
};

struct SynthDataset {
    std::vector<CapacityCurve> cells;
    std::vector<StressProfile> profiles;
    std::vector<RateEntry> truth;
};

/// Phase-2 degradation rate in percent/day.
inline double synth_rate(const SynthConfig& cfg, double temp_kelvin, double soc) {
    const double rate = cfg.pre_exponential * std::exp(-cfg.activation_temp / temp_kelvin) *
                        (cfg.soc_a0 + cfg.soc_a1 * soc);
    if (!(rate > 0.0))
        throw ConfigError("synth: non-positive degradation rate at T=" +
                          std::to_string(temp_kelvin) + " K, SOC=" + std::to_string(soc));
    return rate;
}

namespace detail {

inline double synth_capacity_pct(const SynthConfig& cfg, double rate, double t) {
    double q = 100.0;
    if (cfg.knee_day > 0.0 && t > cfg.knee_day)
        q -= rate * cfg.knee_day + cfg.knee_slope_factor * rate * (t - cfg.knee_day);
    else
        q -= rate * t;
    if (cfg.rise_amplitude > 0.0) {
        const double s = t / cfg.rise_duration;
        q += cfg.rise_amplitude * s * std::exp(1.0 - s);
    }
    return q;
}

} // namespace detail

/// Static-condition campaign. Deterministic given the seed; condition i uses
/// the derived seed (seed + i). Returns the generating rates as the oracle.
inline SynthDataset generate_cells(const std::vector<SynthCondition>& conditions,
                                   const SynthConfig& cfg, int cells_per_condition = 3,
                                   const std::string& id_prefix = "C", int first_index = 1) {
    if (conditions.empty()) throw ConfigError("synth: no conditions");
    if (cells_per_condition < 1) throw ConfigError("synth: cells_per_condition must be >= 1");

    SynthDataset out;
    int cell_index = first_index;
    for (std::size_t ci = 0; ci < conditions.size(); ++ci) {
        const auto& cond = conditions[ci];
        const double temp_k = celsius_to_kelvin(cond.temp_c);
        const double rate = synth_rate(cfg, temp_k, cond.soc);
        out.truth.push_back(RateEntry{cond.temp_c, cond.soc, rate});

        Rng rng(cfg.seed + ci);
        for (int j = 0; j < cells_per_condition; ++j) {
            char idbuf[16];
            std::snprintf(idbuf, sizeof(idbuf), "%s%02d", id_prefix.c_str(), cell_index++);
            CapacityCurve curve;
            curve.cell_id = idbuf;
            for (double t = 0.0; t <= cond.duration + 1e-9; t += cond.cadence) {
                const double q =
                    detail::synth_capacity_pct(cfg, rate, t) + cfg.noise_std * rng.normal();
                curve.points.push_back({t, q / 100.0});
            }
            curve.validate();
            out.cells.push_back(curve);

            StressProfile prof;
            prof.cell_id = curve.cell_id;
            prof.segments.push_back(StressSegment{0.0, cond.duration, temp_k, cond.soc});
            prof.validate();
            out.profiles.push_back(prof);
        }
    }
    return out;
}

/// Dynamic-condition cells: the same law integrated over a piecewise-constant
/// profile, sampled at a fixed cadence. Rise/knee artifacts are not injected.
inline SynthDataset generate_dynamic_cells(const std::vector<StressProfile>& profiles,
                                           double cadence, const SynthConfig& cfg) {
    SynthDataset out;
    for (std::size_t pi = 0; pi < profiles.size(); ++pi) {
        const auto& prof = profiles[pi];
        prof.validate();
        Rng rng(cfg.seed + 9000 + pi);
        CapacityCurve curve;
        curve.cell_id = prof.cell_id;
        double q = 100.0;
        double t_prev = 0.0;
        for (double t = 0.0; t <= prof.end_day() + 1e-9; t += cadence) {
            // integrate the rate over [t_prev, t] across segment boundaries
            double s = t_prev;
            while (s < t) {
                const StressSegment& seg = prof.segment_at(s);
                const double sub_end = std::min(t, seg.day_end);
                q -= synth_rate(cfg, seg.temperature, seg.soc) * (sub_end - s);
                s = sub_end;
            }
            t_prev = t;
            curve.points.push_back({t, (q + cfg.noise_std * rng.normal()) / 100.0});
        }
        curve.validate();
        out.cells.push_back(curve);
        out.profiles.push_back(prof);
    }
    return out;
}

/// Draws y ~ N(0, K + sigma_n^2 I) at the given inputs through the Cholesky factor.
inline Eigen::VectorXd sample_from_prior(const std::vector<InputVector>& X,
                                         const Hyperparameters& h, std::uint64_t seed) {
    if (X.empty()) throw ParameterError("sample_from_prior: empty input set");
    const Eigen::MatrixXd Ky = kernel_matrix(X, h, true);
    double jitter_used = 0.0;
    const Eigen::MatrixXd L = detail::cholesky_with_jitter(Ky, 1e-8, jitter_used);
    Rng rng(seed);
    Eigen::VectorXd z(static_cast<Eigen::Index>(X.size()));
    for (Eigen::Index i = 0; i < z.size(); ++i) z[i] = rng.normal();
    return L.triangularView<Eigen::Lower>() * z;
}

// ---------------------------------------------------------------------------
// default desk-scale campaign: the 10-condition static matrix plus two
// dynamically cycled cells

inline std::vector<SynthCondition> default_static_conditions(double duration = 1000.0,
                                                             double cadence = 28.0) {
    std::vector<SynthCondition> conds;
    const std::vector<std::pair<double, double>> matrix = {
        {25.0, 50.0}, {25.0, 80.0},
        {35.0, 20.0}, {35.0, 35.0}, {35.0, 50.0}, {35.0, 65.0}, {35.0, 80.0}, {35.0, 100.0},
        {45.0, 50.0}, {45.0, 80.0}};
    for (const auto& [t, s] : matrix) conds.push_back(SynthCondition{t, s, duration, cadence});
    return conds;
}

/// Two storage schedules that revisit the full 15-45 degC window in 46-day
/// legs; the whole temperature range has been seen by day 368, the natural
/// model-update point.
inline std::vector<StressProfile> default_dynamic_profiles() {
    const auto build = [](const std::string& id,
                          const std::vector<std::pair<double, double>>& legs, double leg_days,
                          double tail_end) {
        StressProfile p;
        p.cell_id = id;
        double t = 0.0;
        for (const auto& [temp_c, soc] : legs) {
            p.segments.push_back(
                StressSegment{t, t + leg_days, celsius_to_kelvin(temp_c), soc});
            t += leg_days;
        }
        p.segments.push_back(StressSegment{t, tail_end, celsius_to_kelvin(35.0), 65.0});
        p.validate();
        return p;
    };

    const std::vector<std::pair<double, double>> first = {
        {35.0, 100.0}, {25.0, 80.0}, {45.0, 50.0}, {15.0, 35.0},
        {35.0, 20.0},  {25.0, 50.0}, {15.0, 100.0}, {45.0, 80.0}};
    std::vector<std::pair<double, double>> d31 = first;
    // second pass through the same window in a different order
    const std::vector<std::pair<double, double>> second = {
        {25.0, 80.0}, {35.0, 100.0}, {15.0, 35.0}, {45.0, 50.0},
        {25.0, 50.0}, {35.0, 20.0},  {45.0, 80.0}, {15.0, 100.0}};
    d31.insert(d31.end(), second.begin(), second.end());

    const std::vector<std::pair<double, double>> d32_first = {
        {35.0, 80.0}, {15.0, 100.0}, {25.0, 50.0}, {45.0, 80.0},
        {35.0, 35.0}, {15.0, 35.0},  {25.0, 80.0}, {45.0, 50.0}};
    std::vector<std::pair<double, double>> d32 = d32_first;
    d32.insert(d32.end(), d32_first.begin(), d32_first.end()); // conditions repeat after day 368

    return {build("D31", d31, 46.0, 1012.0), build("D32", d32, 46.0, 1012.0)};
}

struct DefaultDatasetOptions {
    double duration = 1000.0;
    double cadence = 28.0;
    int cells_per_condition = 3;
    bool include_dynamic = true;
};

inline SynthDataset generate_default_dataset(const SynthConfig& cfg,
                                             const DefaultDatasetOptions& opt = {}) {
    SynthDataset out = generate_cells(default_static_conditions(opt.duration, opt.cadence), cfg,
                                      opt.cells_per_condition);
    if (opt.include_dynamic) {
        const SynthDataset dyn = generate_dynamic_cells(default_dynamic_profiles(), opt.cadence, cfg);
        out.cells.insert(out.cells.end(), dyn.cells.begin(), dyn.cells.end());
        out.profiles.insert(out.profiles.end(), dyn.profiles.begin(), dyn.profiles.end());
    }
    return out;
}

inline std::string truth_to_csv(const std::vector<RateEntry>& truth) {
    std::string out = "temp_c,soc_pct,rate_pct_per_day\n";
    for (const auto& r : truth)
        out += format_full(r.temp_c) + "," + format_full(r.soc) + "," +
               format_full(r.rate_pct_per_day) + "\n";
    return out;
}

} // namespace agecal
