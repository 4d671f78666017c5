#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include "agecal/csv.hpp"
#include "agecal/dataset.hpp"
#include "agecal/forecast.hpp"
#include "agecal/gp.hpp"
#include "agecal/metrics.hpp"
#include "agecal/preprocess.hpp"

namespace agecal {

/// A static storage condition of the test matrix.
struct Condition {
    double temp_c = 0.0;
    double soc = 0.0;

    friend bool operator<(const Condition& a, const Condition& b) {
        return a.temp_c != b.temp_c ? a.temp_c < b.temp_c : a.soc < b.soc;
    }
    friend bool operator==(const Condition& a, const Condition& b) {
        return a.temp_c == b.temp_c && a.soc == b.soc;
    }
};

struct TrainingCase {
    int case_id = 0;
    std::vector<Condition> conditions;

    bool contains(const Condition& c) const {
        return std::find(conditions.begin(), conditions.end(), c) != conditions.end();
    }
};

/// The incremental study: temperature coverage completes first (cases 1-2),
/// then SOC levels arrive one by one (50, 100, 20, 65, 35).
inline std::vector<TrainingCase> builtin_cases() {
    std::vector<TrainingCase> cases;
    std::vector<Condition> conds = {{25.0, 80.0}, {45.0, 80.0}};
    const auto push = [&](int id) { cases.push_back(TrainingCase{id, conds}); };
    push(1);
    conds.push_back({35.0, 80.0});
    push(2);
    conds.push_back({25.0, 50.0});
    conds.push_back({35.0, 50.0});
    conds.push_back({45.0, 50.0});
    push(3);
    conds.push_back({35.0, 100.0});
    push(4);
    conds.push_back({35.0, 20.0});
    push(5);
    conds.push_back({35.0, 65.0});
    push(6);
    conds.push_back({35.0, 35.0});
    push(7);
    return cases;
}

/// Raw input bundle for the harness.
struct Dataset {
    std::vector<CapacityCurve> cells;
    std::vector<StressProfile> profiles;

    const StressProfile& profile_for(const std::string& cell_id) const {
        for (const auto& p : profiles)
            if (p.cell_id == cell_id) return p;
        throw DataError("no stress profile for cell '" + cell_id + "'");
    }
};

/// Condition of a static (single-segment) profile; empty for dynamic profiles.
inline std::optional<Condition> static_condition_of(const StressProfile& p) {
    if (!p.is_static()) return std::nullopt;
    return Condition{kelvin_to_celsius(p.segments.front().temperature), p.segments.front().soc};
}

struct CellMetrics {
    std::string cell_id;
    std::string split; // training | validation | dynamic
    bool has_dq = false;
    bool has_q = false;
    double mae_dq = 0.0, rmse_dq = 0.0, cs_dq = 0.0;
    double mae_q = 0.0, rmse_q = 0.0, cs_q = 0.0;
};

struct SplitSummary {
    int cells_dq = 0;
    int cells_q = 0;
    double mae_dq = 0.0, rmse_dq = 0.0, cs_dq = 0.0;
    double mae_q = 0.0, rmse_q = 0.0, cs_q = 0.0;
};

/// Unweighted mean of the per-cell metric values.
inline SplitSummary summarize(const std::vector<CellMetrics>& cells) {
    SplitSummary s;
    for (const auto& c : cells) {
        if (c.has_dq) {
            ++s.cells_dq;
            s.mae_dq += c.mae_dq;
            s.rmse_dq += c.rmse_dq;
            s.cs_dq += c.cs_dq;
        }
        if (c.has_q) {
            ++s.cells_q;
            s.mae_q += c.mae_q;
            s.rmse_q += c.rmse_q;
            s.cs_q += c.cs_q;
        }
    }
    if (s.cells_dq > 0) {
        s.mae_dq /= s.cells_dq;
        s.rmse_dq /= s.cells_dq;
        s.cs_dq /= s.cells_dq;
    }
    if (s.cells_q > 0) {
        s.mae_q /= s.cells_q;
        s.rmse_q /= s.cells_q;
        s.cs_q /= s.cells_q;
    }
    return s;
}

/// Per-cell evaluation of a fitted model: windowed losses against the cell's
/// own rows, and the open-loop capacity forecast against the measured curve.
/// Observation noise enters the dq sigma (measured losses are noisy); the
/// capacity band stays the accumulated latent variance.
inline CellMetrics evaluate_cell(const GpModel& model, const PreprocessedCell& pre,
                                 const StressProfile& profile,
                                 const std::vector<double>& windows = default_windows(),
                                 double step = 30.0) {
    CellMetrics m;
    m.cell_id = pre.rebased.cell_id;

    if (pre.linear_decline.points.size() >= 2) {
        const auto rows = build_training_rows(pre.linear_decline, profile, windows);
        if (!rows.empty()) {
            std::vector<InputVector> Xs;
            for (const auto& r : rows) Xs.push_back(input_of(r));
            const Posterior post = predict(model, Xs, false);
            std::vector<EvalPair> pairs;
            for (std::size_t i = 0; i < rows.size(); ++i) {
                const auto idx = static_cast<Eigen::Index>(i);
                pairs.push_back(EvalPair{post.mean[idx], rows[i].dq,
                                         std::sqrt(post.var[idx] + model.h.sigma_n2)});
            }
            m.has_dq = true;
            m.mae_dq = mae(pairs);
            m.rmse_dq = rmse(pairs);
            m.cs_dq = calibration_score_2sigma(pairs);
        }

        const double span = pre.linear_decline.last_day();
        if (span >= step) {
            const double horizon = std::floor(span / step + 1e-9) * step;
            const CapacityForecast fc = forecast_curve(model, profile, horizon, step);
            std::vector<EvalPair> pairs;
            for (const auto& p : pre.linear_decline.points) {
                if (p.day <= 0.0 || p.day > horizon) continue;
                pairs.push_back(EvalPair{forecast_mean_at(fc, p.day), 100.0 * p.capacity,
                                         forecast_sigma_at(fc, p.day)});
            }
            if (!pairs.empty()) {
                m.has_q = true;
                m.mae_q = mae(pairs);
                m.rmse_q = rmse(pairs);
                m.cs_q = calibration_score_2sigma(pairs);
            }
        }
    }
    return m;
}

struct CaseReport {
    int case_id = 0;
    std::vector<CellMetrics> cells;
    SplitSummary training;
    SplitSummary validation;
    SplitSummary all;
    Hyperparameters hyperparameters;
    Relevance relevance_shares;
    bool pinned_soc = false;
    std::uint64_t seed_used = 0;
    std::vector<std::string> skipped; // "cell_id: reason"
};

struct CaseRun {
    CaseReport report;
    GpModel model;
};

/// Fits the case's training conditions and evaluates every static cell.
/// theta_soc is pinned automatically while the training set holds a single
/// SOC level, mirroring the hindered-optimization treatment of the early
/// cases.
inline CaseRun run_case(const TrainingCase& tcase, const Dataset& data, const FitConfig& fit_cfg,
                        const PreprocessConfig& pre_cfg = {}, double step = 30.0) {
    struct Usable {
        const CapacityCurve* raw;
        const StressProfile* profile;
        Condition condition;
        PreprocessedCell pre;
    };
    std::vector<Usable> usable;
    std::vector<std::string> skipped;
    for (const auto& cell : data.cells) {
        const StressProfile& prof = data.profile_for(cell.cell_id);
        const auto cond = static_condition_of(prof);
        if (!cond) continue; // dynamic cells belong to the update experiment
        try {
            usable.push_back(Usable{&cell, &prof, *cond, preprocess_cell(cell, pre_cfg)});
        } catch (const DataError& e) {
            skipped.push_back(cell.cell_id + ": " + e.what());
        }
    }

    std::vector<std::string> missing;
    for (const auto& c : tcase.conditions) {
        const bool present = std::any_of(usable.begin(), usable.end(),
                                         [&](const Usable& u) { return u.condition == c; });
        if (!present)
            missing.push_back("(" + format_sig6(c.temp_c) + " C, " + format_sig6(c.soc) + "%)");
    }
    if (!missing.empty()) {
        std::string list;
        for (const auto& s : missing) list += (list.empty() ? "" : ", ") + s;
        throw CoverageError("case " + std::to_string(tcase.case_id) +
                            ": no usable cells for conditions " + list);
    }

    std::vector<TrainingRow> rows;
    std::set<double> train_socs;
    for (const auto& u : usable) {
        if (!tcase.contains(u.condition)) continue;
        if (u.pre.linear_decline.points.size() < 2) continue; // nothing modelable survived
        const StressProfile shifted = shift_profile(*u.profile, u.pre.day_offset);
        const auto cell_rows =
            build_training_rows(u.pre.linear_decline, shifted, pre_cfg.windows);
        rows.insert(rows.end(), cell_rows.begin(), cell_rows.end());
        for (const auto& r : cell_rows) train_socs.insert(r.soc);
    }

    FitConfig cfg = fit_cfg;
    cfg.seed = fit_cfg.seed + static_cast<std::uint64_t>(tcase.case_id);
    std::set<std::string> pinned;
    const bool pin_soc = train_socs.size() <= 1;
    if (pin_soc) pinned.insert("theta_soc");

    CaseRun run;
    run.model = fit(rows, cfg, pinned);

    run.report.case_id = tcase.case_id;
    run.report.hyperparameters = run.model.h;
    run.report.relevance_shares = relevance(run.model);
    run.report.pinned_soc = pin_soc;
    run.report.seed_used = cfg.seed;
    run.report.skipped = skipped;

    std::vector<CellMetrics> train_cells, val_cells;
    for (const auto& u : usable) {
        const StressProfile shifted = shift_profile(*u.profile, u.pre.day_offset);
        CellMetrics m = evaluate_cell(run.model, u.pre, shifted, pre_cfg.windows, step);
        m.split = tcase.contains(u.condition) ? "training" : "validation";
        (m.split == "training" ? train_cells : val_cells).push_back(m);
        run.report.cells.push_back(std::move(m));
    }
    run.report.training = summarize(train_cells);
    run.report.validation = summarize(val_cells);
    std::vector<CellMetrics> all_cells = train_cells;
    all_cells.insert(all_cells.end(), val_cells.begin(), val_cells.end());
    run.report.all = summarize(all_cells);
    return run;
}

// ---------------------------------------------------------------------------
// dynamic-profile update experiment

struct SweepSet {
    std::vector<SweepPoint> temperature; // at 80% SOC
    std::map<double, std::vector<SweepPoint>> soc_by_temp_c; // at 15/25/35/45 degC
};

inline SweepSet standard_sweeps(const GpModel& model, double dt) {
    SweepSet out;
    std::vector<double> temp_grid;
    for (double t = -30.0; t <= 55.0 + 1e-9; t += 1.0) temp_grid.push_back(t);
    out.temperature = stddev_sweep(model, SweepAxis::Temperature, 80.0, temp_grid, dt);
    std::vector<double> soc_grid;
    for (double s = 0.0; s <= 100.0 + 1e-9; s += 1.0) soc_grid.push_back(s);
    for (double t : {15.0, 25.0, 35.0, 45.0})
        out.soc_by_temp_c[t] = stddev_sweep(model, SweepAxis::Soc, t, soc_grid, dt);
    return out;
}

struct DynamicUpdateReport {
    std::vector<CellMetrics> before;
    std::vector<CellMetrics> after;
    SweepSet sweeps_before;
    SweepSet sweeps_after;
    std::size_t new_rows = 0;
    GpModel updated;
};

/// Evaluates the model on the dynamically cycled cells, folds the rows
/// observed up to update_day into the training set, and re-evaluates,
/// emitting the before/after confidence sweeps.
inline DynamicUpdateReport run_dynamic_update(const GpModel& model, const Dataset& dynamic_data,
                                              double update_day, bool refit,
                                              const FitConfig& fit_cfg,
                                              const PreprocessConfig& pre_cfg = {},
                                              double step = 30.0) {
    struct Prepared {
        const StressProfile* profile;
        PreprocessedCell pre;
    };
    std::vector<Prepared> prepared;
    double last_observed = 0.0;
    for (const auto& cell : dynamic_data.cells) {
        const StressProfile& prof = dynamic_data.profile_for(cell.cell_id);
        prepared.push_back(Prepared{&prof, preprocess_cell(cell, pre_cfg)});
        last_observed = std::max(last_observed, prepared.back().pre.rebased.last_day());
    }
    if (prepared.empty()) throw DataError("dynamic update: no cells");
    if (update_day > last_observed)
        throw RangeError("dynamic update: update day " + std::to_string(update_day) +
                         " beyond the observed span " + std::to_string(last_observed));

    DynamicUpdateReport rep;
    for (const auto& p : prepared) {
        const StressProfile shifted = shift_profile(*p.profile, p.pre.day_offset);
        CellMetrics m = evaluate_cell(model, p.pre, shifted, pre_cfg.windows, step);
        m.split = "dynamic";
        rep.before.push_back(std::move(m));
    }
    rep.sweeps_before = standard_sweeps(model, step);

    std::vector<TrainingRow> new_rows;
    for (const auto& p : prepared) {
        CapacityCurve early;
        early.cell_id = p.pre.linear_decline.cell_id;
        for (const auto& pt : p.pre.linear_decline.points)
            if (pt.day <= update_day) early.points.push_back(pt);
        if (early.points.size() < 2) continue; // not enough observations before the update point
        const StressProfile shifted = shift_profile(*p.profile, p.pre.day_offset);
        const auto rows = build_training_rows(early, shifted, pre_cfg.windows);
        new_rows.insert(new_rows.end(), rows.begin(), rows.end());
    }
    rep.new_rows = new_rows.size();

    rep.updated = update_model(model, new_rows, refit, fit_cfg);
    for (const auto& p : prepared) {
        const StressProfile shifted = shift_profile(*p.profile, p.pre.day_offset);
        CellMetrics m = evaluate_cell(rep.updated, p.pre, shifted, pre_cfg.windows, step);
        m.split = "dynamic";
        rep.after.push_back(std::move(m));
    }
    rep.sweeps_after = standard_sweeps(rep.updated, step);
    return rep;
}

// ---------------------------------------------------------------------------
// report emission

/// Per-cell evaluation rows in the report schema.
inline std::string cell_metrics_to_csv(const std::vector<CellMetrics>& cells) {
    std::string out = "cell_id,metric,quantity,value\n";
    for (const auto& c : cells) {
        const auto emit = [&](const char* metric, const char* quantity, double v) {
            out += c.cell_id + "," + metric + "," + quantity + "," + format_sig6(v) + "\n";
        };
        if (c.has_dq) {
            emit("mae", "dq", c.mae_dq);
            emit("rmse", "dq", c.rmse_dq);
            emit("cs2sigma", "dq", c.cs_dq);
        }
        if (c.has_q) {
            emit("mae", "q", c.mae_q);
            emit("rmse", "q", c.rmse_q);
            emit("cs2sigma", "q", c.cs_q);
        }
    }
    return out;
}

inline std::string splits_to_csv(const std::vector<CellMetrics>& cells) {
    std::string out = "cell_id,split\n";
    for (const auto& c : cells) out += c.cell_id + "," + c.split + "\n";
    return out;
}

inline std::string relevance_to_csv(const Relevance& r) {
    return "factor,share\ntemperature," + format_sig6(r.temperature) + "\nsoc," +
           format_sig6(r.soc) + "\n";
}

/// Study summary in the per-case/per-split layout of the results appendix.
inline std::string case_summaries_to_csv(const std::vector<CaseReport>& reports) {
    std::string out = "case_id,split,quantity,mae,rmse,cs2sigma\n";
    for (const auto& rep : reports) {
        const auto emit = [&](const char* split, const SplitSummary& s) {
            const std::string id = std::to_string(rep.case_id);
            if (s.cells_dq > 0)
                out += id + "," + split + ",dq," + format_sig6(s.mae_dq) + "," +
                       format_sig6(s.rmse_dq) + "," + format_sig6(s.cs_dq) + "\n";
            else
                out += id + "," + split + ",dq,,,\n";
            if (s.cells_q > 0)
                out += id + "," + split + ",q," + format_sig6(s.mae_q) + "," +
                       format_sig6(s.rmse_q) + "," + format_sig6(s.cs_q) + "\n";
            else
                out += id + "," + split + ",q,,,\n";
        };
        emit("training", rep.training);
        emit("validation", rep.validation);
        emit("all", rep.all);
    }
    return out;
}

} // namespace agecal
