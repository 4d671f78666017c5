// agecal: calendar-ageing model toolkit.
//
// Subcommands cover the full workflow: synthetic campaign generation,
// preprocessing of capacity curves into training rows, GP training,
// capacity forecasting, evaluation, confidence sweeps, relevance
// inspection, the incremental training-case study, and model updating.

#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "agecal/cases.hpp"
#include "agecal/config.hpp"
#include "agecal/csv.hpp"
#include "agecal/dataset.hpp"
#include "agecal/forecast.hpp"
#include "agecal/gp.hpp"
#include "agecal/metrics.hpp"
#include "agecal/model_io.hpp"
#include "agecal/preprocess.hpp"
#include "agecal/synth.hpp"

namespace fs = std::filesystem;
using namespace agecal;

namespace {

std::uint64_t effective_seed(std::uint64_t cli_seed) {
    if (const char* env = std::getenv("AGECAL_SEED")) {
        return static_cast<std::uint64_t>(
            parse_double(env, "environment variable AGECAL_SEED"));
    }
    return cli_seed;
}

void sort_cells(std::vector<CapacityCurve>& cells) {
    std::sort(cells.begin(), cells.end(),
              [](const CapacityCurve& a, const CapacityCurve& b) { return a.cell_id < b.cell_id; });
}

void sort_profiles(std::vector<StressProfile>& profiles) {
    std::sort(profiles.begin(), profiles.end(),
              [](const StressProfile& a, const StressProfile& b) { return a.cell_id < b.cell_id; });
}

std::vector<double> parse_grid(const std::string& spec) {
    const auto c1 = spec.find(':');
    const auto c2 = spec.find(':', c1 + 1);
    if (c1 == std::string::npos || c2 == std::string::npos)
        throw ConfigError("grid spec must be lo:hi:n, got '" + spec + "'");
    const double lo = parse_double(spec.substr(0, c1), "grid lo");
    const double hi = parse_double(spec.substr(c1 + 1, c2 - c1 - 1), "grid hi");
    const int n = static_cast<int>(parse_double(spec.substr(c2 + 1), "grid n"));
    if (n < 1 || hi < lo) throw ConfigError("grid spec must satisfy lo <= hi, n >= 1");
    std::vector<double> grid;
    if (n == 1) {
        grid.push_back(lo);
    } else {
        for (int i = 0; i < n; ++i)
            grid.push_back(lo + (hi - lo) * static_cast<double>(i) / (n - 1));
    }
    return grid;
}

PreprocessConfig preprocess_config_from(const ConfigMap& file_cfg) {
    PreprocessConfig cfg;
    cfg.segmentation.knee_run = config_int(file_cfg, "knee_run", cfg.segmentation.knee_run);
    cfg.segmentation.slow_run = config_int(file_cfg, "slow_run", cfg.segmentation.slow_run);
    cfg.segmentation.knee_factor =
        config_double(file_cfg, "knee_factor", cfg.segmentation.knee_factor);
    cfg.segmentation.slow_factor =
        config_double(file_cfg, "slow_factor", cfg.segmentation.slow_factor);
    cfg.z_thresh = config_double(file_cfg, "z_thresh", cfg.z_thresh);
    cfg.windows = config_double_list(file_cfg, "windows", cfg.windows);
    return cfg;
}

struct PreprocessFlags {
    std::string config_path;
    std::optional<double> knee_factor, slow_factor, z_thresh;
    std::optional<int> knee_run, slow_run;
    std::string windows;

    void attach(CLI::App* cmd) {
        cmd->add_option("--config", config_path, "key=value config file");
        cmd->add_option("--knee-factor", knee_factor, "knee detection slope factor");
        cmd->add_option("--slow-factor", slow_factor, "slowdown detection slope factor");
        cmd->add_option("--knee-run", knee_run, "consecutive steep intervals opening the knee");
        cmd->add_option("--slow-run", slow_run, "consecutive shallow intervals opening the slowdown");
        cmd->add_option("--z-thresh", z_thresh, "outlier z-score threshold");
        cmd->add_option("--windows", windows, "comma-separated training windows [days]");
    }

    PreprocessConfig resolve() const {
        ConfigMap file_cfg;
        if (!config_path.empty()) file_cfg = load_config(config_path);
        PreprocessConfig cfg = preprocess_config_from(file_cfg);
        if (knee_factor) cfg.segmentation.knee_factor = *knee_factor;
        if (slow_factor) cfg.segmentation.slow_factor = *slow_factor;
        if (knee_run) cfg.segmentation.knee_run = *knee_run;
        if (slow_run) cfg.segmentation.slow_run = *slow_run;
        if (z_thresh) cfg.z_thresh = *z_thresh;
        if (!windows.empty()) {
            std::vector<double> w;
            for (const auto& tok : split_line(windows)) w.push_back(parse_double(tok, "--windows"));
            cfg.windows = w;
        }
        return cfg;
    }
};

void warn_if_untrained_step(const GpModel& model, double step) {
    for (const auto& x : model.X)
        if (x.dt == step) return;
    std::cerr << "warning: step " << format_sig6(step)
              << " days is not a training window; the linear window component extrapolates\n";
}

int cmd_synth(const std::string& config_path, const std::string& out_dir) {
    ConfigMap cfg_map;
    if (!config_path.empty()) cfg_map = load_config(config_path);

    SynthConfig cfg;
    cfg.pre_exponential = config_double(cfg_map, "pre_exponential", cfg.pre_exponential);
    cfg.activation_temp = config_double(cfg_map, "activation_temp", cfg.activation_temp);
    cfg.soc_a0 = config_double(cfg_map, "soc_a0", cfg.soc_a0);
    cfg.soc_a1 = config_double(cfg_map, "soc_a1", cfg.soc_a1);
    cfg.noise_std = config_double(cfg_map, "noise_std", cfg.noise_std);
    cfg.rise_amplitude = config_double(cfg_map, "rise_amplitude", cfg.rise_amplitude);
    cfg.rise_duration = config_double(cfg_map, "rise_duration", cfg.rise_duration);
    cfg.knee_day = config_double(cfg_map, "knee_day", cfg.knee_day);
    cfg.knee_slope_factor = config_double(cfg_map, "knee_slope_factor", cfg.knee_slope_factor);
    cfg.seed = static_cast<std::uint64_t>(config_double(cfg_map, "seed", 42.0));
    if (const char* env = std::getenv("AGECAL_SEED"))
        cfg.seed = static_cast<std::uint64_t>(parse_double(env, "AGECAL_SEED"));

    DefaultDatasetOptions opt;
    opt.duration = config_double(cfg_map, "duration", opt.duration);
    opt.cadence = config_double(cfg_map, "cadence", opt.cadence);
    opt.cells_per_condition = config_int(cfg_map, "cells_per_condition", opt.cells_per_condition);
    opt.include_dynamic = config_bool(cfg_map, "dynamic", opt.include_dynamic);

    SynthDataset data;
    if (cfg_map.count("conditions")) {
        std::vector<SynthCondition> conds;
        for (const auto& tok : split_line(cfg_map.at("conditions"))) {
            const auto colon = tok.find(':');
            if (colon == std::string::npos)
                throw ConfigError("conditions entries must be temp_c:soc, got '" + tok + "'");
            conds.push_back(SynthCondition{parse_double(tok.substr(0, colon), "condition temp"),
                                           parse_double(tok.substr(colon + 1), "condition soc"),
                                           opt.duration, opt.cadence});
        }
        data = generate_cells(conds, cfg, opt.cells_per_condition);
        if (opt.include_dynamic) {
            const auto dyn = generate_dynamic_cells(default_dynamic_profiles(), opt.cadence, cfg);
            data.cells.insert(data.cells.end(), dyn.cells.begin(), dyn.cells.end());
            data.profiles.insert(data.profiles.end(), dyn.profiles.begin(), dyn.profiles.end());
        }
    } else {
        data = generate_default_dataset(cfg, opt);
    }

    fs::create_directories(out_dir);
    sort_cells(data.cells);
    sort_profiles(data.profiles);
    write_cells(fs::path(out_dir) / "cells.csv", data.cells);
    write_profiles(fs::path(out_dir) / "profiles.csv", data.profiles);
    write_file_atomic(fs::path(out_dir) / "truth.csv", truth_to_csv(data.truth));
    std::cout << "wrote " << data.cells.size() << " cells to " << out_dir << "\n";
    return 0;
}

int cmd_preprocess(const std::string& cells_path, const std::string& profiles_path,
                   const std::string& out_dir, const PreprocessFlags& flags) {
    const PreprocessConfig cfg = flags.resolve();
    auto cells = load_cells(cells_path);
    auto profiles = load_profiles(profiles_path);
    sort_cells(cells);
    Dataset data{std::move(cells), std::move(profiles)};

    std::vector<LabeledRow> all_rows;
    std::vector<CapacityCurve> kept;
    std::string phases = "cell_id,day,phase\n";
    std::string dropped = "cell_id,reason\n";
    for (const auto& cell : data.cells) {
        const StressProfile& prof = data.profile_for(cell.cell_id);
        try {
            const PreprocessedCell pre = preprocess_cell(cell, cfg);
            kept.push_back(pre.rebased);
            for (std::size_t i = 0; i < pre.rebased.points.size(); ++i)
                phases += cell.cell_id + "," + format_full(pre.rebased.points[i].day) + "," +
                          phase_name(pre.labels[i]) + "\n";
            if (pre.linear_decline.points.size() >= 2) {
                const StressProfile shifted = shift_profile(prof, pre.day_offset);
                const auto rows = build_labeled_rows(pre.linear_decline, shifted, cfg.windows);
                all_rows.insert(all_rows.end(), rows.begin(), rows.end());
            }
        } catch (const DataError& e) {
            dropped += cell.cell_id + "," + std::string(e.what()) + "\n";
        }
    }

    fs::create_directories(out_dir);
    write_rows(fs::path(out_dir) / "rows.csv", all_rows);
    write_cells(fs::path(out_dir) / "preprocessed_cells.csv", kept);
    write_file_atomic(fs::path(out_dir) / "phases.csv", phases);
    write_file_atomic(fs::path(out_dir) / "dropped.csv", dropped);
    std::cout << "wrote " << all_rows.size() << " training rows from " << kept.size()
              << " cells to " << out_dir << "\n";
    return 0;
}

int cmd_train(const std::string& rows_path, const std::string& out_path,
              const std::vector<std::string>& pins, FitConfig cfg) {
    cfg.seed = effective_seed(cfg.seed);
    const auto labeled = load_rows(rows_path);
    std::vector<TrainingRow> rows;
    for (const auto& lr : labeled) rows.push_back(lr.row);
    const std::set<std::string> pinned(pins.begin(), pins.end());
    const GpModel model = fit(rows, cfg, pinned);
    save_model(out_path, model);
    std::cout << "fitted " << rows.size() << " rows, log marginal likelihood "
              << format_sig6(model.lml) << ", wrote " << out_path << "\n";
    return 0;
}

int cmd_predict(const std::string& model_path, const std::string& profile_path,
                const std::string& cell_id, double horizon, double step,
                const std::string& anchor_path, const std::string& out_path) {
    const GpModel model = load_model(model_path);
    const auto profiles = load_profiles(profile_path);
    const StressProfile* profile = nullptr;
    if (!cell_id.empty()) {
        for (const auto& p : profiles)
            if (p.cell_id == cell_id) profile = &p;
        if (!profile) throw DataError("no profile for cell '" + cell_id + "'");
    } else if (profiles.size() == 1) {
        profile = &profiles.front();
    } else {
        throw DataError("profile file holds several cells; select one with --cell");
    }

    std::vector<AnchorPoint> anchors;
    if (!anchor_path.empty()) {
        const auto lines = read_lines(anchor_path);
        if (lines.empty() || split_line(lines[0]) != std::vector<std::string>{"day", "q_pct"})
            throw ParseError(anchor_path + ": expected header day,q_pct");
        for (std::size_t i = 1; i < lines.size(); ++i) {
            if (lines[i].empty()) continue;
            const auto cols = split_line(lines[i]);
            if (cols.size() != 2) throw ParseError(anchor_path + ": expected 2 columns");
            anchors.push_back(AnchorPoint{parse_double(cols[0], "anchor day"),
                                          parse_double(cols[1], "anchor q")});
        }
        std::sort(anchors.begin(), anchors.end(),
                  [](const AnchorPoint& a, const AnchorPoint& b) { return a.day < b.day; });
    }

    warn_if_untrained_step(model, step);
    const CapacityForecast fc = forecast_curve(model, *profile, horizon, step, anchors);
    write_forecast(out_path, fc);
    std::cout << "forecast to day " << format_sig6(fc.days.back()) << " written to " << out_path
              << "\n";
    return 0;
}

int cmd_evaluate(const std::string& model_path, const std::string& cells_path,
                 const std::string& profiles_path, const std::string& out_path, double step,
                 const PreprocessFlags& flags) {
    const PreprocessConfig cfg = flags.resolve();
    const GpModel model = load_model(model_path);
    auto cells = load_cells(cells_path);
    sort_cells(cells);
    Dataset data{std::move(cells), load_profiles(profiles_path)};

    std::vector<CellMetrics> metrics;
    for (const auto& cell : data.cells) {
        const StressProfile& prof = data.profile_for(cell.cell_id);
        try {
            const PreprocessedCell pre = preprocess_cell(cell, cfg);
            const StressProfile shifted = shift_profile(prof, pre.day_offset);
            metrics.push_back(evaluate_cell(model, pre, shifted, cfg.windows, step));
        } catch (const DataError& e) {
            std::cerr << "skipping " << cell.cell_id << ": " << e.what() << "\n";
        }
    }
    write_file_atomic(out_path, cell_metrics_to_csv(metrics));
    std::cout << "evaluated " << metrics.size() << " cells, wrote " << out_path << "\n";
    return 0;
}

int cmd_sweep(const std::string& model_path, const std::string& axis_name,
              const std::vector<std::string>& fixed_kv, const std::string& grid_spec, double dt,
              const std::string& out_path) {
    const GpModel model = load_model(model_path);
    const SweepAxis axis = sweep_axis_from_name(axis_name);

    std::map<std::string, double> fixed;
    for (const auto& kv : fixed_kv) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos) throw ConfigError("--fixed expects key=value, got '" + kv + "'");
        fixed[kv.substr(0, eq)] = parse_double(kv.substr(eq + 1), "--fixed " + kv);
    }
    const char* needed = axis == SweepAxis::Temperature ? "soc" : "temp_c";
    if (!fixed.count(needed))
        throw ConfigError(std::string("--fixed must provide ") + needed + " for this axis");

    warn_if_untrained_step(model, dt);
    const auto sweep = stddev_sweep(model, axis, fixed.at(needed), parse_grid(grid_spec), dt);
    write_sweep(out_path, sweep);
    std::cout << "swept " << sweep.size() << " grid points, wrote " << out_path << "\n";
    return 0;
}

int cmd_relevance(const std::string& model_path) {
    const GpModel model = load_model(model_path);
    const Relevance rel = relevance(model);
    std::cout << "temperature," << format_sig6(rel.temperature) << "\n"
              << "soc," << format_sig6(rel.soc) << "\n";
    return 0;
}

int cmd_cases(const std::string& cells_path, const std::string& profiles_path,
              const std::string& out_dir, int only_case, FitConfig fit_cfg, double step,
              const PreprocessFlags& flags) {
    if (only_case < 0 || only_case > 7)
        throw ConfigError("--case must be between 1 and 7");
    fit_cfg.seed = effective_seed(fit_cfg.seed);
    const PreprocessConfig pre_cfg = flags.resolve();
    auto cells = load_cells(cells_path);
    sort_cells(cells);
    Dataset data{std::move(cells), load_profiles(profiles_path)};

    fs::create_directories(out_dir);
    std::vector<CaseReport> reports;
    for (const auto& tcase : builtin_cases()) {
        if (only_case > 0 && tcase.case_id != only_case) continue;
        CaseRun run = run_case(tcase, data, fit_cfg, pre_cfg, step);
        const fs::path case_dir = fs::path(out_dir) / ("case_" + std::to_string(tcase.case_id));
        fs::create_directories(case_dir);
        save_model(case_dir / "model.json", run.model);
        write_file_atomic(case_dir / "report.csv", cell_metrics_to_csv(run.report.cells));
        write_file_atomic(case_dir / "splits.csv", splits_to_csv(run.report.cells));
        write_file_atomic(case_dir / "relevance.csv", relevance_to_csv(run.report.relevance_shares));
        std::cout << "case " << tcase.case_id << ": training MAE_Q "
                  << format_sig6(run.report.training.mae_q) << "%, validation MAE_Q "
                  << (run.report.validation.cells_q > 0
                          ? format_sig6(run.report.validation.mae_q) + "%"
                          : std::string("-"))
                  << (run.report.pinned_soc ? " (theta_soc pinned)" : "") << "\n";
        reports.push_back(std::move(run.report));
    }
    write_file_atomic(fs::path(out_dir) / "cases_summary.csv", case_summaries_to_csv(reports));
    return 0;
}

int cmd_update(const std::string& model_path, const std::string& rows_path, bool refit,
               const std::string& out_path, FitConfig cfg) {
    cfg.seed = effective_seed(cfg.seed);
    const GpModel model = load_model(model_path);
    const auto labeled = load_rows(rows_path);
    std::vector<TrainingRow> rows;
    for (const auto& lr : labeled) rows.push_back(lr.row);
    const GpModel updated = update_model(model, rows, refit, cfg);
    save_model(out_path, updated);
    std::cout << "added " << rows.size() << " rows (" << (refit ? "refit" : "hyperparameters kept")
              << "), wrote " << out_path << "\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"Gaussian-process calendar-ageing model for Li-ion cells"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate a synthetic ageing campaign");
    std::string synth_config, synth_out;
    synth->add_option("--config", synth_config, "key=value config file");
    synth->add_option("--out", synth_out, "output directory")->required();

    // preprocess
    auto* prep = app.add_subcommand("preprocess", "curves -> rebased curves + training rows");
    std::string prep_cells, prep_profiles, prep_out;
    PreprocessFlags prep_flags;
    prep->add_option("--cells", prep_cells, "cells CSV")->required();
    prep->add_option("--profiles", prep_profiles, "profiles CSV")->required();
    prep->add_option("--out", prep_out, "output directory")->required();
    prep_flags.attach(prep);

    // train
    auto* train = app.add_subcommand("train", "fit GP hyperparameters on training rows");
    std::string train_rows, train_out;
    std::vector<std::string> train_pins;
    FitConfig train_cfg;
    train->add_option("--rows", train_rows, "training rows CSV")->required();
    train->add_option("--out", train_out, "model file")->required();
    train->add_option("--pin", train_pins, "hyperparameter to pin at its initial value");
    train->add_option("--restarts", train_cfg.restarts, "optimizer restarts");
    train->add_option("--max-iters", train_cfg.max_iters, "max gradient-ascent iterations");
    train->add_option("--grad-tol", train_cfg.grad_tol, "gradient convergence tolerance");
    train->add_option("--jitter", train_cfg.jitter, "base jitter level");
    train->add_option("--seed", train_cfg.seed, "fit seed");

    // predict
    auto* pred = app.add_subcommand("predict", "open-loop capacity forecast under a profile");
    std::string pred_model, pred_profile, pred_cell, pred_anchor, pred_out;
    double pred_horizon = 0.0, pred_step = 30.0;
    pred->add_option("--model", pred_model, "model file")->required();
    pred->add_option("--profile", pred_profile, "profiles CSV")->required();
    pred->add_option("--cell", pred_cell, "cell id when the file holds several profiles");
    pred->add_option("--horizon", pred_horizon, "forecast horizon [days]")->required();
    pred->add_option("--step", pred_step, "forecast step [days]");
    pred->add_option("--anchor", pred_anchor, "CSV day,q_pct of observed capacities to reset to");
    pred->add_option("--out", pred_out, "forecast CSV")->required();

    // evaluate
    auto* eval = app.add_subcommand("evaluate", "per-cell forecast metrics");
    std::string eval_model, eval_cells, eval_profiles, eval_out;
    double eval_step = 30.0;
    PreprocessFlags eval_flags;
    eval->add_option("--model", eval_model, "model file")->required();
    eval->add_option("--cells", eval_cells, "cells CSV")->required();
    eval->add_option("--profiles", eval_profiles, "profiles CSV")->required();
    eval->add_option("--out", eval_out, "report CSV")->required();
    eval->add_option("--step", eval_step, "forecast step [days]");
    eval_flags.attach(eval);

    // sweep
    auto* sweep = app.add_subcommand("sweep", "posterior stddev along one stress axis");
    std::string sweep_model, sweep_axis, sweep_grid, sweep_out;
    std::vector<std::string> sweep_fixed;
    double sweep_dt = 30.0;
    sweep->add_option("--model", sweep_model, "model file")->required();
    sweep->add_option("--axis", sweep_axis, "temperature|soc")->required();
    sweep->add_option("--fixed", sweep_fixed, "fixed value, e.g. soc=80 or temp_c=35");
    sweep->add_option("--grid", sweep_grid, "lo:hi:n grid spec")->required();
    sweep->add_option("--dt", sweep_dt, "window length [days]");
    sweep->add_option("--out", sweep_out, "sweep CSV")->required();

    // relevance
    auto* rel = app.add_subcommand("relevance", "stress-factor relevance of a fitted model");
    std::string rel_model;
    rel->add_option("--model", rel_model, "model file")->required();

    // cases
    auto* cases = app.add_subcommand("cases", "run the incremental training-case study");
    std::string cases_cells, cases_profiles, cases_out;
    int cases_only = 0;
    double cases_step = 30.0;
    FitConfig cases_cfg;
    PreprocessFlags cases_flags;
    cases->add_option("--cells", cases_cells, "cells CSV")->required();
    cases->add_option("--profiles", cases_profiles, "profiles CSV")->required();
    cases->add_option("--out", cases_out, "output directory")->required();
    cases->add_option("--case", cases_only, "run a single case (1-7)");
    cases->add_option("--seed", cases_cfg.seed, "base fit seed");
    cases->add_option("--restarts", cases_cfg.restarts, "optimizer restarts");
    cases->add_option("--max-iters", cases_cfg.max_iters, "max gradient-ascent iterations");
    cases->add_option("--step", cases_step, "forecast step [days]");
    cases_flags.attach(cases);

    // update
    auto* upd = app.add_subcommand("update", "extend a model's training set with new rows");
    std::string upd_model, upd_rows, upd_out;
    bool upd_refit = false;
    FitConfig upd_cfg;
    upd->add_option("--model", upd_model, "model file")->required();
    upd->add_option("--rows", upd_rows, "new training rows CSV")->required();
    upd->add_flag("--refit", upd_refit, "re-optimize hyperparameters (warm start)");
    upd->add_option("--out", upd_out, "updated model file")->required();
    upd->add_option("--restarts", upd_cfg.restarts, "optimizer restarts when refitting");
    upd->add_option("--max-iters", upd_cfg.max_iters, "max iterations when refitting");
    upd->add_option("--seed", upd_cfg.seed, "fit seed when refitting");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*synth) return cmd_synth(synth_config, synth_out);
        if (*prep) return cmd_preprocess(prep_cells, prep_profiles, prep_out, prep_flags);
        if (*train) return cmd_train(train_rows, train_out, train_pins, train_cfg);
        if (*pred)
            return cmd_predict(pred_model, pred_profile, pred_cell, pred_horizon, pred_step,
                               pred_anchor, pred_out);
        if (*eval)
            return cmd_evaluate(eval_model, eval_cells, eval_profiles, eval_out, eval_step,
                                eval_flags);
        if (*sweep)
            return cmd_sweep(sweep_model, sweep_axis, sweep_fixed, sweep_grid, sweep_dt, sweep_out);
        if (*rel) return cmd_relevance(rel_model);
        if (*cases)
            return cmd_cases(cases_cells, cases_profiles, cases_out, cases_only, cases_cfg,
                             cases_step, cases_flags);
        if (*upd) return cmd_update(upd_model, upd_rows, upd_refit, upd_out, upd_cfg);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
