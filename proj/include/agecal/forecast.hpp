#pragma once

#include <cmath>
#include <filesystem>
#include <string>
#include <vector>

#include "agecal/csv.hpp"
#include "agecal/dataset.hpp"
#include "agecal/gp.hpp"

namespace agecal {

/// Long-horizon capacity trajectory on a fixed step grid, in percent of the
/// rebased reference, with a +-2 sigma band.
struct CapacityForecast {
    std::vector<double> days;
    std::vector<double> mean_q;
    std::vector<double> lower_q;
    std::vector<double> upper_q;
    double step_days = 0.0;
};

/// Observed capacity the forecast is reset to when it reaches the given day.
struct AnchorPoint {
    double day = 0.0;
    double q_pct = 0.0;
};

/// Iterative forecast: per step, the model predicts the capacity loss over the
/// step window under the profile's (T, SOC); losses accumulate from 100%.
/// Steps are split at segment boundaries so each query carries one condition.
/// Band variance is the running sum of per-step predictive variances; the
/// steps are treated as independent, which understates long-horizon
/// uncertainty and matches the reported over-confidence in accumulated
/// capacity.
inline CapacityForecast forecast_curve(const GpModel& model, const StressProfile& profile,
                                       double horizon, double step = 30.0,
                                       const std::vector<AnchorPoint>& anchors = {}) {
    if (!(step > 0.0)) throw ParameterError("forecast: step must be positive");
    if (horizon < step) throw ParameterError("forecast: horizon must be at least one step");
    profile.validate();
    if (profile.end_day() < horizon)
        throw CoverageError("forecast: profile '" + profile.cell_id + "' ends at day " +
                            std::to_string(profile.end_day()) + ", horizon is " +
                            std::to_string(horizon));

    const auto n_steps = static_cast<std::size_t>(horizon / step + 1e-9);
    CapacityForecast fc;
    fc.step_days = step;
    fc.days.reserve(n_steps + 1);
    fc.mean_q.reserve(n_steps + 1);
    fc.days.push_back(0.0);
    fc.mean_q.push_back(100.0);
    fc.lower_q.push_back(100.0);
    fc.upper_q.push_back(100.0);

    double q = 100.0;
    double var_acc = 0.0;
    std::size_t next_anchor = 0;
    for (std::size_t k = 0; k < n_steps; ++k) {
        const double t_begin = static_cast<double>(k) * step;
        const double t_end = static_cast<double>(k + 1) * step;
        double t = t_begin;
        while (t < t_end) {
            const StressSegment& seg = profile.segment_at(t);
            const double sub_end = std::min(t_end, seg.day_end);
            const InputVector x{1.0 / seg.temperature, seg.soc, sub_end - t};
            x.validate();
            const Posterior post = predict(model, {x}, false);
            q += post.mean[0];
            var_acc += post.var[0];
            t = sub_end;
        }
        while (next_anchor < anchors.size() && anchors[next_anchor].day <= t_end) {
            if (anchors[next_anchor].day > t_begin) {
                q = anchors[next_anchor].q_pct;
                var_acc = 0.0;
            }
            ++next_anchor;
        }
        const double band = 2.0 * std::sqrt(var_acc);
        fc.days.push_back(t_end);
        fc.mean_q.push_back(q);
        fc.lower_q.push_back(q - band);
        fc.upper_q.push_back(q + band);
    }
    return fc;
}

/// Forecast mean and band half-width linearly interpolated to a day.
inline double forecast_mean_at(const CapacityForecast& fc, double day) {
    if (fc.days.empty() || day < fc.days.front() || day > fc.days.back())
        throw RangeError("forecast interpolation outside grid");
    const auto it = std::lower_bound(fc.days.begin(), fc.days.end(), day);
    const std::size_t hi = static_cast<std::size_t>(it - fc.days.begin());
    if (fc.days[hi] == day) return fc.mean_q[hi];
    const std::size_t lo = hi - 1;
    const double w = (day - fc.days[lo]) / (fc.days[hi] - fc.days[lo]);
    return fc.mean_q[lo] + w * (fc.mean_q[hi] - fc.mean_q[lo]);
}

inline double forecast_sigma_at(const CapacityForecast& fc, double day) {
    if (fc.days.empty() || day < fc.days.front() || day > fc.days.back())
        throw RangeError("forecast interpolation outside grid");
    const auto it = std::lower_bound(fc.days.begin(), fc.days.end(), day);
    const std::size_t hi = static_cast<std::size_t>(it - fc.days.begin());
    const auto sigma = [&](std::size_t i) { return 0.25 * (fc.upper_q[i] - fc.lower_q[i]); };
    if (fc.days[hi] == day) return sigma(hi);
    const std::size_t lo = hi - 1;
    const double w = (day - fc.days[lo]) / (fc.days[hi] - fc.days[lo]);
    return sigma(lo) + w * (sigma(hi) - sigma(lo));
}

/// Extends the training set with new rows. With refit, hyperparameters are
/// re-optimized warm-started from the current values; without it only the
/// factorization is rebuilt, so posterior variance can only shrink.
inline GpModel update_model(const GpModel& model, const std::vector<TrainingRow>& new_rows,
                            bool refit, const FitConfig& cfg) {
    if (new_rows.empty() && !refit) return model;
    std::vector<TrainingRow> rows = training_rows_of(model);
    rows.insert(rows.end(), new_rows.begin(), new_rows.end());
    if (refit) {
        FitConfig warm = cfg;
        warm.init = model.h;
        warm.warm_start = true;
        return fit(rows, warm, model.h.pinned);
    }
    GpModel updated = assemble_model(rows, model.h, model.fit_seed, cfg.jitter);
    return updated;
}

enum class SweepAxis { Temperature, Soc };

inline SweepAxis sweep_axis_from_name(const std::string& name) {
    if (name == "temperature") return SweepAxis::Temperature;
    if (name == "soc") return SweepAxis::Soc;
    throw ParameterError("unknown sweep axis: " + name + " (expected temperature|soc)");
}

struct SweepPoint {
    double axis_value = 0.0;
    double posterior_std = 0.0;
};

/// Noise-free predictive standard deviation along one stress axis, the other
/// held fixed. Temperature grids are in deg C, SOC grids in percent.
inline std::vector<SweepPoint> stddev_sweep(const GpModel& model, SweepAxis axis,
                                            double fixed_value, const std::vector<double>& grid,
                                            double dt) {
    if (grid.empty()) throw ParameterError("sweep: empty grid");
    std::vector<InputVector> Xs;
    Xs.reserve(grid.size());
    for (double g : grid) {
        InputVector x;
        if (axis == SweepAxis::Temperature) {
            x = InputVector{1.0 / celsius_to_kelvin(g), fixed_value, dt};
        } else {
            x = InputVector{1.0 / celsius_to_kelvin(fixed_value), g, dt};
        }
        x.validate();
        Xs.push_back(x);
    }
    const Posterior post = predict(model, Xs, false);
    std::vector<SweepPoint> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i)
        out[i] = SweepPoint{grid[i], post.std[static_cast<Eigen::Index>(i)]};
    return out;
}

// ---------------------------------------------------------------------------
// plot-ready CSV emission

inline std::string forecast_to_csv(const CapacityForecast& fc) {
    std::string out = "day,mean_q_pct,lower_q_pct,upper_q_pct\n";
    for (std::size_t i = 0; i < fc.days.size(); ++i)
        out += format_full(fc.days[i]) + "," + format_full(fc.mean_q[i]) + "," +
               format_full(fc.lower_q[i]) + "," + format_full(fc.upper_q[i]) + "\n";
    return out;
}

inline void write_forecast(const std::filesystem::path& path, const CapacityForecast& fc) {
    write_file_atomic(path, forecast_to_csv(fc));
}

inline std::string sweep_to_csv(const std::vector<SweepPoint>& sweep) {
    std::string out = "axis_value,posterior_std_pct\n";
    for (const auto& p : sweep)
        out += format_full(p.axis_value) + "," + format_full(p.posterior_std) + "\n";
    return out;
}

inline void write_sweep(const std::filesystem::path& path, const std::vector<SweepPoint>& sweep) {
    write_file_atomic(path, sweep_to_csv(sweep));
}

} // namespace agecal
