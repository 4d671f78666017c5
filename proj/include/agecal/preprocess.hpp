#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "agecal/csv.hpp"
#include "agecal/dataset.hpp"
#include "agecal/errors.hpp"

namespace agecal {

/// Retention-curve phase of a measurement point. Valid label sequences are
/// Rise* LinearDecline* Knee* Slowdown*, any prefix possibly empty.
enum class PhaseLabel { Rise, LinearDecline, Knee, Slowdown };

inline const char* phase_name(PhaseLabel p) {
    switch (p) {
        case PhaseLabel::Rise: return "rise";
        case PhaseLabel::LinearDecline: return "linear_decline";
        case PhaseLabel::Knee: return "knee";
        case PhaseLabel::Slowdown: return "slowdown";
    }
    return "?";
}

struct SegmentationConfig {
    int knee_run = 2;
    int slow_run = 2;
    double knee_factor = 2.0;
    double slow_factor = 0.5;
};

/// One supervised example: capacity loss dq [% of the rebased reference] over
/// a dt-day storage window at constant (T, SOC).
struct TrainingRow {
    double dt = 0.0;
    double inv_temp = 0.0;
    double soc = 0.0;
    double dq = 0.0;

    void validate() const {
        if (!(dt > 0.0)) throw DataError("training row: dt must be positive");
        if (soc < 0.0 || soc > 100.0) throw DataError("training row: SOC outside [0, 100]");
        if (inv_temp < 1.0 / kMaxTempK || inv_temp > 1.0 / kMinTempK)
            throw DataError("training row: 1/T outside the manufacturer window");
        if (!std::isfinite(dq)) throw DataError("training row: non-finite dq");
    }
};

/// TrainingRow plus its provenance, as written to the rows CSV.
struct LabeledRow {
    std::string cell_id;
    double t_start = 0.0;
    TrainingRow row;
};

/// Re-anchors the curve at its capacity maximum: that point becomes day 0 with
/// capacity 1, later points are shifted and renormalized. A maximum on the
/// final point means the cell never declines and must be dropped.
inline CapacityCurve rebase_bol(const CapacityCurve& curve) {
    curve.validate();
    std::size_t max_i = 0;
    for (std::size_t i = 1; i < curve.points.size(); ++i)
        if (curve.points[i].capacity > curve.points[max_i].capacity) max_i = i;
    if (max_i + 2 > curve.points.size())
        throw EmptyAfterRebaseError("cell '" + curve.cell_id +
                                    "': capacity maximum at the final point, nothing to model");
    const double day0 = curve.points[max_i].day;
    const double q0 = curve.points[max_i].capacity;
    CapacityCurve out;
    out.cell_id = curve.cell_id;
    out.points.reserve(curve.points.size() - max_i);
    for (std::size_t i = max_i; i < curve.points.size(); ++i)
        out.points.push_back({curve.points[i].day - day0, curve.points[i].capacity / q0});
    return out;
}

namespace detail {

inline double median(std::vector<double> v) {
    if (v.empty()) throw DataError("median of empty set");
    const std::size_t mid = v.size() / 2;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid), v.end());
    double hi = v[mid];
    if (v.size() % 2 == 1) return hi;
    std::nth_element(v.begin(), v.begin() + static_cast<std::ptrdiff_t>(mid) - 1, v.end());
    return 0.5 * (v[mid - 1] + hi);
}

/// Median-slope linear fit, immune to a single outlier in a 5-point window.
struct LineFit {
    double slope = 0.0;
    double intercept = 0.0;
    double at(double x) const { return intercept + slope * x; }
};

inline LineFit median_line_fit(const std::vector<CapacityMeasurement>& pts, std::size_t lo,
                               std::size_t hi) {
    std::vector<double> slopes;
    for (std::size_t j = lo; j < hi; ++j)
        for (std::size_t k = j + 1; k < hi; ++k)
            slopes.push_back((pts[k].capacity - pts[j].capacity) / (pts[k].day - pts[j].day));
    LineFit fit;
    fit.slope = median(std::move(slopes));
    std::vector<double> offsets;
    for (std::size_t j = lo; j < hi; ++j) offsets.push_back(pts[j].capacity - fit.slope * pts[j].day);
    fit.intercept = median(std::move(offsets));
    return fit;
}

} // namespace detail

/// Per-point phase labels for a rebased curve. The reference slope is the
/// median interval slope over the first half of the decline; a sustained run
/// steeper than knee_factor times the reference opens the knee, and a
/// sustained run shallower than slow_factor times the reference after the
/// knee opens the slowdown.
inline std::vector<PhaseLabel> segment_phases(const CapacityCurve& curve,
                                              const SegmentationConfig& cfg = {}) {
    curve.validate();
    const auto& pts = curve.points;
    const std::size_t m = pts.size();
    if (m < 4)
        throw DataError("segment_phases: cell '" + curve.cell_id + "' has fewer than 4 points");

    const std::size_t n_intervals = m - 1;
    std::vector<double> slope(n_intervals);
    for (std::size_t i = 0; i < n_intervals; ++i)
        slope[i] = (pts[i + 1].capacity - pts[i].capacity) / (pts[i + 1].day - pts[i].day);

    const std::size_t half = std::max<std::size_t>(1, n_intervals / 2);
    const double ref = detail::median(std::vector<double>(slope.begin(),
                                                          slope.begin() + static_cast<std::ptrdiff_t>(half)));

    std::vector<PhaseLabel> labels(m, PhaseLabel::LinearDecline);
    if (ref >= 0.0) return labels; // no declining reference, nothing to detect against

    const auto run_holds = [&](std::size_t start, int len, auto&& pred) {
        if (start + static_cast<std::size_t>(len) > n_intervals) return false;
        for (int k = 0; k < len; ++k)
            if (!pred(slope[start + static_cast<std::size_t>(k)])) return false;
        return true;
    };

    std::size_t knee_point = m;
    for (std::size_t i = 0; i + static_cast<std::size_t>(cfg.knee_run) <= n_intervals; ++i) {
        if (run_holds(i, cfg.knee_run, [&](double s) { return s < cfg.knee_factor * ref; })) {
            knee_point = i;
            break;
        }
    }
    if (knee_point == m) return labels;

    std::size_t slow_point = m;
    for (std::size_t i = knee_point + 1; i + static_cast<std::size_t>(cfg.slow_run) <= n_intervals;
         ++i) {
        if (run_holds(i, cfg.slow_run, [&](double s) { return s > cfg.slow_factor * ref; })) {
            slow_point = i;
            break;
        }
    }
    for (std::size_t i = knee_point; i < m; ++i)
        labels[i] = i < slow_point ? PhaseLabel::Knee : PhaseLabel::Slowdown;
    return labels;
}

/// Drops measurement outliers: points far from a robust local line fit, and
/// capacity-recovery upticks larger than the robust residual scale. Curves
/// shorter than the 5-point fit window pass through unchanged.
inline CapacityCurve remove_outliers(const CapacityCurve& curve, double z_thresh = 4.0) {
    curve.validate();
    const auto& pts = curve.points;
    const std::size_t m = pts.size();
    if (m < 5) return curve;

    std::vector<double> residual(m);
    for (std::size_t i = 0; i < m; ++i) {
        // 5-point window centered on i, clamped at the ends
        const std::size_t lo = std::min(i >= 2 ? i - 2 : 0, m - 5);
        const auto fit = detail::median_line_fit(pts, lo, lo + 5);
        residual[i] = pts[i].capacity - fit.at(pts[i].day);
    }

    std::vector<double> abs_dev(m);
    const double med = detail::median(residual);
    for (std::size_t i = 0; i < m; ++i) abs_dev[i] = std::abs(residual[i] - med);
    const double scale = std::max(detail::median(abs_dev) * 1.4826, 1e-12);

    CapacityCurve out;
    out.cell_id = curve.cell_id;
    for (std::size_t i = 0; i < m; ++i) {
        if (std::abs(residual[i]) > z_thresh * scale) continue;
        if (!out.points.empty() && pts[i].capacity > out.points.back().capacity + scale) continue;
        out.points.push_back(pts[i]);
    }
    return out;
}

/// Sub-curve of the points carrying one phase label.
inline CapacityCurve restrict_to_phase(const CapacityCurve& curve,
                                       const std::vector<PhaseLabel>& labels, PhaseLabel keep) {
    if (labels.size() != curve.points.size())
        throw DataError("restrict_to_phase: label/point count mismatch");
    CapacityCurve out;
    out.cell_id = curve.cell_id;
    for (std::size_t i = 0; i < curve.points.size(); ++i)
        if (labels[i] == keep) out.points.push_back(curve.points[i]);
    return out;
}

inline const std::vector<double>& default_windows() {
    static const std::vector<double> w = {30.0, 60.0, 90.0};
    return w;
}

/// Emits one row per (measurement day, window) pair that fits inside the
/// curve and inside a single profile segment. Windows crossing a segment
/// boundary are skipped so every row carries a single (T, SOC) condition.
/// Identical inputs with different targets are kept: they carry the noise
/// information.
inline std::vector<LabeledRow> build_labeled_rows(const CapacityCurve& curve,
                                                  const StressProfile& profile,
                                                  const std::vector<double>& windows =
                                                      default_windows()) {
    curve.validate();
    profile.validate();
    if (profile.end_day() < curve.last_day())
        throw CoverageError("profile '" + profile.cell_id + "' covers to day " +
                            std::to_string(profile.end_day()) + " but curve '" + curve.cell_id +
                            "' extends to day " + std::to_string(curve.last_day()));

    std::vector<LabeledRow> rows;
    for (const auto& p : curve.points) {
        for (double dt : windows) {
            const double t_end = p.day + dt;
            if (t_end > curve.last_day()) continue;
            if (!profile.single_segment_covers(p.day, t_end)) continue;
            const StressSegment& seg = profile.segment_at(p.day);
            LabeledRow lr;
            lr.cell_id = curve.cell_id;
            lr.t_start = p.day;
            lr.row.dt = dt;
            lr.row.inv_temp = 1.0 / seg.temperature;
            lr.row.soc = seg.soc;
            lr.row.dq = 100.0 * (capacity_at(curve, t_end) - capacity_at(curve, p.day));
            lr.row.validate();
            rows.push_back(lr);
        }
    }
    return rows;
}

inline std::vector<TrainingRow> build_training_rows(const CapacityCurve& curve,
                                                    const StressProfile& profile,
                                                    const std::vector<double>& windows =
                                                        default_windows()) {
    std::vector<TrainingRow> rows;
    for (const auto& lr : build_labeled_rows(curve, profile, windows)) rows.push_back(lr.row);
    return rows;
}

// ---------------------------------------------------------------------------
// rows CSV: `cell_id,t_start_day,dt_days,inv_temp_per_k,soc_pct,dq_pct`

inline std::string rows_to_csv(const std::vector<LabeledRow>& rows) {
    std::string out = "cell_id,t_start_day,dt_days,inv_temp_per_k,soc_pct,dq_pct\n";
    for (const auto& r : rows)
        out += r.cell_id + "," + format_full(r.t_start) + "," + format_full(r.row.dt) + "," +
               format_full(r.row.inv_temp) + "," + format_full(r.row.soc) + "," +
               format_full(r.row.dq) + "\n";
    return out;
}

inline void write_rows(const std::filesystem::path& path, const std::vector<LabeledRow>& rows) {
    write_file_atomic(path, rows_to_csv(rows));
}

inline std::vector<LabeledRow> load_rows(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw ParseError(path.string() + ": empty file");
    if (split_line(lines[0]) != std::vector<std::string>{"cell_id", "t_start_day", "dt_days",
                                                         "inv_temp_per_k", "soc_pct", "dq_pct"})
        throw ParseError(path.string() + ": unrecognized rows header '" + lines[0] + "'");
    std::vector<LabeledRow> rows;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const std::string ctx = path.string() + ":" + std::to_string(ln + 1);
        const auto cols = split_line(lines[ln]);
        if (cols.size() != 6)
            throw ParseError(ctx + ": expected 6 columns, got " + std::to_string(cols.size()));
        LabeledRow lr;
        lr.cell_id = cols[0];
        lr.t_start = parse_double(cols[1], ctx);
        lr.row.dt = parse_double(cols[2], ctx);
        lr.row.inv_temp = parse_double(cols[3], ctx);
        lr.row.soc = parse_double(cols[4], ctx);
        lr.row.dq = parse_double(cols[5], ctx);
        lr.row.validate();
        rows.push_back(lr);
    }
    return rows;
}

/// Full per-cell pipeline: rebase at the maximum, drop outliers, label phases.
struct PreprocessedCell {
    CapacityCurve rebased;              // outlier-filtered, day 0 at the capacity maximum
    std::vector<PhaseLabel> labels;     // one per rebased point
    CapacityCurve linear_decline;       // the modelable portion
    double day_offset = 0.0;            // raw day that became day 0; shift the profile by this
};

struct PreprocessConfig {
    SegmentationConfig segmentation;
    double z_thresh = 4.0;
    std::vector<double> windows = default_windows();
};

inline PreprocessedCell preprocess_cell(const CapacityCurve& raw,
                                        const PreprocessConfig& cfg = {}) {
    PreprocessedCell out;
    std::size_t max_i = 0;
    for (std::size_t i = 1; i < raw.points.size(); ++i)
        if (raw.points[i].capacity > raw.points[max_i].capacity) max_i = i;
    out.day_offset = raw.points[max_i].day;
    out.rebased = remove_outliers(rebase_bol(raw), cfg.z_thresh);
    if (out.rebased.points.size() < 2)
        throw DataError("cell '" + raw.cell_id + "': fewer than 2 points survive preprocessing");
    out.labels = segment_phases(out.rebased, cfg.segmentation);
    out.linear_decline = restrict_to_phase(out.rebased, out.labels, PhaseLabel::LinearDecline);
    return out;
}

} // namespace agecal
