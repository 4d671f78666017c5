#pragma once

#include <algorithm>
#include <string>
#include <vector>

#include "agecal/errors.hpp"

namespace agecal {

inline constexpr double kCelsiusOffset = 273.15;
// Manufacturer storage window, -30 C to +55 C.
inline constexpr double kMinTempK = 243.15;
inline constexpr double kMaxTempK = 328.15;

inline double celsius_to_kelvin(double c) { return c + kCelsiusOffset; }
inline double kelvin_to_celsius(double k) { return k - kCelsiusOffset; }

/// One capacity characterization: fraction of the reference capacity at a storage day.
struct CapacityMeasurement {
    double day = 0.0;
    double capacity = 0.0;
};

/// Per-cell capacity retention series, strictly increasing in day.
struct CapacityCurve {
    std::string cell_id;
    std::vector<CapacityMeasurement> points;

    void validate() const {
        if (points.size() < 2)
            throw DataError("curve '" + cell_id + "': needs at least 2 points, has " +
                            std::to_string(points.size()));
        for (std::size_t i = 0; i < points.size(); ++i) {
            if (points[i].day < 0.0)
                throw DataError("curve '" + cell_id + "': negative day");
            if (points[i].capacity <= 0.0)
                throw DataError("curve '" + cell_id + "': non-positive capacity");
            if (i > 0 && points[i].day <= points[i - 1].day)
                throw DataError("curve '" + cell_id + "': days not strictly increasing at day " +
                                std::to_string(points[i].day));
        }
    }

    double first_day() const { return points.front().day; }
    double last_day() const { return points.back().day; }
};

/// Constant storage condition over [day_start, day_end). Temperature in Kelvin.
struct StressSegment {
    double day_start = 0.0;
    double day_end = 0.0;
    double temperature = 0.0;
    double soc = 0.0;

    void validate() const {
        if (day_end <= day_start) throw DataError("stress segment: day_end must exceed day_start");
        if (day_start < 0.0) throw DataError("stress segment: negative day_start");
        if (temperature < kMinTempK || temperature > kMaxTempK)
            throw DataError("stress segment: temperature " + std::to_string(temperature) +
                            " K outside manufacturer window [243.15, 328.15]");
        if (soc < 0.0 || soc > 100.0)
            throw DataError("stress segment: SOC " + std::to_string(soc) + " outside [0, 100]");
    }
};

/// Piecewise-constant storage schedule starting at day 0, contiguous segments.
struct StressProfile {
    std::string cell_id;
    std::vector<StressSegment> segments;

    void validate() const {
        if (segments.empty()) throw DataError("profile '" + cell_id + "': no segments");
        if (segments.front().day_start != 0.0)
            throw DataError("profile '" + cell_id + "': must start at day 0");
        for (std::size_t i = 0; i < segments.size(); ++i) {
            segments[i].validate();
            if (i > 0 && segments[i].day_start != segments[i - 1].day_end)
                throw DataError("profile '" + cell_id + "': gap or overlap at day " +
                                std::to_string(segments[i].day_start));
        }
    }

    double end_day() const { return segments.back().day_end; }

    bool is_static() const { return segments.size() == 1; }

    /// Segment governing day t. The final segment is closed on the right.
    const StressSegment& segment_at(double t) const {
        if (t < 0.0 || t > end_day())
            throw CoverageError("profile '" + cell_id + "': day " + std::to_string(t) +
                                " outside coverage [0, " + std::to_string(end_day()) + "]");
        for (const auto& seg : segments)
            if (t < seg.day_end) return seg;
        return segments.back();
    }

    /// True when one segment covers the whole window [t0, t1].
    bool single_segment_covers(double t0, double t1) const {
        const StressSegment& seg = segment_at(t0);
        return t1 <= seg.day_end && t1 <= end_day();
    }
};

/// Re-anchors a profile to a later origin: segments before `offset` days are
/// cut away and the remainder shifts so the new clock starts at 0. Keeps a
/// re-based capacity curve and its stress schedule on the same time axis.
inline StressProfile shift_profile(const StressProfile& profile, double offset) {
    profile.validate();
    if (offset < 0.0) throw ParameterError("shift_profile: negative offset");
    if (offset >= profile.end_day())
        throw CoverageError("profile '" + profile.cell_id + "': offset " +
                            std::to_string(offset) + " beyond coverage");
    if (offset == 0.0) return profile;
    StressProfile out;
    out.cell_id = profile.cell_id;
    for (const auto& seg : profile.segments) {
        if (seg.day_end <= offset) continue;
        StressSegment s = seg;
        s.day_start = std::max(seg.day_start, offset) - offset;
        s.day_end = seg.day_end - offset;
        out.segments.push_back(s);
    }
    out.validate();
    return out;
}

/// Linear interpolation of the capacity curve at an arbitrary day inside its span.
/// No extrapolation: forecasting beyond the data is a different operation.
inline double capacity_at(const CapacityCurve& curve, double day) {
    const auto& pts = curve.points;
    if (pts.empty()) throw DataError("capacity_at: empty curve");
    if (day < pts.front().day || day > pts.back().day)
        throw RangeError("capacity_at: day " + std::to_string(day) + " outside curve span [" +
                         std::to_string(pts.front().day) + ", " + std::to_string(pts.back().day) +
                         "] of cell '" + curve.cell_id + "'");
    auto it = std::lower_bound(pts.begin(), pts.end(), day,
                               [](const CapacityMeasurement& m, double d) { return m.day < d; });
    if (it->day == day) return it->capacity;
    const auto& hi = *it;
    const auto& lo = *(it - 1);
    const double w = (day - lo.day) / (hi.day - lo.day);
    return lo.capacity + w * (hi.capacity - lo.capacity);
}

} // namespace agecal
