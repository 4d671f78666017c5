#pragma once

#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "agecal/dataset.hpp"
#include "agecal/errors.hpp"

namespace agecal {

/// Shortest decimal string that parses back to exactly the same double.
/// Used for data files that must round-trip bit-exactly.
inline std::string format_full(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// Fixed 6-significant-digit formatting for report/plot files.
inline std::string format_sig6(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v, std::chars_format::general, 6);
    return std::string(buf, res.ptr);
}

inline double parse_double(std::string_view tok, const std::string& context) {
    double v = 0.0;
    const char* first = tok.data();
    const char* last = tok.data() + tok.size();
    auto res = std::from_chars(first, last, v);
    if (res.ec != std::errc() || res.ptr != last)
        throw ParseError(context + ": not a number: '" + std::string(tok) + "'");
    return v;
}

inline std::vector<std::string> split_line(const std::string& line) {
    std::vector<std::string> out;
    std::string cur;
    for (char c : line) {
        if (c == ',') {
            out.push_back(cur);
            cur.clear();
        } else if (c != '\r') {
            cur.push_back(c);
        }
    }
    out.push_back(cur);
    return out;
}

/// Writes via a temp file and renames into place so readers never see partial output.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw std::runtime_error("cannot open for writing: " + tmp.string());
        os << content;
        if (!os) throw std::runtime_error("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

inline std::vector<std::string> read_lines(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw ParseError("cannot open file: " + path.string());
    std::vector<std::string> lines;
    std::string line;
    while (std::getline(is, line)) lines.push_back(line);
    return lines;
}

// ---------------------------------------------------------------------------
// cells CSV: `cell_id,day,capacity` (fraction mode) or
//            `cell_id,day,capacity_ah,reference_ah` (absolute mode, normalized on load)

inline std::vector<CapacityCurve> load_cells(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw ParseError(path.string() + ": empty file");

    const auto header = split_line(lines[0]);
    bool absolute = false;
    if (header == std::vector<std::string>{"cell_id", "day", "capacity"}) {
        absolute = false;
    } else if (header == std::vector<std::string>{"cell_id", "day", "capacity_ah", "reference_ah"}) {
        absolute = true;
    } else {
        throw ParseError(path.string() + ": unrecognized cells header '" + lines[0] + "'");
    }
    const std::size_t ncols = absolute ? 4 : 3;

    // Group rows per cell, preserving first-seen cell order.
    std::vector<CapacityCurve> curves;
    std::map<std::string, std::size_t> index;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const std::string ctx = path.string() + ":" + std::to_string(ln + 1);
        const auto cols = split_line(lines[ln]);
        if (cols.size() != ncols)
            throw ParseError(ctx + ": expected " + std::to_string(ncols) + " columns, got " +
                             std::to_string(cols.size()));
        const std::string& id = cols[0];
        const double day = parse_double(cols[1], ctx);
        double cap;
        if (absolute) {
            const double ah = parse_double(cols[2], ctx);
            const double ref = parse_double(cols[3], ctx);
            if (ref <= 0.0) throw DataError(ctx + ": non-positive reference_ah");
            cap = ah / ref;
        } else {
            cap = parse_double(cols[2], ctx);
        }
        auto [it, inserted] = index.try_emplace(id, curves.size());
        if (inserted) curves.push_back(CapacityCurve{id, {}});
        curves[it->second].points.push_back({day, cap});
    }

    for (auto& c : curves) {
        std::stable_sort(c.points.begin(), c.points.end(),
                         [](const CapacityMeasurement& a, const CapacityMeasurement& b) {
                             return a.day < b.day;
                         });
        for (std::size_t i = 1; i < c.points.size(); ++i)
            if (c.points[i].day == c.points[i - 1].day)
                throw DataError(path.string() + ": duplicate day " + format_full(c.points[i].day) +
                                " for cell '" + c.cell_id + "'");
        c.validate();
    }
    return curves;
}

inline std::string cells_to_csv(const std::vector<CapacityCurve>& curves) {
    std::string out = "cell_id,day,capacity\n";
    for (const auto& c : curves)
        for (const auto& p : c.points)
            out += c.cell_id + "," + format_full(p.day) + "," + format_full(p.capacity) + "\n";
    return out;
}

inline void write_cells(const std::filesystem::path& path, const std::vector<CapacityCurve>& curves) {
    write_file_atomic(path, cells_to_csv(curves));
}

// ---------------------------------------------------------------------------
// profile CSV: `cell_id,day_start,day_end,temp_c,soc_pct` (Celsius on disk, Kelvin in memory)

inline std::vector<StressProfile> load_profiles(const std::filesystem::path& path) {
    const auto lines = read_lines(path);
    if (lines.empty()) throw ParseError(path.string() + ": empty file");
    if (split_line(lines[0]) !=
        std::vector<std::string>{"cell_id", "day_start", "day_end", "temp_c", "soc_pct"})
        throw ParseError(path.string() + ": unrecognized profile header '" + lines[0] + "'");

    std::vector<StressProfile> profiles;
    std::map<std::string, std::size_t> index;
    for (std::size_t ln = 1; ln < lines.size(); ++ln) {
        if (lines[ln].empty()) continue;
        const std::string ctx = path.string() + ":" + std::to_string(ln + 1);
        const auto cols = split_line(lines[ln]);
        if (cols.size() != 5)
            throw ParseError(ctx + ": expected 5 columns, got " + std::to_string(cols.size()));
        StressSegment seg;
        seg.day_start = parse_double(cols[1], ctx);
        seg.day_end = parse_double(cols[2], ctx);
        seg.temperature = celsius_to_kelvin(parse_double(cols[3], ctx));
        seg.soc = parse_double(cols[4], ctx);
        auto [it, inserted] = index.try_emplace(cols[0], profiles.size());
        if (inserted) profiles.push_back(StressProfile{cols[0], {}});
        profiles[it->second].segments.push_back(seg);
    }

    for (auto& p : profiles) {
        std::sort(p.segments.begin(), p.segments.end(),
                  [](const StressSegment& a, const StressSegment& b) {
                      return a.day_start < b.day_start;
                  });
        p.validate();
    }
    return profiles;
}

inline std::string profiles_to_csv(const std::vector<StressProfile>& profiles) {
    std::string out = "cell_id,day_start,day_end,temp_c,soc_pct\n";
    for (const auto& p : profiles)
        for (const auto& s : p.segments)
            out += p.cell_id + "," + format_full(s.day_start) + "," + format_full(s.day_end) + "," +
                   format_full(kelvin_to_celsius(s.temperature)) + "," + format_full(s.soc) + "\n";
    return out;
}

inline void write_profiles(const std::filesystem::path& path,
                           const std::vector<StressProfile>& profiles) {
    write_file_atomic(path, profiles_to_csv(profiles));
}

} // namespace agecal
