#pragma once

#include <cmath>
#include <vector>

#include "agecal/errors.hpp"

namespace agecal {

/// One prediction/measurement pair; sigma is the predictive standard
/// deviation used by the calibration score.
struct EvalPair {
    double predicted = 0.0;
    double measured = 0.0;
    double sigma = 0.0;
};

inline double rmse(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw MetricError("rmse: empty pair set");
    double sum = 0.0;
    for (const auto& p : pairs) {
        const double r = p.predicted - p.measured;
        sum += r * r;
    }
    return std::sqrt(sum / static_cast<double>(pairs.size()));
}

inline double mae(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw MetricError("mae: empty pair set");
    double sum = 0.0;
    for (const auto& p : pairs) sum += std::abs(p.predicted - p.measured);
    return sum / static_cast<double>(pairs.size());
}

/// Percentage of pairs with |predicted - measured| strictly inside the 2-sigma
/// band; about 95.4 when the uncertainty estimates are accurate.
inline double calibration_score_2sigma(const std::vector<EvalPair>& pairs) {
    if (pairs.empty()) throw MetricError("calibration score: empty pair set");
    std::size_t inside = 0;
    for (const auto& p : pairs) {
        if (p.sigma < 0.0) throw MetricError("calibration score: negative sigma");
        if (std::abs(p.predicted - p.measured) < 2.0 * p.sigma) ++inside;
    }
    return 100.0 * static_cast<double>(inside) / static_cast<double>(pairs.size());
}

} // namespace agecal
