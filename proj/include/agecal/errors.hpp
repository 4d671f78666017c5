#pragma once

#include <stdexcept>
#include <string>

namespace agecal {

/// Malformed input file (bad column count, non-numeric field, ...).
struct ParseError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Structurally valid input that violates a data invariant.
struct DataError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Curve whose capacity maximum sits on its final point; the cell has to be dropped.
struct EmptyAfterRebaseError : DataError {
    using DataError::DataError;
};

/// Query outside the measured span of a curve.
struct RangeError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Stress profile does not cover the requested interval.
struct CoverageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Invalid function parameter (non-positive length-scale, negative variance, ...).
struct ParameterError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

/// Linear-algebra failure that survived jitter escalation.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Hyperparameter optimization failed on every restart.
struct FitError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Metric requested on an empty pair set.
struct MetricError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Relevance is undefined when neither stress input varies in the training data.
struct UndefinedRelevanceError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

/// Bad key/value in a config file.
struct ConfigError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

} // namespace agecal
