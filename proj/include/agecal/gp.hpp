#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Dense>

#include "agecal/errors.hpp"
#include "agecal/kernel.hpp"
#include "agecal/preprocess.hpp"
#include "agecal/rng.hpp"

namespace agecal {

inline InputVector input_of(const TrainingRow& r) { return InputVector{r.inv_temp, r.soc, r.dt}; }

struct Range {
    double lo = 0.0;
    double hi = 0.0;
    void validate(const std::string& name) const {
        if (!(lo > 0.0) || !(hi > lo))
            throw ParameterError("init range " + name + ": bounds must be positive with lo < hi");
    }
};

/// Log-uniform initialization ranges. The length-scale ranges are multipliers
/// on the training span of their input, which keeps initialization scale-free.
struct InitRanges {
    Range theta_t_span{0.1, 10.0};
    Range theta_soc_span{0.1, 10.0};
    Range theta_dt{1.0, 300.0};
    Range sigma_f2{1e-4, 1e2};
    Range sigma_n2{1e-8, 1.0};

    void validate() const {
        theta_t_span.validate("theta_t_span");
        theta_soc_span.validate("theta_soc_span");
        theta_dt.validate("theta_dt");
        sigma_f2.validate("sigma_f2");
        sigma_n2.validate("sigma_n2");
    }
};

struct FitConfig {
    int restarts = 10;
    int max_iters = 200;
    double grad_tol = 1e-6;
    InitRanges init_ranges;
    std::uint64_t seed = 0;
    double jitter = 1e-8;
    /// Values used for pinned hyperparameters, and as the first restart when
    /// warm_start is set.
    Hyperparameters init;
    bool warm_start = false;

    void validate() const {
        if (restarts < 1) throw ParameterError("fit config: restarts must be >= 1");
        if (max_iters < 1) throw ParameterError("fit config: max_iters must be >= 1");
        if (!(grad_tol > 0.0)) throw ParameterError("fit config: grad_tol must be positive");
        if (!(jitter > 0.0)) throw ParameterError("fit config: jitter must be positive");
        init_ranges.validate();
    }
};

struct Posterior {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;  // filled only when full_cov was requested
    Eigen::VectorXd var;  // predictive variance, clamped at zero
    Eigen::VectorXd std;
};

/// Immutable fitted model: training inputs/targets, hyperparameters and the
/// cached Cholesky factor of K + sigma_n^2 I with its solve against y.
struct GpModel {
    std::vector<InputVector> X;
    Eigen::VectorXd y;
    Hyperparameters h;
    Eigen::MatrixXd chol;   // lower triangular
    Eigen::VectorXd alpha;  // (K + sigma_n^2 I)^{-1} y
    double jitter_used = 0.0;
    double lml = 0.0;
    std::uint64_t fit_seed = 0;

    Eigen::Index size() const { return y.size(); }
};

/// Gradient of the log marginal likelihood in the optimizer's parameterization:
/// log theta_t, log theta_soc, log theta_dt^2, log sigma_f2, log sigma_n2.
struct LogSpaceGrad {
    double theta_t = 0.0;
    double theta_soc = 0.0;
    double theta_dt = 0.0;
    double sigma_f2 = 0.0;
    double sigma_n2 = 0.0;

    double by_name(const std::string& name) const {
        if (name == "theta_t") return theta_t;
        if (name == "theta_soc") return theta_soc;
        if (name == "theta_dt") return theta_dt;
        if (name == "sigma_f2") return sigma_f2;
        if (name == "sigma_n2") return sigma_n2;
        throw ParameterError("unknown hyperparameter: " + name);
    }
};

struct LmlEval {
    double value = 0.0;
    LogSpaceGrad grad;
    double jitter_used = 0.0;
};

namespace detail {

/// Cholesky with diagonal jitter escalation 0, j, 100 j, 10000 j times the
/// mean diagonal. Throws once the whole ladder fails.
inline Eigen::MatrixXd cholesky_with_jitter(const Eigen::MatrixXd& A, double base_jitter,
                                            double& jitter_used) {
    const double mean_diag = A.diagonal().mean();
    std::string attempts;
    for (double level : {0.0, base_jitter, base_jitter * 1e2, base_jitter * 1e4}) {
        Eigen::MatrixXd B = A;
        const double added = level * mean_diag;
        if (added > 0.0) B.diagonal().array() += added;
        Eigen::LLT<Eigen::MatrixXd> llt(B);
        if (llt.info() == Eigen::Success) {
            jitter_used = added;
            return Eigen::MatrixXd(llt.matrixL());
        }
        if (!attempts.empty()) attempts += ", ";
        attempts += format_full(added);
    }
    throw NumericalError("Cholesky factorization failed; attempted jitter levels: " + attempts);
}

constexpr int kNumHypers = 5;
using LogParams = Eigen::Matrix<double, kNumHypers, 1>;

inline LogParams to_log_params(const Hyperparameters& h) {
    LogParams u;
    u[0] = std::log(h.theta_t);
    u[1] = std::log(h.theta_soc);
    u[2] = std::log(std::max(h.theta_dt * h.theta_dt, 1e-300));
    u[3] = std::log(std::max(h.sigma_f2, 1e-300));
    u[4] = std::log(std::max(h.sigma_n2, 1e-300));
    return u;
}

inline Hyperparameters from_log_params(const LogParams& u, const std::set<std::string>& pinned) {
    Hyperparameters h;
    h.theta_t = std::exp(u[0]);
    h.theta_soc = std::exp(u[1]);
    h.theta_dt = std::sqrt(std::exp(u[2]));
    h.sigma_f2 = std::exp(u[3]);
    h.sigma_n2 = std::exp(u[4]);
    h.pinned = pinned;
    return h;
}

/// Training rows grouped by exactly-equal input vectors. Replicated inputs
/// collapse to their mean target with rescaled noise, which is an exact
/// rewrite of the marginal likelihood and keeps the optimizer cost at the
/// number of distinct conditions instead of the number of rows.
struct ReducedData {
    std::vector<InputVector> X;  // distinct inputs, first-occurrence order
    Eigen::VectorXd ybar;        // per-group target mean
    Eigen::VectorXd counts;      // per-group replication count
    double sse = 0.0;            // within-group sum of squared deviations
    Eigen::Index n_total = 0;

    bool has_replicates() const { return n_total > static_cast<Eigen::Index>(X.size()); }
};

inline ReducedData reduce_rows(const std::vector<TrainingRow>& rows) {
    std::map<std::array<double, 3>, std::size_t> index;
    std::vector<std::vector<double>> targets;
    ReducedData d;
    for (const auto& r : rows) {
        const std::array<double, 3> key = {r.dt, r.inv_temp, r.soc};
        auto [it, inserted] = index.try_emplace(key, d.X.size());
        if (inserted) {
            d.X.push_back(input_of(r));
            targets.emplace_back();
        }
        targets[it->second].push_back(r.dq);
    }
    const auto m = static_cast<Eigen::Index>(d.X.size());
    d.ybar.resize(m);
    d.counts.resize(m);
    for (Eigen::Index g = 0; g < m; ++g) {
        const auto& t = targets[static_cast<std::size_t>(g)];
        double mean = 0.0;
        for (double v : t) mean += v;
        mean /= static_cast<double>(t.size());
        d.ybar[g] = mean;
        d.counts[g] = static_cast<double>(t.size());
        for (double v : t) d.sse += (v - mean) * (v - mean);
        d.n_total += static_cast<Eigen::Index>(t.size());
    }
    return d;
}

/// Log marginal likelihood (and optionally its log-space gradient) of the full
/// replicated dataset, evaluated through the group-mean representation.
inline double lml_reduced(const ReducedData& d, const Hyperparameters& h, double base_jitter,
                          LogSpaceGrad* grad_out) {
    const auto m = static_cast<Eigen::Index>(d.X.size());
    const double n = static_cast<double>(d.n_total);
    if (d.has_replicates() && !(h.sigma_n2 > 0.0))
        throw NumericalError("replicated targets require positive noise variance");

    Eigen::MatrixXd Ky = kernel_matrix(d.X, h, false);
    Eigen::VectorXd noise_diag = h.sigma_n2 * d.counts.cwiseInverse();
    Ky.diagonal() += noise_diag;

    double jitter_used = 0.0;
    const Eigen::MatrixXd L = cholesky_with_jitter(Ky, base_jitter, jitter_used);
    const Eigen::VectorXd beta =
        L.triangularView<Eigen::Lower>().transpose().solve(
            L.triangularView<Eigen::Lower>().solve(d.ybar));

    double value = -0.5 * d.ybar.dot(beta) - L.diagonal().array().log().sum() -
                   0.5 * n * std::log(2.0 * M_PI) - 0.5 * d.counts.array().log().sum();
    if (d.has_replicates()) {
        const double extra = n - static_cast<double>(m);
        value += -0.5 * extra * std::log(h.sigma_n2) - d.sse / (2.0 * h.sigma_n2);
    }

    if (grad_out) {
        Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(m, m);
        L.triangularView<Eigen::Lower>().solveInPlace(Kinv);
        L.triangularView<Eigen::Lower>().transpose().solveInPlace(Kinv);
        const Eigen::MatrixXd A = beta * beta.transpose() - Kinv;

        const KernelGradients kg = kernel_gradients(d.X, h);
        const auto half_trace = [&](const Eigen::MatrixXd& dK) {
            return 0.5 * A.cwiseProduct(dK).sum();
        };
        grad_out->theta_t = half_trace(kg.theta_t) * h.theta_t;
        grad_out->theta_soc = half_trace(kg.theta_soc) * h.theta_soc;
        // d/d log(theta_dt^2): the derivative wrt the squared offset is
        // sigma_f2 * M1 * M2, computed directly so theta_dt = 0 stays valid
        Eigen::MatrixXd dK_dc(m, m);
        for (Eigen::Index i = 0; i < m; ++i)
            for (Eigen::Index j = 0; j < m; ++j) {
                const auto& a = d.X[static_cast<std::size_t>(i)];
                const auto& b = d.X[static_cast<std::size_t>(j)];
                dK_dc(i, j) = h.sigma_f2 *
                              matern52(std::abs(a.inv_temp - b.inv_temp), h.theta_t) *
                              matern52(std::abs(a.soc - b.soc), h.theta_soc);
            }
        grad_out->theta_dt = half_trace(dK_dc) * (h.theta_dt * h.theta_dt);
        grad_out->sigma_f2 = half_trace(kg.sigma_f2) * h.sigma_f2;

        double g_noise = 0.5 * (A.diagonal().array() * noise_diag.array()).sum();
        if (d.has_replicates()) {
            const double extra = n - static_cast<double>(m);
            g_noise += -0.5 * extra + d.sse / (2.0 * h.sigma_n2);
        }
        grad_out->sigma_n2 = g_noise;
    }
    return value;
}

} // namespace detail

/// Log marginal likelihood of targets y at inputs X under hyperparameters h,
/// with its gradient in the optimizer's log parameterization.
inline LmlEval log_marginal_likelihood(const std::vector<InputVector>& X, const Eigen::VectorXd& y,
                                       const Hyperparameters& h, double base_jitter = 1e-8) {
    if (X.empty() || static_cast<Eigen::Index>(X.size()) != y.size())
        throw ParameterError("log_marginal_likelihood: empty or mismatched inputs");
    h.validate();
    const auto n = static_cast<Eigen::Index>(X.size());

    const Eigen::MatrixXd Ky = kernel_matrix(X, h, true);
    LmlEval out;
    const Eigen::MatrixXd L = detail::cholesky_with_jitter(Ky, base_jitter, out.jitter_used);
    const Eigen::VectorXd alpha =
        L.triangularView<Eigen::Lower>().transpose().solve(
            L.triangularView<Eigen::Lower>().solve(y));
    out.value = -0.5 * y.dot(alpha) - L.diagonal().array().log().sum() -
                0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);

    Eigen::MatrixXd Kinv = Eigen::MatrixXd::Identity(n, n);
    L.triangularView<Eigen::Lower>().solveInPlace(Kinv);
    L.triangularView<Eigen::Lower>().transpose().solveInPlace(Kinv);
    const Eigen::MatrixXd A = alpha * alpha.transpose() - Kinv;

    const KernelGradients kg = kernel_gradients(X, h);
    const auto half_trace = [&](const Eigen::MatrixXd& dK) {
        return 0.5 * A.cwiseProduct(dK).sum();
    };
    out.grad.theta_t = half_trace(kg.theta_t) * h.theta_t;
    out.grad.theta_soc = half_trace(kg.theta_soc) * h.theta_soc;
    out.grad.theta_dt = h.theta_dt != 0.0
                            ? half_trace(kg.theta_dt) * h.theta_dt / 2.0
                            : 0.0;  // d/d log(theta_dt^2) via chain rule
    out.grad.sigma_f2 = half_trace(kg.sigma_f2) * h.sigma_f2;
    out.grad.sigma_n2 = half_trace(kg.sigma_n2) * h.sigma_n2;
    return out;
}

namespace detail {

struct AscentResult {
    LogParams u;
    double value = -std::numeric_limits<double>::infinity();
    bool usable = false;
};

inline LogParams zero_pinned(LogParams g, const std::set<std::string>& pinned) {
    const auto& names = hyperparameter_names();
    for (int k = 0; k < kNumHypers; ++k)
        if (pinned.count(names[static_cast<std::size_t>(k)])) g[k] = 0.0;
    return g;
}

inline LogParams grad_to_vector(const LogSpaceGrad& g) {
    LogParams v;
    v << g.theta_t, g.theta_soc, g.theta_dt, g.sigma_f2, g.sigma_n2;
    return v;
}

/// Gradient ascent with backtracking line search (sufficient increase, shrink
/// 0.5, at most 30 backtracks per step).
inline AscentResult gradient_ascent(const ReducedData& data, LogParams u,
                                    const std::set<std::string>& pinned, const FitConfig& cfg) {
    constexpr double kArmijo = 1e-4;
    constexpr double kLogClamp = 46.0;  // exp(46) ~ 1e20; keeps evaluations finite
    const auto clamp = [&](LogParams v) {
        for (int k = 0; k < kNumHypers; ++k) v[k] = std::clamp(v[k], -kLogClamp, kLogClamp);
        return v;
    };
    const auto eval = [&](const LogParams& v, LogSpaceGrad* g) {
        try {
            return lml_reduced(data, from_log_params(v, pinned), cfg.jitter, g);
        } catch (const NumericalError&) {
            return -std::numeric_limits<double>::infinity();
        }
    };

    AscentResult res;
    u = clamp(u);
    LogSpaceGrad grad_struct;
    double f = eval(u, &grad_struct);
    if (!std::isfinite(f)) return res;
    LogParams g = zero_pinned(grad_to_vector(grad_struct), pinned);

    // the accepted step seeds the next line search, so flat likelihood
    // plateaus (pruned ARD directions) can be traversed in few iterations
    double step0 = 1.0;
    for (int iter = 0; iter < cfg.max_iters; ++iter) {
        if (g.cwiseAbs().maxCoeff() < cfg.grad_tol) break;
        const double g2 = g.squaredNorm();
        double step = step0;
        bool accepted = false;
        LogParams u_next;
        double f_next = 0.0;
        for (int bt = 0; bt < 30; ++bt) {
            u_next = clamp(u + step * g);
            f_next = eval(u_next, nullptr);
            if (std::isfinite(f_next) && f_next >= f + kArmijo * step * g2) {
                accepted = true;
                break;
            }
            step *= 0.5;
        }
        if (!accepted) break;
        step0 = std::clamp(2.0 * step, 1e-3, 64.0);
        u = u_next;
        f = eval(u, &grad_struct);
        g = zero_pinned(grad_to_vector(grad_struct), pinned);
    }

    res.u = u;
    res.value = f;
    res.usable = std::isfinite(f);
    return res;
}

inline double span_of(const std::vector<InputVector>& X, double InputVector::* field,
                      double fallback) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = -std::numeric_limits<double>::infinity();
    for (const auto& x : X) {
        lo = std::min(lo, x.*field);
        hi = std::max(hi, x.*field);
    }
    const double span = hi - lo;
    return span > 0.0 ? span : fallback;
}

} // namespace detail

/// Rebuilds the cached factorization for an existing hyperparameter set, e.g.
/// after loading a model file or extending the training set without refit.
inline GpModel assemble_model(const std::vector<TrainingRow>& rows, const Hyperparameters& h,
                              std::uint64_t fit_seed, double base_jitter = 1e-8) {
    if (rows.empty()) throw FitError("assemble_model: no rows");
    h.validate();
    GpModel model;
    model.h = h;
    model.fit_seed = fit_seed;
    model.X.reserve(rows.size());
    model.y.resize(static_cast<Eigen::Index>(rows.size()));
    for (std::size_t i = 0; i < rows.size(); ++i) {
        model.X.push_back(input_of(rows[i]));
        model.y[static_cast<Eigen::Index>(i)] = rows[i].dq;
    }
    const Eigen::MatrixXd Ky = kernel_matrix(model.X, model.h, true);
    model.chol = detail::cholesky_with_jitter(Ky, base_jitter, model.jitter_used);
    model.alpha = model.chol.triangularView<Eigen::Lower>().transpose().solve(
        model.chol.triangularView<Eigen::Lower>().solve(model.y));
    model.lml = -0.5 * model.y.dot(model.alpha) - model.chol.diagonal().array().log().sum() -
                0.5 * static_cast<double>(model.y.size()) * std::log(2.0 * M_PI);
    return model;
}

/// Maximizes the marginal likelihood over cfg.restarts independent runs from
/// log-uniform initializations (warm start replaces the first run when
/// requested); the best converged run wins, ties broken by restart order.
inline GpModel fit(const std::vector<TrainingRow>& rows, const FitConfig& cfg,
                   const std::set<std::string>& pinned = {}) {
    cfg.validate();
    for (const auto& name : pinned) {
        bool known = false;
        for (const auto& n : hyperparameter_names()) known = known || n == name;
        if (!known) throw ParameterError("unknown pinned hyperparameter: " + name);
    }
    if (rows.size() < 2) throw FitError("fit: needs at least 2 training rows");
    for (const auto& r : rows)
        if (!std::isfinite(r.dq) || !std::isfinite(r.dt) || !std::isfinite(r.inv_temp) ||
            !std::isfinite(r.soc))
            throw DataError("fit: non-finite value in training rows");

    const detail::ReducedData data = detail::reduce_rows(rows);
    if (data.X.size() < 2) throw FitError("fit: needs at least one pair of distinct inputs");

    // Manufacturer-window spans stand in when an input does not vary.
    const double span_t =
        detail::span_of(data.X, &InputVector::inv_temp, 1.0 / kMinTempK - 1.0 / kMaxTempK);
    const double span_soc = detail::span_of(data.X, &InputVector::soc, 100.0);

    Rng rng(cfg.seed);
    const auto sample_start = [&]() {
        Hyperparameters h = cfg.init;
        const auto& ir = cfg.init_ranges;
        if (!pinned.count("theta_t"))
            h.theta_t = rng.log_uniform(ir.theta_t_span.lo * span_t, ir.theta_t_span.hi * span_t);
        if (!pinned.count("theta_soc"))
            h.theta_soc =
                rng.log_uniform(ir.theta_soc_span.lo * span_soc, ir.theta_soc_span.hi * span_soc);
        if (!pinned.count("theta_dt")) h.theta_dt = rng.log_uniform(ir.theta_dt.lo, ir.theta_dt.hi);
        if (!pinned.count("sigma_f2")) h.sigma_f2 = rng.log_uniform(ir.sigma_f2.lo, ir.sigma_f2.hi);
        if (!pinned.count("sigma_n2")) h.sigma_n2 = rng.log_uniform(ir.sigma_n2.lo, ir.sigma_n2.hi);
        return h;
    };

    detail::AscentResult best;
    for (int r = 0; r < cfg.restarts; ++r) {
        const Hyperparameters start = (r == 0 && cfg.warm_start) ? cfg.init : sample_start();
        const auto res = detail::gradient_ascent(data, detail::to_log_params(start), pinned, cfg);
        if (res.usable && res.value > best.value) best = res;
    }
    if (!best.usable) throw FitError("fit: every restart failed to produce a finite likelihood");

    Hyperparameters h_best = detail::from_log_params(best.u, pinned);
    // Pinned values are exact copies of the configured initials, not exp(log(.)) round-trips.
    if (pinned.count("theta_t")) h_best.theta_t = cfg.init.theta_t;
    if (pinned.count("theta_soc")) h_best.theta_soc = cfg.init.theta_soc;
    if (pinned.count("theta_dt")) h_best.theta_dt = cfg.init.theta_dt;
    if (pinned.count("sigma_f2")) h_best.sigma_f2 = cfg.init.sigma_f2;
    if (pinned.count("sigma_n2")) h_best.sigma_n2 = cfg.init.sigma_n2;

    return assemble_model(rows, h_best, cfg.seed, cfg.jitter);
}

inline std::vector<TrainingRow> training_rows_of(const GpModel& model) {
    std::vector<TrainingRow> rows;
    rows.reserve(model.X.size());
    for (std::size_t i = 0; i < model.X.size(); ++i) {
        const auto& x = model.X[i];
        rows.push_back(TrainingRow{x.dt, x.inv_temp, x.soc, model.y[static_cast<Eigen::Index>(i)]});
    }
    return rows;
}

/// Posterior mean and covariance at test inputs. Observation noise is never
/// added to the predictive covariance; callers add sigma_n2 when they compare
/// against noisy measurements.
inline Posterior predict(const GpModel& model, const std::vector<InputVector>& Xstar,
                         bool full_cov = false) {
    if (Xstar.empty()) throw ParameterError("predict: empty test set");
    model.h.validate();
    const auto m = static_cast<Eigen::Index>(Xstar.size());

    const Eigen::MatrixXd Ks = kernel_matrix(model.X, Xstar, model.h, false);  // n x m
    Posterior post;
    post.mean = Ks.transpose() * model.alpha;

    const Eigen::MatrixXd V = model.chol.triangularView<Eigen::Lower>().solve(Ks);
    post.var.resize(m);
    if (full_cov) {
        Eigen::MatrixXd Kss = kernel_matrix(Xstar, model.h, false);
        post.cov = Kss - V.transpose() * V;
        post.cov = 0.5 * (post.cov + post.cov.transpose()).eval();
        post.var = post.cov.diagonal();
    } else {
        for (Eigen::Index j = 0; j < m; ++j) {
            const auto& x = Xstar[static_cast<std::size_t>(j)];
            post.var[j] = composed_kernel(x, x, model.h, false) - V.col(j).squaredNorm();
        }
    }
    post.var = post.var.cwiseMax(0.0);
    post.std = post.var.cwiseSqrt();
    return post;
}

/// Relative stress-factor relevance: inverse length-scales scaled by the
/// training span of their input, normalized to sum to one.
struct Relevance {
    double temperature = 0.0;
    double soc = 0.0;
};

inline Relevance relevance(const GpModel& model) {
    const double span_t = detail::span_of(model.X, &InputVector::inv_temp, 0.0);
    const double span_soc = detail::span_of(model.X, &InputVector::soc, 0.0);
    if (span_t <= 0.0 && span_soc <= 0.0)
        throw UndefinedRelevanceError("relevance: neither temperature nor SOC varies in training");
    const double r_t = span_t / model.h.theta_t;
    const double r_soc = span_soc / model.h.theta_soc;
    const double total = r_t + r_soc;
    return Relevance{r_t / total, r_soc / total};
}

} // namespace agecal
