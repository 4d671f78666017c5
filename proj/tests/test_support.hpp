#pragma once

// Shared test utilities: independent oracles (dense GP equations via explicit
// inverses, finite differences), random instance generators, and a CLI runner.
// Everything here stays independent of the library's production code paths it
// is used to check.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <random>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agecal/gp.hpp"
#include "agecal/kernel.hpp"
#include "agecal/rng.hpp"

namespace testsup {

using agecal::Hyperparameters;
using agecal::InputVector;
using agecal::Rng;

// ---------------------------------------------------------------------------
// random instances

inline InputVector random_input(Rng& rng) {
    return InputVector{rng.uniform(1.0 / agecal::kMaxTempK, 1.0 / agecal::kMinTempK),
                       rng.uniform(0.0, 100.0), rng.uniform(1.0, 120.0)};
}

inline std::vector<InputVector> random_inputs(Rng& rng, std::size_t n) {
    std::vector<InputVector> X;
    for (std::size_t i = 0; i < n; ++i) X.push_back(random_input(rng));
    return X;
}

inline Hyperparameters random_hypers(Rng& rng, bool allow_zero_noise = false) {
    Hyperparameters h;
    h.theta_t = rng.log_uniform(2e-5, 2e-3);
    h.theta_soc = rng.log_uniform(5.0, 500.0);
    h.theta_dt = rng.log_uniform(1.0, 100.0);
    h.sigma_f2 = rng.log_uniform(0.01, 10.0);
    h.sigma_n2 = allow_zero_noise && rng.uniform01() < 0.3 ? 0.0 : rng.log_uniform(1e-4, 1.0);
    return h;
}

/// Keeps the training covariance well conditioned (cond ~ 1e5-1e6) so that
/// comparisons against explicit-inverse oracles and finite differences are
/// meaningful at tight tolerances.
inline InputVector random_input_tame(Rng& rng) {
    return InputVector{rng.uniform(1.0 / agecal::kMaxTempK, 1.0 / agecal::kMinTempK),
                       rng.uniform(0.0, 100.0), rng.uniform(1.0, 30.0)};
}

inline std::vector<InputVector> random_inputs_tame(Rng& rng, std::size_t n) {
    std::vector<InputVector> X;
    for (std::size_t i = 0; i < n; ++i) X.push_back(random_input_tame(rng));
    return X;
}

inline Hyperparameters random_hypers_tame(Rng& rng) {
    Hyperparameters h;
    h.theta_t = rng.log_uniform(1e-4, 2e-3);
    h.theta_soc = rng.log_uniform(10.0, 300.0);
    h.theta_dt = rng.log_uniform(1.0, 30.0);
    h.sigma_f2 = rng.log_uniform(0.05, 1.0);
    h.sigma_n2 = rng.log_uniform(1e-2, 0.5);
    return h;
}

// ---------------------------------------------------------------------------
// dense GP oracle: the predictive equations and the log marginal likelihood
// evaluated with explicit inverses and determinants, no Cholesky shortcuts

struct DenseOracle {
    Eigen::VectorXd mean;
    Eigen::MatrixXd cov;
    double lml = 0.0;
};

inline DenseOracle dense_gp_oracle(const std::vector<InputVector>& X, const Eigen::VectorXd& y,
                                   const std::vector<InputVector>& Xs,
                                   const Hyperparameters& h) {
    const auto n = static_cast<Eigen::Index>(X.size());
    Eigen::MatrixXd Ky(n, n);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < n; ++j)
            Ky(i, j) = agecal::composed_kernel(X[static_cast<std::size_t>(i)],
                                               X[static_cast<std::size_t>(j)], h, i == j);

    const Eigen::MatrixXd Kinv = Ky.inverse();

    DenseOracle out;
    const auto m = static_cast<Eigen::Index>(Xs.size());
    Eigen::MatrixXd Ksx(m, n), Kss(m, m);
    for (Eigen::Index i = 0; i < m; ++i) {
        for (Eigen::Index j = 0; j < n; ++j)
            Ksx(i, j) = agecal::composed_kernel(Xs[static_cast<std::size_t>(i)],
                                                X[static_cast<std::size_t>(j)], h, false);
        for (Eigen::Index j = 0; j < m; ++j)
            Kss(i, j) = agecal::composed_kernel(Xs[static_cast<std::size_t>(i)],
                                                Xs[static_cast<std::size_t>(j)], h, false);
    }
    out.mean = Ksx * Kinv * y;
    out.cov = Kss - Ksx * Kinv * Ksx.transpose();
    out.lml = -0.5 * y.dot(Kinv * y) - 0.5 * std::log(Ky.determinant()) -
              0.5 * static_cast<double>(n) * std::log(2.0 * M_PI);
    return out;
}

/// Central finite difference of the log marginal likelihood along one
/// log-space coordinate (0..4 = log theta_t, log theta_soc, log theta_dt^2,
/// log sigma_f2, log sigma_n2).
inline double lml_log_space_fd(const std::vector<InputVector>& X, const Eigen::VectorXd& y,
                               const Hyperparameters& h, int coord, double step = 1e-5) {
    const auto value_at = [&](double scale) {
        Hyperparameters hp = h;
        switch (coord) {
            case 0: hp.theta_t *= std::exp(scale); break;
            case 1: hp.theta_soc *= std::exp(scale); break;
            case 2: hp.theta_dt *= std::exp(scale / 2.0); break; // coordinate is log(theta_dt^2)
            case 3: hp.sigma_f2 *= std::exp(scale); break;
            case 4: hp.sigma_n2 *= std::exp(scale); break;
        }
        std::vector<InputVector> Xs = {X[0]};
        return dense_gp_oracle(X, y, Xs, hp).lml;
    };
    return (value_at(step) - value_at(-step)) / (2.0 * step);
}

// ---------------------------------------------------------------------------
// filesystem and subprocess helpers

inline std::filesystem::path fresh_dir(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / ("agecal_test_" + name);
    std::filesystem::remove_all(dir);
    std::filesystem::create_directories(dir);
    return dir;
}

struct CommandResult {
    int exit_code = -1;
    std::string output; // stdout + stderr
};

inline CommandResult run_cli(const std::string& args) {
    const std::string cmd = std::string(AGECAL_CLI_PATH) + " " + args + " 2>&1";
    CommandResult res;
    FILE* pipe = popen(cmd.c_str(), "r");
    if (!pipe) return res;
    char buf[512];
    while (fgets(buf, sizeof(buf), pipe)) res.output += buf;
    const int status = pclose(pipe);
    res.exit_code = WEXITSTATUS(status);
    return res;
}

inline std::string slurp(const std::filesystem::path& p) {
    std::ifstream is(p, std::ios::binary);
    return std::string((std::istreambuf_iterator<char>(is)), std::istreambuf_iterator<char>());
}

} // namespace testsup
