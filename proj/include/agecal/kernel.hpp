#pragma once

#include <cmath>
#include <set>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "agecal/dataset.hpp"
#include "agecal/errors.hpp"

namespace agecal {

/// Model input: x1 = 1/T [1/K], x2 = SOC [%], x3 = storage window [days].
struct InputVector {
    double inv_temp = 0.0;
    double soc = 0.0;
    double dt = 0.0;

    void validate() const {
        if (dt <= 0.0) throw ParameterError("input: dt must be positive");
        if (soc < 0.0 || soc > 100.0) throw ParameterError("input: SOC outside [0, 100]");
        if (inv_temp < 1.0 / kMaxTempK || inv_temp > 1.0 / kMinTempK)
            throw ParameterError("input: 1/T outside the manufacturer temperature window");
    }
};

/// Covariance hyperparameters. Length-scales live in the unit of their input;
/// theta_dt is the offset of the linear window component. Members of `pinned`
/// keep their initial value through optimization.
struct Hyperparameters {
    double theta_t = 1e-3;
    double theta_soc = 1e6;
    double theta_dt = 30.0;
    double sigma_f2 = 1.0;
    double sigma_n2 = 1e-2;
    std::set<std::string> pinned;

    void validate() const {
        if (!(theta_t > 0.0)) throw ParameterError("hyperparameters: theta_t must be positive");
        if (!(theta_soc > 0.0)) throw ParameterError("hyperparameters: theta_soc must be positive");
        if (!(sigma_f2 >= 0.0)) throw ParameterError("hyperparameters: sigma_f2 must be >= 0");
        if (!(sigma_n2 >= 0.0)) throw ParameterError("hyperparameters: sigma_n2 must be >= 0");
    }

    bool is_pinned(const std::string& name) const { return pinned.count(name) != 0; }
};

inline const std::vector<std::string>& hyperparameter_names() {
    static const std::vector<std::string> names = {"theta_t", "theta_soc", "theta_dt", "sigma_f2",
                                                   "sigma_n2"};
    return names;
}

/// Matérn 5/2 correlation at distance r for length-scale ell. In (0, 1], equal
/// to 1 iff r = 0.
inline double matern52(double r, double ell) {
    if (!(ell > 0.0)) throw ParameterError("matern52: length-scale must be positive");
    if (r < 0.0) throw ParameterError("matern52: distance must be non-negative");
    const double t = std::sqrt(5.0) * r / ell;
    return (1.0 + t + t * t / 3.0) * std::exp(-t);
}

/// d matern52 / d ell.
inline double matern52_dell(double r, double ell) {
    if (!(ell > 0.0)) throw ParameterError("matern52: length-scale must be positive");
    const double t = std::sqrt(5.0) * r / ell;
    return t * t * (1.0 + t) / (3.0 * ell) * std::exp(-t);
}

/// Composed covariance: signal variance times Matérn-5/2 in 1/T, times
/// Matérn-5/2 in SOC, times a linear-with-offset component in the window
/// length. Observation noise is added only on the diagonal of a training
/// covariance, which `same_index` selects.
inline double composed_kernel(const InputVector& x, const InputVector& xp,
                              const Hyperparameters& h, bool same_index = false) {
    h.validate();
    const double k_t = matern52(std::abs(x.inv_temp - xp.inv_temp), h.theta_t);
    const double k_soc = matern52(std::abs(x.soc - xp.soc), h.theta_soc);
    const double k_dt = x.dt * xp.dt + h.theta_dt * h.theta_dt;
    double k = h.sigma_f2 * k_t * k_soc * k_dt;
    if (same_index) k += h.sigma_n2;
    return k;
}

/// Covariance matrix between two input sets. Noise lands on entry (i,i) only
/// when `with_noise` is set and X and Xp are the same sequence by identity.
inline Eigen::MatrixXd kernel_matrix(const std::vector<InputVector>& X,
                                     const std::vector<InputVector>& Xp,
                                     const Hyperparameters& h, bool with_noise) {
    if (X.empty() || Xp.empty()) throw ParameterError("kernel_matrix: empty input set");
    h.validate();
    const bool same_set = X.data() == Xp.data() && X.size() == Xp.size();
    Eigen::MatrixXd K(X.size(), Xp.size());
    for (std::size_t i = 0; i < X.size(); ++i)
        for (std::size_t j = 0; j < Xp.size(); ++j)
            K(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) =
                composed_kernel(X[i], Xp[j], h, with_noise && same_set && i == j);
    return K;
}

inline Eigen::MatrixXd kernel_matrix(const std::vector<InputVector>& X, const Hyperparameters& h,
                                     bool with_noise) {
    return kernel_matrix(X, X, h, with_noise);
}

/// dK/dtheta for every hyperparameter, in the natural (linear) parameter.
/// Pinned entries are still produced; the optimizer zeroes them.
struct KernelGradients {
    Eigen::MatrixXd theta_t;
    Eigen::MatrixXd theta_soc;
    Eigen::MatrixXd theta_dt;
    Eigen::MatrixXd sigma_f2;
    Eigen::MatrixXd sigma_n2;

    const Eigen::MatrixXd& by_name(const std::string& name) const {
        if (name == "theta_t") return theta_t;
        if (name == "theta_soc") return theta_soc;
        if (name == "theta_dt") return theta_dt;
        if (name == "sigma_f2") return sigma_f2;
        if (name == "sigma_n2") return sigma_n2;
        throw ParameterError("unknown hyperparameter: " + name);
    }
};

inline KernelGradients kernel_gradients(const std::vector<InputVector>& X,
                                        const Hyperparameters& h) {
    if (X.empty()) throw ParameterError("kernel_gradients: empty input set");
    h.validate();
    const auto n = static_cast<Eigen::Index>(X.size());
    KernelGradients g;
    g.theta_t.resize(n, n);
    g.theta_soc.resize(n, n);
    g.theta_dt.resize(n, n);
    g.sigma_f2.resize(n, n);
    g.sigma_n2 = Eigen::MatrixXd::Identity(n, n);
    for (Eigen::Index i = 0; i < n; ++i) {
        for (Eigen::Index j = 0; j < n; ++j) {
            const auto& a = X[static_cast<std::size_t>(i)];
            const auto& b = X[static_cast<std::size_t>(j)];
            const double r_t = std::abs(a.inv_temp - b.inv_temp);
            const double r_soc = std::abs(a.soc - b.soc);
            const double k_t = matern52(r_t, h.theta_t);
            const double k_soc = matern52(r_soc, h.theta_soc);
            const double k_dt = a.dt * b.dt + h.theta_dt * h.theta_dt;
            g.theta_t(i, j) = h.sigma_f2 * matern52_dell(r_t, h.theta_t) * k_soc * k_dt;
            g.theta_soc(i, j) = h.sigma_f2 * k_t * matern52_dell(r_soc, h.theta_soc) * k_dt;
            g.theta_dt(i, j) = h.sigma_f2 * k_t * k_soc * 2.0 * h.theta_dt;
            g.sigma_f2(i, j) = k_t * k_soc * k_dt;
        }
    }
    return g;
}

} // namespace agecal
