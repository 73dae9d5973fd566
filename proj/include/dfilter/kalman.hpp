#pragma once

#include <span>
#include <vector>

#include "dfilter/model.hpp"

namespace dfilter {

/// sigma^2 below this value is treated as degenerate.
inline constexpr double kSigma2Floor = 1e-300;

/// x_{0|0} = 0, V_{0|0} = kappa * I. Does not depend on theta.
struct InitialCondition {
    double kappa = 1e4;
};

struct Prediction {
    Vector x;
    Matrix V;
};

struct FilterStep {
    Vector x_pred;
    Matrix V_pred;
    Vector gain;
    double eps = 0.0;
    double r = 1.0;
    Vector x_filt;
    Matrix V_filt;
};

struct LikelihoodSummary {
    double loglik = 0.0;
    double sigma2 = 0.0;
    std::size_t n_obs = 0;
    std::vector<double> eps_trace;
    std::vector<double> r_trace;
};

struct FilterRun {
    std::vector<FilterStep> steps;
    LikelihoodSummary summary;
    /// Largest |V - V^T| / max|V| seen before symmetrization.
    double max_asymmetry = 0.0;
};

/// (V + V^T) / 2 in place; returns the relative asymmetry removed.
double symmetrize(Matrix& V);

/// x_pred = F x, V_pred = F V F^T + G Q G^T (symmetrized).
Prediction predict(const Vector& x_filt_prev, const Matrix& V_filt_prev, const SystemMatrices& sm);

/// Scalar-observation measurement update with R = 1.
FilterStep update(const Vector& x_pred, const Matrix& V_pred, double y, const SystemMatrices& sm);

/// Runs predict/update over the series from the initial condition and
/// evaluates the concentrated log-likelihood.
FilterRun run_filter(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                     const InitialCondition& init = {});

/// Same recursion on explicit matrices.
FilterRun run_filter(const SystemMatrices& sm, std::span<const double> y, const InitialCondition& init = {});

/// Likelihood only; per-step quantities other than eps_n and r_n are not retained.
LikelihoodSummary filter_loglik(const StateSpaceModel& model, const ParamVector& theta,
                                std::span<const double> y, const InitialCondition& init = {});

namespace detail {

// Unchecked step kernels shared by run_filter and evaluate(). `asym` receives
// the relative asymmetry removed by symmetrization.
Prediction predict_step(const Vector& x, const Matrix& V, const SystemMatrices& sm, double& asym);
FilterStep update_step(const Vector& x_pred, const Matrix& V_pred, double y, const SystemMatrices& sm,
                       double& asym);

}  // namespace detail

/// l = -1/2 (N log(2 pi sigma2) + sum log r_n + N), sigma2 = (1/N) sum eps_n^2 / r_n.
LikelihoodSummary concentrated_loglik(std::vector<double> eps_trace, std::vector<double> r_trace);

}  // namespace dfilter
