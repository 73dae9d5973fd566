#pragma once

#include <span>
#include <string>
#include <vector>

#include "dfilter/diff_filter.hpp"
#include "dfilter/model.hpp"

namespace dfilter {

struct FdConfig {
    double rel_step = 1e-4;
    double min_step = 1e-4;  // floor for coordinates near zero
    /// Step for second differences of l alone (no analytic gradient involved).
    double value_hessian_rel_step = 1e-3;
    InitialCondition init{};

    void validate() const;
};

/// max(rel_step * |theta_j|, min_step).
double fd_step(double theta_j, double rel_step, double min_step);

/// Central differences of l; exactly 2p likelihood runs.
/// Throws NonFiniteObjective naming the stencil point if l fails there.
Vector fd_gradient(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                   const FdConfig& cfg = {});

/// Central differences of the analytic gradient, symmetrized; 2p gradient passes.
Matrix fd_hessian(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                  const FdConfig& cfg = {});

/// Second differences of l alone, independent of the derivative recursions.
Matrix fd_hessian_values(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                         const FdConfig& cfg = {});

/// |a - b| / max(|a|, |b|, 1e-8).
double relative_error(double a, double b);

struct EntryComparison {
    std::string label;  // "g[i]" or "H[i,j]"
    double analytic = 0.0;
    double numeric = 0.0;
    double abs_err = 0.0;
    double rel_err = 0.0;
    bool pass = true;
};

struct ComparisonTolerances {
    double grad_rel = 1e-4;
    double hess_rel = 1e-5;
    double value_hess_rel = 1e-3;  // against second differences of l
    double abs_floor = 1e-6;  // entries within this absolute error pass regardless
};

struct ComparisonReport {
    DerivativeReport analytic;
    Vector numeric_grad;
    Matrix numeric_hessian;
    double max_rel_err_grad = 0.0;
    double max_rel_err_hess = 0.0;
    std::vector<EntryComparison> entries;
    bool pass = true;

    double analytic_seconds = 0.0;      // one pass with order=gradient
    double fd_gradient_seconds = 0.0;   // 2p likelihood runs
};

ComparisonReport compare(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                         const FdConfig& cfg = {}, const ComparisonTolerances& tol = {});

}  // namespace dfilter
