#pragma once

#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "dfilter/diff_filter.hpp"
#include "dfilter/model.hpp"

namespace dfilter {

enum class Method { bfgs, newton };

struct OptimizerConfig {
    Method method = Method::bfgs;
    double grad_tol = 1e-6;      // on the infinity norm of the gradient
    std::size_t max_iter = 200;
    double initial_step = 1.0;   // cap on the first step length in theta
    double wolfe_c1 = 1e-4;
    double wolfe_c2 = 0.9;
    InitialCondition init{};

    /// Throws std::invalid_argument unless 0 < c1 < c2 < 1 and grad_tol > 0.
    void validate() const;
};

enum class OptimStatus { converged, max_iter, line_search_failure, non_finite_objective };

std::string to_string(OptimStatus s);

struct IterationRecord {
    ParamVector theta;
    double loglik = 0.0;
    double grad_norm = 0.0;  // infinity norm
};

struct OptimResult {
    ParamVector theta_hat;
    double loglik = 0.0;
    Vector grad;
    Matrix hessian;  // evaluated once at theta_hat; empty for the generic overload
    double sigma2 = 0.0;
    std::size_t iterations = 0;
    bool converged = false;
    OptimStatus status = OptimStatus::max_iter;
    std::string message;
    std::vector<IterationRecord> trace;
};

/// Value, gradient and (for Newton) Hessian of the function being maximized.
struct ObjectiveValue {
    double value = 0.0;
    Vector grad;
    Matrix hessian;
};

/// Maximizes an arbitrary smooth objective. `want_hessian` is set only when
/// the Newton step needs it.
using Objective = std::function<ObjectiveValue(const ParamVector& theta, bool want_hessian)>;

OptimResult maximize(const Objective& f, const ParamVector& theta0, const OptimizerConfig& cfg = {});

/// Maximizes the concentrated log-likelihood of `model` over theta.
/// Throws NonFiniteObjective if l is not finite at theta0.
OptimResult maximize(const StateSpaceModel& model, const ParamVector& theta0, std::span<const double> y,
                     const OptimizerConfig& cfg = {});

struct StartOutcome {
    ParamVector theta0;
    std::optional<OptimResult> result;
    std::string error;  // set when the start failed outright
};

struct MultistartResult {
    std::optional<OptimResult> best;
    std::size_t best_index = 0;
    std::vector<StartOutcome> runs;
};

/// Runs maximize from every start; failures are recorded per start.
MultistartResult multistart(const StateSpaceModel& model, const std::vector<ParamVector>& starts,
                            std::span<const double> y, const OptimizerConfig& cfg = {});

}  // namespace dfilter
