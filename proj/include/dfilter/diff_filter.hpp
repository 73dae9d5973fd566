#pragma once

#include <span>
#include <vector>

#include "dfilter/kalman.hpp"
#include "dfilter/model.hpp"

namespace dfilter {

/// How much derivative state evaluate() propagates.
enum class Order { value, gradient, hessian };

/// First-order sensitivities of the state mean and covariance, one entry per
/// parameter. In the filtered phase `dgain` holds dK_n/dtheta_i as well.
struct SensitivityState {
    std::vector<Vector> dx;
    std::vector<Matrix> dV;
    std::vector<Vector> dgain;

    static SensitivityState zeros(std::size_t p, std::size_t m);
};

/// Second-order sensitivities, stored once per unordered pair {i, j}.
struct CurvatureState {
    std::size_t p = 0;
    std::vector<Vector> d2x;
    std::vector<Matrix> d2V;

    static CurvatureState zeros(std::size_t p, std::size_t m);

    Vector& x(std::size_t i, std::size_t j) { return d2x[packed_index(p, i, j)]; }
    const Vector& x(std::size_t i, std::size_t j) const { return d2x[packed_index(p, i, j)]; }
    Matrix& V(std::size_t i, std::size_t j) { return d2V[packed_index(p, i, j)]; }
    const Matrix& V(std::size_t i, std::size_t j) const { return d2V[packed_index(p, i, j)]; }
};

/// Derivatives of the innovation eps_n and its variance r_n.
struct InnovationSensitivities {
    Vector deps;
    Vector dr;
};

struct InnovationCurvatures {
    Matrix d2eps;
    Matrix d2r;
};

struct GradientSummary {
    double sigma2 = 0.0;
    Vector dsigma2;
    Vector grad;
};

struct DerivativeReport {
    Order order = Order::value;
    double loglik = 0.0;
    double sigma2 = 0.0;
    std::size_t n_obs = 0;
    Vector grad;
    Matrix hessian;
    Vector dsigma2;
    Matrix d2sigma2;

    // Per-step traces; deps/dr are N x p and only filled when requested.
    std::vector<double> eps_trace;
    std::vector<double> r_trace;
    Matrix deps_trace;
    Matrix dr_trace;

    /// Largest relative asymmetry removed from V, dV or d2V by symmetrization.
    double max_asymmetry = 0.0;
};

struct EvaluateOptions {
    InitialCondition init{};
    bool keep_traces = false;
};

// Single-step recursions. Each call validates shapes; evaluate() runs the same
// code without the per-call checks.

SensitivityState predict_sensitivities(const SensitivityState& prev, const Vector& x_filt_prev,
                                       const Matrix& V_filt_prev, const SystemMatrices& sm,
                                       const DerivativeBundle& db);

InnovationSensitivities innovation_sensitivities(const SensitivityState& pred, const Vector& x_pred,
                                                 const Matrix& V_pred, const SystemMatrices& sm,
                                                 const DerivativeBundle& db);

/// Filtered-phase sensitivities (dx, dV and dgain) at time n.
SensitivityState update_sensitivities(const SensitivityState& pred, const FilterStep& step,
                                      const InnovationSensitivities& innov, const SystemMatrices& sm,
                                      const DerivativeBundle& db);

/// sigma2, its gradient and the log-likelihood gradient from per-step traces.
/// `deps` and `dr` are N x p.
GradientSummary sigma2_and_gradient(std::span<const double> eps, std::span<const double> r,
                                    const Matrix& deps, const Matrix& dr);

CurvatureState predict_curvatures(const CurvatureState& prev, const SensitivityState& sens_prev,
                                  const Vector& x_filt_prev, const Matrix& V_filt_prev,
                                  const SystemMatrices& sm, const DerivativeBundle& db);

InnovationCurvatures innovation_curvatures(const CurvatureState& pred, const SensitivityState& sens_pred,
                                           const Vector& x_pred, const Matrix& V_pred,
                                           const SystemMatrices& sm, const DerivativeBundle& db);

/// Filtered-phase curvatures at time n. `sens_filt` supplies dK.
CurvatureState update_curvatures(const CurvatureState& pred, const SensitivityState& sens_pred,
                                 const SensitivityState& sens_filt, const FilterStep& step,
                                 const InnovationSensitivities& innov, const InnovationCurvatures& curv,
                                 const SystemMatrices& sm, const DerivativeBundle& db);

/// One forward pass producing l, sigma2 and, depending on `order`, the
/// gradient and Hessian of the concentrated log-likelihood.
DerivativeReport evaluate(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                          Order order, const EvaluateOptions& opts = {});

/// Same pass on explicit matrices and derivatives.
DerivativeReport evaluate(const SystemMatrices& sm, const DerivativeBundle& db, std::span<const double> y,
                          Order order, const EvaluateOptions& opts = {});

}  // namespace dfilter
