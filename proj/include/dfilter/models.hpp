#pragma once

#include <memory>
#include <string>
#include <vector>

#include "dfilter/model.hpp"

namespace dfilter::models {

/// tau^2 = exp(theta) and its first two derivatives (all equal).
struct LogVariance {
    double q = 0.0;
    double dq = 0.0;
    double d2q = 0.0;
};

/// Throws Overflow if exp(theta) is not finite.
LogVariance log_variance_transform(double theta);

/// beta = C (e^theta - 1) / (e^theta + 1) = C tanh(theta / 2), with
/// d beta / d theta and d^2 beta / d theta^2.
struct Parcor {
    double beta = 0.0;
    double d1 = 0.0;
    double d2 = 0.0;
};

Parcor parcor_transform(double theta, double bound);

/// AR coefficients a_1..a_m from partial autocorrelations beta_1..beta_m.
Vector levinson_expand(const Vector& beta);

/// J(k, i) = d a_k / d beta_i.
Matrix levinson_jacobian(const Vector& beta);

/// Second derivatives d^2 a_k / d beta_i d beta_j, stored as T[k](i, j).
std::vector<Matrix> levinson_hessian(const Vector& beta);

/// Largest eigenvalue modulus of the AR companion matrix with first row `a`.
double companion_spectral_radius(const Vector& a);

/// (1 - B)^order T_n = v_n observed with unit noise. One parameter, log tau^2.
class TrendModel final : public StateSpaceModel {
public:
    explicit TrendModel(int order);

    std::string name() const override;
    std::size_t num_params() const override { return 1; }
    std::size_t state_dim() const override { return static_cast<std::size_t>(order_); }
    std::size_t noise_dim() const override { return 1; }
    int order() const { return order_; }

    SystemMatrices realize(const ParamVector& theta) const override;
    DerivativeBundle differentiate(const ParamVector& theta) const override;
    NaturalParameters describe(const ParamVector& theta) const override;
    ParamVector encode(const std::vector<double>& natural) const override;

private:
    int order_;
};

/// Second-order trend plus a dummy seasonal of the given period.
/// theta = (log tau1^2, log tau2^2).
class SeasonalModel final : public StateSpaceModel {
public:
    explicit SeasonalModel(int period);

    std::string name() const override;
    std::size_t num_params() const override { return 2; }
    std::size_t state_dim() const override { return static_cast<std::size_t>(period_ + 1); }
    std::size_t noise_dim() const override { return 2; }
    int period() const { return period_; }

    SystemMatrices realize(const ParamVector& theta) const override;
    DerivativeBundle differentiate(const ParamVector& theta) const override;
    NaturalParameters describe(const ParamVector& theta) const override;
    ParamVector encode(const std::vector<double>& natural) const override;

private:
    int period_;
};

/// Trend, seasonal and a stationary AR(ar_order) component parameterized by
/// partial autocorrelations. theta = (log tau1^2, log tau2^2, log tau3^2,
/// theta_4 .. theta_{3+ar_order}) with beta_j = C tanh(theta_{3+j} / 2).
class SeasonalArModel final : public StateSpaceModel {
public:
    SeasonalArModel(int period, int ar_order, double parcor_bound = 1.0);

    std::string name() const override;
    std::size_t num_params() const override { return static_cast<std::size_t>(3 + ar_order_); }
    std::size_t state_dim() const override { return static_cast<std::size_t>(period_ + 1 + ar_order_); }
    std::size_t noise_dim() const override { return 3; }
    int period() const { return period_; }
    int ar_order() const { return ar_order_; }
    double parcor_bound() const { return bound_; }

    /// Row of F holding the AR coefficients (0-based).
    std::size_t ar_row() const { return static_cast<std::size_t>(period_ + 1); }

    Vector parcors(const ParamVector& theta) const;
    Vector ar_coefficients(const ParamVector& theta) const;

    SystemMatrices realize(const ParamVector& theta) const override;
    DerivativeBundle differentiate(const ParamVector& theta) const override;
    NaturalParameters describe(const ParamVector& theta) const override;
    /// natural = (tau1^2, tau2^2, tau3^2, beta_1 .. beta_m).
    ParamVector encode(const std::vector<double>& natural) const override;

private:
    int period_;
    int ar_order_;
    double bound_;
};

/// Canonical starting point for each family.
ParamVector default_theta0(const StateSpaceModel& model);

struct ModelConfig {
    std::string family = "trend";
    int trend_order = 1;
    int period = 12;
    int ar_order = 2;
    double parcor_bound = 1.0;
};

/// Throws std::invalid_argument on unknown family or bad hyperparameters.
std::unique_ptr<StateSpaceModel> make_model(const ModelConfig& cfg);

}  // namespace dfilter::models
