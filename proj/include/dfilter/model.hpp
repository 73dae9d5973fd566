#pragma once

#include <Eigen/Dense>

#include <cstddef>
#include <string>
#include <vector>

#include "dfilter/errors.hpp"

namespace dfilter {

using Vector = Eigen::VectorXd;
using RowVector = Eigen::RowVectorXd;
using Matrix = Eigen::MatrixXd;

/// Unconstrained working parameters after transforms.
using ParamVector = Eigen::VectorXd;

/// Time-invariant realization of
///   x_n = F x_{n-1} + G v_n,   v_n ~ N(0, Q)
///   y_n = H x_n + w_n,         w_n ~ N(0, R),  R = 1
struct SystemMatrices {
    Matrix F;
    Matrix G;
    RowVector H;
    Matrix Q;
    double R = 1.0;

    std::size_t state_dim() const noexcept { return static_cast<std::size_t>(F.rows()); }
    std::size_t noise_dim() const noexcept { return static_cast<std::size_t>(Q.rows()); }
};

/// Position of the unordered pair {i, j} (i, j < p) in packed upper-triangular storage.
constexpr std::size_t packed_index(std::size_t p, std::size_t i, std::size_t j) noexcept {
    if (i > j) {
        const std::size_t t = i;
        i = j;
        j = t;
    }
    return i * p - (i * (i + 1)) / 2 + j;
}

/// Number of unordered pairs {i, j} with i, j < p.
constexpr std::size_t packed_size(std::size_t p) noexcept { return p * (p + 1) / 2; }

/// First and second parameter derivatives of F, G, H, Q and R.
///
/// Second derivatives are stored once per unordered pair {i, j}, so
/// d2F(i, j) and d2F(j, i) alias the same matrix and mixed partials are
/// symmetric by construction. Every entry starts as an exact zero.
class DerivativeBundle {
public:
    DerivativeBundle() = default;
    DerivativeBundle(std::size_t p, std::size_t m, std::size_t k);

    std::size_t num_params() const noexcept { return p_; }
    std::size_t state_dim() const noexcept { return m_; }
    std::size_t noise_dim() const noexcept { return k_; }

    Matrix& dF(std::size_t i) { return dF_.at(i); }
    const Matrix& dF(std::size_t i) const { return dF_.at(i); }
    Matrix& d2F(std::size_t i, std::size_t j) { return d2F_.at(pair_index(i, j)); }
    const Matrix& d2F(std::size_t i, std::size_t j) const { return d2F_.at(pair_index(i, j)); }

    Matrix& dG(std::size_t i) { return dG_.at(i); }
    const Matrix& dG(std::size_t i) const { return dG_.at(i); }
    Matrix& d2G(std::size_t i, std::size_t j) { return d2G_.at(pair_index(i, j)); }
    const Matrix& d2G(std::size_t i, std::size_t j) const { return d2G_.at(pair_index(i, j)); }

    RowVector& dH(std::size_t i) { return dH_.at(i); }
    const RowVector& dH(std::size_t i) const { return dH_.at(i); }
    RowVector& d2H(std::size_t i, std::size_t j) { return d2H_.at(pair_index(i, j)); }
    const RowVector& d2H(std::size_t i, std::size_t j) const { return d2H_.at(pair_index(i, j)); }

    Matrix& dQ(std::size_t i) { return dQ_.at(i); }
    const Matrix& dQ(std::size_t i) const { return dQ_.at(i); }
    Matrix& d2Q(std::size_t i, std::size_t j) { return d2Q_.at(pair_index(i, j)); }
    const Matrix& d2Q(std::size_t i, std::size_t j) const { return d2Q_.at(pair_index(i, j)); }

    // R is fixed to 1 in every model here; the slots exist so the general
    // recursions keep their full form.
    double& dR(std::size_t i) { return dR_.at(i); }
    double dR(std::size_t i) const { return dR_.at(i); }
    double& d2R(std::size_t i, std::size_t j) { return d2R_.at(pair_index(i, j)); }
    double d2R(std::size_t i, std::size_t j) const { return d2R_.at(pair_index(i, j)); }

    /// Position of the unordered pair {i, j} in packed upper-triangular storage.
    std::size_t pair_index(std::size_t i, std::size_t j) const;

private:
    std::size_t p_ = 0;
    std::size_t m_ = 0;
    std::size_t k_ = 0;
    std::vector<Matrix> dF_, d2F_, dG_, d2G_, dQ_, d2Q_;
    std::vector<RowVector> dH_, d2H_;
    std::vector<double> dR_, d2R_;
};

/// All-zero bundle with the given shapes. Requires p, m, k >= 1.
DerivativeBundle zero_bundle(std::size_t p, std::size_t m, std::size_t k);

/// Throws DimensionMismatch or InvariantViolation if the matrices or the
/// bundle break the shape, symmetry, PSD or R = 1 invariants.
void validate_dimensions(const SystemMatrices& sm, const DerivativeBundle& db);

/// Shape and invariant checks on the system matrices alone.
void validate_dimensions(const SystemMatrices& sm);

struct LabeledValue {
    std::string label;
    double value = 0.0;
};

/// Natural-scale view of a parameter point.
///
/// `params` has one entry per working parameter, in theta order, and is what
/// `StateSpaceModel::encode` consumes. `derived` holds quantities implied by
/// them (e.g. AR coefficients) and is informational only.
struct NaturalParameters {
    std::vector<LabeledValue> params;
    std::vector<LabeledValue> derived;
};

/// A parameterized, time-invariant linear Gaussian state-space model.
///
/// Implementations must be reentrant: realize/differentiate are pure
/// functions of theta.
class StateSpaceModel {
public:
    virtual ~StateSpaceModel() = default;

    virtual std::string name() const = 0;
    virtual std::size_t num_params() const = 0;
    virtual std::size_t state_dim() const = 0;
    virtual std::size_t noise_dim() const = 0;

    virtual SystemMatrices realize(const ParamVector& theta) const = 0;
    virtual DerivativeBundle differentiate(const ParamVector& theta) const = 0;

    virtual NaturalParameters describe(const ParamVector& theta) const = 0;
    /// Inverse of describe().params.
    virtual ParamVector encode(const std::vector<double>& natural) const = 0;

    /// Throws DimensionMismatch if theta has the wrong length, NonFiniteInput if
    /// any entry is not finite.
    void check_theta(const ParamVector& theta) const;
};

}  // namespace dfilter
