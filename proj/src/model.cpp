#include "dfilter/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace dfilter {

DimensionMismatch::DimensionMismatch(std::string name, std::size_t expected_rows,
                                     std::size_t expected_cols, std::size_t rows, std::size_t cols)
    : Error("dimension mismatch in " + name + ": expected " + std::to_string(expected_rows) + "x" +
            std::to_string(expected_cols) + ", got " + std::to_string(rows) + "x" +
            std::to_string(cols)),
      name_(std::move(name)),
      expected_rows_(expected_rows),
      expected_cols_(expected_cols) {}

DerivativeBundle::DerivativeBundle(std::size_t p, std::size_t m, std::size_t k)
    : p_(p), m_(m), k_(k) {
    const auto mi = static_cast<Eigen::Index>(m);
    const auto ki = static_cast<Eigen::Index>(k);
    const std::size_t pairs = packed_size(p);
    dF_.assign(p, Matrix::Zero(mi, mi));
    d2F_.assign(pairs, Matrix::Zero(mi, mi));
    dG_.assign(p, Matrix::Zero(mi, ki));
    d2G_.assign(pairs, Matrix::Zero(mi, ki));
    dH_.assign(p, RowVector::Zero(mi));
    d2H_.assign(pairs, RowVector::Zero(mi));
    dQ_.assign(p, Matrix::Zero(ki, ki));
    d2Q_.assign(pairs, Matrix::Zero(ki, ki));
    dR_.assign(p, 0.0);
    d2R_.assign(pairs, 0.0);
}

std::size_t DerivativeBundle::pair_index(std::size_t i, std::size_t j) const {
    if (i >= p_ || j >= p_) {
        throw std::out_of_range("parameter index out of range");
    }
    return packed_index(p_, i, j);
}

DerivativeBundle zero_bundle(std::size_t p, std::size_t m, std::size_t k) {
    if (p == 0 || m == 0 || k == 0) {
        throw std::invalid_argument("zero_bundle: p, m and k must be at least 1");
    }
    return DerivativeBundle(p, m, k);
}

namespace {

template <typename M>
void expect_shape(const std::string& name, const M& mat, std::size_t rows, std::size_t cols) {
    if (static_cast<std::size_t>(mat.rows()) != rows || static_cast<std::size_t>(mat.cols()) != cols) {
        throw DimensionMismatch(name, rows, cols, static_cast<std::size_t>(mat.rows()),
                                static_cast<std::size_t>(mat.cols()));
    }
}

bool exactly_symmetric(const Matrix& a) { return a == a.transpose(); }

bool nearly_symmetric(const Matrix& a) {
    const double scale = std::max(1.0, a.cwiseAbs().maxCoeff());
    return (a - a.transpose()).cwiseAbs().maxCoeff() <= 1e-12 * scale;
}

}  // namespace

void validate_dimensions(const SystemMatrices& sm) {
    const std::size_t m = static_cast<std::size_t>(sm.F.rows());
    const std::size_t k = static_cast<std::size_t>(sm.Q.rows());
    expect_shape("F", sm.F, m, m);
    expect_shape("G", sm.G, m, k);
    expect_shape("H", sm.H, 1, m);
    expect_shape("Q", sm.Q, k, k);
    if (sm.R != 1.0) {
        throw InvariantViolation("R == 1");
    }
    if (!nearly_symmetric(sm.Q)) {
        throw InvariantViolation("Q symmetric");
    }
    if (k > 0) {
        Eigen::SelfAdjointEigenSolver<Matrix> eig(sm.Q, Eigen::EigenvaluesOnly);
        const double scale = std::max(1.0, sm.Q.cwiseAbs().maxCoeff());
        if (eig.eigenvalues().minCoeff() < -1e-12 * scale) {
            throw InvariantViolation("Q positive semidefinite");
        }
    }
}

void validate_dimensions(const SystemMatrices& sm, const DerivativeBundle& db) {
    validate_dimensions(sm);
    const std::size_t m = sm.state_dim();
    const std::size_t k = sm.noise_dim();
    if (db.state_dim() != m) {
        throw DimensionMismatch("bundle state dimension", m, m, db.state_dim(), db.state_dim());
    }
    if (db.noise_dim() != k) {
        throw DimensionMismatch("bundle noise dimension", k, k, db.noise_dim(), db.noise_dim());
    }
    const std::size_t p = db.num_params();
    for (std::size_t i = 0; i < p; ++i) {
        const std::string s = "[" + std::to_string(i) + "]";
        expect_shape("dF" + s, db.dF(i), m, m);
        expect_shape("dG" + s, db.dG(i), m, k);
        expect_shape("dH" + s, db.dH(i), 1, m);
        expect_shape("dQ" + s, db.dQ(i), k, k);
        if (!exactly_symmetric(db.dQ(i))) {
            throw InvariantViolation("dQ symmetric");
        }
        for (std::size_t j = i; j < p; ++j) {
            const std::string ij = "[" + std::to_string(i) + "][" + std::to_string(j) + "]";
            expect_shape("d2F" + ij, db.d2F(i, j), m, m);
            expect_shape("d2G" + ij, db.d2G(i, j), m, k);
            expect_shape("d2H" + ij, db.d2H(i, j), 1, m);
            expect_shape("d2Q" + ij, db.d2Q(i, j), k, k);
            if (!exactly_symmetric(db.d2Q(i, j))) {
                throw InvariantViolation("d2Q symmetric");
            }
        }
    }
}

void StateSpaceModel::check_theta(const ParamVector& theta) const {
    const std::size_t p = num_params();
    if (static_cast<std::size_t>(theta.size()) != p) {
        throw DimensionMismatch("theta", p, 1, static_cast<std::size_t>(theta.size()), 1);
    }
    if (!theta.allFinite()) {
        throw NonFiniteInput("theta has non-finite entries");
    }
}

}  // namespace dfilter
