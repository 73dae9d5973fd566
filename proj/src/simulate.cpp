#include "dfilter/simulate.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <random>
#include <stdexcept>

namespace dfilter {

namespace {

// Symmetric square root of a PSD matrix; tiny negative eigenvalues are clipped.
Matrix psd_sqrt(const Matrix& Q) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(Q);
    const Vector lam = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * lam.asDiagonal() * es.eigenvectors().transpose();
}

}  // namespace

std::vector<double> simulate(const SystemMatrices& sm, const SimulationConfig& cfg) {
    if (cfg.n_obs < 2) throw std::invalid_argument("simulate: need at least two observations");
    if (!(cfg.sigma2 >= 0.0) || !std::isfinite(cfg.sigma2)) {
        throw std::invalid_argument("simulate: observation variance must be finite and nonnegative");
    }
    if (!std::isfinite(cfg.trend_level)) throw std::invalid_argument("simulate: initial level must be finite");
    validate_dimensions(sm);

    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const auto m = static_cast<Eigen::Index>(sm.state_dim());
    const auto k = static_cast<Eigen::Index>(sm.noise_dim());
    const Matrix L = psd_sqrt(sm.Q);
    const double sw = std::sqrt(cfg.sigma2);

    Vector x = Vector::Zero(m);
    x(0) = cfg.trend_level;
    Vector v(k);
    std::vector<double> y;
    y.reserve(cfg.n_obs);
    for (std::size_t n = 0; n < cfg.n_obs; ++n) {
        for (Eigen::Index i = 0; i < k; ++i) v(i) = normal(rng);
        x = sm.F * x + sm.G * (L * v);
        const double w = normal(rng);
        y.push_back(sm.H.dot(x) + sw * w);
    }
    return y;
}

std::vector<double> simulate(const StateSpaceModel& model, const ParamVector& theta, const SimulationConfig& cfg) {
    model.check_theta(theta);
    return simulate(model.realize(theta), cfg);
}

}  // namespace dfilter
