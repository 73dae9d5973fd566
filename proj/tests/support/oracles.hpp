#pragma once

// Test-only oracles. Nothing here calls into the derivative recursions.

#include <Eigen/Dense>

#include <cmath>
#include <functional>
#include <numbers>
#include <random>
#include <vector>

#include "dfilter/model.hpp"

namespace oracle {

using dfilter::Matrix;
using dfilter::Vector;

/// Plain triple-loop product, used as an independent check on Eigen expressions.
inline Matrix matmul(const Matrix& a, const Matrix& b) {
    Matrix c = Matrix::Zero(a.rows(), b.cols());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index k = 0; k < a.cols(); ++k)
            for (Eigen::Index j = 0; j < b.cols(); ++j) c(i, j) += a(i, k) * b(k, j);
    return c;
}

inline Matrix transpose(const Matrix& a) {
    Matrix t(a.cols(), a.rows());
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) t(j, i) = a(i, j);
    return t;
}

struct RefRun {
    double loglik = 0.0;
    double sigma2 = 0.0;
    std::vector<double> eps;
    std::vector<double> r;
    std::vector<Vector> x_filt;
    std::vector<Matrix> V_filt;
    std::vector<Vector> x_pred;
    std::vector<Matrix> V_pred;
};

/// Reference filter: explicit inverse of the 1x1 innovation variance and the
/// Joseph-form covariance update.
inline RefRun reference_filter(const dfilter::SystemMatrices& sm, const std::vector<double>& y, double kappa) {
    const Eigen::Index m = sm.F.rows();
    Vector x = Vector::Zero(m);
    Matrix V = kappa * Matrix::Identity(m, m);
    const Matrix H = sm.H;  // 1 x m
    const Matrix Ft = transpose(sm.F);
    const Matrix GQGt = matmul(matmul(sm.G, sm.Q), transpose(sm.G));
    RefRun out;
    double s = 0.0;
    double logr = 0.0;
    for (double yn : y) {
        Vector xp = matmul(sm.F, x);
        Matrix Vp = matmul(matmul(sm.F, V), Ft) + GQGt;
        const Matrix S = matmul(matmul(H, Vp), transpose(H));
        const double r = S(0, 0) + sm.R;
        const Matrix Sinv = Matrix::Constant(1, 1, 1.0 / r);
        const Matrix K = matmul(matmul(Vp, transpose(H)), Sinv);
        const double e = yn - matmul(H, xp)(0, 0);
        x = xp + K.col(0) * e;
        const Matrix IKH = Matrix::Identity(m, m) - matmul(K, H);
        V = matmul(matmul(IKH, Vp), transpose(IKH)) + sm.R * matmul(K, transpose(K));
        out.x_pred.push_back(xp);
        out.V_pred.push_back(Vp);
        out.x_filt.push_back(x);
        out.V_filt.push_back(V);
        out.eps.push_back(e);
        out.r.push_back(r);
        s += e * e / r;
        logr += std::log(r);
    }
    const double N = static_cast<double>(y.size());
    out.sigma2 = s / N;
    out.loglik = -0.5 * (N * std::log(2.0 * std::numbers::pi * out.sigma2) + logr + N);
    return out;
}

using ScalarFn = std::function<double(const Vector&)>;
using VectorFn = std::function<Vector(const Vector&)>;

inline double step_for(double t, double rel) { return rel * std::max(std::abs(t), 1.0); }

inline Vector central_gradient(const ScalarFn& f, const Vector& t, double rel) {
    Vector g(t.size());
    for (Eigen::Index j = 0; j < t.size(); ++j) {
        const double h = step_for(t(j), rel);
        Vector a = t, b = t;
        a(j) += h;
        b(j) -= h;
        g(j) = (f(a) - f(b)) / (2.0 * h);
    }
    return g;
}

/// Column j holds the central difference of f in direction j.
inline Matrix central_jacobian(const VectorFn& f, const Vector& t, double rel) {
    Matrix J;
    for (Eigen::Index j = 0; j < t.size(); ++j) {
        const double h = step_for(t(j), rel);
        Vector a = t, b = t;
        a(j) += h;
        b(j) -= h;
        const Vector col = (f(a) - f(b)) / (2.0 * h);
        if (J.size() == 0) J.resize(col.size(), t.size());
        J.col(j) = col;
    }
    return J;
}

/// Second differences of a scalar function.
inline Matrix second_differences(const ScalarFn& f, const Vector& t, double rel) {
    const Eigen::Index p = t.size();
    Matrix H(p, p);
    const double f0 = f(t);
    for (Eigen::Index i = 0; i < p; ++i) {
        const double hi = step_for(t(i), rel);
        Vector a = t, b = t;
        a(i) += hi;
        b(i) -= hi;
        H(i, i) = (f(a) - 2.0 * f0 + f(b)) / (hi * hi);
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double hj = step_for(t(j), rel);
            auto at = [&](double si, double sj) {
                Vector u = t;
                u(i) += si * hi;
                u(j) += sj * hj;
                return f(u);
            };
            H(i, j) = H(j, i) = (at(1, 1) - at(1, -1) - at(-1, 1) + at(-1, -1)) / (4.0 * hi * hj);
        }
    }
    return H;
}

/// Second differences at steps h and 2h combined to cancel the h^2 term.
inline Matrix second_differences_extrapolated(const ScalarFn& f, const Vector& t, double rel) {
    return (4.0 * second_differences(f, t, rel) - second_differences(f, t, 2.0 * rel)) / 3.0;
}

/// Relative error with the same floor convention as the library's reports.
inline double rel_err(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

/// Max over entries of the per-entry relative error, ignoring entries whose
/// absolute difference is within `abs_floor`.
inline double max_rel_err(const Matrix& a, const Matrix& b, double abs_floor = 0.0) {
    double worst = 0.0;
    for (Eigen::Index i = 0; i < a.rows(); ++i)
        for (Eigen::Index j = 0; j < a.cols(); ++j) {
            if (std::abs(a(i, j) - b(i, j)) <= abs_floor) continue;
            worst = std::max(worst, rel_err(a(i, j), b(i, j)));
        }
    return worst;
}

/// Golden-section maximization of a unimodal f on [a, b] down to width `tol`.
inline double golden_section_max(const std::function<double(double)>& f, double a, double b, double tol) {
    const double g = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = b - g * (b - a), d = a + g * (b - a);
    double fc = f(c), fd = f(d);
    while (b - a > tol) {
        if (fc > fd) {
            b = d;
            d = c;
            fd = fc;
            c = b - g * (b - a);
            fc = f(c);
        } else {
            a = c;
            c = d;
            fc = fd;
            d = a + g * (b - a);
            fd = f(d);
        }
    }
    return 0.5 * (a + b);
}

/// Synthetic data independent of the library's simulator.
struct SeriesGen {
    std::mt19937_64 rng;
    std::normal_distribution<double> z{0.0, 1.0};

    explicit SeriesGen(std::uint64_t seed) : rng(seed) {}

    /// Random-walk level plus a sinusoidal season, an AR(1) wiggle and unit noise.
    std::vector<double> mixed(std::size_t n, int period, double level_sd = 0.3, double season_amp = 2.0) {
        std::vector<double> y(n);
        double level = 10.0;
        double ar = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            level += level_sd * z(rng);
            ar = 0.6 * ar + 0.5 * z(rng);
            const double season = season_amp * std::sin(2.0 * std::numbers::pi * static_cast<double>(t) / period);
            y[t] = level + season + ar + z(rng);
        }
        return y;
    }

    std::vector<double> random_walk_plus_noise(std::size_t n, double level_sd) {
        std::vector<double> y(n);
        double level = 0.0;
        for (std::size_t t = 0; t < n; ++t) {
            level += level_sd * z(rng);
            y[t] = level + z(rng);
        }
        return y;
    }
};

}  // namespace oracle
