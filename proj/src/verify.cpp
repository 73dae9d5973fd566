#include "dfilter/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <sstream>
#include <stdexcept>

#include "dfilter/kalman.hpp"

namespace dfilter {

void FdConfig::validate() const {
    if (!(rel_step > 0.0) || !(min_step > 0.0) || !(value_hessian_rel_step > 0.0)) {
        throw std::invalid_argument("finite-difference steps must be positive");
    }
}

double fd_step(double theta_j, double rel_step, double min_step) {
    return std::max(rel_step * std::abs(theta_j), min_step);
}

namespace {

std::string describe_point(const ParamVector& theta) {
    std::ostringstream os;
    os.precision(17);
    os << "(";
    for (Eigen::Index i = 0; i < theta.size(); ++i) os << (i ? ", " : "") << theta(i);
    os << ")";
    return os.str();
}

double loglik_at(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                 const FdConfig& cfg) {
    double l = 0.0;
    try {
        l = filter_loglik(model, theta, y, cfg.init).loglik;
    } catch (const Error& e) {
        throw NonFiniteObjective("log-likelihood failed at stencil point " + describe_point(theta) + ": " +
                                 e.what());
    }
    if (!std::isfinite(l)) {
        throw NonFiniteObjective("log-likelihood not finite at stencil point " + describe_point(theta));
    }
    return l;
}

Vector grad_at(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
               const FdConfig& cfg) {
    EvaluateOptions opts;
    opts.init = cfg.init;
    try {
        Vector g = evaluate(model, theta, y, Order::gradient, opts).grad;
        if (!g.allFinite()) throw NonFiniteObjective("gradient not finite");
        return g;
    } catch (const Error& e) {
        throw NonFiniteObjective("gradient failed at stencil point " + describe_point(theta) + ": " + e.what());
    }
}

}  // namespace

Vector fd_gradient(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                   const FdConfig& cfg) {
    cfg.validate();
    model.check_theta(theta);
    const Eigen::Index p = theta.size();
    Vector g(p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double h = fd_step(theta(j), cfg.rel_step, cfg.min_step);
        ParamVector tp = theta;
        ParamVector tm = theta;
        tp(j) += h;
        tm(j) -= h;
        g(j) = (loglik_at(model, tp, y, cfg) - loglik_at(model, tm, y, cfg)) / (2.0 * h);
    }
    return g;
}

Matrix fd_hessian(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                  const FdConfig& cfg) {
    cfg.validate();
    model.check_theta(theta);
    const Eigen::Index p = theta.size();
    Matrix H(p, p);
    for (Eigen::Index j = 0; j < p; ++j) {
        const double h = fd_step(theta(j), cfg.rel_step, cfg.min_step);
        ParamVector tp = theta;
        ParamVector tm = theta;
        tp(j) += h;
        tm(j) -= h;
        H.col(j) = (grad_at(model, tp, y, cfg) - grad_at(model, tm, y, cfg)) / (2.0 * h);
    }
    return 0.5 * (H + H.transpose());
}

Matrix fd_hessian_values(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                         const FdConfig& cfg) {
    cfg.validate();
    model.check_theta(theta);
    const Eigen::Index p = theta.size();
    Vector h(p);
    for (Eigen::Index j = 0; j < p; ++j) h(j) = fd_step(theta(j), cfg.value_hessian_rel_step, cfg.value_hessian_rel_step);
    const double l0 = loglik_at(model, theta, y, cfg);
    auto shifted = [&](Eigen::Index i, double si, Eigen::Index j, double sj) {
        ParamVector t = theta;
        t(i) += si * h(i);
        t(j) += sj * h(j);
        return loglik_at(model, t, y, cfg);
    };
    Matrix H(p, p);
    for (Eigen::Index i = 0; i < p; ++i) {
        ParamVector tp = theta;
        ParamVector tm = theta;
        tp(i) += h(i);
        tm(i) -= h(i);
        H(i, i) = (loglik_at(model, tp, y, cfg) - 2.0 * l0 + loglik_at(model, tm, y, cfg)) / (h(i) * h(i));
        for (Eigen::Index j = i + 1; j < p; ++j) {
            const double v = (shifted(i, 1, j, 1) - shifted(i, 1, j, -1) - shifted(i, -1, j, 1) +
                              shifted(i, -1, j, -1)) /
                             (4.0 * h(i) * h(j));
            H(i, j) = H(j, i) = v;
        }
    }
    return H;
}

double relative_error(double a, double b) {
    return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

ComparisonReport compare(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                         const FdConfig& cfg, const ComparisonTolerances& tol) {
    using clock = std::chrono::steady_clock;
    ComparisonReport rep;
    EvaluateOptions opts;
    opts.init = cfg.init;

    auto t0 = clock::now();
    (void)evaluate(model, theta, y, Order::gradient, opts);
    auto t1 = clock::now();
    rep.numeric_grad = fd_gradient(model, theta, y, cfg);
    auto t2 = clock::now();
    rep.analytic_seconds = std::chrono::duration<double>(t1 - t0).count();
    rep.fd_gradient_seconds = std::chrono::duration<double>(t2 - t1).count();

    rep.analytic = evaluate(model, theta, y, Order::hessian, opts);
    rep.numeric_hessian = fd_hessian(model, theta, y, cfg);

    const Eigen::Index p = theta.size();
    auto add = [&](std::string label, double a, double n, double rel_tol, double& max_rel) {
        EntryComparison e;
        e.label = std::move(label);
        e.analytic = a;
        e.numeric = n;
        e.abs_err = std::abs(a - n);
        e.rel_err = relative_error(a, n);
        e.pass = std::isfinite(a) && std::isfinite(n) && (e.rel_err <= rel_tol || e.abs_err <= tol.abs_floor);
        max_rel = std::max(max_rel, e.rel_err);
        rep.pass = rep.pass && e.pass;
        rep.entries.push_back(std::move(e));
    };
    for (Eigen::Index i = 0; i < p; ++i) {
        add("g[" + std::to_string(i) + "]", rep.analytic.grad(i), rep.numeric_grad(i), tol.grad_rel,
            rep.max_rel_err_grad);
    }
    for (Eigen::Index i = 0; i < p; ++i) {
        for (Eigen::Index j = i; j < p; ++j) {
            add("H[" + std::to_string(i) + "," + std::to_string(j) + "]", rep.analytic.hessian(i, j),
                rep.numeric_hessian(i, j), tol.hess_rel, rep.max_rel_err_hess);
        }
    }
    return rep;
}

}  // namespace dfilter
