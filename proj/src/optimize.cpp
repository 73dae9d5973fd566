#include "dfilter/optimize.hpp"

#include <Eigen/Cholesky>

#include <cmath>
#include <limits>
#include <stdexcept>

namespace dfilter {

void OptimizerConfig::validate() const {
    if (!(wolfe_c1 > 0.0 && wolfe_c1 < wolfe_c2 && wolfe_c2 < 1.0)) {
        throw std::invalid_argument("optimizer: require 0 < c1 < c2 < 1");
    }
    if (!(grad_tol > 0.0)) {
        throw std::invalid_argument("optimizer: grad_tol must be positive");
    }
    if (!(initial_step > 0.0)) {
        throw std::invalid_argument("optimizer: initial_step must be positive");
    }
}

std::string to_string(OptimStatus s) {
    switch (s) {
        case OptimStatus::converged: return "converged";
        case OptimStatus::max_iter: return "max_iter";
        case OptimStatus::line_search_failure: return "line_search_failure";
        case OptimStatus::non_finite_objective: return "non_finite_objective";
    }
    return "unknown";
}

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

// Internally we minimize phi = -l; gradients are negated accordingly.
struct Point {
    ParamVector theta;
    double f = kInf;  // -l
    Vector g;         // -grad l
    bool ok = false;
};

class Evaluator {
public:
    explicit Evaluator(const Objective& obj) : obj_(obj) {}

    Point at(const ParamVector& theta) const {
        Point p;
        p.theta = theta;
        try {
            ObjectiveValue v = obj_(theta, false);
            if (std::isfinite(v.value) && v.grad.allFinite()) {
                p.f = -v.value;
                p.g = -v.grad;
                p.ok = true;
            }
        } catch (const Error&) {
            // Treated as an infinite objective so the line search backs off.
        }
        return p;
    }

    Matrix neg_hessian(const ParamVector& theta) const { return -obj_(theta, true).hessian; }

private:
    const Objective& obj_;
};

struct LineSearchOutcome {
    Point point;
    bool accepted = false;
};

// Cubic interpolation minimizer on [lo, hi]; falls back to bisection.
double interpolate(double a, double fa, double da, double b, double fb, double db) {
    const double lo = std::min(a, b);
    const double hi = std::max(a, b);
    const double mid = 0.5 * (a + b);
    if (!std::isfinite(fa) || !std::isfinite(fb) || !std::isfinite(da) || !std::isfinite(db)) return mid;
    const double d1 = da + db - 3.0 * (fa - fb) / (a - b);
    const double disc = d1 * d1 - da * db;
    if (disc < 0.0) return mid;
    const double d2 = std::copysign(std::sqrt(disc), b - a);
    const double denom = db - da + 2.0 * d2;
    if (denom == 0.0) return mid;
    const double t = b - (b - a) * (db + d2 - d1) / denom;
    const double margin = 0.1 * (hi - lo);
    if (!std::isfinite(t) || t < lo + margin || t > hi - margin) return mid;
    return t;
}

// Strong Wolfe line search (bracketing then zoom). Near the optimum, where f
// differences are at rounding level, a step that does not increase f and
// satisfies the curvature condition is also accepted.
LineSearchOutcome line_search(const Evaluator& ev, const Point& x0, const Vector& d, double alpha1,
                              const OptimizerConfig& cfg) {
    const double f0 = x0.f;
    const double d0 = x0.g.dot(d);
    const double c1 = cfg.wolfe_c1;
    const double c2 = cfg.wolfe_c2;

    auto eval = [&](double a) {
        Point p = ev.at(x0.theta + a * d);
        const double slope = p.ok ? p.g.dot(d) : kInf;
        return std::pair<Point, double>(std::move(p), slope);
    };
    auto curvature_ok = [&](double slope) { return std::abs(slope) <= -c2 * d0; };
    auto armijo_ok = [&](double a, double f) { return f <= f0 + c1 * a * d0; };

    Point best = x0;
    auto keep_best = [&](const Point& p) {
        if (p.ok && p.f < best.f) best = p;
    };

    auto zoom = [&](double lo, double f_lo, double s_lo, double hi, double f_hi, double s_hi) -> LineSearchOutcome {
        for (int it = 0; it < 40; ++it) {
            const double a = interpolate(lo, f_lo, s_lo, hi, f_hi, s_hi);
            auto [p, slope] = eval(a);
            keep_best(p);
            if (!p.ok || !armijo_ok(a, p.f) || p.f >= f_lo) {
                if (p.ok && p.f <= f0 && curvature_ok(slope)) return {p, true};
                hi = a;
                f_hi = p.f;
                s_hi = slope;
            } else {
                if (curvature_ok(slope)) return {p, true};
                if (slope * (hi - lo) >= 0.0) {
                    hi = lo;
                    f_hi = f_lo;
                    s_hi = s_lo;
                }
                lo = a;
                f_lo = p.f;
                s_lo = slope;
            }
            if (std::abs(hi - lo) * d.lpNorm<Eigen::Infinity>() <=
                1e-15 * std::max(1.0, x0.theta.lpNorm<Eigen::Infinity>())) {
                break;
            }
        }
        // Interval collapsed: take a strict decrease if one was found.
        if (best.f < f0) return {best, true};
        return {best, false};
    };

    double a_prev = 0.0;
    double f_prev = f0;
    double s_prev = d0;
    double a = alpha1;
    for (int it = 0; it < 30; ++it) {
        auto [p, slope] = eval(a);
        keep_best(p);
        if (!p.ok || !armijo_ok(a, p.f) || (it > 0 && p.f >= f_prev)) {
            if (p.ok && p.f <= f0 && curvature_ok(slope)) return {p, true};
            return zoom(a_prev, f_prev, s_prev, a, p.f, slope);
        }
        if (curvature_ok(slope)) return {p, true};
        if (slope >= 0.0) return zoom(a, p.f, slope, a_prev, f_prev, s_prev);
        a_prev = a;
        f_prev = p.f;
        s_prev = slope;
        a *= 2.0;
    }
    return {best, best.f < f0};
}

Vector newton_direction(const Matrix& neg_hess, const Vector& g) {
    const auto p = neg_hess.rows();
    Eigen::LLT<Matrix> llt(neg_hess);
    if (llt.info() == Eigen::Success) return -llt.solve(g);
    for (double mu = 1e-6; mu < 1e300; mu *= 2.0) {
        llt.compute(neg_hess + mu * Matrix::Identity(p, p));
        if (llt.info() == Eigen::Success) return -llt.solve(g);
    }
    return -g;
}

}  // namespace

OptimResult maximize(const Objective& f, const ParamVector& theta0, const OptimizerConfig& cfg) {
    cfg.validate();
    if (!theta0.allFinite()) throw NonFiniteInput("theta0 has non-finite entries");
    Evaluator ev(f);
    const Eigen::Index p = theta0.size();

    Point x = ev.at(theta0);
    if (!x.ok) throw NonFiniteObjective("objective is not finite at theta0");

    OptimResult res;
    auto record = [&](const Point& pt) {
        res.trace.push_back({pt.theta, -pt.f, pt.g.lpNorm<Eigen::Infinity>()});
    };
    record(x);

    Matrix Hinv = Matrix::Identity(p, p);
    bool scaled = false;
    const double g0 = x.g.lpNorm<Eigen::Infinity>();
    if (g0 > 0.0) Hinv *= std::min(1.0, cfg.initial_step / g0);

    res.status = OptimStatus::max_iter;
    std::size_t iter = 0;
    while (true) {
        if (x.g.lpNorm<Eigen::Infinity>() <= cfg.grad_tol) {
            res.status = OptimStatus::converged;
            break;
        }
        if (iter >= cfg.max_iter) {
            res.status = OptimStatus::max_iter;
            break;
        }
        Vector d;
        if (cfg.method == Method::newton) {
            Matrix nh;
            try {
                nh = ev.neg_hessian(x.theta);
            } catch (const Error&) {
                res.status = OptimStatus::non_finite_objective;
                res.message = "Hessian evaluation failed";
                break;
            }
            if (!nh.allFinite()) {
                res.status = OptimStatus::non_finite_objective;
                res.message = "Hessian is not finite";
                break;
            }
            d = newton_direction(nh, x.g);
            const double len = d.lpNorm<Eigen::Infinity>();
            if (iter == 0 && len > cfg.initial_step) d *= cfg.initial_step / len;
        } else {
            d = -Hinv * x.g;
        }
        if (!(x.g.dot(d) < 0.0)) {
            // Not a descent direction for -l; restart from steepest ascent.
            Hinv = Matrix::Identity(p, p) * std::min(1.0, cfg.initial_step / x.g.lpNorm<Eigen::Infinity>());
            scaled = false;
            d = -Hinv * x.g;
        }

        LineSearchOutcome ls = line_search(ev, x, d, 1.0, cfg);
        if (!ls.accepted) {
            res.status = OptimStatus::line_search_failure;
            res.message = "line search found no acceptable step";
            break;
        }
        ++iter;
        const Vector s = ls.point.theta - x.theta;
        const Vector yv = ls.point.g - x.g;
        const double sy = s.dot(yv);
        if (cfg.method == Method::bfgs && sy > 1e-12 * s.norm() * yv.norm()) {
            if (!scaled) {
                Hinv = Matrix::Identity(p, p) * (sy / yv.squaredNorm());
                scaled = true;
            }
            const double rho = 1.0 / sy;
            const Matrix A = Matrix::Identity(p, p) - rho * s * yv.transpose();
            Hinv = A * Hinv * A.transpose() + rho * s * s.transpose();
            Hinv = 0.5 * (Hinv + Hinv.transpose()).eval();
        }
        x = std::move(ls.point);
        record(x);
    }

    res.theta_hat = x.theta;
    res.loglik = -x.f;
    res.grad = -x.g;
    res.iterations = iter;
    res.converged = res.status == OptimStatus::converged;
    if (res.message.empty()) res.message = to_string(res.status);
    return res;
}

OptimResult maximize(const StateSpaceModel& model, const ParamVector& theta0, std::span<const double> y,
                     const OptimizerConfig& cfg) {
    model.check_theta(theta0);
    EvaluateOptions opts;
    opts.init = cfg.init;
    Objective obj = [&](const ParamVector& theta, bool want_hessian) {
        DerivativeReport r = evaluate(model, theta, y, want_hessian ? Order::hessian : Order::gradient, opts);
        return ObjectiveValue{r.loglik, std::move(r.grad), std::move(r.hessian)};
    };
    OptimResult res = maximize(obj, theta0, cfg);
    try {
        DerivativeReport final = evaluate(model, res.theta_hat, y, Order::hessian, opts);
        res.hessian = std::move(final.hessian);
        res.sigma2 = final.sigma2;
        res.grad = std::move(final.grad);
        res.loglik = final.loglik;
    } catch (const Error& e) {
        res.message += std::string("; final Hessian unavailable: ") + e.what();
    }
    return res;
}

MultistartResult multistart(const StateSpaceModel& model, const std::vector<ParamVector>& starts,
                            std::span<const double> y, const OptimizerConfig& cfg) {
    if (starts.empty()) throw std::invalid_argument("multistart: at least one start is required");
    MultistartResult out;
    out.runs.resize(starts.size());
    for (std::size_t i = 0; i < starts.size(); ++i) {
        StartOutcome& run = out.runs[i];
        run.theta0 = starts[i];
        try {
            run.result = maximize(model, starts[i], y, cfg);
        } catch (const std::exception& e) {
            run.error = e.what();
        }
        if (run.result && (!out.best || run.result->loglik > out.best->loglik)) {
            out.best = run.result;
            out.best_index = i;
        }
    }
    return out;
}

}  // namespace dfilter
