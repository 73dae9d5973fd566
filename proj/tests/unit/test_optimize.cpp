#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "dfilter/diff_filter.hpp"
#include "dfilter/models.hpp"
#include "dfilter/optimize.hpp"
#include "oracles.hpp"

using namespace dfilter;

namespace {

Objective quadratic(const Vector& target, const Matrix& A) {
    return [target, A](const ParamVector& t, bool want_hessian) {
        const Vector d = t - target;
        ObjectiveValue v;
        v.value = -0.5 * d.dot(A * d);
        v.grad = -A * d;
        if (want_hessian) v.hessian = -A;
        return v;
    };
}

}  // namespace

TEST_CASE("config validation", "[optimize]") {
    OptimizerConfig cfg;
    REQUIRE_NOTHROW(cfg.validate());
    cfg.wolfe_c1 = 0.95;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.grad_tol = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    cfg = {};
    cfg.wolfe_c2 = 1.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
    CHECK(to_string(OptimStatus::converged) == "converged");
}

TEST_CASE("quadratic objective converges in at most p+1 iterations", "[optimize]") {
    Vector target(3);
    target << 1.0, -2.0, 0.5;
    const Vector start = Vector::Zero(3);

    SECTION("identity curvature") {
        const OptimResult r = maximize(quadratic(target, Matrix::Identity(3, 3)), start);
        CHECK(r.converged);
        CHECK(r.iterations <= 4);
        CHECK((r.theta_hat - target).cwiseAbs().maxCoeff() <= 1e-6);
    }
    SECTION("scaled sphere") {
        const OptimResult r = maximize(quadratic(target, 3.0 * Matrix::Identity(3, 3)), start);
        CHECK(r.converged);
        CHECK(r.iterations <= 4);
        CHECK((r.theta_hat - target).cwiseAbs().maxCoeff() <= 1e-6);
    }
    SECTION("newton takes one step") {
        Matrix A(3, 3);
        A << 4, 1, 0, 1, 3, 0.5, 0, 0.5, 2;
        OptimizerConfig cfg;
        cfg.method = Method::newton;
        cfg.initial_step = 10.0;
        const OptimResult r = maximize(quadratic(target, A), start, cfg);
        CHECK(r.converged);
        CHECK(r.iterations <= 2);
        CHECK((r.theta_hat - target).cwiseAbs().maxCoeff() <= 1e-8);
    }
    SECTION("ill-conditioned bfgs still converges") {
        Matrix A = Matrix::Zero(3, 3);
        A.diagonal() << 100.0, 1.0, 0.01;
        const OptimResult r = maximize(quadratic(target, A), start);
        CHECK(r.converged);
        CHECK(r.grad.cwiseAbs().maxCoeff() <= 1e-6);
    }
}

TEST_CASE("already optimal start returns immediately", "[optimize]") {
    Vector target(2);
    target << 0.3, 0.4;
    const OptimResult r = maximize(quadratic(target, Matrix::Identity(2, 2)), target);
    CHECK(r.converged);
    CHECK(r.iterations == 0);
    CHECK(r.theta_hat == target);
}

TEST_CASE("trend fit matches a golden-section search", "[optimize]") {
    oracle::SeriesGen gen(21);
    const std::vector<double> y = gen.random_walk_plus_noise(150, 0.6);
    const models::TrendModel model(1);
    auto l = [&](double t) {
        ParamVector th(1);
        th << t;
        return filter_loglik(model, th, y).loglik;
    };
    // Coarse grid to locate the bracket, then a fine golden-section search.
    double best = -6.0;
    for (double t = -6.0; t <= 3.0; t += 0.25)
        if (l(t) > l(best)) best = t;
    const double golden = oracle::golden_section_max(l, best - 0.25, best + 0.25, 1e-6);

    for (Method method : {Method::bfgs, Method::newton}) {
        OptimizerConfig cfg;
        cfg.method = method;
        ParamVector th0(1);
        th0 << std::log(0.5);
        const OptimResult r = maximize(model, th0, y, cfg);
        REQUIRE(r.converged);
        CHECK(std::abs(r.theta_hat(0) - golden) <= 1e-4);
        CHECK(r.grad.cwiseAbs().maxCoeff() <= 1e-5);
        CHECK(r.hessian.rows() == 1);
        CHECK(r.hessian(0, 0) < 0.0);
        CHECK(r.sigma2 > 0.0);
        // Monotone ascent over accepted iterations.
        for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k].loglik >= r.trace[k - 1].loglik);
    }
}

TEST_CASE("seasonal-AR fit ascends and reports the final evaluation", "[optimize]") {
    oracle::SeriesGen gen(22);
    const std::vector<double> y = gen.mixed(120, 4);
    const models::SeasonalArModel model(4, 2);
    const OptimResult r = maximize(model, models::default_theta0(model), y);
    CHECK(r.loglik >= filter_loglik(model, models::default_theta0(model), y).loglik);
    for (std::size_t k = 1; k < r.trace.size(); ++k) CHECK(r.trace[k].loglik >= r.trace[k - 1].loglik);
    const DerivativeReport at = evaluate(model, r.theta_hat, y, Order::hessian);
    CHECK(at.loglik == r.loglik);
    CHECK(at.grad == r.grad);
    CHECK(at.hessian == r.hessian);
    if (r.converged) CHECK(r.grad.cwiseAbs().maxCoeff() <= OptimizerConfig{}.grad_tol);
}

TEST_CASE("newton certificate at convergence", "[optimize]") {
    oracle::SeriesGen gen(23);
    const std::vector<double> y = gen.mixed(120, 12);
    const models::SeasonalModel model(12);
    OptimizerConfig cfg;
    cfg.method = Method::newton;
    const OptimResult r = maximize(model, models::default_theta0(model), y, cfg);
    REQUIRE(r.converged);
    const Eigen::SelfAdjointEigenSolver<Matrix> es(r.hessian);
    CHECK(es.eigenvalues().maxCoeff() <= cfg.grad_tol);
}

TEST_CASE("non-finite objective at the start", "[optimize]") {
    const models::TrendModel model(1);
    ParamVector th(1);
    th << 1000.0;
    const std::vector<double> y{1.0, 2.0, 3.0};
    CHECK_THROWS_AS(maximize(model, th, y), NonFiniteObjective);
    ParamVector nan(1);
    nan << std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(maximize(quadratic(Vector::Zero(1), Matrix::Identity(1, 1)), nan), NonFiniteInput);
}

TEST_CASE("multistart isolates failures and is deterministic", "[optimize]") {
    oracle::SeriesGen gen(24);
    const std::vector<double> y = gen.random_walk_plus_noise(100, 0.4);
    const models::TrendModel model(1);
    ParamVector bad(1), good(1);
    bad << 1000.0;
    good << std::log(0.5);
    const MultistartResult m = multistart(model, {bad, good, good}, y);
    REQUIRE(m.runs.size() == 3);
    CHECK(!m.runs[0].result.has_value());
    CHECK(!m.runs[0].error.empty());
    REQUIRE(m.best.has_value());
    CHECK(m.best_index == 1);
    REQUIRE(m.runs[1].result.has_value());
    REQUIRE(m.runs[2].result.has_value());
    const OptimResult& a = *m.runs[1].result;
    const OptimResult& b = *m.runs[2].result;
    CHECK(a.theta_hat == b.theta_hat);
    CHECK(a.loglik == b.loglik);
    REQUIRE(a.trace.size() == b.trace.size());
    for (std::size_t k = 0; k < a.trace.size(); ++k) CHECK(a.trace[k].theta == b.trace[k].theta);

    const MultistartResult none = multistart(model, {bad}, y);
    CHECK(!none.best.has_value());
}
