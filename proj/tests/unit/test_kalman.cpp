#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <numbers>
#include <random>

#include "dfilter/kalman.hpp"
#include "dfilter/models.hpp"
#include "oracles.hpp"

using namespace dfilter;
using Catch::Matchers::WithinAbs;
using Catch::Matchers::WithinRel;

namespace {

SystemMatrices scalar_system(double q) {
    SystemMatrices sm;
    sm.F = Matrix::Ones(1, 1);
    sm.G = Matrix::Ones(1, 1);
    sm.H = RowVector::Ones(1);
    sm.Q = Matrix::Constant(1, 1, q);
    return sm;
}

Matrix random_psd(std::mt19937_64& rng, Eigen::Index m) {
    std::normal_distribution<double> z;
    Matrix A(m, m);
    for (Eigen::Index i = 0; i < m; ++i)
        for (Eigen::Index j = 0; j < m; ++j) A(i, j) = z(rng);
    return A * A.transpose();
}

}  // namespace

TEST_CASE("predict: scalar and identity cases", "[kalman]") {
    const Prediction p = predict(Vector::Zero(1), Matrix::Zero(1, 1), scalar_system(0.7));
    CHECK(p.x(0) == 0.0);
    CHECK(p.V(0, 0) == 0.7);

    SystemMatrices sm;
    sm.F = Matrix::Identity(3, 3);
    sm.G = Matrix::Zero(3, 1);
    sm.H = RowVector::Ones(3);
    sm.Q = Matrix::Zero(1, 1);
    std::mt19937_64 rng(1);
    const Matrix V = random_psd(rng, 3);
    Vector x(3);
    x << 1, -2, 3;
    const Prediction q = predict(x, V, sm);
    CHECK(q.x == x);
    CHECK((q.V - V).cwiseAbs().maxCoeff() <= 1e-15 * V.cwiseAbs().maxCoeff());
}

TEST_CASE("predict matches a reference product", "[kalman]") {
    std::mt19937_64 rng(2);
    std::normal_distribution<double> z;
    SystemMatrices sm;
    sm.F.resize(3, 3);
    for (Eigen::Index i = 0; i < 9; ++i) sm.F(i / 3, i % 3) = z(rng);
    sm.G = Matrix::Ones(3, 2);
    sm.H = RowVector::Ones(3);
    sm.Q = random_psd(rng, 2);
    const Matrix V = random_psd(rng, 3);
    const Vector x = Vector::Ones(3);
    const Prediction p = predict(x, V, sm);
    const Matrix ref = oracle::matmul(oracle::matmul(sm.F, V), oracle::transpose(sm.F)) +
                       oracle::matmul(oracle::matmul(sm.G, sm.Q), oracle::transpose(sm.G));
    CHECK(oracle::max_rel_err(p.V, ref) <= 1e-13);
    CHECK(p.V == p.V.transpose());
    CHECK(Eigen::SelfAdjointEigenSolver<Matrix>(p.V).eigenvalues().minCoeff() >= -1e-12);
    CHECK_THROWS_AS(predict(Vector::Ones(2), V, sm), DimensionMismatch);
}

TEST_CASE("update: worked examples", "[kalman]") {
    const SystemMatrices sm = scalar_system(1.0);
    const FilterStep certain = update(Vector::Constant(1, 3.0), Matrix::Zero(1, 1), 5.0, sm);
    CHECK(certain.r == 1.0);
    CHECK(certain.gain(0) == 0.0);
    CHECK(certain.x_filt(0) == 3.0);
    CHECK(certain.V_filt(0, 0) == 0.0);

    const FilterStep s = update(Vector::Zero(1), Matrix::Ones(1, 1), 2.0, sm);
    CHECK(s.r == 2.0);
    CHECK(s.gain(0) == 0.5);
    CHECK(s.eps == 2.0);
    CHECK(s.x_filt(0) == 1.0);
    CHECK(s.V_filt(0, 0) == 0.5);

    const FilterStep z = update(Vector::Constant(1, 4.0), Matrix::Ones(1, 1), 4.0, sm);
    CHECK(z.eps == 0.0);
    CHECK(z.x_filt(0) == 4.0);

    CHECK_THROWS_AS(update(Vector::Zero(1), Matrix::Ones(1, 1), std::nan(""), sm), NonFiniteInput);
    Vector bad(1);
    bad(0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(update(bad, Matrix::Ones(1, 1), 1.0, sm), NonFiniteInput);
}

TEST_CASE("concentrated log-likelihood", "[kalman]") {
    const LikelihoodSummary s = concentrated_loglik({1.0, 1.0}, {1.0, 1.0});
    CHECK(s.sigma2 == 1.0);
    CHECK_THAT(s.loglik, WithinRel(-0.5 * (2 * std::log(2 * std::numbers::pi) + 2), 1e-15));
    CHECK(s.n_obs == 2);

    try {
        (void)concentrated_loglik({0.0}, {1.0});
        FAIL("expected DegenerateLikelihood");
    } catch (const DegenerateLikelihood& e) {
        CHECK(e.sigma2() == kSigma2Floor);
    }
    CHECK_THROWS_AS(concentrated_loglik({1.0}, {0.5}), InvariantViolation);
    CHECK_THROWS_AS(concentrated_loglik({}, {}), std::invalid_argument);

    // Scaling the innovations by c scales sigma2 by c^2 and shifts l by -N log c.
    const std::vector<double> e{0.3, -1.2, 2.5}, r{1.0, 1.7, 3.0};
    const double c = 3.5;
    const LikelihoodSummary a = concentrated_loglik(e, r);
    const LikelihoodSummary b = concentrated_loglik({c * e[0], c * e[1], c * e[2]}, r);
    CHECK_THAT(b.sigma2, WithinRel(c * c * a.sigma2, 1e-14));
    CHECK_THAT(b.loglik, WithinRel(a.loglik - 3 * std::log(c), 1e-14));
}

TEST_CASE("run_filter agrees with the reference filter", "[kalman]") {
    oracle::SeriesGen gen(3);
    const std::vector<double> y = gen.mixed(120, 12);
    std::vector<std::pair<std::unique_ptr<StateSpaceModel>, ParamVector>> cases;
    ParamVector t1(1);
    t1 << -1.0;
    cases.emplace_back(std::make_unique<models::TrendModel>(1), t1);
    cases.emplace_back(std::make_unique<models::TrendModel>(2), t1);
    ParamVector t2(2);
    t2 << -3.0, -4.0;
    cases.emplace_back(std::make_unique<models::SeasonalModel>(12), t2);
    ParamVector t3(5);
    t3 << -3.0, -4.0, -1.0, 1.5, -0.5;
    cases.emplace_back(std::make_unique<models::SeasonalArModel>(12, 2), t3);
    for (const auto& [model, theta] : cases) {
        INFO(model->name());
        const FilterRun run = run_filter(*model, theta, y);
        const oracle::RefRun ref = oracle::reference_filter(model->realize(theta), y, 1e4);
        CHECK_THAT(run.summary.loglik, WithinRel(ref.loglik, 1e-9));
        CHECK_THAT(run.summary.sigma2, WithinRel(ref.sigma2, 1e-9));
        for (std::size_t n = 0; n < y.size(); ++n) {
            CHECK(run.summary.r_trace[n] >= 1.0);
            CHECK_THAT(run.summary.r_trace[n], WithinRel(ref.r[n], 1e-8));
            CHECK_THAT(run.summary.eps_trace[n], WithinAbs(ref.eps[n], 1e-7 * std::max(1.0, std::abs(ref.eps[n]))));
        }
        CHECK(run.max_asymmetry < 1e-8);
        for (const auto& st : run.steps) {
            CHECK(st.V_filt == st.V_filt.transpose());
            CHECK(st.V_pred == st.V_pred.transpose());
        }
        const LikelihoodSummary only = filter_loglik(*model, theta, y);
        CHECK(only.loglik == run.summary.loglik);
    }
}

TEST_CASE("run_filter edge cases", "[kalman]") {
    const models::TrendModel model(1);
    ParamVector th(1);
    th << std::log(0.5);

    SECTION("single observation is degenerate") {
        // With kappa large, eps_1 = y_1 and r_1 ~ kappa, so sigma2 is tiny but positive.
        const FilterRun run = run_filter(model, th, std::vector<double>{2.0});
        CHECK(run.summary.n_obs == 1);
        CHECK(run.summary.sigma2 > 0.0);
        CHECK(run.summary.sigma2 < 1e-3);
        CHECK_THROWS_AS(run_filter(model, th, std::vector<double>{0.0}), DegenerateLikelihood);
    }
    SECTION("empty and non-finite input") {
        CHECK_THROWS_AS(run_filter(model, th, std::vector<double>{}), std::invalid_argument);
        CHECK_THROWS_AS(run_filter(model, th, std::vector<double>{1.0, std::nan(""), 2.0}), NonFiniteInput);
    }
    SECTION("divergent state reports the step") {
        SystemMatrices sm = model.realize(th);
        sm.F(0, 0) = 1e200;
        try {
            (void)run_filter(sm, std::vector<double>{1.0, 2.0, 3.0, 4.0});
            FAIL("expected NonFiniteState");
        } catch (const NonFiniteState& e) {
            CHECK(e.step() <= 1);
        }
    }
    SECTION("constant series: innovations vanish and smaller tau2 is better") {
        std::vector<double> y(50, 3.0);
        const FilterRun run = run_filter(model, th, y);
        CHECK_THAT(run.summary.eps_trace[0], WithinAbs(3.0, 1e-12));
        for (std::size_t n = 1; n < y.size(); ++n) CHECK(std::abs(run.summary.eps_trace[n]) < 1e-3);
        // Exact zeros make sigma2 degenerate, so add tiny deterministic noise.
        for (std::size_t n = 0; n < y.size(); ++n) y[n] += 1e-3 * std::sin(1.0 + 7.0 * static_cast<double>(n));
        double prev = -std::numeric_limits<double>::infinity();
        for (double t : {2.0, 0.0, -2.0, -4.0, -6.0}) {
            ParamVector tt(1);
            tt << t;
            const double l = filter_loglik(model, tt, y).loglik;
            CHECK(l > prev);
            prev = l;
        }
    }
    SECTION("white noise with tau2 -> 0 gives the sample variance") {
        oracle::SeriesGen gen(4);
        std::vector<double> y(400);
        for (auto& v : y) v = 5.0 + 2.0 * gen.z(gen.rng);
        ParamVector tt(1);
        tt << -40.0;
        const LikelihoodSummary s = filter_loglik(model, tt, y);
        double mean = 0.0;
        for (double v : y) mean += v;
        mean /= static_cast<double>(y.size());
        double ss = 0.0;
        for (double v : y) ss += (v - mean) * (v - mean);
        // Recursive residuals after the first sum to the centred sum of squares; the first has weight ~1/kappa.
        const double expected = ss / static_cast<double>(y.size());
        CHECK_THAT(s.sigma2, WithinRel(expected, 5e-3));
    }
    SECTION("Q = 0 and G = 0 give deterministic propagation") {
        SystemMatrices sm = model.realize(th);
        sm.Q(0, 0) = 0.0;
        sm.G(0, 0) = 0.0;
        const FilterRun run = run_filter(sm, std::vector<double>{1.0, 2.0, 0.5, 1.5});
        for (std::size_t n = 0; n < run.steps.size(); ++n) {
            const auto& st = run.steps[n];
            CHECK(st.V_pred(0, 0) == (n == 0 ? 1e4 : run.steps[n - 1].V_filt(0, 0)));
            CHECK(st.V_filt(0, 0) < st.V_pred(0, 0));
        }
    }
}

TEST_CASE("data scaling leaves r unchanged and shifts l by -N log c", "[kalman]") {
    oracle::SeriesGen gen(5);
    const std::vector<double> y = gen.mixed(80, 4);
    const models::SeasonalArModel model(4, 2);
    ParamVector th(5);
    th << -2.0, -3.0, -0.5, 0.7, -0.3;
    const double c = 7.25;
    std::vector<double> cy(y);
    for (auto& v : cy) v *= c;
    const FilterRun a = run_filter(model, th, y);
    const FilterRun b = run_filter(model, th, cy);
    for (std::size_t n = 0; n < y.size(); ++n) {
        CHECK(a.summary.r_trace[n] == b.summary.r_trace[n]);
        CHECK_THAT(b.summary.eps_trace[n], WithinAbs(c * a.summary.eps_trace[n], 1e-10 * c * (1 + std::abs(a.summary.eps_trace[n]))));
    }
    CHECK_THAT(b.summary.sigma2, WithinRel(c * c * a.summary.sigma2, 1e-12));
    CHECK_THAT(b.summary.loglik, WithinRel(a.summary.loglik - 80 * std::log(c), 1e-12));
}

TEST_CASE("initial variance is configurable", "[kalman]") {
    const models::TrendModel model(2);
    ParamVector th(1);
    th << -2.0;
    const std::vector<double> y{1.0, 2.0, 2.5, 4.0, 4.1};
    const FilterRun a = run_filter(model, th, y, InitialCondition{1e4});
    const FilterRun b = run_filter(model, th, y, InitialCondition{1e6});
    CHECK(a.steps[0].V_pred(0, 0) > 1e4);
    CHECK(b.steps[0].V_pred(0, 0) > 1e6);
    CHECK(a.summary.loglik != b.summary.loglik);
}
