#include <catch2/catch_amalgamated.hpp>

#include <memory>
#include <random>

#include "dfilter/model.hpp"
#include "dfilter/models.hpp"
#include "oracles.hpp"

using namespace dfilter;

namespace {

SystemMatrices small_system() {
    SystemMatrices sm;
    sm.F = Matrix::Identity(2, 2);
    sm.G = Matrix::Ones(2, 1);
    sm.H = RowVector::Ones(2);
    sm.Q = Matrix::Constant(1, 1, 0.5);
    return sm;
}

std::vector<std::unique_ptr<StateSpaceModel>> all_models() {
    std::vector<std::unique_ptr<StateSpaceModel>> out;
    out.push_back(std::make_unique<models::TrendModel>(1));
    out.push_back(std::make_unique<models::TrendModel>(2));
    out.push_back(std::make_unique<models::SeasonalModel>(12));
    out.push_back(std::make_unique<models::SeasonalModel>(4));
    for (int m3 = 1; m3 <= 3; ++m3) out.push_back(std::make_unique<models::SeasonalArModel>(12, m3));
    out.push_back(std::make_unique<models::SeasonalArModel>(4, 2, 0.9));
    return out;
}

ParamVector random_theta(const StateSpaceModel& model, std::mt19937_64& rng) {
    std::uniform_real_distribution<double> lv(-4.0, 1.0);
    std::uniform_real_distribution<double> pc(-2.5, 2.5);
    ParamVector t(static_cast<Eigen::Index>(model.num_params()));
    const bool ar = dynamic_cast<const models::SeasonalArModel*>(&model) != nullptr;
    for (Eigen::Index i = 0; i < t.size(); ++i) t(i) = (ar && i >= 3) ? pc(rng) : lv(rng);
    return t;
}

}  // namespace

TEST_CASE("validate_dimensions accepts consistent shapes", "[model_core]") {
    const SystemMatrices sm = small_system();
    REQUIRE_NOTHROW(validate_dimensions(sm, zero_bundle(1, 2, 1)));
}

TEST_CASE("validate_dimensions names the mismatched matrix", "[model_core]") {
    SystemMatrices sm = small_system();
    sm.G = Matrix::Ones(3, 1);
    try {
        validate_dimensions(sm, zero_bundle(1, 2, 1));
        FAIL("expected DimensionMismatch");
    } catch (const DimensionMismatch& e) {
        CHECK(e.name() == "G");
        CHECK(e.expected_rows() == 2);
        CHECK(e.expected_cols() == 1);
    }
}

TEST_CASE("validate_dimensions rejects a nonsymmetric dQ", "[model_core]") {
    SystemMatrices sm = small_system();
    sm.G = Matrix::Identity(2, 2);
    sm.Q = Matrix::Identity(2, 2);
    DerivativeBundle db = zero_bundle(1, 2, 2);
    db.dQ(0)(0, 1) = 1.0;
    try {
        validate_dimensions(sm, db);
        FAIL("expected InvariantViolation");
    } catch (const InvariantViolation& e) {
        CHECK(e.invariant() == "dQ symmetric");
    }
}

TEST_CASE("validate_dimensions enforces R = 1 and PSD Q", "[model_core]") {
    SystemMatrices sm = small_system();
    sm.R = 2.0;
    CHECK_THROWS_AS(validate_dimensions(sm), InvariantViolation);
    sm = small_system();
    sm.Q(0, 0) = -1.0;
    CHECK_THROWS_AS(validate_dimensions(sm), InvariantViolation);
    sm = small_system();
    sm.H = RowVector::Ones(3);
    CHECK_THROWS_AS(validate_dimensions(sm), DimensionMismatch);
}

TEST_CASE("zero_bundle has exact zeros of the right shapes", "[model_core]") {
    struct Shape {
        std::size_t p, m, k;
    };
    for (Shape s : {Shape{1, 1, 1}, Shape{2, 13, 2}, Shape{5, 16, 3}}) {
        const DerivativeBundle db = zero_bundle(s.p, s.m, s.k);
        CHECK(db.num_params() == s.p);
        for (std::size_t i = 0; i < s.p; ++i) {
            CHECK(db.dF(i).rows() == static_cast<Eigen::Index>(s.m));
            CHECK(db.dG(i).cols() == static_cast<Eigen::Index>(s.k));
            CHECK(db.dQ(i).rows() == static_cast<Eigen::Index>(s.k));
            CHECK(db.dF(i).isZero(0.0));
            CHECK(db.dQ(i).isZero(0.0));
            CHECK(db.dH(i).isZero(0.0));
            CHECK(db.dR(i) == 0.0);
            for (std::size_t j = 0; j < s.p; ++j) {
                CHECK(db.d2F(i, j).isZero(0.0));
                CHECK(db.d2Q(i, j).isZero(0.0));
                CHECK(db.d2R(i, j) == 0.0);
            }
        }
    }
    CHECK_THROWS_AS(zero_bundle(0, 1, 1), std::invalid_argument);
}

TEST_CASE("mixed partials share storage", "[model_core]") {
    DerivativeBundle db = zero_bundle(3, 2, 1);
    db.d2F(0, 2)(1, 1) = 4.0;
    CHECK(db.d2F(2, 0)(1, 1) == 4.0);
    CHECK(&db.d2Q(1, 2) == &db.d2Q(2, 1));
    CHECK_THROWS_AS(db.d2F(0, 3), std::out_of_range);
    for (std::size_t p = 1; p < 6; ++p) {
        std::vector<int> hit(packed_size(p), 0);
        for (std::size_t i = 0; i < p; ++i)
            for (std::size_t j = i; j < p; ++j) ++hit[packed_index(p, i, j)];
        for (int h : hit) CHECK(h == 1);
    }
}

TEST_CASE("check_theta rejects bad parameter vectors", "[model_core]") {
    const models::TrendModel m(1);
    CHECK_THROWS_AS(m.check_theta(ParamVector::Zero(2)), DimensionMismatch);
    ParamVector t(1);
    t(0) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(m.check_theta(t), NonFiniteInput);
}

TEST_CASE("model derivatives match finite differences of realize", "[model_core][fd]") {
    std::mt19937_64 rng(11);
    for (const auto& model : all_models()) {
        INFO(model->name());
        for (int rep = 0; rep < 5; ++rep) {
            const ParamVector theta = random_theta(*model, rng);
            const SystemMatrices sm = model->realize(theta);
            const DerivativeBundle db = model->differentiate(theta);
            REQUIRE_NOTHROW(validate_dimensions(sm, db));
            const std::size_t p = model->num_params();
            for (std::size_t i = 0; i < p; ++i) {
                const auto ii = static_cast<Eigen::Index>(i);
                const double h = 1e-5 * std::max(std::abs(theta(ii)), 1.0);
                ParamVector a = theta, b = theta;
                a(ii) += h;
                b(ii) -= h;
                const SystemMatrices sa = model->realize(a), sb = model->realize(b);
                const Matrix fdF = (sa.F - sb.F) / (2 * h);
                const Matrix fdQ = (sa.Q - sb.Q) / (2 * h);
                CHECK(oracle::max_rel_err(db.dF(i), fdF, 1e-11) <= 1e-6);
                CHECK(oracle::max_rel_err(db.dQ(i), fdQ, 1e-11) <= 1e-6);
                CHECK((sa.G - sb.G).isZero(0.0));
                CHECK((sa.H - sb.H).isZero(0.0));
                // Second derivatives from differences of the analytic first derivatives.
                const DerivativeBundle da = model->differentiate(a), dbm = model->differentiate(b);
                for (std::size_t j = 0; j < p; ++j) {
                    const Matrix fd2F = (da.dF(j) - dbm.dF(j)) / (2 * h);
                    const Matrix fd2Q = (da.dQ(j) - dbm.dQ(j)) / (2 * h);
                    CHECK(oracle::max_rel_err(db.d2F(i, j), fd2F, 1e-9) <= 1e-4);
                    CHECK(oracle::max_rel_err(db.d2Q(i, j), fd2Q, 1e-9) <= 1e-4);
                }
            }
        }
    }
}

TEST_CASE("second derivatives from second differences of realize", "[model_core][fd]") {
    std::mt19937_64 rng(5);
    const models::SeasonalArModel model(4, 3);
    const ParamVector theta = random_theta(model, rng);
    const DerivativeBundle db = model.differentiate(theta);
    const Eigen::Index row = static_cast<Eigen::Index>(model.ar_row());
    for (Eigen::Index q = 0; q < 3; ++q) {
        auto entry = [&](const Vector& t) { return model.realize(t).F(row, row + q); };
        const Matrix H = oracle::second_differences(entry, theta, 1e-4);
        for (std::size_t i = 0; i < 6; ++i)
            for (std::size_t j = 0; j < 6; ++j) {
                const double a = db.d2F(i, j)(row, row + q);
                const double n = H(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                CHECK((std::abs(a - n) <= 1e-6 || oracle::rel_err(a, n) <= 1e-4));
            }
    }
}
