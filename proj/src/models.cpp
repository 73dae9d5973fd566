#include "dfilter/models.hpp"

#include <Eigen/Eigenvalues>

#include <cmath>
#include <stdexcept>

namespace dfilter::models {

LogVariance log_variance_transform(double theta) {
    if (!std::isfinite(theta)) {
        throw NonFiniteInput("log-variance parameter is not finite");
    }
    const double q = std::exp(theta);
    if (!std::isfinite(q)) {
        throw Overflow("exp(" + std::to_string(theta) + ") overflows");
    }
    return {q, q, q};
}

Parcor parcor_transform(double theta, double bound) {
    if (!(bound > 0.0 && bound <= 1.0)) {
        throw std::invalid_argument("parcor bound must lie in (0, 1]");
    }
    // tanh form avoids inf/inf for large |theta|.
    const double t = std::tanh(0.5 * theta);
    const double s = 1.0 - t * t;
    Parcor out;
    out.beta = bound * t;
    out.d1 = 0.5 * bound * s;
    out.d2 = -0.5 * bound * t * s;
    return out;
}

Vector levinson_expand(const Vector& beta) {
    const Eigen::Index M = beta.size();
    Vector a = Vector::Zero(M);
    Vector prev = Vector::Zero(M);
    for (Eigen::Index m = 1; m <= M; ++m) {
        prev = a;
        for (Eigen::Index k = 1; k < m; ++k) {
            a(k - 1) = prev(k - 1) - beta(m - 1) * prev(m - k - 1);
        }
        a(m - 1) = beta(m - 1);
    }
    return a;
}

namespace {

// Runs the order recursion once, producing a, J and (optionally) T at order M.
void levinson_all(const Vector& beta, Vector& a, Matrix& J, std::vector<Matrix>* T) {
    const Eigen::Index M = beta.size();
    a = Vector::Zero(M);
    J = Matrix::Zero(M, M);
    if (T) T->assign(static_cast<std::size_t>(M), Matrix::Zero(M, M));
    for (Eigen::Index m = 1; m <= M; ++m) {
        const double bm = beta(m - 1);
        const Vector a_prev = a;
        const Matrix J_prev = J;
        std::vector<Matrix> T_prev;
        if (T) T_prev = *T;
        for (Eigen::Index k = 1; k < m; ++k) {
            const Eigen::Index mk = m - k;
            a(k - 1) = a_prev(k - 1) - bm * a_prev(mk - 1);
            for (Eigen::Index i = 1; i < m; ++i) {
                J(k - 1, i - 1) = J_prev(k - 1, i - 1) - bm * J_prev(mk - 1, i - 1);
            }
            J(k - 1, m - 1) = -a_prev(mk - 1);
            if (T) {
                Matrix& Tk = (*T)[static_cast<std::size_t>(k - 1)];
                const Matrix& Tk_prev = T_prev[static_cast<std::size_t>(k - 1)];
                const Matrix& Tmk_prev = T_prev[static_cast<std::size_t>(mk - 1)];
                for (Eigen::Index i = 1; i < m; ++i) {
                    for (Eigen::Index j = 1; j < m; ++j) {
                        Tk(i - 1, j - 1) = Tk_prev(i - 1, j - 1) - bm * Tmk_prev(i - 1, j - 1);
                    }
                    Tk(i - 1, m - 1) = -J_prev(mk - 1, i - 1);
                    Tk(m - 1, i - 1) = -J_prev(mk - 1, i - 1);
                }
                Tk(m - 1, m - 1) = 0.0;
            }
        }
        a(m - 1) = bm;
        J.row(m - 1).setZero();
        J(m - 1, m - 1) = 1.0;
        if (T) (*T)[static_cast<std::size_t>(m - 1)].setZero();
    }
}

}  // namespace

Matrix levinson_jacobian(const Vector& beta) {
    Vector a;
    Matrix J;
    levinson_all(beta, a, J, nullptr);
    return J;
}

std::vector<Matrix> levinson_hessian(const Vector& beta) {
    Vector a;
    Matrix J;
    std::vector<Matrix> T;
    levinson_all(beta, a, J, &T);
    return T;
}

double companion_spectral_radius(const Vector& a) {
    const Eigen::Index M = a.size();
    if (M == 0) return 0.0;
    Matrix C = Matrix::Zero(M, M);
    C.row(0) = a.transpose();
    for (Eigen::Index i = 1; i < M; ++i) C(i, i - 1) = 1.0;
    Eigen::EigenSolver<Matrix> es(C, false);
    return es.eigenvalues().cwiseAbs().maxCoeff();
}

namespace {

void fill_trend2(Matrix& F) {
    F(0, 0) = 2.0;
    F(0, 1) = -1.0;
    F(1, 0) = 1.0;
}

// Dummy seasonal block starting at row/column `s` for the given period.
void fill_seasonal(Matrix& F, Eigen::Index s, int period) {
    const Eigen::Index len = period - 1;
    for (Eigen::Index c = 0; c < len; ++c) F(s, s + c) = -1.0;
    for (Eigen::Index r = 1; r < len; ++r) F(s + r, s + r - 1) = 1.0;
}

// Diagonal Q from log variances; dQ(i) and d2Q(i, i) have one nonzero entry.
void fill_variances(const ParamVector& theta, Eigen::Index count, SystemMatrices* sm, DerivativeBundle* db) {
    for (Eigen::Index i = 0; i < count; ++i) {
        const LogVariance lv = log_variance_transform(theta(i));
        if (sm) sm->Q(i, i) = lv.q;
        if (db) {
            const auto ii = static_cast<std::size_t>(i);
            db->dQ(ii)(i, i) = lv.dq;
            db->d2Q(ii, ii)(i, i) = lv.d2q;
        }
    }
}

double positive(double v, const char* what) {
    if (!(v > 0.0) || !std::isfinite(v)) {
        throw std::invalid_argument(std::string(what) + " must be positive and finite");
    }
    return std::log(v);
}

void check_natural_size(const std::vector<double>& natural, std::size_t p) {
    if (natural.size() != p) {
        throw DimensionMismatch("natural parameters", p, 1, natural.size(), 1);
    }
}

}  // namespace

// ---- trend -----------------------------------------------------------------

TrendModel::TrendModel(int order) : order_(order) {
    if (order != 1 && order != 2) {
        throw std::invalid_argument("trend order must be 1 or 2");
    }
}

std::string TrendModel::name() const { return "trend(order=" + std::to_string(order_) + ")"; }

SystemMatrices TrendModel::realize(const ParamVector& theta) const {
    check_theta(theta);
    const Eigen::Index m = order_;
    SystemMatrices sm;
    sm.F = Matrix::Zero(m, m);
    if (order_ == 1) {
        sm.F(0, 0) = 1.0;
    } else {
        fill_trend2(sm.F);
    }
    sm.G = Matrix::Zero(m, 1);
    sm.G(0, 0) = 1.0;
    sm.H = RowVector::Zero(m);
    sm.H(0) = 1.0;
    sm.Q = Matrix::Zero(1, 1);
    fill_variances(theta, 1, &sm, nullptr);
    return sm;
}

DerivativeBundle TrendModel::differentiate(const ParamVector& theta) const {
    check_theta(theta);
    DerivativeBundle db(1, state_dim(), 1);
    fill_variances(theta, 1, nullptr, &db);
    return db;
}

NaturalParameters TrendModel::describe(const ParamVector& theta) const {
    check_theta(theta);
    NaturalParameters out;
    out.params.push_back({"tau2", log_variance_transform(theta(0)).q});
    return out;
}

ParamVector TrendModel::encode(const std::vector<double>& natural) const {
    check_natural_size(natural, 1);
    ParamVector theta(1);
    theta(0) = positive(natural[0], "tau2");
    return theta;
}

// ---- seasonal --------------------------------------------------------------

SeasonalModel::SeasonalModel(int period) : period_(period) {
    if (period < 2) {
        throw std::invalid_argument("seasonal period must be at least 2");
    }
}

std::string SeasonalModel::name() const { return "seasonal(period=" + std::to_string(period_) + ")"; }

SystemMatrices SeasonalModel::realize(const ParamVector& theta) const {
    check_theta(theta);
    const auto m = static_cast<Eigen::Index>(state_dim());
    SystemMatrices sm;
    sm.F = Matrix::Zero(m, m);
    fill_trend2(sm.F);
    fill_seasonal(sm.F, 2, period_);
    sm.G = Matrix::Zero(m, 2);
    sm.G(0, 0) = 1.0;
    sm.G(2, 1) = 1.0;
    sm.H = RowVector::Zero(m);
    sm.H(0) = 1.0;
    sm.H(2) = 1.0;
    sm.Q = Matrix::Zero(2, 2);
    fill_variances(theta, 2, &sm, nullptr);
    return sm;
}

DerivativeBundle SeasonalModel::differentiate(const ParamVector& theta) const {
    check_theta(theta);
    DerivativeBundle db(2, state_dim(), 2);
    fill_variances(theta, 2, nullptr, &db);
    return db;
}

NaturalParameters SeasonalModel::describe(const ParamVector& theta) const {
    check_theta(theta);
    NaturalParameters out;
    out.params.push_back({"tau1^2", log_variance_transform(theta(0)).q});
    out.params.push_back({"tau2^2", log_variance_transform(theta(1)).q});
    return out;
}

ParamVector SeasonalModel::encode(const std::vector<double>& natural) const {
    check_natural_size(natural, 2);
    ParamVector theta(2);
    theta(0) = positive(natural[0], "tau1^2");
    theta(1) = positive(natural[1], "tau2^2");
    return theta;
}

// ---- seasonal + AR ---------------------------------------------------------

SeasonalArModel::SeasonalArModel(int period, int ar_order, double parcor_bound)
    : period_(period), ar_order_(ar_order), bound_(parcor_bound) {
    if (period < 2) {
        throw std::invalid_argument("seasonal period must be at least 2");
    }
    if (ar_order < 1) {
        throw std::invalid_argument("AR order must be at least 1");
    }
    if (!(parcor_bound > 0.0 && parcor_bound <= 1.0)) {
        throw std::invalid_argument("parcor bound must lie in (0, 1]");
    }
}

std::string SeasonalArModel::name() const {
    return "seasonal-ar(period=" + std::to_string(period_) + ", ar_order=" + std::to_string(ar_order_) + ")";
}

Vector SeasonalArModel::parcors(const ParamVector& theta) const {
    check_theta(theta);
    Vector beta(ar_order_);
    for (int j = 0; j < ar_order_; ++j) beta(j) = parcor_transform(theta(3 + j), bound_).beta;
    return beta;
}

Vector SeasonalArModel::ar_coefficients(const ParamVector& theta) const {
    return levinson_expand(parcors(theta));
}

SystemMatrices SeasonalArModel::realize(const ParamVector& theta) const {
    check_theta(theta);
    const auto m = static_cast<Eigen::Index>(state_dim());
    const auto s = static_cast<Eigen::Index>(ar_row());
    SystemMatrices sm;
    sm.F = Matrix::Zero(m, m);
    fill_trend2(sm.F);
    fill_seasonal(sm.F, 2, period_);
    const Vector a = ar_coefficients(theta);
    for (Eigen::Index j = 0; j < ar_order_; ++j) sm.F(s, s + j) = a(j);
    for (Eigen::Index r = 1; r < ar_order_; ++r) sm.F(s + r, s + r - 1) = 1.0;
    sm.G = Matrix::Zero(m, 3);
    sm.G(0, 0) = 1.0;
    sm.G(2, 1) = 1.0;
    sm.G(s, 2) = 1.0;
    sm.H = RowVector::Zero(m);
    sm.H(0) = 1.0;
    sm.H(2) = 1.0;
    sm.H(s) = 1.0;
    sm.Q = Matrix::Zero(3, 3);
    fill_variances(theta, 3, &sm, nullptr);
    return sm;
}

DerivativeBundle SeasonalArModel::differentiate(const ParamVector& theta) const {
    check_theta(theta);
    const auto M = static_cast<std::size_t>(ar_order_);
    const auto s = static_cast<Eigen::Index>(ar_row());
    DerivativeBundle db(num_params(), state_dim(), 3);
    fill_variances(theta, 3, nullptr, &db);

    Vector beta(ar_order_);
    Vector d1(ar_order_);
    Vector d2(ar_order_);
    for (int j = 0; j < ar_order_; ++j) {
        const Parcor pc = parcor_transform(theta(3 + j), bound_);
        beta(j) = pc.beta;
        d1(j) = pc.d1;
        d2(j) = pc.d2;
    }
    Vector a;
    Matrix J;
    std::vector<Matrix> T;
    levinson_all(beta, a, J, &T);

    // Only the AR row of F depends on theta_{3+i}.
    for (std::size_t i = 0; i < M; ++i) {
        const auto ii = static_cast<Eigen::Index>(i);
        Matrix& dF = db.dF(3 + i);
        for (std::size_t q = 0; q < M; ++q) {
            const auto qq = static_cast<Eigen::Index>(q);
            dF(s, s + qq) = J(qq, ii) * d1(ii);
        }
        for (std::size_t j = i; j < M; ++j) {
            const auto jj = static_cast<Eigen::Index>(j);
            Matrix& d2F = db.d2F(3 + i, 3 + j);
            for (std::size_t q = 0; q < M; ++q) {
                const auto qq = static_cast<Eigen::Index>(q);
                double v = T[q](ii, jj) * d1(ii) * d1(jj);
                if (i == j) v += J(qq, ii) * d2(ii);
                d2F(s, s + qq) = v;
            }
        }
    }
    return db;
}

NaturalParameters SeasonalArModel::describe(const ParamVector& theta) const {
    check_theta(theta);
    NaturalParameters out;
    out.params.push_back({"tau1^2", log_variance_transform(theta(0)).q});
    out.params.push_back({"tau2^2", log_variance_transform(theta(1)).q});
    out.params.push_back({"tau3^2", log_variance_transform(theta(2)).q});
    const Vector beta = parcors(theta);
    for (int j = 0; j < ar_order_; ++j) out.params.push_back({"beta" + std::to_string(j + 1), beta(j)});
    const Vector a = levinson_expand(beta);
    for (int j = 0; j < ar_order_; ++j) out.derived.push_back({"a" + std::to_string(j + 1), a(j)});
    return out;
}

ParamVector SeasonalArModel::encode(const std::vector<double>& natural) const {
    check_natural_size(natural, num_params());
    ParamVector theta(static_cast<Eigen::Index>(num_params()));
    theta(0) = positive(natural[0], "tau1^2");
    theta(1) = positive(natural[1], "tau2^2");
    theta(2) = positive(natural[2], "tau3^2");
    for (int j = 0; j < ar_order_; ++j) {
        const double b = natural[static_cast<std::size_t>(3 + j)];
        if (!(std::abs(b) < bound_)) {
            throw std::invalid_argument("partial autocorrelation must satisfy |beta| < C");
        }
        theta(3 + j) = 2.0 * std::atanh(b / bound_);
    }
    return theta;
}

// ---- factory ---------------------------------------------------------------

ParamVector default_theta0(const StateSpaceModel& model) {
    ParamVector theta = ParamVector::Zero(static_cast<Eigen::Index>(model.num_params()));
    if (dynamic_cast<const TrendModel*>(&model)) {
        theta(0) = std::log(0.5);
    } else if (dynamic_cast<const SeasonalModel*>(&model)) {
        theta(0) = -5.3;
        theta(1) = -5.0;
    } else if (dynamic_cast<const SeasonalArModel*>(&model)) {
        theta(0) = -5.3;
        theta(1) = -5.0;
        theta(2) = std::log(0.5);
    }
    return theta;
}

std::unique_ptr<StateSpaceModel> make_model(const ModelConfig& cfg) {
    if (cfg.family == "trend") return std::make_unique<TrendModel>(cfg.trend_order);
    if (cfg.family == "seasonal") return std::make_unique<SeasonalModel>(cfg.period);
    if (cfg.family == "seasonal-ar") {
        return std::make_unique<SeasonalArModel>(cfg.period, cfg.ar_order, cfg.parcor_bound);
    }
    throw std::invalid_argument("unknown model family '" + cfg.family + "'");
}

}  // namespace dfilter::models
