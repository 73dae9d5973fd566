#include "dfilter/diff_filter.hpp"

#include <Eigen/SparseCore>

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace dfilter {

SensitivityState SensitivityState::zeros(std::size_t p, std::size_t m) {
    const auto mi = static_cast<Eigen::Index>(m);
    SensitivityState s;
    s.dx.assign(p, Vector::Zero(mi));
    s.dV.assign(p, Matrix::Zero(mi, mi));
    s.dgain.assign(p, Vector::Zero(mi));
    return s;
}

CurvatureState CurvatureState::zeros(std::size_t p, std::size_t m) {
    const auto mi = static_cast<Eigen::Index>(m);
    CurvatureState c;
    c.p = p;
    c.d2x.assign(packed_size(p), Vector::Zero(mi));
    c.d2V.assign(packed_size(p), Matrix::Zero(mi, mi));
    return c;
}

namespace {

using SparseRows = Eigen::SparseMatrix<double, Eigen::RowMajor>;

bool nonzero(const Matrix& a) { return a.size() > 0 && !a.isZero(0.0); }
bool nonzero(const RowVector& a) { return a.size() > 0 && !a.isZero(0.0); }

// Bundle entries that are exactly zero are skipped; dF and d2F are kept as
// sparse row matrices since the AR models only populate one row.
class Recursions {
public:
    Recursions(const SystemMatrices& sm, const DerivativeBundle& db)
        : sm_(sm), db_(db), p_(db.num_params()), m_(static_cast<Eigen::Index>(sm.state_dim())) {
        const std::size_t pairs = packed_size(p_);
        dF_.resize(p_);
        has_dF_.assign(p_, false);
        has_dG_.assign(p_, false);
        has_dH_.assign(p_, false);
        has_dQ_.assign(p_, false);
        for (std::size_t i = 0; i < p_; ++i) {
            has_dF_[i] = nonzero(db.dF(i));
            if (has_dF_[i]) dF_[i] = db.dF(i).sparseView();
            has_dG_[i] = nonzero(db.dG(i));
            has_dH_[i] = nonzero(db.dH(i));
            has_dQ_[i] = nonzero(db.dQ(i));
            any_dF_ = any_dF_ || has_dF_[i];
            any_dG_ = any_dG_ || has_dG_[i];
            any_dH_ = any_dH_ || has_dH_[i];
        }
        d2F_.resize(pairs);
        has_d2F_.assign(pairs, false);
        has_d2G_.assign(pairs, false);
        has_d2H_.assign(pairs, false);
        has_d2Q_.assign(pairs, false);
        for (std::size_t i = 0; i < p_; ++i) {
            for (std::size_t j = i; j < p_; ++j) {
                const std::size_t ij = packed_index(p_, i, j);
                has_d2F_[ij] = nonzero(db.d2F(i, j));
                if (has_d2F_[ij]) d2F_[ij] = db.d2F(i, j).sparseView();
                has_d2G_[ij] = nonzero(db.d2G(i, j));
                has_d2H_[ij] = nonzero(db.d2H(i, j));
                has_d2Q_[ij] = nonzero(db.d2Q(i, j));
            }
        }
    }

    std::size_t p() const { return p_; }

    // ---- first order -------------------------------------------------------

    void predict_first(const SensitivityState& prev, const Vector& x, const Matrix& VFt,
                       SensitivityState& out, double& asym) const {
        const Matrix& F = sm_.F;
        out.dx.resize(p_);
        out.dV.resize(p_);
        out.dgain.clear();
        Matrix FdV(m_, m_);
        for (std::size_t i = 0; i < p_; ++i) {
            out.dx[i].noalias() = F * prev.dx[i];
            if (has_dF_[i]) out.dx[i].noalias() += dF_[i] * x;

            FdV.noalias() = F * prev.dV[i];
            Matrix& dV = out.dV[i];
            dV.noalias() = FdV * F.transpose();
            if (has_dF_[i] || has_dG_[i]) {
                Matrix A = Matrix::Zero(m_, m_);
                if (has_dF_[i]) A.noalias() += dF_[i] * VFt;
                if (has_dG_[i]) A.noalias() += db_.dG(i) * sm_.Q * sm_.G.transpose();
                dV += A + A.transpose();
            }
            if (has_dQ_[i]) dV.noalias() += sm_.G * db_.dQ(i) * sm_.G.transpose();
            asym = std::max(asym, symmetrize(dV));
        }
    }

    // du_i = d(V_pred H^T)/dtheta_i, one column per parameter.
    void innovation_first(const SensitivityState& pred, const Vector& x_pred, const Matrix& V_pred,
                          const Vector& u, InnovationSensitivities& out, Matrix& du) const {
        const RowVector& H = sm_.H;
        out.deps.resize(static_cast<Eigen::Index>(p_));
        out.dr.resize(static_cast<Eigen::Index>(p_));
        du.resize(m_, static_cast<Eigen::Index>(p_));
        for (std::size_t i = 0; i < p_; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            du.col(ii).noalias() = pred.dV[i] * H.transpose();
            if (has_dH_[i]) du.col(ii).noalias() += V_pred * db_.dH(i).transpose();
            double deps = -H.dot(pred.dx[i]);
            double dr = H.dot(du.col(ii));
            if (has_dH_[i]) {
                deps -= db_.dH(i).dot(x_pred);
                dr += db_.dH(i).dot(u);
            }
            dr += db_.dR(i);
            out.deps(ii) = deps;
            out.dr(ii) = dr;
        }
    }

    void update_first(const SensitivityState& pred, const FilterStep& step, const Vector& u,
                      const InnovationSensitivities& innov, const Matrix& du, SensitivityState& out,
                      double& asym) const {
        const double r = step.r;
        out.dx.resize(p_);
        out.dV.resize(p_);
        out.dgain.resize(p_);
        for (std::size_t i = 0; i < p_; ++i) {
            const auto ii = static_cast<Eigen::Index>(i);
            Vector& dK = out.dgain[i];
            dK = du.col(ii) / r - u * (innov.dr(ii) / (r * r));
            out.dx[i] = pred.dx[i] + dK * step.eps + step.gain * innov.deps(ii);
            Matrix& dV = out.dV[i];
            dV = pred.dV[i];
            dV.noalias() -= dK * u.transpose();
            dV.noalias() -= step.gain * du.col(ii).transpose();
            asym = std::max(asym, symmetrize(dV));
        }
    }

    // ---- second order ------------------------------------------------------

    void predict_second(const CurvatureState& prev, const SensitivityState& sens_prev, const Vector& x,
                        const Matrix& V, const Matrix& VFt, CurvatureState& out, double& asym) const {
        const Matrix& F = sm_.F;
        const Matrix& G = sm_.G;
        out.p = p_;
        out.d2x.resize(packed_size(p_));
        out.d2V.resize(packed_size(p_));

        // dV_j F^T and dF_i V are reused across pairs.
        std::vector<Matrix> dVFt;
        std::vector<Matrix> dFV;
        if (any_dF_) {
            dVFt.resize(p_);
            dFV.resize(p_);
            for (std::size_t i = 0; i < p_; ++i) {
                dVFt[i].noalias() = sens_prev.dV[i] * F.transpose();
                if (has_dF_[i]) dFV[i].noalias() = dF_[i] * V;
            }
        }

        Matrix FdV(m_, m_);
        for (std::size_t i = 0; i < p_; ++i) {
            for (std::size_t j = i; j < p_; ++j) {
                const std::size_t ij = packed_index(p_, i, j);
                Vector& d2x = out.d2x[ij];
                d2x.noalias() = F * prev.d2x[ij];
                if (has_dF_[i]) d2x.noalias() += dF_[i] * sens_prev.dx[j];
                if (has_dF_[j]) d2x.noalias() += dF_[j] * sens_prev.dx[i];
                if (has_d2F_[ij]) d2x.noalias() += d2F_[ij] * x;

                Matrix& d2V = out.d2V[ij];
                FdV.noalias() = F * prev.d2V[ij];
                d2V.noalias() = FdV * F.transpose();

                // T + T^T with T = dF_i dV_j F^T + dF_j dV_i F^T + d2F_ij V F^T + dF_i V dF_j^T
                if (has_dF_[i] || has_dF_[j] || has_d2F_[ij]) {
                    Matrix T = Matrix::Zero(m_, m_);
                    if (has_dF_[i]) T.noalias() += dF_[i] * dVFt[j];
                    if (has_dF_[j]) T.noalias() += dF_[j] * dVFt[i];
                    if (has_d2F_[ij]) T.noalias() += d2F_[ij] * VFt;
                    if (has_dF_[i] && has_dF_[j]) T.noalias() += dFV[i] * dF_[j].transpose();
                    d2V += T + T.transpose();
                }

                // S + S^T with S = d2G_ij Q G^T + dG_i dQ_j G^T + dG_j dQ_i G^T + dG_i Q dG_j^T
                if (any_dG_) {
                    Matrix S = Matrix::Zero(m_, G.cols());
                    Matrix SG = Matrix::Zero(m_, m_);
                    if (has_d2G_[ij]) S.noalias() += db_.d2G(i, j) * sm_.Q;
                    if (has_dG_[i] && has_dQ_[j]) S.noalias() += db_.dG(i) * db_.dQ(j);
                    if (has_dG_[j] && has_dQ_[i]) S.noalias() += db_.dG(j) * db_.dQ(i);
                    SG.noalias() = S * G.transpose();
                    if (has_dG_[i] && has_dG_[j]) SG.noalias() += db_.dG(i) * sm_.Q * db_.dG(j).transpose();
                    d2V += SG + SG.transpose();
                }
                if (has_d2Q_[ij]) d2V.noalias() += G * db_.d2Q(i, j) * G.transpose();
                asym = std::max(asym, symmetrize(d2V));
            }
        }
    }

    // d2u_ij = d2(V_pred H^T)/dtheta_i dtheta_j, packed.
    void innovation_second(const CurvatureState& pred, const SensitivityState& sens_pred, const Vector& x_pred,
                           const Matrix& V_pred, const Vector& u, const Matrix& du, InnovationCurvatures& out,
                           std::vector<Vector>& d2u) const {
        const RowVector& H = sm_.H;
        const auto pi = static_cast<Eigen::Index>(p_);
        out.d2eps.resize(pi, pi);
        out.d2r.resize(pi, pi);
        d2u.resize(packed_size(p_));
        for (std::size_t i = 0; i < p_; ++i) {
            for (std::size_t j = i; j < p_; ++j) {
                const std::size_t ij = packed_index(p_, i, j);
                const auto ii = static_cast<Eigen::Index>(i);
                const auto jj = static_cast<Eigen::Index>(j);
                Vector& w = d2u[ij];
                w.noalias() = pred.d2V[ij] * H.transpose();
                double d2eps = -H.dot(pred.d2x[ij]);
                if (any_dH_) {
                    if (has_dH_[j]) w.noalias() += sens_pred.dV[i] * db_.dH(j).transpose();
                    if (has_dH_[i]) w.noalias() += sens_pred.dV[j] * db_.dH(i).transpose();
                    if (has_d2H_[ij]) w.noalias() += V_pred * db_.d2H(i, j).transpose();
                    if (has_dH_[i]) d2eps -= db_.dH(i).dot(sens_pred.dx[j]);
                    if (has_dH_[j]) d2eps -= db_.dH(j).dot(sens_pred.dx[i]);
                    if (has_d2H_[ij]) d2eps -= db_.d2H(i, j).dot(x_pred);
                }
                double d2r = H.dot(w);
                if (any_dH_) {
                    if (has_dH_[j]) d2r += db_.dH(j).dot(du.col(ii));
                    if (has_dH_[i]) d2r += db_.dH(i).dot(du.col(jj));
                    if (has_d2H_[ij]) d2r += db_.d2H(i, j).dot(u);
                }
                d2r += db_.d2R(i, j);
                out.d2eps(ii, jj) = out.d2eps(jj, ii) = d2eps;
                out.d2r(ii, jj) = out.d2r(jj, ii) = d2r;
            }
        }
    }

    void update_second(const CurvatureState& pred, const SensitivityState& sens_filt, const FilterStep& step,
                       const Vector& u, const InnovationSensitivities& innov, const Matrix& du,
                       const InnovationCurvatures& curv, const std::vector<Vector>& d2u, CurvatureState& out,
                       double& asym) const {
        const double r = step.r;
        const double r2 = r * r;
        const double r3 = r2 * r;
        out.p = p_;
        out.d2x.resize(packed_size(p_));
        out.d2V.resize(packed_size(p_));
        Vector d2K(m_);
        for (std::size_t i = 0; i < p_; ++i) {
            for (std::size_t j = i; j < p_; ++j) {
                const std::size_t ij = packed_index(p_, i, j);
                const auto ii = static_cast<Eigen::Index>(i);
                const auto jj = static_cast<Eigen::Index>(j);
                const double dri = innov.dr(ii);
                const double drj = innov.dr(jj);
                const Vector& dKi = sens_filt.dgain[i];
                const Vector& dKj = sens_filt.dgain[j];

                d2K = d2u[ij] / r - (du.col(ii) * drj + du.col(jj) * dri) / r2 -
                      u * (curv.d2r(ii, jj) / r2) + u * (2.0 * dri * drj / r3);

                out.d2x[ij] = pred.d2x[ij] + d2K * step.eps + dKi * innov.deps(jj) + dKj * innov.deps(ii) +
                              step.gain * curv.d2eps(ii, jj);

                Matrix& d2V = out.d2V[ij];
                d2V = pred.d2V[ij];
                d2V.noalias() -= d2K * u.transpose();
                d2V.noalias() -= dKi * du.col(jj).transpose();
                d2V.noalias() -= dKj * du.col(ii).transpose();
                d2V.noalias() -= step.gain * d2u[ij].transpose();
                asym = std::max(asym, symmetrize(d2V));
            }
        }
    }

private:
    const SystemMatrices& sm_;
    const DerivativeBundle& db_;
    std::size_t p_;
    Eigen::Index m_;
    std::vector<SparseRows> dF_, d2F_;
    std::vector<bool> has_dF_, has_dG_, has_dH_, has_dQ_;
    std::vector<bool> has_d2F_, has_d2G_, has_d2H_, has_d2Q_;
    bool any_dF_ = false;
    bool any_dG_ = false;
    bool any_dH_ = false;
};

// Running sums over n for sigma2 and the log-likelihood derivatives.
class LikelihoodAccumulator {
public:
    LikelihoodAccumulator(std::size_t p, bool second_order)
        : second_(second_order),
          a_(Vector::Zero(static_cast<Eigen::Index>(p))),
          s_(Vector::Zero(static_cast<Eigen::Index>(p))) {
        if (second_) {
            b_ = Matrix::Zero(static_cast<Eigen::Index>(p), static_cast<Eigen::Index>(p));
            c_ = b_;
        }
    }

    void add(double eps, double r, const Vector& deps, const Vector& dr) {
        a_ += (2.0 * eps / r) * deps - (eps * eps / (r * r)) * dr;
        s_ += dr / r;
    }

    void add_second(double eps, double r, const Vector& deps, const Vector& dr, const Matrix& d2eps,
                    const Matrix& d2r) {
        const double r2 = r * r;
        const double r3 = r2 * r;
        const auto p = deps.size();
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = i; j < p; ++j) {
                const double b = 2.0 * (deps(i) * deps(j) + eps * d2eps(i, j)) / r -
                                 2.0 * eps * (deps(i) * dr(j) + deps(j) * dr(i)) / r2 - eps * eps * d2r(i, j) / r2 +
                                 2.0 * eps * eps * dr(i) * dr(j) / r3;
                const double c = d2r(i, j) / r - dr(i) * dr(j) / r2;
                b_(i, j) += b;
                c_(i, j) += c;
            }
        }
    }

    GradientSummary gradient(double sigma2, std::size_t n_obs) const {
        const double N = static_cast<double>(n_obs);
        GradientSummary g;
        g.sigma2 = sigma2;
        g.dsigma2 = a_ / N;
        g.grad = -0.5 * (N / sigma2 * g.dsigma2 + s_);
        return g;
    }

    // Upper triangles of the sums are mirrored, so both outputs are exactly symmetric.
    void hessian(const GradientSummary& g, std::size_t n_obs, Matrix& d2sigma2, Matrix& hess) const {
        const double N = static_cast<double>(n_obs);
        const double s2 = g.sigma2;
        const auto p = a_.size();
        d2sigma2.resize(p, p);
        hess.resize(p, p);
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = i; j < p; ++j) {
                const double d2s = b_(i, j) / N;
                const double h =
                    -0.5 * (N * (d2s / s2 - g.dsigma2(i) * g.dsigma2(j) / (s2 * s2)) + c_(i, j));
                d2sigma2(i, j) = d2sigma2(j, i) = d2s;
                hess(i, j) = hess(j, i) = h;
            }
        }
    }

private:
    bool second_;
    Vector a_;
    Vector s_;
    Matrix b_;
    Matrix c_;
};

void check_sensitivity_inputs(const SensitivityState& s, std::size_t p, Eigen::Index m) {
    if (s.dx.size() != p || s.dV.size() != p) {
        throw DimensionMismatch("sensitivity state", p, 1, s.dx.size(), 1);
    }
    for (std::size_t i = 0; i < p; ++i) {
        if (s.dx[i].size() != m) {
            throw DimensionMismatch("dx", static_cast<std::size_t>(m), 1, static_cast<std::size_t>(s.dx[i].size()), 1);
        }
        if (s.dV[i].rows() != m || s.dV[i].cols() != m) {
            throw DimensionMismatch("dV", static_cast<std::size_t>(m), static_cast<std::size_t>(m),
                                    static_cast<std::size_t>(s.dV[i].rows()),
                                    static_cast<std::size_t>(s.dV[i].cols()));
        }
    }
}

void check_curvature_inputs(const CurvatureState& c, std::size_t p, Eigen::Index m) {
    if (c.p != p || c.d2x.size() != packed_size(p) || c.d2V.size() != packed_size(p)) {
        throw DimensionMismatch("curvature state", packed_size(p), 1, c.d2x.size(), 1);
    }
    for (std::size_t k = 0; k < c.d2x.size(); ++k) {
        if (c.d2x[k].size() != m || c.d2V[k].rows() != m || c.d2V[k].cols() != m) {
            throw DimensionMismatch("curvature entry", static_cast<std::size_t>(m), static_cast<std::size_t>(m),
                                    static_cast<std::size_t>(c.d2V[k].rows()),
                                    static_cast<std::size_t>(c.d2V[k].cols()));
        }
    }
}

Vector pred_u(const Matrix& V_pred, const SystemMatrices& sm) { return V_pred * sm.H.transpose(); }

}  // namespace

SensitivityState predict_sensitivities(const SensitivityState& prev, const Vector& x_filt_prev,
                                       const Matrix& V_filt_prev, const SystemMatrices& sm,
                                       const DerivativeBundle& db) {
    validate_dimensions(sm, db);
    const auto m = static_cast<Eigen::Index>(sm.state_dim());
    check_sensitivity_inputs(prev, db.num_params(), m);
    Recursions rec(sm, db);
    const Matrix VFt = V_filt_prev * sm.F.transpose();
    SensitivityState out;
    double asym = 0.0;
    rec.predict_first(prev, x_filt_prev, VFt, out, asym);
    return out;
}

InnovationSensitivities innovation_sensitivities(const SensitivityState& pred, const Vector& x_pred,
                                                 const Matrix& V_pred, const SystemMatrices& sm,
                                                 const DerivativeBundle& db) {
    validate_dimensions(sm, db);
    check_sensitivity_inputs(pred, db.num_params(), static_cast<Eigen::Index>(sm.state_dim()));
    Recursions rec(sm, db);
    InnovationSensitivities out;
    Matrix du;
    rec.innovation_first(pred, x_pred, V_pred, pred_u(V_pred, sm), out, du);
    return out;
}

SensitivityState update_sensitivities(const SensitivityState& pred, const FilterStep& step,
                                      const InnovationSensitivities& innov, const SystemMatrices& sm,
                                      const DerivativeBundle& db) {
    validate_dimensions(sm, db);
    check_sensitivity_inputs(pred, db.num_params(), static_cast<Eigen::Index>(sm.state_dim()));
    Recursions rec(sm, db);
    const Vector u = pred_u(step.V_pred, sm);
    InnovationSensitivities recomputed;
    Matrix du;
    rec.innovation_first(pred, step.x_pred, step.V_pred, u, recomputed, du);
    SensitivityState out;
    double asym = 0.0;
    rec.update_first(pred, step, u, innov, du, out, asym);
    return out;
}

GradientSummary sigma2_and_gradient(std::span<const double> eps, std::span<const double> r, const Matrix& deps,
                                    const Matrix& dr) {
    const std::size_t n = eps.size();
    if (r.size() != n || static_cast<std::size_t>(deps.rows()) != n || static_cast<std::size_t>(dr.rows()) != n ||
        deps.cols() != dr.cols()) {
        throw DimensionMismatch("derivative traces", n, static_cast<std::size_t>(deps.cols()),
                                static_cast<std::size_t>(deps.rows()), static_cast<std::size_t>(dr.cols()));
    }
    const LikelihoodSummary s =
        concentrated_loglik(std::vector<double>(eps.begin(), eps.end()), std::vector<double>(r.begin(), r.end()));
    LikelihoodAccumulator acc(static_cast<std::size_t>(deps.cols()), false);
    for (std::size_t k = 0; k < n; ++k) {
        const auto kk = static_cast<Eigen::Index>(k);
        acc.add(eps[k], r[k], deps.row(kk).transpose(), dr.row(kk).transpose());
    }
    return acc.gradient(s.sigma2, n);
}

CurvatureState predict_curvatures(const CurvatureState& prev, const SensitivityState& sens_prev,
                                  const Vector& x_filt_prev, const Matrix& V_filt_prev, const SystemMatrices& sm,
                                  const DerivativeBundle& db) {
    validate_dimensions(sm, db);
    const auto m = static_cast<Eigen::Index>(sm.state_dim());
    check_sensitivity_inputs(sens_prev, db.num_params(), m);
    check_curvature_inputs(prev, db.num_params(), m);
    Recursions rec(sm, db);
    const Matrix VFt = V_filt_prev * sm.F.transpose();
    CurvatureState out;
    double asym = 0.0;
    rec.predict_second(prev, sens_prev, x_filt_prev, V_filt_prev, VFt, out, asym);
    return out;
}

InnovationCurvatures innovation_curvatures(const CurvatureState& pred, const SensitivityState& sens_pred,
                                           const Vector& x_pred, const Matrix& V_pred, const SystemMatrices& sm,
                                           const DerivativeBundle& db) {
    validate_dimensions(sm, db);
    const auto m = static_cast<Eigen::Index>(sm.state_dim());
    check_sensitivity_inputs(sens_pred, db.num_params(), m);
    check_curvature_inputs(pred, db.num_params(), m);
    Recursions rec(sm, db);
    const Vector u = pred_u(V_pred, sm);
    InnovationSensitivities first;
    Matrix du;
    rec.innovation_first(sens_pred, x_pred, V_pred, u, first, du);
    InnovationCurvatures out;
    std::vector<Vector> d2u;
    rec.innovation_second(pred, sens_pred, x_pred, V_pred, u, du, out, d2u);
    return out;
}

CurvatureState update_curvatures(const CurvatureState& pred, const SensitivityState& sens_pred,
                                 const SensitivityState& sens_filt, const FilterStep& step,
                                 const InnovationSensitivities& innov, const InnovationCurvatures& curv,
                                 const SystemMatrices& sm, const DerivativeBundle& db) {
    validate_dimensions(sm, db);
    const auto m = static_cast<Eigen::Index>(sm.state_dim());
    check_sensitivity_inputs(sens_pred, db.num_params(), m);
    check_curvature_inputs(pred, db.num_params(), m);
    if (sens_filt.dgain.size() != db.num_params()) {
        throw DimensionMismatch("dgain", db.num_params(), 1, sens_filt.dgain.size(), 1);
    }
    Recursions rec(sm, db);
    const Vector u = pred_u(step.V_pred, sm);
    InnovationSensitivities first;
    Matrix du;
    rec.innovation_first(sens_pred, step.x_pred, step.V_pred, u, first, du);
    InnovationCurvatures unused;
    std::vector<Vector> d2u;
    rec.innovation_second(pred, sens_pred, step.x_pred, step.V_pred, u, du, unused, d2u);
    CurvatureState out;
    double asym = 0.0;
    rec.update_second(pred, sens_filt, step, u, innov, du, curv, d2u, out, asym);
    return out;
}

DerivativeReport evaluate(const SystemMatrices& sm, const DerivativeBundle& db, std::span<const double> y, Order order,
                          const EvaluateOptions& opts) {
    if (y.empty()) {
        throw std::invalid_argument("evaluate: series must contain at least one observation");
    }
    validate_dimensions(sm, db);
    const std::size_t p = db.num_params();
    const auto pi = static_cast<Eigen::Index>(p);
    const auto m = static_cast<Eigen::Index>(sm.state_dim());
    const std::size_t N = y.size();
    const bool first = order != Order::value;
    const bool second = order == Order::hessian;

    Recursions rec(sm, db);
    LikelihoodAccumulator acc(p, second);

    Vector x = Vector::Zero(m);
    Matrix V = opts.init.kappa * Matrix::Identity(m, m);
    SensitivityState sens_filt;
    SensitivityState sens_pred;
    CurvatureState curv_filt;
    CurvatureState curv_pred;
    if (first) sens_filt = SensitivityState::zeros(p, sm.state_dim());
    if (second) curv_filt = CurvatureState::zeros(p, sm.state_dim());

    DerivativeReport report;
    report.order = order;
    std::vector<double> eps;
    std::vector<double> r;
    eps.reserve(N);
    r.reserve(N);
    if (first && opts.keep_traces) {
        report.deps_trace.resize(static_cast<Eigen::Index>(N), pi);
        report.dr_trace.resize(static_cast<Eigen::Index>(N), pi);
    }

    InnovationSensitivities innov;
    InnovationCurvatures icurv;
    Matrix du;
    std::vector<Vector> d2u;
    Matrix VFt;
    double max_asym = 0.0;

    for (std::size_t n = 0; n < N; ++n) {
        double asym = 0.0;
        if (first) VFt.noalias() = V * sm.F.transpose();
        if (first) rec.predict_first(sens_filt, x, VFt, sens_pred, asym);
        if (second) rec.predict_second(curv_filt, sens_filt, x, V, VFt, curv_pred, asym);

        Prediction pred = detail::predict_step(x, V, sm, asym);
        max_asym = std::max(max_asym, asym);
        if (!pred.x.allFinite() || !pred.V.allFinite()) throw NonFiniteState(n);
        if (!std::isfinite(y[n])) {
            throw NonFiniteInput("observation " + std::to_string(n) + " is not finite");
        }
        FilterStep step = detail::update_step(pred.x, pred.V, y[n], sm, asym);
        max_asym = std::max(max_asym, asym);
        if (!std::isfinite(step.r) || !std::isfinite(step.eps) || !step.x_filt.allFinite() ||
            !step.V_filt.allFinite()) {
            throw NonFiniteState(n);
        }
        eps.push_back(step.eps);
        r.push_back(step.r);

        if (first) {
            const Vector u = step.V_pred * sm.H.transpose();
            rec.innovation_first(sens_pred, step.x_pred, step.V_pred, u, innov, du);
            SensitivityState next;
            rec.update_first(sens_pred, step, u, innov, du, next, asym);
            for (std::size_t i = 0; i < p; ++i) {
                if (!next.dx[i].allFinite() || !next.dV[i].allFinite() || !std::isfinite(innov.dr(static_cast<Eigen::Index>(i)))) {
                    throw NonFiniteDerivative(n, i, i);
                }
            }
            acc.add(step.eps, step.r, innov.deps, innov.dr);
            if (opts.keep_traces) {
                report.deps_trace.row(static_cast<Eigen::Index>(n)) = innov.deps.transpose();
                report.dr_trace.row(static_cast<Eigen::Index>(n)) = innov.dr.transpose();
            }
            if (second) {
                rec.innovation_second(curv_pred, sens_pred, step.x_pred, step.V_pred, u, du, icurv, d2u);
                CurvatureState cnext;
                rec.update_second(curv_pred, next, step, u, innov, du, icurv, d2u, cnext, asym);
                for (std::size_t i = 0; i < p; ++i) {
                    for (std::size_t j = i; j < p; ++j) {
                        const std::size_t ij = packed_index(p, i, j);
                        if (!cnext.d2x[ij].allFinite() || !cnext.d2V[ij].allFinite()) {
                            throw NonFiniteDerivative(n, i, j);
                        }
                    }
                }
                acc.add_second(step.eps, step.r, innov.deps, innov.dr, icurv.d2eps, icurv.d2r);
                curv_filt = std::move(cnext);
            }
            sens_filt = std::move(next);
            max_asym = std::max(max_asym, asym);
        }
        x = std::move(step.x_filt);
        V = std::move(step.V_filt);
    }

    LikelihoodSummary summary = concentrated_loglik(std::move(eps), std::move(r));
    report.loglik = summary.loglik;
    report.sigma2 = summary.sigma2;
    report.n_obs = summary.n_obs;
    report.max_asymmetry = max_asym;
    if (first) {
        GradientSummary g = acc.gradient(summary.sigma2, N);
        report.grad = std::move(g.grad);
        report.dsigma2 = g.dsigma2;
        if (second) {
            g.grad = report.grad;
            acc.hessian(g, N, report.d2sigma2, report.hessian);
        }
        if (!report.grad.allFinite()) throw NonFiniteDerivative(N, 0, 0);
    }
    report.eps_trace = std::move(summary.eps_trace);
    report.r_trace = std::move(summary.r_trace);
    return report;
}

DerivativeReport evaluate(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                          Order order, const EvaluateOptions& opts) {
    model.check_theta(theta);
    const SystemMatrices sm = model.realize(theta);
    if (order == Order::value) {
        return evaluate(sm, zero_bundle(model.num_params(), sm.state_dim(), sm.noise_dim()), y, order, opts);
    }
    return evaluate(sm, model.differentiate(theta), y, order, opts);
}

}  // namespace dfilter
