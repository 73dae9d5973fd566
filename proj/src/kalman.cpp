#include "dfilter/kalman.hpp"

#include <cmath>
#include <numbers>
#include <stdexcept>

namespace dfilter {

double symmetrize(Matrix& V) {
    if (V.size() == 0) return 0.0;
    const double scale = V.cwiseAbs().maxCoeff();
    const double asym = (V - V.transpose()).cwiseAbs().maxCoeff();
    V = 0.5 * (V + V.transpose()).eval();
    return scale > 0.0 ? asym / scale : asym;
}

namespace {

void check_state_shapes(const Vector& x, const Matrix& V, const SystemMatrices& sm) {
    const auto m = static_cast<std::size_t>(sm.F.rows());
    if (static_cast<std::size_t>(x.size()) != m) {
        throw DimensionMismatch("x", m, 1, static_cast<std::size_t>(x.size()), 1);
    }
    if (static_cast<std::size_t>(V.rows()) != m || static_cast<std::size_t>(V.cols()) != m) {
        throw DimensionMismatch("V", m, m, static_cast<std::size_t>(V.rows()),
                                static_cast<std::size_t>(V.cols()));
    }
}

}  // namespace

namespace detail {

Prediction predict_step(const Vector& x, const Matrix& V, const SystemMatrices& sm, double& asym) {
    Prediction out;
    out.x.noalias() = sm.F * x;
    const Matrix FV = sm.F * V;
    out.V.noalias() = FV * sm.F.transpose();
    out.V.noalias() += sm.G * sm.Q * sm.G.transpose();
    asym = symmetrize(out.V);
    return out;
}

FilterStep update_step(const Vector& x_pred, const Matrix& V_pred, double y, const SystemMatrices& sm,
                       double& asym) {
    FilterStep s;
    s.x_pred = x_pred;
    s.V_pred = V_pred;
    const Vector u = V_pred * sm.H.transpose();
    s.r = sm.H.dot(u) + sm.R;
    s.eps = y - sm.H.dot(x_pred);
    s.gain = u / s.r;
    s.x_filt = x_pred + s.gain * s.eps;
    // (I - K H) V with H V = u^T
    s.V_filt = V_pred;
    s.V_filt.noalias() -= s.gain * u.transpose();
    asym = symmetrize(s.V_filt);
    return s;
}

}  // namespace detail

namespace {

bool finite_prediction(const Prediction& p) { return p.x.allFinite() && p.V.allFinite(); }

bool finite_step(const FilterStep& s) {
    return std::isfinite(s.r) && std::isfinite(s.eps) && s.x_filt.allFinite() && s.V_filt.allFinite();
}

// Shared driver for run_filter and filter_loglik; `on_step` sees each completed step.
template <typename OnStep>
LikelihoodSummary drive(const SystemMatrices& sm, std::span<const double> y, const InitialCondition& init,
                        double& max_asym, OnStep&& on_step) {
    if (y.empty()) {
        throw std::invalid_argument("run_filter: series must contain at least one observation");
    }
    validate_dimensions(sm);
    const auto m = static_cast<Eigen::Index>(sm.state_dim());
    Vector x = Vector::Zero(m);
    Matrix V = init.kappa * Matrix::Identity(m, m);

    std::vector<double> eps;
    std::vector<double> r;
    eps.reserve(y.size());
    r.reserve(y.size());
    max_asym = 0.0;
    for (std::size_t n = 0; n < y.size(); ++n) {
        double asym = 0.0;
        Prediction pred = detail::predict_step(x, V, sm, asym);
        max_asym = std::max(max_asym, asym);
        if (!finite_prediction(pred)) throw NonFiniteState(n);
        if (!std::isfinite(y[n])) {
            throw NonFiniteInput("observation " + std::to_string(n) + " is not finite");
        }
        FilterStep step = detail::update_step(pred.x, pred.V, y[n], sm, asym);
        max_asym = std::max(max_asym, asym);
        if (!finite_step(step)) throw NonFiniteState(n);
        eps.push_back(step.eps);
        r.push_back(step.r);
        x = step.x_filt;
        V = step.V_filt;
        on_step(std::move(step));
    }
    return concentrated_loglik(std::move(eps), std::move(r));
}

}  // namespace

Prediction predict(const Vector& x_filt_prev, const Matrix& V_filt_prev, const SystemMatrices& sm) {
    validate_dimensions(sm);
    check_state_shapes(x_filt_prev, V_filt_prev, sm);
    double asym = 0.0;
    return detail::predict_step(x_filt_prev, V_filt_prev, sm, asym);
}

FilterStep update(const Vector& x_pred, const Matrix& V_pred, double y, const SystemMatrices& sm) {
    validate_dimensions(sm);
    check_state_shapes(x_pred, V_pred, sm);
    if (!std::isfinite(y)) throw NonFiniteInput("observation is not finite");
    if (!x_pred.allFinite() || !V_pred.allFinite()) throw NonFiniteInput("predicted state is not finite");
    double asym = 0.0;
    return detail::update_step(x_pred, V_pred, y, sm, asym);
}

FilterRun run_filter(const SystemMatrices& sm, std::span<const double> y, const InitialCondition& init) {
    FilterRun run;
    run.steps.reserve(y.size());
    run.summary = drive(sm, y, init, run.max_asymmetry,
                        [&run](FilterStep&& s) { run.steps.push_back(std::move(s)); });
    return run;
}

FilterRun run_filter(const StateSpaceModel& model, const ParamVector& theta, std::span<const double> y,
                     const InitialCondition& init) {
    model.check_theta(theta);
    return run_filter(model.realize(theta), y, init);
}

LikelihoodSummary filter_loglik(const StateSpaceModel& model, const ParamVector& theta,
                                std::span<const double> y, const InitialCondition& init) {
    model.check_theta(theta);
    double asym = 0.0;
    return drive(model.realize(theta), y, init, asym, [](FilterStep&&) {});
}

LikelihoodSummary concentrated_loglik(std::vector<double> eps_trace, std::vector<double> r_trace) {
    if (eps_trace.empty() || eps_trace.size() != r_trace.size()) {
        throw std::invalid_argument("concentrated_loglik: traces must be nonempty and of equal length");
    }
    const std::size_t n = eps_trace.size();
    double weighted = 0.0;
    double sum_log_r = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        if (!(r_trace[i] >= 1.0)) {
            throw InvariantViolation("r_n >= 1");
        }
        weighted += eps_trace[i] * eps_trace[i] / r_trace[i];
        sum_log_r += std::log(r_trace[i]);
    }
    const double N = static_cast<double>(n);
    const double sigma2 = weighted / N;
    if (!(sigma2 >= kSigma2Floor)) {
        throw DegenerateLikelihood(kSigma2Floor);
    }
    LikelihoodSummary out;
    out.sigma2 = sigma2;
    out.n_obs = n;
    out.loglik = -0.5 * (N * std::log(2.0 * std::numbers::pi * sigma2) + sum_log_r + N);
    out.eps_trace = std::move(eps_trace);
    out.r_trace = std::move(r_trace);
    return out;
}

}  // namespace dfilter
