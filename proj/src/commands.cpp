#include "dfilter/commands.hpp"

#include <Eigen/Cholesky>
#include <nlohmann/json.hpp>

#include <algorithm>
#include <atomic>
#include <charconv>
#include <cmath>
#include <iomanip>
#include <limits>
#include <optional>
#include <ostream>
#include <sstream>
#include <stdexcept>
#include <thread>

#include "dfilter/diff_filter.hpp"
#include "dfilter/series.hpp"

namespace dfilter::cli {

using json = nlohmann::json;

namespace {

std::string trim(std::string s) {
    const char* ws = " \t\r\n";
    const auto b = s.find_first_not_of(ws);
    if (b == std::string::npos) return {};
    return s.substr(b, s.find_last_not_of(ws) - b + 1);
}

double parse_double(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    const char* first = t.data();
    const char* last = first + t.size();
    if (first != last && *first == '+') ++first;
    double v = 0.0;
    const auto res = std::from_chars(first, last, v);
    if (t.empty() || res.ec != std::errc() || res.ptr != last || !std::isfinite(v)) {
        throw std::invalid_argument("invalid " + what + ": '" + text + "'");
    }
    return v;
}

std::size_t parse_count(const std::string& text, const std::string& what) {
    const std::string t = trim(text);
    std::size_t v = 0;
    const auto res = std::from_chars(t.data(), t.data() + t.size(), v);
    if (t.empty() || res.ec != std::errc() || res.ptr != t.data() + t.size()) {
        throw std::invalid_argument("invalid " + what + ": '" + text + "'");
    }
    return v;
}

std::vector<std::string> split(const std::string& s, char sep) {
    std::vector<std::string> parts;
    std::string cur;
    std::istringstream in(s);
    while (std::getline(in, cur, sep)) parts.push_back(cur);
    if (!s.empty() && s.back() == sep) parts.emplace_back();
    return parts;
}

json to_json(const Vector& v) {
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
    return a;
}

json to_json(const Matrix& m) {
    json a = json::array();
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        json row = json::array();
        for (Eigen::Index j = 0; j < m.cols(); ++j) row.push_back(m(i, j));
        a.push_back(std::move(row));
    }
    return a;
}

json to_json(const NaturalParameters& np) {
    json params = json::array();
    for (const auto& lv : np.params) params.push_back({{"label", lv.label}, {"value", lv.value}});
    json derived = json::array();
    for (const auto& lv : np.derived) derived.push_back({{"label", lv.label}, {"value", lv.value}});
    return {{"params", params}, {"derived", derived}};
}

std::string fmt(double v) { return format_number(v); }

std::string join(const Vector& v) {
    std::string s;
    for (Eigen::Index i = 0; i < v.size(); ++i) s += (i ? " " : "") + fmt(v(i));
    return s;
}

void write_matrix(std::ostream& out, const std::string& title, const Matrix& m) {
    out << title << ":\n";
    for (Eigen::Index i = 0; i < m.rows(); ++i) {
        out << "  ";
        for (Eigen::Index j = 0; j < m.cols(); ++j) out << (j ? " " : "") << std::setw(24) << fmt(m(i, j));
        out << '\n';
    }
}

json result_json(const StateSpaceModel& model, const OptimResult& r) {
    json j;
    j["theta_hat"] = to_json(r.theta_hat);
    j["natural"] = to_json(model.describe(r.theta_hat));
    j["loglik"] = r.loglik;
    j["sigma2"] = r.sigma2;
    j["grad"] = to_json(r.grad);
    j["hessian"] = to_json(r.hessian);
    const Vector se = standard_errors(r.hessian);
    j["std_errors"] = se.size() ? to_json(se) : json(nullptr);
    j["converged"] = r.converged;
    j["status"] = to_string(r.status);
    j["iterations"] = r.iterations;
    j["message"] = r.message;
    json trace = json::array();
    for (const auto& t : r.trace) {
        trace.push_back({{"theta", to_json(t.theta)}, {"loglik", t.loglik}, {"grad_norm", t.grad_norm}});
    }
    j["trace"] = trace;
    return j;
}

void write_result_table(std::ostream& out, const StateSpaceModel& model, const OptimResult& r) {
    const NaturalParameters np = model.describe(r.theta_hat);
    const Vector se = standard_errors(r.hessian);
    out << "status      " << to_string(r.status) << " after " << r.iterations << " iterations\n";
    out << "loglik      " << fmt(r.loglik) << '\n';
    out << "sigma2      " << fmt(r.sigma2) << '\n';
    out << std::left << std::setw(6) << "i" << std::setw(26) << "theta" << std::setw(34) << "natural"
        << std::setw(26) << "dl/dtheta" << std::setw(26) << "d2l/dtheta2" << "std_error (asymptotic)\n";
    for (Eigen::Index i = 0; i < r.theta_hat.size(); ++i) {
        const auto& lv = np.params[static_cast<std::size_t>(i)];
        out << std::setw(6) << i << std::setw(26) << fmt(r.theta_hat(i)) << std::setw(34)
            << (lv.label + "=" + fmt(lv.value)) << std::setw(26) << fmt(r.grad(i)) << std::setw(26)
            << (r.hessian.size() ? fmt(r.hessian(i, i)) : "NA") << (se.size() ? fmt(se(i)) : "NA") << '\n';
    }
    out << std::right;
    for (const auto& lv : np.derived) out << "derived     " << lv.label << " = " << fmt(lv.value) << '\n';
    if (r.hessian.size()) write_matrix(out, "hessian", r.hessian);
    out << "trace (iteration, loglik, |grad|_inf, theta):\n";
    for (std::size_t k = 0; k < r.trace.size(); ++k) {
        const auto& t = r.trace[k];
        out << "  " << k << ' ' << fmt(t.loglik) << ' ' << fmt(t.grad_norm) << ' ' << join(t.theta) << '\n';
    }
}

}  // namespace

std::vector<double> parse_csv_list(const std::string& text) {
    std::vector<double> out;
    for (const auto& part : split(text, ',')) out.push_back(parse_double(part, "number"));
    if (out.empty()) throw std::invalid_argument("empty list");
    return out;
}

double GridAxis::value(std::size_t k) const {
    if (count <= 1) return start;
    return start + (stop - start) * static_cast<double>(k) / static_cast<double>(count - 1);
}

std::vector<GridAxis> parse_grid(const std::string& text) {
    std::vector<GridAxis> axes;
    for (const auto& spec : split(text, ',')) {
        const auto f = split(spec, ':');
        if (f.size() != 4) {
            throw std::invalid_argument("grid axis must be idx:start:stop:count, got '" + spec + "'");
        }
        GridAxis a;
        a.index = parse_count(f[0], "grid index");
        a.start = parse_double(f[1], "grid start");
        a.stop = parse_double(f[2], "grid stop");
        a.count = parse_count(f[3], "grid count");
        if (a.count == 0) throw std::invalid_argument("grid count must be at least 1");
        axes.push_back(a);
    }
    if (axes.empty() || axes.size() > 2) throw std::invalid_argument("grid must have one or two axes");
    if (axes.size() == 2 && axes[0].index == axes[1].index) {
        throw std::invalid_argument("grid axes must refer to different parameters");
    }
    return axes;
}

Vector standard_errors(const Matrix& hessian) {
    if (hessian.size() == 0 || !hessian.allFinite()) return {};
    const Matrix info = -hessian;
    Eigen::LLT<Matrix> llt(info);
    if (llt.info() != Eigen::Success) return {};
    const Matrix cov = llt.solve(Matrix::Identity(info.rows(), info.cols()));
    return cov.diagonal().cwiseMax(0.0).cwiseSqrt();
}

int cmd_fit(const StateSpaceModel& model, std::span<const double> y, const FitOptions& opts, std::ostream& out,
            std::ostream& err) {
    if (opts.starts.empty()) throw std::invalid_argument("fit: at least one start is required");
    const MultistartResult ms = multistart(model, opts.starts, y, opts.optimizer);

    if (opts.format == Format::json) {
        json j;
        j["model"] = model.name();
        j["kappa"] = opts.optimizer.init.kappa;
        j["std_errors_note"] = "asymptotic, from the inverse of -hessian";
        if (ms.best) {
            j["best"] = result_json(model, *ms.best);
            j["best_start"] = ms.best_index;
        } else {
            j["best"] = nullptr;
        }
        json starts = json::array();
        for (const auto& run : ms.runs) {
            json s;
            s["theta0"] = to_json(run.theta0);
            s["result"] = run.result ? result_json(model, *run.result) : json(nullptr);
            s["error"] = run.error;
            starts.push_back(std::move(s));
        }
        j["starts"] = starts;
        out << j.dump(2) << '\n';
    } else {
        out << "model       " << model.name() << '\n';
        out << "kappa       " << fmt(opts.optimizer.init.kappa) << '\n';
        if (ms.best) {
            out << "best start  " << ms.best_index << '\n';
            write_result_table(out, model, *ms.best);
        }
        if (ms.runs.size() > 1) {
            out << "starts (index, status, loglik, theta0 -> theta_hat):\n";
            for (std::size_t i = 0; i < ms.runs.size(); ++i) {
                const auto& run = ms.runs[i];
                out << "  " << i << ' ';
                if (run.result) {
                    out << to_string(run.result->status) << ' ' << fmt(run.result->loglik) << ' ' << join(run.theta0)
                        << " -> " << join(run.result->theta_hat) << '\n';
                } else {
                    out << "error " << run.error << '\n';
                }
            }
        }
    }
    for (std::size_t i = 0; i < ms.runs.size(); ++i) {
        if (!ms.runs[i].error.empty()) err << "start " << i << " failed: " << ms.runs[i].error << '\n';
    }
    if (!ms.best) {
        err << "fit: every start failed\n";
        return kExitError;
    }
    if (!ms.best->converged) {
        err << "fit: best run did not converge (" << ms.best->message << ")\n";
        return kExitFail;
    }
    return kExitOk;
}

int cmd_gradcheck(const StateSpaceModel& model, std::span<const double> y, const ParamVector& theta,
                  const GradcheckOptions& opts, std::ostream& out, std::ostream& err) {
    ComparisonReport rep = compare(model, theta, y, opts.fd, opts.tol);
    Matrix value_hess;
    double max_rel_value = 0.0;
    bool value_pass = true;
    const Eigen::Index p = theta.size();
    if (opts.value_hessian) {
        value_hess = fd_hessian_values(model, theta, y, opts.fd);
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = i; j < p; ++j) {
                const double a = rep.analytic.hessian(i, j);
                const double rel = relative_error(a, value_hess(i, j));
                max_rel_value = std::max(max_rel_value, rel);
                if (!(rel <= opts.tol.value_hess_rel || std::abs(a - value_hess(i, j)) <= opts.tol.abs_floor)) {
                    value_pass = false;
                }
            }
        }
    }
    const bool pass = rep.pass && value_pass;

    if (opts.format == Format::json) {
        json j;
        j["model"] = model.name();
        j["theta"] = to_json(theta);
        j["loglik"] = rep.analytic.loglik;
        j["sigma2"] = rep.analytic.sigma2;
        j["grad"] = to_json(rep.analytic.grad);
        j["numeric_grad"] = to_json(rep.numeric_grad);
        j["hessian"] = to_json(rep.analytic.hessian);
        j["numeric_hessian"] = to_json(rep.numeric_hessian);
        if (opts.value_hessian) {
            j["value_hessian"] = to_json(value_hess);
            j["max_rel_err_value_hessian"] = max_rel_value;
        }
        j["max_rel_err_grad"] = rep.max_rel_err_grad;
        j["max_rel_err_hess"] = rep.max_rel_err_hess;
        j["analytic_seconds"] = rep.analytic_seconds;
        j["fd_gradient_seconds"] = rep.fd_gradient_seconds;
        json entries = json::array();
        for (const auto& e : rep.entries) {
            entries.push_back({{"label", e.label},
                               {"analytic", e.analytic},
                               {"numeric", e.numeric},
                               {"abs_err", e.abs_err},
                               {"rel_err", e.rel_err},
                               {"pass", e.pass}});
        }
        j["entries"] = entries;
        j["pass"] = pass;
        out << j.dump(2) << '\n';
    } else {
        out << "model    " << model.name() << '\n';
        out << "theta    " << join(theta) << '\n';
        out << "loglik   " << fmt(rep.analytic.loglik) << '\n';
        out << "sigma2   " << fmt(rep.analytic.sigma2) << '\n';
        out << std::left << std::setw(10) << "entry" << std::setw(26) << "analytic" << std::setw(26) << "numeric"
            << std::setw(26) << "abs_err" << std::setw(26) << "rel_err" << "ok\n";
        for (const auto& e : rep.entries) {
            out << std::setw(10) << e.label << std::setw(26) << fmt(e.analytic) << std::setw(26) << fmt(e.numeric)
                << std::setw(26) << fmt(e.abs_err) << std::setw(26) << fmt(e.rel_err) << (e.pass ? "yes" : "NO")
                << '\n';
        }
        out << std::right;
        write_matrix(out, "hessian (differential filter)", rep.analytic.hessian);
        write_matrix(out, "hessian (differences of the gradient)", rep.numeric_hessian);
        if (opts.value_hessian) {
            write_matrix(out, "hessian (second differences of l)", value_hess);
            out << "max rel err (value hessian) " << fmt(max_rel_value) << '\n';
        }
        out << "max rel err grad " << fmt(rep.max_rel_err_grad) << "  hess " << fmt(rep.max_rel_err_hess) << '\n';
        out << "time analytic gradient " << fmt(rep.analytic_seconds) << " s, finite differences "
            << fmt(rep.fd_gradient_seconds) << " s\n";
        out << (pass ? "PASS" : "FAIL") << '\n';
    }
    if (!pass) {
        for (const auto& e : rep.entries) {
            if (!e.pass) {
                err << "mismatch " << e.label << ": analytic " << fmt(e.analytic) << " numeric " << fmt(e.numeric)
                    << " rel " << fmt(e.rel_err) << '\n';
            }
        }
        if (!value_pass) err << "value-difference hessian exceeds tolerance (max rel " << fmt(max_rel_value) << ")\n";
        return kExitFail;
    }
    return kExitOk;
}

int cmd_profile(const StateSpaceModel& model, std::span<const double> y, const ParamVector& base,
                const ProfileOptions& opts, std::ostream& out, std::ostream& err) {
    model.check_theta(base);
    if (opts.grid.empty() || opts.grid.size() > 2) throw std::invalid_argument("profile: one or two grid axes");
    const Eigen::Index p = base.size();
    for (const auto& a : opts.grid) {
        if (a.index >= static_cast<std::size_t>(p)) {
            throw std::invalid_argument("profile: grid index " + std::to_string(a.index) + " out of range");
        }
    }
    const std::size_t n0 = opts.grid[0].count;
    const std::size_t n1 = opts.grid.size() == 2 ? opts.grid[1].count : 1;
    const std::size_t total = n0 * n1;

    struct Row {
        ParamVector theta;
        std::optional<DerivativeReport> report;
        std::string error;
    };
    std::vector<Row> rows(total);
    for (std::size_t k = 0; k < total; ++k) {
        rows[k].theta = base;
        rows[k].theta(static_cast<Eigen::Index>(opts.grid[0].index)) = opts.grid[0].value(k / n1);
        if (opts.grid.size() == 2) {
            rows[k].theta(static_cast<Eigen::Index>(opts.grid[1].index)) = opts.grid[1].value(k % n1);
        }
    }

    // Each worker evaluates whole rows; output order does not depend on scheduling.
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t k = next++; k < total; k = next++) {
            try {
                rows[k].report = evaluate(model, rows[k].theta, y, Order::hessian, opts.eval);
            } catch (const std::exception& e) {
                rows[k].error = e.what();
            }
        }
    };
    std::size_t nthreads = opts.threads ? opts.threads : std::max(1u, std::thread::hardware_concurrency());
    nthreads = std::min(nthreads, total);
    std::vector<std::thread> pool;
    for (std::size_t t = 1; t < nthreads; ++t) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    std::size_t failures = 0;
    if (opts.format == Format::json) {
        json arr = json::array();
        for (const auto& r : rows) {
            json j;
            j["theta"] = to_json(r.theta);
            if (r.report) {
                j["loglik"] = r.report->loglik;
                j["grad"] = to_json(r.report->grad);
                j["hessian"] = to_json(r.report->hessian);
                j["sigma2"] = r.report->sigma2;
            } else {
                ++failures;
                j["loglik"] = nullptr;
                j["grad"] = nullptr;
                j["hessian"] = nullptr;
                j["sigma2"] = nullptr;
                j["error"] = r.error;
            }
            arr.push_back(std::move(j));
        }
        out << json{{"model", model.name()}, {"rows", arr}}.dump(2) << '\n';
    } else {
        for (Eigen::Index i = 0; i < p; ++i) out << "theta" << i << ' ';
        out << "loglik";
        for (Eigen::Index i = 0; i < p; ++i) out << " dl/dtheta" << i;
        for (Eigen::Index i = 0; i < p; ++i) {
            for (Eigen::Index j = i; j < p; ++j) out << " d2l/dtheta" << i << "dtheta" << j;
        }
        out << " sigma2\n";
        for (const auto& r : rows) {
            out << join(r.theta);
            if (r.report) {
                out << ' ' << fmt(r.report->loglik);
                for (Eigen::Index i = 0; i < p; ++i) out << ' ' << fmt(r.report->grad(i));
                for (Eigen::Index i = 0; i < p; ++i) {
                    for (Eigen::Index j = i; j < p; ++j) out << ' ' << fmt(r.report->hessian(i, j));
                }
                out << ' ' << fmt(r.report->sigma2) << '\n';
            } else {
                ++failures;
                const std::size_t cols = 2 + static_cast<std::size_t>(p) + packed_size(static_cast<std::size_t>(p));
                for (std::size_t c = 0; c < cols; ++c) out << " NA";
                out << '\n';
            }
        }
    }
    if (failures) {
        for (const auto& r : rows) {
            if (!r.report) err << "profile point (" << join(r.theta) << ") failed: " << r.error << '\n';
        }
    }
    return kExitOk;
}

int cmd_simulate(const StateSpaceModel& model, const ParamVector& theta, const SimulationConfig& cfg,
                 std::ostream& out, std::ostream& /*err*/) {
    write_series(out, simulate(model, theta, cfg));
    return kExitOk;
}

}  // namespace dfilter::cli
