// dfilter: fit, gradient-check, profile and simulate state-space models.

#include <CLI11.hpp>

#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include "dfilter/commands.hpp"
#include "dfilter/models.hpp"
#include "dfilter/series.hpp"

namespace {

using namespace dfilter;

struct ModelFlags {
    models::ModelConfig cfg;
    double kappa = 1e4;
    std::vector<std::string> theta0;  // one csv list per start
    std::string format = "table";

    void attach(CLI::App* app, bool multiple_theta) {
        app->add_option("--model", cfg.family, "Model family")
            ->check(CLI::IsMember({"trend", "seasonal", "seasonal-ar"}))
            ->capture_default_str();
        app->add_option("--trend-order", cfg.trend_order, "Trend order for --model trend")
            ->check(CLI::IsMember({1, 2}))
            ->capture_default_str();
        app->add_option("--period", cfg.period, "Seasonal period")->check(CLI::Range(2, 1000))->capture_default_str();
        app->add_option("--ar-order", cfg.ar_order, "AR order for --model seasonal-ar")
            ->check(CLI::Range(1, 64))
            ->capture_default_str();
        app->add_option("--parcor-bound", cfg.parcor_bound, "Bound C on the partial autocorrelations, in (0, 1]")
            ->capture_default_str();
        app->add_option("--init-var", kappa, "Initial state variance kappa (V0 = kappa I)")->capture_default_str();
        auto* opt = app->add_option("--theta0", theta0,
                                    multiple_theta ? "Comma-separated theta; repeat for several starts"
                                                   : "Comma-separated theta");
        if (!multiple_theta) opt->expected(1);
        app->add_option("--format", format, "Output format")
            ->check(CLI::IsMember({"table", "json"}))
            ->capture_default_str();
    }

    cli::Format output_format() const { return format == "json" ? cli::Format::json : cli::Format::table; }

    std::vector<ParamVector> thetas(const StateSpaceModel& model) const {
        std::vector<ParamVector> out;
        for (const auto& s : theta0) {
            const std::vector<double> v = cli::parse_csv_list(s);
            out.push_back(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
            model.check_theta(out.back());
        }
        if (out.empty()) out.push_back(models::default_theta0(model));
        return out;
    }
};

struct DataFlags {
    std::string path;
    bool header = false;

    void attach(CLI::App* app) {
        app->add_option("data", path, "Series file, one value per line")->required();
        app->add_flag("--header", header, "Skip a header line");
    }

    SeriesFile load() const { return load_series(path, SeriesFormat{header}); }
};

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Exact likelihood gradients and Hessians for state-space models"};
    app.require_subcommand(1);

    ModelFlags fit_model;
    DataFlags fit_data;
    std::string method = "bfgs";
    double grad_tol = 1e-6;
    std::size_t max_iter = 200;
    auto* fit = app.add_subcommand("fit", "Maximum-likelihood fit");
    fit_data.attach(fit);
    fit_model.attach(fit, true);
    fit->add_option("--method", method, "Optimizer")->check(CLI::IsMember({"bfgs", "newton"}))->capture_default_str();
    fit->add_option("--tol", grad_tol, "Convergence tolerance on |grad|_inf")->capture_default_str();
    fit->add_option("--max-iter", max_iter, "Iteration limit")->capture_default_str();

    ModelFlags gc_model;
    DataFlags gc_data;
    cli::GradcheckOptions gc_opts;
    double gc_tol = -1.0;
    auto* gc = app.add_subcommand("gradcheck", "Compare analytic derivatives with finite differences");
    gc_data.attach(gc);
    gc_model.attach(gc, false);
    gc->add_option("--tol", gc_tol, "Relative tolerance for gradient and Hessian entries (default 1e-4 / 1e-5)");
    gc->add_option("--fd-step", gc_opts.fd.rel_step, "Relative finite-difference step")->capture_default_str();
    gc->add_flag("--value-hessian", gc_opts.value_hessian, "Also compare with second differences of l");

    ModelFlags pr_model;
    DataFlags pr_data;
    std::string grid;
    std::size_t threads = 0;
    auto* pr = app.add_subcommand("profile", "Evaluate l, gradient and Hessian over a grid");
    pr_data.attach(pr);
    pr_model.attach(pr, false);
    pr->add_option("--grid", grid, "idx:start:stop:count[,idx:start:stop:count]")->required();
    pr->add_option("--threads", threads, "Worker threads (0 = hardware)")->capture_default_str();

    ModelFlags sim_model;
    SimulationConfig sim_cfg;
    auto* sim = app.add_subcommand("simulate", "Simulate a series from the model");
    sim_model.attach(sim, false);
    sim->add_option("-n,--n-obs", sim_cfg.n_obs, "Series length")->capture_default_str();
    sim->add_option("--seed", sim_cfg.seed, "Random seed")->capture_default_str();
    sim->add_option("--sigma2", sim_cfg.sigma2, "Observation noise variance")->capture_default_str();
    sim->add_option("--x0", sim_cfg.trend_level, "Initial trend level")->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? cli::kExitOk : cli::kExitError;
    }

    try {
        if (fit->parsed()) {
            auto model = models::make_model(fit_model.cfg);
            const SeriesFile data = fit_data.load();
            cli::FitOptions opts;
            opts.starts = fit_model.thetas(*model);
            opts.optimizer.method = method == "newton" ? Method::newton : Method::bfgs;
            opts.optimizer.grad_tol = grad_tol;
            opts.optimizer.max_iter = max_iter;
            opts.optimizer.init.kappa = fit_model.kappa;
            opts.format = fit_model.output_format();
            return cli::cmd_fit(*model, data.values, opts, std::cout, std::cerr);
        }
        if (gc->parsed()) {
            auto model = models::make_model(gc_model.cfg);
            const SeriesFile data = gc_data.load();
            gc_opts.fd.init.kappa = gc_model.kappa;
            gc_opts.format = gc_model.output_format();
            if (gc_tol > 0.0) {
                gc_opts.tol.grad_rel = gc_tol;
                gc_opts.tol.hess_rel = gc_tol;
            }
            return cli::cmd_gradcheck(*model, data.values, gc_model.thetas(*model).front(), gc_opts, std::cout,
                                      std::cerr);
        }
        if (pr->parsed()) {
            auto model = models::make_model(pr_model.cfg);
            const SeriesFile data = pr_data.load();
            cli::ProfileOptions opts;
            opts.grid = cli::parse_grid(grid);
            opts.eval.init.kappa = pr_model.kappa;
            opts.format = pr_model.output_format();
            opts.threads = threads;
            return cli::cmd_profile(*model, data.values, pr_model.thetas(*model).front(), opts, std::cout,
                                    std::cerr);
        }
        if (sim->parsed()) {
            auto model = models::make_model(sim_model.cfg);
            return cli::cmd_simulate(*model, sim_model.thetas(*model).front(), sim_cfg, std::cout, std::cerr);
        }
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return cli::kExitError;
    }
    return cli::kExitError;
}
