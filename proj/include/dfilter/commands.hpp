#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <vector>

#include "dfilter/model.hpp"
#include "dfilter/optimize.hpp"
#include "dfilter/simulate.hpp"
#include "dfilter/verify.hpp"

namespace dfilter::cli {

enum class Format { table, json };

/// Process exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitFail = 1;   // tolerance exceeded or no convergence
inline constexpr int kExitError = 2;  // bad input or runtime error

/// Parses "a,b,c" into doubles. Throws std::invalid_argument.
std::vector<double> parse_csv_list(const std::string& text);

struct GridAxis {
    std::size_t index = 0;
    double start = 0.0;
    double stop = 0.0;
    std::size_t count = 1;

    double value(std::size_t k) const;
};

/// "idx:start:stop:count[,idx:start:stop:count]" with one or two axes.
std::vector<GridAxis> parse_grid(const std::string& text);

struct FitOptions {
    std::vector<ParamVector> starts;  // at least one
    OptimizerConfig optimizer{};
    Format format = Format::table;
};

struct GradcheckOptions {
    FdConfig fd{};
    ComparisonTolerances tol{};
    bool value_hessian = false;  // also compare against second differences of l
    Format format = Format::table;
};

struct ProfileOptions {
    std::vector<GridAxis> grid;
    EvaluateOptions eval{};
    Format format = Format::table;
    std::size_t threads = 0;  // 0 picks the hardware concurrency
};

int cmd_fit(const StateSpaceModel& model, std::span<const double> y, const FitOptions& opts, std::ostream& out,
            std::ostream& err);

int cmd_gradcheck(const StateSpaceModel& model, std::span<const double> y, const ParamVector& theta,
                  const GradcheckOptions& opts, std::ostream& out, std::ostream& err);

int cmd_profile(const StateSpaceModel& model, std::span<const double> y, const ParamVector& base,
                const ProfileOptions& opts, std::ostream& out, std::ostream& err);

int cmd_simulate(const StateSpaceModel& model, const ParamVector& theta, const SimulationConfig& cfg,
                 std::ostream& out, std::ostream& err);

/// sqrt(diag((-H)^{-1})); empty if -H is not positive definite.
Vector standard_errors(const Matrix& hessian);

}  // namespace dfilter::cli
