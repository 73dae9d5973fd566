#pragma once

#include <cstdint>
#include <vector>

#include "dfilter/model.hpp"

namespace dfilter {

struct SimulationConfig {
    std::size_t n_obs = 200;
    std::uint64_t seed = 1;
    double sigma2 = 1.0;      // observation noise variance
    double trend_level = 0.0; // initial value of the first state component
};

/// Draws v_n ~ N(0, Q), w_n ~ N(0, sigma2) and iterates
/// x_n = F x_{n-1} + G v_n, y_n = H x_n + w_n from x_0 = trend_level * e_1.
/// Deterministic for a given seed. Requires n_obs >= 2 and sigma2 >= 0.
std::vector<double> simulate(const StateSpaceModel& model, const ParamVector& theta, const SimulationConfig& cfg);

std::vector<double> simulate(const SystemMatrices& sm, const SimulationConfig& cfg);

}  // namespace dfilter
