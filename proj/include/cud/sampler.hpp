// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cud/model.hpp"
#include "cud/rk.hpp"
#include "cud/rng.hpp"

namespace cud {

enum class Solver { euler, heun };

Solver solver_from_string(const std::string& s);
std::string to_string(Solver s);

struct SampleTrajectory {
    std::vector<std::pair<double, Tensor>> states;  // (t, state), t strictly decreasing 1 -> eps
    std::int64_t nfe = 0;                           // velocity-net evaluations actually made

    const Tensor& final_state() const { return states.back().second; }
};

// Integrates dZ/dt = f from t=1 down to t=eps on a uniform grid.
// Euler: n evaluations. Heun: trapezoidal corrector on every step except the
// last, which falls back to Euler; 2n-1 evaluations.
SampleTrajectory sample_trajectory(const VelocityFn& f, Solver solver, int n_steps,
                                   const Tensor& z1, double eps);

// Draws z1 ~ N(0, I) [count x d] and integrates with the net's head-1 velocity.
SampleTrajectory sample(const VelocityNet& net, Solver solver, int n_steps, std::int64_t count,
                        Rng& rng, double eps);

// One-step projection to the data end: z_m - m * f(z_m, m).
Tensor one_step_clean(const Tensor& z_m, double m, const VelocityFn& f);
Tensor one_step_clean(const Tensor& z_m, double m, const VelocityNet& net);

}  // namespace cud
