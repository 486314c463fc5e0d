// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cud/rational.hpp"
#include "cud/tensor.hpp"

namespace cud {

enum class RkLabel { rk12, rk23, rk34 };

RkLabel rk_label_from_string(const std::string& s);
std::string to_string(RkLabel label);

// Multi-target explicit Runge-Kutta scheme: one fixed set of stage points
// (a_i, b_ij) shared by every alignment step j, with per-j weights w(j).
// All coefficients are exact rationals.
struct RkScheme {
    RkLabel label = RkLabel::rk12;
    int n_align = 1;                                 // number of alignment targets (= stage count)
    std::vector<Rational> stage_nodes;               // a_2..a_s, multiples of h below t
    std::vector<std::vector<Rational>> stage_matrix; // b_ij, row i-2 holds b_{i,1..i-1}
    std::vector<std::vector<Rational>> weights;      // weights[j-1] = w_1..w_s for target j

    int n_stages() const { return n_align; }
    std::vector<double> weights_value(int j) const;
};

RkScheme build_scheme(RkLabel label);
RkScheme build_scheme(const std::string& label);

// Expert-only: three-stage scheme with custom stage nodes satisfying the
// fixed-stage-point constraint a3 - a2 = (3 a3 - 3 a2 + 1) b32. Untested in
// the source material beyond the equidistant default.
RkScheme build_scheme_rk34_stages(const Rational& a2, const Rational& a3);

// Residuals of every applicable order condition for alignment step j, exact.
// All zero for the built-in schemes.
std::vector<Rational> verify_order_conditions(const RkScheme& scheme, int j);

// Velocity field callable: rows of x paired with entries of t.
using VelocityFn = std::function<Tensor(const Tensor& x, const std::vector<double>& t)>;

// Catch-up sampling output: one state per alignment step plus the velocities
// evaluated at those states.
struct CatchUpTargets {
    std::vector<Tensor> states;                 // states[j-1] = X~_{t-jh}
    std::vector<Tensor> stage_velocities;       // k_1..k_s
    std::vector<std::vector<double>> times;     // times[j-1][row] = t - j h (unclamped)
    std::vector<Tensor> target_velocities;      // f(states[j-1], clamp(times[j-1]))
};

// Per-row step sizes h; times passed to f are clamped to at least t_floor.
// The caller guarantees f ignores gradient recording (stop-gradient contract);
// this function additionally evaluates under NoGradScope.
CatchUpTargets catch_up_targets(const VelocityFn& f, const Tensor& x_t,
                                const std::vector<double>& t, const std::vector<double>& h,
                                const RkScheme& scheme, double t_floor = 0.0);

// Scalar convenience: single sample, uniform h.
CatchUpTargets catch_up_targets(const VelocityFn& f, const Tensor& x_t, double t, double h,
                                const RkScheme& scheme, double t_floor = 0.0);

struct ProbeResult {
    double slope = 0.0;            // least-squares slope of log(err) vs log(h)
    bool reliable = true;          // false when errors sit at the 1e-14 floor even after widening
    std::vector<double> h_grid;
    std::vector<double> errors;
};

struct ScalarOde {
    std::function<double(double x, double t)> f;
    std::function<double(double x0, double t0, double t)> solution;  // exact value at time t
};

// Default probe ODE: dx/dt = -x, x(t - s) = x(t) * e^{s} stepping downward.
ScalarOde default_probe_ode();

ProbeResult truncation_order_probe(const RkScheme& scheme, int j, const ScalarOde& ode,
                                   std::vector<double> h_grid);
ProbeResult truncation_order_probe(const RkScheme& scheme, int j);  // default ODE and grid

}  // namespace cud
