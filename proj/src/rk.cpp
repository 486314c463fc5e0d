// SPDX-License-Identifier: Apache-2.0
#include "cud/rk.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cud {

RkLabel rk_label_from_string(const std::string& s) {
    if (s == "rk12" || s == "RK12") return RkLabel::rk12;
    if (s == "rk23" || s == "RK23") return RkLabel::rk23;
    if (s == "rk34" || s == "RK34") return RkLabel::rk34;
    throw std::runtime_error("unknown Runge-Kutta scheme label: " + s);
}

std::string to_string(RkLabel label) {
    switch (label) {
        case RkLabel::rk12: return "rk12";
        case RkLabel::rk23: return "rk23";
        case RkLabel::rk34: return "rk34";
    }
    return "?";
}

std::vector<double> RkScheme::weights_value(int j) const {
    if (j < 1 || j > n_align) throw std::runtime_error("scheme: alignment step out of range");
    std::vector<double> w;
    w.reserve(weights[static_cast<std::size_t>(j - 1)].size());
    for (const auto& r : weights[static_cast<std::size_t>(j - 1)]) w.push_back(r.value());
    return w;
}

RkScheme build_scheme(RkLabel label) {
    RkScheme s;
    s.label = label;
    switch (label) {
        case RkLabel::rk12:
            s.n_align = 1;
            s.weights = {{Rational(1)}};  // plain Euler step, scaled j per target
            break;
        case RkLabel::rk23:
            s.n_align = 2;
            s.stage_nodes = {Rational(1)};
            s.stage_matrix = {{Rational(1)}};
            for (int j = 1; j <= 2; ++j) s.weights.push_back({Rational(j, 2), Rational(j, 2)});
            break;
        case RkLabel::rk34:
            s.n_align = 3;
            s.stage_nodes = {Rational(1), Rational(2)};
            s.stage_matrix = {{Rational(1)}, {Rational(7, 4), Rational(1, 4)}};
            for (int j = 1; j <= 3; ++j)
                s.weights.push_back({Rational(5 * j, 12), Rational(2 * j, 3), Rational(-j, 12)});
            break;
    }
    return s;
}

RkScheme build_scheme(const std::string& label) { return build_scheme(rk_label_from_string(label)); }

RkScheme build_scheme_rk34_stages(const Rational& a2, const Rational& a3) {
    if (a2 == a3 || a2.is_zero() || a3.is_zero())
        throw std::runtime_error("rk34 stages: nodes must be distinct and nonzero");
    // Solve w2 a2 + w3 a3 = j/2, w2 a2^2 + w3 a3^2 = j/3 (Cramer), then
    // b32 from w2 b32 a2 = j/6; all weights are proportional to j so the
    // stage coefficients come out j-independent.
    const Rational det = a2 * a3 * a3 - a3 * a2 * a2;
    if (det.is_zero()) throw std::runtime_error("rk34 stages: singular node choice");
    RkScheme s;
    s.label = RkLabel::rk34;
    s.n_align = 3;
    s.stage_nodes = {a2, a3};
    const Rational w2_unit = (Rational(1, 2) * a3 * a3 - Rational(1, 3) * a3) / det;
    const Rational w3_unit = (Rational(1, 3) * a2 - Rational(1, 2) * a2 * a2) / det;
    if (w2_unit.is_zero()) throw std::runtime_error("rk34 stages: degenerate weights");
    const Rational b32 = Rational(1, 6) / (w2_unit * a2);
    const Rational b31 = a3 - b32;
    // Fixed-stage-point constraint: a3 - a2 = (3 a3 - 3 a2 + 1) b32.
    if (a3 - a2 != (Rational(3) * a3 - Rational(3) * a2 + Rational(1)) * b32)
        throw std::runtime_error("rk34 stages: nodes violate the fixed-stage-point constraint");
    s.stage_matrix = {{a2}, {b31, b32}};
    for (int j = 1; j <= 3; ++j) {
        const Rational rj(j);
        const Rational w2 = w2_unit * rj;
        const Rational w3 = w3_unit * rj;
        s.weights.push_back({rj - w2 - w3, w2, w3});
    }
    return s;
}

std::vector<Rational> verify_order_conditions(const RkScheme& s, int j) {
    if (j < 1 || j > s.n_align) throw std::runtime_error("verify: alignment step out of range");
    const auto& w = s.weights[static_cast<std::size_t>(j - 1)];
    const Rational rj(j);
    std::vector<Rational> res;
    switch (s.label) {
        case RkLabel::rk12: {
            res.push_back(w[0] - rj);
            break;
        }
        case RkLabel::rk23: {
            const Rational a2 = s.stage_nodes[0];
            const Rational b21 = s.stage_matrix[0][0];
            res.push_back(w[0] + w[1] - rj);
            res.push_back(a2 * w[1] - rj / Rational(2));
            res.push_back(b21 * w[1] - rj / Rational(2));
            res.push_back(a2 - b21);
            break;
        }
        case RkLabel::rk34: {
            const Rational a2 = s.stage_nodes[0];
            const Rational a3 = s.stage_nodes[1];
            const Rational b21 = s.stage_matrix[0][0];
            const Rational b31 = s.stage_matrix[1][0];
            const Rational b32 = s.stage_matrix[1][1];
            res.push_back(w[0] + w[1] + w[2] - rj);
            res.push_back(a2 - b21);
            res.push_back(a3 - (b31 + b32));
            res.push_back(w[1] * a2 + w[2] * a3 - rj / Rational(2));
            res.push_back(w[1] * a2 * a2 + w[2] * a3 * a3 - rj / Rational(3));
            res.push_back(w[1] * b32 * a2 - rj / Rational(6));
            break;
        }
    }
    return res;
}

// ---------------------------------------------------------------------------
// Catch-up sampling

namespace {

std::vector<double> clamp_times(const std::vector<double>& t, double floor) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::max(t[i], floor);
    return out;
}

std::vector<double> times_below(const std::vector<double>& t, const std::vector<double>& h, double mult) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = t[i] - mult * h[i];
    return out;
}

// x - c * (h .* k), rows scaled individually
Tensor step_from(const Tensor& x, const Tensor& k, const std::vector<double>& h, double c) {
    std::vector<double> hs(h.size());
    for (std::size_t i = 0; i < h.size(); ++i) hs[i] = c * h[i];
    return sub(x, scale_rows(k, hs));
}

}  // namespace

CatchUpTargets catch_up_targets(const VelocityFn& f, const Tensor& x_t,
                                const std::vector<double>& t, const std::vector<double>& h,
                                const RkScheme& scheme, double t_floor) {
    if (x_t.shape().size() != 2) throw std::runtime_error("catch_up_targets: x_t must be 2-d");
    const auto rows = static_cast<std::size_t>(x_t.shape()[0]);
    if (t.size() != rows || h.size() != rows)
        throw std::runtime_error("catch_up_targets: t/h length must match batch");
    for (double hv : h)
        if (!(hv > 0.0)) throw std::runtime_error("catch_up_targets: step sizes must be positive");

    NoGradScope no_grad;
    CatchUpTargets out;
    const int stages = scheme.n_stages();

    // Stage velocities at the shared stage points (independent of j).
    out.stage_velocities.push_back(f(x_t, clamp_times(t, t_floor)));
    for (int i = 2; i <= stages; ++i) {
        Tensor xi = x_t;
        const auto& brow = scheme.stage_matrix[static_cast<std::size_t>(i - 2)];
        for (int p = 0; p < i - 1; ++p)
            xi = step_from(xi, out.stage_velocities[static_cast<std::size_t>(p)], h, brow[static_cast<std::size_t>(p)].value());
        const double ai = scheme.stage_nodes[static_cast<std::size_t>(i - 2)].value();
        out.stage_velocities.push_back(f(xi, clamp_times(times_below(t, h, ai), t_floor)));
    }

    for (int j = 1; j <= scheme.n_align; ++j) {
        Tensor xj = x_t;
        const auto w = scheme.weights_value(j);
        for (int i = 0; i < stages; ++i)
            xj = step_from(xj, out.stage_velocities[static_cast<std::size_t>(i)], h, w[static_cast<std::size_t>(i)]);
        out.states.push_back(xj);
        auto tj = times_below(t, h, static_cast<double>(j));
        out.target_velocities.push_back(f(xj, clamp_times(tj, t_floor)));
        out.times.push_back(std::move(tj));
    }
    return out;
}

CatchUpTargets catch_up_targets(const VelocityFn& f, const Tensor& x_t, double t, double h,
                                const RkScheme& scheme, double t_floor) {
    if (x_t.shape().size() != 2) throw std::runtime_error("catch_up_targets: x_t must be 2-d");
    const auto rows = static_cast<std::size_t>(x_t.shape()[0]);
    return catch_up_targets(f, x_t, std::vector<double>(rows, t), std::vector<double>(rows, h), scheme, t_floor);
}

// ---------------------------------------------------------------------------
// Truncation-order probe

ScalarOde default_probe_ode() {
    ScalarOde ode;
    ode.f = [](double x, double) { return -x; };
    ode.solution = [](double x0, double t0, double t) { return x0 * std::exp(t0 - t); };
    return ode;
}

ProbeResult truncation_order_probe(const RkScheme& scheme, int j, const ScalarOde& ode,
                                   std::vector<double> h_grid) {
    if (h_grid.size() < 2) throw std::runtime_error("probe: need at least two step sizes");
    const double x0 = 1.0, t0 = 1.0;
    const VelocityFn f = [&ode](const Tensor& x, const std::vector<double>& t) {
        Tensor v(x.shape());
        for (std::int64_t i = 0; i < x.size(); ++i)
            v.values()[static_cast<std::size_t>(i)] = ode.f(x.data()[i], t[static_cast<std::size_t>(i)]);
        return v;
    };

    ProbeResult result;
    auto measure = [&](const std::vector<double>& grid) {
        std::vector<double> errs;
        for (double h : grid) {
            Tensor x(Shape{1, 1}, {x0});
            auto ct = catch_up_targets(f, x, t0, h, scheme, 0.0);
            const double approx = ct.states[static_cast<std::size_t>(j - 1)].data()[0];
            const double exact = ode.solution(x0, t0, t0 - static_cast<double>(j) * h);
            errs.push_back(std::fabs(approx - exact));
        }
        return errs;
    };

    std::vector<double> errs = measure(h_grid);
    int widen = 0;
    while (*std::min_element(errs.begin(), errs.end()) < 1e-14 && widen < 3) {
        for (auto& h : h_grid) h *= 4.0;
        errs = measure(h_grid);
        ++widen;
    }
    result.reliable = *std::min_element(errs.begin(), errs.end()) >= 1e-14;

    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    const auto n = static_cast<double>(h_grid.size());
    for (std::size_t i = 0; i < h_grid.size(); ++i) {
        const double lx = std::log(h_grid[i]);
        const double ly = std::log(std::max(errs[i], 1e-300));
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
    }
    result.slope = (n * sxy - sx * sy) / (n * sxx - sx * sx);
    result.h_grid = std::move(h_grid);
    result.errors = std::move(errs);
    return result;
}

ProbeResult truncation_order_probe(const RkScheme& scheme, int j) {
    return truncation_order_probe(scheme, j, default_probe_ode(),
                                  {1.0 / 16, 1.0 / 32, 1.0 / 64, 1.0 / 128});
}

}  // namespace cud
