// SPDX-License-Identifier: Apache-2.0
#include "cud/sampler.hpp"

#include <cmath>
#include <stdexcept>

namespace cud {

Solver solver_from_string(const std::string& s) {
    if (s == "euler") return Solver::euler;
    if (s == "heun") return Solver::heun;
    throw std::runtime_error("unknown solver: " + s);
}

std::string to_string(Solver s) { return s == Solver::euler ? "euler" : "heun"; }

namespace {

void check_state(const Tensor& z, int step) {
    for (double v : z.values())
        if (!std::isfinite(v))
            throw std::runtime_error("sampler: non-finite state at step " + std::to_string(step));
}

Tensor axpy(const Tensor& z, double c, const Tensor& v) {
    Tensor out(z.shape());
    const double* pz = z.data();
    const double* pv = v.data();
    double* po = out.data();
    for (std::int64_t i = 0; i < z.size(); ++i) po[i] = pz[i] + c * pv[i];
    return out;
}

}  // namespace

SampleTrajectory sample_trajectory(const VelocityFn& f, Solver solver, int n_steps,
                                   const Tensor& z1, double eps) {
    if (n_steps < 1) throw std::runtime_error("sampler: n_steps must be at least 1");
    if (z1.shape().size() != 2) throw std::runtime_error("sampler: z1 must be 2-d");
    const auto rows = static_cast<std::size_t>(z1.shape()[0]);
    const double dt = (1.0 - eps) / static_cast<double>(n_steps);

    SampleTrajectory traj;
    std::int64_t nfe = 0;
    const VelocityFn fc = [&](const Tensor& x, const std::vector<double>& t) {
        ++nfe;
        return f(x, t);
    };

    Tensor z = z1;
    traj.states.emplace_back(1.0, z);
    for (int k = 0; k < n_steps; ++k) {
        const double tk = 1.0 - static_cast<double>(k) * dt;
        const double tk1 = k + 1 == n_steps ? eps : 1.0 - static_cast<double>(k + 1) * dt;
        const Tensor vk = fc(z, std::vector<double>(rows, tk));
        if (solver == Solver::euler || k + 1 == n_steps) {
            z = axpy(z, -dt, vk);
        } else {
            const Tensor pred = axpy(z, -dt, vk);
            const Tensor vk1 = fc(pred, std::vector<double>(rows, tk1));
            z = axpy(axpy(z, -0.5 * dt, vk), -0.5 * dt, vk1);
        }
        check_state(z, k);
        traj.states.emplace_back(tk1, z);
    }
    traj.nfe = nfe;
    return traj;
}

SampleTrajectory sample(const VelocityNet& net, Solver solver, int n_steps, std::int64_t count,
                        Rng& rng, double eps) {
    Tensor z1(Shape{count, net.config().data_dim});
    rng.fill_normal(z1.values());
    NoGradScope no_grad;
    const VelocityFn f = [&net](const Tensor& x, const std::vector<double>& t) { return net.velocity(x, t); };
    return sample_trajectory(f, solver, n_steps, z1, eps);
}

Tensor one_step_clean(const Tensor& z_m, double m, const VelocityFn& f) {
    const auto rows = static_cast<std::size_t>(z_m.shape()[0]);
    return axpy(z_m, -m, f(z_m, std::vector<double>(rows, m)));
}

Tensor one_step_clean(const Tensor& z_m, double m, const VelocityNet& net) {
    NoGradScope no_grad;
    const auto rows = static_cast<std::size_t>(z_m.shape()[0]);
    return axpy(z_m, -m, net.velocity(z_m, std::vector<double>(rows, m)));
}

}  // namespace cud
