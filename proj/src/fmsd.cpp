// SPDX-License-Identifier: Apache-2.0
#include "cud/fmsd.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "cud/metrics.hpp"

namespace cud {

namespace {

bool row_finite(const double* p, std::int64_t n) {
    for (std::int64_t i = 0; i < n; ++i)
        if (!std::isfinite(p[i])) return false;
    return true;
}

// Euler trajectory for one chunk with per-stage clean projections; rows that
// go non-finite anywhere are reported via `ok`.
void run_chunk(const VelocityNet& teacher, const Tensor& z1, int n_steps,
               const std::vector<int>& stages, double eps,
               std::map<int, Tensor>& clean_out, std::vector<bool>& ok) {
    NoGradScope no_grad;
    const std::int64_t rows = z1.shape()[0];
    const std::int64_t d = z1.shape()[1];
    const double dt = (1.0 - eps) / static_cast<double>(n_steps);
    Tensor z = z1;
    ok.assign(static_cast<std::size_t>(rows), true);
    for (auto& [stage, t] : clean_out) t = Tensor(z1.shape());

    for (int k = 0; k < n_steps; ++k) {
        const double tk = 1.0 - static_cast<double>(k) * dt;
        if (std::count(stages.begin(), stages.end(), k) > 0)
            clean_out.at(k) = one_step_clean(z, tk, teacher);
        const Tensor v = teacher.velocity(z, std::vector<double>(static_cast<std::size_t>(rows), tk));
        Tensor next(z.shape());
        for (std::int64_t i = 0; i < z.size(); ++i) next.values()[static_cast<std::size_t>(i)] = z.data()[i] - dt * v.data()[i];
        z = next;
    }
    for (int stage : stages)
        if (stage >= n_steps) throw std::runtime_error("fmsd: stage index beyond trajectory");
    for (std::int64_t r = 0; r < rows; ++r) {
        if (!row_finite(z.data() + r * d, d)) ok[static_cast<std::size_t>(r)] = false;
        for (const auto& [stage, t] : clean_out)
            if (!row_finite(t.data() + r * d, d)) ok[static_cast<std::size_t>(r)] = false;
    }
}

}  // namespace

TeacherPairSet build_teacher_pairs(const VelocityNet& teacher, std::int64_t n_pairs, int n_steps,
                                   const std::vector<int>& stages, Rng& rng, double eps) {
    TeacherPairSet out;
    out.stages = stages;
    const std::int64_t d = teacher.config().data_dim;
    if (n_pairs == 0) return out;

    Tensor z1(Shape{n_pairs, d});
    rng.fill_normal(z1.values());

    std::map<int, Tensor> clean;
    for (int stage : stages) clean[stage] = Tensor();
    std::vector<bool> ok;
    // The velocity net's own finiteness guards throw on a poisoned batch;
    // fall back to per-row evaluation so healthy pairs survive.
    try {
        run_chunk(teacher, z1, n_steps, stages, eps, clean, ok);
    } catch (const std::runtime_error&) {
        ok.assign(static_cast<std::size_t>(n_pairs), false);
        for (auto& [stage, t] : clean) t = Tensor(z1.shape());
        for (std::int64_t r = 0; r < n_pairs; ++r) {
            Tensor row = gather_rows(z1, {r});
            std::map<int, Tensor> crow;
            for (int stage : stages) crow[stage] = Tensor();
            std::vector<bool> rok;
            try {
                run_chunk(teacher, row, n_steps, stages, eps, crow, rok);
            } catch (const std::runtime_error&) {
                continue;
            }
            if (!rok[0]) continue;
            ok[static_cast<std::size_t>(r)] = true;
            for (int stage : stages)
                for (std::int64_t j = 0; j < d; ++j)
                    clean.at(stage).values()[static_cast<std::size_t>(r * d + j)] = crow.at(stage).data()[j];
        }
    }

    std::vector<std::int64_t> keep;
    for (std::int64_t r = 0; r < n_pairs; ++r)
        if (ok[static_cast<std::size_t>(r)]) keep.push_back(r);
    out.skipped = n_pairs - static_cast<std::int64_t>(keep.size());
    if (keep.empty()) return out;
    out.z1 = gather_rows(z1, keep);
    for (int stage : stages) out.clean[stage] = gather_rows(clean.at(stage), keep);
    return out;
}

void distill_stage(VelocityNet& student, const TeacherPairSet& pairs, int stage,
                   std::int64_t iters, std::int64_t batch_size, bool sam, EmaState& ema,
                   Adam& opt, Rng& rng) {
    if (pairs.clean.find(stage) == pairs.clean.end())
        throw std::runtime_error("fmsd: no clean images for stage " + std::to_string(stage));
    const Tensor& clean = pairs.clean.at(stage);
    const std::int64_t n = pairs.count();
    if (n == 0) throw std::runtime_error("fmsd: empty pair set");

    std::vector<Param*> params;
    for (auto& p : student.params()) params.push_back(&p);

    for (std::int64_t iter = 1; iter <= iters; ++iter) {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(std::min(batch_size, n)));
        for (auto& i : idx) i = rng.index(n);
        const Tensor zb = gather_rows(pairs.z1, idx);
        const Tensor cb = gather_rows(clean, idx);
        const Tensor target = sub(zb, cb);  // velocity pointing from clean to noise
        const std::vector<double> t_one(idx.size(), 1.0);

        Tape tape;
        std::vector<std::vector<double>> grads(params.size());
        {
            TapeScope scope(tape);
            student.bind(tape);
            Tensor head = student.forward(zb, t_one)[0];
            Tensor loss = mse(target, head);
            if (sam) {
                Tensor ema_head;
                {
                    NoGradScope no_grad;
                    ema_head = ema.net().forward(zb, t_one)[0];
                }
                loss = add(loss, mse(head, stop_gradient(ema_head)));
            }
            tape.backward(loss);
            for (std::size_t i = 0; i < params.size(); ++i)
                if (tape.has_grad(params[i]->value)) grads[i] = tape.grad(params[i]->value);
            student.unbind();
        }
        opt.step(params, grads);
        ema.update(student, iter);
    }
}

FmsdResult fmsd_run(const VelocityNet& teacher, const FmsdConfig& cfg, const Tensor& reference,
                    std::int64_t eval_samples, int metric_projections, std::uint64_t metric_seed) {
    Rng rng(mix_seed(cfg.seed, 3));
    FmsdResult result{teacher.clone(), {}, {}};
    result.pairs = build_teacher_pairs(teacher, cfg.n_pairs, cfg.n_steps, cfg.stages, rng, cfg.epsilon);
    if (cfg.stages.empty()) return result;

    EmaState ema(result.student, cfg.ema_decay, cfg.ema_start);
    Adam opt(cfg.learning_rate);

    // Fixed evaluation noise + fixed projection seed so per-stage metrics are
    // comparable across stages.
    Tensor eval_z;
    if (reference.defined() && eval_samples > 0) {
        Rng eval_rng(mix_seed(metric_seed, 11));
        eval_z = Tensor(Shape{eval_samples, teacher.config().data_dim});
        eval_rng.fill_normal(eval_z.values());
    }

    for (int stage : cfg.stages) {
        distill_stage(result.student, result.pairs, stage, cfg.iters_per_stage, cfg.batch_size,
                      cfg.sam, ema, opt, rng);
        if (eval_z.defined()) {
            NoGradScope no_grad;
            const VelocityFn f = [&](const Tensor& x, const std::vector<double>& t) {
                return result.student.velocity(x, t);
            };
            const Tensor one_step = sample_trajectory(f, Solver::euler, 1, eval_z, cfg.epsilon).final_state();
            Rng proj_rng(mix_seed(metric_seed, 12));
            result.stage_metrics.push_back(sliced_w2(one_step, reference, metric_projections, proj_rng));
        }
    }
    return result;
}

}  // namespace cud
