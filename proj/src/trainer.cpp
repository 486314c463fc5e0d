// SPDX-License-Identifier: Apache-2.0
#include "cud/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <stdexcept>

namespace cud {

namespace {

template <class E>
E enum_from(const std::string& s, std::initializer_list<std::pair<const char*, E>> table, const char* what) {
    for (const auto& [name, v] : table)
        if (s == name) return v;
    throw std::runtime_error(std::string("unknown ") + what + ": " + s);
}

}  // namespace

StepStrategy step_strategy_from_string(const std::string& s) {
    return enum_from<StepStrategy>(s,
                                   {{"fixed", StepStrategy::fixed},
                                    {"uniform", StepStrategy::uniform},
                                    {"rule", StepStrategy::rule}},
                                   "step strategy");
}
CatchupSource catchup_source_from_string(const std::string& s) {
    return enum_from<CatchupSource>(s, {{"ema", CatchupSource::ema}, {"live", CatchupSource::live}},
                                    "catch-up source");
}
WeightMode weight_mode_from_string(const std::string& s) {
    return enum_from<WeightMode>(s, {{"vanilla", WeightMode::vanilla}, {"dynamic", WeightMode::dynamic}},
                                 "loss weight mode");
}
TrainMode train_mode_from_string(const std::string& s) {
    return enum_from<TrainMode>(
        s, {{"cud", TrainMode::cud}, {"rf_baseline", TrainMode::rf_baseline}, {"cd_baseline", TrainMode::cd_baseline}},
        "train mode");
}

std::string to_string(StepStrategy v) {
    switch (v) {
        case StepStrategy::fixed: return "fixed";
        case StepStrategy::uniform: return "uniform";
        case StepStrategy::rule: return "rule";
    }
    return "?";
}
std::string to_string(CatchupSource v) { return v == CatchupSource::ema ? "ema" : "live"; }
std::string to_string(WeightMode v) { return v == WeightMode::vanilla ? "vanilla" : "dynamic"; }
std::string to_string(TrainMode v) {
    switch (v) {
        case TrainMode::cud: return "cud";
        case TrainMode::rf_baseline: return "rf_baseline";
        case TrainMode::cd_baseline: return "cd_baseline";
    }
    return "?";
}
const char* to_string(TrainResult::Status s) { return s == TrainResult::Status::ok ? "ok" : "collapse"; }

void TrainConfig::validate(int n_align) const {
    if (!(epsilon > 0.0)) throw std::runtime_error("config: epsilon must be positive");
    if (!(h_hat > 0.0 && h_hat < 1.0)) throw std::runtime_error("config: h_hat must be in (0, 1)");
    if (!(h_hat * n_align < 1.0)) throw std::runtime_error("config: h_hat * n_align must be below 1");
    if (!(h_hat > epsilon)) throw std::runtime_error("config: h_hat must exceed epsilon");
    if (batch_size < 1) throw std::runtime_error("config: batch_size must be at least 1");
    if (total_iters < 0) throw std::runtime_error("config: total_iters must be nonnegative");
}

std::pair<double, double> loss_weights(WeightMode mode, std::int64_t iter, std::int64_t total) {
    if (mode == WeightMode::vanilla) return {1.0, 1.0};
    const double frac = total > 0 ? static_cast<double>(iter) / static_cast<double>(total) : 0.0;
    return {frac, 1.0 - frac};
}

double sample_step_size(StepStrategy strategy, double t, double h_hat, double epsilon,
                        int n_align, Rng& rng) {
    double h = h_hat;
    switch (strategy) {
        case StepStrategy::fixed: break;
        case StepStrategy::uniform: h = rng.uniform(epsilon, h_hat); break;
        case StepStrategy::rule: h = t * h_hat; break;
    }
    return std::min(h, t / static_cast<double>(n_align));
}

namespace {

Tensor interpolate(const Tensor& x1, const Tensor& x0, const std::vector<double>& t) {
    std::vector<double> one_minus(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) one_minus[i] = 1.0 - t[i];
    return add(scale_rows(x1, t), scale_rows(x0, one_minus));
}

VelocityFn head1_of(const VelocityNet& net) {
    return [&net](const Tensor& x, const std::vector<double>& t) { return net.velocity(x, t); };
}

std::vector<double> draw_times(std::size_t n, double epsilon, Rng& rng) {
    std::vector<double> t(n);
    for (auto& v : t) v = rng.uniform(epsilon, 1.0);
    return t;
}

std::vector<double> draw_steps(const std::vector<double>& t, const TrainConfig& cfg, int n_align, Rng& rng) {
    std::vector<double> h(t.size());
    for (std::size_t i = 0; i < t.size(); ++i)
        h[i] = sample_step_size(cfg.step_strategy, t[i], cfg.h_hat, cfg.epsilon, n_align, rng);
    return h;
}

double mean_of(const std::vector<double>& v) {
    if (v.empty()) return 0.0;
    double s = 0.0;
    for (double x : v) s += x;
    return s / static_cast<double>(v.size());
}

}  // namespace

LossParts cud_loss_given(const VelocityNet& net, const VelocityNet& source,
                         const Tensor& x0, const Tensor& x1_tilde, const Tensor& kl,
                         const std::vector<double>& t, const std::vector<double>& h,
                         const RkScheme& scheme, const TrainConfig& cfg, std::int64_t iter) {
    const auto [w1, w2] = loss_weights(cfg.weight_mode, iter, cfg.total_iters);
    Tensor x_t = interpolate(x1_tilde, x0, t);
    std::vector<Tensor> heads = net.forward(x_t, t);
    if (static_cast<int>(heads.size()) != scheme.n_align)
        throw std::runtime_error("cud_loss: head count must equal the scheme's alignment steps");

    const CatchUpTargets targets =
        catch_up_targets(head1_of(source), stop_gradient(x_t), t, h, scheme, cfg.epsilon);

    LossParts parts;
    Tensor kd_sum, gt_sum;
    Tensor gt_target = sub(x1_tilde, x0);
    for (int j = 0; j < scheme.n_align; ++j) {
        Tensor kd_j = mse(targets.target_velocities[static_cast<std::size_t>(j)], heads[static_cast<std::size_t>(j)]);
        Tensor gt_j = mse(gt_target, heads[static_cast<std::size_t>(j)]);
        parts.loss_kd.push_back(kd_j.item());
        parts.loss_gt.push_back(gt_j.item());
        kd_sum = j == 0 ? kd_j : add(kd_sum, kd_j);
        gt_sum = j == 0 ? gt_j : add(gt_sum, gt_j);
    }
    parts.loss = add(add(scale(kd_sum, w1), scale(gt_sum, w2)), scale(kl, cfg.kl_beta));
    parts.kl = kl.item();
    parts.mean_h = mean_of(h);
    return parts;
}

LossParts cud_loss(const VelocityNet& net, const EmaState& ema, const NoiseEncoder& enc,
                   const Tensor& x0, const RkScheme& scheme, const TrainConfig& cfg,
                   std::int64_t iter, Rng& rng) {
    const auto batch = static_cast<std::size_t>(x0.shape()[0]);
    const std::vector<double> t = draw_times(batch, cfg.epsilon, rng);

    switch (cfg.mode) {
        case TrainMode::rf_baseline: {
            auto [x1_tilde, kl] = enc.encode(x0, rng);
            Tensor x_t = interpolate(x1_tilde, x0, t);
            Tensor gt = mse(sub(x1_tilde, x0), net.forward(x_t, t)[0]);
            LossParts parts;
            parts.loss = add(gt, scale(kl, cfg.kl_beta));
            parts.loss_kd.assign(static_cast<std::size_t>(net.config().n_heads), 0.0);
            parts.loss_gt.assign(static_cast<std::size_t>(net.config().n_heads), 0.0);
            parts.loss_gt[0] = gt.item();
            parts.kl = kl.item();
            return parts;
        }
        case TrainMode::cd_baseline: {
            // Self-consistency only: no ground-truth anchor, no encoder.
            Tensor x1(x0.shape());
            rng.fill_normal(x1.values());
            const std::vector<double> h = draw_steps(t, cfg, 1, rng);
            Tensor x_t = interpolate(x1, x0, t);
            Tensor target;
            {
                NoGradScope no_grad;
                Tensor v = net.velocity(x_t, t);
                std::vector<double> t_back(t.size());
                for (std::size_t i = 0; i < t.size(); ++i) t_back[i] = std::max(t[i] - h[i], cfg.epsilon);
                target = ema.net().velocity(sub(x_t, scale_rows(v, h)), t_back);
            }
            Tensor kd = mse(stop_gradient(target), net.forward(x_t, t)[0]);
            LossParts parts;
            parts.loss = kd;
            parts.loss_kd.assign(static_cast<std::size_t>(net.config().n_heads), 0.0);
            parts.loss_gt.assign(static_cast<std::size_t>(net.config().n_heads), 0.0);
            parts.loss_kd[0] = kd.item();
            parts.mean_h = mean_of(h);
            return parts;
        }
        case TrainMode::cud: {
            auto [x1_tilde, kl] = enc.encode(x0, rng);
            const std::vector<double> h = draw_steps(t, cfg, scheme.n_align, rng);
            const VelocityNet& source = cfg.catchup_source == CatchupSource::ema ? ema.net() : net;
            return cud_loss_given(net, source, x0, x1_tilde, kl, t, h, scheme, cfg, iter);
        }
    }
    throw std::runtime_error("cud_loss: unreachable");
}

// ---------------------------------------------------------------------------
// Adam

Adam::Adam(double lr, double beta1, double beta2, double eps) : lr_(lr), b1_(beta1), b2_(beta2), eps_(eps) {}

void Adam::step(const std::vector<Param*>& params, const std::vector<std::vector<double>>& grads) {
    if (params.size() != grads.size()) throw std::runtime_error("adam: params/grads mismatch");
    if (m_.empty()) {
        m_.resize(params.size());
        v_.resize(params.size());
        for (std::size_t i = 0; i < params.size(); ++i) {
            m_[i].assign(static_cast<std::size_t>(params[i]->value.size()), 0.0);
            v_[i].assign(static_cast<std::size_t>(params[i]->value.size()), 0.0);
        }
    }
    ++t_;
    const double bc1 = 1.0 - std::pow(b1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(b2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
        double* p = params[i]->value.data();
        const std::size_t n = m_[i].size();
        const bool zero = grads[i].empty();
        if (!zero && grads[i].size() != n) throw std::runtime_error("adam: gradient size mismatch");
        for (std::size_t k = 0; k < n; ++k) {
            const double g = zero ? 0.0 : grads[i][k];
            m_[i][k] = b1_ * m_[i][k] + (1.0 - b1_) * g;
            v_[i][k] = b2_ * v_[i][k] + (1.0 - b2_) * g * g;
            p[k] -= lr_ * (m_[i][k] / bc1) / (std::sqrt(v_[i][k] / bc2) + eps_);
        }
    }
}

// ---------------------------------------------------------------------------
// Training loop

TrainResult train(VelocityNet& net, NoiseEncoder& enc, EmaState& ema, const Tensor& data,
                  const TrainConfig& cfg, const MetricsSink& sink, std::int64_t log_every,
                  const CheckpointFn& checkpoint, std::int64_t checkpoint_every) {
    const RkScheme scheme = build_scheme(cfg.scheme);
    cfg.validate(scheme.n_align);
    if (data.shape().size() != 2 || data.shape()[1] != net.config().data_dim)
        throw std::runtime_error("train: dataset shape does not match the model");
    if (cfg.mode == TrainMode::cud && net.config().n_heads != scheme.n_align)
        throw std::runtime_error("train: n_heads must equal the scheme's alignment step count");

    Rng rng(mix_seed(cfg.seed, 0));
    Adam opt(cfg.learning_rate);
    std::vector<Param*> all_params;
    for (auto& p : net.params()) all_params.push_back(&p);
    for (auto& p : enc.params()) all_params.push_back(&p);

    const std::int64_t n_rows = data.shape()[0];
    const auto t_start = std::chrono::steady_clock::now();
    double last_logged_ms = 0.0;

    for (std::int64_t iter = 1; iter <= cfg.total_iters; ++iter) {
        std::vector<std::int64_t> idx(static_cast<std::size_t>(cfg.batch_size));
        for (auto& i : idx) i = rng.index(n_rows);
        const Tensor x0 = gather_rows(data, idx);

        Tape tape;
        LossParts parts;
        std::vector<std::vector<double>> grads(all_params.size());
        try {
            TapeScope scope(tape);
            net.bind(tape);
            enc.bind(tape);
            parts = cud_loss(net, ema, enc, x0, scheme, cfg, iter, rng);
            tape.backward(parts.loss);
            for (std::size_t i = 0; i < all_params.size(); ++i)
                if (tape.has_grad(all_params[i]->value)) grads[i] = tape.grad(all_params[i]->value);
            net.unbind();
            enc.unbind();
        } catch (const std::runtime_error& e) {
            net.unbind();
            enc.unbind();
            if (sink) {
                MetricsRecord diag;
                diag.iteration = iter;
                diag.loss_total = std::numeric_limits<double>::quiet_NaN();
                diag.kl_term = std::numeric_limits<double>::quiet_NaN();
                diag.mean_h = std::numeric_limits<double>::quiet_NaN();
                sink(diag);
            }
            return {TrainResult::Status::collapse, iter - 1, e.what()};
        }
        opt.step(all_params, grads);
        ema.update(net, iter);

        if (sink && (iter % log_every == 0 || iter == cfg.total_iters)) {
            const double ms =
                std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t_start).count();
            MetricsRecord rec;
            rec.iteration = iter;
            rec.loss_total = parts.loss.item();
            rec.loss_kd = parts.loss_kd;
            rec.loss_gt = parts.loss_gt;
            rec.kl_term = parts.kl;
            rec.mean_h = parts.mean_h;
            rec.wall_ms = ms - last_logged_ms;
            last_logged_ms = ms;
            sink(rec);
        }
        if (checkpoint && checkpoint_every > 0 && iter % checkpoint_every == 0) checkpoint(iter);
    }
    return {TrainResult::Status::ok, cfg.total_iters, ""};
}

// ---------------------------------------------------------------------------
// Fit-cost profile

std::vector<FitCostBin> fit_cost_profile(const VelocityNet& net, const NoiseEncoder& enc,
                                         const Tensor& data,
                                         const std::vector<std::pair<double, double>>& bins,
                                         int t_samples_per_bin, Rng& rng) {
    if (t_samples_per_bin < 1) throw std::runtime_error("fit_cost_profile: need t samples");
    NoGradScope no_grad;
    Tensor xi(data.shape());
    rng.fill_normal(xi.values());
    const Tensor x1_tilde = enc.encode_with(data, xi).first;
    const Tensor gt_target = sub(x1_tilde, data);
    const auto rows = static_cast<std::size_t>(data.shape()[0]);

    std::vector<FitCostBin> out;
    out.reserve(bins.size());
    for (const auto& [lo, hi] : bins) {
        double acc = 0.0;
        for (int s = 0; s < t_samples_per_bin; ++s) {
            const double tv = lo + (static_cast<double>(s) + 0.5) * (hi - lo) / static_cast<double>(t_samples_per_bin);
            const std::vector<double> t(rows, tv);
            Tensor x_t = interpolate(x1_tilde, data, t);
            acc += mse(gt_target, net.velocity(x_t, t)).item();
        }
        out.push_back({lo, hi, acc / static_cast<double>(t_samples_per_bin)});
    }
    return out;
}

std::vector<FitCostBin> fit_cost_profile(const VelocityNet& net, const NoiseEncoder& enc,
                                         const Tensor& data, int n_bins, Rng& rng) {
    if (n_bins < 1) throw std::runtime_error("fit_cost_profile: need at least one bin");
    const double lo = net.config().t_min;
    std::vector<std::pair<double, double>> bins;
    for (int b = 0; b < n_bins; ++b)
        bins.emplace_back(lo + (1.0 - lo) * b / n_bins, lo + (1.0 - lo) * (b + 1) / n_bins);
    return fit_cost_profile(net, enc, data, bins, 8, rng);
}

}  // namespace cud
