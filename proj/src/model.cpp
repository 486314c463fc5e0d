// SPDX-License-Identifier: Apache-2.0
#include "cud/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

namespace cud {

double dynamic_skip_weight(double t, double c_skip) {
    return 2.0 * (1.0 - (t * (1.0 - 2.0 * c_skip) + c_skip));
}

namespace {

Tensor init_linear(Shape shape, Rng& rng, double fan_in) {
    Tensor w(std::move(shape));
    const double sd = 1.0 / std::sqrt(fan_in);
    for (auto& v : w.values()) v = sd * rng.normal();
    return w;
}

std::vector<double> clamp_times(const std::vector<double>& t, double lo) {
    std::vector<double> out(t.size());
    for (std::size_t i = 0; i < t.size(); ++i) out[i] = std::min(std::max(t[i], lo), 1.0);
    return out;
}

// First half cosines, second half sines of t*1000 against a log-spaced
// frequency ladder. Plain data: t is an input, not a differentiable quantity.
Tensor sinusoidal_embedding(const std::vector<double>& t, int dim) {
    const int half = dim / 2;
    Tensor emb(Shape{static_cast<std::int64_t>(t.size()), dim});
    double* e = emb.data();
    for (std::size_t r = 0; r < t.size(); ++r) {
        const double ts = t[r] * 1000.0;
        for (int k = 0; k < half; ++k) {
            const double freq = std::exp(-std::log(10000.0) * static_cast<double>(k) / static_cast<double>(half));
            e[r * static_cast<std::size_t>(dim) + static_cast<std::size_t>(k)] = std::cos(ts * freq);
            e[r * static_cast<std::size_t>(dim) + static_cast<std::size_t>(half + k)] = std::sin(ts * freq);
        }
    }
    return emb;
}

void bind_params(std::vector<Param>& params, Tape& tape) {
    for (auto& p : params) p.value = tape.watch(p.value);
}

void unbind_params(std::vector<Param>& params) {
    for (auto& p : params) p.value = stop_gradient(p.value);
}

std::vector<Param> clone_params(const std::vector<Param>& src) {
    std::vector<Param> out;
    out.reserve(src.size());
    for (const auto& p : src) out.push_back({p.name, Tensor(p.value.shape(), p.value.values())});
    return out;
}

}  // namespace

// ---------------------------------------------------------------------------
// VelocityNet

VelocityNet::VelocityNet(const NetConfig& cfg, Rng& rng) : cfg_(cfg) {
    if (cfg.time_dim % 2 != 0) throw std::runtime_error("velocity net: time_dim must be even");
    if (cfg.n_heads < 1 || cfg.n_heads > 3) throw std::runtime_error("velocity net: n_heads must be 1..3");
    const auto d = static_cast<std::int64_t>(cfg.data_dim);
    const auto w = static_cast<std::int64_t>(cfg.width);
    const auto e = static_cast<std::int64_t>(cfg.time_dim);
    params_.push_back({"in.w", init_linear({d, w}, rng, cfg.data_dim)});
    params_.push_back({"in.b", Tensor::zeros({w})});
    for (int blk = 0; blk < cfg.n_blocks; ++blk) {
        const std::string prefix = "blk" + std::to_string(blk) + ".";
        params_.push_back({prefix + "w1", init_linear({w, w}, rng, cfg.width)});
        params_.push_back({prefix + "b1", Tensor::zeros({w})});
        params_.push_back({prefix + "wt", init_linear({e, w}, rng, cfg.time_dim)});
        params_.push_back({prefix + "w2", init_linear({w, w}, rng, cfg.width)});
        params_.push_back({prefix + "b2", Tensor::zeros({w})});
    }
    for (int hd = 0; hd < cfg.n_heads; ++hd) {
        const std::string prefix = "head" + std::to_string(hd) + ".";
        params_.push_back({prefix + "gain", Tensor::full({w}, 1.0)});
        params_.push_back({prefix + "beta", Tensor::zeros({w})});
        params_.push_back({prefix + "w", Tensor::zeros({w, d})});
        params_.push_back({prefix + "b", Tensor::zeros({d})});
    }
}

VelocityNet VelocityNet::clone() const {
    VelocityNet out;
    out.cfg_ = cfg_;
    out.params_ = clone_params(params_);
    return out;
}

std::vector<Tensor> VelocityNet::forward(const Tensor& x, const std::vector<double>& t) const {
    if (x.shape().size() != 2 || x.shape()[1] != cfg_.data_dim)
        throw std::runtime_error("velocity net: bad input shape");
    if (static_cast<std::int64_t>(t.size()) != x.shape()[0])
        throw std::runtime_error("velocity net: t length must match batch");
    const auto tc = clamp_times(t, cfg_.t_min);
    const Tensor temb = sinusoidal_embedding(tc, cfg_.time_dim);

    std::size_t idx = 0;
    const Tensor& in_w = params_[idx++].value;
    const Tensor& in_b = params_[idx++].value;
    Tensor h = add_row(matmul(x, in_w), in_b);

    std::vector<double> w_skip, w_out;
    if (cfg_.dynamic_skip) {
        w_skip.resize(tc.size());
        w_out.resize(tc.size());
        for (std::size_t i = 0; i < tc.size(); ++i) {
            w_skip[i] = dynamic_skip_weight(tc[i], cfg_.c_skip);
            w_out[i] = 2.0 - w_skip[i];
        }
    }
    for (int blk = 0; blk < cfg_.n_blocks; ++blk) {
        const Tensor& w1 = params_[idx++].value;
        const Tensor& b1 = params_[idx++].value;
        const Tensor& wt = params_[idx++].value;
        const Tensor& w2 = params_[idx++].value;
        const Tensor& b2 = params_[idx++].value;
        Tensor u = silu(add(add_row(matmul(h, w1), b1), matmul(temb, wt)));
        Tensor m = add_row(matmul(u, w2), b2);
        h = cfg_.dynamic_skip ? add(scale_rows(h, w_skip), scale_rows(m, w_out)) : add(h, m);
    }

    std::vector<Tensor> outs;
    outs.reserve(static_cast<std::size_t>(cfg_.n_heads));
    for (int hd = 0; hd < cfg_.n_heads; ++hd) {
        const Tensor& gain = params_[idx++].value;
        const Tensor& beta = params_[idx++].value;
        const Tensor& hw = params_[idx++].value;
        const Tensor& hb = params_[idx++].value;
        outs.push_back(add_row(matmul(silu(layer_norm(h, gain, beta)), hw), hb));
    }
    return outs;
}

Tensor VelocityNet::velocity(const Tensor& x, const std::vector<double>& t) const { return forward(x, t)[0]; }

void VelocityNet::bind(Tape& tape) { bind_params(params_, tape); }
void VelocityNet::unbind() { unbind_params(params_); }

// ---------------------------------------------------------------------------
// NoiseEncoder

NoiseEncoder::NoiseEncoder(const EncoderConfig& cfg, Rng& rng) : cfg_(cfg) {
    const auto d = static_cast<std::int64_t>(cfg.data_dim);
    const auto h = static_cast<std::int64_t>(cfg.hidden);
    for (const char* net : {"mean", "logvar"}) {
        const std::string prefix = std::string(net) + ".";
        params_.push_back({prefix + "w1", init_linear({d, h}, rng, cfg.data_dim)});
        params_.push_back({prefix + "b1", Tensor::zeros({h})});
        params_.push_back({prefix + "w2", Tensor::zeros({h, d})});
        params_.push_back({prefix + "b2", Tensor::zeros({d})});
    }
}

NoiseEncoder NoiseEncoder::clone() const {
    NoiseEncoder out;
    out.cfg_ = cfg_;
    out.params_ = clone_params(params_);
    return out;
}

std::pair<Tensor, Tensor> NoiseEncoder::mean_logvar(const Tensor& x0) const {
    if (x0.shape().size() != 2 || x0.shape()[1] != cfg_.data_dim)
        throw std::runtime_error("noise encoder: bad input shape");
    auto mlp = [&](std::size_t base) {
        Tensor h = silu(add_row(matmul(x0, params_[base].value), params_[base + 1].value));
        return add_row(matmul(h, params_[base + 2].value), params_[base + 3].value);
    };
    Tensor mu = mlp(0);
    Tensor logvar = mlp(4);
    for (double v : logvar.values())
        if (std::fabs(v) > cfg_.logvar_limit)
            throw std::runtime_error("noise encoder: log-variance out of range");
    return {mu, logvar};
}

std::pair<Tensor, Tensor> NoiseEncoder::encode_with(const Tensor& x0, const Tensor& xi) const {
    auto [mu, logvar] = mean_logvar(x0);
    Tensor sigma = exp(scale(logvar, 0.5));
    Tensor x1t = add(mu, mul(sigma, xi));
    // kl = mean over batch of 0.5 * sum_d (mu^2 + sigma^2 - logvar - 1)
    Tensor term = sub(add(mul(mu, mu), exp(logvar)), add_scalar(logvar, 1.0));
    Tensor kl = scale(sum(term), 0.5 / static_cast<double>(x0.shape()[0]));
    return {x1t, kl};
}

std::pair<Tensor, Tensor> NoiseEncoder::encode(const Tensor& x0, Rng& rng) const {
    Tensor xi(x0.shape());
    rng.fill_normal(xi.values());
    return encode_with(x0, xi);
}

void NoiseEncoder::bind(Tape& tape) { bind_params(params_, tape); }
void NoiseEncoder::unbind() { unbind_params(params_); }

// ---------------------------------------------------------------------------
// EmaState

EmaState::EmaState(const VelocityNet& live, double decay, std::int64_t start_step)
    : net_(live.clone()), decay_(decay), start_step_(start_step) {}

void EmaState::update(const VelocityNet& live, std::int64_t step) {
    auto& shadow = net_.params();
    const auto& lp = live.params();
    if (shadow.size() != lp.size()) throw std::runtime_error("ema: parameter count mismatch");
    const bool copy = step < start_step_;
    for (std::size_t i = 0; i < shadow.size(); ++i) {
        auto& s = shadow[i].value;
        const auto& l = lp[i].value;
        if (s.shape() != l.shape()) throw std::runtime_error("ema: shape mismatch at " + shadow[i].name);
        double* ps = s.data();
        const double* pl = l.data();
        const std::int64_t n = s.size();
        if (copy) {
            for (std::int64_t k = 0; k < n; ++k) ps[k] = pl[k];
        } else {
            for (std::int64_t k = 0; k < n; ++k) ps[k] = decay_ * ps[k] + (1.0 - decay_) * pl[k];
        }
    }
}

}  // namespace cud
