// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "cud/rng.hpp"
#include "cud/tensor.hpp"

namespace cud {

struct Param {
    std::string name;
    Tensor value;
};

// w_skip = 2 (1 - (t (1 - 2 c_skip) + c_skip)); affine in t, equals 1 at t = 0.5.
double dynamic_skip_weight(double t, double c_skip);

struct NetConfig {
    int data_dim = 2;
    int width = 128;
    int n_blocks = 4;
    int time_dim = 64;   // sinusoidal embedding size, must be even
    int n_heads = 1;     // equals the alignment step count of the scheme in use
    double c_skip = 0.75;
    bool dynamic_skip = true;
    double t_min = 1e-5;  // t inputs are clamped into [t_min, 1]
};

// Multi-head velocity estimator: MLP trunk of residual blocks with additive
// time conditioning and per-block dynamic skip gains, plus n head stacks
// (LayerNorm - SiLU - Linear) reading the shared trunk output. Head final
// layers are zero-initialized, so a fresh net outputs zero velocity.
class VelocityNet {
public:
    VelocityNet(const NetConfig& cfg, Rng& rng);

    VelocityNet(const VelocityNet&) = delete;
    VelocityNet& operator=(const VelocityNet&) = delete;
    VelocityNet(VelocityNet&&) = default;
    VelocityNet& operator=(VelocityNet&&) = default;

    VelocityNet clone() const;

    // x: [batch x d], t: one entry per row. Returns n_heads outputs [batch x d].
    std::vector<Tensor> forward(const Tensor& x, const std::vector<double>& t) const;
    // Head-1 output, the canonical velocity.
    Tensor velocity(const Tensor& x, const std::vector<double>& t) const;

    const NetConfig& config() const { return cfg_; }
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }

    void bind(Tape& tape);  // watch every parameter on the tape
    void unbind();

private:
    VelocityNet() = default;
    NetConfig cfg_;
    std::vector<Param> params_;
};

struct EncoderConfig {
    int data_dim = 2;
    int hidden = 64;
    double kl_beta = 20.0;
    double logvar_limit = 30.0;  // |log sigma^2| beyond this aborts the step
};

// Reparameterized Gaussian noise encoder q(x1~ | x0). Final layers are
// zero-initialized: a fresh encoder is exactly the standard-normal prior.
class NoiseEncoder {
public:
    NoiseEncoder(const EncoderConfig& cfg, Rng& rng);

    NoiseEncoder(const NoiseEncoder&) = delete;
    NoiseEncoder& operator=(const NoiseEncoder&) = delete;
    NoiseEncoder(NoiseEncoder&&) = default;
    NoiseEncoder& operator=(NoiseEncoder&&) = default;

    NoiseEncoder clone() const;

    // Draws xi ~ N(0, I) from rng (batch*d normals, row-major) and returns
    // (x1~ = mu + exp(logvar/2) .* xi, kl) with kl the batch-mean closed-form
    // KL to the standard normal.
    std::pair<Tensor, Tensor> encode(const Tensor& x0, Rng& rng) const;
    std::pair<Tensor, Tensor> encode_with(const Tensor& x0, const Tensor& xi) const;
    std::pair<Tensor, Tensor> mean_logvar(const Tensor& x0) const;

    const EncoderConfig& config() const { return cfg_; }
    std::vector<Param>& params() { return params_; }
    const std::vector<Param>& params() const { return params_; }

    void bind(Tape& tape);
    void unbind();

private:
    NoiseEncoder() = default;
    EncoderConfig cfg_;
    std::vector<Param> params_;
};

// Exponential moving average of a VelocityNet's parameters. Before
// start_step the shadow tracks the live net exactly.
class EmaState {
public:
    EmaState(const VelocityNet& live, double decay, std::int64_t start_step);

    void update(const VelocityNet& live, std::int64_t step);

    const VelocityNet& net() const { return net_; }
    VelocityNet& net() { return net_; }
    double decay() const { return decay_; }
    std::int64_t start_step() const { return start_step_; }

private:
    VelocityNet net_;
    double decay_;
    std::int64_t start_step_;
};

}  // namespace cud
