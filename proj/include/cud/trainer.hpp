// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "cud/model.hpp"
#include "cud/rk.hpp"
#include "cud/rng.hpp"
#include "cud/tensor.hpp"

namespace cud {

enum class StepStrategy { fixed, uniform, rule };
enum class CatchupSource { ema, live };
enum class WeightMode { vanilla, dynamic };
enum class TrainMode { cud, rf_baseline, cd_baseline };

StepStrategy step_strategy_from_string(const std::string& s);
CatchupSource catchup_source_from_string(const std::string& s);
WeightMode weight_mode_from_string(const std::string& s);
TrainMode train_mode_from_string(const std::string& s);
std::string to_string(StepStrategy v);
std::string to_string(CatchupSource v);
std::string to_string(WeightMode v);
std::string to_string(TrainMode v);

struct TrainConfig {
    double epsilon = 1e-5;
    double h_hat = 1.0 / 16.0;
    StepStrategy step_strategy = StepStrategy::uniform;
    CatchupSource catchup_source = CatchupSource::live;
    WeightMode weight_mode = WeightMode::vanilla;
    RkLabel scheme = RkLabel::rk12;
    TrainMode mode = TrainMode::cud;
    std::int64_t total_iters = 5000;
    std::int64_t batch_size = 256;
    double learning_rate = 1e-3;
    double kl_beta = 20.0;
    double ema_decay = 0.9999;
    std::int64_t ema_start = 1;
    std::uint64_t seed = 0;

    void validate(int n_align) const;
};

struct MetricsRecord {
    std::int64_t iteration = 0;
    double loss_total = 0.0;
    std::vector<double> loss_kd;  // per head
    std::vector<double> loss_gt;  // per head
    double kl_term = 0.0;
    double mean_h = 0.0;
    double wall_ms = 0.0;
};

// Loss weights at (1-based) iteration i of N: vanilla -> (1, 1);
// dynamic -> (i/N, 1 - i/N).
std::pair<double, double> loss_weights(WeightMode mode, std::int64_t iter, std::int64_t total);

// Step-size draw for catch-up sampling, then clamped to t / n_align so all
// catch-up times stay nonnegative.
double sample_step_size(StepStrategy strategy, double t, double h_hat, double epsilon,
                        int n_align, Rng& rng);

struct LossParts {
    Tensor loss;                  // scalar, recorded on the active tape
    std::vector<double> loss_kd;  // unweighted per-head values
    std::vector<double> loss_gt;
    double kl = 0.0;
    double mean_h = 0.0;
};

// CUD loss with the stochastic pieces already drawn; used directly by tests.
// `net` must be bound to the active tape; `source` supplies catch-up targets
// (evaluated under stop-gradient).
LossParts cud_loss_given(const VelocityNet& net, const VelocityNet& source,
                         const Tensor& x0, const Tensor& x1_tilde, const Tensor& kl,
                         const std::vector<double>& t, const std::vector<double>& h,
                         const RkScheme& scheme, const TrainConfig& cfg, std::int64_t iter);

// Full per-iteration loss. Draw order from rng (fixed, tests replay it):
// t (one uniform per sample), then the encoder noise (batch x d normals; for
// cd_baseline these become X1 directly), then step sizes where applicable.
LossParts cud_loss(const VelocityNet& net, const EmaState& ema, const NoiseEncoder& enc,
                   const Tensor& x0, const RkScheme& scheme, const TrainConfig& cfg,
                   std::int64_t iter, Rng& rng);

class Adam {
public:
    explicit Adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);
    // grads aligned with params; an empty entry means zero gradient.
    void step(const std::vector<Param*>& params, const std::vector<std::vector<double>>& grads);
    std::int64_t steps_taken() const { return t_; }

private:
    double lr_, b1_, b2_, eps_;
    std::int64_t t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

struct TrainResult {
    enum class Status { ok, collapse };
    Status status = Status::ok;
    std::int64_t iters_done = 0;
    std::string detail;
};

const char* to_string(TrainResult::Status s);

using MetricsSink = std::function<void(const MetricsRecord&)>;
using CheckpointFn = std::function<void(std::int64_t iter)>;

// One training session. Per iteration: draw batch indices (with replacement)
// -> cud_loss -> backward -> Adam -> EMA update. A non-finite value anywhere
// emits one diagnostic record and returns collapse status.
TrainResult train(VelocityNet& net, NoiseEncoder& enc, EmaState& ema, const Tensor& data,
                  const TrainConfig& cfg, const MetricsSink& sink, std::int64_t log_every = 50,
                  const CheckpointFn& checkpoint = nullptr, std::int64_t checkpoint_every = 0);

struct FitCostBin {
    double lo = 0.0, hi = 0.0;
    double mean_loss = 0.0;
};

// Expected ground-truth fit cost per t bin: mean MSE(x1~ - x0, head1(x_t, t))
// over a fixed evaluation set. Encoder noise is drawn once and shared across
// bins, so a t-independent net yields exactly equal bins.
std::vector<FitCostBin> fit_cost_profile(const VelocityNet& net, const NoiseEncoder& enc,
                                         const Tensor& data,
                                         const std::vector<std::pair<double, double>>& bins,
                                         int t_samples_per_bin, Rng& rng);
std::vector<FitCostBin> fit_cost_profile(const VelocityNet& net, const NoiseEncoder& enc,
                                         const Tensor& data, int n_bins, Rng& rng);

}  // namespace cud
