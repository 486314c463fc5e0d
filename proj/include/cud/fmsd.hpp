// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <map>
#include <vector>

#include "cud/model.hpp"
#include "cud/rng.hpp"
#include "cud/sampler.hpp"
#include "cud/tensor.hpp"
#include "cud/trainer.hpp"

namespace cud {

// Teacher trajectories distilled to (noise, clean-projection) pairs at the
// configured Euler step indices.
struct TeacherPairSet {
    Tensor z1;                    // [pairs x d], exactly as drawn
    std::map<int, Tensor> clean;  // stage step -> one-step projection at that step
    std::vector<int> stages;
    std::int64_t skipped = 0;  // pairs dropped for non-finite trajectories

    std::int64_t count() const { return z1.defined() ? z1.shape()[0] : 0; }
};

struct FmsdConfig {
    std::vector<int> stages = {8, 11, 14};
    int n_steps = 16;
    std::int64_t n_pairs = 4096;
    std::int64_t iters_per_stage = 2000;
    std::int64_t batch_size = 256;
    double learning_rate = 1e-3;
    bool sam = false;  // align student output with its EMA shadow
    double ema_decay = 0.9999;
    std::int64_t ema_start = 1;
    double epsilon = 1e-5;
    std::uint64_t seed = 0;
};

TeacherPairSet build_teacher_pairs(const VelocityNet& teacher, std::int64_t n_pairs, int n_steps,
                                   const std::vector<int>& stages, Rng& rng, double eps);

// Fits f_student(z1, 1) to z1 - clean_k over the pair set (head 1 only).
// With sam, adds MSE against the EMA shadow's output at unit weight. The EMA
// shadow is updated every optimizer step.
void distill_stage(VelocityNet& student, const TeacherPairSet& pairs, int stage,
                   std::int64_t iters, std::int64_t batch_size, bool sam, EmaState& ema,
                   Adam& opt, Rng& rng);

struct FmsdResult {
    VelocityNet student;
    TeacherPairSet pairs;
    // sliced-W2 of 1-step Euler samples against reference data, measured
    // after each stage in order (empty when no reference data given).
    std::vector<double> stage_metrics;
};

// Runs build_teacher_pairs then distill_stage for each stage in order. The
// teacher is never mutated; the student starts as a copy of it. When
// reference data is provided, per-stage metrics are measured on a fixed
// evaluation noise set with a fixed metric seed.
FmsdResult fmsd_run(const VelocityNet& teacher, const FmsdConfig& cfg,
                    const Tensor& reference = Tensor(), std::int64_t eval_samples = 2048,
                    int metric_projections = 128, std::uint64_t metric_seed = 17);

}  // namespace cud
