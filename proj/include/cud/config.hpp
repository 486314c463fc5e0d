// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <ostream>
#include <string>
#include <vector>

#include "cud/checkpoint.hpp"
#include "cud/datasets.hpp"
#include "cud/model.hpp"
#include "cud/trainer.hpp"

namespace cud {

const char* build_id();

// Flat JSON run configuration. Unknown keys are rejected by name; every key
// is optional and falls back to the defaults below (seed comes from the CLI).
struct RunConfig {
    TrainConfig train;
    NetConfig net;  // t_min mirrors train.epsilon; n_heads follows the scheme
    int enc_hidden = 64;
    std::string dataset = "two_moons";
    std::int64_t dataset_size = 8192;
    std::string idx_path;
    std::string out_dir = "runs/out";
    std::int64_t log_every = 50;
    std::int64_t checkpoint_every = 0;  // 0 = final checkpoint only
    bool timing_column = true;          // wall_ms column in the metrics CSV
};

RunConfig parse_run_config(const std::string& json_text);
RunConfig load_run_config(const std::string& path);
std::string run_config_to_json(const RunConfig& cfg);

// Model <-> named-tensor packing. Checkpoints carry the architecture and the
// dataset normalization as meta tensors so a file is self-describing.
struct ModelBundle {
    NetConfig net_cfg;
    EncoderConfig enc_cfg;
    std::vector<NamedTensor> net;
    std::vector<NamedTensor> enc;
    std::vector<NamedTensor> ema;
    std::int64_t iteration = 0;
    std::int64_t image_side = 0;
    Normalization norm;
};

std::vector<NamedTensor> pack_bundle(const VelocityNet& net, const NoiseEncoder& enc,
                                     const EmaState& ema, std::int64_t iteration,
                                     std::int64_t image_side, const Normalization& norm);
ModelBundle unpack_bundle(const std::vector<NamedTensor>& tensors);

VelocityNet restore_net(const ModelBundle& bundle);
VelocityNet restore_ema_net(const ModelBundle& bundle);
NoiseEncoder restore_encoder(const ModelBundle& bundle);

// Metrics CSV sink: header + one row per record, doubles printed with %.17g
// so reruns compare bitwise. The wall_ms column is optional (see RunConfig).
class MetricsCsvWriter {
public:
    MetricsCsvWriter(std::ostream& out, int n_heads, bool timing_column);
    void write(const MetricsRecord& rec);

private:
    std::ostream& out_;
    int n_heads_;
    bool timing_;
};

std::string format_double(double v);  // %.17g

// Resolved-run manifest written next to outputs.
void write_manifest(const std::string& path, const std::string& command, const RunConfig& cfg,
                    std::uint64_t seed, int threads);

}  // namespace cud
