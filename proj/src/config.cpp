// SPDX-License-Identifier: Apache-2.0
#include "cud/config.hpp"

#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace cud {

const char* build_id() {
#ifdef CUD_BUILD_ID
    return CUD_BUILD_ID;
#else
    return "untracked";
#endif
}

namespace {

using nlohmann::json;

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "mode",          "dataset",       "dataset_size", "idx_path",    "out_dir",
        "log_every",     "checkpoint_every", "timing_column",
        "epsilon",       "h_hat",         "step_strategy", "catchup_source", "loss_weight_mode",
        "scheme",        "iters",         "batch_size",   "learning_rate", "kl_beta",
        "ema_decay",     "ema_start",     "seed",
        "width",         "n_blocks",      "time_dim",     "c_skip",      "enc_hidden"};
    return keys;
}

template <class T>
void read_to(const json& doc, const char* key, T& out) {
    if (doc.contains(key)) out = doc.at(key).get<T>();
}

}  // namespace

RunConfig parse_run_config(const std::string& json_text) {
    json doc;
    try {
        doc = json::parse(json_text);
    } catch (const json::parse_error& e) {
        throw std::runtime_error(std::string("config: invalid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw std::runtime_error("config: top level must be an object");
    for (const auto& [key, value] : doc.items()) {
        (void)value;
        if (known_keys().find(key) == known_keys().end())
            throw std::runtime_error("config: unknown key \"" + key + "\"");
    }

    RunConfig cfg;
    if (doc.contains("mode")) cfg.train.mode = train_mode_from_string(doc.at("mode").get<std::string>());
    read_to(doc, "dataset", cfg.dataset);
    read_to(doc, "dataset_size", cfg.dataset_size);
    read_to(doc, "idx_path", cfg.idx_path);
    read_to(doc, "out_dir", cfg.out_dir);
    read_to(doc, "log_every", cfg.log_every);
    read_to(doc, "checkpoint_every", cfg.checkpoint_every);
    read_to(doc, "timing_column", cfg.timing_column);
    read_to(doc, "epsilon", cfg.train.epsilon);
    read_to(doc, "h_hat", cfg.train.h_hat);
    if (doc.contains("step_strategy"))
        cfg.train.step_strategy = step_strategy_from_string(doc.at("step_strategy").get<std::string>());
    if (doc.contains("catchup_source"))
        cfg.train.catchup_source = catchup_source_from_string(doc.at("catchup_source").get<std::string>());
    if (doc.contains("loss_weight_mode"))
        cfg.train.weight_mode = weight_mode_from_string(doc.at("loss_weight_mode").get<std::string>());
    if (doc.contains("scheme")) cfg.train.scheme = rk_label_from_string(doc.at("scheme").get<std::string>());
    read_to(doc, "iters", cfg.train.total_iters);
    read_to(doc, "batch_size", cfg.train.batch_size);
    read_to(doc, "learning_rate", cfg.train.learning_rate);
    read_to(doc, "kl_beta", cfg.train.kl_beta);
    read_to(doc, "ema_decay", cfg.train.ema_decay);
    read_to(doc, "ema_start", cfg.train.ema_start);
    if (doc.contains("seed")) cfg.train.seed = doc.at("seed").get<std::uint64_t>();
    read_to(doc, "width", cfg.net.width);
    read_to(doc, "n_blocks", cfg.net.n_blocks);
    read_to(doc, "time_dim", cfg.net.time_dim);
    if (doc.contains("c_skip")) {
        const auto& v = doc.at("c_skip");
        if (v.is_string()) {
            if (v.get<std::string>() != "off")
                throw std::runtime_error("config: c_skip must be a number or \"off\"");
            cfg.net.dynamic_skip = false;
        } else {
            cfg.net.c_skip = v.get<double>();
            cfg.net.dynamic_skip = true;
        }
    }
    read_to(doc, "enc_hidden", cfg.enc_hidden);

    cfg.net.t_min = cfg.train.epsilon;
    cfg.net.n_heads = build_scheme(cfg.train.scheme).n_align;
    return cfg;
}

RunConfig load_run_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error("config: cannot open " + path);
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_run_config(ss.str());
}

std::string run_config_to_json(const RunConfig& cfg) {
    json doc;
    doc["mode"] = to_string(cfg.train.mode);
    doc["dataset"] = cfg.dataset;
    doc["dataset_size"] = cfg.dataset_size;
    if (!cfg.idx_path.empty()) doc["idx_path"] = cfg.idx_path;
    doc["out_dir"] = cfg.out_dir;
    doc["log_every"] = cfg.log_every;
    doc["checkpoint_every"] = cfg.checkpoint_every;
    doc["timing_column"] = cfg.timing_column;
    doc["epsilon"] = cfg.train.epsilon;
    doc["h_hat"] = cfg.train.h_hat;
    doc["step_strategy"] = to_string(cfg.train.step_strategy);
    doc["catchup_source"] = to_string(cfg.train.catchup_source);
    doc["loss_weight_mode"] = to_string(cfg.train.weight_mode);
    doc["scheme"] = to_string(cfg.train.scheme);
    doc["iters"] = cfg.train.total_iters;
    doc["batch_size"] = cfg.train.batch_size;
    doc["learning_rate"] = cfg.train.learning_rate;
    doc["kl_beta"] = cfg.train.kl_beta;
    doc["ema_decay"] = cfg.train.ema_decay;
    doc["ema_start"] = cfg.train.ema_start;
    doc["seed"] = cfg.train.seed;
    doc["width"] = cfg.net.width;
    doc["n_blocks"] = cfg.net.n_blocks;
    doc["time_dim"] = cfg.net.time_dim;
    if (cfg.net.dynamic_skip)
        doc["c_skip"] = cfg.net.c_skip;
    else
        doc["c_skip"] = "off";
    doc["enc_hidden"] = cfg.enc_hidden;
    return doc.dump(2);
}

// ---------------------------------------------------------------------------
// Model packing

namespace {

NamedTensor meta_scalar(const std::string& name, double v) { return {name, {}, {v}}; }

double get_meta(const std::vector<NamedTensor>& ts, const std::string& name) {
    return find_tensor(ts, name).values.at(0);
}

void append_params(std::vector<NamedTensor>& out, const std::string& prefix, const std::vector<Param>& params) {
    for (const auto& p : params) out.push_back({prefix + p.name, p.value.shape(), p.value.values()});
}

void load_params(std::vector<Param>& params, const std::string& prefix, const std::vector<NamedTensor>& ts) {
    for (auto& p : params) {
        const NamedTensor& t = find_tensor(ts, prefix + p.name);
        if (t.shape != p.value.shape())
            throw std::runtime_error("checkpoint: shape mismatch for " + prefix + p.name);
        p.value = Tensor(t.shape, t.values);
    }
}

}  // namespace

std::vector<NamedTensor> pack_bundle(const VelocityNet& net, const NoiseEncoder& enc,
                                     const EmaState& ema, std::int64_t iteration,
                                     std::int64_t image_side, const Normalization& norm) {
    std::vector<NamedTensor> out;
    const NetConfig& nc = net.config();
    const EncoderConfig& ec = enc.config();
    out.push_back(meta_scalar("meta.data_dim", nc.data_dim));
    out.push_back(meta_scalar("meta.width", nc.width));
    out.push_back(meta_scalar("meta.n_blocks", nc.n_blocks));
    out.push_back(meta_scalar("meta.time_dim", nc.time_dim));
    out.push_back(meta_scalar("meta.n_heads", nc.n_heads));
    out.push_back(meta_scalar("meta.c_skip", nc.c_skip));
    out.push_back(meta_scalar("meta.dynamic_skip", nc.dynamic_skip ? 1.0 : 0.0));
    out.push_back(meta_scalar("meta.t_min", nc.t_min));
    out.push_back(meta_scalar("meta.enc_hidden", ec.hidden));
    out.push_back(meta_scalar("meta.kl_beta", ec.kl_beta));
    out.push_back(meta_scalar("meta.iteration", static_cast<double>(iteration)));
    out.push_back(meta_scalar("meta.image_side", static_cast<double>(image_side)));
    out.push_back(meta_scalar("meta.ema_decay", ema.decay()));
    out.push_back(meta_scalar("meta.ema_start", static_cast<double>(ema.start_step())));
    out.push_back({"meta.norm_mean", {static_cast<std::int64_t>(norm.mean.size())}, norm.mean});
    out.push_back({"meta.norm_scale", {static_cast<std::int64_t>(norm.scale.size())}, norm.scale});
    append_params(out, "net.", net.params());
    append_params(out, "enc.", enc.params());
    append_params(out, "ema.", ema.net().params());
    return out;
}

ModelBundle unpack_bundle(const std::vector<NamedTensor>& tensors) {
    ModelBundle b;
    b.net_cfg.data_dim = static_cast<int>(get_meta(tensors, "meta.data_dim"));
    b.net_cfg.width = static_cast<int>(get_meta(tensors, "meta.width"));
    b.net_cfg.n_blocks = static_cast<int>(get_meta(tensors, "meta.n_blocks"));
    b.net_cfg.time_dim = static_cast<int>(get_meta(tensors, "meta.time_dim"));
    b.net_cfg.n_heads = static_cast<int>(get_meta(tensors, "meta.n_heads"));
    b.net_cfg.c_skip = get_meta(tensors, "meta.c_skip");
    b.net_cfg.dynamic_skip = get_meta(tensors, "meta.dynamic_skip") != 0.0;
    b.net_cfg.t_min = get_meta(tensors, "meta.t_min");
    b.enc_cfg.data_dim = b.net_cfg.data_dim;
    b.enc_cfg.hidden = static_cast<int>(get_meta(tensors, "meta.enc_hidden"));
    b.enc_cfg.kl_beta = get_meta(tensors, "meta.kl_beta");
    b.iteration = static_cast<std::int64_t>(get_meta(tensors, "meta.iteration"));
    b.image_side = static_cast<std::int64_t>(get_meta(tensors, "meta.image_side"));
    const auto& nm = find_tensor(tensors, "meta.norm_mean");
    const auto& sc = find_tensor(tensors, "meta.norm_scale");
    b.norm.mean = nm.values;
    b.norm.scale = sc.values;
    for (const auto& t : tensors) {
        if (t.name.rfind("net.", 0) == 0) b.net.push_back(t);
        if (t.name.rfind("enc.", 0) == 0) b.enc.push_back(t);
        if (t.name.rfind("ema.", 0) == 0) b.ema.push_back(t);
    }
    return b;
}

VelocityNet restore_net(const ModelBundle& bundle) {
    Rng dummy(0);
    VelocityNet net(bundle.net_cfg, dummy);
    load_params(net.params(), "net.", bundle.net);
    return net;
}

VelocityNet restore_ema_net(const ModelBundle& bundle) {
    Rng dummy(0);
    VelocityNet net(bundle.net_cfg, dummy);
    load_params(net.params(), "ema.", bundle.ema);
    return net;
}

NoiseEncoder restore_encoder(const ModelBundle& bundle) {
    Rng dummy(0);
    NoiseEncoder enc(bundle.enc_cfg, dummy);
    load_params(enc.params(), "enc.", bundle.enc);
    return enc;
}

// ---------------------------------------------------------------------------
// Metrics CSV

std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

MetricsCsvWriter::MetricsCsvWriter(std::ostream& out, int n_heads, bool timing_column)
    : out_(out), n_heads_(n_heads), timing_(timing_column) {
    out_ << "iteration,loss_total";
    for (int i = 1; i <= n_heads_; ++i) out_ << ",loss_kd_" << i;
    for (int i = 1; i <= n_heads_; ++i) out_ << ",loss_gt_" << i;
    out_ << ",kl,mean_h";
    if (timing_) out_ << ",wall_ms";
    out_ << "\n";
}

void MetricsCsvWriter::write(const MetricsRecord& rec) {
    out_ << rec.iteration << ',' << format_double(rec.loss_total);
    for (int i = 0; i < n_heads_; ++i)
        out_ << ',' << format_double(i < static_cast<int>(rec.loss_kd.size()) ? rec.loss_kd[static_cast<std::size_t>(i)] : 0.0);
    for (int i = 0; i < n_heads_; ++i)
        out_ << ',' << format_double(i < static_cast<int>(rec.loss_gt.size()) ? rec.loss_gt[static_cast<std::size_t>(i)] : 0.0);
    out_ << ',' << format_double(rec.kl_term) << ',' << format_double(rec.mean_h);
    if (timing_) out_ << ',' << format_double(rec.wall_ms);
    out_ << "\n";
}

void write_manifest(const std::string& path, const std::string& command, const RunConfig& cfg,
                    std::uint64_t seed, int threads) {
    nlohmann::json doc;
    doc["command"] = command;
    doc["build_id"] = build_id();
    doc["seed"] = seed;
    doc["threads"] = threads;
    doc["config"] = nlohmann::json::parse(run_config_to_json(cfg));
    std::ofstream out(path);
    if (!out) throw std::runtime_error("manifest: cannot write " + path);
    out << doc.dump(2) << "\n";
}

}  // namespace cud
