// training.hpp
//
// Two-objective training loop: the supervised contrastive loss updates the
// encoders (plus projection heads); the configured cross-entropy updates
// attention, fusion and prediction heads with encoder gradients blocked by
// detaching the feature maps. Two optimizer steps per batch.

#pragma once

#include "core.hpp"
#include "data.hpp"
#include "eval.hpp"
#include "losses.hpp"
#include "models.hpp"
#include "nn.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <unordered_set>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <random>
#include <string>
#include <vector>

namespace dmskit::training {

namespace fs = std::filesystem;
using ad::Tensor;

struct TrainConfig {
    int epochs = 50;
    int batch_size = 128;
    double learning_rate = 1e-4;
    double weight_decay = 5e-3;
    double contrastive_temperature = 0.1;
    double contrastive_weight = 1.0;  // 0 disables encoder updates
    int warm_restart_period = 10;     // first cosine cycle, in epochs
    int warm_restart_mult = 2;
    std::uint64_t seed = 7;
    models::ModelSpec model;
    fs::path manifest;  // train-split CSV
    long stride = 4;
    bool augment = true;
    double validation_fraction = 0.1;  // held out by video_id
    fs::path out_dir = "runs/default";

    void validate() const {
        if (epochs < 0 || batch_size < 1 || learning_rate <= 0.0 || weight_decay < 0.0 ||
            contrastive_temperature <= 0.0 || warm_restart_period < 1 ||
            warm_restart_mult < 1 || stride < 1)
            throw std::invalid_argument("TrainConfig: non-positive hyperparameter");
        model.validate();
    }
};

// ---------------------------------------------------------------------------
// Cosine annealing with warm restarts; cycle lengths T0, T0*m, T0*m^2, ...

inline double cosine_warm_restart_lr(double lr0, int epoch, int period, int mult) {
    int t = epoch;
    int cycle_len = period;
    while (t >= cycle_len) {
        t -= cycle_len;
        cycle_len *= mult;
    }
    return 0.5 * lr0 * (1.0 + std::cos(M_PI * static_cast<double>(t) / cycle_len));
}

// ---------------------------------------------------------------------------
// Adam with L2 weight decay folded into the gradient.

class Adam {
public:
    explicit Adam(nn::ParamMap params, double weight_decay)
        : params_(std::move(params)), weight_decay_(weight_decay) {
        for (auto& [name, t] : params_) {
            state_[name].m.assign(t.values().size(), 0.0);
            state_[name].v.assign(t.values().size(), 0.0);
        }
    }

    void zero_grad() {
        for (auto& [name, t] : params_) t.zero_grad();
    }

    void step(double lr) {
        ++t_;
        const double bc1 = 1.0 - std::pow(beta1_, t_);
        const double bc2 = 1.0 - std::pow(beta2_, t_);
        for (auto& [name, p] : params_) {
            if (!p.requires_grad()) continue;
            auto& s = state_[name];
            auto& val = p.values();
            auto& grad = p.grads();
            for (size_t i = 0; i < val.size(); ++i) {
                const double g = grad[i] + weight_decay_ * val[i];
                s.m[i] = beta1_ * s.m[i] + (1.0 - beta1_) * g;
                s.v[i] = beta2_ * s.v[i] + (1.0 - beta2_) * g * g;
                const double mhat = s.m[i] / bc1;
                const double vhat = s.v[i] / bc2;
                val[i] -= lr * mhat / (std::sqrt(vhat) + eps_);
            }
        }
    }

private:
    struct State {
        std::vector<double> m, v;
    };
    nn::ParamMap params_;
    std::map<std::string, State> state_;
    double weight_decay_;
    long t_ = 0;
    static constexpr double beta1_ = 0.9;
    static constexpr double beta2_ = 0.999;
    static constexpr double eps_ = 1e-8;
};

// ---------------------------------------------------------------------------
// Checkpoint: versioned header, config hash, named parameter blobs.

inline std::uint64_t fnv1a(const std::string& s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string spec_signature(const models::ModelSpec& spec) {
    std::string s = models::topology_str(spec.topology) + "|" +
                    models::architecture_str(spec.encoder.architecture) + "|" +
                    (spec.head == HeadType::FLAT_SOFTMAX ? "flat" : "posterior") + "|" +
                    (spec.fusion_variant == models::FusionVariant::AFF ? "aff" : "iaff") +
                    "|r" + std::to_string(spec.reduction_ratio) + "|";
    for (const Modality& m : spec.modalities) s += m.str() + ",";
    return s;
}

inline constexpr char kCheckpointMagic[8] = {'D', 'M', 'S', 'K', 'C', 'K', 'P', 'T'};
inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const fs::path& path, const nn::ParamMap& params,
                            std::uint64_t config_hash) {
    fs::create_directories(path.parent_path().empty() ? "." : path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open checkpoint for writing: " + path.string());
    out.write(kCheckpointMagic, 8);
    auto put_u32 = [&](std::uint32_t v) { out.write(reinterpret_cast<const char*>(&v), 4); };
    auto put_u64 = [&](std::uint64_t v) { out.write(reinterpret_cast<const char*>(&v), 8); };
    put_u32(kCheckpointVersion);
    put_u64(config_hash);
    put_u32(static_cast<std::uint32_t>(params.size()));
    for (const auto& [name, t] : params) {
        put_u32(static_cast<std::uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        put_u32(static_cast<std::uint32_t>(t.shape().size()));
        for (int d : t.shape()) put_u32(static_cast<std::uint32_t>(d));
        out.write(reinterpret_cast<const char*>(t.values().data()),
                  static_cast<std::streamsize>(t.values().size() * sizeof(double)));
    }
    if (!out) throw std::runtime_error("checkpoint write failed: " + path.string());
}

// Loads parameter blobs into matching entries of `params` (values written
// in place, so tensors shared with a model are updated). Returns false on a
// config-hash mismatch, which is a loud warning rather than an error.
inline bool load_checkpoint(const fs::path& path, nn::ParamMap& params,
                            std::uint64_t expected_hash, std::ostream& warn = std::cerr) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("checkpoint not found: " + path.string());
    char magic[8];
    in.read(magic, 8);
    if (!in || std::memcmp(magic, kCheckpointMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path.string());
    auto get_u32 = [&]() {
        std::uint32_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 4);
        return v;
    };
    auto get_u64 = [&]() {
        std::uint64_t v = 0;
        in.read(reinterpret_cast<char*>(&v), 8);
        return v;
    };
    const std::uint32_t version = get_u32();
    if (version != kCheckpointVersion)
        throw std::runtime_error("unsupported checkpoint version");
    const std::uint64_t hash = get_u64();
    const std::uint32_t count = get_u32();
    if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
    for (std::uint32_t i = 0; i < count; ++i) {
        const std::uint32_t name_len = get_u32();
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        const std::uint32_t ndims = get_u32();
        Shape shape(ndims);
        std::int64_t numel = 1;
        for (auto& d : shape) {
            d = static_cast<int>(get_u32());
            numel *= d;
        }
        std::vector<double> values(static_cast<size_t>(numel));
        in.read(reinterpret_cast<char*>(values.data()),
                static_cast<std::streamsize>(values.size() * sizeof(double)));
        if (!in) throw std::runtime_error("truncated checkpoint: " + path.string());
        auto it = params.find(name);
        if (it == params.end()) {
            warn << "checkpoint: ignoring unknown parameter '" << name << "'\n";
            continue;
        }
        if (it->second.shape() != shape)
            throw std::runtime_error("checkpoint: shape mismatch for '" + name + "'");
        it->second.values() = std::move(values);
    }
    const bool ok = (hash == expected_hash);
    if (!ok)
        warn << "checkpoint: config hash mismatch (saved " << hash << ", expected "
             << expected_hash << ") -- parameters loaded anyway\n";
    return ok;
}

inline void save_model(const models::Model& model, const fs::path& path) {
    save_checkpoint(path, model.all_params(), fnv1a(spec_signature(model.spec())));
}

inline bool load_model(models::Model& model, const fs::path& path,
                       std::ostream& warn = std::cerr) {
    nn::ParamMap params = model.all_params();
    const bool ok = load_checkpoint(path, params, fnv1a(spec_signature(model.spec())), warn);
    for (const Modality& m : model.spec().modalities) {
        const auto it = params.find("norm." + m.str());
        if (it != params.end()) model.set_norm_from_tensor(m.str(), it->second.values());
    }
    return ok;
}

// ---------------------------------------------------------------------------
// Training loop

struct EpochLog {
    int epoch = 0;
    double contrastive_loss = 0.0;
    double ce_loss = 0.0;
    double learning_rate = 0.0;
    double val_accuracy = 0.0;
};

struct TrainResult {
    fs::path best_checkpoint;
    fs::path final_checkpoint;
    std::vector<EpochLog> log;
    double best_val_accuracy = 0.0;
};

namespace detail {

// Interleaves min-count samples of each class so that every contiguous
// batch has per-class counts differing by at most one.
inline std::vector<size_t> interleaved_balanced_order(const std::vector<ClassLabel>& labels,
                                                      std::uint64_t seed) {
    std::map<ClassLabel, std::vector<size_t>> by_class;
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    size_t min_count = labels.size();
    for (const auto& [c, idx] : by_class) min_count = std::min(min_count, idx.size());
    std::mt19937_64 rng(seed);
    std::vector<std::vector<size_t>> pools;
    for (auto& [c, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        idx.resize(min_count);
        pools.push_back(idx);
    }
    std::shuffle(pools.begin(), pools.end(), rng);
    std::vector<size_t> order;
    for (size_t k = 0; k < min_count; ++k)
        for (const auto& pool : pools) order.push_back(pool[k]);
    return order;
}

// Closed-set validation accuracy (argmax over seen classes).
inline double validation_accuracy(const models::Model& model,
                                  const data::DatasetManifest& man,
                                  const std::vector<data::ClipWindow>& windows) {
    if (windows.empty()) return 0.0;
    long hits = 0;
    for (const auto& w : windows) {
        Clip clip = data::load_clip(man, w, model.spec().modalities);
        ScoreVector y = model.predict(clip);
        if (openset::predict_class_gamma(y, 0.0) == w.label) ++hits;
    }
    return static_cast<double>(hits) / static_cast<double>(windows.size());
}

}  // namespace detail

inline TrainResult train(models::Model& model, const TrainConfig& cfg) {
    cfg.validate();
    fs::create_directories(cfg.out_dir);

    data::DatasetManifest man = data::load_manifest(cfg.manifest, data::Split::TRAIN);
    for (const Modality& m : model.spec().modalities) {
        const auto s = man.stats_for(m);
        model.set_norm_stats(m, models::NormStats{s.mean, s.std});
    }

    // Hold out ~validation_fraction of videos.
    std::vector<std::string> video_ids;
    for (const auto& r : man.records) video_ids.push_back(r.video_id);
    std::sort(video_ids.begin(), video_ids.end());
    video_ids.erase(std::unique(video_ids.begin(), video_ids.end()), video_ids.end());
    std::mt19937_64 split_rng(cfg.seed ^ 0x7a1ULL);
    std::shuffle(video_ids.begin(), video_ids.end(), split_rng);
    const size_t n_val = static_cast<size_t>(cfg.validation_fraction * video_ids.size());
    std::unordered_set<std::string> val_videos(video_ids.begin(), video_ids.begin() + n_val);

    auto all_windows = data::window_clips(man, cfg.stride);
    std::vector<data::ClipWindow> train_windows, val_windows;
    for (const auto& w : all_windows)
        (val_videos.count(w.video_id) ? val_windows : train_windows).push_back(w);
    if (train_windows.empty()) throw std::runtime_error("train: no training windows");

    std::vector<ClassLabel> train_labels;
    for (const auto& w : train_windows) train_labels.push_back(w.label);

    Adam encoder_opt(model.encoder_params(), cfg.weight_decay);
    Adam head_opt(model.head_params(), cfg.weight_decay);

    std::ofstream log_file(cfg.out_dir / "train_log.jsonl");
    TrainResult result;
    result.best_checkpoint = cfg.out_dir / "best.ckpt";
    result.final_checkpoint = cfg.out_dir / "final.ckpt";
    result.best_val_accuracy = -1.0;

    if (cfg.epochs == 0) {
        save_model(model, result.final_checkpoint);
        save_model(model, result.best_checkpoint);
        result.best_val_accuracy = 0.0;
        return result;
    }

    for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
        const double lr = cosine_warm_restart_lr(cfg.learning_rate, epoch,
                                                 cfg.warm_restart_period,
                                                 cfg.warm_restart_mult);
        auto order = detail::interleaved_balanced_order(train_labels,
                                                        cfg.seed + 1000003ULL * epoch);
        std::mt19937_64 aug_rng(cfg.seed ^ (0xa06ULL + epoch));

        double contr_sum = 0.0, ce_sum = 0.0;
        long contr_batches = 0, ce_count = 0;

        for (size_t pos = 0; pos < order.size(); pos += cfg.batch_size) {
            const size_t end = std::min(order.size(), pos + cfg.batch_size);
            std::vector<Tensor> embeddings;
            std::vector<ClassLabel> emb_labels;
            std::vector<std::map<Modality, Tensor>> batch_features;
            std::vector<ClassLabel> batch_labels;

            for (size_t b = pos; b < end; ++b) {
                const auto& w = train_windows[order[b]];
                Clip clip = data::load_clip(man, w, model.spec().modalities);
                if (cfg.augment)
                    for (auto& [m, frames] : clip.frames)
                        for (auto& f : frames) f = data::augment_frame(f, aug_rng);
                auto feats = model.forward_features(clip);
                for (const auto& [m, f] : feats) {
                    embeddings.push_back(model.embedding(m, f));
                    emb_labels.push_back(w.label);
                }
                batch_features.push_back(std::move(feats));
                batch_labels.push_back(w.label);
            }

            // (a) contrastive step on encoder parameters
            if (cfg.contrastive_weight > 0.0 && embeddings.size() >= 2) {
                bool has_positive = false;
                for (size_t i = 0; i < emb_labels.size() && !has_positive; ++i)
                    for (size_t j = i + 1; j < emb_labels.size(); ++j)
                        if (emb_labels[i] == emb_labels[j]) {
                            has_positive = true;
                            break;
                        }
                if (has_positive) {
                    Tensor closs = ad::scale(
                        losses::supervised_contrastive_t(embeddings, emb_labels,
                                                         cfg.contrastive_temperature),
                        cfg.contrastive_weight);
                    if (!std::isfinite(closs.item()))
                        throw std::runtime_error("train: non-finite contrastive loss at epoch " +
                                                 std::to_string(epoch));
                    encoder_opt.zero_grad();
                    closs.backward();
                    encoder_opt.step(lr);
                    contr_sum += closs.item();
                    ++contr_batches;
                }
            }

            // (b) cross-entropy step on head/fusion parameters; encoder
            // gradients blocked by detaching the feature maps.
            Tensor ce_total;
            for (size_t b = 0; b < batch_features.size(); ++b) {
                std::map<Modality, Tensor> detached;
                for (const auto& [m, f] : batch_features[b]) detached[m] = f.detach();
                Tensor y = model.score_from_features(detached);
                Tensor l = (model.spec().head == HeadType::FLAT_SOFTMAX)
                               ? losses::flat_cross_entropy_t(y, batch_labels[b])
                               : losses::posterior_cross_entropy_t(y, batch_labels[b]);
                ce_total = (b == 0) ? l : ad::add(ce_total, l);
            }
            Tensor ce_mean = ad::scale(ce_total, 1.0 / static_cast<double>(batch_features.size()));
            if (!std::isfinite(ce_mean.item()))
                throw std::runtime_error("train: non-finite cross-entropy at epoch " +
                                         std::to_string(epoch));
            head_opt.zero_grad();
            ce_mean.backward();
            head_opt.step(lr);
            ce_sum += ce_mean.item() * static_cast<double>(batch_features.size());
            ce_count += static_cast<long>(batch_features.size());
        }

        EpochLog el;
        el.epoch = epoch;
        el.contrastive_loss = contr_batches ? contr_sum / contr_batches : 0.0;
        el.ce_loss = ce_count ? ce_sum / ce_count : 0.0;
        el.learning_rate = lr;
        el.val_accuracy = detail::validation_accuracy(model, man, val_windows);
        result.log.push_back(el);

        nlohmann::json j = {{"epoch", el.epoch},
                            {"contrastive_loss", el.contrastive_loss},
                            {"ce_loss", el.ce_loss},
                            {"learning_rate", el.learning_rate},
                            {"val_accuracy", el.val_accuracy}};
        log_file << j.dump() << "\n" << std::flush;

        char name[32];
        std::snprintf(name, sizeof(name), "epoch_%03d.ckpt", epoch);
        save_model(model, cfg.out_dir / name);
        if (el.val_accuracy >= result.best_val_accuracy) {
            result.best_val_accuracy = el.val_accuracy;
            save_model(model, result.best_checkpoint);
        }
    }
    save_model(model, result.final_checkpoint);
    return result;
}

}  // namespace dmskit::training
