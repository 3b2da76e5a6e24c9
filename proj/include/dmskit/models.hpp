// models.hpp
//
// The three model topologies: unimodal encoder + MS-CAM + head, multimodal
// feature-level fusion (AFF / iAFF, one shared head), and decision-level
// fusion (independent attention and head per modality, averaged scores).
//
// Parameters are bound per Modality key, not per list position, so the
// feature-fusion output does not depend on the order modalities are listed.

#pragma once

#include "core.hpp"
#include "encoders.hpp"
#include "fusion.hpp"
#include "nn.hpp"

#include <map>
#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmskit::models {

using ad::Tensor;

enum class Topology { UNIMODAL, FEATURE_FUSION, DECISION_FUSION };
enum class FusionVariant { AFF, IAFF };

inline std::string topology_str(Topology t) {
    switch (t) {
        case Topology::UNIMODAL: return "unimodal";
        case Topology::FEATURE_FUSION: return "feature_fusion";
        case Topology::DECISION_FUSION: return "decision_fusion";
    }
    throw std::logic_error("bad topology");
}
inline Topology parse_topology(const std::string& s) {
    if (s == "unimodal") return Topology::UNIMODAL;
    if (s == "feature_fusion") return Topology::FEATURE_FUSION;
    if (s == "decision_fusion") return Topology::DECISION_FUSION;
    throw std::invalid_argument("unknown topology: " + s);
}

struct NormStats {
    double mean = 0.5;
    double std = 0.25;
};

struct ModelSpec {
    Topology topology = Topology::UNIMODAL;
    FusionVariant fusion_variant = FusionVariant::AFF;
    std::vector<Modality> modalities{Modality{View::TOP, Stream::IR}};
    EncoderSpec encoder = EncoderSpec::make(Architecture::TINY_CNN);
    HeadType head = HeadType::FLAT_SOFTMAX;
    int reduction_ratio = 4;

    void validate() const {
        encoder.validate();
        if (topology == Topology::UNIMODAL) {
            if (modalities.size() != 1)
                throw std::invalid_argument("unimodal model needs exactly one modality");
        } else if (modalities.size() < 2 || modalities.size() > 4) {
            throw std::invalid_argument("fusion topologies need 2-4 modalities");
        }
        for (size_t i = 0; i < modalities.size(); ++i)
            for (size_t j = i + 1; j < modalities.size(); ++j)
                if (modalities[i] == modalities[j])
                    throw std::invalid_argument("duplicate modality in spec");
    }
};

// Returns the last (index T-1) frame for a modality present in the clip.
inline const Frame& last_frame(const Clip& clip, Modality m) {
    auto it = clip.frames.find(m);
    if (it == clip.frames.end())
        throw std::invalid_argument("clip is missing modality " + m.str());
    if (static_cast<int>(it->second.size()) != kClipLength)
        throw std::invalid_argument("clip has wrong frame count for " + m.str());
    return it->second.back();
}

// [0,255] grayscale -> normalized 3-channel tensor. The single raw channel
// is replicated threefold so pretrained 3-channel first layers apply as-is.
inline Tensor frame_to_input(const Frame& f, const NormStats& stats) {
    const size_t n = f.pixels.size();
    std::vector<double> v(3 * n);
    for (size_t i = 0; i < n; ++i) {
        double x = (f.pixels[i] / 255.0 - stats.mean) / stats.std;
        v[i] = v[n + i] = v[2 * n + i] = x;
    }
    return Tensor::from_values({3, f.height, f.width}, std::move(v));
}

// Prediction head: one 256-unit hidden layer, then the output transform for
// the configured head type.
class Head {
public:
    Head() = default;
    Head(int in_channels, HeadType type, std::mt19937_64& rng)
        : type_(type), l1_(in_channels, kHidden, rng), l2_(kHidden, kNumTrainClasses, rng) {}

    Tensor forward(const Tensor& pooled) const {
        Tensor logits = l2_.forward(ad::relu(l1_.forward(pooled)));
        if (type_ == HeadType::FLAT_SOFTMAX) return ad::softmax(logits);
        Tensor p_normal = ad::sigmoid(ad::slice(logits, 0, 1));
        Tensor conditionals = ad::softmax(ad::slice(logits, 1, kNumTrainClasses - 1));
        return ad::concat({p_normal, conditionals});
    }

    HeadType type() const { return type_; }

    void params(const std::string& prefix, nn::ParamMap& out) const {
        l1_.params(prefix + ".fc1", out);
        l2_.params(prefix + ".fc2", out);
    }

    nn::FlopCount flops(int in_channels) const {
        nn::FlopCount f = l1_.flops();
        f.elementwise += kHidden;  // relu
        f += l2_.flops();
        f.elementwise += 2 * kNumTrainClasses;  // output transform
        (void)in_channels;
        return f;
    }

    static constexpr int kHidden = 256;

private:
    HeadType type_ = HeadType::FLAT_SOFTMAX;
    nn::Linear l1_, l2_;
};

class Model {
public:
    explicit Model(ModelSpec spec, std::uint64_t seed = 7) : spec_(std::move(spec)) {
        spec_.validate();
        const int C = spec_.encoder.output_channels;
        // One RNG stream per modality (canonical order) keeps parameters
        // bound to the modality identity rather than the spec list order.
        for (const Modality& m : Modality::all()) {
            if (!uses(m)) continue;
            std::mt19937_64 rng(seed ^ std::hash<std::string>{}(m.str()));
            encoders_[m] = make_encoder(spec_.encoder.architecture, rng);
            projections_[m] = nn::Linear(C, kProjectionDim, rng);
            if (spec_.topology != Topology::FEATURE_FUSION) {
                attention_.emplace(m, fusion::MsCam({C, spec_.reduction_ratio, 1}, rng));
            }
            if (spec_.topology == Topology::DECISION_FUSION)
                heads_.emplace(m, Head(C, spec_.head, rng));
        }
        std::mt19937_64 rng(seed ^ 0x51e57ULL);
        if (spec_.topology == Topology::FEATURE_FUSION) {
            fusion::MsCamConfig fcfg{C, spec_.reduction_ratio,
                                     static_cast<int>(spec_.modalities.size())};
            if (spec_.fusion_variant == FusionVariant::AFF)
                aff_block_.emplace(fcfg, rng);
            else
                iaff_block_.emplace(fcfg, rng);
        }
        if (spec_.topology != Topology::DECISION_FUSION)
            shared_head_ = Head(C, spec_.head, rng);
    }

    const ModelSpec& spec() const { return spec_; }
    bool uses(Modality m) const {
        for (const Modality& s : spec_.modalities)
            if (s == m) return true;
        return false;
    }
    NormStats& norm_stats(Modality m) { return norm_[m]; }
    const NormStats norm_stats(Modality m) const {
        auto it = norm_.find(m);
        return it == norm_.end() ? NormStats{} : it->second;
    }
    void set_norm_stats(Modality m, NormStats s) { norm_[m] = s; }

    // Encoder feature map for one normalized frame.
    Tensor encode(const Frame& frame, Modality m) const {
        if (auto err = frame.validate())
            throw std::invalid_argument("encode: " + *err);
        return encoders_.at(m)->forward(frame_to_input(frame, norm_stats(m)));
    }

    // Per-modality feature maps from a clip's last frames.
    std::map<Modality, Tensor> forward_features(const Clip& clip) const {
        std::map<Modality, Tensor> out;
        for (const Modality& m : spec_.modalities)
            out[m] = encode(last_frame(clip, m), m);
        return out;
    }

    // Contrastive embedding: projection of the pooled feature map,
    // L2-normalized. Used only at training time.
    Tensor embedding(Modality m, const Tensor& feature) const {
        return ad::l2_normalize(
            projections_.at(m).forward(ad::global_avg_pool(feature)));
    }

    // Differentiable score from precomputed features (features may be
    // detached to block encoder gradients).
    Tensor score_from_features(const std::map<Modality, Tensor>& features) const {
        switch (spec_.topology) {
            case Topology::UNIMODAL: {
                const Modality m = spec_.modalities[0];
                const Tensor& f = features.at(m);
                Tensor attended = fusion::apply_channel_attention(
                    f, attention_.at(m).weights(f));
                return shared_head_.forward(ad::global_avg_pool(attended));
            }
            case Topology::FEATURE_FUSION: {
                std::vector<Tensor> fs;
                for (const Modality& m : Modality::all())
                    if (uses(m)) fs.push_back(features.at(m));
                Tensor fused = aff_block_ ? fusion::aff_fuse(fs, *aff_block_)
                                          : iaff_block_->fuse(fs);
                return shared_head_.forward(ad::global_avg_pool(fused));
            }
            case Topology::DECISION_FUSION: {
                Tensor acc;
                int n = 0;
                for (const Modality& m : Modality::all()) {
                    if (!uses(m)) continue;
                    const Tensor& f = features.at(m);
                    Tensor attended = fusion::apply_channel_attention(
                        f, attention_.at(m).weights(f));
                    Tensor y = heads_.at(m).forward(ad::global_avg_pool(attended));
                    acc = (n == 0) ? y : ad::add(acc, y);
                    ++n;
                }
                return ad::scale(acc, 1.0 / n);
            }
        }
        throw std::logic_error("bad topology");
    }

    Tensor score_tensor(const Clip& clip) const {
        return score_from_features(forward_features(clip));
    }

    ScoreVector predict(const Clip& clip) const {
        ad::NoGradGuard ng;
        Tensor y = score_tensor(clip);
        ScoreVector out;
        for (int i = 0; i < kNumTrainClasses; ++i) out[i] = y.values()[i];
        return out;
    }

    // --- parameter groups -------------------------------------------------

    // Encoder-side parameters (encoders + contrastive projections): updated
    // by the contrastive objective.
    nn::ParamMap encoder_params() const {
        nn::ParamMap out;
        for (const auto& [m, enc] : encoders_) {
            enc->params("encoder." + m.str(), out);
            projections_.at(m).params("projection." + m.str(), out);
        }
        return out;
    }

    // Attention/fusion/head parameters: updated by the cross-entropy
    // objective with encoder gradients blocked.
    nn::ParamMap head_params() const {
        nn::ParamMap out;
        for (const auto& [m, att] : attention_)
            att.params("mscam." + m.str(), out);
        if (aff_block_) aff_block_->params("fusion.aff", out);
        if (iaff_block_) iaff_block_->params("fusion.iaff", out);
        for (const auto& [m, h] : heads_) h.params("head." + m.str(), out);
        if (spec_.topology != Topology::DECISION_FUSION)
            shared_head_.params("head.shared", out);
        return out;
    }

    nn::ParamMap all_params() const {
        nn::ParamMap out = encoder_params();
        for (auto& [k, v] : head_params()) out[k] = v;
        // Normalization stats ride along in the checkpoint.
        for (const Modality& m : spec_.modalities) {
            const NormStats s = norm_stats(m);
            out["norm." + m.str()] = Tensor::from_values({2}, {s.mean, s.std});
        }
        return out;
    }

    // Restores normalization stats after a checkpoint load rewrote the
    // "norm.*" tensors in all_params(); call via load helper in training.hpp.
    void set_norm_from_tensor(const std::string& modality, const std::vector<double>& v) {
        norm_[Modality::parse(modality)] = NormStats{v[0], v[1]};
    }

    // MAC count for the full inference pipeline at the given input size.
    nn::FlopCount flops(int height = kFrameHeight, int width = kFrameWidth) const {
        nn::FlopCount total;
        Shape feat_shape;
        for (const Modality& m : Modality::all()) {
            if (!uses(m)) continue;
            total.elementwise += 3LL * height * width;  // normalization
            total += encoders_.at(m)->flops({3, height, width}, &feat_shape);
        }
        const int C = spec_.encoder.output_channels;
        switch (spec_.topology) {
            case Topology::UNIMODAL: {
                const Modality m = spec_.modalities[0];
                total += attention_.at(m).flops(feat_shape);
                total.elementwise += shape_numel(feat_shape);  // attention multiply
                total.elementwise += shape_numel(feat_shape);  // global pool
                total += shared_head_.flops(C);
                break;
            }
            case Topology::FEATURE_FUSION: {
                const int n = static_cast<int>(spec_.modalities.size());
                total += aff_block_ ? fusion::aff_flops(*aff_block_, feat_shape, n)
                                    : iaff_block_->flops(feat_shape, n);
                total.elementwise += shape_numel(feat_shape);
                total += shared_head_.flops(C);
                break;
            }
            case Topology::DECISION_FUSION: {
                for (const Modality& m : spec_.modalities) {
                    total += attention_.at(m).flops(feat_shape);
                    total.elementwise += 2 * shape_numel(feat_shape);
                    total += heads_.at(m).flops(C);
                }
                total.elementwise += 2LL * kNumTrainClasses *
                                     static_cast<std::int64_t>(spec_.modalities.size());
                break;
            }
        }
        return total;
    }

    Shape feature_shape(int height = kFrameHeight, int width = kFrameWidth) const {
        Shape s;
        encoders_.begin()->second->flops({3, height, width}, &s);
        return s;
    }

    // Direct access for tests that force symmetric initializations.
    const fusion::MsCam* aff_block() const { return aff_block_ ? &*aff_block_ : nullptr; }
    const fusion::Iaff* iaff_block() const { return iaff_block_ ? &*iaff_block_ : nullptr; }

    static constexpr int kProjectionDim = 128;

private:
    ModelSpec spec_;
    std::map<Modality, std::unique_ptr<EncoderBase>> encoders_;
    std::map<Modality, nn::Linear> projections_;
    std::map<Modality, fusion::MsCam> attention_;
    std::map<Modality, Head> heads_;
    std::optional<fusion::MsCam> aff_block_;
    std::optional<fusion::Iaff> iaff_block_;
    Head shared_head_;
    std::map<Modality, NormStats> norm_;
};

}  // namespace dmskit::models
