// fusion.hpp
//
// Channel-attention and attentional-fusion blocks.
//
// MS-CAM computes per-position attention from two bottleneck branches, a
// local one over the full map and a global one over the pooled channel
// vector; their sum is squashed by a sigmoid (single head) or distributed
// across N input features by a positionwise softmax (multi head). AFF
// fuses four maps as the weight-multiplied sum; iAFF refines the weights
// once using the first fusion as the integration input.

#pragma once

#include "core.hpp"
#include "nn.hpp"
#include "tensor.hpp"

#include <random>
#include <stdexcept>
#include <vector>

namespace dmskit::fusion {

using ad::Tensor;

struct MsCamConfig {
    int channels = 64;
    int reduction_ratio = 4;  // bottleneck C -> C/r -> C
    int heads = 1;            // 1 = unimodal attention, 4 = four-source fusion

    void validate() const {
        if (channels <= 0 || reduction_ratio <= 0 || heads < 1)
            throw std::invalid_argument("MsCamConfig: non-positive field");
        if (channels % reduction_ratio != 0)
            throw std::invalid_argument("MsCamConfig: channels not divisible by reduction ratio");
    }
};

// Multi-scale channel attention with N heads. The reduce stage of each
// branch is shared across heads; each head owns its expand projections.
class MsCam {
public:
    MsCam() = default;
    MsCam(const MsCamConfig& cfg, std::mt19937_64& rng) : cfg_(cfg) {
        cfg.validate();
        const int c = cfg.channels;
        const int h = c / cfg.reduction_ratio;
        local_reduce_ = nn::Conv2d(c, h, 1, 1, 0, 1, /*bias=*/false, rng);
        local_reduce_bn_ = nn::BatchNorm(h);
        global_reduce_ = nn::Conv2d(c, h, 1, 1, 0, 1, false, rng);
        global_reduce_bn_ = nn::BatchNorm(h);
        for (int n = 0; n < cfg.heads; ++n) {
            local_expand_.emplace_back(h, c, 1, 1, 0, 1, false, rng);
            local_expand_bn_.emplace_back(c);
            global_expand_.emplace_back(h, c, 1, 1, 0, 1, false, rng);
            global_expand_bn_.emplace_back(c);
        }
    }

    const MsCamConfig& config() const { return cfg_; }

    // Pre-activation attention maps, one per head, from an integration map.
    std::vector<Tensor> pre_activations(const Tensor& u) const {
        if (u.shape().size() != 3 || u.shape()[0] != cfg_.channels)
            throw std::invalid_argument("MsCam: feature channels " +
                                        shape_str(u.shape()) + " do not match config C=" +
                                        std::to_string(cfg_.channels));
        const int H = u.shape()[1], W = u.shape()[2];
        Tensor local_hidden = ad::relu(local_reduce_bn_.forward(local_reduce_.forward(u)));
        Tensor pooled = ad::reshape(ad::global_avg_pool(u), {cfg_.channels, 1, 1});
        Tensor global_hidden = ad::relu(global_reduce_bn_.forward(global_reduce_.forward(pooled)));
        std::vector<Tensor> pre;
        for (int n = 0; n < cfg_.heads; ++n) {
            Tensor l = local_expand_bn_[n].forward(local_expand_[n].forward(local_hidden));
            Tensor g = global_expand_bn_[n].forward(global_expand_[n].forward(global_hidden));
            Tensor g_vec = ad::reshape(g, {cfg_.channels});
            pre.push_back(ad::add(l, ad::broadcast_channels(g_vec, H, W)));
        }
        return pre;
    }

    // Single-head weights: sigmoid(Local(f) + Global(f)).
    Tensor weights(const Tensor& f) const {
        if (cfg_.heads != 1)
            throw std::logic_error("weights(): block has more than one head");
        return ad::sigmoid(pre_activations(f)[0]);
    }

    // Multi-head weights from an explicit integration map; softmax over the
    // head axis at every (channel, y, x) position.
    std::vector<Tensor> weights_from_integration(const Tensor& u) const {
        return ad::softmax_across(pre_activations(u));
    }

    void params(const std::string& prefix, nn::ParamMap& out) const {
        local_reduce_.params(prefix + ".local_reduce", out);
        local_reduce_bn_.params(prefix + ".local_reduce_bn", out);
        global_reduce_.params(prefix + ".global_reduce", out);
        global_reduce_bn_.params(prefix + ".global_reduce_bn", out);
        for (size_t n = 0; n < local_expand_.size(); ++n) {
            const std::string h = prefix + ".head" + std::to_string(n);
            local_expand_[n].params(h + ".local_expand", out);
            local_expand_bn_[n].params(h + ".local_expand_bn", out);
            global_expand_[n].params(h + ".global_expand", out);
            global_expand_bn_[n].params(h + ".global_expand_bn", out);
        }
    }

    nn::FlopCount flops(const Shape& in) const {
        const int C = in[0], H = in[1], W = in[2];
        const Shape pooled{C, 1, 1};
        nn::FlopCount f;
        f += local_reduce_.flops(in);
        f += local_reduce_bn_.flops(local_reduce_.out_shape(in));
        f.elementwise += shape_numel(local_reduce_.out_shape(in));  // relu
        f.elementwise += static_cast<std::int64_t>(C) * H * W;      // pooling adds
        f += global_reduce_.flops(pooled);
        f += global_reduce_bn_.flops(global_reduce_.out_shape(pooled));
        f.elementwise += shape_numel(global_reduce_.out_shape(pooled));
        for (size_t n = 0; n < local_expand_.size(); ++n) {
            Shape hid = local_reduce_.out_shape(in);
            f += local_expand_[n].flops(hid);
            f += local_expand_bn_[n].flops(in);
            Shape hid_g = global_reduce_.out_shape(pooled);
            f += global_expand_[n].flops(hid_g);
            f += global_expand_bn_[n].flops(pooled);
            f.elementwise += static_cast<std::int64_t>(C) * H * W;  // local + global add
        }
        // sigmoid / softmax over the head axis
        const std::int64_t pos = static_cast<std::int64_t>(C) * H * W;
        f.elementwise += (cfg_.heads == 1) ? pos : 3 * cfg_.heads * pos;
        return f;
    }

private:
    MsCamConfig cfg_;
    nn::Conv2d local_reduce_, global_reduce_;
    nn::BatchNorm local_reduce_bn_, global_reduce_bn_;
    std::vector<nn::Conv2d> local_expand_, global_expand_;
    std::vector<nn::BatchNorm> local_expand_bn_, global_expand_bn_;
};

// output[c,y,x] = f[c,y,x] * W[c,y,x]
inline Tensor apply_channel_attention(const Tensor& f, const Tensor& w) {
    if (f.shape() != w.shape())
        throw std::invalid_argument("apply_channel_attention: shape mismatch " +
                                    shape_str(f.shape()) + " vs " + shape_str(w.shape()));
    return ad::mul(f, w);
}

inline void check_fusion_inputs(const std::vector<Tensor>& features, const MsCam& block) {
    if (static_cast<int>(features.size()) != block.config().heads)
        throw std::invalid_argument("fusion: expected " +
                                    std::to_string(block.config().heads) + " inputs, got " +
                                    std::to_string(features.size()));
    for (const auto& f : features)
        if (f.shape() != features[0].shape())
            throw std::invalid_argument("fusion: input shapes differ");
}

// Weights for N features with the unweighted sum as the initial integration.
inline std::vector<Tensor> multihead_mscam_weights(const std::vector<Tensor>& features,
                                                   const MsCam& block) {
    check_fusion_inputs(features, block);
    Tensor u = features[0];
    for (size_t i = 1; i < features.size(); ++i) u = ad::add(u, features[i]);
    return block.weights_from_integration(u);
}

// f' = sum_i f_i (x) W_i
inline Tensor aff_fuse(const std::vector<Tensor>& features, const MsCam& block) {
    auto ws = multihead_mscam_weights(features, block);
    Tensor out = apply_channel_attention(features[0], ws[0]);
    for (size_t i = 1; i < features.size(); ++i)
        out = ad::add(out, apply_channel_attention(features[i], ws[i]));
    return out;
}

// Two-stage fusion: stage 1 is AFF; stage 2 recomputes the weights with the
// stage-1 map as the integration input and re-fuses the original inputs.
class Iaff {
public:
    Iaff() = default;
    Iaff(const MsCamConfig& cfg, std::mt19937_64& rng)
        : stage1_(cfg, rng), stage2_(cfg, rng) {}

    Tensor fuse(const std::vector<Tensor>& features) const {
        Tensor first = aff_fuse(features, stage1_);
        check_fusion_inputs(features, stage2_);
        auto ws = stage2_.weights_from_integration(first);
        Tensor out = apply_channel_attention(features[0], ws[0]);
        for (size_t i = 1; i < features.size(); ++i)
            out = ad::add(out, apply_channel_attention(features[i], ws[i]));
        return out;
    }

    const MsCam& stage1() const { return stage1_; }
    const MsCam& stage2() const { return stage2_; }

    void params(const std::string& prefix, nn::ParamMap& out) const {
        stage1_.params(prefix + ".stage1", out);
        stage2_.params(prefix + ".stage2", out);
    }

    nn::FlopCount flops(const Shape& in, int n_inputs) const {
        nn::FlopCount f = stage1_.flops(in);
        f += stage2_.flops(in);
        const std::int64_t pos = shape_numel(in);
        // integration sum, two weighted sums
        f.elementwise += (n_inputs - 1) * pos + 2 * (2 * n_inputs - 1) * pos;
        return f;
    }

private:
    MsCam stage1_, stage2_;
};

inline nn::FlopCount aff_flops(const MsCam& block, const Shape& in, int n_inputs) {
    nn::FlopCount f = block.flops(in);
    const std::int64_t pos = shape_numel(in);
    f.elementwise += (n_inputs - 1) * pos + (2 * n_inputs - 1) * pos;
    return f;
}

// Decision-level fusion: elementwise arithmetic mean of exactly four
// 7-dimensional score vectors.
inline ScoreVector decision_fuse(const std::vector<ScoreVector>& scores) {
    if (scores.size() != 4)
        throw std::invalid_argument("decision_fuse: expected 4 score vectors, got " +
                                    std::to_string(scores.size()));
    ScoreVector out;
    for (int i = 0; i < kNumTrainClasses; ++i) {
        double s = 0.0;
        for (const auto& y : scores) s += y[i];
        out[i] = s / 4.0;
    }
    return out;
}

}  // namespace dmskit::fusion
