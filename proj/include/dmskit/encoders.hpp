// encoders.hpp
//
// Base encoders mapping a 3-channel image to a (C, H/s, W/s) feature map:
// 2D ResNet-18, 2D MobileNet-V2 and a small reference CNN for desk-scale
// tests. Every block exposes forward(), named params() and flops(), so the
// same structure drives inference and the MAC counter.

#pragma once

#include "nn.hpp"
#include "tensor.hpp"

#include <memory>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmskit::models {

using ad::Tensor;

enum class Architecture { RESIDUAL18, MOBILE_V2, TINY_CNN };

inline std::string architecture_str(Architecture a) {
    switch (a) {
        case Architecture::RESIDUAL18: return "residual18";
        case Architecture::MOBILE_V2: return "inverted-residual-mobile-v2";
        case Architecture::TINY_CNN: return "tiny-cnn";
    }
    throw std::logic_error("bad architecture");
}

inline Architecture parse_architecture(const std::string& s) {
    if (s == "residual18" || s == "resnet18") return Architecture::RESIDUAL18;
    if (s == "inverted-residual-mobile-v2" || s == "mobilenet_v2")
        return Architecture::MOBILE_V2;
    if (s == "tiny-cnn" || s == "tiny_cnn") return Architecture::TINY_CNN;
    throw std::invalid_argument("unknown architecture: " + s);
}

inline int architecture_channels(Architecture a) {
    switch (a) {
        case Architecture::RESIDUAL18: return 512;
        case Architecture::MOBILE_V2: return 1280;
        case Architecture::TINY_CNN: return 64;
    }
    throw std::logic_error("bad architecture");
}

struct EncoderSpec {
    Architecture architecture = Architecture::TINY_CNN;
    std::string pretrained_weights;  // optional checkpoint path
    int output_channels = 64;

    static EncoderSpec make(Architecture a, std::string weights = "") {
        return EncoderSpec{a, std::move(weights), architecture_channels(a)};
    }
    void validate() const {
        if (output_channels != architecture_channels(architecture))
            throw std::invalid_argument(
                "EncoderSpec: output_channels must be " +
                std::to_string(architecture_channels(architecture)) + " for " +
                architecture_str(architecture));
    }
};

class EncoderBase {
public:
    virtual ~EncoderBase() = default;
    virtual Tensor forward(const Tensor& x) const = 0;
    virtual void params(const std::string& prefix, nn::ParamMap& out) const = 0;
    virtual nn::FlopCount flops(const Shape& in, Shape* out_shape = nullptr) const = 0;
    virtual int out_channels() const = 0;
};

// ---------------------------------------------------------------------------
// tiny-cnn: 4 stages of conv3x3/2 + BN + ReLU, stride 16, 64 channels.

class TinyCnn final : public EncoderBase {
public:
    explicit TinyCnn(std::mt19937_64& rng) {
        const int chans[5] = {3, 16, 32, 48, 64};
        for (int i = 0; i < 4; ++i) {
            convs_.emplace_back(chans[i], chans[i + 1], 3, 2, 1, 1, /*bias=*/false, rng);
            bns_.emplace_back(chans[i + 1]);
        }
    }

    Tensor forward(const Tensor& x) const override {
        Tensor h = x;
        for (size_t i = 0; i < convs_.size(); ++i)
            h = ad::relu(bns_[i].forward(convs_[i].forward(h)));
        return h;
    }

    void params(const std::string& prefix, nn::ParamMap& out) const override {
        for (size_t i = 0; i < convs_.size(); ++i) {
            convs_[i].params(prefix + ".conv" + std::to_string(i), out);
            bns_[i].params(prefix + ".bn" + std::to_string(i), out);
        }
    }

    nn::FlopCount flops(const Shape& in, Shape* out_shape) const override {
        nn::FlopCount f;
        Shape s = in;
        for (size_t i = 0; i < convs_.size(); ++i) {
            f += convs_[i].flops(s);
            s = convs_[i].out_shape(s);
            f += bns_[i].flops(s);
            f.elementwise += shape_numel(s);  // relu
        }
        if (out_shape) *out_shape = s;
        return f;
    }

    int out_channels() const override { return 64; }

private:
    std::vector<nn::Conv2d> convs_;
    std::vector<nn::BatchNorm> bns_;
};

// ---------------------------------------------------------------------------
// ResNet-18

class BasicBlock {
public:
    BasicBlock(int in_c, int out_c, int stride, std::mt19937_64& rng)
        : conv1_(in_c, out_c, 3, stride, 1, 1, false, rng),
          bn1_(out_c),
          conv2_(out_c, out_c, 3, 1, 1, 1, false, rng),
          bn2_(out_c),
          has_downsample_(stride != 1 || in_c != out_c) {
        if (has_downsample_) {
            down_conv_ = nn::Conv2d(in_c, out_c, 1, stride, 0, 1, false, rng);
            down_bn_ = nn::BatchNorm(out_c);
        }
    }

    Tensor forward(const Tensor& x) const {
        Tensor h = ad::relu(bn1_.forward(conv1_.forward(x)));
        h = bn2_.forward(conv2_.forward(h));
        Tensor skip = has_downsample_ ? down_bn_.forward(down_conv_.forward(x)) : x;
        return ad::relu(ad::add(h, skip));
    }

    void params(const std::string& prefix, nn::ParamMap& out) const {
        conv1_.params(prefix + ".conv1", out);
        bn1_.params(prefix + ".bn1", out);
        conv2_.params(prefix + ".conv2", out);
        bn2_.params(prefix + ".bn2", out);
        if (has_downsample_) {
            down_conv_.params(prefix + ".down_conv", out);
            down_bn_.params(prefix + ".down_bn", out);
        }
    }

    nn::FlopCount flops(const Shape& in, Shape* out_shape) const {
        nn::FlopCount f = conv1_.flops(in);
        Shape s = conv1_.out_shape(in);
        f += bn1_.flops(s);
        f.elementwise += shape_numel(s);
        f += conv2_.flops(s);
        s = conv2_.out_shape(s);
        f += bn2_.flops(s);
        if (has_downsample_) {
            f += down_conv_.flops(in);
            f += down_bn_.flops(s);
        }
        f.elementwise += 2 * shape_numel(s);  // residual add + relu
        if (out_shape) *out_shape = s;
        return f;
    }

private:
    nn::Conv2d conv1_, conv2_, down_conv_;
    nn::BatchNorm bn1_, bn2_, down_bn_;
    bool has_downsample_ = false;
};

class ResNet18 final : public EncoderBase {
public:
    explicit ResNet18(std::mt19937_64& rng)
        : stem_(3, 64, 7, 2, 3, 1, false, rng), stem_bn_(64) {
        const int chans[4] = {64, 128, 256, 512};
        int in_c = 64;
        for (int stage = 0; stage < 4; ++stage) {
            const int stride = (stage == 0) ? 1 : 2;
            blocks_.emplace_back(in_c, chans[stage], stride, rng);
            blocks_.emplace_back(chans[stage], chans[stage], 1, rng);
            in_c = chans[stage];
        }
    }

    Tensor forward(const Tensor& x) const override {
        Tensor h = ad::relu(stem_bn_.forward(stem_.forward(x)));
        h = ad::maxpool2d(h, 3, 2, 1);
        for (const auto& b : blocks_) h = b.forward(h);
        return h;
    }

    void params(const std::string& prefix, nn::ParamMap& out) const override {
        stem_.params(prefix + ".stem", out);
        stem_bn_.params(prefix + ".stem_bn", out);
        for (size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].params(prefix + ".block" + std::to_string(i), out);
    }

    nn::FlopCount flops(const Shape& in, Shape* out_shape) const override {
        nn::FlopCount f = stem_.flops(in);
        Shape s = stem_.out_shape(in);
        f += stem_bn_.flops(s);
        f.elementwise += shape_numel(s);  // relu
        s = {s[0], (s[1] + 2 - 3) / 2 + 1, (s[2] + 2 - 3) / 2 + 1};  // maxpool
        f.elementwise += static_cast<std::int64_t>(9) * shape_numel(s);
        for (const auto& b : blocks_) f += b.flops(s, &s);
        if (out_shape) *out_shape = s;
        return f;
    }

    int out_channels() const override { return 512; }

private:
    nn::Conv2d stem_;
    nn::BatchNorm stem_bn_;
    std::vector<BasicBlock> blocks_;
};

// ---------------------------------------------------------------------------
// MobileNet-V2

class InvertedResidual {
public:
    InvertedResidual(int in_c, int out_c, int stride, int expand, std::mt19937_64& rng)
        : use_skip_(stride == 1 && in_c == out_c), has_expand_(expand != 1) {
        const int hidden = in_c * expand;
        if (has_expand_) {
            expand_conv_ = nn::Conv2d(in_c, hidden, 1, 1, 0, 1, false, rng);
            expand_bn_ = nn::BatchNorm(hidden);
        }
        dw_conv_ = nn::Conv2d(hidden, hidden, 3, stride, 1, hidden, false, rng);
        dw_bn_ = nn::BatchNorm(hidden);
        project_conv_ = nn::Conv2d(hidden, out_c, 1, 1, 0, 1, false, rng);
        project_bn_ = nn::BatchNorm(out_c);
    }

    Tensor forward(const Tensor& x) const {
        Tensor h = x;
        if (has_expand_) h = ad::relu6(expand_bn_.forward(expand_conv_.forward(h)));
        h = ad::relu6(dw_bn_.forward(dw_conv_.forward(h)));
        h = project_bn_.forward(project_conv_.forward(h));
        return use_skip_ ? ad::add(h, x) : h;
    }

    void params(const std::string& prefix, nn::ParamMap& out) const {
        if (has_expand_) {
            expand_conv_.params(prefix + ".expand", out);
            expand_bn_.params(prefix + ".expand_bn", out);
        }
        dw_conv_.params(prefix + ".dw", out);
        dw_bn_.params(prefix + ".dw_bn", out);
        project_conv_.params(prefix + ".project", out);
        project_bn_.params(prefix + ".project_bn", out);
    }

    nn::FlopCount flops(const Shape& in, Shape* out_shape) const {
        nn::FlopCount f;
        Shape s = in;
        if (has_expand_) {
            f += expand_conv_.flops(s);
            s = expand_conv_.out_shape(s);
            f += expand_bn_.flops(s);
            f.elementwise += shape_numel(s);
        }
        f += dw_conv_.flops(s);
        s = dw_conv_.out_shape(s);
        f += dw_bn_.flops(s);
        f.elementwise += shape_numel(s);
        f += project_conv_.flops(s);
        s = project_conv_.out_shape(s);
        f += project_bn_.flops(s);
        if (use_skip_) f.elementwise += shape_numel(s);
        if (out_shape) *out_shape = s;
        return f;
    }

private:
    bool use_skip_ = false, has_expand_ = false;
    nn::Conv2d expand_conv_, dw_conv_, project_conv_;
    nn::BatchNorm expand_bn_, dw_bn_, project_bn_;
};

class MobileNetV2 final : public EncoderBase {
public:
    explicit MobileNetV2(std::mt19937_64& rng)
        : stem_(3, 32, 3, 2, 1, 1, false, rng),
          stem_bn_(32),
          head_(320, 1280, 1, 1, 0, 1, false, rng),
          head_bn_(1280) {
        // (expand, out_c, repeats, first stride)
        const int cfg[7][4] = {{1, 16, 1, 1},  {6, 24, 2, 2},  {6, 32, 3, 2},
                               {6, 64, 4, 2},  {6, 96, 3, 1},  {6, 160, 3, 2},
                               {6, 320, 1, 1}};
        int in_c = 32;
        for (const auto& [t, c, n, s] : cfg) {
            for (int i = 0; i < n; ++i) {
                blocks_.emplace_back(in_c, c, i == 0 ? s : 1, t, rng);
                in_c = c;
            }
        }
    }

    Tensor forward(const Tensor& x) const override {
        Tensor h = ad::relu6(stem_bn_.forward(stem_.forward(x)));
        for (const auto& b : blocks_) h = b.forward(h);
        return ad::relu6(head_bn_.forward(head_.forward(h)));
    }

    void params(const std::string& prefix, nn::ParamMap& out) const override {
        stem_.params(prefix + ".stem", out);
        stem_bn_.params(prefix + ".stem_bn", out);
        for (size_t i = 0; i < blocks_.size(); ++i)
            blocks_[i].params(prefix + ".block" + std::to_string(i), out);
        head_.params(prefix + ".head", out);
        head_bn_.params(prefix + ".head_bn", out);
    }

    nn::FlopCount flops(const Shape& in, Shape* out_shape) const override {
        nn::FlopCount f = stem_.flops(in);
        Shape s = stem_.out_shape(in);
        f += stem_bn_.flops(s);
        f.elementwise += shape_numel(s);
        for (const auto& b : blocks_) f += b.flops(s, &s);
        f += head_.flops(s);
        s = head_.out_shape(s);
        f += head_bn_.flops(s);
        f.elementwise += shape_numel(s);
        if (out_shape) *out_shape = s;
        return f;
    }

    int out_channels() const override { return 1280; }

private:
    nn::Conv2d stem_, head_;
    nn::BatchNorm stem_bn_, head_bn_;
    std::vector<InvertedResidual> blocks_;
};

inline std::unique_ptr<EncoderBase> make_encoder(Architecture a, std::mt19937_64& rng) {
    switch (a) {
        case Architecture::RESIDUAL18: return std::make_unique<ResNet18>(rng);
        case Architecture::MOBILE_V2: return std::make_unique<MobileNetV2>(rng);
        case Architecture::TINY_CNN: return std::make_unique<TinyCnn>(rng);
    }
    throw std::logic_error("bad architecture");
}

}  // namespace dmskit::models
