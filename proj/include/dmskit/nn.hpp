// nn.hpp
//
// Thin layer wrappers over the autodiff ops: parameter ownership, named
// parameter registration (for checkpoints and optimizers) and per-layer
// MAC accounting used by the benchmark module.

#pragma once

#include "tensor.hpp"

#include <cstdint>
#include <map>
#include <random>
#include <string>

namespace dmskit::nn {

using ad::Tensor;
using ParamMap = std::map<std::string, Tensor>;

// FLOPs accounting: 1 MAC = 1 FLOP, elementwise ops 1 FLOP each.
struct FlopCount {
    std::int64_t macs = 0;
    std::int64_t elementwise = 0;
    std::int64_t total() const { return macs + elementwise; }
    FlopCount& operator+=(const FlopCount& o) {
        macs += o.macs;
        elementwise += o.elementwise;
        return *this;
    }
};

inline Tensor he_init(const Shape& shape, int fan_in, std::mt19937_64& rng) {
    std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / std::max(1, fan_in)));
    std::vector<double> v(static_cast<size_t>(shape_numel(shape)));
    for (auto& x : v) x = dist(rng);
    return Tensor::from_values(shape, std::move(v), /*requires_grad=*/true);
}

class Conv2d {
public:
    Conv2d() = default;
    Conv2d(int in_c, int out_c, int k, int stride, int pad, int groups,
           bool bias, std::mt19937_64& rng)
        : in_c_(in_c), out_c_(out_c), k_(k), stride_(stride), pad_(pad), groups_(groups) {
        const int fan_in = (in_c / groups) * k * k;
        weight_ = he_init({out_c, in_c / groups, k, k}, fan_in, rng);
        if (bias) bias_ = Tensor::zeros({out_c}, true);
    }

    Tensor forward(const Tensor& x) const {
        return ad::conv2d(x, weight_, bias_, stride_, pad_, groups_);
    }

    void params(const std::string& prefix, ParamMap& out) const {
        out[prefix + ".weight"] = weight_;
        if (bias_.defined()) out[prefix + ".bias"] = bias_;
    }

    Shape out_shape(const Shape& in) const {
        return {out_c_, (in[1] + 2 * pad_ - k_) / stride_ + 1,
                (in[2] + 2 * pad_ - k_) / stride_ + 1};
    }
    FlopCount flops(const Shape& in) const {
        Shape o = out_shape(in);
        FlopCount f;
        f.macs = static_cast<std::int64_t>(out_c_) * o[1] * o[2] * (in_c_ / groups_) * k_ * k_;
        if (bias_.defined()) f.elementwise += static_cast<std::int64_t>(out_c_) * o[1] * o[2];
        return f;
    }

private:
    int in_c_ = 0, out_c_ = 0, k_ = 0, stride_ = 1, pad_ = 0, groups_ = 1;
    Tensor weight_, bias_;
};

// Batch norm running in inference mode (fixed running statistics); gamma
// and beta remain trainable.
class BatchNorm {
public:
    BatchNorm() = default;
    explicit BatchNorm(int channels) : channels_(channels) {
        gamma_ = Tensor::from_values({channels}, std::vector<double>(channels, 1.0), true);
        beta_ = Tensor::zeros({channels}, true);
        mean_ = Tensor::zeros({channels}, false);
        var_ = Tensor::from_values({channels}, std::vector<double>(channels, 1.0), false);
    }

    Tensor forward(const Tensor& x) const {
        return ad::batchnorm_affine(x, gamma_, beta_, mean_, var_);
    }

    void params(const std::string& prefix, ParamMap& out) const {
        out[prefix + ".gamma"] = gamma_;
        out[prefix + ".beta"] = beta_;
        out[prefix + ".running_mean"] = mean_;
        out[prefix + ".running_var"] = var_;
    }

    FlopCount flops(const Shape& in) const {
        FlopCount f;
        f.elementwise = 2 * shape_numel(in);  // scale + shift
        return f;
    }

private:
    int channels_ = 0;
    Tensor gamma_, beta_, mean_, var_;
};

class Linear {
public:
    Linear() = default;
    Linear(int in, int out, std::mt19937_64& rng) : in_(in), out_(out) {
        weight_ = he_init({out, in}, in, rng);
        bias_ = Tensor::zeros({out}, true);
    }

    Tensor forward(const Tensor& x) const { return ad::linear(x, weight_, bias_); }

    void params(const std::string& prefix, ParamMap& out) const {
        out[prefix + ".weight"] = weight_;
        out[prefix + ".bias"] = bias_;
    }

    FlopCount flops() const {
        FlopCount f;
        f.macs = static_cast<std::int64_t>(in_) * out_;
        f.elementwise = out_;
        return f;
    }

private:
    int in_ = 0, out_ = 0;
    Tensor weight_, bias_;
};

}  // namespace dmskit::nn
