// tensor.hpp
//
// Minimal reverse-mode autodiff tensor used by every trainable block in
// dmskit. Values are double precision, stored row-major. A Tensor is a
// shared handle onto a graph node; calling backward() on a scalar walks
// the recorded graph in reverse topological order.
//
// Matrix products go through Eigen; everything else is plain loops.

#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cassert>
#include <cmath>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <stdexcept>
#include <string>
#include <unordered_set>
#include <vector>

namespace dmskit {

using Shape = std::vector<int>;

inline std::int64_t shape_numel(const Shape& s) {
    std::int64_t n = 1;
    for (int d : s) n *= d;
    return n;
}

inline std::string shape_str(const Shape& s) {
    std::string out = "(";
    for (size_t i = 0; i < s.size(); ++i) {
        out += std::to_string(s[i]);
        if (i + 1 < s.size()) out += ",";
    }
    return out + ")";
}

namespace ad {

struct Node;
using NodePtr = std::shared_ptr<Node>;

struct Node {
    Shape shape;
    std::vector<double> value;
    std::vector<double> grad;
    bool requires_grad = false;
    std::vector<NodePtr> parents;
    std::function<void(Node&)> backward_fn;  // pushes grad into parents

    std::int64_t numel() const { return static_cast<std::int64_t>(value.size()); }
    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), 0.0);
    }
};

// Global switch: when off, no graph edges are recorded (inference mode).
inline bool& grad_enabled() {
    static bool enabled = true;
    return enabled;
}

struct NoGradGuard {
    bool prev;
    NoGradGuard() : prev(grad_enabled()) { grad_enabled() = false; }
    ~NoGradGuard() { grad_enabled() = prev; }
};

class Tensor {
public:
    Tensor() = default;
    explicit Tensor(NodePtr n) : node_(std::move(n)) {}

    static Tensor zeros(const Shape& s, bool requires_grad = false) {
        auto n = std::make_shared<Node>();
        n->shape = s;
        n->value.assign(static_cast<size_t>(shape_numel(s)), 0.0);
        n->requires_grad = requires_grad;
        return Tensor(n);
    }
    static Tensor from_values(const Shape& s, std::vector<double> v,
                              bool requires_grad = false) {
        if (static_cast<std::int64_t>(v.size()) != shape_numel(s))
            throw std::invalid_argument("tensor size mismatch " + shape_str(s));
        auto n = std::make_shared<Node>();
        n->shape = s;
        n->value = std::move(v);
        n->requires_grad = requires_grad;
        return Tensor(n);
    }
    static Tensor scalar(double v, bool requires_grad = false) {
        return from_values({1}, {v}, requires_grad);
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::int64_t numel() const { return node_->numel(); }
    std::vector<double>& values() { return node_->value; }
    const std::vector<double>& values() const { return node_->value; }
    std::vector<double>& grads() { node_->ensure_grad(); return node_->grad; }
    bool requires_grad() const { return node_->requires_grad; }
    void set_requires_grad(bool b) { node_->requires_grad = b; }
    NodePtr node() const { return node_; }

    double item() const {
        if (node_->numel() != 1) throw std::logic_error("item() on non-scalar");
        return node_->value[0];
    }

    // Detached copy: same values, no history, no gradient flow.
    Tensor detach() const {
        auto n = std::make_shared<Node>();
        n->shape = node_->shape;
        n->value = node_->value;
        n->requires_grad = false;
        return Tensor(n);
    }

    void zero_grad() { node_->grad.assign(node_->value.size(), 0.0); }

    // Reverse-mode sweep from a scalar.
    void backward() const {
        if (node_->numel() != 1)
            throw std::logic_error("backward() requires a scalar loss");
        std::vector<Node*> order;
        std::unordered_set<Node*> seen;
        std::vector<std::pair<Node*, size_t>> stack{{node_.get(), 0}};
        seen.insert(node_.get());
        while (!stack.empty()) {
            auto& [n, idx] = stack.back();
            if (idx < n->parents.size()) {
                Node* p = n->parents[idx++].get();
                if (!seen.count(p)) {
                    seen.insert(p);
                    stack.emplace_back(p, 0);
                }
            } else {
                order.push_back(n);
                stack.pop_back();
            }
        }
        node_->ensure_grad();
        node_->grad[0] = 1.0;
        for (auto it = order.rbegin(); it != order.rend(); ++it) {
            Node* n = *it;
            if (n->backward_fn) {
                n->ensure_grad();
                n->backward_fn(*n);
            }
        }
    }

private:
    NodePtr node_;
};

namespace detail {

inline Tensor make_op(const Shape& shape, std::vector<double> value,
                      std::vector<Tensor> inputs,
                      std::function<void(Node&)> backward) {
    auto n = std::make_shared<Node>();
    n->shape = shape;
    n->value = std::move(value);
    bool need = false;
    for (const auto& in : inputs) need = need || in.requires_grad();
    if (grad_enabled() && need) {
        n->requires_grad = true;
        for (const auto& in : inputs) n->parents.push_back(in.node());
        n->backward_fn = std::move(backward);
    }
    return Tensor(n);
}

inline void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
    if (a.shape() != b.shape())
        throw std::invalid_argument(std::string(op) + ": shape mismatch " +
                                    shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Elementwise ops

inline Tensor add(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "add");
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + b.values()[i];
    return detail::make_op(a.shape(), std::move(out), {a, b}, [](Node& n) {
        for (int k = 0; k < 2; ++k) {
            Node& p = *n.parents[k];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
        }
    });
}

inline Tensor sub(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "sub");
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] - b.values()[i];
    return detail::make_op(a.shape(), std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] -= n.grad[i];
        }
    });
}

inline Tensor mul(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "mul");
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * b.values()[i];
    return detail::make_op(a.shape(), std::move(out), {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pa.grad[i] += n.grad[i] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < n.grad.size(); ++i) pb.grad[i] += n.grad[i] * pa.value[i];
        }
    });
}

inline Tensor scale(const Tensor& a, double s) {
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] * s;
    return detail::make_op(a.shape(), std::move(out), {a}, [s](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i] * s;
    });
}

inline Tensor add_scalar(const Tensor& a, double s) {
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = a.values()[i] + s;
    return detail::make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

inline Tensor relu(const Tensor& a) {
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::max(0.0, a.values()[i]);
    return detail::make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (p.value[i] > 0.0) p.grad[i] += n.grad[i];
    });
}

inline Tensor relu6(const Tensor& a) {
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = std::clamp(a.values()[i], 0.0, 6.0);
    return detail::make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            if (p.value[i] > 0.0 && p.value[i] < 6.0) p.grad[i] += n.grad[i];
    });
}

inline Tensor sigmoid(const Tensor& a) {
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = 1.0 / (1.0 + std::exp(-a.values()[i]));
    return detail::make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i)
            p.grad[i] += n.grad[i] * n.value[i] * (1.0 - n.value[i]);
    });
}

// Natural log with clamping of the argument into [lo, hi].
inline Tensor log_clamped(const Tensor& a, double lo = 1e-7, double hi = 1.0 - 1e-7) {
    std::vector<double> out(a.values().size());
    for (size_t i = 0; i < out.size(); ++i)
        out[i] = std::log(std::clamp(a.values()[i], lo, hi));
    return detail::make_op(a.shape(), std::move(out), {a}, [lo, hi](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) {
            double x = p.value[i];
            if (x > lo && x < hi) p.grad[i] += n.grad[i] / x;
        }
    });
}

// ---------------------------------------------------------------------------
// Reductions / reshapes

inline Tensor sum(const Tensor& a) {
    double s = std::accumulate(a.values().begin(), a.values().end(), 0.0);
    return detail::make_op({1}, {s}, {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[0];
    });
}

inline Tensor mean(const Tensor& a) {
    const double inv = 1.0 / static_cast<double>(a.numel());
    double s = std::accumulate(a.values().begin(), a.values().end(), 0.0) * inv;
    return detail::make_op({1}, {s}, {a}, [inv](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < p.grad.size(); ++i) p.grad[i] += n.grad[0] * inv;
    });
}

inline Tensor reshape(const Tensor& a, const Shape& s) {
    if (shape_numel(s) != a.numel())
        throw std::invalid_argument("reshape: numel mismatch");
    return detail::make_op(s, a.values(), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[i] += n.grad[i];
    });
}

// Concatenate 1-D tensors into one vector.
inline Tensor concat(const std::vector<Tensor>& parts) {
    std::vector<double> out;
    std::vector<size_t> offsets;
    for (const auto& t : parts) {
        offsets.push_back(out.size());
        out.insert(out.end(), t.values().begin(), t.values().end());
    }
    Shape s{static_cast<int>(out.size())};
    return detail::make_op(s, std::move(out), parts, [offsets](Node& n) {
        for (size_t k = 0; k < n.parents.size(); ++k) {
            Node& p = *n.parents[k];
            if (!p.requires_grad) continue;
            p.ensure_grad();
            for (size_t i = 0; i < p.value.size(); ++i)
                p.grad[i] += n.grad[offsets[k] + i];
        }
    });
}

inline Tensor slice(const Tensor& a, int begin, int len) {
    if (a.shape().size() != 1 || begin < 0 || begin + len > a.shape()[0])
        throw std::invalid_argument("slice: bad range");
    std::vector<double> out(a.values().begin() + begin, a.values().begin() + begin + len);
    return detail::make_op({len}, std::move(out), {a}, [begin](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (size_t i = 0; i < n.grad.size(); ++i) p.grad[begin + i] += n.grad[i];
    });
}

// Softmax over the last run of `len` consecutive elements grouped by stride,
// specialised here to the two layouts we use: a flat vector (groups of the
// whole vector) and the head axis of stacked maps (handled in fusion.hpp).
inline Tensor softmax(const Tensor& a) {
    const auto& v = a.values();
    double mx = *std::max_element(v.begin(), v.end());
    std::vector<double> out(v.size());
    double denom = 0.0;
    for (size_t i = 0; i < v.size(); ++i) {
        out[i] = std::exp(v[i] - mx);
        denom += out[i];
    }
    for (auto& x : out) x /= denom;
    return detail::make_op(a.shape(), std::move(out), {a}, [](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        double dot = 0.0;
        for (size_t i = 0; i < n.grad.size(); ++i) dot += n.grad[i] * n.value[i];
        for (size_t i = 0; i < n.grad.size(); ++i)
            p.grad[i] += n.value[i] * (n.grad[i] - dot);
    });
}

// Softmax across K tensors of identical shape, taken independently at every
// position. Returns K tensors summing to one positionwise.
inline std::vector<Tensor> softmax_across(const std::vector<Tensor>& xs) {
    const size_t k = xs.size();
    if (k == 0) throw std::invalid_argument("softmax_across: empty input");
    const size_t m = xs[0].values().size();
    for (const auto& t : xs) detail::check_same_shape(xs[0], t, "softmax_across");

    std::vector<std::vector<double>> outs(k, std::vector<double>(m));
    for (size_t i = 0; i < m; ++i) {
        double mx = xs[0].values()[i];
        for (size_t j = 1; j < k; ++j) mx = std::max(mx, xs[j].values()[i]);
        double denom = 0.0;
        for (size_t j = 0; j < k; ++j) {
            outs[j][i] = std::exp(xs[j].values()[i] - mx);
            denom += outs[j][i];
        }
        for (size_t j = 0; j < k; ++j) outs[j][i] /= denom;
    }

    // Each output node gets all K inputs as parents plus sibling values
    // captured by copy for the Jacobian.
    std::vector<Tensor> result;
    for (size_t j = 0; j < k; ++j) {
        auto siblings = outs;  // value copy
        size_t mine = j;
        result.push_back(detail::make_op(
            xs[0].shape(), std::vector<double>(outs[j]), xs,
            [siblings, mine](Node& n) {
                // d out_mine[i] / d in_l[i] = out_mine (δ - out_l)
                for (size_t l = 0; l < n.parents.size(); ++l) {
                    Node& p = *n.parents[l];
                    if (!p.requires_grad) continue;
                    p.ensure_grad();
                    for (size_t i = 0; i < n.grad.size(); ++i) {
                        double jac = siblings[mine][i] *
                                     ((l == mine ? 1.0 : 0.0) - siblings[l][i]);
                        p.grad[i] += n.grad[i] * jac;
                    }
                }
            }));
    }
    return result;
}

// ---------------------------------------------------------------------------
// Linear algebra

// y = W x + b, W: (out,in), x: (in), b: (out) or undefined.
inline Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b) {
    const int in = x.shape()[0];
    const int out = W.shape()[0];
    if (W.shape()[1] != in)
        throw std::invalid_argument("linear: dim mismatch");
    std::vector<double> y(out, 0.0);
    Eigen::Map<const Eigen::MatrixXd> Wm(W.values().data(), in, out);  // col-major view of row-major (out,in)
    Eigen::Map<const Eigen::VectorXd> xv(x.values().data(), in);
    Eigen::Map<Eigen::VectorXd> yv(y.data(), out);
    yv = Wm.transpose() * xv;
    if (b.defined())
        for (int i = 0; i < out; ++i) y[i] += b.values()[i];

    std::vector<Tensor> inputs{x, W};
    if (b.defined()) inputs.push_back(b);
    return detail::make_op({out}, std::move(y), inputs, [in, out](Node& n) {
        Node& px = *n.parents[0];
        Node& pW = *n.parents[1];
        Eigen::Map<const Eigen::VectorXd> gy(n.grad.data(), out);
        if (px.requires_grad) {
            px.ensure_grad();
            Eigen::Map<const Eigen::MatrixXd> Wm(pW.value.data(), in, out);
            Eigen::Map<Eigen::VectorXd> gx(px.grad.data(), in);
            gx += Wm * gy;
        }
        if (pW.requires_grad) {
            pW.ensure_grad();
            Eigen::Map<const Eigen::VectorXd> xv(px.value.data(), in);
            Eigen::Map<Eigen::MatrixXd> gW(pW.grad.data(), in, out);
            gW += xv * gy.transpose();
        }
        if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
            Node& pb = *n.parents[2];
            pb.ensure_grad();
            for (int i = 0; i < out; ++i) pb.grad[i] += n.grad[i];
        }
    });
}

// L2-normalize a vector; safe for near-zero inputs via epsilon.
inline Tensor l2_normalize(const Tensor& x, double eps = 1e-12) {
    double nrm = 0.0;
    for (double v : x.values()) nrm += v * v;
    nrm = std::sqrt(nrm) + eps;
    std::vector<double> out(x.values().size());
    for (size_t i = 0; i < out.size(); ++i) out[i] = x.values()[i] / nrm;
    return detail::make_op(x.shape(), std::move(out), {x}, [nrm](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        double dot = 0.0;
        for (size_t i = 0; i < n.grad.size(); ++i) dot += n.grad[i] * n.value[i];
        for (size_t i = 0; i < n.grad.size(); ++i)
            p.grad[i] += (n.grad[i] - dot * n.value[i]) / nrm;
    });
}

inline Tensor dot(const Tensor& a, const Tensor& b) {
    detail::check_same_shape(a, b, "dot");
    double s = 0.0;
    for (size_t i = 0; i < a.values().size(); ++i) s += a.values()[i] * b.values()[i];
    return detail::make_op({1}, {s}, {a, b}, [](Node& n) {
        Node& pa = *n.parents[0];
        Node& pb = *n.parents[1];
        if (pa.requires_grad) {
            pa.ensure_grad();
            for (size_t i = 0; i < pa.grad.size(); ++i) pa.grad[i] += n.grad[0] * pb.value[i];
        }
        if (pb.requires_grad) {
            pb.ensure_grad();
            for (size_t i = 0; i < pb.grad.size(); ++i) pb.grad[i] += n.grad[0] * pa.value[i];
        }
    });
}

// ---------------------------------------------------------------------------
// Spatial ops on (C,H,W) maps

inline Tensor global_avg_pool(const Tensor& x) {
    const int C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    const double inv = 1.0 / (H * W);
    std::vector<double> out(C, 0.0);
    for (int c = 0; c < C; ++c) {
        const double* p = x.values().data() + static_cast<size_t>(c) * H * W;
        for (int i = 0; i < H * W; ++i) out[c] += p[i];
        out[c] *= inv;
    }
    return detail::make_op({C}, std::move(out), {x}, [C, H, W, inv](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int c = 0; c < C; ++c) {
            double g = n.grad[c] * inv;
            double* gp = p.grad.data() + static_cast<size_t>(c) * H * W;
            for (int i = 0; i < H * W; ++i) gp[i] += g;
        }
    });
}

// Broadcast a per-channel vector (C) to a map (C,H,W).
inline Tensor broadcast_channels(const Tensor& v, int H, int W) {
    const int C = v.shape()[0];
    std::vector<double> out(static_cast<size_t>(C) * H * W);
    for (int c = 0; c < C; ++c)
        std::fill_n(out.begin() + static_cast<size_t>(c) * H * W, H * W, v.values()[c]);
    return detail::make_op({C, H, W}, std::move(out), {v}, [C, H, W](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int c = 0; c < C; ++c) {
            const double* g = n.grad.data() + static_cast<size_t>(c) * H * W;
            double s = 0.0;
            for (int i = 0; i < H * W; ++i) s += g[i];
            p.grad[c] += s;
        }
    });
}

// Per-channel affine normalization with fixed running statistics
// (batch norm in inference mode). gamma/beta are learnable (C).
inline Tensor batchnorm_affine(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                               const Tensor& running_mean, const Tensor& running_var,
                               double eps = 1e-5) {
    const int C = x.shape()[0];
    const int HW = (x.shape().size() == 3) ? x.shape()[1] * x.shape()[2] : 1;
    std::vector<double> out(x.values().size());
    std::vector<double> inv_std(C);
    for (int c = 0; c < C; ++c)
        inv_std[c] = 1.0 / std::sqrt(running_var.values()[c] + eps);
    for (int c = 0; c < C; ++c) {
        const double a = gamma.values()[c] * inv_std[c];
        const double b = beta.values()[c] - a * running_mean.values()[c];
        const double* px = x.values().data() + static_cast<size_t>(c) * HW;
        double* po = out.data() + static_cast<size_t>(c) * HW;
        for (int i = 0; i < HW; ++i) po[i] = a * px[i] + b;
    }
    return detail::make_op(
        x.shape(), std::move(out), {x, gamma, beta, running_mean, running_var},
        [C, HW, inv_std](Node& n) {
            Node& px = *n.parents[0];
            Node& pg = *n.parents[1];
            Node& pb = *n.parents[2];
            Node& pm = *n.parents[3];
            for (int c = 0; c < C; ++c) {
                const double* g = n.grad.data() + static_cast<size_t>(c) * HW;
                if (px.requires_grad) {
                    px.ensure_grad();
                    double a = pg.value[c] * inv_std[c];
                    double* gx = px.grad.data() + static_cast<size_t>(c) * HW;
                    for (int i = 0; i < HW; ++i) gx[i] += a * g[i];
                }
                if (pg.requires_grad) {
                    pg.ensure_grad();
                    const double* x = px.value.data() + static_cast<size_t>(c) * HW;
                    double s = 0.0;
                    for (int i = 0; i < HW; ++i)
                        s += g[i] * (x[i] - pm.value[c]) * inv_std[c];
                    pg.grad[c] += s;
                }
                if (pb.requires_grad) {
                    pb.ensure_grad();
                    double s = 0.0;
                    for (int i = 0; i < HW; ++i) s += g[i];
                    pb.grad[c] += s;
                }
            }
        });
}

// Grouped 2-D convolution on a single sample.
// x: (Cin,H,W), w: (Cout, Cin/groups, k, k), b: (Cout) or undefined.
inline Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b,
                     int stride, int pad, int groups = 1) {
    const int Cin = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    const int Cout = w.shape()[0], Cg = w.shape()[1], k = w.shape()[2];
    if (Cin % groups != 0 || Cout % groups != 0 || Cg != Cin / groups)
        throw std::invalid_argument("conv2d: group/channel mismatch");
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    if (Ho <= 0 || Wo <= 0) throw std::invalid_argument("conv2d: empty output");

    const int cols_rows = Cg * k * k;
    const int cols_cols = Ho * Wo;
    const int cout_g = Cout / groups;

    // im2col per group, cached for the backward pass.
    auto cols = std::make_shared<std::vector<Eigen::MatrixXd>>(groups);
    std::vector<double> out(static_cast<size_t>(Cout) * Ho * Wo, 0.0);
    for (int g = 0; g < groups; ++g) {
        Eigen::MatrixXd& col = (*cols)[g];
        col.setZero(cols_rows, cols_cols);
        for (int c = 0; c < Cg; ++c) {
            const double* xp = x.values().data() + static_cast<size_t>(g * Cg + c) * H * W;
            for (int ky = 0; ky < k; ++ky)
                for (int kx = 0; kx < k; ++kx) {
                    const int row = (c * k + ky) * k + kx;
                    for (int oy = 0; oy < Ho; ++oy) {
                        const int iy = oy * stride - pad + ky;
                        if (iy < 0 || iy >= H) continue;
                        for (int ox = 0; ox < Wo; ++ox) {
                            const int ix = ox * stride - pad + kx;
                            if (ix < 0 || ix >= W) continue;
                            col(row, oy * Wo + ox) = xp[iy * W + ix];
                        }
                    }
                }
        }
        Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            Wg(w.values().data() + static_cast<size_t>(g * cout_g) * cols_rows, cout_g, cols_rows);
        Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
            Og(out.data() + static_cast<size_t>(g * cout_g) * cols_cols, cout_g, cols_cols);
        Og = Wg * col;
    }
    if (b.defined())
        for (int co = 0; co < Cout; ++co) {
            double* po = out.data() + static_cast<size_t>(co) * Ho * Wo;
            for (int i = 0; i < Ho * Wo; ++i) po[i] += b.values()[co];
        }

    std::vector<Tensor> inputs{x, w};
    if (b.defined()) inputs.push_back(b);
    return detail::make_op(
        {Cout, Ho, Wo}, std::move(out), inputs,
        [=](Node& n) {
            Node& px = *n.parents[0];
            Node& pw = *n.parents[1];
            for (int g = 0; g < groups; ++g) {
                Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                    Gy(n.grad.data() + static_cast<size_t>(g * cout_g) * cols_cols, cout_g, cols_cols);
                if (pw.requires_grad) {
                    pw.ensure_grad();
                    Eigen::Map<Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                        Gw(pw.grad.data() + static_cast<size_t>(g * cout_g) * cols_rows, cout_g, cols_rows);
                    Gw += Gy * (*cols)[g].transpose();
                }
                if (px.requires_grad) {
                    px.ensure_grad();
                    Eigen::Map<const Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>>
                        Wg(pw.value.data() + static_cast<size_t>(g * cout_g) * cols_rows, cout_g, cols_rows);
                    Eigen::MatrixXd Gcol = Wg.transpose() * Gy;  // (cols_rows, cols_cols)
                    // col2im
                    for (int c = 0; c < Cg; ++c) {
                        double* gx = px.grad.data() + static_cast<size_t>(g * Cg + c) * H * W;
                        for (int ky = 0; ky < k; ++ky)
                            for (int kx = 0; kx < k; ++kx) {
                                const int row = (c * k + ky) * k + kx;
                                for (int oy = 0; oy < Ho; ++oy) {
                                    const int iy = oy * stride - pad + ky;
                                    if (iy < 0 || iy >= H) continue;
                                    for (int ox = 0; ox < Wo; ++ox) {
                                        const int ix = ox * stride - pad + kx;
                                        if (ix < 0 || ix >= W) continue;
                                        gx[iy * W + ix] += Gcol(row, oy * Wo + ox);
                                    }
                                }
                            }
                    }
                }
            }
            if (n.parents.size() > 2 && n.parents[2]->requires_grad) {
                Node& pb = *n.parents[2];
                pb.ensure_grad();
                for (int co = 0; co < Cout; ++co) {
                    const double* g = n.grad.data() + static_cast<size_t>(co) * Ho * Wo;
                    double s = 0.0;
                    for (int i = 0; i < Ho * Wo; ++i) s += g[i];
                    pb.grad[co] += s;
                }
            }
        });
}

inline Tensor maxpool2d(const Tensor& x, int k, int stride, int pad) {
    const int C = x.shape()[0], H = x.shape()[1], W = x.shape()[2];
    const int Ho = (H + 2 * pad - k) / stride + 1;
    const int Wo = (W + 2 * pad - k) / stride + 1;
    std::vector<double> out(static_cast<size_t>(C) * Ho * Wo);
    auto argmax = std::make_shared<std::vector<int>>(out.size());
    for (int c = 0; c < C; ++c) {
        const double* xp = x.values().data() + static_cast<size_t>(c) * H * W;
        for (int oy = 0; oy < Ho; ++oy)
            for (int ox = 0; ox < Wo; ++ox) {
                double best = -std::numeric_limits<double>::infinity();
                int best_idx = -1;
                for (int ky = 0; ky < k; ++ky) {
                    const int iy = oy * stride - pad + ky;
                    if (iy < 0 || iy >= H) continue;
                    for (int kx = 0; kx < k; ++kx) {
                        const int ix = ox * stride - pad + kx;
                        if (ix < 0 || ix >= W) continue;
                        if (xp[iy * W + ix] > best) {
                            best = xp[iy * W + ix];
                            best_idx = iy * W + ix;
                        }
                    }
                }
                const size_t o = (static_cast<size_t>(c) * Ho + oy) * Wo + ox;
                out[o] = best;
                (*argmax)[o] = best_idx;
            }
    }
    return detail::make_op({C, Ho, Wo}, std::move(out), {x}, [argmax, C, H, W, Ho, Wo](Node& n) {
        Node& p = *n.parents[0];
        if (!p.requires_grad) return;
        p.ensure_grad();
        for (int c = 0; c < C; ++c)
            for (int i = 0; i < Ho * Wo; ++i) {
                const size_t o = static_cast<size_t>(c) * Ho * Wo + i;
                if ((*argmax)[o] >= 0)
                    p.grad[static_cast<size_t>(c) * H * W + (*argmax)[o]] += n.grad[o];
            }
    });
}

}  // namespace ad
}  // namespace dmskit
