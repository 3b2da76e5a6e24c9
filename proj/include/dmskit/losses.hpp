// losses.hpp
//
// Training objectives: posterior cross-entropy over the factorized head
// output, the supervised contrastive loss on encoder embeddings, and plain
// cross-entropy for the flat softmax head. All probabilities are clamped
// to [1e-7, 1-1e-7] before logarithms.

#pragma once

#include "core.hpp"
#include "tensor.hpp"

#include <cmath>
#include <stdexcept>
#include <vector>

namespace dmskit::losses {

using ad::Tensor;

inline constexpr double kProbClamp = 1e-7;

struct LossValue {
    double value = 0.0;
    std::vector<double> per_sample;
};

namespace detail {

inline void check_target(const ClassLabel& y) {
    if (y.is_unseen())
        throw std::invalid_argument("c8 is not a valid training target");
}

inline void check_finite(const Tensor& y) {
    for (double v : y.values())
        if (!std::isfinite(v))
            throw std::invalid_argument("non-finite prediction");
}

}  // namespace detail

// Posterior head: y[0] = P[c1], y[1..6] = P[c_i | NDRA].
// loss(c1) = -ln y[0]; loss(c_i, i>=2) = -ln( y[i-1] * (1 - y[0]) ).
inline Tensor posterior_cross_entropy_t(const Tensor& y_pred, const ClassLabel& y_true) {
    detail::check_target(y_true);
    detail::check_finite(y_pred);
    Tensor p_normal = ad::slice(y_pred, 0, 1);
    if (y_true.value == 1)
        return ad::scale(ad::log_clamped(p_normal, kProbClamp, 1.0 - kProbClamp), -1.0);
    Tensor cond = ad::slice(y_pred, y_true.value - 1, 1);
    Tensor p_ndra = ad::add_scalar(ad::scale(p_normal, -1.0), 1.0);
    Tensor joint = ad::mul(cond, p_ndra);
    return ad::scale(ad::log_clamped(joint, kProbClamp, 1.0 - kProbClamp), -1.0);
}

// Flat head: standard -ln y[true index].
inline Tensor flat_cross_entropy_t(const Tensor& y_pred, const ClassLabel& y_true) {
    detail::check_target(y_true);
    detail::check_finite(y_pred);
    Tensor p = ad::slice(y_pred, y_true.value - 1, 1);
    return ad::scale(ad::log_clamped(p, kProbClamp, 1.0 - kProbClamp), -1.0);
}

// Supervised contrastive loss (SupCon): for each anchor i with positives P(i),
//   L_i = -1/|P(i)| * sum_{p in P(i)} ln( exp(z_i.z_p / tau) / sum_{a != i} exp(z_i.z_a / tau) )
// Anchors without positives are skipped. Embeddings are L2-normalized here.
inline Tensor supervised_contrastive_t(const std::vector<Tensor>& embeddings,
                                       const std::vector<ClassLabel>& labels,
                                       double temperature) {
    if (embeddings.size() < 2 || embeddings.size() != labels.size())
        throw std::invalid_argument("supervised_contrastive: need >= 2 labelled samples");
    if (temperature <= 0.0)
        throw std::invalid_argument("supervised_contrastive: temperature must be positive");
    const size_t n = embeddings.size();

    std::vector<Tensor> z;
    z.reserve(n);
    for (const auto& e : embeddings) z.push_back(ad::l2_normalize(e));

    std::vector<Tensor> anchor_losses;
    for (size_t i = 0; i < n; ++i) {
        std::vector<size_t> positives;
        for (size_t p = 0; p < n; ++p)
            if (p != i && labels[p] == labels[i]) positives.push_back(p);
        if (positives.empty()) continue;

        // log-sum-exp over all a != i
        std::vector<Tensor> sims;  // z_i . z_a / tau
        std::vector<size_t> order;
        for (size_t a = 0; a < n; ++a) {
            if (a == i) continue;
            sims.push_back(ad::scale(ad::dot(z[i], z[a]), 1.0 / temperature));
            order.push_back(a);
        }
        // exp(x_p) / sum exp(x_a) is softmax over the similarity vector;
        // ad::softmax subtracts the max internally for stability.
        Tensor all = ad::concat(sims);
        Tensor probs = ad::softmax(all);
        Tensor acc;
        for (size_t pi = 0; pi < positives.size(); ++pi) {
            size_t idx = 0;
            while (order[idx] != positives[pi]) ++idx;
            Tensor lp = ad::log_clamped(ad::slice(probs, static_cast<int>(idx), 1),
                                        kProbClamp, 1.0);
            acc = (pi == 0) ? lp : ad::add(acc, lp);
        }
        anchor_losses.push_back(
            ad::scale(acc, -1.0 / static_cast<double>(positives.size())));
    }
    if (anchor_losses.empty())
        throw std::invalid_argument("supervised_contrastive: no anchor has a positive");
    Tensor total = anchor_losses[0];
    for (size_t i = 1; i < anchor_losses.size(); ++i)
        total = ad::add(total, anchor_losses[i]);
    return ad::scale(total, 1.0 / static_cast<double>(anchor_losses.size()));
}

// --- ScoreVector front-ends (batch mean + per-sample values) ---------------

inline LossValue posterior_cross_entropy(const ScoreVector& y_pred, const ClassLabel& y_true) {
    Tensor t = Tensor::from_values({kNumTrainClasses},
                                   {y_pred.values.begin(), y_pred.values.end()});
    double v = posterior_cross_entropy_t(t, y_true).item();
    return LossValue{v, {v}};
}

inline LossValue flat_cross_entropy(const ScoreVector& y_pred, const ClassLabel& y_true) {
    Tensor t = Tensor::from_values({kNumTrainClasses},
                                   {y_pred.values.begin(), y_pred.values.end()});
    double v = flat_cross_entropy_t(t, y_true).item();
    return LossValue{v, {v}};
}

inline LossValue supervised_contrastive(const std::vector<std::vector<double>>& embeddings,
                                        const std::vector<ClassLabel>& labels,
                                        double temperature = 0.1) {
    std::vector<Tensor> ts;
    for (const auto& e : embeddings)
        ts.push_back(Tensor::from_values({static_cast<int>(e.size())}, e));
    double v = supervised_contrastive_t(ts, labels, temperature).item();
    return LossValue{v, {v}};
}

}  // namespace dmskit::losses
