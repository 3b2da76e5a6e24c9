// eval.hpp
//
// Evaluation metrics (accuracy, AUC-ROC, AUC-PR, row-normalized confusion
// matrix) and the end-to-end evaluation loop over a manifest.

#pragma once

#include "core.hpp"
#include "data.hpp"
#include "models.hpp"
#include "openset.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <array>
#include <fstream>
#include <numeric>
#include <stdexcept>
#include <vector>

namespace dmskit::eval {

inline double accuracy(const std::vector<ClassLabel>& preds,
                       const std::vector<ClassLabel>& truths) {
    if (preds.size() != truths.size())
        throw std::invalid_argument("accuracy: length mismatch");
    if (preds.empty()) throw std::invalid_argument("accuracy: empty input");
    size_t hits = 0;
    for (size_t i = 0; i < preds.size(); ++i)
        if (preds[i] == truths[i]) ++hits;
    return static_cast<double>(hits) / static_cast<double>(preds.size());
}

// Mann-Whitney form: probability a random positive outranks a random
// negative, ties counted one half. Computed via rank sums.
inline double auc_roc(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auc_roc: bad input lengths");
    long n_pos = 0, n_neg = 0;
    for (int l : labels) (l ? n_pos : n_neg)++;
    if (n_pos == 0 || n_neg == 0)
        throw std::invalid_argument("auc_roc: both label values must be present");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    // average ranks over tie groups
    std::vector<double> rank(scores.size());
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        const double avg = (static_cast<double>(i) + static_cast<double>(j)) / 2.0 + 1.0;
        for (size_t k = i; k <= j; ++k) rank[order[k]] = avg;
        i = j + 1;
    }
    double rank_sum_pos = 0.0;
    for (size_t k = 0; k < labels.size(); ++k)
        if (labels[k]) rank_sum_pos += rank[k];
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (n_pos + 1) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Average precision: step-wise integration over all distinct thresholds,
// descending. AP = sum_k (R_k - R_{k-1}) * P_k.
inline double auc_pr(const std::vector<double>& scores, const std::vector<int>& labels) {
    if (scores.size() != labels.size() || scores.empty())
        throw std::invalid_argument("auc_pr: bad input lengths");
    long n_pos = 0;
    for (int l : labels) n_pos += (l != 0);
    if (n_pos == 0) throw std::invalid_argument("auc_pr: no positive samples");

    std::vector<size_t> order(scores.size());
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] > scores[b]; });

    double ap = 0.0;
    double prev_recall = 0.0;
    long tp = 0, fp = 0;
    size_t i = 0;
    while (i < order.size()) {
        size_t j = i;
        while (j + 1 < order.size() && scores[order[j + 1]] == scores[order[i]]) ++j;
        for (size_t k = i; k <= j; ++k)
            (labels[order[k]] ? tp : fp)++;
        const double recall = static_cast<double>(tp) / static_cast<double>(n_pos);
        const double precision = static_cast<double>(tp) / static_cast<double>(tp + fp);
        ap += (recall - prev_recall) * precision;
        prev_recall = recall;
        i = j + 1;
    }
    return ap;
}

// Row-normalized 8x8 confusion matrix. Rows with zero support stay all-zero
// and are reported in `unsupported_rows`.
struct ConfusionMatrix {
    std::array<std::array<double, kNumTestClasses>, kNumTestClasses> rows{};
    std::vector<int> unsupported_rows;  // 1-based class values

    double at(int truth, int pred) const { return rows[truth - 1][pred - 1]; }
};

inline ConfusionMatrix confusion_matrix(const std::vector<ClassLabel>& preds,
                                        const std::vector<ClassLabel>& truths) {
    if (preds.size() != truths.size())
        throw std::invalid_argument("confusion_matrix: length mismatch");
    ConfusionMatrix cm;
    std::array<long, kNumTestClasses> support{};
    for (size_t i = 0; i < preds.size(); ++i) {
        cm.rows[truths[i].value - 1][preds[i].value - 1] += 1.0;
        ++support[truths[i].value - 1];
    }
    for (int r = 0; r < kNumTestClasses; ++r) {
        if (support[r] == 0) {
            cm.unsupported_rows.push_back(r + 1);
            continue;
        }
        for (int c = 0; c < kNumTestClasses; ++c)
            cm.rows[r][c] /= static_cast<double>(support[r]);
    }
    return cm;
}

// ---------------------------------------------------------------------------
// Evaluation loop

enum class InferenceRule { GAMMA, TWO_THRESHOLD };

struct EvalConfig {
    InferenceRule rule = InferenceRule::GAMMA;
    double gamma = 0.5;
    double t1 = 0.5;
    double t2 = 0.5;
    long stride = 16;
    std::uint64_t seed = 7;
};

struct MetricsReport {
    double accuracy = 0.0;          // multiclass over all windows
    double seen_accuracy = 0.0;     // closed-set accuracy over seen-class windows
    double unseen_recall = 0.0;     // fraction of c8 windows predicted c8
    double binary_accuracy = 0.0;   // binary score thresholded at 0.5
    double auc_roc = 0.0;
    double auc_pr = 0.0;
    ConfusionMatrix confusion;
    std::array<double, kNumTestClasses> per_class_recall{};
    std::string config_hash;
    std::uint64_t seed = 0;
    long n_windows = 0;
};

inline void check_rule_head(InferenceRule rule, HeadType head) {
    if (rule == InferenceRule::TWO_THRESHOLD && head != HeadType::POSTERIOR)
        throw std::invalid_argument("two-threshold rule requires the posterior head");
}

inline MetricsReport evaluate_run(const models::Model& model,
                                  const data::DatasetManifest& man,
                                  const EvalConfig& cfg) {
    check_rule_head(cfg.rule, model.spec().head);
    auto windows = data::window_clips(man, cfg.stride);
    if (windows.empty()) throw std::invalid_argument("evaluate_run: no windows");

    std::vector<ClassLabel> preds, truths;
    std::vector<double> bin_scores;
    std::vector<int> bin_labels;
    long seen_total = 0, seen_hits = 0, unseen_total = 0, unseen_hits = 0;
    long bin_hits = 0;

    for (const auto& w : windows) {
        Clip clip = data::load_clip(man, w, model.spec().modalities);
        ScoreVector y = model.predict(clip);
        ClassLabel pred = (cfg.rule == InferenceRule::GAMMA)
                              ? openset::predict_class_gamma(y, cfg.gamma)
                              : openset::predict_class_two_threshold(y, cfg.t1, cfg.t2);
        preds.push_back(pred);
        truths.push_back(w.label);

        const double s = openset::binary_score(y, model.spec().head);
        bin_scores.push_back(s);
        const int is_ndra = (w.label.value != 1) ? 1 : 0;  // binary truth = (label != c1)
        bin_labels.push_back(is_ndra);
        bin_hits += ((s >= 0.5 ? 1 : 0) == is_ndra);

        if (w.label.is_unseen()) {
            ++unseen_total;
            unseen_hits += pred.is_unseen();
        } else {
            ++seen_total;
            // closed-set check: argmax over seen classes only
            ClassLabel closed = openset::predict_class_gamma(y, 0.0);
            seen_hits += (closed == w.label);
        }
    }

    MetricsReport rep;
    rep.n_windows = static_cast<long>(windows.size());
    rep.accuracy = accuracy(preds, truths);
    rep.seen_accuracy = seen_total ? static_cast<double>(seen_hits) / seen_total : 0.0;
    rep.unseen_recall = unseen_total ? static_cast<double>(unseen_hits) / unseen_total : 0.0;
    rep.binary_accuracy = static_cast<double>(bin_hits) / static_cast<double>(windows.size());
    const bool both = std::count(bin_labels.begin(), bin_labels.end(), 1) > 0 &&
                      std::count(bin_labels.begin(), bin_labels.end(), 0) > 0;
    rep.auc_roc = both ? auc_roc(bin_scores, bin_labels) : 0.0;
    rep.auc_pr = std::count(bin_labels.begin(), bin_labels.end(), 1) > 0
                     ? auc_pr(bin_scores, bin_labels)
                     : 0.0;
    rep.confusion = confusion_matrix(preds, truths);
    for (int c = 1; c <= kNumTestClasses; ++c)
        rep.per_class_recall[c - 1] = rep.confusion.at(c, c);
    rep.seed = cfg.seed;
    return rep;
}

inline nlohmann::json report_to_json(const MetricsReport& rep) {
    nlohmann::json j;
    j["accuracy"] = rep.accuracy;
    j["seen_accuracy"] = rep.seen_accuracy;
    j["unseen_recall"] = rep.unseen_recall;
    j["binary_accuracy"] = rep.binary_accuracy;
    j["auc_roc"] = rep.auc_roc;
    j["auc_pr"] = rep.auc_pr;
    j["n_windows"] = rep.n_windows;
    j["config_hash"] = rep.config_hash;
    j["seed"] = rep.seed;
    j["per_class_recall"] = rep.per_class_recall;
    std::vector<std::vector<double>> cm;
    for (const auto& row : rep.confusion.rows)
        cm.emplace_back(row.begin(), row.end());
    j["confusion_matrix"] = cm;
    j["unsupported_rows"] = rep.confusion.unsupported_rows;
    return j;
}

}  // namespace dmskit::eval
