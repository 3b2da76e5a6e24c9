// openset.hpp
//
// Test-time inference rules mapping a ScoreVector to a class label c1..c8,
// plus the binary anomaly score used by the AUC metrics.

#pragma once

#include "core.hpp"

#include <stdexcept>

namespace dmskit::openset {

// Flat-head rule: argmax class when max(y) >= gamma, else c8 "unseen".
// Argmax ties break toward the lowest class index.
inline ClassLabel predict_class_gamma(const ScoreVector& y, double gamma) {
    if (gamma < 0.0 || gamma > 1.0)
        throw std::invalid_argument("gamma must lie in [0,1]");
    int best = 0;
    for (int i = 1; i < kNumTrainClasses; ++i)
        if (y[i] > y[best]) best = i;
    if (y[best] >= gamma) return ClassLabel(best + 1);
    return ClassLabel(kNumTestClasses);
}

// Posterior-head rule: c1 if P[c1] >= t1; otherwise the argmax conditional
// class if it clears t2, else c8.
inline ClassLabel predict_class_two_threshold(const ScoreVector& y, double t1, double t2) {
    if (t1 < 0.0 || t1 > 1.0 || t2 < 0.0 || t2 > 1.0)
        throw std::invalid_argument("thresholds must lie in [0,1]");
    if (y[0] >= t1) return ClassLabel(1);
    int best = 1;
    for (int i = 2; i < kNumTrainClasses; ++i)
        if (y[i] > y[best]) best = i;
    if (y[best] >= t2) return ClassLabel(best + 1);
    return ClassLabel(kNumTestClasses);
}

// Binary anomaly score: 1 - P[normal driving]. Identical for both heads
// since y[0] carries P[c1] in each.
inline double binary_score(const ScoreVector& y, HeadType /*head*/) {
    return 1.0 - y[0];
}

}  // namespace dmskit::openset
