#include <dmskit/losses.hpp>
#include <doctest.h>

#include "fd_check.hpp"

#include <random>

using namespace dmskit;
using ad::Tensor;
using dmskit::testutil::fd_check;

namespace {

Tensor posterior_scores(double p_normal, const std::array<double, 6>& cond) {
    std::vector<double> v{p_normal};
    v.insert(v.end(), cond.begin(), cond.end());
    return Tensor::from_values({kNumTrainClasses}, std::move(v));
}

// Double-loop SupCon oracle on plain doubles.
double supcon_oracle(const std::vector<std::vector<double>>& raw,
                     const std::vector<ClassLabel>& labels, double tau) {
    const size_t n = raw.size();
    std::vector<std::vector<double>> z = raw;
    for (auto& e : z) {
        double nrm = 0.0;
        for (double v : e) nrm += v * v;
        nrm = std::sqrt(nrm) + 1e-12;
        for (auto& v : e) v /= nrm;
    }
    auto sim = [&](size_t a, size_t b) {
        double s = 0.0;
        for (size_t k = 0; k < z[a].size(); ++k) s += z[a][k] * z[b][k];
        return s / tau;
    };
    double total = 0.0;
    int anchors = 0;
    for (size_t i = 0; i < n; ++i) {
        std::vector<size_t> pos;
        for (size_t p = 0; p < n; ++p)
            if (p != i && labels[p] == labels[i]) pos.push_back(p);
        if (pos.empty()) continue;
        double denom = 0.0;
        for (size_t a = 0; a < n; ++a)
            if (a != i) denom += std::exp(sim(i, a));
        double li = 0.0;
        for (size_t p : pos) li += std::log(std::exp(sim(i, p)) / denom);
        total += -li / static_cast<double>(pos.size());
        ++anchors;
    }
    return total / anchors;
}

}  // namespace

TEST_CASE("posterior CE hand-derived values") {
    const std::array<double, 6> uniform{1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6};
    Tensor y = posterior_scores(0.5, uniform);

    // c1 at y0 = 0.5: -ln 0.5 = ln 2
    double l1 = losses::posterior_cross_entropy_t(y, ClassLabel(1)).item();
    CHECK(l1 == doctest::Approx(std::log(2.0)).epsilon(1e-6));

    // c2 with uniform conditionals: -ln(1/6 * 1/2) = ln 12 ~= 2.4849
    double l2 = losses::posterior_cross_entropy_t(y, ClassLabel(2)).item();
    CHECK(l2 == doctest::Approx(std::log(12.0)).epsilon(1e-6));
    CHECK(l2 == doctest::Approx(2.4849).epsilon(1e-4));

    // every seen NDRA with uniform conditionals costs the same
    for (int c = 3; c <= 7; ++c)
        CHECK(losses::posterior_cross_entropy_t(y, ClassLabel(c)).item() ==
              doctest::Approx(std::log(12.0)).epsilon(1e-6));
}

TEST_CASE("posterior CE front-end matches the tensor form") {
    ScoreVector y;
    y[0] = 0.5;
    for (int i = 1; i < kNumTrainClasses; ++i) y[i] = 1.0 / 6.0;
    CHECK(losses::posterior_cross_entropy(y, ClassLabel(2)).value ==
          doctest::Approx(std::log(12.0)).epsilon(1e-9));
    CHECK(losses::posterior_cross_entropy(y, ClassLabel(1)).per_sample.size() == 1);
}

TEST_CASE("flat CE is -ln p[target]") {
    std::vector<double> p{0.1, 0.2, 0.4, 0.1, 0.1, 0.05, 0.05};
    Tensor y = Tensor::from_values({kNumTrainClasses}, std::vector<double>(p));
    for (int c = 1; c <= 7; ++c)
        CHECK(losses::flat_cross_entropy_t(y, ClassLabel(c)).item() ==
              doctest::Approx(-std::log(p[c - 1])).epsilon(1e-9));
}

TEST_CASE("losses reject c8 targets and non-finite predictions") {
    Tensor y = posterior_scores(0.5, {1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6, 1.0 / 6});
    CHECK_THROWS_AS(losses::posterior_cross_entropy_t(y, ClassLabel(8)),
                    std::invalid_argument);
    CHECK_THROWS_AS(losses::flat_cross_entropy_t(y, ClassLabel(8)), std::invalid_argument);

    Tensor bad = Tensor::from_values({kNumTrainClasses},
                                     {0.5, std::nan(""), 0.1, 0.1, 0.1, 0.1, 0.1});
    CHECK_THROWS_AS(losses::posterior_cross_entropy_t(bad, ClassLabel(2)),
                    std::invalid_argument);
}

TEST_CASE("probability clamp keeps losses finite at the extremes") {
    Tensor zero = posterior_scores(0.0, {0.0, 0.2, 0.2, 0.2, 0.2, 0.2});
    CHECK(std::isfinite(losses::posterior_cross_entropy_t(zero, ClassLabel(1)).item()));
    CHECK(std::isfinite(losses::posterior_cross_entropy_t(zero, ClassLabel(2)).item()));
    // -ln(clamp) = -ln(1e-7)
    CHECK(losses::posterior_cross_entropy_t(zero, ClassLabel(1)).item() ==
          doctest::Approx(-std::log(losses::kProbClamp)).epsilon(1e-9));
}

TEST_CASE("gradients of both cross-entropies") {
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> d(0.05, 0.9);
    for (int c : {1, 2, 5, 7}) {
        std::vector<double> v(kNumTrainClasses);
        for (auto& x : v) x = d(rng);
        Tensor y = Tensor::from_values({kNumTrainClasses}, std::move(v), true);
        fd_check({y}, [&] { return losses::posterior_cross_entropy_t(y, ClassLabel(c)); });
        fd_check({y}, [&] { return losses::flat_cross_entropy_t(y, ClassLabel(c)); });
    }
}

TEST_CASE("SupCon matches the double-loop oracle (batch of 8)") {
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    for (double tau : {0.1, 0.5}) {
        std::vector<std::vector<double>> raw;
        std::vector<ClassLabel> labels;
        std::vector<Tensor> ts;
        for (int i = 0; i < 8; ++i) {
            std::vector<double> e(16);
            for (auto& v : e) v = d(rng);
            raw.push_back(e);
            labels.push_back(ClassLabel(i % 4 + 1));
            ts.push_back(Tensor::from_values({16}, std::move(e)));
        }
        const double got = losses::supervised_contrastive_t(ts, labels, tau).item();
        CHECK(got == doctest::Approx(supcon_oracle(raw, labels, tau)).epsilon(1e-9));
        CHECK(losses::supervised_contrastive(raw, labels, tau).value ==
              doctest::Approx(got).epsilon(1e-12));
    }
}

TEST_CASE("SupCon skips anchors without positives and rejects degenerate batches") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    auto make = [&](int n) {
        std::vector<Tensor> ts;
        for (int i = 0; i < n; ++i) {
            std::vector<double> e(8);
            for (auto& v : e) v = d(rng);
            ts.push_back(Tensor::from_values({8}, std::move(e)));
        }
        return ts;
    };

    // one singleton class among pairs: still finite, the singleton is skipped
    auto ts = make(5);
    std::vector<ClassLabel> labels{ClassLabel(1), ClassLabel(1), ClassLabel(2), ClassLabel(2),
                                   ClassLabel(3)};
    CHECK(std::isfinite(losses::supervised_contrastive_t(ts, labels, 0.1).item()));

    // all-distinct labels: no anchor has a positive
    auto ts4 = make(4);
    std::vector<ClassLabel> distinct{ClassLabel(1), ClassLabel(2), ClassLabel(3), ClassLabel(4)};
    CHECK_THROWS_AS(losses::supervised_contrastive_t(ts4, distinct, 0.1),
                    std::invalid_argument);

    CHECK_THROWS_AS(losses::supervised_contrastive_t(make(1), {ClassLabel(1)}, 0.1),
                    std::invalid_argument);
    CHECK_THROWS_AS(losses::supervised_contrastive_t(ts, labels, 0.0), std::invalid_argument);
}

TEST_CASE("SupCon gradients (batch 8, dim 16)") {
    std::mt19937_64 rng(4);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<Tensor> ts;
    std::vector<ClassLabel> labels;
    for (int i = 0; i < 8; ++i) {
        std::vector<double> e(16);
        for (auto& v : e) v = d(rng);
        ts.push_back(Tensor::from_values({16}, std::move(e), true));
        labels.push_back(ClassLabel(i % 2 + 1));
    }
    fd_check(ts, [&] { return losses::supervised_contrastive_t(ts, labels, 0.1); });
}

TEST_CASE("SupCon is permutation invariant") {
    std::mt19937_64 rng(5);
    std::uniform_real_distribution<double> d(-1.0, 1.0);
    std::vector<Tensor> ts;
    std::vector<ClassLabel> labels;
    for (int i = 0; i < 6; ++i) {
        std::vector<double> e(8);
        for (auto& v : e) v = d(rng);
        ts.push_back(Tensor::from_values({8}, std::move(e)));
        labels.push_back(ClassLabel(i % 3 + 1));
    }
    const double base = losses::supervised_contrastive_t(ts, labels, 0.1).item();
    std::vector<size_t> perm{3, 1, 5, 0, 4, 2};
    std::vector<Tensor> ts2;
    std::vector<ClassLabel> labels2;
    for (size_t i : perm) {
        ts2.push_back(ts[i]);
        labels2.push_back(labels[i]);
    }
    CHECK(losses::supervised_contrastive_t(ts2, labels2, 0.1).item() ==
          doctest::Approx(base).epsilon(1e-12));
}
