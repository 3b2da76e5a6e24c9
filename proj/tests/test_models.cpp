#include <dmskit/models.hpp>
#include <doctest.h>

#include <random>

using namespace dmskit;
using namespace dmskit::models;
using ad::Tensor;

namespace {

Clip random_clip(const std::vector<Modality>& mods, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> d(0.0, 255.0);
    Clip clip;
    for (const Modality& m : mods) {
        auto& frames = clip.frames[m];
        for (int t = 0; t < kClipLength; ++t) {
            Frame f = Frame::constant(0.0);
            for (auto& v : f.pixels) v = d(rng);
            frames.push_back(std::move(f));
        }
    }
    return clip;
}

ModelSpec tiny_fusion_spec(FusionVariant variant, const std::vector<Modality>& mods) {
    ModelSpec s;
    s.topology = Topology::FEATURE_FUSION;
    s.fusion_variant = variant;
    s.modalities = mods;
    s.encoder = EncoderSpec::make(Architecture::TINY_CNN);
    return s;
}

}  // namespace

TEST_CASE("spec validation") {
    ModelSpec s;
    s.topology = Topology::UNIMODAL;
    s.modalities = {Modality::all()[0], Modality::all()[1]};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);

    s.topology = Topology::FEATURE_FUSION;
    s.modalities = {Modality::all()[0]};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);

    s.modalities = {Modality::all()[0], Modality::all()[0]};
    CHECK_THROWS_AS(s.validate(), std::invalid_argument);

    s.modalities = {Modality::all()[0], Modality::all()[1]};
    CHECK_NOTHROW(s.validate());
    CHECK(parse_topology(topology_str(Topology::DECISION_FUSION)) ==
          Topology::DECISION_FUSION);
}

TEST_CASE("frame_to_input normalizes and replicates channels") {
    Frame f = Frame::constant(127.5);
    Tensor x = frame_to_input(f, NormStats{0.5, 0.25});
    CHECK(x.shape() == Shape{3, kFrameHeight, kFrameWidth});
    // (127.5/255 - 0.5)/0.25 = 0
    for (size_t i = 0; i < 10; ++i) CHECK(x.values()[i] == doctest::Approx(0.0));
    const size_t n = f.pixels.size();
    f.at(0, 0) = 255.0;
    Tensor y = frame_to_input(f, NormStats{0.5, 0.25});
    CHECK(y.values()[0] == doctest::Approx(2.0));
    CHECK(y.values()[n] == doctest::Approx(2.0));      // channel 2 replica
    CHECK(y.values()[2 * n] == doctest::Approx(2.0));  // channel 3 replica
}

TEST_CASE("last_frame demands a complete clip") {
    Modality m = Modality::all()[0];
    Clip clip = random_clip({m}, 1);
    CHECK_NOTHROW(last_frame(clip, m));
    CHECK_THROWS_AS(last_frame(clip, Modality::all()[1]), std::invalid_argument);
    clip.frames[m].pop_back();
    CHECK_THROWS_AS(last_frame(clip, m), std::invalid_argument);
}

TEST_CASE("unimodal predict yields a valid simplex score") {
    ModelSpec s;  // tiny-cnn unimodal flat by default
    Model model(s, 11);
    Clip clip = random_clip(s.modalities, 2);
    ScoreVector y = model.predict(clip);
    CHECK_FALSE(y.validate(HeadType::FLAT_SOFTMAX).has_value());
}

TEST_CASE("posterior head satisfies the posterior contract") {
    ModelSpec s;
    s.head = HeadType::POSTERIOR;
    Model model(s, 12);
    ScoreVector y = model.predict(random_clip(s.modalities, 3));
    CHECK_FALSE(y.validate(HeadType::POSTERIOR).has_value());
}

TEST_CASE("feature fusion (AFF and iAFF) produces valid scores") {
    std::vector<Modality> mods{Modality::all().begin(), Modality::all().end()};
    for (auto variant : {FusionVariant::AFF, FusionVariant::IAFF}) {
        Model model(tiny_fusion_spec(variant, mods), 13);
        ScoreVector y = model.predict(random_clip(mods, 4));
        CHECK_FALSE(y.validate(HeadType::FLAT_SOFTMAX).has_value());
    }
}

TEST_CASE("decision fusion averages per-modality scores") {
    std::vector<Modality> mods{Modality::all().begin(), Modality::all().end()};
    ModelSpec s;
    s.topology = Topology::DECISION_FUSION;
    s.modalities = mods;
    Model model(s, 14);
    ScoreVector y = model.predict(random_clip(mods, 5));
    CHECK_FALSE(y.validate(HeadType::FLAT_SOFTMAX).has_value());
}

TEST_CASE("feature-fusion output is invariant to modality list order") {
    std::vector<Modality> fwd{Modality::all().begin(), Modality::all().end()};
    std::vector<Modality> rev(fwd.rbegin(), fwd.rend());
    Model a(tiny_fusion_spec(FusionVariant::AFF, fwd), 21);
    Model b(tiny_fusion_spec(FusionVariant::AFF, rev), 21);
    Clip clip = random_clip(fwd, 6);
    ScoreVector ya = a.predict(clip);
    ScoreVector yb = b.predict(clip);
    for (int i = 0; i < kNumTrainClasses; ++i)
        CHECK(ya[i] == doctest::Approx(yb[i]).epsilon(1e-10));
}

TEST_CASE("predicting is deterministic and seed-dependent") {
    ModelSpec s;
    Clip clip = random_clip(s.modalities, 7);
    Model m1(s, 5), m2(s, 5), m3(s, 6);
    ScoreVector a = m1.predict(clip), b = m2.predict(clip), c = m3.predict(clip);
    bool differs = false;
    for (int i = 0; i < kNumTrainClasses; ++i) {
        CHECK(a[i] == doctest::Approx(b[i]).epsilon(1e-15));
        differs = differs || std::abs(a[i] - c[i]) > 1e-9;
    }
    CHECK(differs);
}

TEST_CASE("embedding is unit length with the documented dimension") {
    ModelSpec s;
    Model model(s, 15);
    Clip clip = random_clip(s.modalities, 8);
    auto feats = model.forward_features(clip);
    Tensor e = model.embedding(s.modalities[0], feats.at(s.modalities[0]));
    CHECK(e.shape() == Shape{Model::kProjectionDim});
    double nrm = 0.0;
    for (double v : e.values()) nrm += v * v;
    CHECK(nrm == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("parameter groups are disjoint and checkpoints carry norm stats") {
    ModelSpec s;
    Model model(s, 16);
    auto enc = model.encoder_params();
    auto head = model.head_params();
    for (const auto& [k, v] : enc) CHECK(head.count(k) == 0);
    auto all = model.all_params();
    CHECK(all.size() == enc.size() + head.size() + s.modalities.size());
    CHECK(all.count("norm." + s.modalities[0].str()) == 1);
}

TEST_CASE("norm stats round-trip through the tensor form") {
    ModelSpec s;
    Model model(s, 17);
    model.set_norm_from_tensor(s.modalities[0].str(), {0.4, 0.3});
    const NormStats got = model.norm_stats(s.modalities[0]);
    CHECK(got.mean == doctest::Approx(0.4));
    CHECK(got.std == doctest::Approx(0.3));
}

TEST_CASE("pipeline flops grow with modality count and fusion stage count") {
    std::vector<Modality> mods{Modality::all().begin(), Modality::all().end()};
    ModelSpec uni;
    Model u(uni, 18);
    Model aff(tiny_fusion_spec(FusionVariant::AFF, mods), 18);
    Model iaff(tiny_fusion_spec(FusionVariant::IAFF, mods), 18);
    const auto fu = u.flops().total();
    const auto fa = aff.flops().total();
    const auto fi = iaff.flops().total();
    CHECK(fa > 3 * fu);
    CHECK(fi > fa);
    CHECK(u.feature_shape() == Shape{64, 11, 14});
}
