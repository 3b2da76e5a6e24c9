#include <dmskit/analysis.hpp>
#include <doctest.h>

#include <filesystem>
#include <random>

using namespace dmskit;
namespace fs = std::filesystem;

namespace {

Frame random_frame(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> d(0, 255);
    Frame f = Frame::constant(0.0);
    for (auto& v : f.pixels) v = d(rng);
    return f;
}

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("dmskit_ana_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("identity cases over 50 random frames") {
    std::mt19937_64 rng(1);
    for (int i = 0; i < 50; ++i) {
        Frame f = random_frame(rng);
        CHECK(analysis::ssim(f, f) == doctest::Approx(1.0).epsilon(1e-12));
        CHECK(analysis::pixel_rmse(f, f) == doctest::Approx(0.0));
        CHECK(analysis::histogram_similarity(f, f) == doctest::Approx(1.0).epsilon(1e-12));
    }
}

TEST_CASE("rmse oracle on constant frames") {
    Frame a = Frame::constant(100.0);
    Frame b = Frame::constant(150.0);
    CHECK(analysis::pixel_rmse(a, b) == doctest::Approx(50.0).epsilon(1e-12));
    // disjoint constant histograms intersect nowhere
    CHECK(analysis::histogram_similarity(a, b) == doctest::Approx(0.0));
}

TEST_CASE("constant-images SSIM matches the closed form") {
    // For constant images with values p, q: variances and covariance vanish,
    // so SSIM = (2pq + C1) / (p^2 + q^2 + C1) at every window.
    const double p = 100.0, q = 150.0;
    const double C1 = (0.01 * 255) * (0.01 * 255);
    const double closed = (2 * p * q + C1) / (p * p + q * q + C1);
    Frame a = Frame::constant(p);
    Frame b = Frame::constant(q);
    CHECK(analysis::ssim(a, b) == doctest::Approx(closed).epsilon(1e-4));
    CHECK(closed == doctest::Approx(0.9231).epsilon(1e-3));
}

TEST_CASE("ssim is symmetric and bounded above by 1") {
    std::mt19937_64 rng(2);
    for (int i = 0; i < 10; ++i) {
        Frame a = random_frame(rng);
        Frame b = random_frame(rng);
        const double s = analysis::ssim(a, b);
        CHECK(s == doctest::Approx(analysis::ssim(b, a)).epsilon(1e-12));
        CHECK(s <= 1.0 + 1e-12);
    }
}

TEST_CASE("metric input validation") {
    Frame f = Frame::constant(0.0);
    Frame small = Frame::constant(0.0, 8, 8);
    CHECK_THROWS_AS(analysis::pixel_rmse(f, small), std::invalid_argument);
    CHECK_THROWS_AS(analysis::histogram_similarity(f, small), std::invalid_argument);
    CHECK_THROWS_AS(analysis::ssim(f, small), std::invalid_argument);
    CHECK_THROWS_AS(analysis::ssim(small, small), std::invalid_argument);
}

TEST_CASE("frozen-frame dataset gives the degenerate table in every cell") {
    TempDir tmp;
    data::SynthConfig cfg;
    cfg.out_dir = tmp.path;
    cfg.per_class_train = 1;
    cfg.per_class_test = 1;
    cfg.frozen_frames = true;
    cfg.modalities = {Modality{View::TOP, Stream::IR}, Modality{View::FRONT, Stream::IR}};
    data::synth_generate(cfg);

    auto man = data::load_manifest(tmp.path / "train/train.csv", data::Split::TRAIN);
    auto rep = analysis::similarity_report(man);
    REQUIRE(rep.cells.size() == kNumTrainClasses);
    for (const auto& [cls, row] : rep.cells) {
        REQUIRE(row.size() == cfg.modalities.size());
        for (const auto& [mod, cell] : row) {
            CHECK(cell.hist == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(cell.rmse == doctest::Approx(0.0));
            CHECK(cell.ssim == doctest::Approx(1.0).epsilon(1e-12));
            CHECK(cell.pairs == kClipLength - 1);
        }
    }
}

TEST_CASE("moving glyphs produce non-degenerate similarity and unseen rows are excluded") {
    TempDir tmp;
    data::SynthConfig cfg;
    cfg.out_dir = tmp.path;
    cfg.per_class_train = 1;
    cfg.per_class_test = 1;
    cfg.modalities = {Modality{View::TOP, Stream::IR}};
    data::synth_generate(cfg);

    auto man = data::load_manifest(tmp.path / "test/test.csv", data::Split::TEST);
    auto rep = analysis::similarity_report(man);
    CHECK(rep.cells.size() == kNumTrainClasses);  // c8 excluded
    CHECK(rep.cells.count(8) == 0);
    for (const auto& [cls, row] : rep.cells)
        for (const auto& [mod, cell] : row) {
            CHECK(cell.rmse > 0.0);
            CHECK(cell.ssim < 1.0);
        }

    // writers produce the table files
    analysis::write_similarity_csv(rep, (tmp.path / "t.csv").string());
    analysis::write_similarity_json(rep, (tmp.path / "t.json").string());
    CHECK(fs::exists(tmp.path / "t.csv"));
    CHECK(fs::exists(tmp.path / "t.json"));
}

TEST_CASE("similarity_report rejects unusable manifests") {
    data::DatasetManifest man;
    CHECK_THROWS_AS(analysis::similarity_report(man), std::invalid_argument);
    man.records.push_back({"v", 0, 15, "Drinking"});
    CHECK_THROWS_AS(analysis::similarity_report(man), std::invalid_argument);
}
