#include <dmskit/data.hpp>
#include <doctest.h>

#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <set>

using namespace dmskit;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() /
               ("dmskit_test_" + std::to_string(std::random_device{}()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

void write_csv(const fs::path& p, const std::string& body) {
    std::ofstream out(p);
    out << body;
}

const char* kHeader = "video_id,frame_start,frame_end,activity\n";

}  // namespace

TEST_CASE("label conversion: merged seen vocabulary") {
    using data::convert_label;
    using data::Split;
    CHECK(convert_label("Normal driving", Split::TRAIN) == ClassLabel(1));
    CHECK(convert_label("Talking on the phone - left", Split::TRAIN) == ClassLabel(2));
    CHECK(convert_label("Talking on the phone - right", Split::TRAIN) == ClassLabel(2));
    CHECK(convert_label("Messaging left", Split::TRAIN) == ClassLabel(3));
    CHECK(convert_label("Messaging right", Split::TRAIN) == ClassLabel(3));
    CHECK(convert_label("Talking with passengers", Split::TRAIN) == ClassLabel(4));
    CHECK(convert_label("Reaching behind", Split::TRAIN) == ClassLabel(5));
    CHECK(convert_label("Adjusting radio", Split::TRAIN) == ClassLabel(6));
    CHECK(convert_label("Drinking", Split::TRAIN) == ClassLabel(7));
    // case-insensitive
    CHECK(convert_label("NORMAL DRIVING", Split::TEST) == ClassLabel(1));
}

TEST_CASE("label conversion: unseen activities are test-only") {
    using data::convert_label;
    using data::Split;
    for (const char* a : {"Adjusting side mirror", "Yawning", "Reading",
                          "Looking for something", "Eating", "Sneezing"}) {
        CHECK(convert_label(a, Split::TEST) == ClassLabel(8));
        CHECK_THROWS_AS(convert_label(a, Split::TRAIN), std::invalid_argument);
    }
    CHECK_THROWS_AS(convert_label("juggling", Split::TEST), std::invalid_argument);
    CHECK_THROWS_AS(convert_label("", Split::TRAIN), std::invalid_argument);
}

TEST_CASE("frame paths are zero-padded per modality") {
    const fs::path p =
        data::frame_path("/root/data", "rec1", Modality{View::TOP, Stream::IR}, 42);
    CHECK(p == fs::path("/root/data/rec1/top_ir/000042.png"));
}

TEST_CASE("png round-trip preserves integral pixel values") {
    TempDir tmp;
    Frame f = Frame::constant(0.0);
    std::mt19937_64 rng(1);
    std::uniform_int_distribution<int> d(0, 255);
    for (auto& v : f.pixels) v = d(rng);
    const fs::path p = tmp.path / "f.png";
    data::write_frame_png(p, f);
    Frame g = data::read_frame_png(p);
    REQUIRE(g.pixels.size() == f.pixels.size());
    for (size_t i = 0; i < f.pixels.size(); ++i) CHECK(g.pixels[i] == f.pixels[i]);
    CHECK_THROWS_AS(data::read_frame_png(tmp.path / "missing.png"), std::runtime_error);
}

TEST_CASE("manifest loading validates structure") {
    TempDir tmp;
    const fs::path csv = tmp.path / "m.csv";

    write_csv(csv, "wrong,header\n");
    CHECK_THROWS_WITH_AS(data::load_manifest(csv, data::Split::TRAIN, false),
                         doctest::Contains("bad header"), std::runtime_error);

    write_csv(csv, std::string(kHeader) + "rec1,0,15\n");
    CHECK_THROWS_WITH_AS(data::load_manifest(csv, data::Split::TRAIN, false),
                         doctest::Contains(":2:"), std::runtime_error);

    write_csv(csv, std::string(kHeader) + "rec1,a,15,Drinking\n");
    CHECK_THROWS_AS(data::load_manifest(csv, data::Split::TRAIN, false), std::runtime_error);

    write_csv(csv, std::string(kHeader) + "rec1,20,15,Drinking\n");
    CHECK_THROWS_AS(data::load_manifest(csv, data::Split::TRAIN, false), std::runtime_error);

    // overlapping ranges within one video
    write_csv(csv, std::string(kHeader) + "rec1,0,20,Drinking\nrec1,15,40,Messaging left\n");
    CHECK_THROWS_WITH_AS(data::load_manifest(csv, data::Split::TRAIN, false),
                         doctest::Contains("overlapping"), std::runtime_error);

    // adjacent but disjoint ranges are fine
    write_csv(csv, std::string(kHeader) + "rec1,0,20,Drinking\nrec1,21,40,Messaging left\n");
    auto man = data::load_manifest(csv, data::Split::TRAIN, false);
    CHECK(man.records.size() == 2);

    // vocabulary violations surface with the split rules
    write_csv(csv, std::string(kHeader) + "rec1,0,20,Yawning\n");
    CHECK_THROWS_AS(data::load_manifest(csv, data::Split::TRAIN, false),
                    std::invalid_argument);
    CHECK_NOTHROW(data::load_manifest(csv, data::Split::TEST, false));
}

TEST_CASE("manifest checks every frame on disk when asked") {
    TempDir tmp;
    const fs::path csv = tmp.path / "m.csv";
    write_csv(csv, std::string(kHeader) + "rec1,0,2,Drinking\n");
    std::ofstream(tmp.path / "stats.json") << R"({"top_ir":{"mean":0.5,"std":0.25}})";

    Modality m{View::TOP, Stream::IR};
    Frame f = Frame::constant(1.0);
    data::write_frame_png(data::frame_path(tmp.path, "rec1", m, 0), f);
    data::write_frame_png(data::frame_path(tmp.path, "rec1", m, 2), f);
    // frame 1 missing: endpoint-only checking would miss it
    CHECK_THROWS_WITH_AS(data::load_manifest(csv, data::Split::TRAIN, true),
                         doctest::Contains("missing frame"), std::runtime_error);

    data::write_frame_png(data::frame_path(tmp.path, "rec1", m, 1), f);
    auto man = data::load_manifest(csv, data::Split::TRAIN, true);
    CHECK(man.modalities.size() == 1);
    CHECK(man.stats_for(m).mean == doctest::Approx(0.5));
}

TEST_CASE("window count arithmetic") {
    TempDir tmp;
    const fs::path csv = tmp.path / "m.csv";
    // lengths 16, 15, 48 -> with stride 16: 1 + 0 + 3 windows
    write_csv(csv, std::string(kHeader) +
                       "a,0,15,Drinking\n"
                       "b,0,14,Messaging left\n"
                       "c,100,147,Normal driving\n");
    auto man = data::load_manifest(csv, data::Split::TRAIN, false);

    auto w16 = data::window_clips(man, 16);
    CHECK(w16.size() == 4);

    // stride s on a length-L record yields floor((L-16)/s)+1 windows (L>=16)
    auto w4 = data::window_clips(man, 4);
    CHECK(w4.size() == 1 + 0 + ((48 - 16) / 4 + 1));
    for (const auto& w : w4)
        if (w.video_id == "c") {
            CHECK(w.start >= 100);
            CHECK(w.start + kClipLength - 1 <= 147);
            CHECK(w.label == ClassLabel(1));
        }
    CHECK_THROWS_AS(data::window_clips(man, 0), std::invalid_argument);
}

TEST_CASE("balanced sampler draws min-count per class without replacement") {
    std::vector<ClassLabel> labels;
    for (int i = 0; i < 12; ++i) labels.push_back(ClassLabel(1));
    for (int i = 0; i < 5; ++i) labels.push_back(ClassLabel(2));
    for (int i = 0; i < 9; ++i) labels.push_back(ClassLabel(3));

    auto epoch = data::balanced_sampler(labels, 3);
    CHECK(epoch.size() == 15);  // 3 classes x min count 5
    std::map<ClassLabel, int> counts;
    std::set<size_t> distinct(epoch.begin(), epoch.end());
    CHECK(distinct.size() == epoch.size());
    for (size_t i : epoch) counts[labels[i]]++;
    for (const auto& [c, n] : counts) CHECK(n == 5);

    // deterministic per seed, different across seeds
    CHECK(data::balanced_sampler(labels, 3) == epoch);
    CHECK(data::balanced_sampler(labels, 4) != epoch);
    CHECK_THROWS_AS(data::balanced_sampler({}, 1), std::invalid_argument);
}

TEST_CASE("augmentation keeps shape and the original value range") {
    std::mt19937_64 rng(5);
    Frame f = Frame::constant(0.0);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) f.at(y, x) = (y * 7 + x * 3) % 256;
    for (int trial = 0; trial < 10; ++trial) {
        Frame g = data::augment_frame(f, rng);
        CHECK(g.height == f.height);
        CHECK(g.width == f.width);
        for (double v : g.pixels) {
            CHECK(v >= 0.0);
            CHECK(v <= 255.0);
        }
    }
}

TEST_CASE("synthetic dataset generates loadable open-set splits") {
    TempDir tmp;
    data::SynthConfig cfg;
    cfg.out_dir = tmp.path;
    cfg.per_class_train = 2;
    cfg.per_class_test = 1;
    cfg.seed = 9;
    cfg.modalities = {Modality{View::TOP, Stream::IR}, Modality{View::FRONT, Stream::DEPTH}};
    data::synth_generate(cfg);

    auto train = data::load_manifest(tmp.path / "train/train.csv", data::Split::TRAIN, true);
    CHECK(train.records.size() == 2 * kNumTrainClasses);
    CHECK(train.modalities.size() == 2);

    auto test = data::load_manifest(tmp.path / "test/test.csv", data::Split::TEST, true);
    CHECK(test.records.size() == kNumTestClasses);
    int unseen = 0;
    for (const auto& r : test.records)
        unseen += data::convert_label(r.activity, data::Split::TEST).is_unseen();
    CHECK(unseen == 1);

    // every record is a full 16-frame clip; loading one gives a valid Clip
    auto windows = data::window_clips(train, 16);
    CHECK(windows.size() == train.records.size());
    Clip clip = data::load_clip(train, windows[0], train.modalities);
    CHECK_FALSE(validate_clip(clip).has_value());

    // determinism: regenerating with the same seed gives identical frames
    TempDir tmp2;
    data::SynthConfig cfg2 = cfg;
    cfg2.out_dir = tmp2.path;
    data::synth_generate(cfg2);
    Frame a = data::read_frame_png(
        data::frame_path(tmp.path / "train", "train_c3_0001", cfg.modalities[0], 7));
    Frame b = data::read_frame_png(
        data::frame_path(tmp2.path / "train", "train_c3_0001", cfg.modalities[0], 7));
    CHECK(a.pixels == b.pixels);
}

TEST_CASE("frozen_frames repeats one frame through each clip") {
    TempDir tmp;
    data::SynthConfig cfg;
    cfg.out_dir = tmp.path;
    cfg.per_class_train = 1;
    cfg.per_class_test = 1;
    cfg.frozen_frames = true;
    cfg.modalities = {Modality{View::TOP, Stream::IR}};
    data::synth_generate(cfg);
    Frame f0 = data::read_frame_png(
        data::frame_path(tmp.path / "train", "train_c1_0000", cfg.modalities[0], 0));
    Frame f9 = data::read_frame_png(
        data::frame_path(tmp.path / "train", "train_c1_0000", cfg.modalities[0], 9));
    CHECK(f0.pixels == f9.pixels);
}
