// data.hpp
//
// Manifest ingestion, label conversion, clip windowing, balanced sampling
// and the synthetic open-set dataset generator used for desk-scale runs.
//
// On-disk layout:
//   <root>/<split>.csv                 UTF-8 CSV: video_id,frame_start,frame_end,activity
//   <root>/stats.json                  per-modality {mean,std} sidecar (declares modalities)
//   <root>/<video_id>/<modality>/<frame_index:06d>.png   8-bit grayscale frames

#pragma once

#include "core.hpp"

#include <nlohmann/json.hpp>
#include <opencv2/imgcodecs.hpp>

#include <algorithm>
#include <cctype>
#include <filesystem>
#include <fstream>
#include <map>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmskit::data {

namespace fs = std::filesystem;

enum class Split { TRAIN, TEST };

inline std::string split_str(Split s) { return s == Split::TRAIN ? "train" : "test"; }
inline Split parse_split(const std::string& s) {
    if (s == "train") return Split::TRAIN;
    if (s == "test") return Split::TEST;
    throw std::invalid_argument("unknown split: " + s);
}

struct AnnotationRecord {
    std::string video_id;
    long frame_start = 0;
    long frame_end = 0;  // inclusive
    std::string activity;

    long length() const { return frame_end - frame_start + 1; }
};

struct NormEntry {
    double mean = 0.5;
    double std = 0.25;
};

struct DatasetManifest {
    fs::path root;
    std::vector<AnnotationRecord> records;
    std::vector<Modality> modalities;  // declared via the stats sidecar
    Split split = Split::TRAIN;
    std::map<std::string, NormEntry> norm_stats;  // keyed by modality string

    NormEntry stats_for(Modality m) const {
        auto it = norm_stats.find(m.str());
        return it == norm_stats.end() ? NormEntry{} : it->second;
    }
};

// ---------------------------------------------------------------------------
// Label conversion (case-insensitive over the documented vocabulary)

namespace detail {

inline std::string lower(std::string s) {
    std::transform(s.begin(), s.end(), s.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    return s;
}

inline const std::map<std::string, int>& seen_vocabulary() {
    static const std::map<std::string, int> v = {
        {"normal driving", 1},
        {"talking on the phone - left", 2},
        {"talking on the phone - right", 2},
        {"talking on the phone", 2},
        {"messaging left", 3},
        {"messaging right", 3},
        {"messaging", 3},
        {"talking with passengers", 4},
        {"reaching behind", 5},
        {"adjusting radio", 6},
        {"drinking", 7},
    };
    return v;
}

inline const std::vector<std::string>& unseen_vocabulary() {
    static const std::vector<std::string> v = {
        "adjusting side mirror", "adjusting clothes", "adjusting glasses",
        "adjusting rear-view mirror", "adjusting sunroof", "wiping nose",
        "head dropping (dozing off)", "eating", "wearing glasses",
        "taking off glasses", "picking up something", "wiping sweat",
        "touching face/hair", "sneezing", "coughing", "reading",
        "looking for something", "yawning"};
    return v;
}

}  // namespace detail

// Maps a raw activity string to the merged class set. Unseen NDRAs are only
// legal on the test split; unknown strings always fail loudly.
inline ClassLabel convert_label(const std::string& activity, Split split) {
    const std::string key = detail::lower(activity);
    const auto& seen = detail::seen_vocabulary();
    if (auto it = seen.find(key); it != seen.end()) return ClassLabel(it->second);
    const auto& unseen = detail::unseen_vocabulary();
    if (std::find(unseen.begin(), unseen.end(), key) != unseen.end()) {
        if (split == Split::TRAIN)
            throw std::invalid_argument("test-only activity in TRAIN split: " + activity);
        return ClassLabel(kNumTestClasses);
    }
    throw std::invalid_argument("unknown activity: " + activity);
}

// ---------------------------------------------------------------------------
// Frame I/O

inline fs::path frame_path(const fs::path& root, const std::string& video_id,
                           Modality m, long index) {
    char name[16];
    std::snprintf(name, sizeof(name), "%06ld.png", index);
    return root / video_id / m.str() / name;
}

inline void write_frame_png(const fs::path& path, const Frame& f) {
    cv::Mat img(f.height, f.width, CV_8UC1);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            img.at<unsigned char>(y, x) = static_cast<unsigned char>(
                std::clamp(f.at(y, x), 0.0, 255.0) + 0.5);
    fs::create_directories(path.parent_path());
    if (!cv::imwrite(path.string(), img))
        throw std::runtime_error("failed to write " + path.string());
}

inline Frame read_frame_png(const fs::path& path) {
    cv::Mat img = cv::imread(path.string(), cv::IMREAD_GRAYSCALE);
    if (img.empty()) throw std::runtime_error("failed to read " + path.string());
    Frame f;
    f.height = img.rows;
    f.width = img.cols;
    f.pixels.resize(static_cast<size_t>(img.rows) * img.cols);
    for (int y = 0; y < img.rows; ++y)
        for (int x = 0; x < img.cols; ++x)
            f.at(y, x) = static_cast<double>(img.at<unsigned char>(y, x));
    return f;
}

// ---------------------------------------------------------------------------
// Manifest loading

inline DatasetManifest load_manifest(const fs::path& csv_path, Split split,
                                     bool check_frames = true) {
    std::ifstream in(csv_path);
    if (!in) throw std::runtime_error("manifest not found: " + csv_path.string());

    DatasetManifest man;
    man.root = csv_path.parent_path();
    man.split = split;

    std::string line;
    long line_no = 0;
    if (!std::getline(in, line))
        throw std::runtime_error(csv_path.string() + ": empty file");
    ++line_no;
    if (line.size() && line.back() == '\r') line.pop_back();
    if (line != "video_id,frame_start,frame_end,activity")
        throw std::runtime_error(csv_path.string() + ":1: bad header '" + line + "'");

    while (std::getline(in, line)) {
        ++line_no;
        if (line.size() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        std::stringstream ss(line);
        AnnotationRecord rec;
        std::string start_s, end_s;
        if (!std::getline(ss, rec.video_id, ',') || !std::getline(ss, start_s, ',') ||
            !std::getline(ss, end_s, ',') || !std::getline(ss, rec.activity))
            throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) +
                                     ": expected 4 columns");
        try {
            rec.frame_start = std::stol(start_s);
            rec.frame_end = std::stol(end_s);
        } catch (const std::exception&) {
            throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) +
                                     ": non-numeric frame range");
        }
        if (rec.frame_start < 0 || rec.frame_start > rec.frame_end)
            throw std::runtime_error(csv_path.string() + ":" + std::to_string(line_no) +
                                     ": frame_start > frame_end");
        // Conversion errors (bad vocabulary, c8 on train) surface here too.
        convert_label(rec.activity, split);
        man.records.push_back(std::move(rec));
    }

    // Non-overlap within one video.
    std::map<std::string, std::vector<std::pair<long, long>>> by_video;
    for (const auto& r : man.records)
        by_video[r.video_id].emplace_back(r.frame_start, r.frame_end);
    for (auto& [vid, ranges] : by_video) {
        std::sort(ranges.begin(), ranges.end());
        for (size_t i = 1; i < ranges.size(); ++i)
            if (ranges[i].first <= ranges[i - 1].second)
                throw std::runtime_error(csv_path.string() + ": overlapping ranges in video " + vid);
    }

    // Modalities and normalization stats come from the sidecar, when present.
    const fs::path sidecar = man.root / "stats.json";
    if (fs::exists(sidecar)) {
        std::ifstream sf(sidecar);
        nlohmann::json j;
        sf >> j;
        for (auto& [key, val] : j.items()) {
            Modality m = Modality::parse(key);  // validates the key
            man.modalities.push_back(m);
            man.norm_stats[key] = NormEntry{val.at("mean").get<double>(),
                                            val.at("std").get<double>()};
        }
    }

    if (check_frames) {
        for (const auto& r : man.records)
            for (const Modality& m : man.modalities)
                for (long i = r.frame_start; i <= r.frame_end; ++i)
                    if (!fs::exists(frame_path(man.root, r.video_id, m, i)))
                        throw std::runtime_error(
                            "missing frame: " +
                            frame_path(man.root, r.video_id, m, i).string());
    }
    return man;
}

// ---------------------------------------------------------------------------
// Clip windowing

struct ClipWindow {
    std::string video_id;
    long start = 0;  // first frame index of the 16-frame window
    ClassLabel label{1};
};

// 16-frame windows entirely inside a single record, stepping by stride.
// Records shorter than 16 frames yield no windows.
inline std::vector<ClipWindow> window_clips(const DatasetManifest& man, long stride) {
    if (stride < 1) throw std::invalid_argument("stride must be >= 1");
    std::vector<ClipWindow> out;
    for (const auto& r : man.records) {
        const ClassLabel label = convert_label(r.activity, man.split);
        for (long s = r.frame_start; s + kClipLength - 1 <= r.frame_end; s += stride)
            out.push_back(ClipWindow{r.video_id, s, label});
    }
    return out;
}

// Materializes a window into a Clip for the requested modalities.
inline Clip load_clip(const DatasetManifest& man, const ClipWindow& w,
                      const std::vector<Modality>& modalities) {
    Clip clip;
    for (const Modality& m : modalities) {
        std::vector<Frame>& frames = clip.frames[m];
        frames.reserve(kClipLength);
        for (long i = 0; i < kClipLength; ++i)
            frames.push_back(read_frame_png(frame_path(man.root, w.video_id, m, w.start + i)));
    }
    return clip;
}

// ---------------------------------------------------------------------------
// Balanced sampling

// One epoch of indices: each present class contributes min-class-count
// samples drawn uniformly without replacement; order shuffled by seed.
inline std::vector<size_t> balanced_sampler(const std::vector<ClassLabel>& labels,
                                            std::uint64_t seed) {
    if (labels.empty()) throw std::invalid_argument("balanced_sampler: empty label set");
    std::map<ClassLabel, std::vector<size_t>> by_class;
    for (size_t i = 0; i < labels.size(); ++i) by_class[labels[i]].push_back(i);
    size_t min_count = labels.size();
    for (const auto& [c, idx] : by_class) min_count = std::min(min_count, idx.size());

    std::mt19937_64 rng(seed);
    std::vector<size_t> epoch;
    for (auto& [c, idx] : by_class) {
        std::shuffle(idx.begin(), idx.end(), rng);
        epoch.insert(epoch.end(), idx.begin(), idx.begin() + min_count);
    }
    std::shuffle(epoch.begin(), epoch.end(), rng);
    return epoch;
}

// ---------------------------------------------------------------------------
// Training-time spatial augmentation: random horizontal shift up to 8 px and
// crop-resize within 90-100% scale.

inline Frame augment_frame(const Frame& f, std::mt19937_64& rng) {
    std::uniform_int_distribution<int> shift_d(-8, 8);
    std::uniform_real_distribution<double> scale_d(0.9, 1.0);
    const int shift = shift_d(rng);
    const double scale = scale_d(rng);

    const int ch = std::max(1, static_cast<int>(f.height * scale));
    const int cw = std::max(1, static_cast<int>(f.width * scale));
    const int oy = (f.height - ch) / 2;
    const int ox = (f.width - cw) / 2;

    Frame out = Frame::constant(0.0, f.height, f.width);
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x) {
            // nearest-neighbour resample of the centered crop, then shift
            int sy = oy + static_cast<int>(static_cast<double>(y) * ch / f.height);
            int sx = ox + static_cast<int>(static_cast<double>(x) * cw / f.width) - shift;
            sy = std::clamp(sy, 0, f.height - 1);
            sx = std::clamp(sx, 0, f.width - 1);
            out.at(y, x) = f.at(sy, sx);
        }
    return out;
}

// ---------------------------------------------------------------------------
// Synthetic open-set dataset

struct SynthConfig {
    fs::path out_dir;
    int per_class_train = 20;
    int per_class_test = 5;
    std::uint64_t seed = 7;
    std::vector<Modality> modalities{Modality::all().begin(), Modality::all().end()};
    bool frozen_frames = false;  // identical frames within each clip
};

namespace detail {

// Deterministic per-pixel texture independent of std::rand.
inline double hash_noise(std::uint64_t seed, long a, long b, long c) {
    std::uint64_t h = seed;
    h ^= static_cast<std::uint64_t>(a) * 0x9e3779b97f4a7c15ULL;
    h = (h ^ (h >> 30)) * 0xbf58476d1ce4e5b9ULL;
    h ^= static_cast<std::uint64_t>(b) * 0x94d049bb133111ebULL;
    h = (h ^ (h >> 27)) * 0x2545f4914f6cdd1dULL;
    h ^= static_cast<std::uint64_t>(c) * 0xff51afd7ed558ccdULL;
    h ^= h >> 33;
    return static_cast<double>(h % 10000) / 10000.0;
}

// Renders one glyph class at its class-specific position. glyph: 0..6 seen,
// 7+ unseen shapes.
inline Frame render_glyph(int glyph, int t, std::uint64_t clip_seed, bool frozen) {
    Frame f = Frame::constant(0.0);
    // mild background texture
    for (int y = 0; y < f.height; ++y)
        for (int x = 0; x < f.width; ++x)
            f.at(y, x) = 20.0 + 20.0 * hash_noise(clip_seed, y, x, 0);

    const int step = frozen ? 0 : t;
    const int cx = 40 + (glyph % 4) * 48 + step;  // drifts right over the clip
    const int cy = 45 + (glyph / 4) * 70 + (frozen ? 0 : (step / 2));
    const int r = 16;
    auto put = [&](int y, int x, double v) {
        if (y >= 0 && y < f.height && x >= 0 && x < f.width) f.at(y, x) = v;
    };
    for (int dy = -r; dy <= r; ++dy)
        for (int dx = -r; dx <= r; ++dx) {
            bool on = false;
            switch (glyph % 8) {
                case 0: on = true; break;                                     // square
                case 1: on = dy * dy + dx * dx <= r * r; break;               // disc
                case 2: on = std::abs(dy) <= 3 || std::abs(dx) <= 3; break;   // cross
                case 3: on = dx >= std::abs(dy) - r && dx <= 0; break;        // triangle
                case 4: on = std::abs(dy) + std::abs(dx) <= r; break;         // diamond
                case 5: on = std::abs(dy) <= 4; break;                        // h-bar
                case 6: on = std::abs(dx) <= 4; break;                        // v-bar
                case 7: {                                                     // ring (unseen)
                    int d2 = dy * dy + dx * dx;
                    on = d2 <= r * r && d2 >= (r - 6) * (r - 6);
                    break;
                }
            }
            if (on) put(cy + dy, cx + dx, 220.0);
        }
    return f;
}

// Per-modality deterministic transform so modalities carry correlated but
// non-identical signals.
inline Frame apply_modality(const Frame& base, Modality m) {
    Frame f = base;
    if (m.stream == Stream::DEPTH)
        for (auto& v : f.pixels) v = 255.0 - v;
    if (m.view == View::FRONT)
        for (int y = 0; y < f.height; ++y)
            for (int x = 0; x < f.width; ++x)
                f.at(y, x) = std::clamp(
                    f.at(y, x) + 18.0 * std::sin(0.15 * x) * std::cos(0.11 * y), 0.0, 255.0);
    return f;
}

inline const char* seen_activity_name(int cls) {
    switch (cls) {
        case 1: return "Normal driving";
        case 2: return "Talking on the phone";
        case 3: return "Messaging";
        case 4: return "Talking with passengers";
        case 5: return "Reaching behind";
        case 6: return "Adjusting radio";
        case 7: return "Drinking";
    }
    throw std::logic_error("bad seen class");
}

}  // namespace detail

// Generates both splits under cfg.out_dir/{train,test}. The unseen class
// (distinct glyph, test-only activity names) appears only in the test split.
inline void synth_generate(const SynthConfig& cfg) {
    const std::vector<std::string> unseen_names = {"Adjusting side mirror", "Reading",
                                                   "Yawning", "Looking for something"};
    for (Split split : {Split::TRAIN, Split::TEST}) {
        const fs::path root = cfg.out_dir / split_str(split);
        fs::create_directories(root);
        std::ofstream csv(root / (split_str(split) + ".csv"));
        csv << "video_id,frame_start,frame_end,activity\n";

        std::map<std::string, std::pair<double, double>> accum;  // modality -> (sum, sumsq)
        std::map<std::string, long> counts;

        const int per_class = split == Split::TRAIN ? cfg.per_class_train : cfg.per_class_test;
        const int n_classes = split == Split::TRAIN ? kNumTrainClasses : kNumTestClasses;
        for (int cls = 1; cls <= n_classes; ++cls) {
            const int glyph = cls - 1;  // class 8 uses the unseen ring glyph (7)
            for (int k = 0; k < per_class; ++k) {
                char vid[64];
                std::snprintf(vid, sizeof(vid), "%s_c%d_%04d", split_str(split).c_str(),
                              cls, k);
                const std::uint64_t clip_seed =
                    cfg.seed ^ (static_cast<std::uint64_t>(cls) << 32) ^
                    (static_cast<std::uint64_t>(k) << 8) ^ (split == Split::TEST ? 1u : 0u);
                for (int t = 0; t < kClipLength; ++t) {
                    Frame base = detail::render_glyph(glyph, t, clip_seed, cfg.frozen_frames);
                    for (const Modality& m : cfg.modalities) {
                        Frame f = detail::apply_modality(base, m);
                        write_frame_png(frame_path(root, vid, m, t), f);
                        auto& [s, sq] = accum[m.str()];
                        for (double v : f.pixels) {
                            const double u = v / 255.0;
                            s += u;
                            sq += u * u;
                        }
                        counts[m.str()] += static_cast<long>(f.pixels.size());
                    }
                }
                const std::string activity =
                    (cls <= kNumTrainClasses)
                        ? detail::seen_activity_name(cls)
                        : unseen_names[static_cast<size_t>(k) % unseen_names.size()];
                csv << vid << ",0," << (kClipLength - 1) << "," << activity << "\n";
            }
        }

        nlohmann::json stats;
        for (const Modality& m : cfg.modalities) {
            const auto& [s, sq] = accum[m.str()];
            const double n = static_cast<double>(counts[m.str()]);
            const double mean = s / n;
            const double var = std::max(1e-8, sq / n - mean * mean);
            stats[m.str()] = {{"mean", mean}, {"std", std::sqrt(var)}};
        }
        std::ofstream(root / "stats.json") << stats.dump(2) << "\n";
    }
}

}  // namespace dmskit::data
