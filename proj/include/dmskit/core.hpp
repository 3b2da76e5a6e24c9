// core.hpp
//
// Domain types shared by every module: camera modalities, frames, clips,
// class labels and model score vectors. All types are immutable after
// construction and safe to share across threads.

#pragma once

#include "tensor.hpp"

#include <array>
#include <cmath>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmskit {

inline constexpr int kFrameHeight = 171;
inline constexpr int kFrameWidth = 224;
inline constexpr int kClipLength = 16;
inline constexpr int kNumTrainClasses = 7;   // c1..c7
inline constexpr int kNumTestClasses = 8;    // + c8 "unseen"

// ---------------------------------------------------------------------------
// Modality: one (view, stream) camera source.

enum class View { TOP, FRONT };
enum class Stream { IR, DEPTH };

struct Modality {
    View view = View::TOP;
    Stream stream = Stream::IR;

    auto operator<=>(const Modality&) const = default;

    std::string str() const {
        std::string s = (view == View::TOP) ? "top_" : "front_";
        s += (stream == Stream::IR) ? "ir" : "depth";
        return s;
    }
    static Modality parse(const std::string& s) {
        for (const Modality& m : all())
            if (m.str() == s) return m;
        throw std::invalid_argument("unknown modality: " + s);
    }
    static const std::array<Modality, 4>& all() {
        static const std::array<Modality, 4> values{
            Modality{View::TOP, Stream::IR}, Modality{View::TOP, Stream::DEPTH},
            Modality{View::FRONT, Stream::IR}, Modality{View::FRONT, Stream::DEPTH}};
        return values;
    }
};

// ---------------------------------------------------------------------------
// Frame: a single 171x224 grayscale image with values in [0, 255] before
// normalization.

struct Frame {
    int height = kFrameHeight;
    int width = kFrameWidth;
    std::vector<double> pixels;  // row-major, height*width

    static Frame constant(double v, int h = kFrameHeight, int w = kFrameWidth) {
        Frame f;
        f.height = h;
        f.width = w;
        f.pixels.assign(static_cast<size_t>(h) * w, v);
        return f;
    }

    double at(int y, int x) const { return pixels[static_cast<size_t>(y) * width + x]; }
    double& at(int y, int x) { return pixels[static_cast<size_t>(y) * width + x]; }

    std::optional<std::string> validate() const {
        if (height != kFrameHeight || width != kFrameWidth)
            return "shape: expected " + std::to_string(kFrameHeight) + "x" +
                   std::to_string(kFrameWidth) + ", got " + std::to_string(height) +
                   "x" + std::to_string(width);
        if (pixels.size() != static_cast<size_t>(height) * width)
            return "shape: pixel buffer size mismatch";
        for (double v : pixels)
            if (!std::isfinite(v)) return "shape: non-finite pixel value";
        return std::nullopt;
    }
};

// ---------------------------------------------------------------------------
// Clip: a synchronized 16-frame window per available modality.

struct Clip {
    std::map<Modality, std::vector<Frame>> frames;

    bool has(Modality m) const { return frames.count(m) > 0; }
    std::vector<Modality> modalities() const {
        std::vector<Modality> out;
        for (const auto& [m, _] : frames) out.push_back(m);
        return out;
    }
};

// Returns the empty optional on success, the first violated invariant
// otherwise.
inline std::optional<std::string> validate_clip(const Clip& clip) {
    for (const auto& [m, seq] : clip.frames) {
        if (static_cast<int>(seq.size()) != kClipLength)
            return "frame count: modality " + m.str() + " has " +
                   std::to_string(seq.size()) + " frames, expected " +
                   std::to_string(kClipLength);
        for (const Frame& f : seq)
            if (auto err = f.validate())
                return "modality " + m.str() + " " + *err;
    }
    return std::nullopt;
}

// ---------------------------------------------------------------------------
// ClassLabel: c1 = normal driving, c2..c7 = seen NDRAs, c8 = unseen NDRA.

struct ClassLabel {
    int value = 1;  // 1..8

    explicit ClassLabel(int v = 1) : value(v) {
        if (v < 1 || v > kNumTestClasses)
            throw std::invalid_argument("class label out of range: " + std::to_string(v));
    }
    auto operator<=>(const ClassLabel&) const = default;

    bool is_unseen() const { return value == kNumTestClasses; }
    std::string str() const { return "c" + std::to_string(value); }

    // One-hot over the 7 training classes; rejects c8.
    std::array<double, kNumTrainClasses> one_hot() const {
        if (is_unseen())
            throw std::invalid_argument("c8 never appears as a training target");
        std::array<double, kNumTrainClasses> v{};
        v[value - 1] = 1.0;
        return v;
    }
};

// ---------------------------------------------------------------------------
// ScoreVector: the length-7 model output.

enum class HeadType { FLAT_SOFTMAX, POSTERIOR };

struct ScoreVector {
    std::array<double, kNumTrainClasses> values{};

    double operator[](int i) const { return values[i]; }
    double& operator[](int i) { return values[i]; }

    // Checks the normalization contract for the given head semantics.
    std::optional<std::string> validate(HeadType head, double tol = 1e-5) const {
        for (double v : values)
            if (!std::isfinite(v)) return "non-finite score";
        if (head == HeadType::FLAT_SOFTMAX) {
            double s = 0.0;
            for (double v : values) {
                if (v < 0.0) return "negative probability under flat head";
                s += v;
            }
            if (std::abs(s - 1.0) > tol) return "flat head scores do not sum to 1";
        } else {
            if (values[0] < 0.0 || values[0] > 1.0)
                return "posterior head: P[c1] outside [0,1]";
            double s = 0.0;
            for (int i = 1; i < kNumTrainClasses; ++i) {
                if (values[i] < 0.0) return "negative conditional probability";
                s += values[i];
            }
            if (std::abs(s - 1.0) > tol) return "conditional probabilities do not sum to 1";
        }
        return std::nullopt;
    }
};

}  // namespace dmskit
