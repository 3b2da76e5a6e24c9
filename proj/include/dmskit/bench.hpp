// bench.hpp
//
// Efficiency study: MAC counting over the inference pipeline and a
// wall-clock latency harness against the 16/45 s real-time bound (the time
// to capture one 16-frame clip at 45 Hz).
//
// FLOP convention: 1 MAC = 1 FLOP; elementwise ops count 1 FLOP each.

#pragma once

#include "core.hpp"
#include "models.hpp"

#include <nlohmann/json.hpp>

#include <algorithm>
#include <chrono>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmskit::bench {

// The real-time bound is the exact rational 16/45 s, never a rounded literal.
inline constexpr double realtime_bound_seconds() { return 16.0 / 45.0; }

inline std::int64_t count_flops(const models::Model& model,
                                int height = kFrameHeight, int width = kFrameWidth) {
    return model.flops(height, width).total();
}

struct LatencyStats {
    double mean = 0.0;
    double p50 = 0.0;
    double p95 = 0.0;
    double min = 0.0;
    double max = 0.0;
    int n_runs = 0;
};

// Feeds freshly generated random clips (16 frames per modality, 171x224);
// the model consumes only each clip's last frame. The timed region is
// single-threaded.
inline LatencyStats measure_latency(const models::Model& model, int n_runs,
                                    int warmup = 3, std::uint64_t seed = 7) {
    if (n_runs < 1) throw std::invalid_argument("measure_latency: n_runs must be >= 1");
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> pix(0.0, 255.0);

    auto make_clip = [&]() {
        Clip clip;
        for (const Modality& m : model.spec().modalities) {
            auto& frames = clip.frames[m];
            for (int t = 0; t < kClipLength; ++t) {
                Frame f = Frame::constant(0.0);
                for (auto& v : f.pixels) v = pix(rng);
                frames.push_back(std::move(f));
            }
        }
        return clip;
    };

    for (int i = 0; i < warmup; ++i) (void)model.predict(make_clip());

    std::vector<double> times;
    times.reserve(static_cast<size_t>(n_runs));
    for (int i = 0; i < n_runs; ++i) {
        Clip clip = make_clip();
        const auto t0 = std::chrono::steady_clock::now();
        (void)model.predict(clip);
        const auto t1 = std::chrono::steady_clock::now();
        times.push_back(std::chrono::duration<double>(t1 - t0).count());
    }

    std::vector<double> sorted = times;
    std::sort(sorted.begin(), sorted.end());
    LatencyStats s;
    s.n_runs = n_runs;
    for (double t : times) s.mean += t;
    s.mean /= n_runs;
    s.p50 = sorted[static_cast<size_t>(0.50 * (sorted.size() - 1))];
    s.p95 = sorted[static_cast<size_t>(0.95 * (sorted.size() - 1))];
    s.min = sorted.front();
    s.max = sorted.back();
    return s;
}

// Inclusive bound: mean exactly 16/45 s is still real-time.
inline bool realtime_check(const LatencyStats& stats) {
    return stats.mean <= realtime_bound_seconds();
}

inline nlohmann::json bench_report(const models::Model& model, const LatencyStats& stats,
                                   const std::string& hardware) {
    nlohmann::json j;
    j["model"] = {{"topology", models::topology_str(model.spec().topology)},
                  {"encoder", models::architecture_str(model.spec().encoder.architecture)},
                  {"modalities", [&] {
                       std::vector<std::string> ms;
                       for (const Modality& m : model.spec().modalities) ms.push_back(m.str());
                       return ms;
                   }()}};
    j["input_shape"] = {kClipLength, kFrameHeight, kFrameWidth};
    j["flops"] = count_flops(model);
    j["latency_stats"] = {{"mean", stats.mean}, {"p50", stats.p50},   {"p95", stats.p95},
                          {"min", stats.min},   {"n_runs", stats.n_runs}};
    j["realtime"] = realtime_check(stats);
    j["bound"] = "16/45 s";
    j["flop_convention"] = "1 MAC = 1 FLOP; elementwise ops 1 FLOP each";
    j["hardware"] = hardware;
    return j;
}

}  // namespace dmskit::bench
