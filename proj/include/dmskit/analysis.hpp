// analysis.hpp
//
// Frame-similarity study: three metrics over consecutive frames and the
// per-activity x per-modality aggregation table.
//
// The histogram metric is fixed to 256-bin histogram intersection, the one
// common formulation guaranteed to lie in [0,1]. SSIM uses the reference
// constants K1=0.01, K2=0.03, L=255 with an 11x11 Gaussian window,
// sigma 1.5, averaged over all valid window positions.

#pragma once

#include "core.hpp"
#include "data.hpp"

#include <nlohmann/json.hpp>

#include <array>
#include <cmath>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

namespace dmskit::analysis {

inline void check_shapes(const Frame& a, const Frame& b, const char* op) {
    if (a.height != b.height || a.width != b.width)
        throw std::invalid_argument(std::string(op) + ": frame shape mismatch");
}

// sqrt(mean (a-b)^2) on raw [0,255] values.
inline double pixel_rmse(const Frame& a, const Frame& b) {
    check_shapes(a, b, "pixel_rmse");
    double acc = 0.0;
    for (size_t i = 0; i < a.pixels.size(); ++i) {
        const double d = a.pixels[i] - b.pixels[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.pixels.size()));
}

// sum_k min(h_a(k), h_b(k)) over 256 bins of L1-normalized histograms.
inline double histogram_similarity(const Frame& a, const Frame& b) {
    check_shapes(a, b, "histogram_similarity");
    std::array<double, 256> ha{}, hb{};
    auto fill = [](const Frame& f, std::array<double, 256>& h) {
        for (double v : f.pixels) {
            int bin = static_cast<int>(std::clamp(v, 0.0, 255.0));
            h[static_cast<size_t>(bin)] += 1.0;
        }
        for (auto& x : h) x /= static_cast<double>(f.pixels.size());
    };
    fill(a, ha);
    fill(b, hb);
    double s = 0.0;
    for (int k = 0; k < 256; ++k) s += std::min(ha[k], hb[k]);
    return s;
}

namespace detail {

inline const std::vector<double>& gaussian_window() {
    static const std::vector<double> w = [] {
        const double sigma = 1.5;
        std::vector<double> out(11 * 11);
        double sum = 0.0;
        for (int y = 0; y < 11; ++y)
            for (int x = 0; x < 11; ++x) {
                const double dy = y - 5.0, dx = x - 5.0;
                out[y * 11 + x] = std::exp(-(dy * dy + dx * dx) / (2.0 * sigma * sigma));
                sum += out[y * 11 + x];
            }
        for (auto& v : out) v /= sum;
        return out;
    }();
    return w;
}

}  // namespace detail

// Mean local SSIM index over valid 11x11 windows.
inline double ssim(const Frame& a, const Frame& b) {
    check_shapes(a, b, "ssim");
    if (a.height < 11 || a.width < 11)
        throw std::invalid_argument("ssim: frames must be at least 11x11");
    constexpr double C1 = (0.01 * 255.0) * (0.01 * 255.0);
    constexpr double C2 = (0.03 * 255.0) * (0.03 * 255.0);
    const auto& w = detail::gaussian_window();

    double acc = 0.0;
    long count = 0;
    for (int oy = 0; oy + 11 <= a.height; ++oy)
        for (int ox = 0; ox + 11 <= a.width; ++ox) {
            double mu_a = 0, mu_b = 0;
            for (int y = 0; y < 11; ++y)
                for (int x = 0; x < 11; ++x) {
                    const double wk = w[y * 11 + x];
                    mu_a += wk * a.at(oy + y, ox + x);
                    mu_b += wk * b.at(oy + y, ox + x);
                }
            double va = 0, vb = 0, cov = 0;
            for (int y = 0; y < 11; ++y)
                for (int x = 0; x < 11; ++x) {
                    const double wk = w[y * 11 + x];
                    const double da = a.at(oy + y, ox + x) - mu_a;
                    const double db = b.at(oy + y, ox + x) - mu_b;
                    va += wk * da * da;
                    vb += wk * db * db;
                    cov += wk * da * db;
                }
            const double num = (2 * mu_a * mu_b + C1) * (2 * cov + C2);
            const double den = (mu_a * mu_a + mu_b * mu_b + C1) * (va + vb + C2);
            acc += num / den;
            ++count;
        }
    return acc / static_cast<double>(count);
}

// ---------------------------------------------------------------------------
// Aggregation table: activity (c1..c7) x modality x {hist, rmse, ssim}

struct SimilarityCell {
    double hist = 0.0;
    double rmse = 0.0;
    double ssim = 0.0;
    long pairs = 0;
};

struct SimilarityReport {
    // [class 1..7][modality string] -> averaged metrics
    std::map<int, std::map<std::string, SimilarityCell>> cells;
};

// Computes all three metrics on every consecutive frame pair inside each
// record and averages per (converted label, modality). Records are visited
// in manifest order; the reduction is a plain sum so order does not matter.
inline SimilarityReport similarity_report(const data::DatasetManifest& man) {
    if (man.records.empty())
        throw std::invalid_argument("similarity_report: empty manifest");
    if (man.modalities.empty())
        throw std::invalid_argument("similarity_report: manifest declares no modalities");

    SimilarityReport rep;
    for (const auto& r : man.records) {
        const ClassLabel label = data::convert_label(r.activity, man.split);
        if (label.is_unseen()) continue;  // the table covers c1..c7
        for (const Modality& m : man.modalities) {
            SimilarityCell& cell = rep.cells[label.value][m.str()];
            Frame prev = data::read_frame_png(
                data::frame_path(man.root, r.video_id, m, r.frame_start));
            for (long i = r.frame_start + 1; i <= r.frame_end; ++i) {
                Frame cur = data::read_frame_png(
                    data::frame_path(man.root, r.video_id, m, i));
                cell.hist += histogram_similarity(prev, cur);
                cell.rmse += pixel_rmse(prev, cur);
                cell.ssim += ssim(prev, cur);
                ++cell.pairs;
                prev = std::move(cur);
            }
        }
    }
    for (auto& [cls, row] : rep.cells)
        for (auto& [mod, cell] : row)
            if (cell.pairs > 0) {
                cell.hist /= cell.pairs;
                cell.rmse /= cell.pairs;
                cell.ssim /= cell.pairs;
            }
    return rep;
}

inline void write_similarity_csv(const SimilarityReport& rep, const std::string& path) {
    std::ofstream out(path);
    out << "activity,modality,histogram_similarity,pixel_rmse,structural_similarity\n";
    for (const auto& [cls, row] : rep.cells)
        for (const auto& [mod, cell] : row)
            out << "c" << cls << "," << mod << "," << cell.hist << "," << cell.rmse
                << "," << cell.ssim << "\n";
}

inline void write_similarity_json(const SimilarityReport& rep, const std::string& path) {
    nlohmann::json j;
    for (const auto& [cls, row] : rep.cells)
        for (const auto& [mod, cell] : row)
            j["c" + std::to_string(cls)][mod] = {
                {"hist", cell.hist}, {"rmse", cell.rmse}, {"ssim", cell.ssim}};
    std::ofstream(path) << j.dump(2) << "\n";
}

}  // namespace dmskit::analysis
