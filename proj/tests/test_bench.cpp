#include <doctest.h>

#include <dmskit/bench.hpp>

using namespace dmskit;

namespace {

models::ModelSpec tiny_spec() {
    models::ModelSpec spec;
    spec.topology = models::Topology::UNIMODAL;
    spec.modalities = {Modality{View::TOP, Stream::IR}};
    spec.encoder = models::EncoderSpec::make(models::Architecture::TINY_CNN);
    spec.head = HeadType::POSTERIOR;
    return spec;
}

}  // namespace

TEST_CASE("real-time bound is the exact rational 16/45") {
    CHECK(bench::realtime_bound_seconds() == 16.0 / 45.0);
    // sanity: roughly 0.3556 s but not a rounded literal
    CHECK(bench::realtime_bound_seconds() != 0.3556);
    CHECK(bench::realtime_bound_seconds() != 0.356);
}

TEST_CASE("realtime_check reference latencies") {
    bench::LatencyStats fast;
    fast.mean = 0.0148;
    CHECK(bench::realtime_check(fast));

    bench::LatencyStats slow;
    slow.mean = 0.4246;
    CHECK_FALSE(bench::realtime_check(slow));

    // the bound is inclusive
    bench::LatencyStats edge;
    edge.mean = 16.0 / 45.0;
    CHECK(bench::realtime_check(edge));
    edge.mean = std::nextafter(16.0 / 45.0, 1.0);
    CHECK_FALSE(bench::realtime_check(edge));
}

TEST_CASE("count_flops agrees with the model's own accounting") {
    models::Model model(tiny_spec(), 7);
    CHECK(bench::count_flops(model) == model.flops(kFrameHeight, kFrameWidth).total());
    CHECK(bench::count_flops(model) > 0);
    // smaller input costs fewer FLOPs
    CHECK(bench::count_flops(model, 96, 128) < bench::count_flops(model));
}

TEST_CASE("measure_latency produces consistent statistics") {
    models::Model model(tiny_spec(), 7);
    auto stats = bench::measure_latency(model, 5, 1);
    CHECK(stats.n_runs == 5);
    CHECK(stats.mean > 0.0);
    CHECK(stats.min > 0.0);
    CHECK(stats.min <= stats.p50);
    CHECK(stats.p50 <= stats.p95);
    CHECK(stats.p95 <= stats.max);
    CHECK(stats.mean >= stats.min);
    CHECK(stats.mean <= stats.max);

    CHECK_THROWS_AS(bench::measure_latency(model, 0), std::invalid_argument);
    CHECK_THROWS_AS(bench::measure_latency(model, -3), std::invalid_argument);
}

TEST_CASE("bench_report structure") {
    models::Model model(tiny_spec(), 7);
    bench::LatencyStats stats;
    stats.mean = 0.01;
    stats.p50 = 0.01;
    stats.p95 = 0.012;
    stats.min = 0.009;
    stats.max = 0.013;
    stats.n_runs = 10;
    auto j = bench::bench_report(model, stats, "test-cpu");
    CHECK(j["model"]["topology"] == "unimodal");
    CHECK(j["model"]["encoder"] == "tiny-cnn");
    CHECK(j["model"]["modalities"].size() == 1);
    CHECK(j["flops"] == bench::count_flops(model));
    CHECK(j["latency_stats"]["mean"] == doctest::Approx(0.01));
    CHECK(j["latency_stats"]["n_runs"] == 10);
    CHECK(j["realtime"] == true);
    CHECK(j["bound"] == "16/45 s");
    CHECK(j["hardware"] == "test-cpu");
    CHECK(j.contains("flop_convention"));
    CHECK(j["input_shape"] == nlohmann::json({kClipLength, kFrameHeight, kFrameWidth}));
}
