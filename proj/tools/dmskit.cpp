// dmskit — command-line front end for the driver-monitoring toolkit.
//
// Subcommands: synth, labels, train, eval, similarity, bench.
// Exit codes: 0 success, 1 usage error, 2 data/validation error.

#include <dmskit/analysis.hpp>
#include <dmskit/bench.hpp>
#include <dmskit/config.hpp>
#include <dmskit/data.hpp>
#include <dmskit/eval.hpp>
#include <dmskit/models.hpp>
#include <dmskit/openset.hpp>
#include <dmskit/training.hpp>

#include <CLI11.hpp>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace dmskit;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitData = 2;

// --out paths are never silently overwritten.
bool refuse_overwrite(const fs::path& out, bool force) {
    if (force || !fs::exists(out)) return false;
    std::cerr << "error: " << out.string() << " already exists (use --force to overwrite)\n";
    return true;
}

models::FusionVariant parse_fusion(const std::string& s) {
    if (s == "aff") return models::FusionVariant::AFF;
    if (s == "iaff") return models::FusionVariant::IAFF;
    throw std::invalid_argument("unknown fusion variant: " + s);
}

HeadType parse_head(const std::string& s) {
    if (s == "flat") return HeadType::FLAT_SOFTMAX;
    if (s == "posterior") return HeadType::POSTERIOR;
    throw std::invalid_argument("unknown head: " + s);
}

// Pretrained-weight paths resolve against $DMSKIT_CACHE when relative.
std::string resolve_weights(const std::string& weights) {
    if (weights.empty() || fs::path(weights).is_absolute() || fs::exists(weights))
        return weights;
    if (const char* cache = std::getenv("DMSKIT_CACHE")) {
        const fs::path cached = fs::path(cache) / weights;
        if (fs::exists(cached)) return cached.string();
    }
    return weights;
}

models::ModelSpec spec_from_config(const config::Config& cfg) {
    models::ModelSpec spec;
    spec.topology = models::parse_topology(cfg.get_string("model.topology", "unimodal"));
    spec.fusion_variant = parse_fusion(cfg.get_string("model.fusion", "aff"));
    spec.head = parse_head(cfg.get_string("model.head", "flat"));
    spec.encoder = models::EncoderSpec::make(
        models::parse_architecture(cfg.get_string("model.encoder", "tiny-cnn")),
        resolve_weights(cfg.get_string("model.pretrained", "")));
    spec.reduction_ratio = static_cast<int>(cfg.get_int("model.reduction_ratio", 4));
    spec.modalities.clear();
    std::stringstream ss(cfg.get_string("model.modalities", "top_ir"));
    std::string item;
    while (std::getline(ss, item, ','))
        spec.modalities.push_back(Modality::parse(config::trim(item)));
    spec.validate();
    return spec;
}

void write_spec_config(const models::ModelSpec& spec, const fs::path& path) {
    std::ofstream out(path);
    out << "model.topology = " << models::topology_str(spec.topology) << "\n"
        << "model.fusion = "
        << (spec.fusion_variant == models::FusionVariant::AFF ? "aff" : "iaff") << "\n"
        << "model.head = " << (spec.head == HeadType::FLAT_SOFTMAX ? "flat" : "posterior")
        << "\n"
        << "model.encoder = " << models::architecture_str(spec.encoder.architecture) << "\n"
        << "model.reduction_ratio = " << spec.reduction_ratio << "\n";
    out << "model.modalities = ";
    for (size_t i = 0; i < spec.modalities.size(); ++i)
        out << (i ? "," : "") << spec.modalities[i].str();
    out << "\n";
    if (!spec.encoder.pretrained_weights.empty())
        out << "model.pretrained = " << spec.encoder.pretrained_weights << "\n";
}

int run_synth(const fs::path& out_dir, std::uint64_t seed, int per_class, int per_class_test,
              bool frozen, bool force) {
    if (per_class < 1 || per_class_test < 1) {
        std::cerr << "error: --per-class must be >= 1\n";
        return kExitUsage;
    }
    if (fs::exists(out_dir) && !fs::is_empty(out_dir) && !force) {
        std::cerr << "error: " << out_dir.string()
                  << " is not empty (use --force to overwrite)\n";
        return kExitUsage;
    }
    data::SynthConfig cfg;
    cfg.out_dir = out_dir;
    cfg.seed = seed;
    cfg.per_class_train = per_class;
    cfg.per_class_test = per_class_test;
    cfg.frozen_frames = frozen;
    data::synth_generate(cfg);
    std::cout << "wrote synthetic dataset to " << out_dir.string() << "\n";
    return kExitOk;
}

int run_labels_convert(const fs::path& manifest, const std::string& split_s) {
    const data::Split split = (split_s == "train") ? data::Split::TRAIN : data::Split::TEST;
    // Vocabulary violations surface from convert_label inside the loader.
    data::DatasetManifest man = data::load_manifest(manifest, split, /*check_frames=*/false);
    for (const auto& r : man.records) {
        const ClassLabel c = data::convert_label(r.activity, split);
        std::cout << r.video_id << "," << r.frame_start << "," << r.frame_end << ","
                  << r.activity << " -> " << c.str() << "\n";
    }
    return kExitOk;
}

int run_train(const fs::path& config_path, const std::vector<std::string>& overrides) {
    config::Config cfg = config::Config::from_file(config_path.string());
    for (const auto& o : overrides) cfg.apply_override(o);

    training::TrainConfig tc;
    tc.model = spec_from_config(cfg);
    tc.manifest = cfg.get_string("manifest");
    tc.out_dir = cfg.get_string("out_dir", "runs/default");
    tc.epochs = static_cast<int>(cfg.get_int("epochs", tc.epochs));
    tc.batch_size = static_cast<int>(cfg.get_int("batch_size", tc.batch_size));
    tc.learning_rate = cfg.get_double("learning_rate", tc.learning_rate);
    tc.weight_decay = cfg.get_double("weight_decay", tc.weight_decay);
    tc.contrastive_temperature =
        cfg.get_double("contrastive_temperature", tc.contrastive_temperature);
    tc.contrastive_weight = cfg.get_double("contrastive_weight", tc.contrastive_weight);
    tc.warm_restart_period = static_cast<int>(cfg.get_int("warm_restart_period", 10));
    tc.warm_restart_mult = static_cast<int>(cfg.get_int("warm_restart_mult", 2));
    tc.seed = static_cast<std::uint64_t>(cfg.get_int("seed", 7));
    tc.stride = cfg.get_int("stride", tc.stride);
    tc.augment = cfg.get_bool("augment", tc.augment);
    tc.validation_fraction = cfg.get_double("validation_fraction", tc.validation_fraction);
    // workers: 0 = deterministic single-threaded (the only mode implemented;
    // clip items are independent, so readers could be added without API change).
    const long workers = cfg.get_int("workers", 0);
    if (workers != 0)
        std::cerr << "note: workers=" << workers << " requested; running single-threaded\n";

    models::Model model(tc.model, tc.seed);
    training::TrainResult res = training::train(model, tc);
    write_spec_config(tc.model, tc.out_dir / "model.cfg");
    std::cout << "final checkpoint: " << res.final_checkpoint.string() << "\n"
              << "best checkpoint:  " << res.best_checkpoint.string()
              << " (val accuracy " << res.best_val_accuracy << ")\n";
    return kExitOk;
}

int run_eval(const fs::path& checkpoint, const fs::path& model_cfg_path,
             const fs::path& manifest, const std::string& rule_s, double gamma, double t1,
             double t2, long stride, const fs::path& out, bool force) {
    if (refuse_overwrite(out, force)) return kExitUsage;

    eval::EvalConfig ec;
    ec.stride = stride;
    if (rule_s == "gamma") {
        ec.rule = eval::InferenceRule::GAMMA;
        ec.gamma = gamma;
    } else {
        ec.rule = eval::InferenceRule::TWO_THRESHOLD;
        ec.t1 = t1;
        ec.t2 = t2;
    }

    fs::path cfg_path = model_cfg_path;
    if (cfg_path.empty()) cfg_path = checkpoint.parent_path() / "model.cfg";
    if (!fs::exists(cfg_path)) {
        std::cerr << "error: model config not found: " << cfg_path.string()
                  << " (pass --config)\n";
        return kExitData;
    }
    const models::ModelSpec spec = spec_from_config(config::Config::from_file(cfg_path.string()));
    eval::check_rule_head(ec.rule, spec.head);

    models::Model model(spec);
    training::load_model(model, checkpoint);

    data::DatasetManifest man = data::load_manifest(manifest, data::Split::TEST);
    eval::MetricsReport rep = eval::evaluate_run(model, man, ec);
    rep.config_hash = std::to_string(training::fnv1a(training::spec_signature(spec)));

    std::ofstream of(out);
    if (!of) throw std::runtime_error("cannot write " + out.string());
    of << eval::report_to_json(rep).dump(2) << "\n";
    std::cout << "accuracy " << rep.accuracy << ", seen " << rep.seen_accuracy
              << ", unseen recall " << rep.unseen_recall << ", auc_roc " << rep.auc_roc
              << " -> " << out.string() << "\n";
    return kExitOk;
}

int run_similarity(const fs::path& manifest, const std::string& split_s, const fs::path& out,
                   bool force) {
    if (refuse_overwrite(out, force)) return kExitUsage;
    const data::Split split = (split_s == "train") ? data::Split::TRAIN : data::Split::TEST;
    data::DatasetManifest man = data::load_manifest(manifest, split);
    analysis::SimilarityReport rep = analysis::similarity_report(man);
    if (out.extension() == ".json")
        analysis::write_similarity_json(rep, out.string());
    else
        analysis::write_similarity_csv(rep, out.string());
    std::cout << "wrote similarity table to " << out.string() << "\n";
    return kExitOk;
}

int run_bench(const fs::path& config_path, int runs, const fs::path& out, bool force) {
    if (runs < 1) {
        std::cerr << "error: --runs must be >= 1\n";
        return kExitUsage;
    }
    if (refuse_overwrite(out, force)) return kExitUsage;
    config::Config cfg = config::Config::from_file(config_path.string());
    const models::ModelSpec spec = spec_from_config(cfg);
    models::Model model(spec, static_cast<std::uint64_t>(cfg.get_int("seed", 7)));

    bench::LatencyStats stats = bench::measure_latency(
        model, runs, static_cast<int>(cfg.get_int("warmup", 3)),
        static_cast<std::uint64_t>(cfg.get_int("seed", 7)));
    nlohmann::json j = bench::bench_report(model, stats, cfg.get_string("hardware", "cpu"));

    std::ofstream of(out);
    if (!of) throw std::runtime_error("cannot write " + out.string());
    of << j.dump(2) << "\n";
    std::cout << "flops " << j["flops"] << ", mean latency " << stats.mean << " s, realtime "
              << (bench::realtime_check(stats) ? "yes" : "no") << " -> " << out.string()
              << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"dmskit: driver-monitoring toolkit"};
    app.require_subcommand(1);

    // synth
    auto* synth = app.add_subcommand("synth", "generate the synthetic open-set dataset");
    std::string synth_out;
    std::uint64_t synth_seed = 7;
    int per_class = 20, per_class_test = 5;
    bool frozen = false, synth_force = false;
    synth->add_option("--out", synth_out, "output directory")->required();
    synth->add_option("--seed", synth_seed, "rng seed");
    synth->add_option("--per-class", per_class, "training clips per class");
    synth->add_option("--per-class-test", per_class_test, "test clips per class");
    synth->add_flag("--frozen-frames", frozen, "repeat one frame through each clip");
    synth->add_flag("--force", synth_force, "overwrite a non-empty output directory");

    // labels convert
    auto* labels = app.add_subcommand("labels", "label utilities");
    auto* convert = labels->add_subcommand("convert", "print merged class labels");
    std::string lbl_manifest, lbl_split;
    convert->add_option("--manifest", lbl_manifest, "manifest CSV")->required();
    convert->add_option("--split", lbl_split, "train or test")
        ->required()
        ->check(CLI::IsMember({"train", "test"}));
    labels->require_subcommand(1);

    // train
    auto* train = app.add_subcommand("train", "train a model from a config file");
    std::string train_cfg;
    std::vector<std::string> overrides;
    train->add_option("--config", train_cfg, "key=value config file")->required();
    train->add_option("--override", overrides, "key=value override (repeatable)");

    // eval
    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on a test manifest");
    std::string ckpt, eval_manifest, rule, eval_out, model_cfg;
    double gamma = 0.5, t1 = 0.5, t2 = 0.5;
    long stride = 16;
    bool eval_force = false;
    eval_cmd->add_option("--checkpoint", ckpt, "model checkpoint")->required();
    eval_cmd->add_option("--config", model_cfg, "model config (default: model.cfg next to the checkpoint)");
    eval_cmd->add_option("--manifest", eval_manifest, "test manifest CSV")->required();
    eval_cmd->add_option("--rule", rule, "inference rule")
        ->required()
        ->check(CLI::IsMember({"gamma", "two-threshold"}));
    eval_cmd->add_option("--gamma", gamma, "rejection threshold in [0,1]");
    eval_cmd->add_option("--t1", t1, "normal-driving threshold in [0,1]");
    eval_cmd->add_option("--t2", t2, "conditional threshold in [0,1]");
    eval_cmd->add_option("--stride", stride, "window stride");
    eval_cmd->add_option("--out", eval_out, "metrics report JSON")->required();
    eval_cmd->add_flag("--force", eval_force, "overwrite an existing report");

    // similarity
    auto* sim = app.add_subcommand("similarity", "frame-similarity analysis");
    std::string sim_manifest, sim_out, sim_split = "train";
    bool sim_force = false;
    sim->add_option("--manifest", sim_manifest, "manifest CSV")->required();
    sim->add_option("--split", sim_split, "train or test")
        ->check(CLI::IsMember({"train", "test"}));
    sim->add_option("--out", sim_out, "output table (.csv or .json)")->required();
    sim->add_flag("--force", sim_force, "overwrite an existing table");

    // bench
    auto* bench_cmd = app.add_subcommand("bench", "efficiency benchmark");
    std::string bench_cfg, bench_out;
    int runs = 1000;
    bool bench_force = false;
    bench_cmd->add_option("--config", bench_cfg, "model config file")->required();
    bench_cmd->add_option("--runs", runs, "timed inference runs");
    bench_cmd->add_option("--out", bench_out, "benchmark report JSON")->required();
    bench_cmd->add_flag("--force", bench_force, "overwrite an existing report");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        app.exit(e);
        return kExitUsage;
    }

    // Threshold ranges are usage errors, checked before any data is touched.
    if (eval_cmd->parsed()) {
        for (double v : {gamma, t1, t2})
            if (v < 0.0 || v > 1.0) {
                std::cerr << "error: thresholds must lie in [0,1]\n";
                return kExitUsage;
            }
        if (stride < 1) {
            std::cerr << "error: --stride must be >= 1\n";
            return kExitUsage;
        }
    }

    try {
        if (synth->parsed())
            return run_synth(synth_out, synth_seed, per_class, per_class_test, frozen,
                             synth_force);
        if (labels->parsed()) return run_labels_convert(lbl_manifest, lbl_split);
        if (train->parsed()) return run_train(train_cfg, overrides);
        if (eval_cmd->parsed())
            return run_eval(ckpt, model_cfg, eval_manifest, rule, gamma, t1, t2, stride,
                            eval_out, eval_force);
        if (sim->parsed()) return run_similarity(sim_manifest, sim_split, sim_out, sim_force);
        if (bench_cmd->parsed()) return run_bench(bench_cfg, runs, bench_out, bench_force);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitData;
    }
    return kExitUsage;
}
