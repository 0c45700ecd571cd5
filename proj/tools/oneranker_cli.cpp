// Command-line entry point: gen-data, train, eval, ablate, consistency, grad-check.

#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "json.hpp"
#include "oneranker/data/io.hpp"
#include "oneranker/data/synth.hpp"
#include "oneranker/harness/config.hpp"
#include "oneranker/harness/gradsuite.hpp"
#include "oneranker/harness/pipeline.hpp"

namespace fs = std::filesystem;
using namespace oneranker;
using namespace oneranker::harness;

namespace {

struct CommonOptions {
    std::string config;
    std::uint64_t seed = 0;
    bool seed_set = false;
    std::string out_dir;
    std::vector<std::string> sets;
};

void add_common(CLI::App* cmd, CommonOptions& o) {
    cmd->add_option("--config", o.config, "JSON run config (sections run, data, model, loss, optim, train, eval)");
    cmd->add_option_function<std::uint64_t>(
        "--seed", [&o](const std::uint64_t& s) { o.seed = s; o.seed_set = true; }, "Overrides run.seed");
    cmd->add_option("--out-dir", o.out_dir, "Output root; overrides ONERANKER_OUT and run.out_dir");
    cmd->add_option("--set", o.sets, "Dotted override section.key=value (repeatable)");
}

RunConfig resolve(const CommonOptions& o) {
    RunConfig cfg = o.config.empty() ? RunConfig{} : load_run_config(o.config);
    for (const auto& s : o.sets) apply_override(cfg, s);
    if (o.seed_set) cfg.seed = o.seed;
    if (!o.out_dir.empty()) {
        cfg.out_dir = o.out_dir;
    } else if (const char* env = std::getenv("ONERANKER_OUT"); env && *env) {
        cfg.out_dir = env;
    }
    return cfg;
}

void echo_config(const RunConfig& cfg, const fs::path& dir) {
    fs::create_directories(dir);
    data::write_text(dir / kConfigFile, to_json(cfg).dump(2) + "\n");
    std::cerr << "effective config: " << to_json(cfg).dump() << "\n";
}

data::Dataset load_data(const RunConfig& cfg) {
    const fs::path dir = cfg.data_dir;
    if (!fs::exists(dir / "manifest.json")) {
        throw std::runtime_error("no dataset at '" + dir.string() + "'; run gen-data first");
    }
    return data::load_dataset_dir(dir);
}

void log_epoch(const EpochLog& e) {
    std::fprintf(stderr, "epoch %zu loss=%.5f mtp=%.5f rank=%.5f dc=%.5f\n", e.epoch, e.loss, e.mtp, e.rank, e.dc);
}

int cmd_gen_data(const RunConfig& cfg) {
    cfg.data.validate();
    const auto m = data::generate_synthetic_dataset(cfg.data, cfg.seed, cfg.data_dir);
    std::cout << "dataset " << cfg.data_dir << ": " << m.record_count << " records, " << m.train_count << "/"
              << m.valid_count << "/" << m.test_count << " train/valid/test, fingerprint " << m.fingerprint << "\n";
    return 0;
}

int cmd_train(const RunConfig& base) {
    const auto ds = load_data(base);
    const auto cfg = effective_config(base, ds.manifest);
    const fs::path dir = cfg.out_dir;
    echo_config(cfg, dir);
    const auto res = run_experiment(cfg, ds, dir, log_epoch);
    std::cout << "trained " << cfg.variant << ": test hr@5=" << format_value(metric_value(res.test_rows, "hr", 5))
              << " -> " << (dir / kMetricsFile).string() << "\n";
    return 0;
}

int cmd_eval(const RunConfig& base, const std::string& split, const std::string& ckpt) {
    const auto ds = load_data(base);
    const auto cfg = effective_config(base, ds.manifest);
    const fs::path dir = cfg.out_dir;
    const fs::path path = ckpt.empty() ? dir / kCheckpointFile : fs::path(ckpt);
    const auto rows = evaluate_checkpoint(path, cfg, ds, split);
    data::write_text(dir / kEvalFile, metrics_csv(rows));
    std::cout << metrics_csv(rows);
    return 0;
}

int cmd_consistency(const RunConfig& base, const std::string& split, const std::string& ckpt) {
    const auto ds = load_data(base);
    const auto cfg = effective_config(base, ds.manifest);
    const fs::path dir = cfg.out_dir;
    const fs::path path = ckpt.empty() ? dir / kCheckpointFile : fs::path(ckpt);
    const auto model = load_checkpoint(path, cfg, ds.manifest.fingerprint);
    const auto rep = consistency_from_scores(score_split(*model, split_of(ds, split), cfg.threads));
    write_consistency(dir, rep, cfg.variant);
    std::cout << "top-1 overlap " << format_value(rep.overlap[0]) << ", median deviation "
              << format_value(box_stats(rep.all_deviations).median) << " -> " << (dir / kConsistencyFile).string()
              << "\n";
    return 0;
}

std::vector<std::string> parse_variants(const std::string& spec) {
    if (spec == "all") return variant_names();
    std::vector<std::string> out;
    std::stringstream ss(spec);
    for (std::string v; std::getline(ss, v, ',');) {
        if (v.empty()) continue;
        with_variant(RunConfig{}, v);  // validates the name
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("--variants: no variant names given");
    return out;
}

int cmd_ablate(const RunConfig& base, const std::string& spec) {
    const auto ds = load_data(base);
    const fs::path root = base.out_dir;
    fs::create_directories(root);
    data::write_text(root / kConfigFile, to_json(base).dump(2) + "\n");
    std::map<std::string, ExperimentResult> done;
    std::string summary = "variant,metric,k,value\n";
    std::vector<std::pair<std::string, const ConsistencyReport*>> overlap;
    for (const auto& v : parse_variants(spec)) {
        RunConfig cfg = base;
        cfg.variant = v;
        const fs::path dir = root / v;
        const auto canon = canonical_variant(v);
        if (canon != v && done.count(canon)) {
            // Same training run as another variant: reuse its artifacts.
            fs::create_directories(dir);
            for (const auto& f : {kMetricsFile, kRunManifestFile, kCheckpointFile}) {
                fs::copy_file(root / canon / f, dir / f, fs::copy_options::overwrite_existing);
            }
            data::write_text(dir / kConfigFile, to_json(effective_config(cfg, ds.manifest)).dump(2) + "\n");
            done.emplace(v, done.at(canon));
        } else {
            std::cerr << "variant " << v << "\n";
            done.emplace(v, run_experiment(cfg, ds, dir, log_epoch));
        }
        for (const auto& r : done.at(v).test_rows) {
            summary += v + "," + r.metric + "," + std::to_string(r.k) + "," + format_value(r.value) + "\n";
        }
        std::cout << v << " hr@5=" << format_value(metric_value(done.at(v).test_rows, "hr", 5)) << "\n";
    }
    for (const auto& [v, res] : done) {
        if (res.consistency) overlap.emplace_back(v, &*res.consistency);
    }
    data::write_text(root / "ablation.csv", summary);
    if (!overlap.empty()) data::write_text(root / kOverlapFile, overlap_svg(overlap, "Top-K overlap by variant"));
    return 0;
}

int cmd_grad_check(const RunConfig& cfg, double tol) {
    const auto entries = run_gradient_suite(cfg.seed, tol);
    bool ok = true;
    for (const auto& e : entries) {
        std::printf("%s %s max_rel=%.3e\n", e.report.passed ? "ok  " : "FAIL", e.name.c_str(), e.report.max_rel_error());
        if (!e.report.passed) {
            std::fputs(e.report.summary().c_str(), stdout);
            ok = false;
        }
    }
    if (!ok) throw std::runtime_error("gradient check failed (tolerance " + std::to_string(tol) + ")");
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"OneRanker: unified generation and ranking on synthetic data"};
    app.require_subcommand(1, 1);

    CommonOptions common;
    std::string split = "test", ckpt, variants = "all";
    double tol = 1e-4;

    auto* gen = app.add_subcommand("gen-data", "Generate the synthetic dataset into run.data_dir");
    auto* trn = app.add_subcommand("train", "Train one variant; writes metrics, checkpoint and config echo");
    auto* evl = app.add_subcommand("eval", "Evaluate a checkpoint on a split");
    auto* abl = app.add_subcommand("ablate", "Train and evaluate the variant matrix");
    auto* con = app.add_subcommand("consistency", "Step-2 vs Step-3 rank agreement of a checkpoint");
    auto* grd = app.add_subcommand("grad-check", "Finite-difference gradient checks");
    for (auto* c : {gen, trn, evl, abl, con, grd}) add_common(c, common);
    for (auto* c : {evl, con}) {
        c->add_option("--split", split, "valid or test")->check(CLI::IsMember({"valid", "test"}));
        c->add_option("--checkpoint", ckpt, "Checkpoint path (default <out-dir>/checkpoint.bin)");
    }
    abl->add_option("--variants", variants, "'all' or a comma-separated list");
    grd->add_option("--tolerance", tol, "Maximum relative error");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cout << nlohmann::json{{"status", "error"}, {"error", e.what()}}.dump() << "\n";
        return 2;
    }

    try {
        const auto cfg = resolve(common);
        if (gen->parsed()) return cmd_gen_data(cfg);
        if (trn->parsed()) return cmd_train(cfg);
        if (evl->parsed()) return cmd_eval(cfg, split, ckpt);
        if (abl->parsed()) return cmd_ablate(cfg, variants);
        if (con->parsed()) return cmd_consistency(cfg, split, ckpt);
        return cmd_grad_check(cfg, tol);
    } catch (const std::exception& e) {
        std::cout << nlohmann::json{{"status", "error"}, {"error", e.what()}}.dump() << "\n";
        return 1;
    }
}
