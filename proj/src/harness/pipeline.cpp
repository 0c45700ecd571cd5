#include "oneranker/harness/pipeline.hpp"

#include <stdexcept>

#include "oneranker/data/io.hpp"

namespace oneranker::harness {

namespace fs = std::filesystem;

RunConfig effective_config(RunConfig config, const data::DatasetManifest& manifest) {
    const auto variant = config.variant;
    config = with_variant(std::move(config), variant);
    configure_for_dataset(config, manifest);
    config.validate();
    return config;
}

const std::vector<data::TrainingInstance>& split_of(const data::Dataset& dataset, const std::string& split) {
    if (split == "train") return dataset.train;
    if (split == "valid") return dataset.valid;
    if (split == "test") return dataset.test;
    throw std::invalid_argument("unknown split '" + split + "' (expected train, valid or test)");
}

double metric_value(const std::vector<MetricsRow>& rows, const std::string& metric, std::size_t k) {
    for (auto it = rows.rbegin(); it != rows.rend(); ++it) {
        if (it->metric == metric && it->k == k) return it->value;
    }
    throw std::invalid_argument("no " + metric + "@" + std::to_string(k) + " row");
}

void write_consistency(const fs::path& dir, const ConsistencyReport& report, const std::string& label) {
    fs::create_directories(dir);
    data::write_text(dir / kConsistencyFile, consistency_csv(report));
    data::write_text(dir / kBoxplotFile, boxplot_svg(report, "Rank deviation by Step-3 rank (" + label + ")"));
    data::write_text(dir / kOverlapFile, overlap_svg({{label, &report}}, "Top-K overlap (" + label + ")"));
}

ExperimentResult run_experiment(const RunConfig& base, const data::Dataset& dataset, const fs::path& dir,
                                const ProgressFn& progress) {
    ExperimentResult res;
    res.config = effective_config(base, dataset.manifest);
    const auto& cfg = res.config;
    fs::create_directories(dir);
    data::write_text(dir / kConfigFile, to_json(cfg).dump(2) + "\n");

    auto model = make_model(cfg, dataset);
    res.training = train(*model, dataset, cfg, progress);
    save_checkpoint(dir / kCheckpointFile, *model, cfg, dataset.manifest.fingerprint);

    const auto scored = score_split(*model, dataset.test, cfg.threads);
    res.test_rows = ranking_metrics(scored, cfg.eval.ks, cfg.train.epochs, "test");
    auto rows = res.training.rows;
    rows.insert(rows.end(), res.test_rows.begin(), res.test_rows.end());
    data::write_text(dir / kMetricsFile, metrics_csv(rows));

    if (model->has_ranker()) {
        res.consistency = consistency_from_scores(scored);
        write_consistency(dir, *res.consistency, cfg.variant);
    }

    nlohmann::ordered_json manifest;
    manifest["variant"] = cfg.variant;
    manifest["seed"] = cfg.seed;
    manifest["fingerprint"] = run_fingerprint(cfg);
    manifest["data_fingerprint"] = dataset.manifest.fingerprint;
    manifest["parameter_count"] = model->store().parameter_count();
    manifest["loss"] = to_json(cfg)["loss"];
    manifest["switches"] = {{"use_target", cfg.model.use_target},
                            {"shared_head", cfg.model.shared_head},
                            {"cross_attention_first", cfg.model.cross_attention_first},
                            {"hetero_mask", cfg.model.hetero_mask},
                            {"use_ranker", cfg.model.use_ranker},
                            {"inject_s2_kv", cfg.model.inject_s2_kv}};
    std::vector<std::string> groups;
    for (const auto& [name, _] : model->store().entries()) {
        const auto g = name.substr(0, name.find('.'));
        if (groups.empty() || groups.back() != g) groups.push_back(g);
    }
    manifest["parameter_groups"] = groups;
    data::write_text(dir / kRunManifestFile, manifest.dump(2) + "\n");
    return res;
}

std::vector<MetricsRow> evaluate_checkpoint(const fs::path& checkpoint, const RunConfig& config,
                                            const data::Dataset& dataset, const std::string& split) {
    const auto model = load_checkpoint(checkpoint, config, dataset.manifest.fingerprint);
    const auto& insts = split_of(dataset, split);
    if (insts.empty()) throw std::invalid_argument("split '" + split + "' is empty");
    return ranking_metrics(score_split(*model, insts, config.threads), config.eval.ks, config.train.epochs, split);
}

}  // namespace oneranker::harness
