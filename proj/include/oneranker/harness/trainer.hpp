#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <memory>
#include <string>
#include <unordered_map>
#include <vector>

#include "oneranker/data/types.hpp"
#include "oneranker/harness/config.hpp"
#include "oneranker/harness/metrics.hpp"
#include "oneranker/model/oneranker.hpp"

namespace oneranker::harness {

using Model = model::OneRankerModel<float>;

/// Copies vocabulary sizes, item count and per-level code vocabularies from
/// the dataset into the model section.
void configure_for_dataset(RunConfig& config, const data::DatasetManifest& manifest);

/// Adam with bias correction. Parameters the model marks untrainable, or that
/// received no gradient in this step, are left untouched.
class Adam {
public:
    explicit Adam(OptimConfig cfg) : cfg_(cfg) {}
    void step(Model& model);
    std::size_t steps() const { return t_; }

private:
    OptimConfig cfg_;
    std::size_t t_ = 0;
    std::unordered_map<std::string, std::vector<double>> m_, v_;
};

/// Scores of one instance's candidates from both stages.
struct ScoredInstance {
    std::vector<double> step2;  // value-head generation score
    std::vector<double> step3;  // ranker score; empty without the ranker
    std::vector<std::uint32_t> ids;
    std::vector<double> gains;  // candidate eCPM
    std::size_t positive = 0;
};

/// Forward passes without gradient recording, parallel over instances.
std::vector<ScoredInstance> score_split(const Model& model, const std::vector<data::TrainingInstance>& instances,
                                        std::size_t threads);

/// Mean HR@K and NDCG@K rows, ranking by Step-3 scores when present.
std::vector<MetricsRow> ranking_metrics(const std::vector<ScoredInstance>& scored, const std::vector<std::size_t>& ks,
                                        std::size_t epoch, const std::string& split);

/// Step-2 vs Step-3 agreement over scored instances that have ranker scores.
ConsistencyReport consistency_from_scores(const std::vector<ScoredInstance>& scored);

struct EpochLog {
    std::size_t epoch = 0;
    double loss = 0, mtp = 0, rank = 0, dc = 0;
};

struct TrainOutcome {
    std::vector<MetricsRow> rows;  // train loss and per-epoch validation metrics
    std::vector<EpochLog> epochs;
};

using ProgressFn = std::function<void(const EpochLog&)>;

/// Builds the model for `config` and initializes the fake-item bank from the
/// dataset's items. `config.model` must already carry the dataset sizes.
std::unique_ptr<Model> make_model(const RunConfig& config, const data::Dataset& dataset);

/// Optimizes the model's total loss over the training split. Aborts with a
/// diagnostic on a non-finite loss. With `run.threads` > 1, each batch is
/// split over per-thread replicas whose gradients are summed in thread order.
TrainOutcome train(Model& model, const data::Dataset& dataset, const RunConfig& config,
                   const ProgressFn& progress = {});

/// Checkpoint: magic line, run fingerprint, data fingerprint, effective
/// config, then every named parameter with its shape and values.
void save_checkpoint(const std::filesystem::path& path, const Model& model, const RunConfig& config,
                     const std::string& data_fingerprint);

struct LoadedCheckpoint {
    std::string fingerprint;
    std::string data_fingerprint;
    nlohmann::ordered_json config;
};

/// Reads the header only.
LoadedCheckpoint read_checkpoint_header(const std::filesystem::path& path);

/// Restores parameters into a model built from `config`. Throws when the run
/// or data fingerprint differs or a parameter is missing or misshapen.
std::unique_ptr<Model> load_checkpoint(const std::filesystem::path& path, const RunConfig& config,
                                       const std::string& data_fingerprint);

}  // namespace oneranker::harness
