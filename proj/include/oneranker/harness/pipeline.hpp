#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "oneranker/data/types.hpp"
#include "oneranker/harness/config.hpp"
#include "oneranker/harness/metrics.hpp"
#include "oneranker/harness/trainer.hpp"

namespace oneranker::harness {

/// File names inside a run directory.
inline constexpr const char* kConfigFile = "config.json";
inline constexpr const char* kRunManifestFile = "run_manifest.json";
inline constexpr const char* kMetricsFile = "metrics.csv";
inline constexpr const char* kEvalFile = "eval_metrics.csv";
inline constexpr const char* kCheckpointFile = "checkpoint.bin";
inline constexpr const char* kConsistencyFile = "consistency.csv";
inline constexpr const char* kBoxplotFile = "consistency_boxplot.svg";
inline constexpr const char* kOverlapFile = "consistency_overlap.svg";

/// Applies the variant switches and the dataset's vocabulary sizes.
RunConfig effective_config(RunConfig config, const data::DatasetManifest& manifest);

struct ExperimentResult {
    RunConfig config;
    TrainOutcome training;
    std::vector<MetricsRow> test_rows;
    std::optional<ConsistencyReport> consistency;  // present when the variant has a ranker
};

/// Trains, evaluates on the test split and writes config.json, run_manifest.json,
/// metrics.csv, checkpoint.bin and, with a ranker, the consistency files.
ExperimentResult run_experiment(const RunConfig& config, const data::Dataset& dataset,
                                const std::filesystem::path& dir, const ProgressFn& progress = {});

/// Metrics of a saved checkpoint on one split ("valid" or "test").
std::vector<MetricsRow> evaluate_checkpoint(const std::filesystem::path& checkpoint, const RunConfig& config,
                                            const data::Dataset& dataset, const std::string& split);

const std::vector<data::TrainingInstance>& split_of(const data::Dataset& dataset, const std::string& split);

/// consistency.csv plus the boxplot and single-series overlap plot.
void write_consistency(const std::filesystem::path& dir, const ConsistencyReport& report, const std::string& label);

double metric_value(const std::vector<MetricsRow>& rows, const std::string& metric, std::size_t k);

}  // namespace oneranker::harness
