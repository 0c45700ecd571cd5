#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "json.hpp"
#include "oneranker/data/synth.hpp"
#include "oneranker/model/config.hpp"
#include "oneranker/model/losses.hpp"

namespace oneranker::harness {

struct OptimConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    friend bool operator==(const OptimConfig&, const OptimConfig&) = default;
};

struct TrainConfig {
    std::size_t epochs = 4;
    std::size_t batch_size = 8;
    std::size_t max_train = 0;  // 0 = whole split; otherwise the first N instances
    friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct EvalConfig {
    std::vector<std::size_t> ks{1, 3, 5, 10, 15};
    std::size_t generate_n = 10;  // paths reported by mtp generation
    friend bool operator==(const EvalConfig&, const EvalConfig&) = default;
};

struct RunConfig {
    std::uint64_t seed = 1;
    std::string variant = "full";
    std::string data_dir = "data";
    std::string out_dir = "runs";
    std::size_t threads = 1;

    data::DataConfig data;
    model::ModelConfig model;
    model::LossWeights loss;
    OptimConfig optim;
    TrainConfig train;
    EvalConfig eval;

    void validate() const;
};

/// Sections: run, data, model, loss, optim, train, eval. Model keys derived
/// from the dataset (vocabulary sizes, item count) are not part of the file.
nlohmann::ordered_json to_json(const RunConfig& config);

/// Overrides `base` with the keys present in `j`. Unknown sections or keys
/// throw std::invalid_argument naming the key and the nearest valid one.
RunConfig run_config_from_json(const nlohmann::json& j, RunConfig base = {});

RunConfig load_run_config(const std::string& path);

/// Applies "section.key=value". The value is parsed as JSON when possible and
/// taken as a string otherwise.
void apply_override(RunConfig& config, const std::string& assignment);

/// Every valid dotted key, e.g. "loss.gamma".
std::vector<std::string> config_keys();
std::string nearest_key(const std::string& key);

/// Hex digest of everything that determines a trained model: the config minus
/// paths and the thread count.
std::string run_fingerprint(const RunConfig& config);

/// Table-2 and Table-3 variants in report order, baseline first.
const std::vector<std::string>& variant_names();

/// Sets the switches that define `variant` on top of `config` (the baseline
/// "full" changes nothing). Unknown names throw.
RunConfig with_variant(RunConfig config, const std::string& variant);

/// Baseline plus the nine named variants, each derived from `base`.
std::vector<RunConfig> ablation_matrix(const RunConfig& base);

/// Variants whose training run is identical to another entry ("s2_baseline"
/// repeats "s2"); maps to the entry whose results it shares.
std::string canonical_variant(const std::string& variant);

std::size_t levenshtein(const std::string& a, const std::string& b);

}  // namespace oneranker::harness
