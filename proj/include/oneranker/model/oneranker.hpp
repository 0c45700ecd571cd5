#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "oneranker/data/types.hpp"
#include "oneranker/model/backbone.hpp"
#include "oneranker/model/config.hpp"
#include "oneranker/model/losses.hpp"
#include "oneranker/model/ranker.hpp"
#include "oneranker/model/taskaware.hpp"

namespace oneranker::model {

template <typename T>
struct ForwardResult {
    Tensor<T> h1;
    Tensor<T> task_reps;    // (m + v) x d
    Tensor<T> fake_reps;    // k x d, undefined without the target channel
    Tensor<T> e_task;       // per head (m interest heads, then the bagged value head) x d
    Tensor<T> s_target;     // heads x k, undefined without the target channel
    Tensor<T> gen_logits;   // 1 x n, value-head scores of the candidates
    Tensor<T> rank_scores;  // n x 1, undefined without the ranker
    LossComponents<T> parts;
    Tensor<T> total;        // defined when losses were requested
    std::size_t value_target = 0;
};

/// The three-step model: backbone, task-aware decoder with dual-channel heads,
/// and the single-layer ranker. Which pieces exist follows the config switches.
template <typename T>
class OneRankerModel {
public:
    OneRankerModel(const ModelConfig& config, std::uint64_t seed);

    const ModelConfig& config() const { return cfg_; }
    ParameterStore<T>& store() { return store_; }
    const ParameterStore<T>& store() const { return store_; }

    /// k-means over the items' composite code embeddings, written into the
    /// fake-item bank. No-op without the target channel.
    void init_fake_items(const std::vector<data::SemanticId>& item_sids, std::uint64_t seed);

    /// False for parameters the optimizer must leave alone.
    bool trainable(const std::string& name) const;

    /// Full forward pass for one instance. With `with_loss`, the MTP value head
    /// trains on a candidate drawn by eCPM using `value_seed`.
    ForwardResult<T> forward(const data::TrainingInstance& instance, const LossWeights& weights,
                             std::uint64_t value_seed, bool with_loss) const;

    /// Composite code embedding of each path: sum over levels of codebook rows.
    Tensor<T> composite(const std::vector<const data::SemanticId*>& sids) const;

    /// Plain values for generation from a finished forward pass.
    GenerationInputs generation_inputs(const ForwardResult<T>& fwd) const;

    const Backbone<T>& backbone() const { return backbone_; }
    const HeteroDecoder<T>& hetero() const { return hetero_; }
    const RDecoder<T>& ranker() const { return ranker_; }
    const std::vector<Tensor<T>>& codebooks() const { return codebooks_; }
    const Tensor<T>& fake_items() const { return fakes_; }
    const Tensor<T>& task_tokens() const { return tasks_; }
    const TargetChannel<T>& target() const { return target_; }
    bool has_ranker() const { return cfg_.use_ranker; }

private:
    Tensor<T> heads(const Tensor<T>& reps) const;

    ModelConfig cfg_;
    ParameterStore<T> store_;
    Backbone<T> backbone_;
    Tensor<T> tasks_;
    Tensor<T> fakes_;
    HeteroDecoder<T> hetero_;
    std::vector<tensor::Linear<T>> heads_;
    TargetChannel<T> target_;
    std::vector<Tensor<T>> codebooks_;
    RDecoder<T> ranker_;
};

}  // namespace oneranker::model
