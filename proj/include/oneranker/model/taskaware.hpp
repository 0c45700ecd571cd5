#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "oneranker/data/semantic_id.hpp"
#include "oneranker/model/config.hpp"
#include "oneranker/tensor/nn.hpp"

namespace oneranker::model {

using tensor::AttentionMask;
using tensor::ParameterStore;
using tensor::Tensor;

/// Query order [tasks; fakes]. Task rows see tasks 0..i and every fake; fake
/// rows see every task and themselves.
AttentionMask build_hetero_mask(std::size_t m_total, std::size_t k);

template <typename T>
struct HeteroLayer {
    tensor::LayerNorm<T> ln_cross, ln_self, ln_ffn;
    tensor::MultiHeadAttention<T> cross, self;
    tensor::FeedForward<T> ffn;
};

template <typename T>
struct HeteroOutput {
    Tensor<T> task_reps;  // m_total x d
    Tensor<T> fake_reps;  // k x d, undefined when k = 0
};

/// Step-2 decoder. Each layer runs cross-attention to H1, then masked
/// self-attention over [tasks; fakes], then a feed-forward sublayer, all
/// pre-norm with residuals. `cross_first = false` swaps the first two.
template <typename T>
struct HeteroDecoder {
    std::vector<HeteroLayer<T>> layers;
    tensor::LayerNorm<T> final_norm;
    bool cross_first = true;
    bool hetero_mask = true;

    HeteroDecoder() = default;
    HeteroDecoder(ParameterStore<T>& store, const ModelConfig& cfg);

    HeteroOutput<T> operator()(const Tensor<T>& tasks, const Tensor<T>& fakes, const Tensor<T>& h1) const;
};

template <typename T>
HeteroOutput<T> hetero_decoder_forward(const HeteroDecoder<T>& decoder, const Tensor<T>& tasks,
                                       const Tensor<T>& fakes, const Tensor<T>& h1) {
    return decoder(tasks, fakes, h1);
}

/// s_target for every task row at once: row i is
/// sum_j MLP(concat(fake_j, task_i)) with MLP = 2d -> hidden (SiLU) -> k.
/// The first layer is split into fake and task halves so each half is
/// projected once.
template <typename T>
struct TargetChannel {
    tensor::Linear<T> fake_in;  // d -> hidden, no bias
    tensor::Linear<T> task_in;  // d -> hidden, carries the first-layer bias
    tensor::Linear<T> out;      // hidden -> k

    TargetChannel() = default;
    TargetChannel(ParameterStore<T>& store, const std::string& name, std::size_t d, std::size_t hidden,
                  std::size_t k);

    Tensor<T> operator()(const Tensor<T>& task_reps, const Tensor<T>& fake_reps) const;
};

template <typename T>
Tensor<T> target_channel(const TargetChannel<T>& mlp, const Tensor<T>& task_reps, const Tensor<T>& fake_reps) {
    return mlp(task_reps, fake_reps);
}

/// e_user = concat(e_task, s_target) along columns; s_target may be undefined.
template <typename T>
Tensor<T> user_representation(const Tensor<T>& e_task, const Tensor<T>& s_target);

/// concat(e_item, cos(e_item, centers)); centers may be undefined.
template <typename T>
Tensor<T> enhance_item(const Tensor<T>& e_item, const Tensor<T>& centers);

/// Row-wise inner products of user reps (a x (d+k)) with item reps (b x (d+k)).
template <typename T>
Tensor<T> score_user_item(const Tensor<T>& user_rep, const Tensor<T>& item_rep);

/// Elementwise mean over the value-token representations.
template <typename T>
Tensor<T> bag_value_heads(const Tensor<T>& value_reps);

/// Plain-value view of what generation needs from one forward pass.
struct GenerationInputs {
    std::size_t d = 0;
    std::size_t k = 0;  // 0 when the target channel is disabled
    std::vector<std::vector<double>> e_task;    // per head, d values
    std::vector<std::vector<double>> s_target;  // per head, k values
    std::vector<std::vector<double>> codebooks;  // per level, V_l x d row-major
    std::vector<std::size_t> level_vocab;
    std::vector<double> centers;  // k x d
};

struct GeneratedPath {
    data::SemanticId sid;
    double score = 0.0;  // path log-probability under the producing head
    std::size_t head = 0;
};

/// Log-softmax level scores of one head given its conditioned task vector.
std::vector<double> level_log_probs(const GenerationInputs& in, std::size_t head, std::size_t level,
                                    const std::vector<double>& conditioned);

/// Per-head beam search over the levels; returns the n best distinct paths
/// across heads (a path found by several heads keeps its best score). When the
/// beams yield fewer than n distinct paths the beam is widened.
std::vector<GeneratedPath> mtp_generate(const GenerationInputs& inputs, std::size_t beam_width, std::size_t n);

}  // namespace oneranker::model
