#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

#include "oneranker/tensor/tensor.hpp"

namespace oneranker::model {

using tensor::Tensor;

struct LossWeights {
    double alpha = 1.0;  // generation (MTP)
    double beta = 1.0;   // pairwise ranking
    double gamma = 1.0;  // distributional consistency
    double tau = 0.5;

    void validate() const;
    friend bool operator==(const LossWeights&, const LossWeights&) = default;
};

/// Negative log-likelihood of each head's ground-truth path.
///
/// `user_reps` rows are per-head e_task (H x d); `s_target` is H x k or
/// undefined. `code_cosines[l]` is V_l x k (cosines of level-l codes to the
/// fake centers) or undefined. Level l conditions e_task on the sum of the
/// ground-truth prefix code embeddings (teacher forcing).
template <typename T>
Tensor<T> mtp_loss(const Tensor<T>& user_reps, const Tensor<T>& s_target,
                   const std::vector<std::vector<std::uint32_t>>& gt_paths, std::span<const Tensor<T>> codebooks,
                   std::span<const Tensor<T>> code_cosines);

/// Mean over all pairs with y_i > y_j of -log sigmoid(s_i - s_j). Scores may
/// be a row or a column. Returns 0 and bumps bpr_no_pair_count() when no pair
/// qualifies.
template <typename T>
Tensor<T> bpr_rank_loss(const Tensor<T>& scores, std::span<const double> labels);
std::uint64_t bpr_no_pair_count();

/// -sum_i softmax(s / tau)_i * log_softmax(g)_i with s detached.
template <typename T>
Tensor<T> dc_loss(const Tensor<T>& ranker_scores, const Tensor<T>& generator_logits, double tau);

template <typename T>
struct LossComponents {
    Tensor<T> mtp, rank, dc;  // undefined components are skipped
};

template <typename T>
Tensor<T> total_loss(const LossComponents<T>& parts, const LossWeights& weights);

}  // namespace oneranker::model
