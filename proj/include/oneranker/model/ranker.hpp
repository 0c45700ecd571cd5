#pragma once

#include <cstddef>

#include "oneranker/model/config.hpp"
#include "oneranker/tensor/nn.hpp"

namespace oneranker::model {

using tensor::AttentionMask;
using tensor::ParameterStore;
using tensor::Tensor;

/// Query order [T_r; c_1..c_n]. T_r sees itself; candidate j sees T_r and itself.
AttentionMask build_rank_mask(std::size_t n);

/// Row-stacks [H1; task_reps; fake_reps]; undefined parts are skipped.
template <typename T>
Tensor<T> fuse_kv(const Tensor<T>& h1, const Tensor<T>& task_reps, const Tensor<T>& fake_reps);

/// Single-layer ranking decoder with a scalar MLP head.
template <typename T>
struct RDecoder {
    Tensor<T> task_token;         // 1 x d
    tensor::Linear<T> cos_proj;   // k -> d, absent when k = 0
    tensor::LayerNorm<T> ln_cross, ln_self, ln_ffn, final_norm;
    tensor::MultiHeadAttention<T> cross, self;
    tensor::FeedForward<T> ffn;
    tensor::Linear<T> head_hidden, head_out;

    RDecoder() = default;
    RDecoder(ParameterStore<T>& store, const ModelConfig& cfg);

    /// Base item embedding plus the projected cosine channel (n x d).
    Tensor<T> candidate_tokens(const Tensor<T>& item_embeddings, const Tensor<T>& cosines) const;

    /// One score per candidate token, (n x 1).
    Tensor<T> operator()(const Tensor<T>& candidate_tokens, const Tensor<T>& kv) const;
};

template <typename T>
Tensor<T> r_decoder_score(const RDecoder<T>& decoder, const Tensor<T>& candidate_tokens, const Tensor<T>& kv) {
    return decoder(candidate_tokens, kv);
}

}  // namespace oneranker::model
