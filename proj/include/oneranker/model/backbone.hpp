#pragma once

#include <cstddef>
#include <vector>

#include "oneranker/data/types.hpp"
#include "oneranker/model/config.hpp"
#include "oneranker/tensor/nn.hpp"

namespace oneranker::model {

using tensor::AttentionMask;
using tensor::ParameterStore;
using tensor::Tensor;

/// Lower-triangular visibility: query p sees keys 0..p.
AttentionMask causal_mask(std::size_t seq_len);

/// Causal mask over a left-padded stream: the first `pad` positions are
/// hidden from every real query, and each pad query sees only itself.
AttentionMask padded_causal_mask(std::size_t seq_len, std::size_t pad);

/// Token + type + position embedding. Positions count from the first non-pad
/// token, so left padding shifts nothing.
template <typename T>
struct HeterogeneousEmbedding {
    Tensor<T> user, content, context, item, pad;
    Tensor<T> type;      // 4 x d, indexed by TokenType (pad uses the pad row only)
    Tensor<T> position;  // max_len x d
    std::size_t max_len = 0;

    HeterogeneousEmbedding() = default;
    HeterogeneousEmbedding(ParameterStore<T>& store, const ModelConfig& cfg);

    Tensor<T> operator()(const data::TokenStream& stream) const;
};

template <typename T>
struct DecoderBlock {
    tensor::LayerNorm<T> ln_attn, ln_ffn;
    tensor::MultiHeadAttention<T> attn;
    tensor::FeedForward<T> ffn;
};

/// Pre-norm causal decoder stack with a final LayerNorm.
template <typename T>
struct GDecoder {
    std::vector<DecoderBlock<T>> blocks;
    tensor::LayerNorm<T> final_norm;

    GDecoder() = default;
    GDecoder(ParameterStore<T>& store, const ModelConfig& cfg);

    Tensor<T> operator()(const Tensor<T>& x, const AttentionMask& mask) const;
};

template <typename T>
struct Backbone {
    HeterogeneousEmbedding<T> embedding;
    GDecoder<T> decoder;

    Backbone() = default;
    Backbone(ParameterStore<T>& store, const ModelConfig& cfg);

    /// H1, one row per stream position (pad rows included).
    Tensor<T> encode_stream(const data::TokenStream& stream) const;
};

}  // namespace oneranker::model
