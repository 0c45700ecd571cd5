#pragma once

#include <cmath>
#include <cstddef>
#include <random>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

#include "oneranker/tensor/attention.hpp"
#include "oneranker/tensor/ops.hpp"
#include "oneranker/tensor/tensor.hpp"

namespace oneranker::tensor {

/// Ordered, named collection of trainable leaves. Names are dotted paths whose
/// first segment is the parameter group ("backbone", "taskaware", "ranker").
template <typename T>
class ParameterStore {
public:
    explicit ParameterStore(std::uint64_t seed = 0) : rng_(seed) {}

    Tensor<T> normal(const std::string& name, Shape shape, double stddev) {
        std::normal_distribution<double> dist(0.0, stddev);
        std::vector<T> values(numel(shape));
        for (auto& v : values) v = static_cast<T>(dist(rng_));
        return add(name, std::move(shape), std::move(values));
    }

    Tensor<T> constant(const std::string& name, Shape shape, T fill) {
        return add(name, shape, std::vector<T>(numel(shape), fill));
    }

    Tensor<T> add(const std::string& name, Shape shape, std::vector<T> values) {
        for (const auto& [n, _] : entries_) {
            if (n == name) throw std::logic_error("ParameterStore: duplicate parameter " + name);
        }
        auto t = Tensor<T>::from(std::move(shape), std::move(values), true);
        entries_.emplace_back(name, t);
        return t;
    }

    const std::vector<std::pair<std::string, Tensor<T>>>& entries() const { return entries_; }

    std::vector<Tensor<T>> tensors() const {
        std::vector<Tensor<T>> out;
        out.reserve(entries_.size());
        for (const auto& [_, t] : entries_) out.push_back(t);
        return out;
    }

    const Tensor<T>* find(const std::string& name) const {
        for (const auto& [n, t] : entries_) {
            if (n == name) return &t;
        }
        return nullptr;
    }

    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& [_, t] : entries_) n += t.size();
        return n;
    }

    void zero_grad() {
        for (auto& [_, t] : entries_) t.zero_grad();
    }

    std::mt19937_64& rng() { return rng_; }

private:
    std::vector<std::pair<std::string, Tensor<T>>> entries_;
    std::mt19937_64 rng_;
};

template <typename T>
struct Linear {
    Tensor<T> weight;  // (in x out)
    Tensor<T> bias;    // (1 x out), undefined when bias-free

    Linear() = default;
    Linear(ParameterStore<T>& store, const std::string& name, std::size_t in, std::size_t out,
           bool with_bias = true, double gain = 1.0) {
        weight = store.normal(name + ".weight", {in, out}, gain / std::sqrt(static_cast<double>(in)));
        if (with_bias) bias = store.constant(name + ".bias", {1, out}, T{0});
    }

    Tensor<T> operator()(const Tensor<T>& x) const {
        auto y = matmul(x, weight);
        return bias.defined() ? add_row(y, bias) : y;
    }
};

template <typename T>
struct LayerNorm {
    Tensor<T> gain;
    Tensor<T> bias;

    LayerNorm() = default;
    LayerNorm(ParameterStore<T>& store, const std::string& name, std::size_t dim) {
        gain = store.constant(name + ".gain", {1, dim}, T{1});
        bias = store.constant(name + ".bias", {1, dim}, T{0});
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return layer_norm(x, gain, bias); }
};

/// Projection wrapper around masked_attention. Queries and keys/values may come
/// from different sequences (cross-attention) or the same one (self-attention).
template <typename T>
struct MultiHeadAttention {
    Linear<T> q, k, v, o;
    std::size_t heads = 1;

    MultiHeadAttention() = default;
    MultiHeadAttention(ParameterStore<T>& store, const std::string& name, std::size_t dim,
                       std::size_t num_heads)
        : heads(num_heads) {
        if (num_heads == 0 || dim % num_heads != 0) {
            throw std::invalid_argument(name + ": " + std::to_string(num_heads) +
                                        " heads do not divide dim " + std::to_string(dim));
        }
        q = Linear<T>(store, name + ".q", dim, dim, false);
        k = Linear<T>(store, name + ".k", dim, dim, false);
        v = Linear<T>(store, name + ".v", dim, dim, false);
        o = Linear<T>(store, name + ".o", dim, dim, true);
    }

    Tensor<T> operator()(const Tensor<T>& queries, const Tensor<T>& keys_values,
                         const AttentionMask& mask) const {
        return o(masked_attention(q(queries), k(keys_values), v(keys_values), mask, heads));
    }
};

template <typename T>
struct FeedForward {
    Linear<T> up, down;

    FeedForward() = default;
    FeedForward(ParameterStore<T>& store, const std::string& name, std::size_t dim, std::size_t hidden) {
        up = Linear<T>(store, name + ".up", dim, hidden);
        down = Linear<T>(store, name + ".down", hidden, dim);
    }

    Tensor<T> operator()(const Tensor<T>& x) const { return down(silu(up(x))); }
};

}  // namespace oneranker::tensor
