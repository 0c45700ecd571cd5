#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <utility>
#include <vector>

#include "oneranker/tensor/tensor.hpp"

// Differentiable op catalog. Every op validates shapes and throws
// std::invalid_argument naming the op on mismatch. Matrix ops take rank-2
// tensors; elementwise ops accept any rank.
namespace oneranker::tensor {

template <typename T> Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> scale(const Tensor<T>& a, T factor);

// x (n x c) plus a row vector broadcast over rows; row has c elements.
template <typename T> Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row);

template <typename T> Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b);
// a * b^T without materialising the transpose: (n x k) (m x k) -> (n x m).
template <typename T> Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b);
template <typename T> Tensor<T> transpose(const Tensor<T>& a);
template <typename T> Tensor<T> reshape(const Tensor<T>& a, Shape shape);

// axis 0 stacks rows, axis 1 stacks columns.
template <typename T> Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis);
template <typename T> Tensor<T> concat(std::initializer_list<Tensor<T>> parts, std::size_t axis) {
    std::vector<Tensor<T>> v(parts);
    return concat<T>(std::span<const Tensor<T>>(v), axis);
}
template <typename T> Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end);
template <typename T> Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end);

// Embedding lookup: out row i = table row indices[i].
template <typename T> Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> indices);

// Picks scalar entries (row, col) of a matrix into an (n x 1) column.
template <typename T>
Tensor<T> select(const Tensor<T>& x, std::span<const std::pair<std::size_t, std::size_t>> entries);

// Row-wise normalization with learned gain/bias of length c.
template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5));

template <typename T> Tensor<T> silu(const Tensor<T>& x);
template <typename T> Tensor<T> sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> log_sigmoid(const Tensor<T>& x);
template <typename T> Tensor<T> exp(const Tensor<T>& x);
template <typename T> Tensor<T> log(const Tensor<T>& x);

// Max-subtracted softmax along an axis. Non-finite input throws with the
// offending flat position.
template <typename T> Tensor<T> softmax(const Tensor<T>& x, std::size_t axis);
template <typename T> Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis);

template <typename T> Tensor<T> sum(const Tensor<T>& x);
template <typename T> Tensor<T> mean(const Tensor<T>& x);
// Column sums of an (n x c) matrix -> (1 x c).
template <typename T> Tensor<T> sum_rows(const Tensor<T>& x);
template <typename T> Tensor<T> mean_rows(const Tensor<T>& x);

// Pairwise cosine similarity between rows of a (n x d) and rows of b (k x d).
// A zero-norm row yields 0 for all of its pairs and bumps cosine_zero_norm_count().
template <typename T> Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b);
std::uint64_t cosine_zero_norm_count();

// Value copy that stops gradient flow.
template <typename T> Tensor<T> detach(const Tensor<T>& x);

}  // namespace oneranker::tensor
