#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "oneranker/tensor/tensor.hpp"

namespace oneranker::tensor {

/// Boolean visibility matrix between queries (rows) and keys (cols).
///
/// Construction rejects any row without an allowed key, so attention never
/// has to normalise an empty set.
class AttentionMask {
public:
    AttentionMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> allowed);

    static AttentionMask full(std::size_t rows, std::size_t cols);

    std::size_t rows() const noexcept { return rows_; }
    std::size_t cols() const noexcept { return cols_; }
    bool allowed(std::size_t r, std::size_t c) const { return allowed_[r * cols_ + c] != 0; }
    const std::vector<std::size_t>& allowed_keys(std::size_t r) const { return keys_[r]; }
    std::size_t allowed_count() const;

    // One string of '0'/'1' per row, e.g. "1011".
    std::vector<std::string> to_strings() const;

    friend bool operator==(const AttentionMask& a, const AttentionMask& b) {
        return a.rows_ == b.rows_ && a.cols_ == b.cols_ && a.allowed_ == b.allowed_;
    }

private:
    std::size_t rows_;
    std::size_t cols_;
    std::vector<std::uint8_t> allowed_;
    std::vector<std::vector<std::size_t>> keys_;
};

/// Multi-head scaled dot-product attention over already-projected inputs.
///
/// Q is (nq x d), K and V are (nk x d); d is split into `heads` contiguous
/// slices of width d/heads. Scores are scaled by 1/sqrt(d/heads). Forbidden
/// keys are excluded from the max, the normaliser and the weighted sum, so an
/// output row never reads a forbidden V row at all.
template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           const AttentionMask& mask, std::size_t heads);

}  // namespace oneranker::tensor
