#include "oneranker/tensor/attention.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <stdexcept>

namespace oneranker::tensor {

AttentionMask::AttentionMask(std::size_t rows, std::size_t cols, std::vector<std::uint8_t> allowed)
    : rows_(rows), cols_(cols), allowed_(std::move(allowed)), keys_(rows) {
    if (rows == 0 || cols == 0) throw std::invalid_argument("AttentionMask: empty mask");
    if (allowed_.size() != rows * cols) {
        throw std::invalid_argument("AttentionMask: expected " + std::to_string(rows * cols) +
                                    " entries, got " + std::to_string(allowed_.size()));
    }
    for (std::size_t r = 0; r < rows; ++r) {
        for (std::size_t c = 0; c < cols; ++c) {
            if (allowed_[r * cols + c]) keys_[r].push_back(c);
        }
        if (keys_[r].empty()) {
            throw std::invalid_argument("AttentionMask: query row " + std::to_string(r) +
                                        " has no allowed key");
        }
    }
}

AttentionMask AttentionMask::full(std::size_t rows, std::size_t cols) {
    return AttentionMask(rows, cols, std::vector<std::uint8_t>(rows * cols, 1));
}

std::size_t AttentionMask::allowed_count() const {
    std::size_t n = 0;
    for (const auto& k : keys_) n += k.size();
    return n;
}

std::vector<std::string> AttentionMask::to_strings() const {
    std::vector<std::string> out(rows_, std::string(cols_, '0'));
    for (std::size_t r = 0; r < rows_; ++r)
        for (std::size_t c : keys_[r]) out[r][c] = '1';
    return out;
}

template <typename T>
Tensor<T> masked_attention(const Tensor<T>& q, const Tensor<T>& k, const Tensor<T>& v,
                           const AttentionMask& mask, std::size_t heads) {
    if (q.rank() != 2 || k.rank() != 2 || v.rank() != 2) {
        throw std::invalid_argument("masked_attention: Q, K, V must be matrices");
    }
    const std::size_t nq = q.rows(), nk = k.rows(), d = q.cols();
    if (k.cols() != d || v.cols() != d) {
        throw std::invalid_argument("masked_attention: model dims disagree " + shape_str(q.shape()) +
                                    " " + shape_str(k.shape()) + " " + shape_str(v.shape()));
    }
    if (v.rows() != nk) throw std::invalid_argument("masked_attention: K and V row counts differ");
    if (heads == 0 || d % heads != 0) {
        throw std::invalid_argument("masked_attention: " + std::to_string(heads) +
                                    " heads do not divide model dim " + std::to_string(d));
    }
    if (mask.rows() != nq || mask.cols() != nk) {
        throw std::invalid_argument("masked_attention: mask " + std::to_string(mask.rows()) + "x" +
                                    std::to_string(mask.cols()) + " for " + std::to_string(nq) +
                                    " queries and " + std::to_string(nk) + " keys");
    }
    const std::size_t hd = d / heads;
    const T scale = T{1} / std::sqrt(static_cast<T>(hd));
    auto qv = q.values();
    auto kv = k.values();
    auto vv = v.values();

    // weights[h][r] holds one entry per allowed key of row r.
    auto weights = std::make_shared<std::vector<T>>();
    std::vector<std::size_t> offsets(nq + 1, 0);
    for (std::size_t r = 0; r < nq; ++r) offsets[r + 1] = offsets[r] + mask.allowed_keys(r).size();
    const std::size_t per_head = offsets[nq];
    weights->assign(per_head * heads, T{0});

    std::vector<T> out(nq * d, T{0});
    for (std::size_t h = 0; h < heads; ++h) {
        const std::size_t c0 = h * hd;
        for (std::size_t r = 0; r < nq; ++r) {
            const auto& keys = mask.allowed_keys(r);
            T* w = weights->data() + h * per_head + offsets[r];
            const T* qr = qv.data() + r * d + c0;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t a = 0; a < keys.size(); ++a) {
                const T* kr = kv.data() + keys[a] * d + c0;
                T s = 0;
                for (std::size_t p = 0; p < hd; ++p) s += qr[p] * kr[p];
                w[a] = s * scale;
                mx = std::max(mx, w[a]);
            }
            T z = 0;
            for (std::size_t a = 0; a < keys.size(); ++a) {
                w[a] = std::exp(w[a] - mx);
                z += w[a];
            }
            T* o = out.data() + r * d + c0;
            for (std::size_t a = 0; a < keys.size(); ++a) {
                w[a] /= z;
                const T* vr = vv.data() + keys[a] * d + c0;
                for (std::size_t p = 0; p < hd; ++p) o[p] += w[a] * vr[p];
            }
        }
    }

    return make_result<T>(
        "masked_attention", {nq, d}, std::move(out), {q, k, v},
        [mask, weights, offsets = std::move(offsets), heads, hd, d, nq, scale, per_head](Node<T>& n) {
            auto& q = n.inputs[0];
            auto& k = n.inputs[1];
            auto& v = n.inputs[2];
            std::vector<T>* gq = q->requires_grad ? &grad_of(q) : nullptr;
            std::vector<T>* gk = k->requires_grad ? &grad_of(k) : nullptr;
            std::vector<T>* gv = v->requires_grad ? &grad_of(v) : nullptr;
            std::vector<T> dw;
            for (std::size_t h = 0; h < heads; ++h) {
                const std::size_t c0 = h * hd;
                for (std::size_t r = 0; r < nq; ++r) {
                    const auto& keys = mask.allowed_keys(r);
                    const T* w = weights->data() + h * per_head + offsets[r];
                    const T* go = n.grad.data() + r * d + c0;
                    dw.assign(keys.size(), T{0});
                    T wdot = 0;
                    for (std::size_t a = 0; a < keys.size(); ++a) {
                        const T* vr = v->value.data() + keys[a] * d + c0;
                        T s = 0;
                        for (std::size_t p = 0; p < hd; ++p) s += go[p] * vr[p];
                        dw[a] = s;
                        wdot += w[a] * s;
                        if (gv) {
                            T* g = gv->data() + keys[a] * d + c0;
                            for (std::size_t p = 0; p < hd; ++p) g[p] += w[a] * go[p];
                        }
                    }
                    const T* qr = q->value.data() + r * d + c0;
                    for (std::size_t a = 0; a < keys.size(); ++a) {
                        const T ds = w[a] * (dw[a] - wdot) * scale;
                        if (ds == T{0}) continue;
                        const T* kr = k->value.data() + keys[a] * d + c0;
                        if (gq) {
                            T* g = gq->data() + r * d + c0;
                            for (std::size_t p = 0; p < hd; ++p) g[p] += ds * kr[p];
                        }
                        if (gk) {
                            T* g = gk->data() + keys[a] * d + c0;
                            for (std::size_t p = 0; p < hd; ++p) g[p] += ds * qr[p];
                        }
                    }
                }
            }
        });
}

template Tensor<float> masked_attention<float>(const Tensor<float>&, const Tensor<float>&,
                                               const Tensor<float>&, const AttentionMask&, std::size_t);
template Tensor<double> masked_attention<double>(const Tensor<double>&, const Tensor<double>&,
                                                 const Tensor<double>&, const AttentionMask&, std::size_t);

}  // namespace oneranker::tensor
