#include "oneranker/tensor/ops.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <limits>
#include <sstream>
#include <string>

namespace oneranker::tensor {

namespace {

std::atomic<std::uint64_t> g_cosine_zero_norm{0};

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape()) {
        throw std::invalid_argument(std::string(op) + ": shape mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
}

template <typename T>
void require_rank2(const char* op, const Tensor<T>& a) {
    if (a.rank() != 2) {
        throw std::invalid_argument(std::string(op) + ": expected a matrix, got shape " +
                                    shape_str(a.shape()));
    }
}

template <typename T>
void require_finite(const char* op, std::span<const T> values) {
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (!std::isfinite(values[i])) {
            std::ostringstream os;
            os << op << ": non-finite input " << values[i] << " at flat position " << i;
            throw std::domain_error(os.str());
        }
    }
}

// Splits a shape around `axis` into (outer, extent, inner) strides.
struct AxisView {
    std::size_t outer;
    std::size_t extent;
    std::size_t inner;
};

AxisView axis_view(const char* op, const Shape& shape, std::size_t axis) {
    if (axis >= shape.size()) {
        throw std::invalid_argument(std::string(op) + ": axis " + std::to_string(axis) +
                                    " invalid for shape " + shape_str(shape));
    }
    AxisView v{1, shape[axis], 1};
    for (std::size_t i = 0; i < axis; ++i) v.outer *= shape[i];
    for (std::size_t i = axis + 1; i < shape.size(); ++i) v.inner *= shape[i];
    return v;
}

// Elementwise unary op given f(x) and df/dx expressed via (x, y).
template <typename T, typename F, typename D>
Tensor<T> unary(const char* op, const Tensor<T>& x, F f, D dfdx) {
    std::vector<T> out(x.size());
    auto xv = x.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(xv[i]);
    return make_result<T>(op, x.shape(), std::move(out), {x}, [dfdx](Node<T>& n) {
        auto& in = n.inputs[0];
        if (!in->requires_grad) return;
        auto& g = grad_of(in);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * dfdx(in->value[i], n.value[i]);
    });
}

}  // namespace

std::uint64_t cosine_zero_norm_count() { return g_cosine_zero_norm.load(); }

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("add", a, b);
    std::vector<T> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] + bv[i];
    return make_result<T>("add", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
        for (auto& in : n.inputs) {
            if (!in->requires_grad) continue;
            auto& g = grad_of(in);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("sub", a, b);
    std::vector<T> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] - bv[i];
    return make_result<T>("sub", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
        if (n.inputs[0]->requires_grad) {
            auto& g = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (n.inputs[1]->requires_grad) {
            auto& g = grad_of(n.inputs[1]);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] -= n.grad[i];
        }
    });
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    require_same_shape("mul", a, b);
    std::vector<T> out(a.size());
    auto av = a.values();
    auto bv = b.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * bv[i];
    return make_result<T>("mul", a.shape(), std::move(out), {a, b}, [](Node<T>& n) {
        auto& a = n.inputs[0];
        auto& b = n.inputs[1];
        if (a->requires_grad) {
            auto& g = grad_of(a);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * b->value[i];
        }
        if (b->requires_grad) {
            auto& g = grad_of(b);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * a->value[i];
        }
    });
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T factor) {
    std::vector<T> out(a.size());
    auto av = a.values();
    for (std::size_t i = 0; i < out.size(); ++i) out[i] = av[i] * factor;
    return make_result<T>("scale", a.shape(), std::move(out), {a}, [factor](Node<T>& n) {
        auto& g = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i] * factor;
    });
}

template <typename T>
Tensor<T> add_row(const Tensor<T>& x, const Tensor<T>& row) {
    require_rank2("add_row", x);
    const std::size_t r = x.rows(), c = x.cols();
    if (row.size() != c) {
        throw std::invalid_argument("add_row: row of " + std::to_string(row.size()) +
                                    " elements for matrix " + shape_str(x.shape()));
    }
    std::vector<T> out(x.size());
    auto xv = x.values();
    auto rv = row.values();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[i * c + j] = xv[i * c + j] + rv[j];
    return make_result<T>("add_row", x.shape(), std::move(out), {x, row}, [r, c](Node<T>& n) {
        if (n.inputs[0]->requires_grad) {
            auto& g = grad_of(n.inputs[0]);
            for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
        }
        if (n.inputs[1]->requires_grad) {
            auto& g = grad_of(n.inputs[1]);
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
        }
    });
}

namespace {

// out (n x m) += a (n x k) * b (k x m). Each output row only reads its own a row,
// and accumulation runs over k in ascending order for every element.
template <typename T>
void gemm_nn(const T* a, const T* b, T* out, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        T* o = out + i * m;
        const T* ai = a + i * k;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            const T* bp = b + p * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += av * bp[j];
        }
    }
}

// out (k x m) += a^T * b with a (n x k), b (n x m).
template <typename T>
void gemm_tn(const T* a, const T* b, T* out, std::size_t n, std::size_t k, std::size_t m) {
    for (std::size_t i = 0; i < n; ++i) {
        const T* ai = a + i * k;
        const T* bi = b + i * m;
        for (std::size_t p = 0; p < k; ++p) {
            const T av = ai[p];
            T* o = out + p * m;
            for (std::size_t j = 0; j < m; ++j) o[j] += av * bi[j];
        }
    }
}

template <typename T>
std::vector<T> transposed(std::span<const T> a, std::size_t r, std::size_t c) {
    std::vector<T> t(a.size());
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) t[j * r + i] = a[i * c + j];
    return t;
}

}  // namespace

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank2("matmul", a);
    require_rank2("matmul", b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
    if (b.rows() != k) {
        throw std::invalid_argument("matmul: inner dimensions disagree " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()));
    }
    std::vector<T> out(n * m, T{0});
    gemm_nn(a.values().data(), b.values().data(), out.data(), n, k, m);
    return make_result<T>("matmul", {n, m}, std::move(out), {a, b}, [n, k, m](Node<T>& node) {
        auto& a = node.inputs[0];
        auto& b = node.inputs[1];
        if (a->requires_grad) {
            // dA = dO * B^T
            auto bt = transposed<T>(b->value, k, m);
            gemm_nn(node.grad.data(), bt.data(), grad_of(a).data(), n, m, k);
        }
        if (b->requires_grad) {
            // dB = A^T * dO
            gemm_tn(a->value.data(), node.grad.data(), grad_of(b).data(), n, k, m);
        }
    });
}

template <typename T>
Tensor<T> matmul_nt(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank2("matmul_nt", a);
    require_rank2("matmul_nt", b);
    const std::size_t n = a.rows(), k = a.cols(), m = b.rows();
    if (b.cols() != k) {
        throw std::invalid_argument("matmul_nt: inner dimensions disagree " + shape_str(a.shape()) +
                                    " x " + shape_str(b.shape()) + "^T");
    }
    auto bt = transposed<T>(b.values(), m, k);
    std::vector<T> out(n * m, T{0});
    gemm_nn(a.values().data(), bt.data(), out.data(), n, k, m);
    return make_result<T>("matmul_nt", {n, m}, std::move(out), {a, b}, [n, k, m](Node<T>& node) {
        auto& a = node.inputs[0];
        auto& b = node.inputs[1];
        if (a->requires_grad) {
            // dA = dO * B
            gemm_nn(node.grad.data(), b->value.data(), grad_of(a).data(), n, m, k);
        }
        if (b->requires_grad) {
            // dB = dO^T * A
            gemm_tn(node.grad.data(), a->value.data(), grad_of(b).data(), n, m, k);
        }
    });
}

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    require_rank2("transpose", a);
    const std::size_t r = a.rows(), c = a.cols();
    return make_result<T>("transpose", {c, r}, transposed<T>(a.values(), r, c), {a},
                          [r, c](Node<T>& n) {
                              auto& g = grad_of(n.inputs[0]);
                              for (std::size_t i = 0; i < r; ++i)
                                  for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j * r + i];
                          });
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (numel(shape) != a.size()) {
        throw std::invalid_argument("reshape: cannot view " + shape_str(a.shape()) + " as " +
                                    shape_str(shape));
    }
    std::vector<T> out(a.values().begin(), a.values().end());
    return make_result<T>("reshape", std::move(shape), std::move(out), {a}, [](Node<T>& n) {
        auto& g = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < g.size(); ++i) g[i] += n.grad[i];
    });
}

template <typename T>
Tensor<T> concat(std::span<const Tensor<T>> parts, std::size_t axis) {
    if (parts.empty()) throw std::invalid_argument("concat: no inputs");
    if (axis > 1) throw std::invalid_argument("concat: axis must be 0 or 1");
    for (const auto& p : parts) require_rank2("concat", p);
    std::vector<Tensor<T>> inputs(parts.begin(), parts.end());
    if (axis == 0) {
        const std::size_t c = parts[0].cols();
        std::size_t r = 0;
        for (const auto& p : parts) {
            if (p.cols() != c) {
                throw std::invalid_argument("concat: column mismatch " + shape_str(p.shape()) +
                                            " vs " + std::to_string(c) + " columns");
            }
            r += p.rows();
        }
        std::vector<T> out;
        out.reserve(r * c);
        for (const auto& p : parts) out.insert(out.end(), p.values().begin(), p.values().end());
        return make_result<T>("concat_rows", {r, c}, std::move(out), std::move(inputs), [](Node<T>& n) {
            std::size_t offset = 0;
            for (auto& in : n.inputs) {
                const std::size_t len = in->value.size();
                if (in->requires_grad) {
                    auto& g = grad_of(in);
                    for (std::size_t i = 0; i < len; ++i) g[i] += n.grad[offset + i];
                }
                offset += len;
            }
        });
    }
    const std::size_t r = parts[0].rows();
    std::size_t c = 0;
    for (const auto& p : parts) {
        if (p.rows() != r) {
            throw std::invalid_argument("concat: row mismatch " + shape_str(p.shape()) + " vs " +
                                        std::to_string(r) + " rows");
        }
        c += p.cols();
    }
    std::vector<T> out(r * c);
    std::size_t col0 = 0;
    for (const auto& p : parts) {
        const std::size_t pc = p.cols();
        auto pv = p.values();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < pc; ++j) out[i * c + col0 + j] = pv[i * pc + j];
        col0 += pc;
    }
    return make_result<T>("concat_cols", {r, c}, std::move(out), std::move(inputs), [r, c](Node<T>& n) {
        std::size_t col0 = 0;
        for (auto& in : n.inputs) {
            const std::size_t pc = in->shape[1];
            if (in->requires_grad) {
                auto& g = grad_of(in);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < pc; ++j) g[i * pc + j] += n.grad[i * c + col0 + j];
            }
            col0 += pc;
        }
    });
}

template <typename T>
Tensor<T> slice_rows(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    require_rank2("slice_rows", a);
    if (begin >= end || end > a.rows()) {
        throw std::invalid_argument("slice_rows: range [" + std::to_string(begin) + "," +
                                    std::to_string(end) + ") invalid for " + shape_str(a.shape()));
    }
    const std::size_t c = a.cols();
    auto av = a.values();
    std::vector<T> out(av.begin() + begin * c, av.begin() + end * c);
    return make_result<T>("slice_rows", {end - begin, c}, std::move(out), {a}, [begin, c](Node<T>& n) {
        auto& g = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < n.grad.size(); ++i) g[begin * c + i] += n.grad[i];
    });
}

template <typename T>
Tensor<T> slice_cols(const Tensor<T>& a, std::size_t begin, std::size_t end) {
    require_rank2("slice_cols", a);
    if (begin >= end || end > a.cols()) {
        throw std::invalid_argument("slice_cols: range [" + std::to_string(begin) + "," +
                                    std::to_string(end) + ") invalid for " + shape_str(a.shape()));
    }
    const std::size_t r = a.rows(), c = a.cols(), w = end - begin;
    auto av = a.values();
    std::vector<T> out(r * w);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < w; ++j) out[i * w + j] = av[i * c + begin + j];
    return make_result<T>("slice_cols", {r, w}, std::move(out), {a}, [r, c, w, begin](Node<T>& n) {
        auto& g = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < w; ++j) g[i * c + begin + j] += n.grad[i * w + j];
    });
}

template <typename T>
Tensor<T> gather_rows(const Tensor<T>& table, std::span<const std::size_t> indices) {
    require_rank2("gather_rows", table);
    if (indices.empty()) throw std::invalid_argument("gather_rows: empty index list");
    const std::size_t c = table.cols(), vocab = table.rows();
    auto tv = table.values();
    std::vector<T> out(indices.size() * c);
    for (std::size_t i = 0; i < indices.size(); ++i) {
        if (indices[i] >= vocab) {
            throw std::out_of_range("gather_rows: index " + std::to_string(indices[i]) +
                                    " outside table of " + std::to_string(vocab) + " rows");
        }
        std::copy_n(tv.begin() + indices[i] * c, c, out.begin() + i * c);
    }
    std::vector<std::size_t> idx(indices.begin(), indices.end());
    return make_result<T>("gather_rows", {indices.size(), c}, std::move(out), {table},
                          [idx = std::move(idx), c](Node<T>& n) {
                              auto& g = grad_of(n.inputs[0]);
                              for (std::size_t i = 0; i < idx.size(); ++i)
                                  for (std::size_t j = 0; j < c; ++j) g[idx[i] * c + j] += n.grad[i * c + j];
                          });
}

template <typename T>
Tensor<T> select(const Tensor<T>& x, std::span<const std::pair<std::size_t, std::size_t>> entries) {
    require_rank2("select", x);
    if (entries.empty()) throw std::invalid_argument("select: empty entry list");
    const std::size_t r = x.rows(), c = x.cols();
    std::vector<std::size_t> flat(entries.size());
    std::vector<T> out(entries.size());
    for (std::size_t i = 0; i < entries.size(); ++i) {
        auto [row, col] = entries[i];
        if (row >= r || col >= c) {
            throw std::out_of_range("select: entry (" + std::to_string(row) + "," + std::to_string(col) +
                                    ") outside " + shape_str(x.shape()));
        }
        flat[i] = row * c + col;
        out[i] = x.values()[flat[i]];
    }
    return make_result<T>("select", {entries.size(), 1}, std::move(out), {x},
                          [flat = std::move(flat)](Node<T>& n) {
                              auto& g = grad_of(n.inputs[0]);
                              for (std::size_t i = 0; i < flat.size(); ++i) g[flat[i]] += n.grad[i];
                          });
}

template <typename T>
Tensor<T> layer_norm(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps) {
    require_rank2("layer_norm", x);
    const std::size_t r = x.rows(), c = x.cols();
    if (gain.size() != c || bias.size() != c) {
        throw std::invalid_argument("layer_norm: gain/bias length must equal " + std::to_string(c));
    }
    auto xv = x.values();
    auto gv = gain.values();
    auto bv = bias.values();
    std::vector<T> out(r * c), xhat(r * c), inv_std(r);
    for (std::size_t i = 0; i < r; ++i) {
        const T* row = xv.data() + i * c;
        T mu = 0;
        for (std::size_t j = 0; j < c; ++j) mu += row[j];
        mu /= static_cast<T>(c);
        T var = 0;
        for (std::size_t j = 0; j < c; ++j) var += (row[j] - mu) * (row[j] - mu);
        var /= static_cast<T>(c);
        const T is = T{1} / std::sqrt(var + eps);
        inv_std[i] = is;
        for (std::size_t j = 0; j < c; ++j) {
            xhat[i * c + j] = (row[j] - mu) * is;
            out[i * c + j] = xhat[i * c + j] * gv[j] + bv[j];
        }
    }
    return make_result<T>(
        "layer_norm", x.shape(), std::move(out), {x, gain, bias},
        [r, c, xhat = std::move(xhat), inv_std = std::move(inv_std)](Node<T>& n) {
            auto& x = n.inputs[0];
            auto& gain = n.inputs[1];
            auto& bias = n.inputs[2];
            if (gain->requires_grad) {
                auto& g = grad_of(gain);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j] * xhat[i * c + j];
            }
            if (bias->requires_grad) {
                auto& g = grad_of(bias);
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) g[j] += n.grad[i * c + j];
            }
            if (x->requires_grad) {
                auto& g = grad_of(x);
                std::vector<T> dxhat(c);
                for (std::size_t i = 0; i < r; ++i) {
                    T mean_d = 0, mean_dx = 0;
                    for (std::size_t j = 0; j < c; ++j) {
                        dxhat[j] = n.grad[i * c + j] * gain->value[j];
                        mean_d += dxhat[j];
                        mean_dx += dxhat[j] * xhat[i * c + j];
                    }
                    mean_d /= static_cast<T>(c);
                    mean_dx /= static_cast<T>(c);
                    for (std::size_t j = 0; j < c; ++j) {
                        g[i * c + j] += inv_std[i] * (dxhat[j] - mean_d - xhat[i * c + j] * mean_dx);
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> sigmoid(const Tensor<T>& x) {
    return unary<T>(
        "sigmoid", x, [](T v) { return v >= 0 ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v)); },
        [](T, T y) { return y * (T{1} - y); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& x) {
    auto sig = [](T v) { return v >= 0 ? T{1} / (T{1} + std::exp(-v)) : std::exp(v) / (T{1} + std::exp(v)); };
    return unary<T>(
        "silu", x, [sig](T v) { return v * sig(v); },
        [sig](T v, T) {
            const T s = sig(v);
            return s * (T{1} + v * (T{1} - s));
        });
}

template <typename T>
Tensor<T> log_sigmoid(const Tensor<T>& x) {
    // log(sigmoid(v)) = -softplus(-v), evaluated without overflow.
    return unary<T>(
        "log_sigmoid", x,
        [](T v) { return v >= 0 ? -std::log1p(std::exp(-v)) : v - std::log1p(std::exp(v)); },
        [](T v, T) { return v >= 0 ? std::exp(-v) / (T{1} + std::exp(-v)) : T{1} / (T{1} + std::exp(v)); });
}

template <typename T>
Tensor<T> exp(const Tensor<T>& x) {
    return unary<T>("exp", x, [](T v) { return std::exp(v); }, [](T, T y) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& x) {
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x.values()[i] > 0)) {
            throw std::domain_error("log: non-positive input at flat position " + std::to_string(i));
        }
    }
    return unary<T>("log", x, [](T v) { return std::log(v); }, [](T v, T) { return T{1} / v; });
}

template <typename T>
Tensor<T> softmax(const Tensor<T>& x, std::size_t axis) {
    require_finite<T>("softmax", x.values());
    const AxisView v = axis_view("softmax", x.shape(), axis);
    auto xv = x.values();
    std::vector<T> out(x.size());
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.extent * v.inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t k = 0; k < v.extent; ++k) mx = std::max(mx, xv[base + k * v.inner]);
            T z = 0;
            for (std::size_t k = 0; k < v.extent; ++k) {
                const T e = std::exp(xv[base + k * v.inner] - mx);
                out[base + k * v.inner] = e;
                z += e;
            }
            for (std::size_t k = 0; k < v.extent; ++k) out[base + k * v.inner] /= z;
        }
    }
    return make_result<T>("softmax", x.shape(), std::move(out), {x}, [v](Node<T>& n) {
        auto& g = grad_of(n.inputs[0]);
        for (std::size_t o = 0; o < v.outer; ++o) {
            for (std::size_t in = 0; in < v.inner; ++in) {
                const std::size_t base = o * v.extent * v.inner + in;
                T dot = 0;
                for (std::size_t k = 0; k < v.extent; ++k) {
                    const std::size_t idx = base + k * v.inner;
                    dot += n.grad[idx] * n.value[idx];
                }
                for (std::size_t k = 0; k < v.extent; ++k) {
                    const std::size_t idx = base + k * v.inner;
                    g[idx] += n.value[idx] * (n.grad[idx] - dot);
                }
            }
        }
    });
}

template <typename T>
Tensor<T> log_softmax(const Tensor<T>& x, std::size_t axis) {
    require_finite<T>("log_softmax", x.values());
    const AxisView v = axis_view("log_softmax", x.shape(), axis);
    auto xv = x.values();
    std::vector<T> out(x.size());
    for (std::size_t o = 0; o < v.outer; ++o) {
        for (std::size_t in = 0; in < v.inner; ++in) {
            const std::size_t base = o * v.extent * v.inner + in;
            T mx = -std::numeric_limits<T>::infinity();
            for (std::size_t k = 0; k < v.extent; ++k) mx = std::max(mx, xv[base + k * v.inner]);
            T z = 0;
            for (std::size_t k = 0; k < v.extent; ++k) z += std::exp(xv[base + k * v.inner] - mx);
            const T lse = mx + std::log(z);
            for (std::size_t k = 0; k < v.extent; ++k) out[base + k * v.inner] = xv[base + k * v.inner] - lse;
        }
    }
    return make_result<T>("log_softmax", x.shape(), std::move(out), {x}, [v](Node<T>& n) {
        auto& g = grad_of(n.inputs[0]);
        for (std::size_t o = 0; o < v.outer; ++o) {
            for (std::size_t in = 0; in < v.inner; ++in) {
                const std::size_t base = o * v.extent * v.inner + in;
                T total = 0;
                for (std::size_t k = 0; k < v.extent; ++k) total += n.grad[base + k * v.inner];
                for (std::size_t k = 0; k < v.extent; ++k) {
                    const std::size_t idx = base + k * v.inner;
                    g[idx] += n.grad[idx] - std::exp(n.value[idx]) * total;
                }
            }
        }
    });
}

template <typename T>
Tensor<T> sum(const Tensor<T>& x) {
    T s = 0;
    for (T v : x.values()) s += v;
    return make_result<T>("sum", {1}, {s}, {x}, [](Node<T>& n) {
        auto& g = grad_of(n.inputs[0]);
        for (auto& gi : g) gi += n.grad[0];
    });
}

template <typename T>
Tensor<T> mean(const Tensor<T>& x) {
    return scale(sum(x), T{1} / static_cast<T>(x.size()));
}

template <typename T>
Tensor<T> sum_rows(const Tensor<T>& x) {
    require_rank2("sum_rows", x);
    const std::size_t r = x.rows(), c = x.cols();
    auto xv = x.values();
    std::vector<T> out(c, T{0});
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) out[j] += xv[i * c + j];
    return make_result<T>("sum_rows", {1, c}, std::move(out), {x}, [r, c](Node<T>& n) {
        auto& g = grad_of(n.inputs[0]);
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) g[i * c + j] += n.grad[j];
    });
}

template <typename T>
Tensor<T> mean_rows(const Tensor<T>& x) {
    return scale(sum_rows(x), T{1} / static_cast<T>(x.rows()));
}

template <typename T>
Tensor<T> cosine_similarity(const Tensor<T>& a, const Tensor<T>& b) {
    require_rank2("cosine_similarity", a);
    require_rank2("cosine_similarity", b);
    const std::size_t n = a.rows(), k = b.rows(), d = a.cols();
    if (b.cols() != d) {
        throw std::invalid_argument("cosine_similarity: dimension mismatch " + shape_str(a.shape()) +
                                    " vs " + shape_str(b.shape()));
    }
    auto av = a.values();
    auto bv = b.values();
    auto norms = [d](std::span<const T> m, std::size_t rows) {
        std::vector<T> out(rows);
        for (std::size_t i = 0; i < rows; ++i) {
            T s = 0;
            for (std::size_t j = 0; j < d; ++j) s += m[i * d + j] * m[i * d + j];
            out[i] = std::sqrt(s);
        }
        return out;
    };
    std::vector<T> na = norms(av, n), nb = norms(bv, k);
    std::vector<T> out(n * k, T{0});
    std::uint64_t zero_pairs = 0;
    for (std::size_t i = 0; i < n; ++i) {
        for (std::size_t j = 0; j < k; ++j) {
            if (na[i] == T{0} || nb[j] == T{0}) {
                ++zero_pairs;
                continue;
            }
            T dot = 0;
            for (std::size_t p = 0; p < d; ++p) dot += av[i * d + p] * bv[j * d + p];
            out[i * k + j] = dot / (na[i] * nb[j]);
        }
    }
    if (zero_pairs) g_cosine_zero_norm.fetch_add(zero_pairs);
    return make_result<T>(
        "cosine_similarity", {n, k}, std::move(out), {a, b},
        [n, k, d, na = std::move(na), nb = std::move(nb)](Node<T>& node) {
            auto& a = node.inputs[0];
            auto& b = node.inputs[1];
            // d cos / d a_i = b_j/(|a||b|) - cos * a_i/|a|^2
            for (std::size_t i = 0; i < n; ++i) {
                if (na[i] == T{0}) continue;
                for (std::size_t j = 0; j < k; ++j) {
                    if (nb[j] == T{0}) continue;
                    const T g = node.grad[i * k + j];
                    if (g == T{0}) continue;
                    const T cs = node.value[i * k + j];
                    const T inv = T{1} / (na[i] * nb[j]);
                    if (a->requires_grad) {
                        auto& ga = grad_of(a);
                        for (std::size_t p = 0; p < d; ++p)
                            ga[i * d + p] += g * (b->value[j * d + p] * inv - cs * a->value[i * d + p] / (na[i] * na[i]));
                    }
                    if (b->requires_grad) {
                        auto& gb = grad_of(b);
                        for (std::size_t p = 0; p < d; ++p)
                            gb[j * d + p] += g * (a->value[i * d + p] * inv - cs * b->value[j * d + p] / (nb[j] * nb[j]));
                    }
                }
            }
        });
}

template <typename T>
Tensor<T> detach(const Tensor<T>& x) {
    return Tensor<T>::from(x.shape(), std::vector<T>(x.values().begin(), x.values().end()));
}

#define ONERANKER_INSTANTIATE(T)                                                                   \
    template Tensor<T> add<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> sub<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> mul<T>(const Tensor<T>&, const Tensor<T>&);                                 \
    template Tensor<T> scale<T>(const Tensor<T>&, T);                                              \
    template Tensor<T> add_row<T>(const Tensor<T>&, const Tensor<T>&);                             \
    template Tensor<T> matmul<T>(const Tensor<T>&, const Tensor<T>&);                              \
    template Tensor<T> matmul_nt<T>(const Tensor<T>&, const Tensor<T>&);                           \
    template Tensor<T> transpose<T>(const Tensor<T>&);                                             \
    template Tensor<T> reshape<T>(const Tensor<T>&, Shape);                                        \
    template Tensor<T> concat<T>(std::span<const Tensor<T>>, std::size_t);                         \
    template Tensor<T> slice_rows<T>(const Tensor<T>&, std::size_t, std::size_t);                  \
    template Tensor<T> slice_cols<T>(const Tensor<T>&, std::size_t, std::size_t);                  \
    template Tensor<T> gather_rows<T>(const Tensor<T>&, std::span<const std::size_t>);             \
    template Tensor<T> select<T>(const Tensor<T>&, std::span<const std::pair<std::size_t, std::size_t>>); \
    template Tensor<T> layer_norm<T>(const Tensor<T>&, const Tensor<T>&, const Tensor<T>&, T);     \
    template Tensor<T> silu<T>(const Tensor<T>&);                                                  \
    template Tensor<T> sigmoid<T>(const Tensor<T>&);                                               \
    template Tensor<T> log_sigmoid<T>(const Tensor<T>&);                                           \
    template Tensor<T> exp<T>(const Tensor<T>&);                                                   \
    template Tensor<T> log<T>(const Tensor<T>&);                                                   \
    template Tensor<T> softmax<T>(const Tensor<T>&, std::size_t);                                  \
    template Tensor<T> log_softmax<T>(const Tensor<T>&, std::size_t);                              \
    template Tensor<T> sum<T>(const Tensor<T>&);                                                   \
    template Tensor<T> mean<T>(const Tensor<T>&);                                                  \
    template Tensor<T> sum_rows<T>(const Tensor<T>&);                                              \
    template Tensor<T> mean_rows<T>(const Tensor<T>&);                                             \
    template Tensor<T> cosine_similarity<T>(const Tensor<T>&, const Tensor<T>&);                   \
    template Tensor<T> detach<T>(const Tensor<T>&);

ONERANKER_INSTANTIATE(float)
ONERANKER_INSTANTIATE(double)

#undef ONERANKER_INSTANTIATE

}  // namespace oneranker::tensor
