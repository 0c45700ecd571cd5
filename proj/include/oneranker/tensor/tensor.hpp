#pragma once

#include <cstddef>
#include <cstdint>
#include <functional>
#include <memory>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace oneranker::tensor {

using Shape = std::vector<std::size_t>;

inline std::size_t numel(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

std::string shape_str(const Shape& shape);

// Gradient recording is per thread. Evaluation code disables it with NoGradGuard
// so forward passes build no graph.
bool grad_enabled();

class NoGradGuard {
public:
    NoGradGuard();
    ~NoGradGuard();
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool previous_;
};

std::uint64_t next_tape_id();

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::uint64_t tape_id = 0;
    const char* op = "leaf";
    std::vector<std::shared_ptr<Node>> inputs;
    // Reads this node's grad and accumulates into the inputs' grads.
    std::function<void(Node&)> backward;
};

/// Dense row-major array with reverse-mode differentiation.
///
/// A Tensor is a cheap handle; copies share the underlying node. Values are
/// treated as immutable once an op has consumed them. The only sanctioned
/// in-place writers are the optimizer, checkpoint loading and the
/// finite-difference checker, all of which go through mutable_values() on leaves.
template <typename T>
class Tensor {
public:
    using value_type = T;

    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor full(Shape shape, T fill, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<T> values, bool requires_grad = false);
    static Tensor scalar(T v) { return from({1}, {v}); }

    bool defined() const noexcept { return static_cast<bool>(node_); }
    const Shape& shape() const { return node_->shape; }
    std::size_t rank() const { return node_->shape.size(); }
    std::size_t size() const { return node_->value.size(); }
    std::size_t rows() const;
    std::size_t cols() const;

    std::span<const T> values() const { return node_->value; }
    T item() const;
    T at(std::size_t r, std::size_t c) const { return node_->value[r * cols() + c]; }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }
    std::uint64_t tape_id() const { return node_->tape_id; }
    const char* op_name() const { return node_->op; }

    // Gradient accumulator. Empty span until a backward pass reaches this node.
    std::span<const T> grad() const { return node_->grad; }
    void zero_grad();

    std::vector<T>& mutable_values();
    std::vector<T>& mutable_grad();

    // Leaf copy with the same values and flag; used for model replicas.
    Tensor clone() const;

    std::shared_ptr<Node<T>> node() const { return node_; }
    explicit Tensor(std::shared_ptr<Node<T>> node) : node_(std::move(node)) {}

private:
    std::shared_ptr<Node<T>> node_;
};

// Creates the result node of an op. Inputs are recorded only when gradient
// recording is on and at least one input needs a gradient.
template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward);

// Returns the grad buffer of an input, allocating it on first use.
template <typename T>
std::vector<T>& grad_of(const std::shared_ptr<Node<T>>& node);

/// Runs reverse accumulation from a scalar loss. Leaf gradients accumulate
/// across calls; intermediate gradients are rebuilt on every call.
template <typename T>
void reverse_accumulate(const Tensor<T>& loss);

template <typename T>
void zero_grads(std::span<Tensor<T>> params);

}  // namespace oneranker::tensor
