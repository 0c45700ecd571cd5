#include "oneranker/tensor/tensor.hpp"

#include <algorithm>
#include <atomic>
#include <sstream>
#include <unordered_set>

namespace oneranker::tensor {

namespace {
thread_local bool t_grad_enabled = true;
std::atomic<std::uint64_t> g_tape_counter{1};
}  // namespace

std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '(';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << ',';
        os << shape[i];
    }
    os << ')';
    return os.str();
}

bool grad_enabled() { return t_grad_enabled; }

NoGradGuard::NoGradGuard() : previous_(t_grad_enabled) { t_grad_enabled = false; }
NoGradGuard::~NoGradGuard() { t_grad_enabled = previous_; }

std::uint64_t next_tape_id() { return g_tape_counter.fetch_add(1, std::memory_order_relaxed); }

template <typename T>
Tensor<T> Tensor<T>::zeros(Shape shape, bool requires_grad) {
    return full(std::move(shape), T{0}, requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::full(Shape shape, T fill, bool requires_grad) {
    const std::size_t n = numel(shape);
    return from(std::move(shape), std::vector<T>(n, fill), requires_grad);
}

template <typename T>
Tensor<T> Tensor<T>::from(Shape shape, std::vector<T> values, bool requires_grad) {
    for (std::size_t e : shape) {
        if (e == 0) throw std::invalid_argument("tensor: zero extent in shape " + shape_str(shape));
    }
    if (numel(shape) != values.size()) {
        throw std::invalid_argument("tensor: shape " + shape_str(shape) + " needs " +
                                    std::to_string(numel(shape)) + " values, got " +
                                    std::to_string(values.size()));
    }
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->requires_grad = requires_grad;
    node->tape_id = next_tape_id();
    if (requires_grad) node->grad.assign(node->value.size(), T{0});
    return Tensor(std::move(node));
}

template <typename T>
std::size_t Tensor<T>::rows() const {
    if (rank() != 2) throw std::invalid_argument("tensor: rows() on rank " + std::to_string(rank()));
    return node_->shape[0];
}

template <typename T>
std::size_t Tensor<T>::cols() const {
    if (rank() != 2) throw std::invalid_argument("tensor: cols() on rank " + std::to_string(rank()));
    return node_->shape[1];
}

template <typename T>
T Tensor<T>::item() const {
    if (size() != 1) throw std::invalid_argument("tensor: item() on shape " + shape_str(shape()));
    return node_->value[0];
}

template <typename T>
void Tensor<T>::zero_grad() {
    if (node_->requires_grad) node_->grad.assign(node_->value.size(), T{0});
}

template <typename T>
std::vector<T>& Tensor<T>::mutable_values() {
    if (!node_->is_leaf) throw std::logic_error("tensor: only leaves may be written in place");
    return node_->value;
}

template <typename T>
std::vector<T>& Tensor<T>::mutable_grad() {
    return grad_of(node_);
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
    return from(shape(), node_->value, requires_grad());
}

template <typename T>
std::vector<T>& grad_of(const std::shared_ptr<Node<T>>& node) {
    if (node->grad.size() != node->value.size()) node->grad.assign(node->value.size(), T{0});
    return node->grad;
}

template <typename T>
Tensor<T> make_result(const char* op, Shape shape, std::vector<T> values,
                      std::vector<Tensor<T>> inputs, std::function<void(Node<T>&)> backward) {
    auto node = std::make_shared<Node<T>>();
    node->shape = std::move(shape);
    node->value = std::move(values);
    node->is_leaf = false;
    node->op = op;
    node->tape_id = next_tape_id();
    if (t_grad_enabled) {
        const bool any = std::any_of(inputs.begin(), inputs.end(),
                                     [](const Tensor<T>& t) { return t.requires_grad(); });
        if (any) {
            node->requires_grad = true;
            node->inputs.reserve(inputs.size());
            for (auto& in : inputs) node->inputs.push_back(in.node());
            node->backward = std::move(backward);
        }
    }
    return Tensor<T>(std::move(node));
}

template <typename T>
void reverse_accumulate(const Tensor<T>& loss) {
    if (loss.size() != 1) {
        throw std::invalid_argument("reverse_accumulate: loss must be scalar, got shape " +
                                    shape_str(loss.shape()));
    }
    if (!loss.requires_grad()) return;

    // Collect every node reachable through recorded edges.
    std::vector<Node<T>*> order;
    std::unordered_set<Node<T>*> seen;
    std::vector<Node<T>*> stack{loss.node().get()};
    while (!stack.empty()) {
        Node<T>* n = stack.back();
        stack.pop_back();
        if (!seen.insert(n).second) continue;
        order.push_back(n);
        for (auto& in : n->inputs) {
            if (in->requires_grad) stack.push_back(in.get());
        }
    }
    // Tape ids grow with creation time, so descending id is a reverse topological order.
    std::sort(order.begin(), order.end(),
              [](const Node<T>* a, const Node<T>* b) { return a->tape_id > b->tape_id; });

    for (Node<T>* n : order) {
        if (!n->is_leaf) n->grad.assign(n->value.size(), T{0});
    }
    Node<T>* root = loss.node().get();
    if (root->grad.size() != 1) root->grad.assign(1, T{0});
    root->grad[0] += T{1};

    for (Node<T>* n : order) {
        if (n->backward) n->backward(*n);
    }
    // Release intermediate buffers; leaves keep their accumulated gradient.
    for (Node<T>* n : order) {
        if (!n->is_leaf && n != root) std::vector<T>().swap(n->grad);
    }
}

template <typename T>
void zero_grads(std::span<Tensor<T>> params) {
    for (auto& p : params) p.zero_grad();
}

#define ONERANKER_INSTANTIATE(T)                                                              \
    template class Tensor<T>;                                                                 \
    template std::vector<T>& grad_of<T>(const std::shared_ptr<Node<T>>&);                     \
    template Tensor<T> make_result<T>(const char*, Shape, std::vector<T>, std::vector<Tensor<T>>, \
                                      std::function<void(Node<T>&)>);                         \
    template void reverse_accumulate<T>(const Tensor<T>&);                                    \
    template void zero_grads<T>(std::span<Tensor<T>>);

ONERANKER_INSTANTIATE(float)
ONERANKER_INSTANTIATE(double)

#undef ONERANKER_INSTANTIATE

}  // namespace oneranker::tensor
