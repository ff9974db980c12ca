#pragma once

#include <chrono>
#include <cstring>
#include <functional>
#include <memory>
#include <span>
#include <unordered_map>
#include <utility>

#include "tat/common.hpp"

namespace tat {

template <typename T>
class Tape;

template <typename T>
struct GradStore;

namespace detail {

// One vertex of the computation graph. Values are immutable after construction;
// only grad is mutated (additively) during reverse replay.
template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;  // lazily allocated; empty means "exactly zero"
    bool requires_grad = false;
    bool is_leaf = true;
    const char* tag = "";
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void(Node&, GradStore<T>*)> backward;

    int64_t numel() const { return static_cast<int64_t>(value.size()); }
};

template <typename T>
inline thread_local Tape<T>* tls_tape = nullptr;

#ifdef TAT_PROFILE
inline std::unordered_map<std::string, double>& prof_table() {
    static std::unordered_map<std::string, double> t;
    return t;
}
struct ProfScope {
    const char* tag;
    std::chrono::steady_clock::time_point t0 = std::chrono::steady_clock::now();
    explicit ProfScope(const char* tag_) : tag(tag_) {}
    ~ProfScope() {
        prof_table()[tag] += std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    }
};
#define TAT_PROF_SCOPE(tag) ::tat::detail::ProfScope tat_prof_scope_(tag)
#else
#define TAT_PROF_SCOPE(tag)
#endif

}  // namespace detail

// Per-consumer gradient accumulator used for data-parallel training: each worker
// backpropagates into its own store, and the harness reduces stores in a fixed
// order so results do not depend on the thread count.
template <typename T>
struct GradStore {
    struct Entry {
        std::vector<T> g;
        uint64_t epoch = 0;
    };
    std::unordered_map<const detail::Node<T>*, Entry> entries;
    uint64_t epoch = 1;

    void next_epoch() { ++epoch; }

    std::span<T> acquire(const detail::Node<T>& n) {
        Entry& e = entries[&n];
        if (e.epoch != epoch) {
            e.g.assign(n.value.size(), T(0));
            e.epoch = epoch;
        }
        return {e.g.data(), e.g.size()};
    }

    // Returns the accumulated gradient for this epoch, or empty if untouched.
    std::span<const T> lookup(const detail::Node<T>& n) const {
        auto it = entries.find(&n);
        if (it == entries.end() || it->second.epoch != epoch) return {};
        return {it->second.g.data(), it->second.g.size()};
    }
};

// Value-semantics handle to a graph node. Copies are cheap and alias the same
// storage; the public API never mutates values after creation (mutable_data is
// reserved for the optimizer and checkpoint loading, which run between tapes).
template <typename T>
class Tensor {
  public:
    using Node = detail::Node<T>;

    Tensor() = default;

    static Tensor zeros(Shape shape) {
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        return Tensor(std::move(n), true);
    }
    static Tensor full(Shape shape, T v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.node_->value.begin(), t.node_->value.end(), v);
        return t;
    }
    static Tensor scalar(T v) { return full({1}, v); }
    static Tensor from_vec(Shape shape, std::vector<T> data) {
        if (numel_of(shape) != static_cast<int64_t>(data.size()))
            throw UsageError("from_vec: shape " + shape_str(shape) + " does not match data size " +
                             std::to_string(data.size()));
        auto n = std::make_shared<Node>();
        n->shape = std::move(shape);
        n->value = std::move(data);
        return Tensor(std::move(n), false);
    }
    static Tensor randn(Shape shape, Rng& rng, T stddev = T(1), T mean = T(0)) {
        Tensor t = zeros(std::move(shape));
        std::normal_distribution<double> d(0.0, 1.0);
        for (T& v : t.node_->value) v = mean + stddev * static_cast<T>(d(rng));
        return t;
    }
    static Tensor rand_uniform(Shape shape, Rng& rng, T lo = T(0), T hi = T(1)) {
        Tensor t = zeros(std::move(shape));
        std::uniform_real_distribution<double> d(lo, hi);
        for (T& v : t.node_->value) v = static_cast<T>(d(rng));
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    int64_t numel() const { return node_->numel(); }
    int64_t dim(size_t i) const { return node_->shape[i]; }
    size_t ndim() const { return node_->shape.size(); }

    std::span<const T> data() const { return {node_->value.data(), node_->value.size()}; }
    std::span<T> mutable_data() { return {node_->value.data(), node_->value.size()}; }

    T item() const {
        if (numel() != 1) throw UsageError("item: tensor has " + std::to_string(numel()) + " elements");
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    bool is_leaf() const { return node_->is_leaf; }

    Tensor& set_requires_grad(bool rg = true) {
        if (!node_->is_leaf) throw UsageError("set_requires_grad: only leaf tensors");
        node_->requires_grad = rg;
        return *this;
    }

    // Gradient accumulated on this node; empty grad reads as exact zeros.
    std::vector<T> grad() const {
        if (!node_->grad.empty()) return node_->grad;
        return std::vector<T>(node_->value.size(), T(0));
    }
    bool grad_nonzero() const {
        for (T v : node_->grad)
            if (v != T(0)) return true;
        return false;
    }
    void zero_grad() { node_->grad.clear(); }

    Node* node() const { return node_.get(); }
    const std::shared_ptr<Node>& node_ptr() const { return node_; }

  private:
    explicit Tensor(std::shared_ptr<Node> n, bool fill_zero) : node_(std::move(n)) {
        if (fill_zero) node_->value.assign(static_cast<size_t>(numel_of(node_->shape)), T(0));
    }
    std::shared_ptr<Node> node_;

    template <typename U>
    friend Tensor<U> make_op_node(Shape shape, std::vector<U> value,
                                  std::vector<Tensor<U>> parents,
                                  std::function<void(detail::Node<U>&, GradStore<U>*)> bw,
                                  const char* tag);
};

// Records executed ops in order; reverse replay visits each exactly once.
// One tape per forward/backward cycle. Constructing a tape makes it current for
// this thread; destruction restores the previous one.
template <typename T>
class Tape {
  public:
    Tape() : prev_(detail::tls_tape<T>) { detail::tls_tape<T> = this; }
    ~Tape() { detail::tls_tape<T> = prev_; }
    Tape(const Tape&) = delete;
    Tape& operator=(const Tape&) = delete;

    static Tape* current() { return detail::tls_tape<T>; }

    void record(std::shared_ptr<detail::Node<T>> n) { nodes_.push_back(std::move(n)); }
    size_t size() const { return nodes_.size(); }

    // Reverse replay from `loss`, seeding d(loss)/d(loss) = seed. Gradients of
    // leaf tensors go to `store` when given, otherwise accumulate on the leaves
    // themselves. Intermediate grads stay on their (tape-local) nodes.
    void backward(const Tensor<T>& loss, GradStore<T>* store = nullptr, T seed = T(1)) {
        if (loss.numel() != 1) throw UsageError("backward: loss must be scalar, got " + shape_str(loss.shape()));
        detail::Node<T>* root = loss.node();
        if (!root->requires_grad) return;  // loss disconnected from any differentiable input
        if (root->is_leaf) {
            accumulate_seed(*root, store, seed);
            return;
        }
        if (root->grad.empty()) root->grad.assign(1, T(0));
        root->grad[0] += seed;
        for (size_t i = nodes_.size(); i-- > 0;) {
            detail::Node<T>& n = *nodes_[i];
            if (n.grad.empty()) continue;  // unreachable from the loss
            if (n.backward) {
#ifdef TAT_PROFILE
                std::string bw_tag = std::string(n.tag) + "_bw";
                detail::ProfScope prof2(bw_tag.c_str());
#endif
                n.backward(n, store);
            }
        }
    }

  private:
    static void accumulate_seed(detail::Node<T>& leaf, GradStore<T>* store, T seed) {
        if (store) {
            store->acquire(leaf)[0] += seed;
        } else {
            if (leaf.grad.empty()) leaf.grad.assign(leaf.value.size(), T(0));
            leaf.grad[0] += seed;
        }
    }

    Tape* prev_;
    std::vector<std::shared_ptr<detail::Node<T>>> nodes_;
};

// Acquire the gradient buffer for `parent`, routing leaf gradients through the
// store when one is active. All op backward functions accumulate through this.
template <typename T>
inline std::span<T> grad_buf(detail::Node<T>& parent, GradStore<T>* store) {
    if (store && parent.is_leaf) return store->acquire(parent);
    if (parent.grad.empty()) parent.grad.assign(parent.value.size(), T(0));
    return {parent.grad.data(), parent.grad.size()};
}

// Shared factory for op results. Records the node iff a tape is active and some
// parent participates in differentiation; otherwise the result is a plain value
// and the graph edges are dropped (inference mode).
template <typename T>
Tensor<T> make_op_node(Shape shape, std::vector<T> value, std::vector<Tensor<T>> parents,
                       std::function<void(detail::Node<T>&, GradStore<T>*)> bw,
                       const char* tag = "") {
    auto n = std::make_shared<detail::Node<T>>();
    n->shape = std::move(shape);
    n->value = std::move(value);
    n->tag = tag;
    Tape<T>* tape = Tape<T>::current();
    bool track = false;
    if (tape) {
        for (const auto& p : parents)
            if (p.node()->requires_grad) track = true;
    }
    if (track) {
        n->requires_grad = true;
        n->is_leaf = false;
        n->parents.reserve(parents.size());
        for (auto& p : parents) n->parents.push_back(p.node_ptr());
        n->backward = std::move(bw);
        tape->record(n);
    }
    return Tensor<T>(std::move(n), false);
}

}  // namespace tat
