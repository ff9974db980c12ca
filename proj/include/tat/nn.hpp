#pragma once

// Named leaf-parameter registry and initializers. Every parameter draws from
// its own RNG substream keyed by (seed, name), so two models built from the
// same seed agree on every shared parameter regardless of which extra
// parameters a variant adds or removes.

#include <unordered_map>

#include "tat/tensor.hpp"

namespace tat {

template <typename T>
class ParamStore {
  public:
    Tensor<T>& add(const std::string& name, Tensor<T> t) {
        if (index_.count(name)) throw InternalError("duplicate parameter name: " + name);
        t.set_requires_grad(true);
        index_[name] = items_.size();
        items_.emplace_back(name, std::move(t));
        return items_.back().second;
    }

    Tensor<T>& at(const std::string& name) {
        auto it = index_.find(name);
        if (it == index_.end()) throw InternalError("unknown parameter: " + name);
        return items_[it->second].second;
    }
    bool contains(const std::string& name) const { return index_.count(name) > 0; }

    auto begin() { return items_.begin(); }
    auto end() { return items_.end(); }
    auto begin() const { return items_.begin(); }
    auto end() const { return items_.end(); }
    size_t size() const { return items_.size(); }

    int64_t total_params() const {
        int64_t n = 0;
        for (const auto& [name, t] : items_) n += t.numel();
        return n;
    }

    void zero_grad() {
        for (auto& [name, t] : items_) t.zero_grad();
    }

    std::vector<Tensor<T>> tensors() {
        std::vector<Tensor<T>> out;
        out.reserve(items_.size());
        for (auto& [name, t] : items_) out.push_back(t);
        return out;
    }

  private:
    std::vector<std::pair<std::string, Tensor<T>>> items_;
    std::unordered_map<std::string, size_t> index_;
};

namespace init {

template <typename T>
Tensor<T> he_normal(Shape shape, int64_t fan_in, uint64_t seed, const std::string& name) {
    Rng rng = make_rng(substream_seed(seed, name));
    const T std = std::sqrt(T(2) / static_cast<T>(fan_in));
    return Tensor<T>::randn(std::move(shape), rng, std);
}

template <typename T>
Tensor<T> zeros(Shape shape) {
    return Tensor<T>::zeros(std::move(shape));
}

template <typename T>
Tensor<T> constant(Shape shape, T v) {
    return Tensor<T>::full(std::move(shape), v);
}

}  // namespace init

}  // namespace tat
