#pragma once

// AdamW with decoupled weight decay. The update is elementwise and sequential,
// so a step is a deterministic function of (parameters, grads, state).

#include <unordered_map>

#include "tat/tensor.hpp"

namespace tat {

template <typename T>
class AdamW {
  public:
    struct Options {
        T lr = T(2e-4);
        T beta1 = T(0.9);
        T beta2 = T(0.999);
        T eps = T(1e-8);
        T weight_decay = T(1e-4);
    };

    explicit AdamW(Options opt = {}) : opt_(opt) {}

    const Options& options() const { return opt_; }

    void step(std::vector<Tensor<T>>& params) {
        ++t_;
        const T bc1 = T(1) - std::pow(opt_.beta1, static_cast<T>(t_));
        const T bc2 = T(1) - std::pow(opt_.beta2, static_cast<T>(t_));
        for (auto& p : params) {
            auto* node = p.node();
            if (node->grad.empty()) continue;  // never reached by any loss this step
            State& s = state_[node];
            if (s.m.empty()) {
                s.m.assign(node->value.size(), T(0));
                s.v.assign(node->value.size(), T(0));
            }
            auto vals = p.mutable_data();
            const auto& g = node->grad;
            for (size_t i = 0; i < vals.size(); ++i) {
                s.m[i] = opt_.beta1 * s.m[i] + (T(1) - opt_.beta1) * g[i];
                s.v[i] = opt_.beta2 * s.v[i] + (T(1) - opt_.beta2) * g[i] * g[i];
                const T mhat = s.m[i] / bc1;
                const T vhat = s.v[i] / bc2;
                vals[i] -= opt_.lr * (mhat / (std::sqrt(vhat) + opt_.eps) +
                                      opt_.weight_decay * vals[i]);
            }
        }
    }

    static void zero_grad(std::vector<Tensor<T>>& params) {
        for (auto& p : params) p.zero_grad();
    }

  private:
    struct State {
        std::vector<T> m, v;
    };
    Options opt_;
    int64_t t_ = 0;
    std::unordered_map<detail::Node<T>*, State> state_;
};

}  // namespace tat
