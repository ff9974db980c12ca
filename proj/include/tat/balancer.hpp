#pragma once

// Loss computation: sample-level uncertainty balancing via a small MLP over
// three stop-gradiented L1 distances, the task-level (Kendall) baseline kept
// for ablation, and the plain unweighted L1 loss.

#include "tat/data.hpp"
#include "tat/nn.hpp"
#include "tat/ops.hpp"

namespace tat {

// Mean absolute difference per sample: [N,...] x [N,...] -> [N].
template <typename T>
Tensor<T> l1_distance(const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw UsageError("l1_distance: shape mismatch " + shape_str(a.shape()) + " vs " +
                         shape_str(b.shape()));
    return mean_per_sample(vabs(sub(a, b)));
}

// Two-layer MLP mapping the three distances to log sigma; sigma = exp(s) > 0
// structurally. The output layer starts at zero so sigma == 1 exactly at init.
template <typename T>
struct SigmaNet {
    int64_t hidden = 16;
    Tensor<T> w1, b1, w2, b2;

    SigmaNet() = default;
    SigmaNet(ParamStore<T>& store, uint64_t seed, int64_t hidden_width = 16) : hidden(hidden_width) {
        w1 = store.add("sigma.w1", init::he_normal<T>({hidden, 3}, 3, seed, "sigma.w1"));
        b1 = store.add("sigma.b1", init::zeros<T>({hidden}));
        w2 = store.add("sigma.w2", init::zeros<T>({1, hidden}));
        b2 = store.add("sigma.b2", init::zeros<T>({1}));
    }

    // rec3: [N,3], already stop-gradiented. Returns sigma: [N].
    Tensor<T> sigma(const Tensor<T>& rec3) const {
        if (rec3.ndim() != 2 || rec3.dim(1) != 3)
            throw UsageError("SigmaNet: expected [N,3] input, got " + shape_str(rec3.shape()));
        auto s = linear(gelu(linear(rec3, w1, b1)), w2, b2);  // [N,1]
        return reshape(vexp(s), {rec3.dim(0)});
    }
};

// The three per-sample distances of Eq-style balancing, in the fixed order
// [L1(lq,hq), L1(lq,pred), L1(pred,hq)], stop-gradiented and stacked to [N,3].
// The stop gradient decouples loss balancing from model optimization: sigma's
// value depends on the prediction, but no gradient flows through that path.
template <typename T>
Tensor<T> sigma_inputs(const Tensor<T>& lq, const Tensor<T>& hq, const Tensor<T>& pred) {
    const int64_t n = lq.dim(0);
    auto c0 = stop_gradient(reshape(l1_distance(lq, hq), {n, 1}));
    auto c1 = stop_gradient(reshape(l1_distance(lq, pred), {n, 1}));
    auto c2 = stop_gradient(reshape(l1_distance(pred, hq), {n, 1}));
    return concat<T>({c0, c1, c2}, 1);
}

// Per-sample L/(2 sigma^2) + log sigma, averaged over the batch.
template <typename T>
Tensor<T> balanced_loss(const Tensor<T>& l_pred_hq, const Tensor<T>& sigma) {
    if (l_pred_hq.shape() != sigma.shape())
        throw UsageError("balanced_loss: per-sample shapes differ");
    for (T s : sigma.data())
        if (!(s > T(0))) throw InternalError("balanced_loss: sigma must be positive");
    auto weighted = div(l_pred_hq, mul_scalar(mul(sigma, sigma), T(2)));
    return mean_all(add(weighted, vlog(sigma)));
}

// Task-indexed uncertainty baseline: one learnable log-scale per task.
template <typename T>
struct KendallBaseline {
    Tensor<T> log_sigma;  // [T], sigma_t = exp(s_t), init sigma_t = 1

    KendallBaseline() = default;
    explicit KendallBaseline(ParamStore<T>& store) {
        log_sigma = store.add("kendall.s", init::zeros<T>({static_cast<int64_t>(kAllTasks.size())}));
    }

    Tensor<T> sigmas() const { return vexp(log_sigma); }
};

// Sum over tasks of L^t/(2 sigma_t^2) + log sigma_t.
template <typename T>
Tensor<T> kendall_loss(const Tensor<T>& task_losses, const KendallBaseline<T>& baseline) {
    auto sig = baseline.sigmas();
    if (task_losses.shape() != sig.shape())
        throw UsageError("kendall_loss: expected one loss per task");
    auto weighted = div(task_losses, mul_scalar(mul(sig, sig), T(2)));
    return sum_all(add(weighted, vlog(sig)));
}

// One row of the training log.
struct LossRecord {
    int64_t iteration = 0;
    TaskTag task = TaskTag::kLowDose;
    double l_lq_hq = 0, l_lq_pred = 0, l_pred_hq = 0;
    double sigma = 1;
    double weighted = 0;
};

}  // namespace tat
