#pragma once

// Differentiable primitive operations. Every op builds a value eagerly and, when
// a tape is active and an input participates in differentiation, records a
// backward closure that accumulates additively into its parents' grad buffers.
// All loops are sequential with a fixed order, so results are bit-reproducible.

#define EIGEN_DONT_PARALLELIZE 1
#include <Eigen/Core>

#include <cmath>
#include <numeric>

#include "tat/tensor.hpp"

namespace tat {

template <typename T>
using EMat = Eigen::Matrix<T, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename T>
using EMap = Eigen::Map<EMat<T>>;
template <typename T>
using ECMap = Eigen::Map<const EMat<T>>;

namespace detail {

inline constexpr double kPi = 3.14159265358979323846;

// Pads `s` with leading 1s to rank `r`.
inline Shape pad_rank(const Shape& s, size_t r) {
    Shape out(r, 1);
    std::copy(s.begin(), s.end(), out.begin() + (r - s.size()));
    return out;
}

inline Shape broadcast_shape(const Shape& a, const Shape& b) {
    size_t r = std::max(a.size(), b.size());
    Shape pa = pad_rank(a, r), pb = pad_rank(b, r), out(r);
    for (size_t i = 0; i < r; ++i) {
        if (pa[i] == pb[i]) out[i] = pa[i];
        else if (pa[i] == 1) out[i] = pb[i];
        else if (pb[i] == 1) out[i] = pa[i];
        else throw UsageError("broadcast: incompatible shapes " + shape_str(a) + " vs " + shape_str(b));
    }
    return out;
}

// Strides of `s` broadcast against `out` (0 where s extent is 1).
inline Shape broadcast_strides(const Shape& s, const Shape& out) {
    Shape p = pad_rank(s, out.size());
    Shape st = strides_of(p);
    for (size_t i = 0; i < p.size(); ++i)
        if (p[i] == 1 && out[i] != 1) st[i] = 0;
    return st;
}

// Walks every index of `out_shape`, calling f(out_linear, a_offset, b_offset).
template <typename F>
void broadcast_walk(const Shape& out_shape, const Shape& sa, const Shape& sb, F&& f) {
    const size_t r = out_shape.size();
    Shape idx(r, 0);
    int64_t total = numel_of(out_shape), oa = 0, ob = 0;
    for (int64_t lin = 0; lin < total; ++lin) {
        f(lin, oa, ob);
        for (size_t d = r; d-- > 0;) {
            ++idx[d];
            oa += sa[d];
            ob += sb[d];
            if (idx[d] < out_shape[d]) break;
            idx[d] = 0;
            oa -= sa[d] * out_shape[d];
            ob -= sb[d] * out_shape[d];
        }
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// stop-gradient

// Records stop-gradient outputs on one evaluation and replays them on later
// ones. Finite-difference checks of graphs containing stop_gradient need this:
// a perturbation must not leak through the severed branch as a value change,
// or the quotient measures sensitivity the gradient deliberately excludes.
// Never active outside verification code.
template <typename T>
class SgReplay {
  public:
    SgReplay() : prev_(active()) { active() = this; }
    ~SgReplay() { active() = prev_; }
    SgReplay(const SgReplay&) = delete;

    static SgReplay*& active() {
        static thread_local SgReplay* a = nullptr;
        return a;
    }

    void finish_recording() { recording_ = false; }
    void begin_eval() { cursor_ = 0; }

    std::vector<T> transform(const Tensor<T>& x) {
        if (recording_) {
            vals_.emplace_back(x.data().begin(), x.data().end());
            return vals_.back();
        }
        if (cursor_ >= vals_.size() || static_cast<int64_t>(vals_[cursor_].size()) != x.numel())
            throw InternalError("SgReplay: evaluation diverged from the recorded pass");
        return vals_[cursor_++];
    }

  private:
    SgReplay* prev_;
    std::vector<std::vector<T>> vals_;
    size_t cursor_ = 0;
    bool recording_ = true;
};

// Identity on values; severs the graph so reverse replay never crosses it.
template <typename T>
Tensor<T> stop_gradient(const Tensor<T>& x) {
    if (auto* r = SgReplay<T>::active()) return Tensor<T>::from_vec(x.shape(), r->transform(x));
    return Tensor<T>::from_vec(x.shape(), std::vector<T>(x.data().begin(), x.data().end()));
}

// ---------------------------------------------------------------------------
// broadcast binary ops

namespace detail {

template <typename T, typename FwdF, typename DaF, typename DbF>
Tensor<T> binary_op(const Tensor<T>& a, const Tensor<T>& b, FwdF fwd, DaF da_of, DbF db_of) {
    TAT_PROF_SCOPE("binop");
    const Shape out_shape = broadcast_shape(a.shape(), b.shape());
    const int64_t n = numel_of(out_shape);
    std::vector<T> out(static_cast<size_t>(n));
    auto av = a.data(), bv = b.data();
    const bool same = a.shape() == b.shape();
    if (same) {
        for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i], bv[i]);
    } else if (b.numel() == 1) {
        const T bs = bv[0];
        for (int64_t i = 0; i < n; ++i) out[i] = fwd(av[i], bs);
    } else if (a.numel() == 1) {
        const T as = av[0];
        for (int64_t i = 0; i < n; ++i) out[i] = fwd(as, bv[i]);
    } else {
        auto sa = broadcast_strides(a.shape(), out_shape);
        auto sb = broadcast_strides(b.shape(), out_shape);
        broadcast_walk(out_shape, sa, sb,
                       [&](int64_t lin, int64_t oa, int64_t ob) { out[lin] = fwd(av[oa], bv[ob]); });
    }
    return make_op_node<T>(
        out_shape, std::move(out), {a, b},
        [a, b, out_shape, da_of, db_of](detail::Node<T>& self, GradStore<T>* store) {
            auto g = self.grad;
            auto av2 = a.data(), bv2 = b.data();
            const int64_t n2 = static_cast<int64_t>(g.size());
            const bool same2 = a.shape() == b.shape();
            if (a.node()->requires_grad) {
                auto ga = grad_buf(*a.node(), store);
                if (same2) {
                    for (int64_t i = 0; i < n2; ++i) ga[i] += g[i] * da_of(av2[i], bv2[i]);
                } else if (a.numel() == 1) {
                    T acc = 0;
                    for (int64_t i = 0; i < n2; ++i) acc += g[i] * da_of(av2[0], bv2[i]);
                    ga[0] += acc;
                } else if (b.numel() == 1) {
                    for (int64_t i = 0; i < n2; ++i) ga[i] += g[i] * da_of(av2[i], bv2[0]);
                } else {
                    auto sa = broadcast_strides(a.shape(), out_shape);
                    auto sb = broadcast_strides(b.shape(), out_shape);
                    broadcast_walk(out_shape, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) {
                        ga[oa] += g[lin] * da_of(av2[oa], bv2[ob]);
                    });
                }
            }
            if (b.node()->requires_grad) {
                auto gb = grad_buf(*b.node(), store);
                if (same2) {
                    for (int64_t i = 0; i < n2; ++i) gb[i] += g[i] * db_of(av2[i], bv2[i]);
                } else if (b.numel() == 1) {
                    T acc = 0;
                    for (int64_t i = 0; i < n2; ++i) acc += g[i] * db_of(av2[i], bv2[0]);
                    gb[0] += acc;
                } else if (a.numel() == 1) {
                    for (int64_t i = 0; i < n2; ++i) gb[i] += g[i] * db_of(av2[0], bv2[i]);
                } else {
                    auto sa = broadcast_strides(a.shape(), out_shape);
                    auto sb = broadcast_strides(b.shape(), out_shape);
                    broadcast_walk(out_shape, sa, sb, [&](int64_t lin, int64_t oa, int64_t ob) {
                        gb[ob] += g[lin] * db_of(av2[oa], bv2[ob]);
                    });
                }
            }
        },
                           "binop");
}

}  // namespace detail

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x + y; }, [](T, T) { return T(1); }, [](T, T) { return T(1); });
}
template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x - y; }, [](T, T) { return T(1); }, [](T, T) { return T(-1); });
}
template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x * y; }, [](T, T y) { return y; }, [](T x, T) { return x; });
}
template <typename T>
Tensor<T> div(const Tensor<T>& a, const Tensor<T>& b) {
    return detail::binary_op(
        a, b, [](T x, T y) { return x / y; }, [](T, T y) { return T(1) / y; },
        [](T x, T y) { return -x / (y * y); });
}

template <typename T>
Tensor<T> operator+(const Tensor<T>& a, const Tensor<T>& b) { return add(a, b); }
template <typename T>
Tensor<T> operator-(const Tensor<T>& a, const Tensor<T>& b) { return sub(a, b); }
template <typename T>
Tensor<T> operator*(const Tensor<T>& a, const Tensor<T>& b) { return mul(a, b); }

// ---------------------------------------------------------------------------
// scalar-constant and unary ops

namespace detail {

template <typename T, typename FwdF, typename GradF>
Tensor<T> unary_op(const Tensor<T>& x, FwdF fwd, GradF grad_of) {
    TAT_PROF_SCOPE("unop");
    const int64_t n = x.numel();
    std::vector<T> out(static_cast<size_t>(n));
    auto xv = x.data();
    for (int64_t i = 0; i < n; ++i) out[i] = fwd(xv[i]);
    return make_op_node<T>(x.shape(), std::move(out), {x},
                           [x, grad_of](detail::Node<T>& self, GradStore<T>* store) {
                               if (!x.node()->requires_grad) return;
                               auto gx = grad_buf(*x.node(), store);
                               auto xv2 = x.data();
                               for (size_t i = 0; i < self.grad.size(); ++i)
                                   gx[i] += self.grad[i] * grad_of(xv2[i]);
                           },
                           "unop");
}

}  // namespace detail

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& x, T c) {
    return detail::unary_op(x, [c](T v) { return v + c; }, [](T) { return T(1); });
}
template <typename T>
Tensor<T> mul_scalar(const Tensor<T>& x, T c) {
    return detail::unary_op(x, [c](T v) { return v * c; }, [c](T) { return c; });
}
template <typename T>
Tensor<T> neg(const Tensor<T>& x) { return mul_scalar(x, T(-1)); }
template <typename T>
Tensor<T> vexp(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return std::exp(v); }, [](T v) { return std::exp(v); });
}
template <typename T>
Tensor<T> vlog(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return std::log(v); }, [](T v) { return T(1) / v; });
}
template <typename T>
Tensor<T> vabs(const Tensor<T>& x) {
    return detail::unary_op(x, [](T v) { return std::abs(v); },
                            [](T v) { return v > T(0) ? T(1) : (v < T(0) ? T(-1) : T(0)); });
}

namespace detail {

// erf for the float path: Abramowitz & Stegun 7.1.26, |error| < 1.5e-7 —
// below float round-off for the GELU product, and vectorizable. The double
// path keeps libm's erf so 64-bit oracle tests see full precision.
inline float erf_fast(float x) {
    const float sign = x < 0 ? -1.0f : 1.0f;
    x = std::abs(x);
    const float t = 1.0f / (1.0f + 0.3275911f * x);
    const float poly =
        t * (0.254829592f + t * (-0.284496736f + t * (1.421413741f + t * (-1.453152027f + t * 1.061405429f))));
    return sign * (1.0f - poly * std::exp(-x * x));
}
inline float erf_of(float x) { return erf_fast(x); }
inline double erf_of(double x) { return std::erf(x); }
inline float exp_of(float x) { return std::exp(x); }
inline double exp_of(double x) { return std::exp(x); }

}  // namespace detail

// Exact (erf) GELU. The forward saves the Gaussian CDF so backward pays only
// for the density term.
template <typename T>
Tensor<T> gelu(const Tensor<T>& x) {
    TAT_PROF_SCOPE("gelu");
    constexpr T inv_sqrt2 = T(0.70710678118654752440);
    const T inv_sqrt2pi = T(1) / std::sqrt(T(2) * T(detail::kPi));
    const int64_t n = x.numel();
    auto cdf = std::make_shared<std::vector<T>>(static_cast<size_t>(n));
    std::vector<T> out(static_cast<size_t>(n));
    auto xv = x.data();
    for (int64_t i = 0; i < n; ++i) {
        (*cdf)[i] = T(0.5) * (T(1) + detail::erf_of(xv[i] * inv_sqrt2));
        out[i] = xv[i] * (*cdf)[i];
    }
    return make_op_node<T>(x.shape(), std::move(out), {x},
                           [x, cdf, inv_sqrt2pi](detail::Node<T>& self, GradStore<T>* store) {
                               if (!x.node()->requires_grad) return;
                               auto gx = grad_buf(*x.node(), store);
                               auto xv2 = x.data();
                               for (size_t i = 0; i < self.grad.size(); ++i) {
                                   const T v = xv2[i];
                                   gx[i] += self.grad[i] *
                                            ((*cdf)[i] + v * inv_sqrt2pi * detail::exp_of(T(-0.5) * v * v));
                               }
                           },
                           "gelu");
}

// ---------------------------------------------------------------------------
// shape ops

template <typename T>
Tensor<T> reshape(const Tensor<T>& x, Shape shape) {
    TAT_PROF_SCOPE("reshape");
    // one extent may be -1 (inferred)
    int64_t known = 1, infer = -1;
    for (size_t i = 0; i < shape.size(); ++i) {
        if (shape[i] == -1) {
            if (infer >= 0) throw UsageError("reshape: multiple -1 extents");
            infer = static_cast<int64_t>(i);
        } else known *= shape[i];
    }
    if (infer >= 0) shape[infer] = x.numel() / known;
    if (numel_of(shape) != x.numel())
        throw UsageError("reshape: cannot view " + shape_str(x.shape()) + " as " + shape_str(shape));
    std::vector<T> out(x.data().begin(), x.data().end());
    return make_op_node<T>(std::move(shape), std::move(out), {x},
                           [x](detail::Node<T>& self, GradStore<T>* store) {
                               if (!x.node()->requires_grad) return;
                               auto gx = grad_buf(*x.node(), store);
                               for (size_t i = 0; i < self.grad.size(); ++i) gx[i] += self.grad[i];
                           },
                           "reshape");
}

template <typename T>
Tensor<T> concat(const std::vector<Tensor<T>>& xs, size_t axis) {
    TAT_PROF_SCOPE("concat");
    if (xs.empty()) throw UsageError("concat: empty input list");
    Shape out_shape = xs[0].shape();
    int64_t axis_total = 0;
    for (const auto& x : xs) {
        if (x.ndim() != out_shape.size()) throw UsageError("concat: rank mismatch");
        for (size_t d = 0; d < out_shape.size(); ++d)
            if (d != axis && x.shape()[d] != out_shape[d])
                throw UsageError("concat: shape mismatch at axis " + std::to_string(d));
        axis_total += x.shape()[axis];
    }
    out_shape[axis] = axis_total;
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= out_shape[d];
    for (size_t d = axis + 1; d < out_shape.size(); ++d) inner *= out_shape[d];

    std::vector<T> out(static_cast<size_t>(numel_of(out_shape)));
    int64_t off = 0;
    for (const auto& x : xs) {
        const int64_t blk = x.shape()[axis] * inner;
        auto xv = x.data();
        for (int64_t o = 0; o < outer; ++o)
            std::copy_n(xv.data() + o * blk, blk, out.data() + o * axis_total * inner + off);
        off += blk;
    }
    return make_op_node<T>(
        out_shape, std::move(out), xs,
        [xs, outer, inner, axis_total, axis](detail::Node<T>& self, GradStore<T>* store) {
            int64_t off2 = 0;
            for (const auto& x : xs) {
                const int64_t blk = x.shape()[axis] * inner;
                if (x.node()->requires_grad) {
                    auto gx = grad_buf(*x.node(), store);
                    for (int64_t o = 0; o < outer; ++o) {
                        const T* src = self.grad.data() + o * axis_total * inner + off2;
                        T* dst = gx.data() + o * blk;
                        for (int64_t i = 0; i < blk; ++i) dst[i] += src[i];
                    }
                }
                off2 += blk;
            }
        },
                           "concat");
}

template <typename T>
Tensor<T> slice(const Tensor<T>& x, size_t axis, int64_t start, int64_t len) {
    TAT_PROF_SCOPE("slice");
    if (axis >= x.ndim() || start < 0 || start + len > x.shape()[axis])
        throw UsageError("slice: range [" + std::to_string(start) + "," + std::to_string(start + len) +
                         ") out of bounds for " + shape_str(x.shape()));
    Shape out_shape = x.shape();
    out_shape[axis] = len;
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (size_t d = axis + 1; d < x.ndim(); ++d) inner *= x.shape()[d];
    const int64_t src_blk = x.shape()[axis] * inner, dst_blk = len * inner;

    std::vector<T> out(static_cast<size_t>(numel_of(out_shape)));
    auto xv = x.data();
    for (int64_t o = 0; o < outer; ++o)
        std::copy_n(xv.data() + o * src_blk + start * inner, dst_blk, out.data() + o * dst_blk);
    return make_op_node<T>(out_shape, std::move(out), {x},
                           [x, outer, inner, src_blk, dst_blk, start](detail::Node<T>& self, GradStore<T>* store) {
                               if (!x.node()->requires_grad) return;
                               auto gx = grad_buf(*x.node(), store);
                               for (int64_t o = 0; o < outer; ++o) {
                                   const T* src = self.grad.data() + o * dst_blk;
                                   T* dst = gx.data() + o * src_blk + start * inner;
                                   for (int64_t i = 0; i < dst_blk; ++i) dst[i] += src[i];
                               }
                           },
                           "slice");
}

// ---------------------------------------------------------------------------
// reductions

namespace detail {

inline std::vector<char> axes_mask(const Shape& shape, const std::vector<size_t>& axes) {
    std::vector<char> m(shape.size(), 0);
    for (size_t a : axes) {
        if (a >= shape.size()) throw UsageError("reduce: axis out of range");
        m[a] = 1;
    }
    return m;
}

}  // namespace detail

// Sum over `axes` (all axes if empty); result keeps reduced dims as 1 when
// keepdims, else drops them (a full reduction yields shape [1]).
template <typename T>
Tensor<T> reduce_sum(const Tensor<T>& x, std::vector<size_t> axes = {}, bool keepdims = false,
                     T scale = T(1)) {
    TAT_PROF_SCOPE("reduce");
    if (axes.empty())
        for (size_t d = 0; d < x.ndim(); ++d) axes.push_back(d);
    auto mask = detail::axes_mask(x.shape(), axes);
    Shape kept = x.shape();
    for (size_t d = 0; d < kept.size(); ++d)
        if (mask[d]) kept[d] = 1;
    Shape out_shape;
    if (keepdims) out_shape = kept;
    else {
        for (size_t d = 0; d < kept.size(); ++d)
            if (!mask[d]) out_shape.push_back(kept[d]);
        if (out_shape.empty()) out_shape = {1};
    }
    const Shape ost = detail::broadcast_strides(kept, x.shape());
    std::vector<T> out(static_cast<size_t>(numel_of(kept)), T(0));
    auto xv = x.data();
    detail::broadcast_walk(x.shape(), strides_of(x.shape()), ost,
                           [&](int64_t, int64_t xi, int64_t oi) { out[oi] += xv[xi]; });
    if (scale != T(1))
        for (T& v : out) v *= scale;
    return make_op_node<T>(out_shape, std::move(out), {x},
                           [x, kept, scale](detail::Node<T>& self, GradStore<T>* store) {
                               if (!x.node()->requires_grad) return;
                               auto gx = grad_buf(*x.node(), store);
                               const Shape ost2 = detail::broadcast_strides(kept, x.shape());
                               detail::broadcast_walk(x.shape(), strides_of(x.shape()), ost2,
                                                      [&](int64_t, int64_t xi, int64_t oi) {
                                                          gx[xi] += self.grad[oi] * scale;
                                                      });
                           },
                           "reduce");
}

template <typename T>
Tensor<T> reduce_mean(const Tensor<T>& x, std::vector<size_t> axes = {}, bool keepdims = false) {
    if (axes.empty())
        for (size_t d = 0; d < x.ndim(); ++d) axes.push_back(d);
    int64_t count = 1;
    for (size_t a : axes) count *= x.shape()[a];
    return reduce_sum(x, axes, keepdims, T(1) / static_cast<T>(count));
}

template <typename T>
Tensor<T> sum_all(const Tensor<T>& x) { return reduce_sum(x); }
template <typename T>
Tensor<T> mean_all(const Tensor<T>& x) { return reduce_mean(x); }

// Mean over every axis except the first: [N, ...] -> [N].
template <typename T>
Tensor<T> mean_per_sample(const Tensor<T>& x) {
    std::vector<size_t> axes;
    for (size_t d = 1; d < x.ndim(); ++d) axes.push_back(d);
    if (axes.empty()) return reshape(x, {x.numel()});
    return reduce_mean(x, axes, false);
}

// ---------------------------------------------------------------------------
// softmax / normalization

// Softmax along `axis`; rows are shifted by their max before exponentiation.
template <typename T>
Tensor<T> softmax(const Tensor<T>& x, size_t axis) {
    TAT_PROF_SCOPE("softmax");
    if (axis >= x.ndim()) throw UsageError("softmax: axis out of range");
    const int64_t len = x.shape()[axis];
    int64_t outer = 1, inner = 1;
    for (size_t d = 0; d < axis; ++d) outer *= x.shape()[d];
    for (size_t d = axis + 1; d < x.ndim(); ++d) inner *= x.shape()[d];
    std::vector<T> out(static_cast<size_t>(x.numel()));
    auto xv = x.data();
    for (int64_t o = 0; o < outer; ++o)
        for (int64_t i = 0; i < inner; ++i) {
            const int64_t base = o * len * inner + i;
            T mx = xv[base];
            for (int64_t j = 1; j < len; ++j) mx = std::max(mx, xv[base + j * inner]);
            T sum = 0;
            for (int64_t j = 0; j < len; ++j) {
                const T e = std::exp(xv[base + j * inner] - mx);
                out[base + j * inner] = e;
                sum += e;
            }
            const T inv = T(1) / sum;
            for (int64_t j = 0; j < len; ++j) out[base + j * inner] *= inv;
        }
    return make_op_node<T>(
        x.shape(), std::move(out), {x},
        [x, outer, inner, len](detail::Node<T>& self, GradStore<T>* store) {
            if (!x.node()->requires_grad) return;
            auto gx = grad_buf(*x.node(), store);
            const T* s = self.value.data();
            const T* g = self.grad.data();
            for (int64_t o = 0; o < outer; ++o)
                for (int64_t i = 0; i < inner; ++i) {
                    const int64_t base = o * len * inner + i;
                    T dot = 0;
                    for (int64_t j = 0; j < len; ++j) dot += g[base + j * inner] * s[base + j * inner];
                    for (int64_t j = 0; j < len; ++j) {
                        const int64_t k = base + j * inner;
                        gx[k] += s[k] * (g[k] - dot);
                    }
                }
        },
                           "softmax");
}

namespace detail {

template <typename T>
std::span<T> ln_scratch(int64_t n) {
    static thread_local std::vector<T> buf;
    if (static_cast<int64_t>(buf.size()) < n) buf.resize(static_cast<size_t>(n));
    return {buf.data(), static_cast<size_t>(n)};
}

}  // namespace detail

// Layer normalization over the channel axis of an NCHW tensor, with per-channel
// affine. Statistics use the biased variance (1/C). All passes stream the
// tensor channel-major with per-position accumulators.
template <typename T>
Tensor<T> layer_norm_channels(const Tensor<T>& x, const Tensor<T>& gamma, const Tensor<T>& beta,
                              T eps) {
    TAT_PROF_SCOPE("layernorm");
    if (x.ndim() != 4) throw UsageError("layer_norm_channels: expected NCHW, got " + shape_str(x.shape()));
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    if (gamma.numel() != C || beta.numel() != C)
        throw UsageError("layer_norm_channels: affine params must have C elements");
    std::vector<T> out(static_cast<size_t>(x.numel()));
    auto xv = x.data();
    auto gv = gamma.data(), bv = beta.data();
    const T invC = T(1) / static_cast<T>(C);
    auto scratch = detail::ln_scratch<T>(2 * HW);
    T* mean = scratch.data();
    T* istd = scratch.data() + HW;
    for (int64_t n = 0; n < N; ++n) {
        const T* xn = xv.data() + n * C * HW;
        std::fill_n(mean, HW, T(0));
        for (int64_t c = 0; c < C; ++c) {
            const T* xr = xn + c * HW;
            for (int64_t p = 0; p < HW; ++p) mean[p] += xr[p];
        }
        for (int64_t p = 0; p < HW; ++p) mean[p] *= invC;
        std::fill_n(istd, HW, T(0));
        for (int64_t c = 0; c < C; ++c) {
            const T* xr = xn + c * HW;
            for (int64_t p = 0; p < HW; ++p) {
                const T d = xr[p] - mean[p];
                istd[p] += d * d;
            }
        }
        for (int64_t p = 0; p < HW; ++p) istd[p] = T(1) / std::sqrt(istd[p] * invC + eps);
        for (int64_t c = 0; c < C; ++c) {
            const T* xr = xn + c * HW;
            T* yr = out.data() + n * C * HW + c * HW;
            const T gc = gv[c], bc = bv[c];
            for (int64_t p = 0; p < HW; ++p) yr[p] = gc * (xr[p] - mean[p]) * istd[p] + bc;
        }
    }
    return make_op_node<T>(
        x.shape(), std::move(out), {x, gamma, beta},
        [x, gamma, beta, eps, N, C, HW, invC](detail::Node<T>& self, GradStore<T>* store) {
            auto xv2 = x.data();
            auto gv2 = gamma.data();
            const T* g = self.grad.data();
            std::span<T> gx, gg, gb;
            if (x.node()->requires_grad) gx = grad_buf(*x.node(), store);
            if (gamma.node()->requires_grad) gg = grad_buf(*gamma.node(), store);
            if (beta.node()->requires_grad) gb = grad_buf(*beta.node(), store);
            auto scratch = detail::ln_scratch<T>(4 * HW);
            T* mean = scratch.data();
            T* istd = scratch.data() + HW;
            T* s1 = scratch.data() + 2 * HW;  // sum_c dxhat
            T* s2 = scratch.data() + 3 * HW;  // sum_c dxhat * xhat
            for (int64_t n = 0; n < N; ++n) {
                const T* xn = xv2.data() + n * C * HW;
                const T* gn = g + n * C * HW;
                std::fill_n(mean, HW, T(0));
                for (int64_t c = 0; c < C; ++c) {
                    const T* xr = xn + c * HW;
                    for (int64_t p = 0; p < HW; ++p) mean[p] += xr[p];
                }
                for (int64_t p = 0; p < HW; ++p) mean[p] *= invC;
                std::fill_n(istd, HW, T(0));
                for (int64_t c = 0; c < C; ++c) {
                    const T* xr = xn + c * HW;
                    for (int64_t p = 0; p < HW; ++p) {
                        const T d = xr[p] - mean[p];
                        istd[p] += d * d;
                    }
                }
                for (int64_t p = 0; p < HW; ++p) istd[p] = T(1) / std::sqrt(istd[p] * invC + eps);
                if (!gg.empty() || !gb.empty())
                    for (int64_t c = 0; c < C; ++c) {
                        const T* xr = xn + c * HW;
                        const T* gr = gn + c * HW;
                        T accg = 0, accb = 0;
                        for (int64_t p = 0; p < HW; ++p) {
                            accg += gr[p] * (xr[p] - mean[p]) * istd[p];
                            accb += gr[p];
                        }
                        if (!gg.empty()) gg[c] += accg;
                        if (!gb.empty()) gb[c] += accb;
                    }
                if (!gx.empty()) {
                    std::fill_n(s1, HW, T(0));
                    std::fill_n(s2, HW, T(0));
                    for (int64_t c = 0; c < C; ++c) {
                        const T* xr = xn + c * HW;
                        const T* gr = gn + c * HW;
                        const T gc = gv2[c];
                        for (int64_t p = 0; p < HW; ++p) {
                            const T dxh = gr[p] * gc;
                            s1[p] += dxh;
                            s2[p] += dxh * (xr[p] - mean[p]) * istd[p];
                        }
                    }
                    for (int64_t c = 0; c < C; ++c) {
                        const T* xr = xn + c * HW;
                        const T* gr = gn + c * HW;
                        const T gc = gv2[c];
                        T* gxr = gx.data() + n * C * HW + c * HW;
                        for (int64_t p = 0; p < HW; ++p) {
                            const T xhat = (xr[p] - mean[p]) * istd[p];
                            gxr[p] += istd[p] * (gr[p] * gc - invC * s1[p] - invC * xhat * s2[p]);
                        }
                    }
                }
            }
        },
                           "layernorm");
}

// L2-normalizes the last axis: y = v / sqrt(sum(v^2) + eps).
template <typename T>
Tensor<T> l2_normalize_rows(const Tensor<T>& x, T eps = T(1e-12)) {
    TAT_PROF_SCOPE("l2norm");
    const int64_t L = x.shape().back();
    const int64_t rows = x.numel() / L;
    std::vector<T> out(static_cast<size_t>(x.numel()));
    auto xv = x.data();
    for (int64_t r = 0; r < rows; ++r) {
        const T* v = xv.data() + r * L;
        T ss = 0;
        for (int64_t i = 0; i < L; ++i) ss += v[i] * v[i];
        const T s = T(1) / std::sqrt(ss + eps);
        for (int64_t i = 0; i < L; ++i) out[r * L + i] = v[i] * s;
    }
    return make_op_node<T>(x.shape(), std::move(out), {x},
                           [x, rows, L, eps](detail::Node<T>& self, GradStore<T>* store) {
                               if (!x.node()->requires_grad) return;
                               auto gx = grad_buf(*x.node(), store);
                               auto xv2 = x.data();
                               const T* g = self.grad.data();
                               for (int64_t r = 0; r < rows; ++r) {
                                   const T* v = xv2.data() + r * L;
                                   const T* gr = g + r * L;
                                   T ss = 0, vg = 0;
                                   for (int64_t i = 0; i < L; ++i) {
                                       ss += v[i] * v[i];
                                       vg += v[i] * gr[i];
                                   }
                                   const T s = T(1) / std::sqrt(ss + eps);
                                   const T s3vg = s * s * s * vg;
                                   for (int64_t i = 0; i < L; ++i)
                                       gx[r * L + i] += s * gr[i] - s3vg * v[i];
                               }
                           },
                           "l2norm");
}

// ---------------------------------------------------------------------------
// matrix products

namespace detail {

// C(+)= opA(A) * opB(B) for row-major buffers.
template <typename T>
void gemm(T* cp, const T* ap, const T* bp, int64_t M, int64_t K, int64_t N, bool ta, bool tb,
          bool accumulate) {
    EMap<T> c(cp, M, N);
    ECMap<T> a(ap, ta ? K : M, ta ? M : K);
    ECMap<T> b(bp, tb ? N : K, tb ? K : N);
    if (!ta && !tb) accumulate ? void(c.noalias() += a * b) : void(c.noalias() = a * b);
    else if (ta && !tb) accumulate ? void(c.noalias() += a.transpose() * b) : void(c.noalias() = a.transpose() * b);
    else if (!ta && tb) accumulate ? void(c.noalias() += a * b.transpose()) : void(c.noalias() = a * b.transpose());
    else accumulate ? void(c.noalias() += a.transpose() * b.transpose()) : void(c.noalias() = a.transpose() * b.transpose());
}

}  // namespace detail

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    TAT_PROF_SCOPE("matmul");
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw UsageError("matmul: incompatible shapes " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int64_t M = a.dim(0), K = a.dim(1), N = b.dim(1);
    std::vector<T> out(static_cast<size_t>(M * N));
    detail::gemm(out.data(), a.data().data(), b.data().data(), M, K, N, false, false, false);
    return make_op_node<T>({M, N}, std::move(out), {a, b},
                           [a, b, M, K, N](detail::Node<T>& self, GradStore<T>* store) {
                               const T* g = self.grad.data();
                               if (a.node()->requires_grad) {
                                   auto ga = grad_buf(*a.node(), store);
                                   detail::gemm(ga.data(), g, b.data().data(), M, N, K, false, true, true);
                               }
                               if (b.node()->requires_grad) {
                                   auto gb = grad_buf(*b.node(), store);
                                   detail::gemm(gb.data(), a.data().data(), g, K, M, N, true, false, true);
                               }
                           },
                           "matmul");
}

// Batched matmul over the leading axis with optional transposes of the
// per-batch matrices: out_i = opA(a_i) * opB(b_i).
template <typename T>
Tensor<T> bmm(const Tensor<T>& a, const Tensor<T>& b, bool ta = false, bool tb = false) {
    TAT_PROF_SCOPE("bmm");
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0))
        throw UsageError("bmm: expected [B,·,·] pair, got " + shape_str(a.shape()) + " x " + shape_str(b.shape()));
    const int64_t B = a.dim(0);
    const int64_t M = ta ? a.dim(2) : a.dim(1), K = ta ? a.dim(1) : a.dim(2);
    const int64_t Kb = tb ? b.dim(2) : b.dim(1), N = tb ? b.dim(1) : b.dim(2);
    if (K != Kb) throw UsageError("bmm: inner extents differ");
    const int64_t as = a.dim(1) * a.dim(2), bs = b.dim(1) * b.dim(2), os = M * N;
    std::vector<T> out(static_cast<size_t>(B * os));
    for (int64_t i = 0; i < B; ++i)
        detail::gemm(out.data() + i * os, a.data().data() + i * as, b.data().data() + i * bs, M, K, N,
                     ta, tb, false);
    return make_op_node<T>(
        {B, M, N}, std::move(out), {a, b},
        [a, b, ta, tb, B, M, K, N, as, bs, os](detail::Node<T>& self, GradStore<T>* store) {
            const T* g = self.grad.data();
            if (a.node()->requires_grad) {
                auto ga = grad_buf(*a.node(), store);
                for (int64_t i = 0; i < B; ++i) {
                    // dA = ta ? opB(B) g^T : g opB(B)^T
                    if (ta)
                        detail::gemm(ga.data() + i * as, b.data().data() + i * bs, g + i * os, K, N, M,
                                     tb, true, true);
                    else
                        detail::gemm(ga.data() + i * as, g + i * os, b.data().data() + i * bs, M, N, K,
                                     false, !tb, true);
                }
            }
            if (b.node()->requires_grad) {
                auto gb = grad_buf(*b.node(), store);
                for (int64_t i = 0; i < B; ++i) {
                    // dB = tb ? g^T opA(A) : opA(A)^T g
                    if (tb)
                        detail::gemm(gb.data() + i * bs, g + i * os, a.data().data() + i * as, N, M, K,
                                     true, ta, true);
                    else
                        detail::gemm(gb.data() + i * bs, a.data().data() + i * as, g + i * os, K, M, N,
                                     !ta, false, true);
                }
            }
        },
                           "bmm");
}

// Affine map y = x W^T + b for x:[N,in], W:[out,in], b:[out] (optional).
template <typename T>
Tensor<T> linear(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = {}) {
    TAT_PROF_SCOPE("linear");
    if (x.ndim() != 2 || w.ndim() != 2 || x.dim(1) != w.dim(1))
        throw ConfigError("linear: incompatible shapes " + shape_str(x.shape()) + " x " + shape_str(w.shape()));
    const int64_t N = x.dim(0), In = x.dim(1), Out = w.dim(0);
    if (b.defined() && b.numel() != Out) throw ConfigError("linear: bias extent mismatch");
    std::vector<T> out(static_cast<size_t>(N * Out));
    detail::gemm(out.data(), x.data().data(), w.data().data(), N, In, Out, false, true, false);
    if (b.defined()) {
        auto bv = b.data();
        for (int64_t n = 0; n < N; ++n)
            for (int64_t o = 0; o < Out; ++o) out[n * Out + o] += bv[o];
    }
    std::vector<Tensor<T>> parents = {x, w};
    if (b.defined()) parents.push_back(b);
    return make_op_node<T>(
        {N, Out}, std::move(out), parents,
        [x, w, b, N, In, Out](detail::Node<T>& self, GradStore<T>* store) {
            const T* g = self.grad.data();
            if (x.node()->requires_grad) {
                auto gx = grad_buf(*x.node(), store);
                detail::gemm(gx.data(), g, w.data().data(), N, Out, In, false, false, true);
            }
            if (w.node()->requires_grad) {
                auto gw = grad_buf(*w.node(), store);
                detail::gemm(gw.data(), g, x.data().data(), Out, N, In, true, false, true);
            }
            if (b.defined() && b.node()->requires_grad) {
                auto gb = grad_buf(*b.node(), store);
                for (int64_t n = 0; n < N; ++n)
                    for (int64_t o = 0; o < Out; ++o) gb[o] += g[n * Out + o];
            }
        },
                           "linear");
}

}  // namespace tat
