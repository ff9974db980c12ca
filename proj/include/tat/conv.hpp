#pragma once

// Spatial ops on NCHW tensors: dense and depthwise convolution, pixel
// (un)shuffle, global average pooling. Dense convolution lowers to im2col +
// GEMM; depthwise runs as nine strided rectangle updates per channel so the
// inner loops vectorize. Depthwise kernels may be ordinary derived tensors
// (including one kernel per sample), which is what generated weights require.

#include "tat/ops.hpp"

namespace tat {

namespace detail {

template <typename T>
void im2col(const T* x, int64_t Ci, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t ph,
            int64_t pw, int64_t stride, int64_t Ho, int64_t Wo, T* col) {
    for (int64_t c = 0; c < Ci; ++c)
        for (int64_t i = 0; i < kh; ++i)
            for (int64_t j = 0; j < kw; ++j) {
                T* dst = col + ((c * kh + i) * kw + j) * Ho * Wo;
                for (int64_t oh = 0; oh < Ho; ++oh) {
                    const int64_t ih = oh * stride + i - ph;
                    if (ih < 0 || ih >= H) {
                        std::fill_n(dst + oh * Wo, Wo, T(0));
                        continue;
                    }
                    const T* src = x + c * H * W + ih * W;
                    for (int64_t ow = 0; ow < Wo; ++ow) {
                        const int64_t iw = ow * stride + j - pw;
                        dst[oh * Wo + ow] = (iw >= 0 && iw < W) ? src[iw] : T(0);
                    }
                }
            }
}

template <typename T>
void col2im_add(const T* col, int64_t Ci, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t ph,
                int64_t pw, int64_t stride, int64_t Ho, int64_t Wo, T* x) {
    for (int64_t c = 0; c < Ci; ++c)
        for (int64_t i = 0; i < kh; ++i)
            for (int64_t j = 0; j < kw; ++j) {
                const T* src = col + ((c * kh + i) * kw + j) * Ho * Wo;
                for (int64_t oh = 0; oh < Ho; ++oh) {
                    const int64_t ih = oh * stride + i - ph;
                    if (ih < 0 || ih >= H) continue;
                    T* dst = x + c * H * W + ih * W;
                    for (int64_t ow = 0; ow < Wo; ++ow) {
                        const int64_t iw = ow * stride + j - pw;
                        if (iw >= 0 && iw < W) dst[iw] += src[oh * Wo + ow];
                    }
                }
            }
}

}  // namespace detail

// 2-D correlation with zero padding kh/2 ("same" for stride 1, odd kernels).
template <typename T>
Tensor<T> conv2d(const Tensor<T>& x, const Tensor<T>& w, const Tensor<T>& b = {},
                 int64_t stride = 1) {
    TAT_PROF_SCOPE("conv2d");
    if (x.ndim() != 4 || w.ndim() != 4)
        throw ConfigError("conv2d: expected NCHW input and [Co,Ci,kh,kw] weight");
    const int64_t N = x.dim(0), Ci = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t Co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
    if (w.dim(1) != Ci)
        throw ConfigError("conv2d: weight expects " + std::to_string(w.dim(1)) + " input channels, got " +
                          std::to_string(Ci));
    if (b.defined() && b.numel() != Co) throw ConfigError("conv2d: bias extent mismatch");
    const int64_t ph = kh / 2, pw = kw / 2;
    const int64_t Ho = (H + 2 * ph - kh) / stride + 1, Wo = (W + 2 * pw - kw) / stride + 1;
    const bool pointwise = (kh == 1 && kw == 1 && stride == 1);

    std::vector<T> out(static_cast<size_t>(N * Co * Ho * Wo));
    std::vector<T> col;
    if (!pointwise) col.resize(static_cast<size_t>(Ci * kh * kw * Ho * Wo));
    auto xv = x.data();
    for (int64_t n = 0; n < N; ++n) {
        const T* xn = xv.data() + n * Ci * H * W;
        T* yn = out.data() + n * Co * Ho * Wo;
        if (pointwise) {
            detail::gemm(yn, w.data().data(), xn, Co, Ci, H * W, false, false, false);
        } else {
            detail::im2col(xn, Ci, H, W, kh, kw, ph, pw, stride, Ho, Wo, col.data());
            detail::gemm(yn, w.data().data(), col.data(), Co, Ci * kh * kw, Ho * Wo, false, false, false);
        }
        if (b.defined()) {
            auto bv = b.data();
            for (int64_t c = 0; c < Co; ++c) {
                T* row = yn + c * Ho * Wo;
                for (int64_t p = 0; p < Ho * Wo; ++p) row[p] += bv[c];
            }
        }
    }
    std::vector<Tensor<T>> parents = {x, w};
    if (b.defined()) parents.push_back(b);
    return make_op_node<T>(
        {N, Co, Ho, Wo}, std::move(out), parents,
        [x, w, b, N, Ci, H, W, Co, kh, kw, ph, pw, stride, Ho, Wo,
         pointwise](detail::Node<T>& self, GradStore<T>* store) {
            const T* g = self.grad.data();
            auto xv2 = x.data();
            std::span<T> gx, gw, gb;
            if (x.node()->requires_grad) gx = grad_buf(*x.node(), store);
            if (w.node()->requires_grad) gw = grad_buf(*w.node(), store);
            if (b.defined() && b.node()->requires_grad) gb = grad_buf(*b.node(), store);
            std::vector<T> col, colg;
            if (!pointwise) {
                col.resize(static_cast<size_t>(Ci * kh * kw * Ho * Wo));
                if (!gx.empty()) colg.resize(col.size());
            }
            for (int64_t n = 0; n < N; ++n) {
                const T* xn = xv2.data() + n * Ci * H * W;
                const T* gn = g + n * Co * Ho * Wo;
                if (pointwise) {
                    if (!gx.empty())
                        detail::gemm(gx.data() + n * Ci * H * W, w.data().data(), gn, Ci, Co, H * W,
                                     true, false, true);
                    if (!gw.empty())
                        detail::gemm(gw.data(), gn, xn, Co, Ho * Wo, Ci, false, true, true);
                } else {
                    detail::im2col(xn, Ci, H, W, kh, kw, ph, pw, stride, Ho, Wo, col.data());
                    if (!gw.empty())
                        detail::gemm(gw.data(), gn, col.data(), Co, Ho * Wo, Ci * kh * kw, false, true,
                                     true);
                    if (!gx.empty()) {
                        detail::gemm(colg.data(), w.data().data(), gn, Ci * kh * kw, Co, Ho * Wo, true,
                                     false, false);
                        detail::col2im_add(colg.data(), Ci, H, W, kh, kw, ph, pw, stride, Ho, Wo,
                                           gx.data() + n * Ci * H * W);
                    }
                }
                if (!gb.empty())
                    for (int64_t c = 0; c < Co; ++c) {
                        T acc = 0;
                        const T* row = gn + c * Ho * Wo;
                        for (int64_t p = 0; p < Ho * Wo; ++p) acc += row[p];
                        gb[c] += acc;
                    }
            }
        },
                           "conv2d");
}

namespace detail {

// Depthwise plane kernels work one output row at a time through a small
// row accumulator that stays in L1; inner loops are contiguous. The 3x3 case
// (the only kernel size the default configuration uses) runs a fused
// single-pass kernel with the interior free of bound checks.

template <typename T>
std::vector<T>& dw_row_buf(int64_t w) {
    static thread_local std::vector<T> buf;
    if (static_cast<int64_t>(buf.size()) < w) buf.resize(static_cast<size_t>(w));
    return buf;
}

// One output row of a 3x3 "same" correlation. Rows may be null (outside).
template <typename T>
void dw3_row(const T* rm, const T* r0, const T* rp, const T* k, T* y, int64_t W) {
    auto edge = [&](int64_t ow) {
        T acc = 0;
        if (rm) {
            if (ow > 0) acc += k[0] * rm[ow - 1];
            acc += k[1] * rm[ow];
            if (ow + 1 < W) acc += k[2] * rm[ow + 1];
        }
        if (ow > 0) acc += k[3] * r0[ow - 1];
        acc += k[4] * r0[ow];
        if (ow + 1 < W) acc += k[5] * r0[ow + 1];
        if (rp) {
            if (ow > 0) acc += k[6] * rp[ow - 1];
            acc += k[7] * rp[ow];
            if (ow + 1 < W) acc += k[8] * rp[ow + 1];
        }
        return acc;
    };
    y[0] = edge(0);
    if (W == 1) return;
    const T k0 = k[0], k1 = k[1], k2 = k[2], k3 = k[3], k4 = k[4], k5 = k[5], k6 = k[6],
            k7 = k[7], k8 = k[8];
    if (rm && rp) {
        for (int64_t t = 1; t < W - 1; ++t)
            y[t] = k0 * rm[t - 1] + k1 * rm[t] + k2 * rm[t + 1] + k3 * r0[t - 1] + k4 * r0[t] +
                   k5 * r0[t + 1] + k6 * rp[t - 1] + k7 * rp[t] + k8 * rp[t + 1];
    } else if (rm) {
        for (int64_t t = 1; t < W - 1; ++t)
            y[t] = k0 * rm[t - 1] + k1 * rm[t] + k2 * rm[t + 1] + k3 * r0[t - 1] + k4 * r0[t] +
                   k5 * r0[t + 1];
    } else if (rp) {
        for (int64_t t = 1; t < W - 1; ++t)
            y[t] = k3 * r0[t - 1] + k4 * r0[t] + k5 * r0[t + 1] + k6 * rp[t - 1] + k7 * rp[t] +
                   k8 * rp[t + 1];
    } else {
        for (int64_t t = 1; t < W - 1; ++t) y[t] = k3 * r0[t - 1] + k4 * r0[t] + k5 * r0[t + 1];
    }
    y[W - 1] = edge(W - 1);
}

// y = per-channel "same" correlation of one H x W plane with a kh x kw tap set.
template <typename T>
void dw_plane_forward(const T* x, const T* k, T* y, int64_t H, int64_t W, int64_t kh, int64_t kw) {
    const int64_t ph = kh / 2, pw = kw / 2;
    if (kh == 3 && kw == 3) {
        for (int64_t oh = 0; oh < H; ++oh)
            dw3_row(oh > 0 ? x + (oh - 1) * W : nullptr, x + oh * W,
                    oh + 1 < H ? x + (oh + 1) * W : nullptr, k, y + oh * W, W);
        return;
    }
    T* acc = dw_row_buf<T>(W).data();
    for (int64_t oh = 0; oh < H; ++oh) {
        std::fill_n(acc, W, T(0));
        for (int64_t i = 0; i < kh; ++i) {
            const int64_t ih = oh + i - ph;
            if (ih < 0 || ih >= H) continue;
            const T* xr = x + ih * W;
            for (int64_t j = 0; j < kw; ++j) {
                const T wv = k[i * kw + j];
                const int64_t off = j - pw;
                const int64_t lo = std::max<int64_t>(0, -off), hi = std::min<int64_t>(W, W - off);
                const T* xs = xr + off + lo;
                T* as = acc + lo;
                for (int64_t t = 0; t < hi - lo; ++t) as[t] += wv * xs[t];
            }
        }
        std::copy_n(acc, W, y + oh * W);
    }
}

// gx += correlation of gy with the flipped kernel (the adjoint of forward).
template <typename T>
void dw_plane_backward_x(const T* gy, const T* k, T* gx, int64_t H, int64_t W, int64_t kh,
                         int64_t kw) {
    const int64_t ph = kh / 2, pw = kw / 2;
    T* acc = dw_row_buf<T>(W).data();
    if (kh == 3 && kw == 3) {
        const T kf[9] = {k[8], k[7], k[6], k[5], k[4], k[3], k[2], k[1], k[0]};
        for (int64_t ih = 0; ih < H; ++ih) {
            dw3_row(ih > 0 ? gy + (ih - 1) * W : nullptr, gy + ih * W,
                    ih + 1 < H ? gy + (ih + 1) * W : nullptr, kf, acc, W);
            T* xr = gx + ih * W;
            for (int64_t t = 0; t < W; ++t) xr[t] += acc[t];
        }
        return;
    }
    for (int64_t ih = 0; ih < H; ++ih) {
        std::fill_n(acc, W, T(0));
        for (int64_t i = 0; i < kh; ++i) {
            const int64_t oh = ih - i + ph;
            if (oh < 0 || oh >= H) continue;
            const T* gr = gy + oh * W;
            for (int64_t j = 0; j < kw; ++j) {
                const T wv = k[i * kw + j];
                const int64_t off = pw - j;  // iw = ow + j - pw
                const int64_t lo = std::max<int64_t>(0, -off), hi = std::min<int64_t>(W, W - off);
                const T* gs = gr + off + lo;
                T* as = acc + lo;
                for (int64_t t = 0; t < hi - lo; ++t) as[t] += wv * gs[t];
            }
        }
        T* xr = gx + ih * W;
        for (int64_t t = 0; t < W; ++t) xr[t] += acc[t];
    }
}

// gk[i,j] += sum over the valid region of x(shifted) * gy.
template <typename T>
void dw_plane_backward_k(const T* x, const T* gy, T* gk, int64_t H, int64_t W, int64_t kh,
                         int64_t kw) {
    const int64_t ph = kh / 2, pw = kw / 2;
    if (kh == 3 && kw == 3) {
        T a[9] = {};
        for (int64_t oh = 0; oh < H; ++oh) {
            const T* gr = gy + oh * W;
            for (int64_t i = 0; i < 3; ++i) {
                const int64_t ih = oh + i - 1;
                if (ih < 0 || ih >= H) continue;
                const T* xr = x + ih * W;
                T s0 = 0, s1 = 0, s2 = 0;
                for (int64_t t = 1; t < W; ++t) s0 += xr[t - 1] * gr[t];
                for (int64_t t = 0; t < W; ++t) s1 += xr[t] * gr[t];
                for (int64_t t = 0; t < W - 1; ++t) s2 += xr[t + 1] * gr[t];
                a[i * 3 + 0] += s0;
                a[i * 3 + 1] += s1;
                a[i * 3 + 2] += s2;
            }
        }
        for (int m = 0; m < 9; ++m) gk[m] += a[m];
        return;
    }
    for (int64_t i = 0; i < kh; ++i)
        for (int64_t j = 0; j < kw; ++j) {
            const int64_t oh0 = std::max<int64_t>(0, ph - i), oh1 = std::min<int64_t>(H, H + ph - i);
            const int64_t ow0 = std::max<int64_t>(0, pw - j), ow1 = std::min<int64_t>(W, W + pw - j);
            T acc = 0;
            for (int64_t oh = oh0; oh < oh1; ++oh) {
                const T* xr = x + (oh + i - ph) * W + (ow0 + j - pw);
                const T* gr = gy + oh * W + ow0;
                for (int64_t t = 0; t < ow1 - ow0; ++t) acc += xr[t] * gr[t];
            }
            gk[i * kw + j] += acc;
        }
}

}  // namespace detail

// Per-channel "same" correlation. The kernel is [C,kh,kw] (shared across the
// batch) or [N,C,kh,kw] (one kernel per sample). Gradients flow to both the
// input and the kernel, so a generated, non-leaf kernel is fully trainable.
template <typename T>
Tensor<T> depthwise_conv2d(const Tensor<T>& x, const Tensor<T>& k, const std::string& site = {}) {
    TAT_PROF_SCOPE("dwconv");
    if (x.ndim() != 4) throw ConfigError("depthwise_conv2d: expected NCHW input");
    const bool per_sample = (k.ndim() == 4);
    if (!per_sample && k.ndim() != 3)
        throw ConfigError("depthwise_conv2d: kernel must be [C,kh,kw] or [N,C,kh,kw]");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    const int64_t kC = per_sample ? k.dim(1) : k.dim(0);
    const int64_t kh = k.dim(per_sample ? 2 : 1), kw = k.dim(per_sample ? 3 : 2);
    if (kC != C || (per_sample && k.dim(0) != N))
        throw ConfigError("depthwise_conv2d: kernel channels " + std::to_string(kC) +
                          " do not match input channels " + std::to_string(C) +
                          (site.empty() ? "" : " at site " + site));
    if (kh % 2 == 0 || kw % 2 == 0) throw ConfigError("depthwise_conv2d: kernel extent must be odd");

    std::vector<T> out(static_cast<size_t>(x.numel()));
    auto xv = x.data();
    auto kv = k.data();
    const int64_t ksz = kh * kw;
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c) {
            const T* kp = kv.data() + (per_sample ? (n * C + c) : c) * ksz;
            detail::dw_plane_forward(xv.data() + (n * C + c) * H * W, kp,
                                     out.data() + (n * C + c) * H * W, H, W, kh, kw);
        }
    return make_op_node<T>(
        x.shape(), std::move(out), {x, k},
        [x, k, per_sample, N, C, H, W, kh, kw, ksz](detail::Node<T>& self, GradStore<T>* store) {
            const T* g = self.grad.data();
            auto xv2 = x.data();
            auto kv2 = k.data();
            std::span<T> gx, gk;
            if (x.node()->requires_grad) gx = grad_buf(*x.node(), store);
            if (k.node()->requires_grad) gk = grad_buf(*k.node(), store);
            for (int64_t n = 0; n < N; ++n)
                for (int64_t c = 0; c < C; ++c) {
                    const int64_t plane = (n * C + c) * H * W;
                    const int64_t koff = (per_sample ? (n * C + c) : c) * ksz;
                    if (!gx.empty())
                        detail::dw_plane_backward_x(g + plane, kv2.data() + koff, gx.data() + plane, H,
                                                    W, kh, kw);
                    if (!gk.empty())
                        detail::dw_plane_backward_k(xv2.data() + plane, g + plane, gk.data() + koff, H,
                                                    W, kh, kw);
                }
        },
                           "dwconv");
}

// Space-to-depth: [N,C,H,W] -> [N,C*r^2,H/r,W/r].
template <typename T>
Tensor<T> pixel_unshuffle(const Tensor<T>& x, int64_t r) {
    TAT_PROF_SCOPE("unshuffle");
    if (x.ndim() != 4) throw ConfigError("pixel_unshuffle: expected NCHW input");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (H % r != 0 || W % r != 0)
        throw ConfigError("pixel_unshuffle: spatial extents " + std::to_string(H) + "x" +
                          std::to_string(W) + " not divisible by " + std::to_string(r));
    const int64_t Ho = H / r, Wo = W / r, Co = C * r * r;
    std::vector<T> out(static_cast<size_t>(x.numel()));
    auto xv = x.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t c = 0; c < C; ++c)
            for (int64_t dy = 0; dy < r; ++dy)
                for (int64_t dx = 0; dx < r; ++dx) {
                    const int64_t co = c * r * r + dy * r + dx;
                    for (int64_t oh = 0; oh < Ho; ++oh) {
                        const T* src = xv.data() + ((n * C + c) * H + oh * r + dy) * W + dx;
                        T* dst = out.data() + ((n * Co + co) * Ho + oh) * Wo;
                        for (int64_t ow = 0; ow < Wo; ++ow) dst[ow] = src[ow * r];
                    }
                }
    return make_op_node<T>({N, Co, Ho, Wo}, std::move(out), {x},
                           [x, N, C, H, W, r, Ho, Wo, Co](detail::Node<T>& self, GradStore<T>* store) {
                               if (!x.node()->requires_grad) return;
                               auto gx = grad_buf(*x.node(), store);
                               const T* g = self.grad.data();
                               for (int64_t n = 0; n < N; ++n)
                                   for (int64_t c = 0; c < C; ++c)
                                       for (int64_t dy = 0; dy < r; ++dy)
                                           for (int64_t dx = 0; dx < r; ++dx) {
                                               const int64_t co = c * r * r + dy * r + dx;
                                               for (int64_t oh = 0; oh < Ho; ++oh) {
                                                   T* dst = gx.data() +
                                                            ((n * C + c) * H + oh * r + dy) * W + dx;
                                                   const T* src =
                                                       g + ((n * Co + co) * Ho + oh) * Wo;
                                                   for (int64_t ow = 0; ow < Wo; ++ow)
                                                       dst[ow * r] += src[ow];
                                               }
                                           }
                           },
                           "unshuffle");
}

// Depth-to-space: [N,C,H,W] -> [N,C/r^2,H*r,W*r]; exact inverse of pixel_unshuffle.
template <typename T>
Tensor<T> pixel_shuffle(const Tensor<T>& x, int64_t r) {
    TAT_PROF_SCOPE("shuffle");
    if (x.ndim() != 4) throw ConfigError("pixel_shuffle: expected NCHW input");
    const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
    if (C % (r * r) != 0)
        throw ConfigError("pixel_shuffle: channels " + std::to_string(C) + " not divisible by r^2");
    const int64_t Co = C / (r * r), Ho = H * r, Wo = W * r;
    std::vector<T> out(static_cast<size_t>(x.numel()));
    auto xv = x.data();
    for (int64_t n = 0; n < N; ++n)
        for (int64_t co = 0; co < Co; ++co)
            for (int64_t dy = 0; dy < r; ++dy)
                for (int64_t dx = 0; dx < r; ++dx) {
                    const int64_t ci = co * r * r + dy * r + dx;
                    for (int64_t h = 0; h < H; ++h) {
                        const T* src = xv.data() + ((n * C + ci) * H + h) * W;
                        T* dst = out.data() + ((n * Co + co) * Ho + h * r + dy) * Wo + dx;
                        for (int64_t w = 0; w < W; ++w) dst[w * r] = src[w];
                    }
                }
    return make_op_node<T>({N, Co, Ho, Wo}, std::move(out), {x},
                           [x, N, C, H, W, r, Co, Ho, Wo](detail::Node<T>& self, GradStore<T>* store) {
                               if (!x.node()->requires_grad) return;
                               auto gx = grad_buf(*x.node(), store);
                               const T* g = self.grad.data();
                               for (int64_t n = 0; n < N; ++n)
                                   for (int64_t co = 0; co < Co; ++co)
                                       for (int64_t dy = 0; dy < r; ++dy)
                                           for (int64_t dx = 0; dx < r; ++dx) {
                                               const int64_t ci = co * r * r + dy * r + dx;
                                               for (int64_t h = 0; h < H; ++h) {
                                                   T* dst = gx.data() + ((n * C + ci) * H + h) * W;
                                                   const T* src =
                                                       g + ((n * Co + co) * Ho + h * r + dy) * Wo + dx;
                                                   for (int64_t w = 0; w < W; ++w)
                                                       dst[w] += src[w * r];
                                               }
                                           }
                           },
                           "shuffle");
}

// [N,C,H,W] -> [N,C] spatial mean.
template <typename T>
Tensor<T> global_avg_pool(const Tensor<T>& x) {
    TAT_PROF_SCOPE("gap");
    if (x.ndim() != 4) throw ConfigError("global_avg_pool: expected NCHW input");
    const int64_t N = x.dim(0), C = x.dim(1), HW = x.dim(2) * x.dim(3);
    std::vector<T> out(static_cast<size_t>(N * C));
    auto xv = x.data();
    const T inv = T(1) / static_cast<T>(HW);
    for (int64_t i = 0; i < N * C; ++i) {
        T acc = 0;
        const T* p = xv.data() + i * HW;
        for (int64_t j = 0; j < HW; ++j) acc += p[j];
        out[i] = acc * inv;
    }
    return make_op_node<T>({N, C}, std::move(out), {x},
                           [x, N, C, HW, inv](detail::Node<T>& self, GradStore<T>* store) {
                               if (!x.node()->requires_grad) return;
                               auto gx = grad_buf(*x.node(), store);
                               for (int64_t i = 0; i < N * C; ++i) {
                                   const T gv = self.grad[i] * inv;
                                   T* p = gx.data() + i * HW;
                                   for (int64_t j = 0; j < HW; ++j) p[j] += gv;
                               }
                           },
                           "gap");
}

}  // namespace tat
