#pragma once

// Image quality metrics on [0, peak] grayscale images. All accumulation is in
// double regardless of the training precision.

#include <algorithm>
#include <cmath>
#include <span>
#include <vector>

#include "tat/common.hpp"

namespace tat {

inline constexpr double kPsnrCap = 99.0;  // stands in for infinity on identical images

inline double mse(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) throw UsageError("mse: size mismatch");
    double acc = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        const double d = a[i] - b[i];
        acc += d * d;
    }
    return acc / static_cast<double>(a.size());
}

inline double rmse(std::span<const double> a, std::span<const double> b) {
    return std::sqrt(mse(a, b));
}

inline double psnr(std::span<const double> a, std::span<const double> b, double peak = 1.0) {
    const double m = mse(a, b);
    if (m < 1e-12) return kPsnrCap;
    return std::min(kPsnrCap, 10.0 * std::log10(peak * peak / m));
}

namespace detail {

inline std::vector<double> gaussian_window_1d(int radius, double sigma) {
    std::vector<double> w(2 * radius + 1);
    double sum = 0;
    for (int i = -radius; i <= radius; ++i) {
        w[static_cast<size_t>(i + radius)] = std::exp(-(i * i) / (2.0 * sigma * sigma));
        sum += w[static_cast<size_t>(i + radius)];
    }
    for (double& v : w) v /= sum;
    return w;
}

// Separable filtering over the valid region only (window fully inside).
inline std::vector<double> filter_valid(std::span<const double> img, int64_t h, int64_t w,
                                        const std::vector<double>& win) {
    const int64_t r = static_cast<int64_t>(win.size() / 2);
    const int64_t vh = h - 2 * r, vw = w - 2 * r;
    std::vector<double> tmp(static_cast<size_t>(h * vw));
    for (int64_t y = 0; y < h; ++y)
        for (int64_t x = 0; x < vw; ++x) {
            double acc = 0;
            for (int64_t k = 0; k < 2 * r + 1; ++k) acc += win[static_cast<size_t>(k)] * img[y * w + x + k];
            tmp[static_cast<size_t>(y * vw + x)] = acc;
        }
    std::vector<double> out(static_cast<size_t>(vh * vw));
    for (int64_t y = 0; y < vh; ++y)
        for (int64_t x = 0; x < vw; ++x) {
            double acc = 0;
            for (int64_t k = 0; k < 2 * r + 1; ++k)
                acc += win[static_cast<size_t>(k)] * tmp[(y + k) * vw + x];
            out[static_cast<size_t>(y * vw + x)] = acc;
        }
    return out;
}

}  // namespace detail

// Single-scale SSIM, 11x11 Gaussian window sigma=1.5, K1=0.01, K2=0.03,
// averaged over window positions where the window fits entirely.
inline double ssim(std::span<const double> a, std::span<const double> b, int64_t h, int64_t w,
                   double peak = 1.0) {
    if (a.size() != b.size() || static_cast<int64_t>(a.size()) != h * w)
        throw UsageError("ssim: size mismatch");
    constexpr int kRadius = 5;
    if (h < 2 * kRadius + 1 || w < 2 * kRadius + 1)
        throw UsageError("ssim: image smaller than the 11x11 window");
    const double c1 = (0.01 * peak) * (0.01 * peak);
    const double c2 = (0.03 * peak) * (0.03 * peak);
    static const std::vector<double> win = detail::gaussian_window_1d(kRadius, 1.5);

    std::vector<double> aa(a.size()), bb(a.size()), ab(a.size());
    for (size_t i = 0; i < a.size(); ++i) {
        aa[i] = a[i] * a[i];
        bb[i] = b[i] * b[i];
        ab[i] = a[i] * b[i];
    }
    auto mu_a = detail::filter_valid(a, h, w, win);
    auto mu_b = detail::filter_valid(b, h, w, win);
    auto m_aa = detail::filter_valid(aa, h, w, win);
    auto m_bb = detail::filter_valid(bb, h, w, win);
    auto m_ab = detail::filter_valid(ab, h, w, win);

    double acc = 0;
    for (size_t i = 0; i < mu_a.size(); ++i) {
        const double va = m_aa[i] - mu_a[i] * mu_a[i];
        const double vb = m_bb[i] - mu_b[i] * mu_b[i];
        const double cov = m_ab[i] - mu_a[i] * mu_b[i];
        acc += ((2 * mu_a[i] * mu_b[i] + c1) * (2 * cov + c2)) /
               ((mu_a[i] * mu_a[i] + mu_b[i] * mu_b[i] + c1) * (va + vb + c2));
    }
    return acc / static_cast<double>(mu_a.size());
}

}  // namespace tat
