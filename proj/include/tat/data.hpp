#pragma once

// Synthetic three-task paired dataset: procedural ellipse phantoms plus
// seeded degradation operators (Poisson dose thinning, additive Gaussian
// noise, bicubic down/up-sampling). The whole stream is a pure function of
// (spec, seed schedule): every sample index maps to its own RNG substreams.

#include <algorithm>
#include <array>
#include <cmath>

#include "tat/common.hpp"

namespace tat {

enum class TaskTag { kLowDose = 0, kGaussNoise = 1, kDownsample4x = 2 };
inline constexpr std::array<TaskTag, 3> kAllTasks = {TaskTag::kLowDose, TaskTag::kGaussNoise,
                                                     TaskTag::kDownsample4x};

inline const char* task_name(TaskTag t) {
    switch (t) {
        case TaskTag::kLowDose: return "LOW_DOSE";
        case TaskTag::kGaussNoise: return "GAUSS_NOISE";
        case TaskTag::kDownsample4x: return "DOWNSAMPLE_4X";
    }
    return "?";
}

inline TaskTag task_from_name(const std::string& s) {
    for (TaskTag t : kAllTasks)
        if (s == task_name(t)) return t;
    throw UsageError("unknown task tag: " + s);
}

struct Image {
    int64_t h = 0, w = 0;
    std::vector<double> px;  // row-major, values in [0,1]

    static Image filled(int64_t h, int64_t w, double v = 0.0) {
        return Image{h, w, std::vector<double>(static_cast<size_t>(h * w), v)};
    }
    double& at(int64_t y, int64_t x) { return px[static_cast<size_t>(y * w + x)]; }
    double at(int64_t y, int64_t x) const { return px[static_cast<size_t>(y * w + x)]; }
};

struct PhantomSpec {
    uint64_t seed = 0;
    int64_t size = 64;  // square canvas; desk default 64, up to 256
    int min_ellipses = 4, max_ellipses = 12;
    double min_intensity = 0.1, max_intensity = 0.9;
    double texture_amp = 0.1;
};

struct DegradationParams {
    double dose_factor = 12.0;      // LOW_DOSE
    double full_dose_counts = 1e3;  // expected counts at full dose
    double noise_sigma = 0.08;      // GAUSS_NOISE, quarter-dose-equivalent
    int64_t sr_factor = 4;          // DOWNSAMPLE_4X
};

struct PairedSample {
    Image lq, hq;
    TaskTag task = TaskTag::kLowDose;
    uint64_t seed = 0;
};

// ---------------------------------------------------------------------------
// phantom generation

inline Image generate_phantom(const PhantomSpec& spec) {
    Rng rng = make_rng(substream_seed(spec.seed, "phantom"));
    std::uniform_real_distribution<double> uni(0.0, 1.0);
    const int64_t s = spec.size;
    Image img = Image::filled(s, s, 0.05 + 0.1 * uni(rng));

    std::uniform_int_distribution<int> ecount(spec.min_ellipses, spec.max_ellipses);
    const int n_ellipses = ecount(rng);
    for (int e = 0; e < n_ellipses; ++e) {
        const double cx = s * (0.15 + 0.7 * uni(rng));
        const double cy = s * (0.15 + 0.7 * uni(rng));
        const double ax = s * (0.06 + 0.3 * uni(rng));
        const double ay = s * (0.06 + 0.3 * uni(rng));
        const double th = 2.0 * 3.14159265358979323846 * uni(rng);
        const double intensity =
            spec.min_intensity + (spec.max_intensity - spec.min_intensity) * uni(rng);
        const double ct = std::cos(th), st = std::sin(th);
        for (int64_t y = 0; y < s; ++y)
            for (int64_t x = 0; x < s; ++x) {
                const double dx = x + 0.5 - cx, dy = y + 0.5 - cy;
                const double u = (dx * ct + dy * st) / ax, v = (-dx * st + dy * ct) / ay;
                const double r = u * u + v * v;
                if (r >= 1.0) continue;
                // soft edge: paint-over with alpha fading near the rim
                const double alpha = r < 0.81 ? 1.0 : (1.0 - r) / 0.19;
                double& p = img.at(y, x);
                p = p * (1.0 - alpha) + intensity * alpha;
            }
    }

    // smooth low-frequency texture, |t| <= texture_amp
    std::array<double, 4> fx{}, fy{}, ph{}, am{};
    double amp_sum = 0;
    for (int i = 0; i < 4; ++i) {
        fx[i] = 1.0 + 3.0 * uni(rng);
        fy[i] = 1.0 + 3.0 * uni(rng);
        ph[i] = 2.0 * 3.14159265358979323846 * uni(rng);
        am[i] = 0.25 + 0.75 * uni(rng);
        amp_sum += am[i];
    }
    const double scale = spec.texture_amp / amp_sum;
    for (int64_t y = 0; y < s; ++y)
        for (int64_t x = 0; x < s; ++x) {
            double t = 0;
            for (int i = 0; i < 4; ++i)
                t += am[i] * std::sin(2.0 * 3.14159265358979323846 *
                                          (fx[i] * x + fy[i] * y) / static_cast<double>(s) +
                                      ph[i]);
            double& p = img.at(y, x);
            p = std::clamp(p + scale * t, 0.0, 1.0);
        }
    return img;
}

// ---------------------------------------------------------------------------
// degradations

// Poisson count thinning: lq = Poisson(hq * counts / dose) * dose / counts.
// E[lq] = hq, Var[lq] = hq * dose / counts.
inline Image poisson_thin(const Image& hq, uint64_t seed, const DegradationParams& p = {}) {
    Rng rng = make_rng(substream_seed(seed, "poisson"));
    const double lam_scale = p.full_dose_counts / p.dose_factor;
    Image out = hq;
    for (double& v : out.px) {
        std::poisson_distribution<int64_t> pd(v * lam_scale);
        v = static_cast<double>(pd(rng)) / lam_scale;
    }
    return out;
}

// 3x3 Gaussian blur with replicate borders.
inline Image gauss_blur3(const Image& img, double sigma = 0.5) {
    const double a = std::exp(-1.0 / (2.0 * sigma * sigma));
    const double norm = 1.0 + 2.0 * a;
    const std::array<double, 3> w = {a / norm, 1.0 / norm, a / norm};
    Image tmp = img, out = img;
    for (int64_t y = 0; y < img.h; ++y)
        for (int64_t x = 0; x < img.w; ++x) {
            double acc = 0;
            for (int k = -1; k <= 1; ++k)
                acc += w[static_cast<size_t>(k + 1)] * img.at(y, std::clamp<int64_t>(x + k, 0, img.w - 1));
            tmp.at(y, x) = acc;
        }
    for (int64_t y = 0; y < img.h; ++y)
        for (int64_t x = 0; x < img.w; ++x) {
            double acc = 0;
            for (int k = -1; k <= 1; ++k)
                acc += w[static_cast<size_t>(k + 1)] * tmp.at(std::clamp<int64_t>(y + k, 0, img.h - 1), x);
            out.at(y, x) = acc;
        }
    return out;
}

namespace detail {

// Keys cubic kernel, a = -0.5 (the classic bicubic interpolation kernel).
inline double cubic_weight(double t) {
    constexpr double a = -0.5;
    t = std::abs(t);
    if (t <= 1.0) return (a + 2.0) * t * t * t - (a + 3.0) * t * t + 1.0;
    if (t < 2.0) return a * t * t * t - 5.0 * a * t * t + 8.0 * a * t - 4.0 * a;
    return 0.0;
}

}  // namespace detail

// Separable bicubic resampling with clamped edges. Tap weights are renormalized
// so constants are preserved exactly.
inline Image bicubic_resize(const Image& img, int64_t oh, int64_t ow) {
    auto resample_axis = [](const std::vector<double>& src, int64_t sn, int64_t stride,
                            int64_t count, int64_t dn, std::vector<double>& dst,
                            int64_t dst_stride) {
        const double scale = static_cast<double>(sn) / static_cast<double>(dn);
        for (int64_t o = 0; o < dn; ++o) {
            const double center = (o + 0.5) * scale - 0.5;
            const int64_t base = static_cast<int64_t>(std::floor(center)) - 1;
            std::array<double, 4> w{};
            double wsum = 0;
            for (int k = 0; k < 4; ++k) {
                w[static_cast<size_t>(k)] = detail::cubic_weight(center - (base + k));
                wsum += w[static_cast<size_t>(k)];
            }
            for (auto& v : w) v /= wsum;
            for (int64_t c = 0; c < count; ++c) {
                double acc = 0;
                for (int k = 0; k < 4; ++k) {
                    const int64_t si = std::clamp<int64_t>(base + k, 0, sn - 1);
                    acc += w[static_cast<size_t>(k)] * src[static_cast<size_t>(c + si * stride)];
                }
                dst[static_cast<size_t>(c + o * dst_stride)] = acc;
            }
        }
    };
    // rows: [h,w] -> [h,ow] (contiguous along w, so stride 1 per row)
    std::vector<double> tmp(static_cast<size_t>(img.h * ow));
    for (int64_t y = 0; y < img.h; ++y) {
        std::vector<double> row(img.px.begin() + y * img.w, img.px.begin() + (y + 1) * img.w);
        std::vector<double> orow(static_cast<size_t>(ow));
        resample_axis(row, img.w, 1, 1, ow, orow, 1);
        std::copy(orow.begin(), orow.end(), tmp.begin() + y * ow);
    }
    // columns: [h,ow] -> [oh,ow]
    Image out = Image::filled(oh, ow);
    resample_axis(tmp, img.h, ow, ow, oh, out.px, ow);
    return out;
}

// Applies the task degradation. Deterministic given (task, seed).
inline Image degrade(const Image& hq, TaskTag task, uint64_t seed,
                     const DegradationParams& p = {}) {
    for (double v : hq.px)
        if (v < 0.0 || v > 1.0) throw UsageError("degrade: hq image out of [0,1]");
    Image lq;
    switch (task) {
        case TaskTag::kLowDose:
            lq = gauss_blur3(poisson_thin(hq, seed, p), 0.5);
            break;
        case TaskTag::kGaussNoise: {
            Rng rng = make_rng(substream_seed(seed, "gauss"));
            std::normal_distribution<double> nd(0.0, p.noise_sigma);
            lq = hq;
            if (p.noise_sigma > 0)
                for (double& v : lq.px) v += nd(rng);
            break;
        }
        case TaskTag::kDownsample4x: {
            const int64_t f = p.sr_factor;
            if (hq.h % f != 0 || hq.w % f != 0)
                throw ConfigError("degrade: image extent not divisible by the SR factor");
            lq = bicubic_resize(bicubic_resize(hq, hq.h / f, hq.w / f), hq.h, hq.w);
            break;
        }
    }
    for (double& v : lq.px) v = std::clamp(v, 0.0, 1.0);
    return lq;
}

// ---------------------------------------------------------------------------
// sample streams and batches

struct DatasetConfig {
    uint64_t seed = 0;
    int64_t canvas = 64;
    int64_t patch = 64;
    DegradationParams degradation;
    PhantomSpec phantom_base;  // seed/size overridden per sample
};

// Sample `index` of the named stream ("train" / "eval"). Pure function of its
// arguments; streams with different names never collide.
inline PairedSample make_sample(const DatasetConfig& cfg, const std::string& stream, uint64_t index,
                                TaskTag task) {
    const uint64_t sample_seed =
        substream_seed(cfg.seed, stream + "/" + task_name(task), index);
    PhantomSpec ps = cfg.phantom_base;
    ps.seed = substream_seed(sample_seed, "hq");
    ps.size = cfg.canvas;
    PairedSample s;
    s.seed = sample_seed;
    s.task = task;
    s.hq = generate_phantom(ps);
    s.lq = degrade(s.hq, task, substream_seed(sample_seed, "lq"), cfg.degradation);
    return s;
}

inline Image crop(const Image& img, int64_t y0, int64_t x0, int64_t size) {
    Image out = Image::filled(size, size);
    for (int64_t y = 0; y < size; ++y)
        for (int64_t x = 0; x < size; ++x) out.at(y, x) = img.at(y0 + y, x0 + x);
    return out;
}

// batch_per_task samples from each task, patch-cropped and shuffled.
inline std::vector<PairedSample> make_batch(const DatasetConfig& cfg, uint64_t iteration,
                                            int64_t batch_per_task) {
    if (batch_per_task < 1) throw UsageError("make_batch: batch_per_task must be >= 1");
    if (cfg.patch > cfg.canvas)
        throw ConfigError("make_batch: patch " + std::to_string(cfg.patch) + " exceeds canvas " +
                          std::to_string(cfg.canvas));
    std::vector<PairedSample> batch;
    batch.reserve(static_cast<size_t>(3 * batch_per_task));
    for (TaskTag task : kAllTasks)
        for (int64_t b = 0; b < batch_per_task; ++b) {
            const uint64_t index = iteration * static_cast<uint64_t>(batch_per_task) + b;
            PairedSample s = make_sample(cfg, "train", index, task);
            if (cfg.patch < cfg.canvas) {
                Rng crng = make_rng(substream_seed(s.seed, "crop"));
                std::uniform_int_distribution<int64_t> off(0, cfg.canvas - cfg.patch);
                const int64_t y0 = off(crng), x0 = off(crng);
                s.hq = crop(s.hq, y0, x0, cfg.patch);
                s.lq = crop(s.lq, y0, x0, cfg.patch);
            }
            batch.push_back(std::move(s));
        }
    Rng srng = make_rng(substream_seed(cfg.seed, "batch_shuffle", iteration));
    std::shuffle(batch.begin(), batch.end(), srng);
    return batch;
}

inline uint64_t hash_sample(const PairedSample& s, uint64_t h = 0xcbf29ce484222325ULL) {
    h = fnv1a64(s.lq.px.data(), s.lq.px.size() * sizeof(double), h);
    h = fnv1a64(s.hq.px.data(), s.hq.px.size() * sizeof(double), h);
    const auto t = static_cast<uint32_t>(s.task);
    return fnv1a64(&t, sizeof(t), h);
}

}  // namespace tat
