#pragma once

// On-disk artifacts: the optional dataset cache (per-task directories of
// 16-bit grayscale PNG pairs plus a JSON manifest) and rendered
// LQ / restored / HQ triptychs.

#include <filesystem>
#include <iomanip>

#include "tat/harness.hpp"
#include "tat/png.hpp"

namespace tat {

namespace detail {

inline std::string index_name(int64_t i, const char* suffix) {
    std::ostringstream os;
    os << std::setw(4) << std::setfill('0') << i << suffix;
    return os.str();
}

}  // namespace detail

// Writes n_per_task samples per task under dir/<TASK>/ as PNG pairs with a
// manifest recording seeds and degradation parameters.
inline void write_cache(const std::string& dir, const DatasetConfig& cfg, int64_t n_per_task,
                        const std::string& stream = "eval") {
    namespace fs = std::filesystem;
    for (TaskTag task : kAllTasks) {
        const fs::path tdir = fs::path(dir) / task_name(task);
        fs::create_directories(tdir);
        nlohmann::json manifest;
        manifest["task"] = task_name(task);
        manifest["stream"] = stream;
        manifest["canvas"] = cfg.canvas;
        manifest["parameters"] = {{"dose_factor", cfg.degradation.dose_factor},
                                  {"full_dose_counts", cfg.degradation.full_dose_counts},
                                  {"noise_sigma", cfg.degradation.noise_sigma},
                                  {"sr_factor", cfg.degradation.sr_factor}};
        auto& samples = manifest["samples"] = nlohmann::json::array();
        for (int64_t i = 0; i < n_per_task; ++i) {
            const auto s = make_sample(cfg, stream, static_cast<uint64_t>(i), task);
            const std::string lq_name = detail::index_name(i, "_lq.png");
            const std::string hq_name = detail::index_name(i, "_hq.png");
            write_png16((tdir / lq_name).string(), s.lq);
            write_png16((tdir / hq_name).string(), s.hq);
            samples.push_back({{"index", i}, {"seed", s.seed}, {"lq", lq_name}, {"hq", hq_name}});
        }
        std::ofstream mf(tdir / "manifest.json");
        mf << manifest.dump(2) << "\n";
    }
}

// Loads one task directory of a cache written by write_cache.
inline std::vector<PairedSample> read_cache(const std::string& dir, TaskTag task) {
    namespace fs = std::filesystem;
    const fs::path tdir = fs::path(dir) / task_name(task);
    std::ifstream mf(tdir / "manifest.json");
    if (!mf) throw UsageError("cache: missing manifest in " + tdir.string());
    nlohmann::json manifest;
    mf >> manifest;
    std::vector<PairedSample> out;
    for (const auto& entry : manifest.at("samples")) {
        PairedSample s;
        s.task = task_from_name(manifest.at("task"));
        s.seed = entry.at("seed").get<uint64_t>();
        s.lq = read_png((tdir / entry.at("lq").get<std::string>()).string());
        s.hq = read_png((tdir / entry.at("hq").get<std::string>()).string());
        out.push_back(std::move(s));
    }
    return out;
}

// LQ | restored | HQ side by side with a 2px separator.
template <typename T>
void render_triptychs(Model<T>& model, const DatasetConfig& cfg, int64_t n_per_task,
                      const std::string& out_dir) {
    namespace fs = std::filesystem;
    fs::create_directories(out_dir);
    for (TaskTag task : kAllTasks)
        for (int64_t i = 0; i < n_per_task; ++i) {
            const auto s = make_sample(cfg, "eval", static_cast<uint64_t>(i), task);
            auto pred = model.restore(detail::image_tensor<T>(s.lq));
            Image restored = Image::filled(s.lq.h, s.lq.w);
            for (size_t p = 0; p < restored.px.size(); ++p)
                restored.px[p] = std::clamp(static_cast<double>(pred.data()[p]), 0.0, 1.0);
            const int64_t gap = 2;
            Image tri = Image::filled(s.lq.h, 3 * s.lq.w + 2 * gap, 1.0);
            for (int64_t y = 0; y < s.lq.h; ++y)
                for (int64_t x = 0; x < s.lq.w; ++x) {
                    tri.at(y, x) = s.lq.at(y, x);
                    tri.at(y, s.lq.w + gap + x) = restored.at(y, x);
                    tri.at(y, 2 * (s.lq.w + gap) + x) = s.hq.at(y, x);
                }
            std::ostringstream name;
            name << "render_" << task_name(task) << "_" << std::setw(3) << std::setfill('0') << i
                 << ".png";
            write_png16((fs::path(out_dir) / name.str()).string(), tri);
        }
}

}  // namespace tat
