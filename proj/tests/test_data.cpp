#include <catch2/catch_amalgamated.hpp>

#include <set>

#include "tat/data.hpp"
#include "tat/metrics.hpp"

using tat::DatasetConfig;
using tat::Image;
using tat::PhantomSpec;
using tat::TaskTag;

TEST_CASE("phantom generation") {
    SECTION("same seed twice gives bit-identical images") {
        PhantomSpec spec;
        spec.seed = 42;
        auto a = tat::generate_phantom(spec);
        auto b = tat::generate_phantom(spec);
        REQUIRE(a.px == b.px);
    }
    SECTION("values stay in [0,1] over many seeds") {
        PhantomSpec spec;
        spec.size = 32;
        for (uint64_t s = 0; s < 1000; ++s) {
            spec.seed = s;
            auto img = tat::generate_phantom(spec);
            for (double v : img.px) {
                REQUIRE(v >= 0.0);
                REQUIRE(v <= 1.0);
            }
        }
    }
    SECTION("distinct seeds differ by more than 0.01 mean absolute difference") {
        PhantomSpec spec;
        for (uint64_t s = 0; s < 20; s += 2) {
            spec.seed = s;
            auto a = tat::generate_phantom(spec);
            spec.seed = s + 1;
            auto b = tat::generate_phantom(spec);
            double mad = 0;
            for (size_t i = 0; i < a.px.size(); ++i) mad += std::abs(a.px[i] - b.px[i]);
            REQUIRE(mad / static_cast<double>(a.px.size()) > 0.01);
        }
    }
}

TEST_CASE("degradations") {
    PhantomSpec spec;
    spec.seed = 7;
    auto hq = tat::generate_phantom(spec);

    SECTION("downsample of a constant image is the identical constant") {
        auto c = Image::filled(64, 64, 0.37);
        auto lq = tat::degrade(c, TaskTag::kDownsample4x, 1);
        for (double v : lq.px) REQUIRE_THAT(v, Catch::Matchers::WithinAbs(0.37, 1e-15));
    }
    SECTION("gaussian noise with sigma 0 is the identity") {
        tat::DegradationParams p;
        p.noise_sigma = 0.0;
        auto lq = tat::degrade(hq, TaskTag::kGaussNoise, 3, p);
        REQUIRE(lq.px == hq.px);
    }
    SECTION("poisson thinning variance matches hq*dose/counts within 20%") {
        // blur rescales variance by the squared kernel mass, so the variance
        // oracle applies to the thinning stage
        auto c = Image::filled(50, 50, 0.5);
        tat::DegradationParams p;
        double mean = 0, var = 0;
        const int64_t n_px = 50 * 50;
        std::vector<double> all;
        for (uint64_t d = 0; d < 4; ++d) {
            auto thin = tat::poisson_thin(c, 1000 + d, p);
            all.insert(all.end(), thin.px.begin(), thin.px.end());
        }
        for (double v : all) mean += v;
        mean /= static_cast<double>(all.size());
        for (double v : all) var += (v - mean) * (v - mean);
        var /= static_cast<double>(all.size() - 1);
        const double expect = 0.5 * p.dose_factor / p.full_dose_counts;  // 0.006
        REQUIRE(var > 0.8 * expect);
        REQUIRE(var < 1.2 * expect);
        REQUIRE_THAT(mean, Catch::Matchers::WithinAbs(0.5, 0.01));
    }
    SECTION("degradation is deterministic in the seed and never the identity") {
        for (TaskTag t : tat::kAllTasks) {
            auto a = tat::degrade(hq, t, 99);
            auto b = tat::degrade(hq, t, 99);
            REQUIRE(a.px == b.px);
            REQUIRE(a.px != hq.px);
            const double p = tat::psnr(a.px, hq.px);
            REQUIRE(std::isfinite(p));
            REQUIRE(p < tat::kPsnrCap);
        }
    }
    SECTION("out-of-range input is a usage error") {
        auto bad = Image::filled(16, 16, 1.5);
        REQUIRE_THROWS_AS(tat::degrade(bad, TaskTag::kGaussNoise, 1), tat::UsageError);
    }
}

TEST_CASE("batches") {
    DatasetConfig cfg;
    cfg.seed = 11;

    SECTION("batch_per_task=4 gives 12 samples, 4 per tag") {
        auto batch = tat::make_batch(cfg, 0, 4);
        REQUIRE(batch.size() == 12);
        std::array<int, 3> counts{};
        for (const auto& s : batch) counts[static_cast<size_t>(s.task)]++;
        for (int c : counts) REQUIRE(c == 4);
    }
    SECTION("batch_per_task=1 gives one sample per tag") {
        auto batch = tat::make_batch(cfg, 0, 1);
        REQUIRE(batch.size() == 3);
        std::set<TaskTag> tags;
        for (const auto& s : batch) tags.insert(s.task);
        REQUIRE(tags.size() == 3);
    }
    SECTION("fixed seed replays the identical batch; different iterations differ") {
        auto a = tat::make_batch(cfg, 5, 2);
        auto b = tat::make_batch(cfg, 5, 2);
        REQUIRE(a.size() == b.size());
        for (size_t i = 0; i < a.size(); ++i) {
            REQUIRE(a[i].task == b[i].task);
            REQUIRE(a[i].lq.px == b[i].lq.px);
            REQUIRE(a[i].hq.px == b[i].hq.px);
        }
        auto c = tat::make_batch(cfg, 6, 2);
        REQUIRE(tat::hash_sample(a[0]) != tat::hash_sample(c[0]));
    }
    SECTION("patch larger than canvas is a config error") {
        DatasetConfig bad = cfg;
        bad.patch = 128;
        REQUIRE_THROWS_AS(tat::make_batch(bad, 0, 1), tat::ConfigError);
    }
    SECTION("patch cropping produces the configured size with matching lq/hq windows") {
        DatasetConfig c2 = cfg;
        c2.canvas = 96;
        c2.patch = 64;
        auto batch = tat::make_batch(c2, 0, 1);
        for (const auto& s : batch) {
            REQUIRE(s.lq.h == 64);
            REQUIRE(s.hq.w == 64);
        }
    }
}

TEST_CASE("pairing integrity: lq is degraded but finite, psnr ordered sensibly") {
    DatasetConfig cfg;
    cfg.seed = 23;
    for (int i = 0; i < 8; ++i) {
        for (TaskTag t : tat::kAllTasks) {
            auto s = tat::make_sample(cfg, "eval", static_cast<uint64_t>(i), t);
            REQUIRE(s.lq.px != s.hq.px);
            const double p = tat::psnr(s.lq.px, s.hq.px);
            REQUIRE(std::isfinite(p));
            REQUIRE(p > 5.0);
            REQUIRE(p < tat::kPsnrCap);
        }
    }
}

TEST_CASE("task-conditional statistics separate the three degradations") {
    // 3-class logistic regression on simple patch statistics must exceed 0.9
    // accuracy, otherwise the task-representation separability claim is untestable.
    DatasetConfig cfg;
    cfg.seed = 31;
    const int n_train = 60, n_test = 30;

    auto features = [](const tat::PairedSample& s) {
        // high-frequency energy (mean squared Laplacian) and total variance of lq
        const auto& im = s.lq;
        double hf = 0, mean = 0, var = 0;
        for (double v : im.px) mean += v;
        mean /= static_cast<double>(im.px.size());
        for (double v : im.px) var += (v - mean) * (v - mean);
        var /= static_cast<double>(im.px.size());
        int64_t cnt = 0;
        for (int64_t y = 1; y < im.h - 1; ++y)
            for (int64_t x = 1; x < im.w - 1; ++x) {
                const double lap = 4 * im.at(y, x) - im.at(y - 1, x) - im.at(y + 1, x) -
                                   im.at(y, x - 1) - im.at(y, x + 1);
                hf += lap * lap;
                ++cnt;
            }
        hf /= static_cast<double>(cnt);
        return std::array<double, 3>{std::log(hf + 1e-12), std::log(var + 1e-12), 1.0};
    };

    std::vector<std::array<double, 3>> xs;
    std::vector<int> ys;
    for (int i = 0; i < n_train + n_test; ++i)
        for (TaskTag t : tat::kAllTasks) {
            auto s = tat::make_sample(cfg, "clsf", static_cast<uint64_t>(i), t);
            xs.push_back(features(s));
            ys.push_back(static_cast<int>(t));
        }

    // multinomial logistic regression, plain gradient descent
    std::array<std::array<double, 3>, 3> w{};
    const size_t ntr = static_cast<size_t>(3 * n_train);
    for (int epoch = 0; epoch < 2000; ++epoch) {
        std::array<std::array<double, 3>, 3> g{};
        for (size_t i = 0; i < ntr; ++i) {
            std::array<double, 3> logits{};
            for (int c = 0; c < 3; ++c)
                for (int f = 0; f < 3; ++f) logits[c] += w[c][f] * xs[i][f];
            const double mx = *std::max_element(logits.begin(), logits.end());
            double zsum = 0;
            for (double& l : logits) {
                l = std::exp(l - mx);
                zsum += l;
            }
            for (int c = 0; c < 3; ++c) {
                const double p = logits[c] / zsum - (ys[i] == c ? 1.0 : 0.0);
                for (int f = 0; f < 3; ++f) g[c][f] += p * xs[i][f];
            }
        }
        for (int c = 0; c < 3; ++c)
            for (int f = 0; f < 3; ++f) w[c][f] -= 0.1 * g[c][f] / static_cast<double>(ntr);
    }
    int correct = 0;
    for (size_t i = ntr; i < xs.size(); ++i) {
        std::array<double, 3> logits{};
        for (int c = 0; c < 3; ++c)
            for (int f = 0; f < 3; ++f) logits[c] += w[c][f] * xs[i][f];
        const int pred = static_cast<int>(std::max_element(logits.begin(), logits.end()) - logits.begin());
        if (pred == ys[i]) ++correct;
    }
    const double acc = static_cast<double>(correct) / static_cast<double>(xs.size() - ntr);
    INFO("classifier accuracy " << acc);
    REQUIRE(acc > 0.9);
}
