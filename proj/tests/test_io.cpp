#include <catch2/catch_amalgamated.hpp>

#include <filesystem>

#include "tat/cache.hpp"
#include "tat/checkpoint.hpp"
#include "tat/config_io.hpp"
#include "tat/png.hpp"

namespace fs = std::filesystem;

namespace {

fs::path tmpdir(const char* tag) {
    auto p = fs::temp_directory_path() / (std::string("tat_io_") + tag);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("png round trip") {
    tat::PhantomSpec spec;
    spec.seed = 5;
    spec.size = 48;
    auto img = tat::generate_phantom(spec);
    auto bytes = tat::encode_png16(img);
    auto back = tat::decode_png(bytes);
    REQUIRE(back.h == img.h);
    REQUIRE(back.w == img.w);
    double worst = 0;
    for (size_t i = 0; i < img.px.size(); ++i) worst = std::max(worst, std::abs(img.px[i] - back.px[i]));
    REQUIRE(worst <= 0.5 / 65535.0 + 1e-12);  // 16-bit quantization only

    SECTION("corrupt signature is rejected") {
        bytes[0] = 0;
        REQUIRE_THROWS_AS(tat::decode_png(bytes), tat::UsageError);
    }
}

TEST_CASE("dataset cache round trip with manifest") {
    auto dir = tmpdir("cache");
    tat::DatasetConfig cfg;
    cfg.seed = 77;
    cfg.canvas = 32;
    tat::write_cache(dir.string(), cfg, 2);
    for (tat::TaskTag t : tat::kAllTasks) {
        auto samples = tat::read_cache(dir.string(), t);
        REQUIRE(samples.size() == 2);
        for (size_t i = 0; i < samples.size(); ++i) {
            auto ref = tat::make_sample(cfg, "eval", i, t);
            REQUIRE(samples[i].seed == ref.seed);
            double worst = 0;
            for (size_t p = 0; p < ref.hq.px.size(); ++p)
                worst = std::max(worst, std::abs(samples[i].hq.px[p] - ref.hq.px[p]));
            REQUIRE(worst <= 1e-4);
        }
    }
    fs::remove_all(dir);
}

TEST_CASE("checkpoint round trip is bit-exact") {
    auto dir = tmpdir("ckpt");
    tat::TatConfig mcfg;
    mcfg.base_channels = 4;
    mcfg.stage_blocks = {1, 1, 1, 1};
    mcfg.task_dim = 8;
    mcfg.gen_hidden = 8;
    tat::TrainConfig tcfg;
    tcfg.iterations = 0;

    tat::Model<float> m(mcfg, tat::ModelVariant::kFull, 9);
    tat::NamedTensors<float> named;
    for (auto& [name, t] : m.params()) named.emplace_back(name, t);
    const auto path = (dir / "a.tat").string();
    tat::save_checkpoint<float>(path, named, mcfg, tcfg);

    auto ck = tat::load_checkpoint<float>(path);
    REQUIRE(ck.config.model.base_channels == 4);
    REQUIRE(ck.tensors.size() == named.size());
    for (size_t i = 0; i < named.size(); ++i) {
        REQUIRE(ck.tensors[i].first == named[i].first);
        REQUIRE(ck.tensors[i].second.first == named[i].second.shape());
        auto live = named[i].second.data();
        REQUIRE(std::equal(live.begin(), live.end(), ck.tensors[i].second.second.begin()));
    }

    SECTION("save(load(x)) is byte-identical") {
        tat::Model<float> m2(mcfg, tat::ModelVariant::kFull, 1234);  // different init
        tat::NamedTensors<float> named2;
        for (auto& [name, t] : m2.params()) named2.emplace_back(name, t);
        tat::restore_params(named2, ck);
        const auto path2 = (dir / "b.tat").string();
        tat::save_checkpoint<float>(path2, named2, mcfg, tcfg);
        REQUIRE(tat::hash_file(path) == tat::hash_file(path2));
    }
    SECTION("dtype mismatch is a config error") {
        REQUIRE_THROWS_AS(tat::load_checkpoint<double>(path), tat::ConfigError);
    }
    fs::remove_all(dir);
}

TEST_CASE("run config parsing") {
    SECTION("defaults plus overrides") {
        auto j = nlohmann::json::parse(R"({
            "model": {"base_channels": 8, "stage_blocks": [1,2,2,1], "task_dim": 16},
            "train": {"iterations": 10, "variant": "task_level", "seed": 3}
        })");
        auto rc = tat::parse_run_config(j);
        REQUIRE(rc.model.base_channels == 8);
        REQUIRE(rc.model.kernel_size == 3);  // default preserved
        REQUIRE(rc.train.iterations == 10);
        REQUIRE(rc.train.variant == "task_level");
    }
    SECTION("unknown keys are rejected") {
        auto j = nlohmann::json::parse(R"({"model": {"base_channel": 8}})");
        REQUIRE_THROWS_AS(tat::parse_run_config(j), tat::ConfigError);
    }
    SECTION("unknown variant is rejected") {
        auto j = nlohmann::json::parse(R"({"train": {"variant": "fancy"}})");
        REQUIRE_THROWS_AS(tat::parse_run_config(j), tat::UsageError);
    }
    SECTION("TAT_SEED overrides the config seed") {
        setenv("TAT_SEED", "99", 1);
        auto j = nlohmann::json::parse(R"({"train": {"seed": 3}})");
        auto rc = tat::parse_run_config(j);
        REQUIRE(rc.train.seed == 99);
        setenv("TAT_SEED", "bogus", 1);
        REQUIRE_THROWS_AS(tat::parse_run_config(j), tat::ConfigError);
        unsetenv("TAT_SEED");
    }
}
