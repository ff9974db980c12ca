#pragma once

// JSON configuration: one document with "model" and "train" sections mirroring
// TatConfig and TrainConfig. Unknown keys are rejected so typos fail loudly.

#include <cstdlib>
#include <fstream>

#include <json.hpp>

#include "tat/model.hpp"

namespace tat {

struct TrainConfig {
    int64_t iterations = 2000;
    double lr = 2e-4;
    double beta1 = 0.9, beta2 = 0.999;
    double weight_decay = 1e-4;
    int64_t batch_per_task = 4;
    int64_t patch = 64;
    int64_t canvas = 64;
    uint64_t seed = 0;
    int64_t eval_every = 500;
    int64_t eval_n_per_task = 8;
    std::string variant = "full";
    int threads = 0;  // 0 = one worker per hardware thread (results identical for any value)

    void validate() const {
        if (iterations < 0 || batch_per_task < 1 || patch < 8 || canvas < patch)
            throw ConfigError("train: invalid extents");
        if (lr <= 0) throw ConfigError("train: lr must be positive");
        variant_from_tag(variant);  // throws on unknown tags
    }

    static const std::vector<std::string>& variant_tags() {
        static const std::vector<std::string> tags = {"full",          "no_weight_gen", "gen_all_params",
                                                      "no_stop_gradient", "no_balancing", "task_level"};
        return tags;
    }

    static ModelVariant variant_from_tag(const std::string& tag) {
        if (tag == "full" || tag == "no_balancing" || tag == "task_level") return ModelVariant::kFull;
        if (tag == "no_weight_gen") return ModelVariant::kNoWeightGen;
        if (tag == "gen_all_params") return ModelVariant::kGenAllParams;
        if (tag == "no_stop_gradient") return ModelVariant::kNoStopGradient;
        throw UsageError("unknown variant tag: " + tag);
    }
};

namespace detail {

inline void check_keys(const nlohmann::json& j, const std::vector<std::string>& allowed,
                       const std::string& section) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (std::find(allowed.begin(), allowed.end(), it.key()) == allowed.end())
            throw ConfigError("config: unknown key \"" + it.key() + "\" in " + section);
}

template <typename T>
void get_to_if(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) j.at(key).get_to(out);
}

}  // namespace detail

inline void to_json(nlohmann::json& j, const TatConfig& c) {
    j = nlohmann::json{{"base_channels", c.base_channels},
                       {"stage_blocks", c.stage_blocks},
                       {"kernel_size", c.kernel_size},
                       {"task_dim", c.task_dim},
                       {"tren_res_blocks", c.tren_res_blocks},
                       {"lambda_init", c.lambda_init},
                       {"gen_hidden", c.gen_hidden},
                       {"in_channels", c.in_channels},
                       {"ffn_expansion", c.ffn_expansion},
                       {"ln_eps", c.ln_eps},
                       {"slots", c.slots == WeightSlots::kBoth       ? "both"
                                 : c.slots == WeightSlots::kAttnOnly ? "attn"
                                                                     : "ffn"}};
}

inline void from_json(const nlohmann::json& j, TatConfig& c) {
    detail::check_keys(j,
                       {"base_channels", "stage_blocks", "kernel_size", "task_dim", "tren_res_blocks",
                        "lambda_init", "gen_hidden", "in_channels", "ffn_expansion", "ln_eps", "slots"},
                       "model");
    detail::get_to_if(j, "base_channels", c.base_channels);
    detail::get_to_if(j, "stage_blocks", c.stage_blocks);
    detail::get_to_if(j, "kernel_size", c.kernel_size);
    detail::get_to_if(j, "task_dim", c.task_dim);
    detail::get_to_if(j, "tren_res_blocks", c.tren_res_blocks);
    detail::get_to_if(j, "lambda_init", c.lambda_init);
    detail::get_to_if(j, "gen_hidden", c.gen_hidden);
    detail::get_to_if(j, "in_channels", c.in_channels);
    detail::get_to_if(j, "ffn_expansion", c.ffn_expansion);
    detail::get_to_if(j, "ln_eps", c.ln_eps);
    if (j.contains("slots")) {
        const std::string s = j.at("slots");
        if (s == "both") c.slots = WeightSlots::kBoth;
        else if (s == "attn") c.slots = WeightSlots::kAttnOnly;
        else if (s == "ffn") c.slots = WeightSlots::kFfnOnly;
        else throw ConfigError("config: slots must be both|attn|ffn");
    }
}

inline void to_json(nlohmann::json& j, const TrainConfig& c) {
    j = nlohmann::json{{"iterations", c.iterations},
                       {"lr", c.lr},
                       {"beta1", c.beta1},
                       {"beta2", c.beta2},
                       {"weight_decay", c.weight_decay},
                       {"batch_per_task", c.batch_per_task},
                       {"patch", c.patch},
                       {"canvas", c.canvas},
                       {"seed", c.seed},
                       {"eval_every", c.eval_every},
                       {"eval_n_per_task", c.eval_n_per_task},
                       {"variant", c.variant},
                       {"threads", c.threads}};
}

inline void from_json(const nlohmann::json& j, TrainConfig& c) {
    detail::check_keys(j,
                       {"iterations", "lr", "beta1", "beta2", "weight_decay", "batch_per_task",
                        "patch", "canvas", "seed", "eval_every", "eval_n_per_task", "variant",
                        "threads"},
                       "train");
    detail::get_to_if(j, "iterations", c.iterations);
    detail::get_to_if(j, "lr", c.lr);
    detail::get_to_if(j, "beta1", c.beta1);
    detail::get_to_if(j, "beta2", c.beta2);
    detail::get_to_if(j, "weight_decay", c.weight_decay);
    detail::get_to_if(j, "batch_per_task", c.batch_per_task);
    detail::get_to_if(j, "patch", c.patch);
    detail::get_to_if(j, "canvas", c.canvas);
    detail::get_to_if(j, "seed", c.seed);
    detail::get_to_if(j, "eval_every", c.eval_every);
    detail::get_to_if(j, "eval_n_per_task", c.eval_n_per_task);
    detail::get_to_if(j, "variant", c.variant);
    detail::get_to_if(j, "threads", c.threads);
}

struct RunConfig {
    TatConfig model;
    TrainConfig train;
};

// Parses the config document; TAT_SEED (when set) overrides the config seed.
inline RunConfig parse_run_config(const nlohmann::json& j) {
    detail::check_keys(j, {"model", "train"}, "top level");
    RunConfig rc;
    if (j.contains("model")) j.at("model").get_to(rc.model);
    if (j.contains("train")) j.at("train").get_to(rc.train);
    if (const char* env = std::getenv("TAT_SEED")) {
        try {
            rc.train.seed = std::stoull(env);
        } catch (const std::exception&) {
            throw ConfigError("TAT_SEED must be an unsigned integer, got \"" + std::string(env) + "\"");
        }
    }
    rc.model.validate();
    rc.train.validate();
    return rc;
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw ConfigError("config: cannot open " + path);
    nlohmann::json j;
    try {
        f >> j;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: parse error in " + path + ": " + e.what());
    }
    try {
        return parse_run_config(j);
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError("config: invalid value in " + path + ": " + e.what());
    }
}

}  // namespace tat
