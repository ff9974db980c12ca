// Command-line interface: train / eval / ablate / embed / render.
// Exit codes: 0 success, 2 configuration error, 3 numeric abort.

#include <malloc.h>

#include <CLI11.hpp>

#include <iostream>

#include "tat/tat.hpp"

namespace {

using Scalar = float;  // training precision

struct LoadedRun {
    tat::RunConfig config;
    std::unique_ptr<tat::Trainer<Scalar>> trainer;  // owns model + balancer params
};

LoadedRun load_from_checkpoint(const std::string& path) {
    auto ck = tat::load_checkpoint<Scalar>(path);
    LoadedRun run;
    run.config = ck.config;
    tat::TrainConfig tc = ck.config.train;
    tc.iterations = 0;
    run.trainer = std::make_unique<tat::Trainer<Scalar>>(ck.config.model, tc);
    auto named = run.trainer->named_params();
    tat::restore_params(named, ck);
    return run;
}

tat::DatasetConfig dataset_of(const tat::RunConfig& rc) {
    tat::DatasetConfig d;
    d.seed = rc.train.seed;
    d.canvas = rc.train.canvas;
    d.patch = rc.train.patch;
    return d;
}

std::vector<std::string> split_csv(const std::string& s) {
    std::vector<std::string> out;
    std::stringstream ss(s);
    std::string item;
    while (std::getline(ss, item, ','))
        if (!item.empty()) out.push_back(item);
    return out;
}

int run_cli(int argc, char** argv) {
    CLI::App app{"task-adaptive restoration transformer"};
    app.require_subcommand(1);

    std::string config_path, out_dir, checkpoint_path, variants_csv, csv_out;
    int64_t n_per_task = 25, n_render = 4;

    auto* train_cmd = app.add_subcommand("train", "train a model");
    train_cmd->add_option("--config", config_path, "run config JSON");
    train_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint");
    eval_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    eval_cmd->add_option("--n-per-task", n_per_task, "held-out samples per task");

    auto* ablate_cmd = app.add_subcommand("ablate", "train and compare variants");
    ablate_cmd->add_option("--config", config_path, "run config JSON");
    ablate_cmd->add_option("--variants", variants_csv, "comma-separated variant tags")->required();
    ablate_cmd->add_option("--out", out_dir, "output directory")->required();

    auto* embed_cmd = app.add_subcommand("embed", "task-embedding scatter and purity");
    embed_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    embed_cmd->add_option("--out", csv_out, "scatter CSV path");
    embed_cmd->add_option("--n-per-task", n_per_task, "samples per task");

    auto* render_cmd = app.add_subcommand("render", "LQ/restored/HQ triptych PNGs");
    render_cmd->add_option("--checkpoint", checkpoint_path, "checkpoint file")->required();
    render_cmd->add_option("--n", n_render, "images per task");
    render_cmd->add_option("--out", out_dir, "output directory");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }

    if (train_cmd->parsed()) {
        tat::RunConfig rc = config_path.empty() ? tat::RunConfig{} : tat::load_run_config(config_path);
        if (config_path.empty() && std::getenv("TAT_SEED"))
            rc = tat::parse_run_config(nlohmann::json::object());
        auto res = tat::train<Scalar>(rc.model, rc.train, out_dir);
        std::cout << "variant " << rc.train.variant << ", " << res.param_count << " parameters\n"
                  << res.final_eval.str() << "checkpoint: " << res.checkpoint_path << "\n"
                  << "log hash: " << std::hex << res.log_hash << std::dec << "\n";
    } else if (eval_cmd->parsed()) {
        auto run = load_from_checkpoint(checkpoint_path);
        auto rep = tat::evaluate(run.trainer->model(), dataset_of(run.config), n_per_task);
        std::cout << rep.str();
    } else if (ablate_cmd->parsed()) {
        tat::RunConfig rc = config_path.empty() ? tat::RunConfig{} : tat::load_run_config(config_path);
        auto variants = split_csv(variants_csv);
        if (variants.empty()) throw tat::UsageError("ablate: empty variant list");
        auto rep = tat::ablate<Scalar>(rc.model, rc.train, variants, out_dir);
        if (!rep.streams_identical)
            throw tat::InternalError("ablate: variants saw different data streams");
        nlohmann::json jout;
        std::cout << "variant             params      macro psnr   ssim     rmse\n";
        for (const auto& v : rep.variants) {
            const auto& m = v.train.final_eval.macro;
            std::cout.width(20);
            std::cout << std::left << v.variant;
            std::cout << v.param_count << "\t" << m.psnr << "  " << m.ssim << "  " << m.rmse << "\n";
            jout["variants"].push_back({{"variant", v.variant},
                                        {"params", v.param_count},
                                        {"macro_psnr", m.psnr},
                                        {"macro_ssim", m.ssim},
                                        {"macro_rmse", m.rmse},
                                        {"stream_hash", v.train.stream_hash}});
        }
        // parameter-count contract between the weight-generation variants
        int64_t p_none = -1, p_full = -1, p_all = -1;
        for (const auto& v : rep.variants) {
            if (v.variant == "no_weight_gen") p_none = v.param_count;
            if (v.variant == "full") p_full = v.param_count;
            if (v.variant == "gen_all_params") p_all = v.param_count;
        }
        if (p_none >= 0 && p_full >= 0 && p_all >= 0) {
            if (!(p_none < p_full && p_full < p_all))
                throw tat::InternalError("ablate: parameter counts out of order");
            std::cout << "param ordering ok: " << p_none << " < " << p_full << " < " << p_all << "\n";
        }
        std::ofstream jf(std::filesystem::path(out_dir) / "ablate_report.json");
        jf << jout.dump(2) << "\n";
    } else if (embed_cmd->parsed()) {
        auto run = load_from_checkpoint(checkpoint_path);
        if (csv_out.empty())
            csv_out = (std::filesystem::path(checkpoint_path).parent_path() / "embedding.csv").string();
        auto rep = tat::embedding_report(run.trainer->model(), dataset_of(run.config), n_per_task,
                                         csv_out);
        std::cout << "cluster purity: " << rep.purity << "\nscatter: " << csv_out << "\n";
    } else if (render_cmd->parsed()) {
        auto run = load_from_checkpoint(checkpoint_path);
        if (out_dir.empty())
            out_dir = (std::filesystem::path(checkpoint_path).parent_path() / "renders").string();
        tat::render_triptychs(run.trainer->model(), dataset_of(run.config), n_render, out_dir);
        std::cout << "wrote " << 3 * n_render << " triptychs to " << out_dir << "\n";
    }
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    mallopt(M_MMAP_THRESHOLD, 1 << 30);  // keep big tensor blocks on the heap freelist
    mallopt(M_TRIM_THRESHOLD, 1 << 30);
    try {
        return run_cli(argc, argv);
    } catch (const tat::NumericError& e) {
        std::cerr << "numeric abort: " << e.what() << "\n";
        return 3;
    } catch (const tat::ConfigError& e) {
        std::cerr << "config error: " << e.what() << "\n";
        return 2;
    } catch (const tat::UsageError& e) {
        std::cerr << "usage error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
}
