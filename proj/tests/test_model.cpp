#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "tat/balancer.hpp"
#include "tat/model.hpp"

using tat::ModelVariant;
using tat::Shape;
using tat::Tape;
using tat::TatConfig;
using tat::Tensor;
using D = Tensor<double>;

namespace {

TatConfig tiny_config() {
    TatConfig cfg;
    cfg.base_channels = 4;
    cfg.stage_blocks = {1, 1, 1, 1};
    cfg.task_dim = 8;
    cfg.gen_hidden = 8;
    cfg.tren_res_blocks = 1;
    return cfg;
}

D random_lq(int64_t n, int64_t hw, uint64_t seed) {
    auto rng = tat::make_rng(seed);
    return D::rand_uniform({n, 1, hw, hw}, rng);
}

}  // namespace

TEST_CASE("encode produces the documented shapes") {
    TatConfig cfg;  // desk defaults: C=16
    cfg.stage_blocks = {1, 1, 1, 1};
    tat::Model<float> m(cfg, ModelVariant::kFull, 1);
    auto rng = tat::make_rng(3);
    auto lq = Tensor<float>::rand_uniform({2, 1, 64, 64}, rng);
    auto [latent, skips] = m.encode(lq);
    REQUIRE(latent.shape() == Shape{2, 128, 8, 8});
    REQUIRE(skips.size() == 3);
    REQUIRE(skips[0].shape() == Shape{2, 16, 64, 64});
    REQUIRE(skips[1].shape() == Shape{2, 32, 32, 32});
    REQUIRE(skips[2].shape() == Shape{2, 64, 16, 16});

    SECTION("zero input stays finite (layer-norm epsilon guard)") {
        auto z = Tensor<float>::zeros({1, 1, 64, 64});
        auto [lat, sk] = m.encode(z);
        for (float v : lat.data()) REQUIRE(std::isfinite(v));
    }
    SECTION("indivisible extent raises a config error") {
        REQUIRE_THROWS_AS(m.encode(Tensor<float>::zeros({1, 1, 60, 64})), tat::ConfigError);
    }
}

TEST_CASE("restore preserves shape and starts as the identity") {
    auto cfg = tiny_config();
    tat::Model<double> m(cfg, ModelVariant::kFull, 7);
    auto lq = random_lq(2, 16, 11);
    auto out = m.restore(lq);
    REQUIRE(out.shape() == lq.shape());
    // zero-initialized out_proj: restored output equals the input exactly
    REQUIRE(std::equal(lq.data().begin(), lq.data().end(), out.data().begin()));
}

TEST_CASE("shape conservation over random configs") {
    auto rng = tat::make_rng(99);
    std::uniform_int_distribution<int64_t> cdist(1, 3), bdist(1, 2), ddist(4, 12);
    for (int trial = 0; trial < 3; ++trial) {
        TatConfig cfg;
        cfg.base_channels = 2 * cdist(rng);
        cfg.stage_blocks = {bdist(rng), bdist(rng), bdist(rng), bdist(rng)};
        cfg.task_dim = ddist(rng);
        cfg.gen_hidden = ddist(rng);
        cfg.tren_res_blocks = 1;
        tat::Model<double> m(cfg, ModelVariant::kFull, trial);
        const int64_t hw = 8 * (1 + trial % 2);
        auto lq = random_lq(1 + trial % 2, hw, 100 + trial);
        REQUIRE(m.restore(lq).shape() == lq.shape());
    }
}

TEST_CASE("tren_extract: shape, stop-gradient isolation, gradient flow") {
    auto cfg = tiny_config();
    tat::Model<double> m(cfg, ModelVariant::kFull, 5);
    auto lq = random_lq(2, 16, 21);

    SECTION("z has shape [N,d]") {
        auto [latent, skips] = m.encode(lq);
        REQUIRE(m.tren_extract(latent).shape() == Shape{2, cfg.task_dim});
    }

    SECTION("backward from sum(Z): encoder grads exactly zero, TREN grads populated") {
        Tape<double> tape;
        auto [latent, skips] = m.encode(lq);
        auto z = m.tren_extract(latent);
        tape.backward(tat::sum_all(z));
        bool tren_any = false;
        for (auto& [name, t] : m.params()) {
            if (m.is_encoder_param(name)) {
                for (double g : t.grad()) REQUIRE(g == 0.0);
            }
            if (m.is_tren_param(name) && t.grad_nonzero()) tren_any = true;
        }
        REQUIRE(tren_any);
    }

    SECTION("no_stop_gradient variant lets TREN gradients reach the encoder") {
        tat::Model<double> m2(cfg, ModelVariant::kNoStopGradient, 5);
        Tape<double> tape;
        auto [latent, skips] = m2.encode(lq);
        tape.backward(tat::sum_all(m2.tren_extract(latent)));
        bool enc_any = false;
        for (auto& [name, t] : m2.params())
            if (m2.is_encoder_param(name) && t.grad_nonzero()) enc_any = true;
        REQUIRE(enc_any);
    }
}

TEST_CASE("weight sites: generation, combination, counting") {
    auto cfg = tiny_config();
    tat::Model<double> m(cfg, ModelVariant::kFull, 13);
    REQUIRE(m.sites().size() == 8);  // 4 decoder blocks x 2 slots
    auto rng = tat::make_rng(17);
    auto z = D::randn({3, cfg.task_dim}, rng);

    SECTION("generated kernel has k*k*C_site elements per sample") {
        for (const auto& site : m.sites()) {
            auto wg = m.generate_weights(z, site);
            REQUIRE(wg.shape() == Shape{3, site.channels, 3, 3});
        }
    }

    SECTION("zero generator output weights give W^G == 0 and W == W^S") {
        auto& site = m.sites()[0];
        std::fill(site.gen_w2.mutable_data().begin(), site.gen_w2.mutable_data().end(), 0.0);
        std::fill(site.gen_b2.mutable_data().begin(), site.gen_b2.mutable_data().end(), 0.0);
        auto wg = m.generate_weights(z, site);
        for (double v : wg.data()) REQUIRE(v == 0.0);
        auto w = m.combine_weights(site, wg);
        for (int64_t n = 0; n < 3; ++n)
            REQUIRE(std::equal(site.shared.data().begin(), site.shared.data().end(),
                               w.data().begin() + n * site.shared.numel()));
    }

    SECTION("lambda=0 gives W == W^S bit-exact; lambda=1, W^S=0 gives W == W^G") {
        auto& site = m.sites()[1];
        auto wg = m.generate_weights(z, site);
        auto w0 = m.combine_weights(site, wg);
        for (int64_t n = 0; n < 3; ++n)
            REQUIRE(std::equal(site.shared.data().begin(), site.shared.data().end(),
                               w0.data().begin() + n * site.shared.numel()));
        site.lambda.mutable_data()[0] = 1.0;
        std::fill(site.shared.mutable_data().begin(), site.shared.mutable_data().end(), 0.0);
        auto w1 = m.combine_weights(site, m.generate_weights(z, site));
        auto wg1 = m.generate_weights(z, site);
        REQUIRE(std::equal(wg1.data().begin(), wg1.data().end(), w1.data().begin()));
    }

    SECTION("dLoss/dlambda equals sum(dLoss/dW * W^G), by finite differences") {
        auto& site = m.sites()[2];
        site.lambda.mutable_data()[0] = 0.3;
        auto zt = D::randn({2, cfg.task_dim}, rng);
        auto x = D::randn({2, site.channels, 5, 5}, rng);
        auto proj = D::randn({2, site.channels, 5, 5}, rng);
        auto res = oracle::gradcheck(
            [&](const std::vector<D>& in) {
                auto w = m.combine_weights(site, m.generate_weights(zt, site));
                return tat::sum_all(tat::mul(tat::depthwise_conv2d(x, w), proj));
            },
            {site.lambda});
        INFO(res.detail);
        REQUIRE(res.ok);
    }

    SECTION("per-site generator parameter count matches the closed form") {
        const int64_t d = cfg.task_dim, gh = cfg.gen_hidden, k = cfg.kernel_size;
        for (const auto& site : m.sites()) {
            const int64_t expect = d * gh + gh + gh * (k * k * site.channels) + k * k * site.channels;
            REQUIRE(site.generator_param_count() == expect);
        }
    }
}

TEST_CASE("lambda=0 equivalence: full forward matches no_weight_gen bit-exactly") {
    auto cfg = tiny_config();
    tat::Model<double> full(cfg, ModelVariant::kFull, 31);
    tat::Model<double> plain(cfg, ModelVariant::kNoWeightGen, 31);
    REQUIRE(full.params().total_params() > plain.params().total_params());
    for (int trial = 0; trial < 3; ++trial) {
        auto lq = random_lq(2, 16, 300 + trial);
        auto a = full.restore(lq);
        auto b = plain.restore(lq);
        REQUIRE(std::equal(a.data().begin(), a.data().end(), b.data().begin()));
    }
}

TEST_CASE("per-sample adaptivity: kernels are a function of z only") {
    auto cfg = tiny_config();
    tat::Model<double> m(cfg, ModelVariant::kFull, 41);
    // make generated kernels matter
    for (auto& site : m.sites()) site.lambda.mutable_data()[0] = 0.5;
    auto rng = tat::make_rng(43);
    auto lq = random_lq(2, 16, 45);
    auto [latent, skips] = m.encode(lq);
    auto z = D::randn({2, cfg.task_dim}, rng);

    auto out = m.decode(latent, skips, z);

    // permute z across the batch: outputs change
    std::vector<double> zswap(z.data().begin(), z.data().end());
    std::rotate(zswap.begin(), zswap.begin() + cfg.task_dim, zswap.end());
    auto out_swapped = m.decode(latent, skips, D::from_vec(z.shape(), zswap));
    double diff = 0;
    for (int64_t i = 0; i < out.numel(); ++i) diff += std::abs(out.data()[i] - out_swapped.data()[i]);
    REQUIRE(diff > 1e-6);

    // kernels are a function of z only: replacing sample 0's z leaves sample 1's
    // output bit-identical, while sample 0's output moves
    std::vector<double> zmix(z.data().begin(), z.data().end());
    std::copy(zmix.begin() + cfg.task_dim, zmix.end(), zmix.begin());  // z -> [z1; z1]
    auto out_mix = m.decode(latent, skips, D::from_vec(z.shape(), zmix));
    const int64_t half = out.numel() / 2;
    double d0 = 0, d1 = 0;
    for (int64_t i = 0; i < half; ++i) {
        d0 += std::abs(out_mix.data()[i] - out.data()[i]);
        d1 += std::abs(out_mix.data()[half + i] - out.data()[half + i]);
    }
    REQUIRE(d0 > 1e-6);
    REQUIRE(d1 == 0.0);
}

TEST_CASE("attention rows sum to one inside a block") {
    auto cfg = tiny_config();
    tat::Model<double> m(cfg, ModelVariant::kFull, 51);
    auto lq = random_lq(2, 16, 53);
    auto attn = m.probe_attention(tat::conv2d(lq, m.params().at("in_proj.w"), m.params().at("in_proj.b")), 1, 0);
    const int64_t C = cfg.base_channels;
    REQUIRE(attn.shape() == Shape{2, C, C});
    for (int64_t r = 0; r < 2 * C; ++r) {
        double sum = 0;
        for (int64_t c = 0; c < C; ++c) sum += attn.data()[r * C + c];
        REQUIRE_THAT(sum, Catch::Matchers::WithinAbs(1.0, 1e-6));
    }
}

TEST_CASE("variant parameter accounting") {
    auto cfg = tiny_config();
    tat::Model<double> none(cfg, ModelVariant::kNoWeightGen, 61);
    tat::Model<double> full(cfg, ModelVariant::kFull, 61);
    tat::Model<double> all(cfg, ModelVariant::kGenAllParams, 61);
    REQUIRE(none.params().total_params() < full.params().total_params());
    REQUIRE(full.params().total_params() < all.params().total_params());

    SECTION("gen_all_params per-site count is O(C^2): doubling C scales it >= 3.5x") {
        auto cfg2 = cfg;
        cfg2.base_channels = 2 * cfg.base_channels;
        tat::Model<double> full2(cfg2, ModelVariant::kFull, 61);
        tat::Model<double> all2(cfg2, ModelVariant::kGenAllParams, 61);
        for (size_t i = 0; i < full.sites().size(); ++i) {
            const double lin_ratio = static_cast<double>(full2.sites()[i].generator_param_count()) /
                                     static_cast<double>(full.sites()[i].generator_param_count());
            const double quad_ratio = static_cast<double>(all2.sites()[i].generator_param_count()) /
                                      static_cast<double>(all.sites()[i].generator_param_count());
            REQUIRE(lin_ratio < 2.2);  // O(C): affine in C
            REQUIRE(quad_ratio >= 3.5);
        }
    }

    SECTION("gen_all_params forward runs and respects shapes") {
        auto lq = random_lq(1, 16, 63);
        REQUIRE(all.restore(lq).shape() == lq.shape());
    }
}

TEST_CASE("restore + balanced loss composite passes finite differences on sampled parameters") {
    auto cfg = tiny_config();
    tat::Model<double> m(cfg, ModelVariant::kFull, 71);
    for (auto& site : m.sites()) site.lambda.mutable_data()[0] = 0.2;  // activate generation paths
    tat::ParamStore<double> sstore;
    tat::SigmaNet<double> sn(sstore, 71);
    auto rng = tat::make_rng(73);
    // nonzero out_proj and sigma output layer so every path carries signal
    for (auto& [name, t] : m.params())
        if (name.rfind("out_proj", 0) == 0)
            for (auto& v : t.mutable_data()) v = 0.01 * std::normal_distribution<double>()(rng);
    for (auto& v : sn.w2.mutable_data()) v = 0.1 * std::normal_distribution<double>()(rng);

    auto hq_img = random_lq(1, 16, 75);
    auto lq_img = random_lq(1, 16, 76);

    auto loss_fn = [&](const std::vector<D>&) {
        auto pred = m.restore(lq_img);
        auto sig = sn.sigma(tat::sigma_inputs(lq_img, hq_img, pred));
        return tat::balanced_loss(tat::l1_distance(pred, hq_img), sig);
    };

    // spot-check a handful of coordinates in several parameter tensors
    auto rng2 = tat::make_rng(77);
    std::vector<std::string> names = {"in_proj.w",          "enc.l1.b0.qkv.w",
                                      "dec.l4.b0.attn_dw.ws", "dec.l4.b0.attn_dw.lam",
                                      "dec.l2.b0.ffn_dw.gen.w2", "tren.proj.w",
                                      "out_proj.w",         "up1.w"};
    for (const auto& name : names) {
        auto& t = m.params().at(name);
        auto res = oracle::gradcheck(loss_fn, {t}, 1e-5, 1e-4,
                                     std::max<int64_t>(1, t.numel() / 5), true);
        INFO(name << ": " << res.detail);
        REQUIRE(res.ok);
    }
    auto res = oracle::gradcheck(loss_fn, {sn.w2}, 1e-5, 1e-4, 3, true);
    REQUIRE(res.ok);
}
