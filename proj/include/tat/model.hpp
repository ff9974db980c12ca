#pragma once

// The TAT network: three-stage channel-attention Transformer encoder, TREN
// task-representation branch, four-stage weight-adaptive Transformer decoder
// whose depthwise kernels are generated per sample from the task vector, and a
// residual restoration head.

#include <optional>

#include "tat/conv.hpp"
#include "tat/nn.hpp"
#include "tat/ops.hpp"

namespace tat {

enum class ModelVariant { kFull, kNoWeightGen, kGenAllParams, kNoStopGradient };

enum class WeightSlots { kBoth, kAttnOnly, kFfnOnly };

struct TatConfig {
    int64_t base_channels = 16;                    // C
    std::array<int64_t, 4> stage_blocks = {4, 6, 6, 8};
    int64_t kernel_size = 3;                       // k
    int64_t task_dim = 64;                         // d (paper-scale 256)
    int64_t tren_res_blocks = 2;                   // L
    double lambda_init = 0.0;
    int64_t gen_hidden = 64;
    int64_t in_channels = 1;
    double ffn_expansion = 1.0;                    // gated-FFN branch width / C
    double ln_eps = 1e-6;
    WeightSlots slots = WeightSlots::kBoth;

    static constexpr int kNumStages = 4;

    int64_t width(int level) const { return base_channels << level; }  // C,2C,4C,8C
    int64_t ffn_hidden(int64_t c) const {
        return std::max<int64_t>(1, static_cast<int64_t>(std::lround(ffn_expansion * static_cast<double>(c))));
    }

    void validate() const {
        if (base_channels < 2 || base_channels % 2 != 0)
            throw ConfigError("base_channels must be a positive even number");
        for (int64_t b : stage_blocks)
            if (b < 1) throw ConfigError("stage_blocks entries must be positive");
        if (kernel_size < 1 || kernel_size % 2 == 0) throw ConfigError("kernel_size must be odd");
        if (task_dim < 1 || tren_res_blocks < 1 || gen_hidden < 1 || in_channels < 1)
            throw ConfigError("extents must be positive");
        if (ffn_expansion <= 0) throw ConfigError("ffn_expansion must be positive");
    }
};

enum class Slot { kAttnDconv, kFfnDconv };

inline const char* slot_name(Slot s) { return s == Slot::kAttnDconv ? "attn_dw" : "ffn_dw"; }

// One depthwise-conv location in a decoder block: the shared kernel W^S, the
// generator MLP that emits W^G from z, and the mixing scalar lambda.
template <typename T>
struct WeightSite {
    std::string id;
    int stage = 0;
    int block = 0;
    Slot slot = Slot::kAttnDconv;
    int64_t channels = 0;  // depthwise channel count at this site

    Tensor<T> shared;  // W^S [channels,k,k]
    Tensor<T> lambda;  // [1]
    Tensor<T> gen_w1, gen_b1, gen_w2, gen_b2;

    // gen-all-params mode: the generator targets the adjacent 1x1 convolutions
    // instead of the depthwise kernel. Each target pairs the block's shared
    // weight with its per-sample [Co,Ci] shape.
    std::vector<std::pair<Tensor<T>, Shape>> pw_targets;

    bool has_generator() const { return gen_w1.defined(); }
    int64_t generator_out_dim() const { return gen_w2.defined() ? gen_w2.dim(0) : 0; }
    int64_t generator_param_count() const {
        if (!has_generator()) return 0;
        return gen_w1.numel() + gen_b1.numel() + gen_w2.numel() + gen_b2.numel();
    }
};

// Per-sample dynamic weights for one block (gen-all-params variant).
template <typename T>
struct DynPointwise {
    Tensor<T> qkv, proj, ffn_in, ffn_out;  // each [N,Co,Ci] when defined
};

template <typename T>
class Model {
  public:
    Model(TatConfig cfg, ModelVariant variant, uint64_t seed)
        : cfg_(std::move(cfg)), variant_(variant), seed_(seed) {
        cfg_.validate();
        build();
    }

    const TatConfig& config() const { return cfg_; }
    ModelVariant variant() const { return variant_; }
    ParamStore<T>& params() { return params_; }
    const ParamStore<T>& params() const { return params_; }
    const std::vector<WeightSite<T>>& sites() const { return sites_; }
    std::vector<WeightSite<T>>& sites() { return sites_; }

    // Names of parameters belonging to the encoder / to TREN (gradient-flow probes).
    bool is_encoder_param(const std::string& name) const {
        return name.rfind("enc.", 0) == 0 || name.rfind("down", 0) == 0 || name.rfind("in_proj", 0) == 0;
    }
    bool is_tren_param(const std::string& name) const { return name.rfind("tren.", 0) == 0; }

    // ----- spec operations -------------------------------------------------

    std::pair<Tensor<T>, std::vector<Tensor<T>>> encode(const Tensor<T>& lq) {
        if (lq.ndim() != 4 || lq.dim(1) != cfg_.in_channels)
            throw ConfigError("encode: expected [N," + std::to_string(cfg_.in_channels) +
                              ",H,W], got " + shape_str(lq.shape()));
        if (lq.dim(2) % 8 != 0 || lq.dim(3) % 8 != 0)
            throw ConfigError("encode: spatial extents must be divisible by 8, got " +
                              shape_str(lq.shape()));
        Tensor<T> x = conv2d(lq, p("in_proj.w"), p("in_proj.b"));
        std::vector<Tensor<T>> skips;
        for (int l = 0; l < 3; ++l) {
            for (auto& blk : enc_[static_cast<size_t>(l)]) x = block_forward(x, blk, {}, {}, {});
            skips.push_back(x);
            const std::string d = "down" + std::to_string(l + 1);
            x = conv2d(pixel_unshuffle(x, 2), p(d + ".w"), p(d + ".b"));
        }
        return {x, skips};
    }

    Tensor<T> tren_extract(const Tensor<T>& latent) {
        Tensor<T> t = (variant_ == ModelVariant::kNoStopGradient) ? latent : stop_gradient(latent);
        for (int64_t r = 0; r < cfg_.tren_res_blocks; ++r) {
            const std::string b = "tren.rb" + std::to_string(r);
            auto y = conv2d(t, p(b + ".c1.w"), p(b + ".c1.b"));
            y = conv2d(gelu(y), p(b + ".c2.w"), p(b + ".c2.b"));
            t = add(t, y);
        }
        return linear(global_avg_pool(t), p("tren.proj.w"), p("tren.proj.b"));  // [N,d]
    }

    // W^G = reshape(MLP(z)) -> [N, C_site, k, k]
    Tensor<T> generate_weights(const Tensor<T>& z, const WeightSite<T>& site) {
        if (!site.has_generator()) throw ConfigError("generate_weights: site " + site.id + " has no generator");
        auto hidden = gelu(linear(z, site.gen_w1, site.gen_b1));
        auto flat = linear(hidden, site.gen_w2, site.gen_b2);  // [N, out]
        if (variant_ == ModelVariant::kGenAllParams) return flat;
        return reshape(flat, {z.dim(0), site.channels, cfg_.kernel_size, cfg_.kernel_size});
    }

    // W = W^S + lambda * W^G (lambda participates in gradient flow).
    Tensor<T> combine_weights(const WeightSite<T>& site, const Tensor<T>& wg) {
        if (wg.ndim() != 4 || wg.dim(1) != site.channels || wg.dim(2) != cfg_.kernel_size)
            throw ConfigError("combine_weights: shape " + shape_str(wg.shape()) +
                              " does not match site " + site.id);
        return add(site.shared, mul(site.lambda, wg));
    }

    Tensor<T> decode(const Tensor<T>& latent, const std::vector<Tensor<T>>& skips,
                     const Tensor<T>& z) {
        if (skips.size() != 3) throw InternalError("decode: expected 3 skip tensors");
        auto kernels = site_kernels(z);
        Tensor<T> x = latent;
        for (size_t b = 0; b < dec_[0].size(); ++b)
            x = watb_forward(x, dec_[0][b], kernels, z);
        for (int l = 2; l >= 0; --l) {  // decoder levels 3,2,1 fed by skips[2],[1],[0]
            const std::string u = "up" + std::to_string(l + 1);
            x = pixel_shuffle(x, 2);
            if (x.dim(2) != skips[static_cast<size_t>(l)].dim(2))
                throw InternalError("decode: skip resolution mismatch at level " + std::to_string(l + 1));
            x = conv2d(concat<T>({x, skips[static_cast<size_t>(l)]}, 1), p(u + ".w"), p(u + ".b"));
            for (size_t b = 0; b < dec_[static_cast<size_t>(3 - l)].size(); ++b)
                x = watb_forward(x, dec_[static_cast<size_t>(3 - l)][b], kernels, z);
        }
        return x;
    }

    // Full pipeline; output is lq + residual.
    Tensor<T> restore(const Tensor<T>& lq) {
        auto [latent, skips] = encode(lq);
        auto z = tren_extract(latent);
        auto df = decode(latent, skips, z);
        return add(lq, conv2d(df, p("out_proj.w"), p("out_proj.b")));
    }

    // Recomputes the [N,C,C] attention matrix of one encoder block (test probe).
    Tensor<T> probe_attention(const Tensor<T>& x, int enc_level, int block_idx) {
        const BlockRefs& blk = enc_[static_cast<size_t>(enc_level - 1)][static_cast<size_t>(block_idx)];
        const int64_t N = x.dim(0), C = blk.channels, HW = x.dim(2) * x.dim(3);
        auto y = layer_norm_channels(x, blk.ln1g, blk.ln1b, static_cast<T>(cfg_.ln_eps));
        auto qkv = depthwise_conv2d(conv2d(y, blk.qkvw, blk.qkvb), blk.attn_k);
        auto q = l2_normalize_rows(reshape(slice(qkv, 1, 0, C), {N, C, HW}));
        auto kk = l2_normalize_rows(reshape(slice(qkv, 1, C, C), {N, C, HW}));
        return softmax(mul(bmm(q, kk, false, true), blk.tau), 2);
    }

    // Decoder forward with externally supplied per-site kernels (probe hook).
    Tensor<T> decode_with_kernels(const Tensor<T>& latent, const std::vector<Tensor<T>>& skips,
                                  const std::vector<Tensor<T>>& kernels) {
        if (skips.size() != 3) throw InternalError("decode: expected 3 skip tensors");
        Tensor<T> undef_z;
        Tensor<T> x = latent;
        for (size_t b = 0; b < dec_[0].size(); ++b) x = watb_forward(x, dec_[0][b], kernels, undef_z);
        for (int l = 2; l >= 0; --l) {
            const std::string u = "up" + std::to_string(l + 1);
            x = conv2d(concat<T>({pixel_shuffle(x, 2), skips[static_cast<size_t>(l)]}, 1),
                       p(u + ".w"), p(u + ".b"));
            for (size_t b = 0; b < dec_[static_cast<size_t>(3 - l)].size(); ++b)
                x = watb_forward(x, dec_[static_cast<size_t>(3 - l)][b], kernels, undef_z);
        }
        return x;
    }

    // Combined kernels for every site given z (empty for variants without
    // per-sample depthwise kernels).
    std::vector<Tensor<T>> site_kernels(const Tensor<T>& z) {
        std::vector<Tensor<T>> kernels(sites_.size());
        if (variant_ == ModelVariant::kNoWeightGen || variant_ == ModelVariant::kGenAllParams)
            return kernels;  // depthwise slots fall back to W^S
        for (size_t i = 0; i < sites_.size(); ++i)
            if (sites_[i].has_generator())
                kernels[i] = combine_weights(sites_[i], generate_weights(z, sites_[i]));
        return kernels;
    }

  private:
    struct BlockRefs {
        std::string prefix;
        int64_t channels = 0, hidden = 0;
        Tensor<T> ln1g, ln1b, qkvw, qkvb, tau, projw, projb;
        Tensor<T> ln2g, ln2b, ffinw, ffinb, ffoutw, ffoutb;
        Tensor<T> attn_k, ffn_k;      // leaf kernels (encoder blocks, non-generated slots)
        int attn_site = -1, ffn_site = -1;
    };

    const Tensor<T>& p(const std::string& name) { return params_.at(name); }

    // Residual-branch output projections start small so the trunk keeps unit
    // scale regardless of depth.
    static constexpr double kResidualScale = 0.2;

    Tensor<T> he_param(const std::string& name, Shape shape, int64_t fan_in, double scale = 1.0) {
        auto t = init::he_normal<T>(std::move(shape), fan_in, seed_, name);
        if (scale != 1.0)
            for (auto& v : t.mutable_data()) v *= static_cast<T>(scale);
        return params_.add(name, std::move(t));
    }
    Tensor<T> zero_param(const std::string& name, Shape shape) {
        return params_.add(name, init::zeros<T>(std::move(shape)));
    }
    Tensor<T> const_param(const std::string& name, Shape shape, T v) {
        return params_.add(name, init::constant<T>(std::move(shape), v));
    }

    BlockRefs build_block(const std::string& prefix, int64_t c, bool watb, int stage, int block) {
        const int64_t h = cfg_.ffn_hidden(c);
        BlockRefs r;
        r.prefix = prefix;
        r.channels = c;
        r.hidden = h;
        r.ln1g = const_param(prefix + ".ln1.g", {c}, T(1));
        r.ln1b = zero_param(prefix + ".ln1.b", {c});
        r.qkvw = he_param(prefix + ".qkv.w", {3 * c, c, 1, 1}, c);
        r.qkvb = zero_param(prefix + ".qkv.b", {3 * c});
        r.tau = const_param(prefix + ".tau", {1}, T(1));
        r.projw = he_param(prefix + ".proj.w", {c, c, 1, 1}, c, kResidualScale);
        r.projb = zero_param(prefix + ".proj.b", {c});
        r.ln2g = const_param(prefix + ".ln2.g", {c}, T(1));
        r.ln2b = zero_param(prefix + ".ln2.b", {c});
        r.ffinw = he_param(prefix + ".ffn_in.w", {2 * h, c, 1, 1}, c);
        r.ffinb = zero_param(prefix + ".ffn_in.b", {2 * h});
        r.ffoutw = he_param(prefix + ".ffn_out.w", {c, h, 1, 1}, h, kResidualScale);
        r.ffoutb = zero_param(prefix + ".ffn_out.b", {c});

        const bool attn_gen = watb && (cfg_.slots != WeightSlots::kFfnOnly);
        const bool ffn_gen = watb && (cfg_.slots != WeightSlots::kAttnOnly);
        r.attn_k = make_dconv_slot(prefix, Slot::kAttnDconv, 3 * c, stage, block, attn_gen, r);
        r.ffn_k = make_dconv_slot(prefix, Slot::kFfnDconv, 2 * h, stage, block, ffn_gen, r);
        return r;
    }

    // Registers the depthwise kernel of one slot, as a WeightSite on decoder
    // blocks and as a plain leaf kernel otherwise. Returns the leaf kernel.
    Tensor<T> make_dconv_slot(const std::string& prefix, Slot slot, int64_t channels, int stage,
                              int block, bool generated, BlockRefs& refs) {
        const int64_t k = cfg_.kernel_size;
        const std::string base = prefix + "." + slot_name(slot);
        Tensor<T> ws = he_param(base + ".ws", {channels, k, k}, k * k);
        if (!generated) return ws;

        WeightSite<T> site;
        site.id = base;
        site.stage = stage;
        site.block = block;
        site.slot = slot;
        site.channels = channels;
        site.shared = ws;
        if (variant_ != ModelVariant::kNoWeightGen) {
            site.lambda = const_param(base + ".lam", {1}, static_cast<T>(cfg_.lambda_init));
            int64_t out_dim = k * k * channels;
            if (variant_ == ModelVariant::kGenAllParams) {
                // generate the adjacent 1x1 conv weights instead (the O(C^2) variant)
                site.pw_targets.clear();
                if (slot == Slot::kAttnDconv) {
                    site.pw_targets.emplace_back(refs.qkvw, Shape{3 * refs.channels, refs.channels});
                    site.pw_targets.emplace_back(refs.projw, Shape{refs.channels, refs.channels});
                } else {
                    site.pw_targets.emplace_back(refs.ffinw, Shape{2 * refs.hidden, refs.channels});
                    site.pw_targets.emplace_back(refs.ffoutw, Shape{refs.channels, refs.hidden});
                }
                out_dim = 0;
                for (auto& [w, shp] : site.pw_targets) out_dim += numel_of(shp);
            }
            site.gen_w1 = he_param(base + ".gen.w1", {cfg_.gen_hidden, cfg_.task_dim}, cfg_.task_dim);
            site.gen_b1 = zero_param(base + ".gen.b1", {cfg_.gen_hidden});
            site.gen_w2 = he_param(base + ".gen.w2", {out_dim, cfg_.gen_hidden}, cfg_.gen_hidden);
            site.gen_b2 = zero_param(base + ".gen.b2", {out_dim});
        }
        if (slot == Slot::kAttnDconv) refs.attn_site = static_cast<int>(sites_.size());
        else refs.ffn_site = static_cast<int>(sites_.size());
        sites_.push_back(std::move(site));
        return ws;
    }

    void build() {
        const int64_t k = cfg_.kernel_size;
        const int64_t C = cfg_.base_channels;
        he_param("in_proj.w", {C, cfg_.in_channels, k, k}, cfg_.in_channels * k * k);
        zero_param("in_proj.b", {C});
        for (int l = 0; l < 3; ++l) {
            const int64_t c = cfg_.width(l);
            auto& blocks = enc_[static_cast<size_t>(l)];
            for (int64_t b = 0; b < cfg_.stage_blocks[static_cast<size_t>(l)]; ++b)
                blocks.push_back(build_block("enc.l" + std::to_string(l + 1) + ".b" + std::to_string(b),
                                             c, false, l + 1, static_cast<int>(b)));
            const std::string d = "down" + std::to_string(l + 1);
            he_param(d + ".w", {cfg_.width(l + 1), 4 * c, 1, 1}, 4 * c);
            zero_param(d + ".b", {cfg_.width(l + 1)});
        }
        // decoder: bottleneck level 4, then levels 3..1 (block counts mirror L3,L2,L1)
        const std::array<int, 4> dec_levels = {4, 3, 2, 1};
        const std::array<int64_t, 4> dec_blocks = {cfg_.stage_blocks[3], cfg_.stage_blocks[2],
                                                   cfg_.stage_blocks[1], cfg_.stage_blocks[0]};
        for (size_t i = 0; i < 4; ++i) {
            const int level = dec_levels[i];
            const int64_t c = cfg_.width(level - 1);
            if (i > 0) {
                const std::string u = "up" + std::to_string(level);
                const int64_t c_up = cfg_.width(level) / 4;  // after pixel_shuffle
                he_param(u + ".w", {c, c_up + c, 1, 1}, c_up + c);
                zero_param(u + ".b", {c});
            }
            for (int64_t b = 0; b < dec_blocks[i]; ++b)
                dec_[i].push_back(build_block("dec.l" + std::to_string(level) + ".b" + std::to_string(b),
                                              c, true, level, static_cast<int>(b)));
        }
        zero_param("out_proj.w", {cfg_.in_channels, C, k, k});  // identity start
        zero_param("out_proj.b", {cfg_.in_channels});
        const int64_t cl = cfg_.width(3);
        for (int64_t r = 0; r < cfg_.tren_res_blocks; ++r) {
            const std::string b = "tren.rb" + std::to_string(r);
            he_param(b + ".c1.w", {cl, cl, k, k}, cl * k * k);
            zero_param(b + ".c1.b", {cl});
            he_param(b + ".c2.w", {cl, cl, k, k}, cl * k * k, kResidualScale);
            zero_param(b + ".c2.b", {cl});
        }
        he_param("tren.proj.w", {cfg_.task_dim, cl}, cl);
        zero_param("tren.proj.b", {cfg_.task_dim});
    }

    // Per-sample 1x1 conv: x [N,Ci,H,W] with weights [N,Co,Ci].
    Tensor<T> pointwise_per_sample(const Tensor<T>& x, const Tensor<T>& w3, const Tensor<T>& bias) {
        const int64_t N = x.dim(0), H = x.dim(2), W = x.dim(3), Co = w3.dim(1);
        auto y = bmm(w3, reshape(x, {N, x.dim(1), H * W}));
        auto out = reshape(y, {N, Co, H, W});
        return add(out, reshape(bias, {1, Co, 1, 1}));
    }

    DynPointwise<T> dyn_pointwise(const BlockRefs& blk, const Tensor<T>& z) {
        DynPointwise<T> dyn;
        if (variant_ != ModelVariant::kGenAllParams || !z.defined()) return dyn;
        auto combine_pw = [&](const WeightSite<T>& site) {
            std::vector<Tensor<T>> parts;
            auto flat = generate_weights(z, site);  // [N, sum of target numels]
            int64_t off = 0;
            for (auto& [shared, shp] : site.pw_targets) {
                const int64_t n = numel_of(shp);
                auto wg = reshape(slice(flat, 1, off, n), {z.dim(0), shp[0], shp[1]});
                auto ws = reshape(shared, {1, shp[0], shp[1]});
                parts.push_back(add(ws, mul(site.lambda, wg)));
                off += n;
            }
            return parts;
        };
        if (blk.attn_site >= 0 && sites_[static_cast<size_t>(blk.attn_site)].has_generator()) {
            auto parts = combine_pw(sites_[static_cast<size_t>(blk.attn_site)]);
            dyn.qkv = parts[0];
            dyn.proj = parts[1];
        }
        if (blk.ffn_site >= 0 && sites_[static_cast<size_t>(blk.ffn_site)].has_generator()) {
            auto parts = combine_pw(sites_[static_cast<size_t>(blk.ffn_site)]);
            dyn.ffn_in = parts[0];
            dyn.ffn_out = parts[1];
        }
        return dyn;
    }

    // Channel-attention Transformer block. WATB mode differs from the encoder
    // block only by where the depthwise kernels (or 1x1 weights) come from.
    Tensor<T> block_forward(const Tensor<T>& x, const BlockRefs& blk, const Tensor<T>& attn_kernel,
                            const Tensor<T>& ffn_kernel, const DynPointwise<T>& dyn) {
        const int64_t N = x.dim(0), C = blk.channels, H = x.dim(2), W = x.dim(3);
        if (x.dim(1) != C)
            throw ConfigError("transformer_block: input has " + std::to_string(x.dim(1)) +
                              " channels, block " + blk.prefix + " expects " + std::to_string(C));
        auto y = layer_norm_channels(x, blk.ln1g, blk.ln1b, static_cast<T>(cfg_.ln_eps));
        auto qkv = dyn.qkv.defined() ? pointwise_per_sample(y, dyn.qkv, blk.qkvb)
                                     : conv2d(y, blk.qkvw, blk.qkvb);
        qkv = depthwise_conv2d(qkv, attn_kernel.defined() ? attn_kernel : blk.attn_k,
                               blk.prefix + ".attn_dw");
        auto q = reshape(slice(qkv, 1, 0, C), {N, C, H * W});
        auto kk = reshape(slice(qkv, 1, C, C), {N, C, H * W});
        auto v = reshape(slice(qkv, 1, 2 * C, C), {N, C, H * W});
        auto attn = softmax(mul(bmm(l2_normalize_rows(q), l2_normalize_rows(kk), false, true), blk.tau), 2);
        auto o = reshape(bmm(attn, v), {N, C, H, W});
        auto x1 = add(x, dyn.proj.defined() ? pointwise_per_sample(o, dyn.proj, blk.projb)
                                            : conv2d(o, blk.projw, blk.projb));

        auto y2 = layer_norm_channels(x1, blk.ln2g, blk.ln2b, static_cast<T>(cfg_.ln_eps));
        auto hh = dyn.ffn_in.defined() ? pointwise_per_sample(y2, dyn.ffn_in, blk.ffinb)
                                       : conv2d(y2, blk.ffinw, blk.ffinb);
        hh = depthwise_conv2d(hh, ffn_kernel.defined() ? ffn_kernel : blk.ffn_k,
                              blk.prefix + ".ffn_dw");
        auto g = mul(gelu(slice(hh, 1, 0, blk.hidden)), slice(hh, 1, blk.hidden, blk.hidden));
        return add(x1, dyn.ffn_out.defined() ? pointwise_per_sample(g, dyn.ffn_out, blk.ffoutb)
                                             : conv2d(g, blk.ffoutw, blk.ffoutb));
    }

    Tensor<T> watb_forward(const Tensor<T>& x, const BlockRefs& blk,
                           const std::vector<Tensor<T>>& kernels, const Tensor<T>& z) {
        Tensor<T> ak, fk;
        if (blk.attn_site >= 0 && static_cast<size_t>(blk.attn_site) < kernels.size())
            ak = kernels[static_cast<size_t>(blk.attn_site)];
        if (blk.ffn_site >= 0 && static_cast<size_t>(blk.ffn_site) < kernels.size())
            fk = kernels[static_cast<size_t>(blk.ffn_site)];
        return block_forward(x, blk, ak, fk, dyn_pointwise(blk, z));
    }

    TatConfig cfg_;
    ModelVariant variant_;
    uint64_t seed_;
    ParamStore<T> params_;
    std::vector<WeightSite<T>> sites_;
    std::array<std::vector<BlockRefs>, 3> enc_;
    std::array<std::vector<BlockRefs>, 4> dec_;
};

}  // namespace tat
