#pragma once

// Training loop, evaluation, ablation runner, and the embedding separability
// report. Training parallelizes across the samples of a batch: each worker
// runs its own tape into a per-sample gradient store, and stores are reduced
// in sample order, so the result is bit-identical for any thread count.

#include <omp.h>

#include <filesystem>
#include <sstream>

#include "tat/balancer.hpp"
#include "tat/checkpoint.hpp"
#include "tat/data.hpp"
#include "tat/metrics.hpp"
#include "tat/model.hpp"
#include "tat/optim.hpp"

namespace tat {

struct TaskMetrics {
    double psnr = 0, ssim = 0, rmse = 0;
    double input_psnr = 0;  // PSNR(lq, hq) over the same samples
    int64_t count = 0;
};

struct MetricsReport {
    std::array<TaskMetrics, 3> per_task;
    TaskMetrics macro;
    int64_t total_count = 0;

    std::string str() const {
        std::ostringstream os;
        os.precision(4);
        os << std::fixed;
        for (size_t t = 0; t < 3; ++t) {
            const auto& m = per_task[t];
            os << task_name(static_cast<TaskTag>(t)) << ": psnr " << m.psnr << " (input "
               << m.input_psnr << ") ssim " << m.ssim << " rmse " << m.rmse << " n=" << m.count
               << "\n";
        }
        os << "macro: psnr " << macro.psnr << " ssim " << macro.ssim << " rmse " << macro.rmse
           << " n=" << total_count << "\n";
        return os.str();
    }
};

namespace detail {

template <typename T>
Tensor<T> image_tensor(const Image& img) {
    std::vector<T> data(img.px.size());
    for (size_t i = 0; i < data.size(); ++i) data[i] = static_cast<T>(img.px[i]);
    return Tensor<T>::from_vec({1, 1, img.h, img.w}, std::move(data));
}

inline std::vector<double> to_doubles(std::span<const float> v) {
    return std::vector<double>(v.begin(), v.end());
}
inline std::vector<double> to_doubles(std::span<const double> v) {
    return std::vector<double>(v.begin(), v.end());
}

inline int resolve_threads(int requested, int64_t jobs) {
    int n = requested > 0 ? requested : omp_get_max_threads();
    return static_cast<int>(std::min<int64_t>(n, jobs));
}

}  // namespace detail

// Deterministic fixed-seed-range evaluation. Returns per-task and macro
// metrics; n_per_task == 0 yields an empty report.
template <typename T>
MetricsReport evaluate(Model<T>& model, const DatasetConfig& dcfg, int64_t n_per_task) {
    MetricsReport rep;
    if (n_per_task == 0) return rep;
    const int64_t total = 3 * n_per_task;
    struct Row {
        double psnr, ssim, rmse, in_psnr;
        int task;
    };
    std::vector<Row> rows(static_cast<size_t>(total));
    const int nthr = detail::resolve_threads(0, total);
#pragma omp parallel for num_threads(nthr) schedule(dynamic)
    for (int64_t j = 0; j < total; ++j) {
        const TaskTag task = kAllTasks[static_cast<size_t>(j / n_per_task)];
        const auto s = make_sample(dcfg, "eval", static_cast<uint64_t>(j % n_per_task), task);
        auto pred = model.restore(detail::image_tensor<T>(s.lq));
        auto pv = detail::to_doubles(pred.data());
        for (double& v : pv) v = std::clamp(v, 0.0, 1.0);
        rows[static_cast<size_t>(j)] = {psnr(pv, s.hq.px), ssim(pv, s.hq.px, s.hq.h, s.hq.w),
                                        rmse(pv, s.hq.px), psnr(s.lq.px, s.hq.px),
                                        static_cast<int>(task)};
    }
    for (const Row& r : rows) {
        auto& m = rep.per_task[static_cast<size_t>(r.task)];
        m.psnr += r.psnr;
        m.ssim += r.ssim;
        m.rmse += r.rmse;
        m.input_psnr += r.in_psnr;
        m.count++;
    }
    for (auto& m : rep.per_task) {
        if (m.count == 0) continue;
        m.psnr /= static_cast<double>(m.count);
        m.ssim /= static_cast<double>(m.count);
        m.rmse /= static_cast<double>(m.count);
        m.input_psnr /= static_cast<double>(m.count);
        rep.macro.psnr += m.psnr / 3.0;
        rep.macro.ssim += m.ssim / 3.0;
        rep.macro.rmse += m.rmse / 3.0;
        rep.macro.input_psnr += m.input_psnr / 3.0;
        rep.total_count += m.count;
    }
    rep.macro.count = rep.total_count;
    return rep;
}

template <typename T>
struct TrainResult {
    std::string checkpoint_path, train_log_path, eval_log_path;
    uint64_t stream_hash = 0;
    uint64_t checkpoint_hash = 0;
    uint64_t log_hash = 0;
    std::vector<double> loss_history;  // mean weighted loss per iteration
    MetricsReport final_eval;
    int64_t param_count = 0;
};

// One training run. Owns the model, balancer state, optimizer and data stream.
template <typename T>
class Trainer {
  public:
    Trainer(TatConfig mcfg, TrainConfig tcfg)
        : mcfg_(std::move(mcfg)),
          tcfg_(std::move(tcfg)),
          model_(mcfg_, TrainConfig::variant_from_tag(tcfg_.variant), tcfg_.seed) {
        tcfg_.validate();
        dcfg_.seed = tcfg_.seed;
        dcfg_.canvas = tcfg_.canvas;
        dcfg_.patch = tcfg_.patch;
        if (balanced()) sigma_net_ = SigmaNet<T>(balancer_params_, tcfg_.seed);
        else if (tcfg_.variant == "task_level") kendall_ = KendallBaseline<T>(balancer_params_);
        typename AdamW<T>::Options opt;
        opt.lr = static_cast<T>(tcfg_.lr);
        opt.beta1 = static_cast<T>(tcfg_.beta1);
        opt.beta2 = static_cast<T>(tcfg_.beta2);
        opt.weight_decay = static_cast<T>(tcfg_.weight_decay);
        adamw_ = AdamW<T>(opt);
        all_params_ = model_.params().tensors();
        for (auto& [name, t] : balancer_params_) all_params_.push_back(t);
        const int64_t batch = 3 * tcfg_.batch_per_task;
        stores_.resize(static_cast<size_t>(batch));
    }

    Model<T>& model() { return model_; }
    const TrainConfig& train_config() const { return tcfg_; }
    const DatasetConfig& data_config() const { return dcfg_; }
    SigmaNet<T>& sigma_net() { return sigma_net_; }
    std::vector<Tensor<T>>& all_params() { return all_params_; }
    const std::vector<LossRecord>& last_records() const { return records_; }
    double last_loss() const { return last_loss_; }
    uint64_t stream_hash() const { return stream_hash_; }
    int64_t param_count() const {
        int64_t n = model_.params().total_params();
        for (const auto& [name, t] : balancer_params_) n += t.numel();
        return n;
    }

    NamedTensors<T> named_params() {
        NamedTensors<T> all;
        for (auto& [name, t] : model_.params()) all.emplace_back(name, t);
        for (auto& [name, t] : balancer_params_) all.emplace_back(name, t);
        return all;
    }

    bool balanced() const {
        return tcfg_.variant != "no_balancing" && tcfg_.variant != "task_level";
    }

    // One optimization step. Gradients of the step remain on the parameters
    // afterwards (they are cleared at the start of the next step).
    void step() {
        AdamW<T>::zero_grad(all_params_);
        auto batch = make_batch(dcfg_, iteration_, tcfg_.batch_per_task);
        const int64_t B = static_cast<int64_t>(batch.size());
        for (const auto& s : batch) stream_hash_ = hash_sample(s, stream_hash_);

        records_.assign(static_cast<size_t>(B), LossRecord{});
        std::vector<std::string> errors(static_cast<size_t>(B));
        // task sigma values for the task-level variant (constant within a step)
        std::array<T, 3> sig_t = {T(1), T(1), T(1)};
        if (tcfg_.variant == "task_level")
            for (int t = 0; t < 3; ++t)
                sig_t[static_cast<size_t>(t)] = std::exp(kendall_.log_sigma.data()[t]);

        const int nthr = detail::resolve_threads(tcfg_.threads, B);
#pragma omp parallel for num_threads(nthr) schedule(dynamic)
        for (int64_t n = 0; n < B; ++n) {
            try {
                auto& store = stores_[static_cast<size_t>(n)];
                store.next_epoch();
                const auto& s = batch[static_cast<size_t>(n)];
                Tape<T> tape;
                auto lq = detail::image_tensor<T>(s.lq);
                auto hq = detail::image_tensor<T>(s.hq);
                auto pred = model_.restore(lq);
                auto l_lq_hq = l1_distance(lq, hq);
                auto l_lq_pred = l1_distance(lq, pred);
                auto l_pred_hq = l1_distance(pred, hq);
                LossRecord rec;
                rec.iteration = static_cast<int64_t>(iteration_);
                rec.task = s.task;
                rec.l_lq_hq = static_cast<double>(l_lq_hq.item());
                rec.l_lq_pred = static_cast<double>(l_lq_pred.item());
                rec.l_pred_hq = static_cast<double>(l_pred_hq.item());
                if (balanced()) {
                    auto sg3 = concat<T>({stop_gradient(reshape(l_lq_hq, {1, 1})),
                                          stop_gradient(reshape(l_lq_pred, {1, 1})),
                                          stop_gradient(reshape(l_pred_hq, {1, 1}))},
                                         1);
                    auto sig = sigma_net_.sigma(sg3);
                    auto loss = balanced_loss(l_pred_hq, sig);
                    rec.sigma = static_cast<double>(sig.item());
                    rec.weighted = static_cast<double>(loss.item());
                    tape.backward(loss, &store, T(1) / static_cast<T>(B));
                } else if (tcfg_.variant == "no_balancing") {
                    auto loss = mean_all(l_pred_hq);
                    rec.sigma = 1.0;
                    rec.weighted = static_cast<double>(loss.item());
                    tape.backward(loss, &store, T(1) / static_cast<T>(B));
                } else {  // task_level: model-side weight is 1/(2 sigma_t^2)
                    const T st = sig_t[static_cast<size_t>(s.task)];
                    auto loss = mean_all(l_pred_hq);
                    rec.sigma = static_cast<double>(st);
                    rec.weighted = static_cast<double>(loss.item()) / (2 * static_cast<double>(st) * static_cast<double>(st));
                    tape.backward(loss, &store, (T(1) / static_cast<T>(B)) / (T(2) * st * st));
                }
                if (!std::isfinite(rec.weighted) || !std::isfinite(rec.l_pred_hq))
                    throw NumericError("non-finite loss");
                records_[static_cast<size_t>(n)] = rec;
            } catch (const std::exception& e) {
                errors[static_cast<size_t>(n)] = e.what();
            }
        }
        for (int64_t n = 0; n < B; ++n)
            if (!errors[static_cast<size_t>(n)].empty())
                throw NumericError("training aborted at iteration " + std::to_string(iteration_) +
                                   ", task " + task_name(batch[static_cast<size_t>(n)].task) +
                                   ", sample seed " + std::to_string(batch[static_cast<size_t>(n)].seed) +
                                   ": " + errors[static_cast<size_t>(n)]);

        // fixed-order reduction: bitwise independent of the thread count
        for (auto& param : all_params_) {
            auto* node = param.node();
            bool any = false;
            for (int64_t n = 0; n < B; ++n) {
                auto g = stores_[static_cast<size_t>(n)].lookup(*node);
                if (g.empty()) continue;
                if (!any) {
                    node->grad.assign(node->value.size(), T(0));
                    any = true;
                }
                for (size_t i = 0; i < g.size(); ++i) node->grad[i] += g[i];
            }
        }

        if (tcfg_.variant == "task_level") {
            // sigma_t update: Eq-4-style objective over the mean per-task losses,
            // scaled by 1/T so its model gradients coincide with the balanced
            // variant at sigma == 1.
            std::array<double, 3> task_sum{};
            std::array<int64_t, 3> task_n{};
            for (const auto& r : records_) {
                task_sum[static_cast<size_t>(r.task)] += r.l_pred_hq;
                task_n[static_cast<size_t>(r.task)]++;
            }
            std::vector<T> tl(3);
            for (int t = 0; t < 3; ++t)
                tl[static_cast<size_t>(t)] =
                    static_cast<T>(task_sum[static_cast<size_t>(t)] /
                                   std::max<int64_t>(1, task_n[static_cast<size_t>(t)]));
            Tape<T> tape;
            auto loss = mul_scalar(kendall_loss(Tensor<T>::from_vec({3}, tl), kendall_), T(1) / T(3));
            tape.backward(loss);
        }

        adamw_.step(all_params_);
        double mean_loss = 0;
        for (const auto& r : records_) mean_loss += r.weighted;
        last_loss_ = mean_loss / static_cast<double>(B);
        ++iteration_;
    }

    // Full run: iterate, log, snapshot, checkpoint.
    TrainResult<T> run(const std::string& out_dir) {
        namespace fs = std::filesystem;
        fs::create_directories(out_dir);
        TrainResult<T> res;
        res.param_count = param_count();
        res.checkpoint_path = (fs::path(out_dir) / "checkpoint.tat").string();
        res.train_log_path = (fs::path(out_dir) / "train_log.csv").string();
        res.eval_log_path = (fs::path(out_dir) / "eval_log.csv").string();
        std::ofstream tlog(res.train_log_path);
        std::ofstream elog(res.eval_log_path);
        tlog << "iteration,task,l_pred_hq,sigma,weighted\n";
        elog << "iteration,task,psnr,ssim,rmse\n";
        tlog.precision(9);
        elog.precision(9);
        res.loss_history.reserve(static_cast<size_t>(tcfg_.iterations));
        for (int64_t it = 0; it < tcfg_.iterations; ++it) {
            step();
            for (const auto& r : records_)
                tlog << r.iteration << ',' << task_name(r.task) << ',' << r.l_pred_hq << ','
                     << r.sigma << ',' << r.weighted << '\n';
            res.loss_history.push_back(last_loss_);
            if (tcfg_.eval_every > 0 &&
                ((it + 1) % tcfg_.eval_every == 0 || it + 1 == tcfg_.iterations)) {
                auto rep = evaluate(model_, dcfg_, tcfg_.eval_n_per_task);
                for (size_t t = 0; t < 3; ++t)
                    elog << (it + 1) << ',' << task_name(static_cast<TaskTag>(t)) << ','
                         << rep.per_task[t].psnr << ',' << rep.per_task[t].ssim << ','
                         << rep.per_task[t].rmse << '\n';
            }
        }
        res.final_eval = evaluate(model_, dcfg_, tcfg_.eval_n_per_task);
        auto named = named_params();
        save_checkpoint<T>(res.checkpoint_path, named, mcfg_, tcfg_);
        tlog.flush();
        elog.flush();
        res.stream_hash = stream_hash_;
        res.checkpoint_hash = hash_file(res.checkpoint_path);
        res.log_hash = fnv1a64(std::to_string(hash_file(res.train_log_path)) + ":" +
                               std::to_string(hash_file(res.eval_log_path)));
        return res;
    }

  private:
    TatConfig mcfg_;
    TrainConfig tcfg_;
    DatasetConfig dcfg_;
    Model<T> model_;
    ParamStore<T> balancer_params_;
    SigmaNet<T> sigma_net_;
    KendallBaseline<T> kendall_;
    AdamW<T> adamw_;
    std::vector<Tensor<T>> all_params_;
    std::vector<GradStore<T>> stores_;
    std::vector<LossRecord> records_;
    uint64_t iteration_ = 0;
    uint64_t stream_hash_ = 0xcbf29ce484222325ULL;
    double last_loss_ = 0;
};

template <typename T>
TrainResult<T> train(const TatConfig& mcfg, const TrainConfig& tcfg, const std::string& out_dir) {
    Trainer<T> trainer(mcfg, tcfg);
    return trainer.run(out_dir);
}

// ---------------------------------------------------------------------------
// embedding separability

struct EmbeddingReport {
    std::vector<std::array<double, 2>> points;
    std::vector<int> task;
    std::vector<int> cluster;
    double purity = 0;
};

namespace detail {

// top-`k` principal directions via power iteration with deflation
inline std::vector<std::vector<double>> pca_directions(const std::vector<std::vector<double>>& x,
                                                       int k) {
    const size_t n = x.size(), d = x[0].size();
    std::vector<double> mean(d, 0);
    for (const auto& row : x)
        for (size_t j = 0; j < d; ++j) mean[j] += row[j];
    for (double& m : mean) m /= static_cast<double>(n);
    std::vector<std::vector<double>> cov(d, std::vector<double>(d, 0));
    for (const auto& row : x)
        for (size_t i = 0; i < d; ++i)
            for (size_t j = 0; j < d; ++j) cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]);
    for (auto& r : cov)
        for (double& v : r) v /= static_cast<double>(n);

    std::vector<std::vector<double>> dirs;
    Rng rng = make_rng(12345);
    std::normal_distribution<double> nd;
    for (int c = 0; c < k; ++c) {
        std::vector<double> v(d);
        for (double& e : v) e = nd(rng);
        for (int it = 0; it < 500; ++it) {
            std::vector<double> w(d, 0);
            for (size_t i = 0; i < d; ++i)
                for (size_t j = 0; j < d; ++j) w[i] += cov[i][j] * v[j];
            for (const auto& prev : dirs) {  // deflate
                double dot = 0;
                for (size_t j = 0; j < d; ++j) dot += w[j] * prev[j];
                for (size_t j = 0; j < d; ++j) w[j] -= dot * prev[j];
            }
            double norm = 0;
            for (double e : w) norm += e * e;
            norm = std::sqrt(norm);
            if (norm < 1e-30) break;
            for (size_t j = 0; j < d; ++j) v[j] = w[j] / norm;
        }
        dirs.push_back(v);
    }
    // center is folded into projection by the caller
    dirs.push_back(mean);
    return dirs;
}

inline std::vector<int> kmeans2d(const std::vector<std::array<double, 2>>& pts, int k,
                                 uint64_t seed) {
    const size_t n = pts.size();
    std::vector<int> best_assign(n, 0);
    double best_inertia = std::numeric_limits<double>::infinity();
    Rng rng = make_rng(seed);
    for (int restart = 0; restart < 10; ++restart) {
        // k-means++ seeding
        std::vector<std::array<double, 2>> centers;
        std::uniform_int_distribution<size_t> first_pick(0, n - 1);
        centers.push_back(pts[first_pick(rng)]);
        while (static_cast<int>(centers.size()) < k) {
            std::vector<double> d2(n);
            double sum = 0;
            for (size_t i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                for (const auto& c : centers) {
                    const double dx = pts[i][0] - c[0], dy = pts[i][1] - c[1];
                    best = std::min(best, dx * dx + dy * dy);
                }
                d2[i] = best;
                sum += best;
            }
            std::uniform_real_distribution<double> u(0, sum);
            double r = u(rng), acc = 0;
            size_t pick = n - 1;
            for (size_t i = 0; i < n; ++i) {
                acc += d2[i];
                if (acc >= r) {
                    pick = i;
                    break;
                }
            }
            centers.push_back(pts[pick]);
        }
        std::vector<int> assign(n, 0);
        for (int it = 0; it < 100; ++it) {
            bool changed = false;
            for (size_t i = 0; i < n; ++i) {
                double best = std::numeric_limits<double>::infinity();
                int arg = 0;
                for (int c = 0; c < k; ++c) {
                    const double dx = pts[i][0] - centers[static_cast<size_t>(c)][0];
                    const double dy = pts[i][1] - centers[static_cast<size_t>(c)][1];
                    const double d = dx * dx + dy * dy;
                    if (d < best) {
                        best = d;
                        arg = c;
                    }
                }
                if (assign[i] != arg) changed = true;
                assign[i] = arg;
            }
            std::vector<std::array<double, 2>> nc(static_cast<size_t>(k), {0, 0});
            std::vector<int64_t> cnt(static_cast<size_t>(k), 0);
            for (size_t i = 0; i < n; ++i) {
                nc[static_cast<size_t>(assign[i])][0] += pts[i][0];
                nc[static_cast<size_t>(assign[i])][1] += pts[i][1];
                cnt[static_cast<size_t>(assign[i])]++;
            }
            for (int c = 0; c < k; ++c)
                if (cnt[static_cast<size_t>(c)] > 0) {
                    centers[static_cast<size_t>(c)][0] = nc[static_cast<size_t>(c)][0] / cnt[static_cast<size_t>(c)];
                    centers[static_cast<size_t>(c)][1] = nc[static_cast<size_t>(c)][1] / cnt[static_cast<size_t>(c)];
                }
            if (!changed) break;
        }
        double inertia = 0;
        for (size_t i = 0; i < n; ++i) {
            const double dx = pts[i][0] - centers[static_cast<size_t>(assign[i])][0];
            const double dy = pts[i][1] - centers[static_cast<size_t>(assign[i])][1];
            inertia += dx * dx + dy * dy;
        }
        if (inertia < best_inertia) {
            best_inertia = inertia;
            best_assign = assign;
        }
    }
    return best_assign;
}

}  // namespace detail

// Collects Z over a mixed held-out batch, projects to 2-D via PCA, runs
// k-means(3) on the projection and reports cluster purity against task labels.
template <typename T>
EmbeddingReport embedding_report(Model<T>& model, const DatasetConfig& dcfg, int64_t n_per_task,
                                 const std::string& csv_path = "") {
    EmbeddingReport rep;
    const int64_t total = 3 * n_per_task;
    std::vector<std::vector<double>> zs(static_cast<size_t>(total));
    rep.task.resize(static_cast<size_t>(total));
    const int nthr = detail::resolve_threads(0, total);
#pragma omp parallel for num_threads(nthr) schedule(dynamic)
    for (int64_t j = 0; j < total; ++j) {
        const TaskTag task = kAllTasks[static_cast<size_t>(j / n_per_task)];
        const auto s = make_sample(dcfg, "eval", static_cast<uint64_t>(j % n_per_task), task);
        auto [latent, skips] = model.encode(detail::image_tensor<T>(s.lq));
        auto z = model.tren_extract(latent);
        zs[static_cast<size_t>(j)] = detail::to_doubles(z.data());
        rep.task[static_cast<size_t>(j)] = static_cast<int>(task);
    }
    auto dirs = detail::pca_directions(zs, 2);
    const auto& mean = dirs[2];
    rep.points.resize(static_cast<size_t>(total));
    for (int64_t j = 0; j < total; ++j)
        for (int c = 0; c < 2; ++c) {
            double acc = 0;
            for (size_t f = 0; f < mean.size(); ++f)
                acc += (zs[static_cast<size_t>(j)][f] - mean[f]) * dirs[static_cast<size_t>(c)][f];
            rep.points[static_cast<size_t>(j)][static_cast<size_t>(c)] = acc;
        }
    rep.cluster = detail::kmeans2d(rep.points, 3, 777);

    std::array<std::array<int64_t, 3>, 3> conf{};  // [cluster][task]
    for (int64_t j = 0; j < total; ++j)
        conf[static_cast<size_t>(rep.cluster[static_cast<size_t>(j)])]
            [static_cast<size_t>(rep.task[static_cast<size_t>(j)])]++;
    int64_t majority = 0;
    for (const auto& row : conf) majority += *std::max_element(row.begin(), row.end());
    rep.purity = static_cast<double>(majority) / static_cast<double>(total);

    if (!csv_path.empty()) {
        std::ofstream f(csv_path);
        f << "task,pc1,pc2,cluster\n";
        f.precision(9);
        for (int64_t j = 0; j < total; ++j)
            f << task_name(static_cast<TaskTag>(rep.task[static_cast<size_t>(j)])) << ','
              << rep.points[static_cast<size_t>(j)][0] << ',' << rep.points[static_cast<size_t>(j)][1]
              << ',' << rep.cluster[static_cast<size_t>(j)] << '\n';
    }
    return rep;
}

// ---------------------------------------------------------------------------
// ablation runner

template <typename T>
struct VariantResult {
    std::string variant;
    int64_t param_count = 0;
    TrainResult<T> train;
};

template <typename T>
struct AblateReport {
    std::vector<VariantResult<T>> variants;
    bool streams_identical = true;
};

// Trains each variant with identical seeds and budget; data streams are
// verified identical via their hashes.
template <typename T>
AblateReport<T> ablate(const TatConfig& mcfg, const TrainConfig& base,
                       const std::vector<std::string>& variants, const std::string& out_dir) {
    namespace fs = std::filesystem;
    AblateReport<T> rep;
    for (const auto& v : variants) {
        TrainConfig tc = base;
        tc.variant = v;
        tc.validate();
        VariantResult<T> vr;
        vr.variant = v;
        Trainer<T> trainer(mcfg, tc);
        vr.param_count = trainer.param_count();
        vr.train = trainer.run((fs::path(out_dir) / v).string());
        rep.variants.push_back(std::move(vr));
    }
    for (size_t i = 1; i < rep.variants.size(); ++i)
        if (rep.variants[i].train.stream_hash != rep.variants[0].train.stream_hash)
            rep.streams_identical = false;
    return rep;
}

}  // namespace tat
