#pragma once

// Optimization and evaluation harness: AdamW, parameter EMA, synthetic image
// datasets, sample-quality metrics, and the training loop behind the ablation.

#include "arcee/config.hpp"
#include "arcee/flow_matching.hpp"
#include "arcee/io.hpp"
#include "arcee/network.hpp"
#include "arcee/ode_sampler.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <functional>
#include <numbers>
#include <optional>
#include <random>
#include <thread>

namespace arcee {

// ---------------------------------------------------------------------------
// AdamW

template <typename Real>
struct ParamRef {
    std::string name;
    Mat<Real>* tensor;
};

template <typename Real>
std::vector<ParamRef<Real>> param_refs(NetworkParams<Real>& p) {
    std::vector<ParamRef<Real>> out;
    for (auto& e : p.entries()) out.push_back({e.name, e.tensor});
    return out;
}

template <typename Real>
struct OptimState {
    std::vector<Mat<Real>> m;
    std::vector<Mat<Real>> v;
    std::int64_t step = 0;
    double lr = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double weight_decay = 0.0;

    static OptimState init(const std::vector<ParamRef<Real>>& params) {
        OptimState s;
        for (const auto& p : params) {
            s.m.push_back(Mat<Real>::Zero(p.tensor->rows(), p.tensor->cols()));
            s.v.push_back(Mat<Real>::Zero(p.tensor->rows(), p.tensor->cols()));
        }
        return s;
    }
};

// Bias-corrected Adam with decoupled weight decay: p -= lr (m_hat / (sqrt(v_hat) + eps) + wd p).
template <typename Real>
void adamw_step(const std::vector<ParamRef<Real>>& params, const std::vector<ParamRef<Real>>& grads,
                OptimState<Real>& s) {
    require_shape(params.size() == grads.size() && params.size() == s.m.size(), "adamw_step: parameter list mismatch");
    for (std::size_t i = 0; i < grads.size(); ++i)
        if (!grads[i].tensor->allFinite()) throw NumericError("adamw_step: non-finite gradient", params[i].name);
    ++s.step;
    const double bc1 = 1.0 - std::pow(s.beta1, double(s.step));
    const double bc2 = 1.0 - std::pow(s.beta2, double(s.step));
    const Real b1 = Real(s.beta1), b2 = Real(s.beta2);
    for (std::size_t i = 0; i < params.size(); ++i) {
        Mat<Real>& p = *params[i].tensor;
        const Mat<Real>& g = *grads[i].tensor;
        require_shape(p.rows() == g.rows() && p.cols() == g.cols(), "adamw_step: shape mismatch for " + params[i].name);
        Mat<Real>& m = s.m[i];
        Mat<Real>& v = s.v[i];
        for (Index k = 0; k < p.size(); ++k) {
            const Real gk = g.data()[k];
            m.data()[k] = b1 * m.data()[k] + (Real(1) - b1) * gk;
            v.data()[k] = b2 * v.data()[k] + (Real(1) - b2) * gk * gk;
            const double m_hat = double(m.data()[k]) / bc1;
            const double v_hat = double(v.data()[k]) / bc2;
            const double update = m_hat / (std::sqrt(v_hat) + s.eps) + s.weight_decay * double(p.data()[k]);
            p.data()[k] = Real(double(p.data()[k]) - s.lr * update);
        }
    }
}

// Scales all gradients so their global L2 norm is at most max_norm. Returns the norm before clipping.
template <typename Real>
double clip_grad_norm(const std::vector<ParamRef<Real>>& grads, double max_norm) {
    double sq = 0.0;
    for (const auto& g : grads) sq += g.tensor->template cast<double>().squaredNorm();
    const double norm = std::sqrt(sq);
    if (max_norm > 0 && norm > max_norm)
        for (const auto& g : grads) *g.tensor *= Real(max_norm / norm);
    return norm;
}

// ---------------------------------------------------------------------------
// EMA

template <typename Real>
struct EmaState {
    std::vector<Mat<Real>> shadow;
    double decay = 0.999;

    static EmaState init(const std::vector<ParamRef<Real>>& params, double decay) {
        EmaState e;
        e.decay = decay;
        for (const auto& p : params) e.shadow.push_back(*p.tensor);
        return e;
    }
};

// shadow <- decay * shadow + (1 - decay) * params
template <typename Real>
void ema_update(EmaState<Real>& ema, const std::vector<ParamRef<Real>>& params) {
    require_shape(ema.shadow.size() == params.size(), "ema_update: parameter list mismatch");
    const Real b = Real(ema.decay);
    for (std::size_t i = 0; i < params.size(); ++i) ema.shadow[i] = b * ema.shadow[i] + (Real(1) - b) * *params[i].tensor;
}

template <typename Real>
void copy_shadow(const EmaState<Real>& ema, NetworkParams<Real>& out) {
    auto refs = param_refs(out);
    for (std::size_t i = 0; i < refs.size(); ++i) *refs[i].tensor = ema.shadow[i];
}

// ---------------------------------------------------------------------------
// Synthetic datasets (pixel space, values in [-1, 1])

enum class DatasetKind { gauss_blobs, two_moons_image, checker_image };

inline DatasetKind dataset_from_name(const std::string& s) {
    if (s == "gauss_blobs") return DatasetKind::gauss_blobs;
    if (s == "two_moons_image") return DatasetKind::two_moons_image;
    if (s == "checker_image") return DatasetKind::checker_image;
    throw InvalidArgument("unknown dataset generator '" + s + "'");
}

struct ToyDataset {
    DatasetKind kind = DatasetKind::gauss_blobs;
    Index height = 8;
    Index width = 8;
    std::uint64_t seed = 1234;
};

namespace detail {

template <typename Real>
void render_bump(Real* row, Index h, Index w, double cy, double cx, double sigma) {
    for (Index r = 0; r < h; ++r)
        for (Index c = 0; c < w; ++c) {
            const double d2 = (r - cy) * (r - cy) + (c - cx) * (c - cx);
            row[r * w + c] = Real(2.0 * std::exp(-d2 / (2.0 * sigma * sigma)) - 1.0);
        }
}

}  // namespace detail

// n x (height*width). Deterministic given the seed.
template <typename Real>
Mat<Real> generate_dataset(const ToyDataset& spec, Index n) {
    require(spec.height >= 1 && spec.width >= 1, "generate_dataset: grid must be at least 1x1");
    require(n >= 0, "generate_dataset: n must be >= 0");
    const Index h = spec.height, w = spec.width;
    const double scale = std::max(h, w) / 8.0;
    std::mt19937_64 rng(spec.seed);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    Mat<Real> out(n, h * w);
    for (Index i = 0; i < n; ++i) {
        Real* row = out.row(i).data();
        switch (spec.kind) {
            case DatasetKind::gauss_blobs: {
                const double cy = unit(rng) * (h - 1), cx = unit(rng) * (w - 1);
                const double sigma = (0.8 + 1.2 * unit(rng)) * scale;
                detail::render_bump(row, h, w, cy, cx, sigma);
                break;
            }
            case DatasetKind::two_moons_image: {
                std::normal_distribution<double> noise(0.0, 0.08);
                const double theta = std::numbers::pi * unit(rng);
                const bool upper = unit(rng) < 0.5;
                double x = upper ? std::cos(theta) : 1.0 - std::cos(theta);
                double y = upper ? std::sin(theta) : 0.5 - std::sin(theta);
                x += noise(rng);
                y += noise(rng);
                // x in about [-1.2, 2.2], y in about [-0.7, 1.2]
                const double cx = std::clamp((x + 1.2) / 3.4, 0.0, 1.0) * (w - 1);
                const double cy = std::clamp(1.0 - (y + 0.7) / 1.9, 0.0, 1.0) * (h - 1);
                detail::render_bump(row, h, w, cy, cx, 0.9 * scale);
                break;
            }
            case DatasetKind::checker_image: {
                const Index max_cell = std::max<Index>(1, std::min(h, w) / 2);
                const Index cell = 1 + Index(unit(rng) * max_cell) % max_cell;
                const Index oy = Index(unit(rng) * cell), ox = Index(unit(rng) * cell);
                const double contrast = 0.5 + 0.5 * unit(rng);
                for (Index r = 0; r < h; ++r)
                    for (Index c = 0; c < w; ++c) {
                        const bool on = (((r + oy) / cell) + ((c + ox) / cell)) % 2 == 0;
                        row[r * w + c] = Real(on ? contrast : -contrast);
                    }
                break;
            }
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Metrics

struct Metrics {
    double energy_distance = 0.0;
    double mean_gap = 0.0;
    double cov_gap = 0.0;
};

namespace detail {

inline double mean_pairwise_distance(const Eigen::MatrixXd& a, const Eigen::MatrixXd& b, bool same) {
    double acc = 0.0;
    for (Index i = 0; i < a.rows(); ++i)
        for (Index j = same ? i + 1 : 0; j < b.rows(); ++j) acc += (a.row(i) - b.row(j)).norm();
    if (same) return 2.0 * acc / (double(a.rows()) * double(a.rows() - 1));
    return acc / (double(a.rows()) * double(b.rows()));
}

inline Eigen::MatrixXd covariance(const Eigen::MatrixXd& x) {
    const Eigen::MatrixXd centered = x.rowwise() - x.colwise().mean();
    return centered.transpose() * centered / double(x.rows() - 1);
}

}  // namespace detail

// Energy distance 2E|X-Y| - E|X-X'| - E|Y-Y'| with U-statistic within-sample terms,
// mean gap |mu_x - mu_y|, and Frobenius gap of the sample covariances.
template <typename Real>
Metrics eval_metrics(const Mat<Real>& generated, const Mat<Real>& held_out) {
    require(generated.rows() >= 2 && held_out.rows() >= 2, "eval_metrics: need at least 2 samples per set");
    require_shape(generated.cols() == held_out.cols(), "eval_metrics: dimension mismatch");
    const Eigen::MatrixXd x = generated.template cast<double>();
    const Eigen::MatrixXd y = held_out.template cast<double>();
    Metrics m;
    m.energy_distance = 2.0 * detail::mean_pairwise_distance(x, y, false) - detail::mean_pairwise_distance(x, x, true) -
                        detail::mean_pairwise_distance(y, y, true);
    m.mean_gap = (x.colwise().mean() - y.colwise().mean()).norm();
    m.cov_gap = (detail::covariance(x) - detail::covariance(y)).norm();
    return m;
}

// ---------------------------------------------------------------------------
// Batched loss + gradient over the network

inline int worker_threads() {
    if (const char* env = std::getenv("ARC_THREADS")) {
        const int n = std::atoi(env);
        if (n >= 1) return n;
    }
    return std::max(1u, std::thread::hardware_concurrency());
}

// Runs fn(i) for i in [0, n) on up to `threads` workers; each index runs exactly once.
template <typename F>
void parallel_for(Index n, int threads, F&& fn) {
    threads = std::max(1, std::min<int>(threads, int(n)));
    if (threads <= 1) {
        for (Index i = 0; i < n; ++i) fn(i);
        return;
    }
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errors(threads);
    for (int w = 0; w < threads; ++w) {
        pool.emplace_back([&, w] {
            try {
                for (Index i = w; i < n; i += threads) fn(i);
            } catch (...) {
                errors[w] = std::current_exception();
            }
        });
    }
    for (auto& t : pool) t.join();
    for (auto& e : errors)
        if (e) std::rethrow_exception(e);
}

template <typename Real>
struct BatchResult {
    double loss = 0.0;
    NetworkParams<Real> grads;
};

// CFM loss and parameter gradients on fixed path samples. Per-sample gradients are
// reduced in batch order so the result does not depend on the thread count.
template <typename Real>
BatchResult<Real> cfm_batch_gradient(const std::vector<PathSample<Real>>& paths, const NetworkParams<Real>& params,
                                     const ChainLayout& layout, int threads) {
    const Index n = Index(paths.size());
    std::vector<Mat<Real>> preds(n);
    std::vector<ChainCache<Real>> caches(n);
    parallel_for(n, threads, [&](Index i) {
        auto r = chain_forward(paths[i].x_t, Real(paths[i].t), params, layout);
        preds[i] = std::move(r.v);
        caches[i] = std::move(r.cache);
    });
    const CfmLoss<Real> loss = cfm_loss_from_predictions(paths, preds);
    std::vector<NetworkParams<Real>> per_sample(n);
    parallel_for(n, threads, [&](Index i) {
        per_sample[i] = chain_backward(loss.g_pred[i], caches[i], params, layout).params;
        caches[i] = {};
    });
    BatchResult<Real> out;
    out.loss = loss.loss;
    out.grads = std::move(per_sample[0]);
    auto total = out.grads.entries();
    for (Index i = 1; i < n; ++i) {
        auto part = per_sample[i].entries();
        for (std::size_t k = 0; k < total.size(); ++k) *total[k].tensor += *part[k].tensor;
    }
    return out;
}

template <typename Real>
double cfm_eval_loss(const std::vector<PathSample<Real>>& paths, const NetworkParams<Real>& params,
                     const ChainLayout& layout, int threads) {
    std::vector<Mat<Real>> preds(paths.size());
    parallel_for(Index(paths.size()), threads,
                 [&](Index i) { preds[i] = chain_forward(paths[i].x_t, Real(paths[i].t), params, layout).v; });
    return cfm_loss_from_predictions(paths, preds).loss;
}

// n samples (n x T) from seeded N(0, I) noise integrated through the network's field.
template <typename Real>
std::pair<Mat<Real>, int> generate_samples(const NetworkParams<Real>& params, const ChainLayout& layout,
                                           const SamplerConfig& sampler, Index n, std::uint64_t seed, int threads) {
    const Index T = layout.cfg.tokens();
    std::mt19937_64 rng(seed);
    std::vector<Mat<Real>> noise;
    for (Index i = 0; i < n; ++i) noise.push_back(standard_normal<Real>(T, 1, rng));
    Mat<Real> out(n, T);
    std::vector<int> nfe(n, 0);
    const NetworkModel<Real> model{&params, &layout};
    parallel_for(n, threads, [&](Index i) {
        auto r = integrate<Real>(model, noise[i], sampler);
        out.row(i) = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(r.x.data(), T);
        nfe[i] = r.nfe;
    });
    int total = 0;
    for (int v : nfe) total += v;
    return {out, n > 0 ? total / int(n) : 0};
}

// ---------------------------------------------------------------------------
// Experiment

struct MetricsRow {
    std::int64_t step = 0;
    double loss = 0.0;
    double ema_loss = 0.0;
    std::optional<Metrics> metrics;
    int nfe = 0;
    double wallclock_s = 0.0;
};

inline const char* kMetricsHeader = "step,loss,ema_loss,energy_distance,mean_gap,cov_gap,nfe,wallclock_s";

inline std::string format_metrics_row(const MetricsRow& r) {
    char buf[512];
    if (r.metrics) {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%d,%.3f", static_cast<long long>(r.step), r.loss,
                      r.ema_loss, r.metrics->energy_distance, r.metrics->mean_gap, r.metrics->cov_gap, r.nfe,
                      r.wallclock_s);
    } else {
        std::snprintf(buf, sizeof(buf), "%lld,%.9g,%.9g,,,,,%.3f", static_cast<long long>(r.step), r.loss, r.ema_loss,
                      r.wallclock_s);
    }
    return buf;
}

struct RunOptions {
    int threads = 1;
    // When false the wallclock_s column is written as 0 so metrics.csv is byte-reproducible.
    bool record_wallclock = false;
    std::function<void(const MetricsRow&)> on_row;
};

template <typename Real>
struct ExperimentResult {
    std::vector<MetricsRow> rows;
    std::vector<double> loss_history;  // training loss per step
    NetworkParams<Real> params;
    NetworkParams<Real> ema_params;
    Mat<Real> samples;
    Metrics final_metrics;
    std::string budget_hash;
    Index parameter_count = 0;
};

// Mean of the first and last `window` entries of the loss history.
inline std::pair<double, double> smoothed_loss_endpoints(const std::vector<double>& history, std::size_t window) {
    require(!history.empty(), "smoothed_loss_endpoints: empty history");
    window = std::max<std::size_t>(1, std::min(window, history.size()));
    double first = 0, last = 0;
    for (std::size_t i = 0; i < window; ++i) {
        first += history[i];
        last += history[history.size() - 1 - i];
    }
    return {first / double(window), last / double(window)};
}

inline std::size_t default_smoothing_window(std::size_t steps) { return std::max<std::size_t>(1, steps / 50); }

// Independent RNG streams derived from the run seed.
inline std::uint64_t stream_seed(std::uint64_t seed, std::uint64_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                      static_cast<std::uint32_t>(stream)};
    std::uint32_t out[2];
    seq.generate(out, out + 2);
    return (std::uint64_t(out[0]) << 32) | out[1];
}

template <typename Real>
ExperimentResult<Real> run_experiment(const ExperimentConfig& cfg, const RunOptions& opts = {}) {
    cfg.validate();
    const auto t_start = std::chrono::steady_clock::now();
    const ChainLayout layout(cfg.network);
    const InterpolantSchedule schedule{cfg.schedule};
    SamplerConfig sampler = cfg.sampler;
    sampler.t_eps = cfg.t_eps;
    const auto& tc = cfg.trainer;

    const DatasetKind kind = dataset_from_name(cfg.data.generator);
    const Mat<Real> train = generate_dataset<Real>({kind, cfg.data.height, cfg.data.width, cfg.data.seed}, cfg.data.n_train);
    const Mat<Real> held_out =
        generate_dataset<Real>({kind, cfg.data.height, cfg.data.width, cfg.data.seed + 1}, cfg.data.n_heldout);
    const Index T = cfg.network.tokens();
    auto as_tokens = [&](const Mat<Real>& set, Index i) {
        Mat<Real> z(T, 1);
        z.col(0) = set.row(i).transpose();
        return z;
    };

    std::mt19937_64 init_rng(stream_seed(cfg.seed, 1));
    std::mt19937_64 batch_rng(stream_seed(cfg.seed, 2));
    std::mt19937_64 path_rng(stream_seed(cfg.seed, 3));
    std::mt19937_64 eval_rng(stream_seed(cfg.data.seed, 4));

    ExperimentResult<Real> res;
    res.params = init_network<Real>(cfg.network, init_rng);
    res.parameter_count = res.params.count();
    res.budget_hash = cfg.budget_hash();
    auto refs = param_refs(res.params);
    OptimState<Real> opt = OptimState<Real>::init(refs);
    opt.lr = tc.lr;
    opt.beta1 = tc.beta1;
    opt.beta2 = tc.beta2;
    opt.eps = tc.adam_eps;
    opt.weight_decay = tc.weight_decay;
    EmaState<Real> ema = EmaState<Real>::init(refs, tc.ema_decay);

    // Fixed evaluation paths shared by every run on the same data.
    std::vector<Mat<Real>> eval_z;
    for (Index i = 0; i < std::min<Index>(tc.eval_batch, held_out.rows()); ++i) eval_z.push_back(as_tokens(held_out, i));
    const auto eval_paths = sample_paths(eval_z, schedule, cfg.t_eps, eval_rng);

    std::uniform_int_distribution<Index> pick(0, train.rows() - 1);
    res.ema_params = res.params;
    auto elapsed = [&] {
        if (!opts.record_wallclock) return 0.0;
        return std::chrono::duration<double>(std::chrono::steady_clock::now() - t_start).count();
    };
    auto evaluate_samples = [&](MetricsRow& row) {
        auto [samples, nfe] = generate_samples(res.ema_params, layout, sampler, tc.n_eval, stream_seed(cfg.seed, 5), opts.threads);
        row.metrics = eval_metrics(samples, held_out);
        row.nfe = nfe;
        res.samples = std::move(samples);
        res.final_metrics = *row.metrics;
    };

    for (std::int64_t step = 1; step <= tc.steps; ++step) {
        std::vector<Mat<Real>> batch;
        for (std::int64_t b = 0; b < tc.batch; ++b) batch.push_back(as_tokens(train, pick(batch_rng)));
        const auto paths = sample_paths(batch, schedule, cfg.t_eps, path_rng);
        BatchResult<Real> br;
        try {
            br = cfm_batch_gradient(paths, res.params, layout, opts.threads);
            auto grefs = param_refs(br.grads);
            if (tc.grad_clip > 0) clip_grad_norm(grefs, tc.grad_clip);
            adamw_step(refs, grefs, opt);
        } catch (const NumericError& e) {
            throw NumericError(e.what(), "step " + std::to_string(step) + ", arcee=" + (cfg.network.arcee_enabled ? "on" : "off"));
        }
        ema_update(ema, refs);
        res.loss_history.push_back(br.loss);

        const bool log_now = step % tc.log_every == 0 || step == tc.steps;
        const bool eval_now = step == tc.steps || (tc.eval_every > 0 && step % tc.eval_every == 0);
        if (log_now || eval_now) {
            copy_shadow(ema, res.ema_params);
            MetricsRow row;
            row.step = step;
            row.loss = br.loss;
            row.ema_loss = cfm_eval_loss(eval_paths, res.ema_params, layout, opts.threads);
            if (eval_now) evaluate_samples(row);
            row.wallclock_s = elapsed();
            res.rows.push_back(row);
            if (opts.on_row) opts.on_row(row);
        }
    }
    if (tc.steps == 0) {
        MetricsRow row;
        row.ema_loss = cfm_eval_loss(eval_paths, res.ema_params, layout, opts.threads);
        evaluate_samples(row);
        res.rows.push_back(row);
    }
    return res;
}

}  // namespace arcee
