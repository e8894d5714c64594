#include "arcee/arcee.hpp"
#include "arcee/verify.hpp"

#include "CLI11.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

namespace fs = std::filesystem;
using namespace arcee;

namespace {

struct Overrides {
    std::string arcee;  // "", "on", "off"
    std::string sampler;
    int nfe = 0;
    std::int64_t seed = -1;
};

void apply(const Overrides& o, ExperimentConfig& cfg) {
    if (!o.arcee.empty()) cfg.network.arcee_enabled = o.arcee == "on";
    if (!o.sampler.empty()) cfg.sampler.method = sampler_from_name(o.sampler);
    if (o.nfe > 0) cfg.sampler.nfe_budget = o.nfe;
    if (o.seed >= 0) cfg.seed = static_cast<std::uint64_t>(o.seed);
    cfg.validate();
}

void write_text(const fs::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write '" + path.string() + "'");
    out << text;
}

template <typename Real>
void write_samples(const fs::path& dir, const Mat<Real>& samples, const ExperimentConfig& cfg) {
    save_tensor<Real>((dir / "samples.arc").string(), {samples.rows(), cfg.data.height, cfg.data.width}, samples.data());
    std::ofstream pgm(dir / "samples.pgm", std::ios::binary);
    write_pgm(pgm, make_image_grid(samples, cfg.data.height, cfg.data.width));
}

int cmd_verify(const std::string& suite) {
    std::vector<std::string> names;
    if (suite == "all")
        for (const auto& [name, fn] : verify_suites()) names.push_back(name);
    else
        names.push_back(suite);
    bool ok = true;
    std::printf("%-10s %-55s %14s %12s  %s\n", "suite", "check", "value", "threshold", "result");
    for (const auto& name : names) {
        SuiteReport report;
        try {
            report = verify_suites().at(name)();
        } catch (const std::exception& e) {
            std::printf("%-10s %-55s %14s %12s  ERROR %s\n", name.c_str(), "(suite aborted)", "-", "-", e.what());
            return 1;
        }
        for (const auto& r : report) {
            std::printf("%-10s %-55s %14.6g %12.3g  %s\n", r.suite.c_str(), r.name.c_str(), r.value, r.threshold,
                        r.pass ? "PASS" : "FAIL");
            ok = ok && r.pass;
        }
    }
    return ok ? 0 : 1;
}

template <typename Real>
int train(const ExperimentConfig& cfg, const fs::path& out_dir) {
    fs::create_directories(out_dir);
    write_text(out_dir / "config.toml", cfg.canonical());
    std::ofstream csv(out_dir / "metrics.csv", std::ios::binary);
    csv << kMetricsHeader << '\n';
    RunOptions opts;
    opts.threads = worker_threads();
    opts.on_row = [&](const MetricsRow& row) {
        csv << format_metrics_row(row) << '\n';
        csv.flush();
    };
    auto res = run_experiment<Real>(cfg, opts);
    save_checkpoint((out_dir / "checkpoint.arc").string(), res.params);
    save_checkpoint((out_dir / "ema_checkpoint.arc").string(), res.ema_params);
    write_samples(out_dir, res.samples, cfg);
    std::printf("trained %lld steps, %lld parameters, config %s, budget %s\n",
                static_cast<long long>(cfg.trainer.steps), static_cast<long long>(res.parameter_count),
                cfg.hash().c_str(), res.budget_hash.c_str());
    std::printf("energy_distance %.6g mean_gap %.6g cov_gap %.6g\n", res.final_metrics.energy_distance,
                res.final_metrics.mean_gap, res.final_metrics.cov_gap);
    return 0;
}

template <typename Real>
int sample(const ExperimentConfig& cfg, const std::string& checkpoint, Index n, const fs::path& out_dir) {
    auto params = NetworkParams<Real>::zeros(cfg.network);
    load_checkpoint(checkpoint, params);
    SamplerConfig sampler = cfg.sampler;
    sampler.t_eps = cfg.t_eps;
    const ChainLayout layout(cfg.network);
    auto [samples, nfe] = generate_samples(params, layout, sampler, n, stream_seed(cfg.seed, 5), worker_threads());
    fs::create_directories(out_dir);
    write_samples(out_dir, samples, cfg);
    std::printf("wrote %lld samples (%s, mean nfe %d) to %s\n", static_cast<long long>(n), sampler_name(sampler.method),
                nfe, out_dir.string().c_str());
    return 0;
}

template <typename Real>
int ablate(ExperimentConfig cfg, const std::vector<std::int64_t>& ks, const std::vector<std::string>& arcee,
           const fs::path& out_dir) {
    fs::create_directories(out_dir);
    std::ofstream csv(out_dir / "ablation.csv", std::ios::binary);
    csv << "k,arcee,seed,config_hash,budget_hash,parameter_count,loss_first,loss_last,ema_loss,energy_distance,"
           "mean_gap,cov_gap,nfe\n";
    RunOptions opts;
    opts.threads = worker_threads();
    for (auto k : ks) {
        for (const auto& a : arcee) {
            cfg.network.k_orders = int(k);
            cfg.network.arcee_enabled = a == "on";
            cfg.validate();
            const auto res = run_experiment<Real>(cfg, opts);
            const auto [first, last] =
                smoothed_loss_endpoints(res.loss_history, default_smoothing_window(res.loss_history.size()));
            const auto& row = res.rows.back();
            char buf[512];
            std::snprintf(buf, sizeof(buf), "%lld,%s,%llu,%s,%s,%lld,%.9g,%.9g,%.9g,%.9g,%.9g,%.9g,%d\n",
                          static_cast<long long>(k), a.c_str(), static_cast<unsigned long long>(cfg.seed),
                          cfg.hash().c_str(), res.budget_hash.c_str(), static_cast<long long>(res.parameter_count),
                          first, last, row.ema_loss, res.final_metrics.energy_distance, res.final_metrics.mean_gap,
                          res.final_metrics.cov_gap, row.nfe);
            csv << buf;
            csv.flush();
            std::printf("k=%lld arcee=%s energy_distance=%.6g\n", static_cast<long long>(k), a.c_str(),
                        res.final_metrics.energy_distance);
        }
    }
    return 0;
}

template <typename F>
int dispatch(const ExperimentConfig& cfg, F&& f) {
    return cfg.precision == "f64" ? f(double{}) : f(float{});
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Two-port selective-scan flow-matching toolkit"};
    app.require_subcommand(1);
    Overrides ov;
    app.add_option("--arcee", ov.arcee, "Override network.arcee")->check(CLI::IsMember({"on", "off"}));
    app.add_option("--sampler", ov.sampler, "Override sampler.method")->check(CLI::IsMember({"rk4", "dopri5"}));
    app.add_option("--nfe", ov.nfe, "Override sampler.nfe")->check(CLI::PositiveNumber);

    auto* verify = app.add_subcommand("verify", "Run invariant suites");
    std::string suite = "all";
    verify->add_option("--suite", suite)->check(CLI::IsMember({"scan", "gradients", "jacobian", "rank", "schedule", "sampler", "all"}));

    auto* train_cmd = app.add_subcommand("train", "Train one model");
    std::string config_path, out_dir = "run";
    train_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    train_cmd->add_option("--seed", ov.seed);
    train_cmd->add_option("--out-dir", out_dir);

    auto* sample_cmd = app.add_subcommand("sample", "Sample from a checkpoint");
    std::string checkpoint;
    Index n = 64;
    sample_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    sample_cmd->add_option("--checkpoint", checkpoint)->required()->check(CLI::ExistingFile);
    sample_cmd->add_option("-n,--n", n)->check(CLI::PositiveNumber);
    sample_cmd->add_option("--seed", ov.seed);
    sample_cmd->add_option("--out-dir", out_dir);

    auto* ablate_cmd = app.add_subcommand("ablate", "Run the k x arcee grid");
    std::vector<std::int64_t> ks;
    std::vector<std::string> arcee_list = {"on", "off"};
    ablate_cmd->add_option("--config", config_path)->required()->check(CLI::ExistingFile);
    ablate_cmd->add_option("--k", ks, "Scan-order counts (default: config ablate.k)")->delimiter(',');
    ablate_cmd->add_option("--seed", ov.seed);
    ablate_cmd->add_option("--out-dir", out_dir);
    ablate_cmd->add_option("--variants", arcee_list, "Arcee settings to run")->delimiter(',')->check(CLI::IsMember({"on", "off"}));

    CLI11_PARSE(app, argc, argv);

    try {
        if (verify->parsed()) return cmd_verify(suite);
        ExperimentConfig cfg = load_experiment_config(config_path);
        apply(ov, cfg);
        if (train_cmd->parsed()) return dispatch(cfg, [&](auto r) { return train<decltype(r)>(cfg, out_dir); });
        if (sample_cmd->parsed())
            return dispatch(cfg, [&](auto r) { return sample<decltype(r)>(cfg, checkpoint, n, out_dir); });
        if (ablate_cmd->parsed()) {
            if (ks.empty()) ks = cfg.ablate_k;
            if (!ov.arcee.empty()) arcee_list = {ov.arcee};
            return dispatch(cfg, [&](auto r) { return ablate<decltype(r)>(cfg, ks, arcee_list, out_dir); });
        }
    } catch (const ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return 2;
    } catch (const NumericError& e) {
        std::cerr << "numeric error: " << e.what() << '\n';
        return 3;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 0;
}
