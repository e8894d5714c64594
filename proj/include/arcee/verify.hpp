#pragma once

// Invariant suites behind `arcee_cli verify`. Each check reports a measured
// value against a threshold; all run at float64 with fixed seeds.

#include "arcee/flow_matching.hpp"
#include "arcee/network.hpp"
#include "arcee/ode_sampler.hpp"
#include "arcee/scan_engine.hpp"

#include <functional>
#include <map>
#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace arcee {

struct CheckResult {
    std::string suite;
    std::string name;
    double value = 0.0;
    double threshold = 0.0;
    bool pass = false;
};

using SuiteReport = std::vector<CheckResult>;

namespace verify_detail {

inline Mat<double> uniform(std::mt19937_64& rng, Index r, Index c, double lo, double hi) {
    std::uniform_real_distribution<double> d(lo, hi);
    Mat<double> m(r, c);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = d(rng);
    return m;
}

inline SelectiveInputs<double> random_scan(std::mt19937_64& rng, Index T, Index di, Index ds) {
    return make_selective_inputs<double>(uniform(rng, T, di * ds, 0.3, 0.99), uniform(rng, T, di * ds, -1, 1),
                                         uniform(rng, T, ds, -1, 1), uniform(rng, 1, di, -1, 1),
                                         uniform(rng, T, di, -1, 1));
}

inline BoundaryState<double> random_state(std::mt19937_64& rng, Index di, Index ds) {
    return {uniform(rng, di, ds, -1, 1), 0};
}

inline CheckResult at_most(const std::string& suite, const std::string& name, double value, double threshold) {
    return {suite, name, value, threshold, value <= threshold};
}

inline NetworkConfig tiny_config(bool arcee) {
    NetworkConfig cfg;
    cfg.depth = 2;
    cfg.d_model = 4;
    cfg.expand = 2;
    cfg.d_state = 3;
    cfg.height = 2;
    cfg.width = 3;
    cfg.time_freq_dim = 4;
    cfg.time_hidden = 4;
    cfg.scan_chunk = 2;
    cfg.arcee_enabled = arcee;
    return cfg;
}

inline NetworkParams<double> perturbed_network(const NetworkConfig& cfg, std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    auto p = init_network<double>(cfg, rng);
    std::uniform_real_distribution<double> d(-0.3, 0.3);
    for (auto& e : p.entries()) {
        if (e.name.find("a_log") != std::string::npos || e.name.find("delta_bias") != std::string::npos) continue;
        for (Index k = 0; k < e.tensor->size(); ++k) e.tensor->data()[k] += d(rng);
    }
    return p;
}

}  // namespace verify_detail

inline SuiteReport verify_scan() {
    using namespace verify_detail;
    std::mt19937_64 rng(101);
    double oracle = 0, prefix = 0;
    for (int trial = 0; trial < 100; ++trial) {
        std::uniform_int_distribution<Index> Td(1, 64), Dd(1, 8);
        const Index T = Td(rng), di = Dd(rng), ds = Dd(rng);
        const auto in = random_scan(rng, T, di, ds);
        const auto h0 = random_state(rng, di, ds);
        const auto seq = scan_forward_seq(in, h0);
        const auto ref = scan_oracle_unrolled(in, h0);
        oracle = std::max({oracle, rel_error(seq.y, ref.y), rel_error(seq.h_terminal.h, ref.h_terminal.h)});
        for (Index chunk : {Index(1), Index(2), Index(3), Index(7), T}) {
            const auto pre = scan_forward_prefix(in, h0, chunk);
            prefix = std::max({prefix, rel_error(pre.y, seq.y), rel_error(pre.h_terminal.h, seq.h_terminal.h)});
        }
    }
    return {at_most("scan", "sequential vs unrolled oracle", oracle, 1e-10),
            at_most("scan", "chunked prefix vs sequential", prefix, 1e-10)};
}

inline SuiteReport verify_gradients() {
    using namespace verify_detail;
    SuiteReport out;
    std::mt19937_64 rng(202);
    double scan_err = 0;
    for (Readout r : {Readout::pre, Readout::post}) {
        auto in = random_scan(rng, 9, 2, 3);
        auto h0 = random_state(rng, 2, 3);
        const Mat<double> wy = uniform(rng, 9, 2, -1, 1), wh = uniform(rng, 2, 3, -1, 1);
        auto loss = [&] {
            in.refresh_b_bar_u();
            const auto o = scan_forward_seq(in, h0, r);
            return (o.y.array() * wy.array()).sum() + (o.h_terminal.h.array() * wh.array()).sum();
        };
        const auto g = scan_backward(in, h0, wy, AdjointSeed<double>{wh}, r, 4);
        scan_err = std::max(scan_err, rel_error(g.h0, central_difference_gradient<double>(loss, h0.h, 1e-6)));
        scan_err = std::max(scan_err, rel_error(g.a_bar, central_difference_gradient<double>(loss, in.a_bar, 1e-6)));
        scan_err = std::max(scan_err, rel_error(g.c, central_difference_gradient<double>(loss, in.c, 1e-6)));
        scan_err = std::max(scan_err, rel_error(g.d_skip, central_difference_gradient<double>(loss, in.d_skip, 1e-6)));
    }
    out.push_back(at_most("gradients", "scan_backward with terminal seed", scan_err, 1e-5));

    for (bool arcee : {true, false}) {
        const auto cfg = tiny_config(arcee);
        auto p = perturbed_network(cfg, 303);
        const ChainLayout layout(cfg);
        Mat<double> x = uniform(rng, cfg.tokens(), 1, -1, 1);
        const Mat<double> w = uniform(rng, cfg.tokens(), 1, -1, 1);
        auto loss = [&] { return (chain_forward(x, 0.3, p, layout).v.array() * w.array()).sum(); };
        const auto fwd = chain_forward(x, 0.3, p, layout);
        auto g = chain_backward(w, fwd.cache, p, layout);
        auto analytic = g.params.entries();
        auto params = p.entries();
        double err = 0;
        for (std::size_t i = 0; i < params.size(); ++i)
            err = std::max(err, rel_error(*analytic[i].tensor, central_difference_gradient<double>(loss, *params[i].tensor, 1e-6)));
        err = std::max(err, rel_error(g.g_tokens, central_difference_gradient<double>(loss, x, 1e-6)));
        out.push_back(at_most("gradients", std::string("chain_backward, arcee ") + (arcee ? "on" : "off"), err, 1e-5));
    }
    return out;
}

inline SuiteReport verify_jacobian() {
    using namespace verify_detail;
    std::mt19937_64 rng(404);
    double upper = 0;
    for (Readout r : {Readout::pre, Readout::post}) {
        const Index T = 8, di = 2, ds = 3;
        const auto in = random_scan(rng, T, di, ds);
        const auto h0 = random_state(rng, di, ds);
        const Mat<double> J = jacobian_numeric(in, h0, JacobianWrt::u, r);
        for (Index s = 0; s < T; ++s)
            for (Index t = s + 1; t < T; ++t)
                for (Index i = 0; i < di; ++i)
                    for (Index j = 0; j < di; ++j) upper = std::max(upper, std::abs(J(s * di + i, t * di + j)));
    }
    return {at_most("jacobian", "max |dy_s/du_t| for t > s", upper, 1e-8)};
}

inline SuiteReport verify_rank() {
    using namespace verify_detail;
    NetworkConfig cfg = tiny_config(true);
    cfg.d_model = 2;
    cfg.expand = 1;
    cfg.height = 2;
    cfg.width = 4;
    const Index bound = cfg.d_inner() * cfg.d_state;
    const auto p = perturbed_network(cfg, 505);
    std::mt19937_64 rng(506);
    const Mat<double> x = uniform(rng, cfg.tokens(), 1, -1, 1);
    const Index on = cross_block_rank_probe<double>(x, 0.4, p, ChainLayout(cfg), 1);
    NetworkConfig off = cfg;
    off.arcee_enabled = false;
    const Index none = cross_block_rank_probe<double>(x, 0.4, p, ChainLayout(off), 1);
    return {{"rank", "boundary path rank <= d_inner*d_state (T*d_model = 16)", double(on), double(bound), on >= 1 && on <= bound},
            at_most("rank", "boundary path rank, arcee off", double(none), 0.0)};
}

inline SuiteReport verify_schedule() {
    using verify_detail::at_most;
    double vp = 0, target = 0;
    std::mt19937_64 rng(606);
    const InterpolantSchedule sched;
    for (int i = 0; i <= 100; ++i) {
        const double t = i / 100.0;
        const auto s = sched(t);
        vp = std::max(vp, std::abs(s.alpha * s.alpha + s.sigma * s.sigma - 1.0));
        if (t < 1.0) {
            const Mat<double> z = verify_detail::uniform(rng, 4, 1, -1, 1), eps = verify_detail::uniform(rng, 4, 1, -2, 2);
            const auto path = make_path_sample(z, eps, t, sched);
            target = std::max(target, (path.target - (s.alpha_dot * z + s.sigma_dot * eps)).cwiseAbs().maxCoeff());
        }
    }
    const auto s0 = sched(0.0), s1 = sched(1.0);
    const double ends = std::abs(s0.alpha) + std::abs(s0.sigma - 1) + std::abs(s1.alpha - 1) + std::abs(s1.sigma);
    return {at_most("schedule", "boundary values exact", ends, 0.0), at_most("schedule", "alpha^2 + sigma^2 = 1", vp, 1e-12),
            at_most("schedule", "target forms agree", target, 1e-12)};
}

inline SuiteReport verify_sampler() {
    using verify_detail::at_most;
    const Mat<double> x0 = Mat<double>::Ones(1, 1);
    auto decay = [](const Mat<double>& x, double) { return Mat<double>(-x); };
    auto err = [&](int n) { return std::abs(integrate_rk4<double>(decay, x0, 0.0, 1.0, n).x(0, 0) - std::exp(-1.0)); };
    const double ratio = err(10) / err(20);
    auto zero = [](const Mat<double>& x, double) { return Mat<double>::Zero(x.rows(), x.cols()).eval(); };
    const double ident = (integrate(zero, x0, SamplerConfig{}).x - x0).cwiseAbs().maxCoeff();

    std::mt19937_64 rng(707);
    const Mat<double> z = verify_detail::uniform(rng, 8, 1, -1, 1);
    const Mat<double> eps = standard_normal<double>(8, 1, rng);
    auto field = [&](const Mat<double>& x, double t) { return conditional_vf(x, z, t, InterpolantSchedule{}); };
    SamplerConfig dp;
    dp.method = SamplerMethod::dopri5_adaptive;
    dp.rtol = dp.atol = 1e-8;
    dp.t_eps = 1e-4;
    const double transport = (integrate(field, eps, dp).x - z).cwiseAbs().maxCoeff();
    return {{"sampler", "rk4 halving factor in [12, 20]", ratio, 16.0, ratio >= 12.0 && ratio <= 20.0},
            at_most("sampler", "zero field identity", ident, 0.0),
            at_most("sampler", "conditional transport to z", transport, 1e-3)};
}

inline const std::map<std::string, std::function<SuiteReport()>>& verify_suites() {
    static const std::map<std::string, std::function<SuiteReport()>> suites = {
        {"scan", verify_scan},     {"gradients", verify_gradients}, {"jacobian", verify_jacobian},
        {"rank", verify_rank},     {"schedule", verify_schedule},   {"sampler", verify_sampler}};
    return suites;
}

}  // namespace arcee
