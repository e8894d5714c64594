#pragma once

// Mamba-style blocks stacked into a depth chain. With arcee enabled, block l's
// scan starts from boundary_map(h_T of block l-1); block 0 always starts at zero.
//
// Block body (raster token order outside the scan):
//   x_norm = RMSNorm(x + t_embed) * norm_w
//   u = x_norm W_in,   z = x_norm W_z
//   y = unpermute(scan(selective_heads(permute(u)), h0))
//   x_out = x + (y * silu(z)) W_out
//
// Network: tokens (T x channels) -> embed + positional table -> blocks ->
// RMSNorm -> linear head (T x channels). Time enters through sinusoidal
// features and a two-layer SiLU MLP shared by all blocks.

#include "arcee/finite_diff.hpp"
#include "arcee/scan_engine.hpp"
#include "arcee/scan_orders.hpp"
#include "arcee/ssm_core.hpp"

#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace arcee {

enum class BoundaryMap { identity };

inline constexpr double kRmsEps = 1e-6;

template <typename Real>
Mat<Real> apply_boundary_map(BoundaryMap map, const Mat<Real>& h_terminal) {
    switch (map) {
        case BoundaryMap::identity: return h_terminal;
    }
    throw InvalidArgument("unknown boundary map");
}

// J_T^T g for the boundary map.
template <typename Real>
Mat<Real> boundary_map_vjp(BoundaryMap map, const Mat<Real>& g_h0) {
    switch (map) {
        case BoundaryMap::identity: return g_h0;
    }
    throw InvalidArgument("unknown boundary map");
}

struct BlockConfig {
    Index d_model = 64;
    Index d_inner = 128;
    Index d_state = 16;
    Readout readout = Readout::pre;
    ScanRule rule = ScanRule::row_serpentine;
    Index scan_chunk = 16;

    void validate() const {
        require(d_model >= 1 && d_inner >= 1 && d_state >= 1, "BlockConfig: dims must be >= 1");
        require(scan_chunk >= 1, "BlockConfig: scan_chunk must be >= 1");
    }
};

struct NetworkConfig {
    int depth = 6;
    Index d_model = 64;
    Index expand = 2;
    Index d_state = 16;
    Index channels = 1;
    Index height = 8;
    Index width = 8;
    bool arcee_enabled = false;
    BoundaryMap boundary_map = BoundaryMap::identity;
    int k_orders = 1;
    Index time_freq_dim = 32;
    Index time_hidden = 64;
    Readout readout = Readout::pre;
    Index scan_chunk = 16;
    double delta_min = 1e-3;
    double delta_max = 1e1;

    Index tokens() const { return height * width; }
    Index d_inner() const { return expand * d_model; }

    void validate() const {
        require(depth >= 1, "NetworkConfig: depth must be >= 1");
        require(d_model >= 1 && expand >= 1 && d_state >= 1 && channels >= 1,
                "NetworkConfig: dims must be >= 1");
        require(height >= 1 && width >= 1, "NetworkConfig: grid must be at least 1x1");
        require(time_freq_dim >= 2 && time_freq_dim % 2 == 0, "NetworkConfig: time_freq_dim must be even");
        require(time_hidden >= 1, "NetworkConfig: time_hidden must be >= 1");
        require(delta_min > 0 && delta_min <= delta_max, "NetworkConfig: 0 < delta_min <= delta_max");
        assign_orders(depth, k_orders);
    }

    // Every block shares (d_inner, d_state), so the boundary handoff is always shape-compatible.
    std::vector<BlockConfig> blocks() const {
        std::vector<BlockConfig> out;
        for (ScanRule r : assign_orders(depth, k_orders))
            out.push_back({d_model, d_inner(), d_state, readout, r, scan_chunk});
        return out;
    }
};

template <typename Real>
struct BlockParams {
    Mat<Real> norm_w;  // 1 x d_model
    Mat<Real> w_in;    // d_model x d_inner
    Mat<Real> w_z;     // d_model x d_inner
    SsmParams<Real> ssm;
    Mat<Real> w_out;   // d_inner x d_model

    static BlockParams zeros(const BlockConfig& c) {
        return {Mat<Real>::Zero(1, c.d_model), Mat<Real>::Zero(c.d_model, c.d_inner),
                Mat<Real>::Zero(c.d_model, c.d_inner), SsmParams<Real>::zeros(c.d_inner, c.d_state),
                Mat<Real>::Zero(c.d_inner, c.d_model)};
    }

    template <typename F>
    void for_each(const std::string& prefix, F&& f) {
        f(prefix + "norm_w", norm_w);
        f(prefix + "w_in", w_in);
        f(prefix + "w_z", w_z);
        ssm.for_each([&](const char* name, Mat<Real>& m) { f(prefix + "ssm." + name, m); });
        f(prefix + "w_out", w_out);
    }
};

template <typename Real>
struct NetworkParams {
    Mat<Real> w_embed;  // channels x d_model
    Mat<Real> b_embed;  // 1 x d_model
    Mat<Real> pos;      // T x d_model
    Mat<Real> time_w1;  // time_freq_dim x time_hidden
    Mat<Real> time_b1;  // 1 x time_hidden
    Mat<Real> time_w2;  // time_hidden x d_model
    Mat<Real> time_b2;  // 1 x d_model
    std::vector<BlockParams<Real>> blocks;
    Mat<Real> norm_f;   // 1 x d_model
    Mat<Real> w_head;   // d_model x channels
    Mat<Real> b_head;   // 1 x channels

    static NetworkParams zeros(const NetworkConfig& cfg) {
        NetworkParams p;
        const Index dm = cfg.d_model;
        p.w_embed = Mat<Real>::Zero(cfg.channels, dm);
        p.b_embed = Mat<Real>::Zero(1, dm);
        p.pos = Mat<Real>::Zero(cfg.tokens(), dm);
        p.time_w1 = Mat<Real>::Zero(cfg.time_freq_dim, cfg.time_hidden);
        p.time_b1 = Mat<Real>::Zero(1, cfg.time_hidden);
        p.time_w2 = Mat<Real>::Zero(cfg.time_hidden, dm);
        p.time_b2 = Mat<Real>::Zero(1, dm);
        for (const auto& bc : cfg.blocks()) {
            p.blocks.push_back(BlockParams<Real>::zeros(bc));
            p.blocks.back().ssm.delta_min = Real(cfg.delta_min);
            p.blocks.back().ssm.delta_max = Real(cfg.delta_max);
        }
        p.norm_f = Mat<Real>::Zero(1, dm);
        p.w_head = Mat<Real>::Zero(dm, cfg.channels);
        p.b_head = Mat<Real>::Zero(1, cfg.channels);
        return p;
    }

    template <typename F>
    void for_each(F&& f) {
        f(std::string("w_embed"), w_embed);
        f(std::string("b_embed"), b_embed);
        f(std::string("pos"), pos);
        f(std::string("time_w1"), time_w1);
        f(std::string("time_b1"), time_b1);
        f(std::string("time_w2"), time_w2);
        f(std::string("time_b2"), time_b2);
        for (std::size_t l = 0; l < blocks.size(); ++l)
            blocks[l].for_each("blocks." + std::to_string(l) + ".", f);
        f(std::string("norm_f"), norm_f);
        f(std::string("w_head"), w_head);
        f(std::string("b_head"), b_head);
    }

    struct Entry {
        std::string name;
        Mat<Real>* tensor;
    };

    std::vector<Entry> entries() {
        std::vector<Entry> out;
        for_each([&](const std::string& name, Mat<Real>& m) { out.push_back({name, &m}); });
        return out;
    }

    Index count() const {
        Index n = 0;
        const_cast<NetworkParams*>(this)->for_each([&](const std::string&, Mat<Real>& m) { n += m.size(); });
        return n;
    }

    template <typename Other>
    NetworkParams<Other> cast() const {
        NetworkParams<Other> out;
        auto src = const_cast<NetworkParams*>(this)->entries();
        out.blocks.resize(blocks.size());
        auto dst = out.entries();
        for (std::size_t i = 0; i < src.size(); ++i) *dst[i].tensor = src[i].tensor->template cast<Other>();
        for (std::size_t l = 0; l < blocks.size(); ++l) {
            out.blocks[l].ssm.delta_min = Other(blocks[l].ssm.delta_min);
            out.blocks[l].ssm.delta_max = Other(blocks[l].ssm.delta_max);
        }
        return out;
    }
};

template <typename Real>
Index parameter_count(const NetworkConfig& cfg) {
    return NetworkParams<Real>::zeros(cfg).count();
}

template <typename Real, typename Rng>
NetworkParams<Real> init_network(const NetworkConfig& cfg, Rng& rng) {
    cfg.validate();
    NetworkParams<Real> p = NetworkParams<Real>::zeros(cfg);
    auto uniform = [&](Mat<Real>& m, double bound) {
        std::uniform_real_distribution<double> d(-bound, bound);
        for (Index k = 0; k < m.size(); ++k) m.data()[k] = Real(d(rng));
    };
    auto fan = [](Index n) { return 1.0 / std::sqrt(double(n)); };
    uniform(p.w_embed, fan(cfg.channels));
    std::normal_distribution<double> pos_dist(0.0, 0.02);
    for (Index k = 0; k < p.pos.size(); ++k) p.pos.data()[k] = Real(pos_dist(rng));
    uniform(p.time_w1, fan(cfg.time_freq_dim));
    uniform(p.time_w2, fan(cfg.time_hidden));
    const auto bcs = cfg.blocks();
    for (std::size_t l = 0; l < bcs.size(); ++l) {
        auto& b = p.blocks[l];
        b.norm_w.setOnes();
        uniform(b.w_in, fan(cfg.d_model));
        uniform(b.w_z, fan(cfg.d_model));
        b.ssm = init_ssm_params<Real>(bcs[l].d_inner, bcs[l].d_state, rng);
        b.ssm.delta_min = Real(cfg.delta_min);
        b.ssm.delta_max = Real(cfg.delta_max);
        uniform(b.w_out, fan(bcs[l].d_inner) / std::sqrt(double(cfg.depth)));
    }
    p.norm_f.setOnes();
    uniform(p.w_head, fan(cfg.d_model));
    return p;
}

// ---------------------------------------------------------------------------
// RMSNorm

template <typename Real>
struct RmsCache {
    Mat<Real> normalized;  // x / rms, before the gain
    Vec<Real> rms;         // per row
};

template <typename Real>
Mat<Real> rms_norm(const Mat<Real>& x, const Mat<Real>& gain, RmsCache<Real>& cache) {
    cache.rms = ((x.array().square().rowwise().sum() / Real(x.cols())) + Real(kRmsEps)).sqrt().matrix();
    cache.normalized = x.array().colwise() / cache.rms.array();
    return (cache.normalized.array().rowwise() * gain.row(0).array()).matrix();
}

// Returns g_x; accumulates g_gain.
template <typename Real>
Mat<Real> rms_norm_backward(const Mat<Real>& g_out, const Mat<Real>& gain, const RmsCache<Real>& cache,
                            Mat<Real>& g_gain) {
    g_gain += (g_out.array() * cache.normalized.array()).colwise().sum().matrix();
    const Mat<Real> g_n = (g_out.array().rowwise() * gain.row(0).array()).matrix();
    const Vec<Real> proj = (g_n.array() * cache.normalized.array()).rowwise().sum() / Real(g_out.cols());
    Mat<Real> g_x = g_n - (cache.normalized.array().colwise() * proj.array()).matrix();
    g_x.array().colwise() /= cache.rms.array();
    return g_x;
}

// ---------------------------------------------------------------------------
// Block

template <typename Real>
struct BlockCache {
    RmsCache<Real> norm;
    Mat<Real> x_norm;
    Mat<Real> z;
    SelectiveInputs<Real> scan_in;  // in scan order
    BoundaryState<Real> h0;
    ScanOutput<Real> scan_out;
    Mat<Real> y;  // raster order
    Mat<Real> gated;
};

template <typename Real>
struct BlockResult {
    Mat<Real> x_out;
    BoundaryState<Real> h_terminal;
    BlockCache<Real> cache;
};

template <typename Real>
BlockResult<Real> block_forward(const Mat<Real>& x, const Mat<Real>& t_embed, const BoundaryState<Real>& h0,
                                const BlockParams<Real>& p, const BlockConfig& cfg, const ScanOrder& order) {
    cfg.validate();
    require_shape(x.cols() == cfg.d_model, "block_forward: x must be T x d_model");
    require_shape(t_embed.rows() == 1 && t_embed.cols() == cfg.d_model, "block_forward: t_embed must be 1 x d_model");
    require_shape(order.size() == x.rows(), "block_forward: scan order length must equal T");
    BlockResult<Real> r;
    auto& c = r.cache;
    Mat<Real> xt = x;
    xt.rowwise() += t_embed.row(0);
    c.x_norm = rms_norm(xt, p.norm_w, c.norm);
    const Mat<Real> u = c.x_norm * p.w_in;
    c.z.noalias() = c.x_norm * p.w_z;
    c.scan_in = selective_heads(permute_tokens(u, order, PermuteDirection::fwd), p.ssm);
    c.h0 = h0;
    c.scan_out = scan_forward_seq(c.scan_in, h0, cfg.readout, cfg.scan_chunk);
    c.y = permute_tokens(c.scan_out.y, order, PermuteDirection::inv);
    c.gated = (c.y.array() * c.z.unaryExpr([](Real v) { return silu(v); }).array()).matrix();
    r.x_out = x;
    r.x_out.noalias() += c.gated * p.w_out;
    if (!r.x_out.allFinite()) throw NumericError("block_forward: non-finite activation", "block " + std::to_string(h0.block_index));
    r.h_terminal = c.scan_out.h_terminal;
    return r;
}

template <typename Real>
struct BlockGrads {
    Mat<Real> g_x;
    Mat<Real> g_t_embed;  // 1 x d_model
    Mat<Real> g_h0;       // d_inner x d_state
};

// Accumulates parameter gradients into `gp`.
template <typename Real>
BlockGrads<Real> block_backward(const Mat<Real>& g_x_out, const AdjointSeed<Real>& seed, const BlockCache<Real>& c,
                                const BlockParams<Real>& p, const BlockConfig& cfg, const ScanOrder& order,
                                BlockParams<Real>& gp) {
    gp.w_out.noalias() += c.gated.transpose() * g_x_out;
    const Mat<Real> g_gated = g_x_out * p.w_out.transpose();
    const Mat<Real> g_y = (g_gated.array() * c.z.unaryExpr([](Real v) { return silu(v); }).array()).matrix();
    const Mat<Real> g_z =
        (g_gated.array() * c.y.array() * c.z.unaryExpr([](Real v) { return silu_grad(v); }).array()).matrix();

    const Mat<Real> g_y_scan = permute_tokens(g_y, order, PermuteDirection::fwd);
    const SelectiveGrads<Real> sg =
        scan_backward(c.scan_in, c.h0, g_y_scan, seed, cfg.readout, cfg.scan_chunk, &c.scan_out);
    auto [g_ssm, g_u_scan] = selective_heads_backward(p.ssm, c.scan_in, sg);
    gp.ssm.a_log += g_ssm.a_log;
    gp.ssm.d_skip += g_ssm.d_skip;
    gp.ssm.w_b += g_ssm.w_b;
    gp.ssm.w_c += g_ssm.w_c;
    gp.ssm.w_delta += g_ssm.w_delta;
    gp.ssm.delta_bias += g_ssm.delta_bias;
    const Mat<Real> g_u = permute_tokens(g_u_scan, order, PermuteDirection::inv);

    gp.w_in.noalias() += c.x_norm.transpose() * g_u;
    gp.w_z.noalias() += c.x_norm.transpose() * g_z;
    Mat<Real> g_xn = g_u * p.w_in.transpose();
    g_xn.noalias() += g_z * p.w_z.transpose();
    const Mat<Real> g_xt = rms_norm_backward(g_xn, p.norm_w, c.norm, gp.norm_w);

    BlockGrads<Real> out;
    out.g_x = g_x_out + g_xt;
    out.g_t_embed = g_xt.colwise().sum();
    out.g_h0 = sg.h0;
    return out;
}

// ---------------------------------------------------------------------------
// Time embedding

// [cos(1000 t w_j), sin(1000 t w_j)], w_j = 10000^{-j/half}.
template <typename Real>
Mat<Real> time_features(Real t, Index dim) {
    const Index half = dim / 2;
    Mat<Real> f(1, dim);
    for (Index j = 0; j < half; ++j) {
        const double w = std::exp(-std::log(10000.0) * double(j) / double(half));
        const double arg = 1000.0 * double(t) * w;
        f(0, j) = Real(std::cos(arg));
        f(0, half + j) = Real(std::sin(arg));
    }
    return f;
}

// ---------------------------------------------------------------------------
// Chain

template <typename Real>
struct ChainState {
    std::vector<BoundaryState<Real>> initial;   // h^{(l)}(0) as used by block l
    std::vector<BoundaryState<Real>> terminal;  // h^{(l)}_T as returned by block l
};

template <typename Real>
struct ChainCache {
    Mat<Real> tokens;  // T x channels
    Mat<Real> features;
    Mat<Real> time_pre;  // 1 x time_hidden
    Mat<Real> time_hidden;
    Mat<Real> t_embed;
    std::vector<Mat<Real>> block_inputs;
    std::vector<BlockCache<Real>> blocks;
    RmsCache<Real> final_norm;
    Mat<Real> final_normed;
    ChainState<Real> chain;
};

template <typename Real>
struct ChainResult {
    Mat<Real> v;  // T x channels
    ChainCache<Real> cache;
};

// Shape context computed once per configuration.
struct ChainLayout {
    NetworkConfig cfg;
    std::vector<BlockConfig> blocks;
    std::vector<ScanOrder> orders;

    explicit ChainLayout(NetworkConfig c) : cfg(std::move(c)) {
        cfg.validate();
        blocks = cfg.blocks();
        for (const auto& b : blocks) orders.push_back(make_order(b.rule, cfg.height, cfg.width));
    }
};

template <typename Real>
Mat<Real> time_embedding(const NetworkParams<Real>& p, const ChainLayout& layout, Real t, ChainCache<Real>* cache) {
    Mat<Real> features = time_features<Real>(t, layout.cfg.time_freq_dim);
    Mat<Real> pre = features * p.time_w1 + p.time_b1;
    Mat<Real> hidden = pre.unaryExpr([](Real v) { return silu(v); });
    Mat<Real> emb = hidden * p.time_w2 + p.time_b2;
    if (cache) {
        cache->features = std::move(features);
        cache->time_pre = std::move(pre);
        cache->time_hidden = std::move(hidden);
    }
    return emb;
}

template <typename Real>
ChainResult<Real> chain_forward(const Mat<Real>& tokens, Real t, const NetworkParams<Real>& p,
                                const ChainLayout& layout) {
    const NetworkConfig& cfg = layout.cfg;
    require_shape(tokens.rows() == cfg.tokens() && tokens.cols() == cfg.channels,
                  "chain_forward: tokens must be T x channels");
    require(t >= Real(0) && t <= Real(1), "chain_forward: t must lie in [0, 1]");
    ChainResult<Real> r;
    auto& c = r.cache;
    c.tokens = tokens;
    c.t_embed = time_embedding(p, layout, t, &c);
    Mat<Real> x = tokens * p.w_embed;
    x.rowwise() += p.b_embed.row(0);
    x += p.pos;

    const Index di = cfg.d_inner(), ds = cfg.d_state;
    for (int l = 0; l < cfg.depth; ++l) {
        BoundaryState<Real> h0 = BoundaryState<Real>::zeros(di, ds, l);
        if (cfg.arcee_enabled && l > 0) h0.h = apply_boundary_map(cfg.boundary_map, c.chain.terminal.back().h);
        c.block_inputs.push_back(x);
        auto br = block_forward(x, c.t_embed, h0, p.blocks[l], layout.blocks[l], layout.orders[l]);
        x = std::move(br.x_out);
        c.chain.initial.push_back(std::move(h0));
        c.chain.terminal.push_back(std::move(br.h_terminal));
        c.blocks.push_back(std::move(br.cache));
    }
    c.final_normed = rms_norm(x, p.norm_f, c.final_norm);
    r.v = c.final_normed * p.w_head;
    r.v.rowwise() += p.b_head.row(0);
    return r;
}

template <typename Real>
struct ChainGrads {
    NetworkParams<Real> params;
    Mat<Real> g_tokens;
    // seeds[l] is the terminal adjoint handed to block l from block l+1.
    std::vector<Mat<Real>> seeds;
    // g_initial[l] = d loss / d h^{(l)}(0) as returned by block l's scan.
    std::vector<Mat<Real>> g_initial;
};

template <typename Real>
ChainGrads<Real> chain_backward(const Mat<Real>& g_v, const ChainCache<Real>& c, const NetworkParams<Real>& p,
                                const ChainLayout& layout) {
    const NetworkConfig& cfg = layout.cfg;
    require_shape(g_v.rows() == cfg.tokens() && g_v.cols() == cfg.channels, "chain_backward: cotangent shape");
    ChainGrads<Real> g;
    g.params = NetworkParams<Real>::zeros(cfg);
    auto& gp = g.params;
    gp.w_head.noalias() = c.final_normed.transpose() * g_v;
    gp.b_head = g_v.colwise().sum();
    Mat<Real> g_x = rms_norm_backward(Mat<Real>(g_v * p.w_head.transpose()), p.norm_f, c.final_norm, gp.norm_f);

    const Index di = cfg.d_inner(), ds = cfg.d_state;
    Mat<Real> g_t_embed = Mat<Real>::Zero(1, cfg.d_model);
    g.seeds.assign(cfg.depth, Mat<Real>::Zero(di, ds));
    g.g_initial.assign(cfg.depth, Mat<Real>::Zero(di, ds));
    for (int l = cfg.depth - 1; l >= 0; --l) {
        AdjointSeed<Real> seed{g.seeds[l]};
        auto bg = block_backward(g_x, seed, c.blocks[l], p.blocks[l], layout.blocks[l], layout.orders[l], gp.blocks[l]);
        if (!bg.g_x.allFinite() || !bg.g_h0.allFinite())
            throw NumericError("chain_backward: non-finite gradient", "block " + std::to_string(l));
        g_x = std::move(bg.g_x);
        g_t_embed += bg.g_t_embed;
        g.g_initial[l] = bg.g_h0;
        if (cfg.arcee_enabled && l > 0) g.seeds[l - 1] = boundary_map_vjp(cfg.boundary_map, bg.g_h0);
    }

    gp.pos = g_x;
    gp.b_embed = g_x.colwise().sum();
    gp.w_embed.noalias() = c.tokens.transpose() * g_x;
    g.g_tokens = g_x * p.w_embed.transpose();

    gp.time_w2.noalias() = c.time_hidden.transpose() * g_t_embed;
    gp.time_b2 = g_t_embed;
    const Mat<Real> g_hidden = g_t_embed * p.time_w2.transpose();
    const Mat<Real> g_pre =
        (g_hidden.array() * c.time_pre.unaryExpr([](Real v) { return silu_grad(v); }).array()).matrix();
    gp.time_w1.noalias() = c.features.transpose() * g_pre;
    gp.time_b1 = g_pre;
    return g;
}

// Numerical rank of the boundary-only path from block m = l-1 to block l: block
// l's token input is frozen at its forward value and only h^{(l)}(0) varies with
// block l-1's input. Singular values below rel_threshold * sigma_max are dropped.
template <typename Real>
Index cross_block_rank_probe(const Mat<Real>& tokens, Real t, const NetworkParams<Real>& p, const ChainLayout& layout,
                             int block, Real eps = Real(1e-5), double rel_threshold = 1e-7) {
    const NetworkConfig& cfg = layout.cfg;
    require(block >= 1 && block < cfg.depth, "cross_block_rank_probe: block must be in [1, depth)");
    const Index K = cfg.d_inner() * cfg.d_state;
    require(K <= 32, "cross_block_rank_probe: d_inner*d_state must be <= 32");
    const auto fwd = chain_forward(tokens, t, p, layout);
    const auto& c = fwd.cache;
    const Mat<Real>& x_fixed = c.block_inputs[block];
    const BoundaryState<Real>& h0_up = c.chain.initial[block - 1];

    auto path = [&](const Mat<Real>& x_up) -> Mat<Real> {
        auto up = block_forward(x_up, c.t_embed, h0_up, p.blocks[block - 1], layout.blocks[block - 1],
                                layout.orders[block - 1]);
        BoundaryState<Real> h0 = BoundaryState<Real>::zeros(cfg.d_inner(), cfg.d_state, block);
        if (cfg.arcee_enabled) h0.h = apply_boundary_map(cfg.boundary_map, up.h_terminal.h);
        return block_forward(x_fixed, c.t_embed, h0, p.blocks[block], layout.blocks[block], layout.orders[block]).x_out;
    };
    const Mat<Real> jac = central_difference_jacobian<Real>(path, c.block_inputs[block - 1], eps);
    const Eigen::MatrixXd jd = jac.template cast<double>();
    Eigen::JacobiSVD<Eigen::MatrixXd> svd(jd);
    const auto& s = svd.singularValues();
    if (s.size() == 0 || s(0) == 0.0) return 0;
    Index rank = 0;
    for (Index i = 0; i < s.size(); ++i)
        if (s(i) > rel_threshold * s(0)) ++rank;
    return rank;
}

// Callable wrapper: (tokens, t) -> predicted vector field.
template <typename Real>
struct NetworkModel {
    const NetworkParams<Real>* params;
    const ChainLayout* layout;

    Mat<Real> operator()(const Mat<Real>& tokens, Real t) const { return chain_forward(tokens, t, *params, *layout).v; }
};

}  // namespace arcee
