#pragma once

// The selective-scan operator, conventional (zero initial state) and two-port
// (accepts h0, returns the terminal state):
//
//   h_{t+1} = A_bar_t * h_t + B_bar_t u(t)
//   y(t)    = C_t h_t + D u(t)          (Readout::pre, the default)
//   y(t)    = C_t h_{t+1} + D u(t)      (Readout::post, common kernel convention)
//
// A_bar is diagonal, so every (channel, state) lane evolves independently.
// h_terminal is the state after consuming u(T-1), i.e. h_T; the same tensor is
// labelled h(T-1) in the one-based-terminal notation.

#include "arcee/finite_diff.hpp"
#include "arcee/ssm_core.hpp"

#include <optional>
#include <string>
#include <vector>

namespace arcee {

enum class Readout { pre, post };

template <typename Real>
struct BoundaryState {
    Mat<Real> h;  // d_inner x d_state
    int block_index = 0;

    static BoundaryState zeros(Index d_inner, Index d_state, int block = 0) {
        return {Mat<Real>::Zero(d_inner, d_state), block};
    }
};

template <typename Real>
struct ScanOutput {
    Mat<Real> y;  // T x d_inner
    BoundaryState<Real> h_terminal;
    // States h_{k*checkpoint_every}, k = 0, 1, ...; empty when not requested.
    std::vector<Mat<Real>> checkpoints;
    Index checkpoint_every = 0;
};

template <typename Real>
struct AdjointSeed {
    Mat<Real> g_h_terminal;  // d_inner x d_state

    static AdjointSeed zeros(Index d_inner, Index d_state) {
        return {Mat<Real>::Zero(d_inner, d_state)};
    }
};

// Element of the scan monoid: the affine map h -> a*h + b.
template <typename Real>
struct ScanPair {
    Real a;
    Real b;
};

// (a', b') o (a, b) = (a'a, a'b + b'): apply (a, b) first, then (a', b').
template <typename Real>
constexpr ScanPair<Real> compose(const ScanPair<Real>& outer, const ScanPair<Real>& inner) {
    return {outer.a * inner.a, outer.a * inner.b + outer.b};
}

template <typename Real>
constexpr ScanPair<Real> scan_identity() {
    return {Real(1), Real(0)};
}

namespace detail {

template <typename Real>
void check_scan_shapes(const SelectiveInputs<Real>& in, const Mat<Real>& h0) {
    in.validate();
    require_shape(h0.rows() == in.d_inner() && h0.cols() == in.d_state(),
                  "scan: h0 must be d_inner x d_state");
    if (!h0.allFinite()) throw InvalidArgument("scan: h0 has non-finite entries");
}

// y(t, i) = sum_n C_t[n] state[i, n] + D[i] u(t, i)
template <typename Real>
void readout_row(const SelectiveInputs<Real>& in, Index t, const Real* state, Real* y_row) {
    const Index di = in.d_inner(), ds = in.d_state();
    for (Index i = 0; i < di; ++i) {
        Real acc = in.d_skip(0, i) * in.u(t, i);
        const Real* s = state + i * ds;
        for (Index n = 0; n < ds; ++n) acc += in.c(t, n) * s[n];
        y_row[i] = acc;
    }
}

template <typename Real>
void check_row(const Mat<Real>& y, Index t, const char* what) {
    if (!y.row(t).allFinite())
        throw NumericError(std::string(what) + ": non-finite value", "timestep " + std::to_string(t));
}

}  // namespace detail

// Sequential reference scan. When checkpoint_every > 0 the states at multiples of
// checkpoint_every are kept for the backward sweep.
template <typename Real>
ScanOutput<Real> scan_forward_seq(const SelectiveInputs<Real>& in, const BoundaryState<Real>& h0,
                                  Readout readout = Readout::pre, Index checkpoint_every = 0) {
    detail::check_scan_shapes(in, h0.h);
    const Index T = in.steps(), di = in.d_inner(), ds = in.d_state(), K = di * ds;
    ScanOutput<Real> out;
    out.y.resize(T, di);
    out.checkpoint_every = checkpoint_every;
    Mat<Real> h = h0.h;
    Real* hp = h.data();
    for (Index t = 0; t < T; ++t) {
        if (checkpoint_every > 0 && t % checkpoint_every == 0) out.checkpoints.push_back(h);
        if (readout == Readout::pre) detail::readout_row(in, t, hp, out.y.row(t).data());
        const Real* ab = in.a_bar.row(t).data();
        const Real* bu = in.b_bar_u.row(t).data();
        for (Index k = 0; k < K; ++k) hp[k] = ab[k] * hp[k] + bu[k];
        if (readout == Readout::post) detail::readout_row(in, t, hp, out.y.row(t).data());
        detail::check_row(out.y, t, "scan_forward_seq");
    }
    if (!h.allFinite()) throw NumericError("scan_forward_seq: non-finite state", "timestep " + std::to_string(T - 1));
    out.h_terminal = {std::move(h), h0.block_index};
    return out;
}

// Chunked monoid evaluation: each chunk is reduced to a single affine pair, the
// pairs are chained across chunks to get every chunk's entry state, then each
// chunk replays its local prefix from that entry state.
template <typename Real>
ScanOutput<Real> scan_forward_prefix(const SelectiveInputs<Real>& in, const BoundaryState<Real>& h0,
                                     Index chunk, Readout readout = Readout::pre) {
    require(chunk >= 1, "scan_forward_prefix: chunk must be >= 1");
    detail::check_scan_shapes(in, h0.h);
    const Index T = in.steps(), di = in.d_inner(), ds = in.d_state(), K = di * ds;
    const Index n_chunks = (T + chunk - 1) / chunk;

    // Pass 1: per-chunk aggregates, independent across chunks.
    Mat<Real> agg_a = Mat<Real>::Ones(n_chunks, K);
    Mat<Real> agg_b = Mat<Real>::Zero(n_chunks, K);
    for (Index c = 0; c < n_chunks; ++c) {
        const Index end = std::min(T, (c + 1) * chunk);
        for (Index t = c * chunk; t < end; ++t) {
            for (Index k = 0; k < K; ++k) {
                const auto p = compose(ScanPair<Real>{in.a_bar(t, k), in.b_bar_u(t, k)},
                                       ScanPair<Real>{agg_a(c, k), agg_b(c, k)});
                agg_a(c, k) = p.a;
                agg_b(c, k) = p.b;
            }
        }
    }

    // Pass 2: carry across chunks.
    Mat<Real> entry(n_chunks + 1, K);
    entry.row(0) = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(h0.h.data(), K);
    for (Index c = 0; c < n_chunks; ++c)
        entry.row(c + 1) = agg_a.row(c).cwiseProduct(entry.row(c)) + agg_b.row(c);

    // Pass 3: local prefixes applied to each chunk's entry state.
    ScanOutput<Real> out;
    out.y.resize(T, di);
    std::vector<Real> pre_a(K), pre_b(K), state(K);
    for (Index c = 0; c < n_chunks; ++c) {
        std::fill(pre_a.begin(), pre_a.end(), Real(1));
        std::fill(pre_b.begin(), pre_b.end(), Real(0));
        const Index end = std::min(T, (c + 1) * chunk);
        for (Index t = c * chunk; t < end; ++t) {
            if (readout == Readout::pre) {
                for (Index k = 0; k < K; ++k) state[k] = pre_a[k] * entry(c, k) + pre_b[k];
                detail::readout_row(in, t, state.data(), out.y.row(t).data());
            }
            for (Index k = 0; k < K; ++k) {
                const auto p = compose(ScanPair<Real>{in.a_bar(t, k), in.b_bar_u(t, k)},
                                       ScanPair<Real>{pre_a[k], pre_b[k]});
                pre_a[k] = p.a;
                pre_b[k] = p.b;
            }
            if (readout == Readout::post) {
                for (Index k = 0; k < K; ++k) state[k] = pre_a[k] * entry(c, k) + pre_b[k];
                detail::readout_row(in, t, state.data(), out.y.row(t).data());
            }
            detail::check_row(out.y, t, "scan_forward_prefix");
        }
    }
    Mat<Real> h_T(di, ds);
    Eigen::Map<Eigen::Matrix<Real, 1, Eigen::Dynamic>>(h_T.data(), K) = entry.row(n_chunks);
    out.h_terminal = {std::move(h_T), h0.block_index};
    return out;
}

// Reverse sweep. g_h(T) starts at seed.g_h_terminal (the boundary adjoint handed
// back by the next block) and
//   g_h(t) = A_bar_t^T g_h(t+1) + C_t^T g_y(t)
// with the readout term placed on h_t or h_{t+1} according to `readout`.
// States are recomputed chunk by chunk from checkpoints spaced `chunk` apart.
template <typename Real>
SelectiveGrads<Real> scan_backward(const SelectiveInputs<Real>& in, const BoundaryState<Real>& h0,
                                   const Mat<Real>& g_y, const AdjointSeed<Real>& seed,
                                   Readout readout = Readout::pre, Index chunk = 16,
                                   const ScanOutput<Real>* forward = nullptr) {
    detail::check_scan_shapes(in, h0.h);
    const Index T = in.steps(), di = in.d_inner(), ds = in.d_state(), K = di * ds;
    require_shape(g_y.rows() == T && g_y.cols() == di, "scan_backward: g_y must be T x d_inner");
    require_shape(seed.g_h_terminal.rows() == di && seed.g_h_terminal.cols() == ds,
                  "scan_backward: seed must be d_inner x d_state");
    require(chunk >= 1, "scan_backward: chunk must be >= 1");

    std::vector<Mat<Real>> owned;
    const std::vector<Mat<Real>>* ckpt = nullptr;
    if (forward != nullptr && forward->checkpoint_every > 0) {
        chunk = forward->checkpoint_every;
        ckpt = &forward->checkpoints;
    } else {
        // Forward sweep keeping only chunk-entry states.
        Mat<Real> h = h0.h;
        for (Index t = 0; t < T; ++t) {
            if (t % chunk == 0) owned.push_back(h);
            for (Index k = 0; k < K; ++k) h.data()[k] = in.a_bar(t, k) * h.data()[k] + in.b_bar_u(t, k);
        }
        ckpt = &owned;
    }

    SelectiveGrads<Real> g;
    g.a_bar = Mat<Real>::Zero(T, K);
    g.b_bar_u = Mat<Real>::Zero(T, K);
    g.c = Mat<Real>::Zero(T, ds);
    g.d_skip = Mat<Real>::Zero(1, di);
    g.u = Mat<Real>::Zero(T, di);

    Mat<Real> gh = seed.g_h_terminal;  // adjoint of h_{t+1} while processing t
    Real* ghp = gh.data();
    Mat<Real> states(chunk + 1, K);
    const Index n_chunks = (T + chunk - 1) / chunk;
    for (Index c = n_chunks - 1; c >= 0; --c) {
        const Index start = c * chunk, end = std::min(T, start + chunk);
        states.row(0) = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>((*ckpt)[c].data(), K);
        for (Index t = start; t < end; ++t)
            states.row(t - start + 1) = in.a_bar.row(t).cwiseProduct(states.row(t - start)) + in.b_bar_u.row(t);

        for (Index t = end - 1; t >= start; --t) {
            const Real* h_t = states.row(t - start).data();
            const Real* h_next = states.row(t - start + 1).data();
            const Real* read = readout == Readout::pre ? h_t : h_next;
            // g_C_t and g_D from the readout
            for (Index i = 0; i < di; ++i) {
                const Real gyi = g_y(t, i);
                g.d_skip(0, i) += gyi * in.u(t, i);
                g.u(t, i) = in.d_skip(0, i) * gyi;
                for (Index n = 0; n < ds; ++n) g.c(t, n) += gyi * read[i * ds + n];
            }
            if (readout == Readout::post) {
                for (Index i = 0; i < di; ++i)
                    for (Index n = 0; n < ds; ++n) ghp[i * ds + n] += g_y(t, i) * in.c(t, n);
            }
            for (Index k = 0; k < K; ++k) {
                g.a_bar(t, k) = ghp[k] * h_t[k];
                g.b_bar_u(t, k) = ghp[k];
                ghp[k] *= in.a_bar(t, k);
            }
            if (readout == Readout::pre) {
                for (Index i = 0; i < di; ++i)
                    for (Index n = 0; n < ds; ++n) ghp[i * ds + n] += g_y(t, i) * in.c(t, n);
            }
            if (!gh.allFinite()) throw NumericError("scan_backward: non-finite adjoint", "timestep " + std::to_string(t));
        }
    }
    g.h0 = std::move(gh);
    return g;
}

// Explicit product-sum evaluation of the unrolled recurrence, O(T^2) products per
// lane. Test oracle only.
template <typename Real>
ScanOutput<Real> scan_oracle_unrolled(const SelectiveInputs<Real>& in, const BoundaryState<Real>& h0,
                                      Readout readout = Readout::pre) {
    detail::check_scan_shapes(in, h0.h);
    const Index T = in.steps(), di = in.d_inner(), ds = in.d_state(), K = di * ds;
    require(T <= 512, "scan_oracle_unrolled: T must be <= 512");
    // states(t, k) = h_t, t = 0..T
    Mat<Real> states(T + 1, K);
    for (Index t = 0; t <= T; ++t) {
        for (Index k = 0; k < K; ++k) {
            Real homogeneous = h0.h.data()[k];
            for (Index j = 0; j < t; ++j) homogeneous *= in.a_bar(j, k);
            Real forced = 0;
            for (Index i = 0; i < t; ++i) {
                Real prod = 1;
                for (Index j = i + 1; j < t; ++j) prod *= in.a_bar(j, k);
                forced += prod * in.b_bar_u(i, k);
            }
            states(t, k) = homogeneous + forced;
        }
    }
    ScanOutput<Real> out;
    out.y.resize(T, di);
    for (Index t = 0; t < T; ++t) {
        const Index row = readout == Readout::pre ? t : t + 1;
        detail::readout_row(in, t, states.row(row).data(), out.y.row(t).data());
    }
    Mat<Real> h_T(di, ds);
    for (Index k = 0; k < K; ++k) h_T.data()[k] = states(T, k);
    out.h_terminal = {std::move(h_T), h0.block_index};
    return out;
}

enum class JacobianWrt { u, h0 };

// Central-difference Jacobian of [vec(y); vec(h_T)] with respect to vec(u) or
// vec(h0). The discretized coefficients are held fixed; perturbing u moves only
// the B_bar u products and the D u skip term.
template <typename Real>
Mat<Real> jacobian_numeric(const SelectiveInputs<Real>& in, const BoundaryState<Real>& h0,
                           JacobianWrt wrt, Readout readout = Readout::pre, Real eps = Real(1e-5)) {
    detail::check_scan_shapes(in, h0.h);
    const Index T = in.steps(), di = in.d_inner(), K = di * in.d_state();
    require(T <= 16 && K <= 32, "jacobian_numeric: tiny dims only (T <= 16, d_inner*d_state <= 32)");
    auto flatten = [&](const ScanOutput<Real>& o) {
        Mat<Real> v(1, T * di + K);
        v.leftCols(T * di) = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(o.y.data(), T * di);
        v.rightCols(K) = Eigen::Map<const Eigen::Matrix<Real, 1, Eigen::Dynamic>>(o.h_terminal.h.data(), K);
        return v;
    };
    if (wrt == JacobianWrt::u) {
        SelectiveInputs<Real> work = in;
        auto f = [&](const Mat<Real>& u) {
            work.u = u;
            work.refresh_b_bar_u();
            return flatten(scan_forward_seq(work, h0, readout));
        };
        return central_difference_jacobian<Real>(f, in.u, eps);
    }
    auto f = [&](const Mat<Real>& h) {
        return flatten(scan_forward_seq(in, BoundaryState<Real>{h, h0.block_index}, readout));
    };
    return central_difference_jacobian<Real>(f, h0.h, eps);
}

// max_t rho(A_bar_t); A_bar is diagonal so rho is the largest entry.
template <typename Real>
Real contraction_factor(const SelectiveInputs<Real>& in) {
    return in.a_bar.cwiseAbs().maxCoeff();
}

}  // namespace arcee
