#pragma once

// Continuous-time diagonal SSM parameters, input-dependent (selective) heads
// and exact zero-order-hold discretization.
//
// Layout conventions used throughout the library:
//   per-token state tensors are (T x d_inner*d_state), entry (i, n) of token t
//   stored at column i*d_state + n; vectors are 1 x n row matrices so every
//   learnable tensor is a Mat<Real>.

#include "arcee/tensor.hpp"

#include <random>
#include <string>
#include <utility>
#include <vector>

namespace arcee {

template <typename Real>
struct SsmParams {
    Mat<Real> a_log;       // d_inner x d_state, A = -exp(a_log)
    Mat<Real> d_skip;      // 1 x d_inner
    Mat<Real> w_b;         // d_inner x d_state
    Mat<Real> w_c;         // d_inner x d_state
    Mat<Real> w_delta;     // d_inner x d_inner
    Mat<Real> delta_bias;  // 1 x d_inner
    Real delta_min = Real(1e-3);
    Real delta_max = Real(1e1);

    Index d_inner() const { return a_log.rows(); }
    Index d_state() const { return a_log.cols(); }

    Mat<Real> a() const { return -a_log.array().exp().matrix(); }

    static SsmParams zeros(Index d_inner, Index d_state) {
        SsmParams p;
        p.a_log = Mat<Real>::Zero(d_inner, d_state);
        p.d_skip = Mat<Real>::Zero(1, d_inner);
        p.w_b = Mat<Real>::Zero(d_inner, d_state);
        p.w_c = Mat<Real>::Zero(d_inner, d_state);
        p.w_delta = Mat<Real>::Zero(d_inner, d_inner);
        p.delta_bias = Mat<Real>::Zero(1, d_inner);
        return p;
    }

    void validate() const {
        require(delta_min > Real(0) && delta_min <= delta_max && std::isfinite(double(delta_max)),
                "SsmParams: require 0 < delta_min <= delta_max < inf");
        require_shape(d_skip.rows() == 1 && d_skip.cols() == d_inner(), "SsmParams: d_skip shape");
        require_shape(w_b.rows() == d_inner() && w_b.cols() == d_state(), "SsmParams: w_b shape");
        require_shape(w_c.rows() == d_inner() && w_c.cols() == d_state(), "SsmParams: w_c shape");
        require_shape(w_delta.rows() == d_inner() && w_delta.cols() == d_inner(),
                      "SsmParams: w_delta shape");
        require_shape(delta_bias.rows() == 1 && delta_bias.cols() == d_inner(),
                      "SsmParams: delta_bias shape");
    }

    template <typename F>
    void for_each(F&& f) {
        f("a_log", a_log);
        f("d_skip", d_skip);
        f("w_b", w_b);
        f("w_c", w_c);
        f("w_delta", w_delta);
        f("delta_bias", delta_bias);
    }
};

// Inverse of softplus for positive y.
template <typename Real>
Real softplus_inverse(Real y) {
    return y + std::log(-std::expm1(-y));
}

// S4D-style init: a_log ~ log U[0.5, 8], projections U(-g, g) with g = 1/sqrt(fan_in),
// delta bias chosen so softplus(bias) is log-uniform in [0.01, 0.1], D = 1.
template <typename Real, typename Rng>
SsmParams<Real> init_ssm_params(Index d_inner, Index d_state, Rng& rng) {
    SsmParams<Real> p = SsmParams<Real>::zeros(d_inner, d_state);
    std::uniform_real_distribution<double> a_dist(0.5, 8.0);
    for (Index i = 0; i < d_inner; ++i)
        for (Index n = 0; n < d_state; ++n) p.a_log(i, n) = Real(std::log(a_dist(rng)));
    const double gain = 1.0 / std::sqrt(double(d_inner));
    std::uniform_real_distribution<double> w_dist(-gain, gain);
    for (Index k = 0; k < p.w_b.size(); ++k) p.w_b.data()[k] = Real(w_dist(rng));
    for (Index k = 0; k < p.w_c.size(); ++k) p.w_c.data()[k] = Real(w_dist(rng));
    for (Index k = 0; k < p.w_delta.size(); ++k) p.w_delta.data()[k] = Real(w_dist(rng));
    std::uniform_real_distribution<double> dt_dist(std::log(0.01), std::log(0.1));
    for (Index i = 0; i < d_inner; ++i) {
        p.delta_bias(0, i) = Real(softplus_inverse(std::exp(dt_dist(rng))));
        p.d_skip(0, i) = Real(1);
    }
    return p;
}

// Exact ZOH for a scalar (diagonal) mode: a_bar = e^{delta a},
// b_bar = (e^{delta a} - 1)/a * b, with the a -> 0 limit b_bar = delta * b.
template <typename Real>
std::pair<Real, Real> zoh_discretize(Real a, Real b, Real delta) {
    if (!std::isfinite(double(a)) || !std::isfinite(double(b)) || !std::isfinite(double(delta)))
        throw InvalidArgument("zoh_discretize: non-finite input");
    require(a <= Real(0), "zoh_discretize: a must be negative");
    require(delta > Real(0), "zoh_discretize: delta must be positive");
    const Real x = delta * a;
    const Real a_bar = std::exp(x);
    const Real phi = a == Real(0) ? delta : std::expm1(x) / a;
    return {a_bar, phi * b};
}

// Discretized, per-token scan coefficients for one scan invocation, plus the
// head pre-activations the backward pass needs.
template <typename Real>
struct SelectiveInputs {
    Mat<Real> a_bar;      // T x (d_inner*d_state)
    Mat<Real> b_bar;      // T x (d_inner*d_state), B_bar before multiplying by u
    Mat<Real> b_bar_u;    // T x (d_inner*d_state)
    Mat<Real> c;          // T x d_state
    Mat<Real> d_skip;     // 1 x d_inner
    Mat<Real> u;          // T x d_inner
    Mat<Real> delta;      // T x d_inner
    Mat<Real> b;          // T x d_state (continuous B_t)
    Mat<Real> delta_pre;  // T x d_inner (pre-softplus)
    Mat<Real> phi;        // T x (d_inner*d_state), expm1(delta a) / a

    Index steps() const { return u.rows(); }
    Index d_inner() const { return u.cols(); }
    Index d_state() const { return c.cols(); }

    void validate() const {
        const Index T = steps(), di = d_inner(), ds = d_state();
        require_shape(T >= 1, "SelectiveInputs: need T >= 1");
        require_shape(a_bar.rows() == T && a_bar.cols() == di * ds, "SelectiveInputs: a_bar shape");
        require_shape(b_bar_u.rows() == T && b_bar_u.cols() == di * ds,
                      "SelectiveInputs: b_bar_u shape");
        require_shape(c.rows() == T, "SelectiveInputs: c shape");
        require_shape(d_skip.rows() == 1 && d_skip.cols() == di, "SelectiveInputs: d_skip shape");
    }

    // Recompute b_bar_u after editing u with b_bar held fixed.
    void refresh_b_bar_u() {
        const Index ds = d_state();
        for (Index t = 0; t < steps(); ++t)
            for (Index i = 0; i < d_inner(); ++i)
                for (Index n = 0; n < ds; ++n)
                    b_bar_u(t, i * ds + n) = b_bar(t, i * ds + n) * u(t, i);
    }
};

// Build SelectiveInputs directly from discrete coefficients (no heads), as used by
// scan-level tests. b_bar has shape T x (d_inner*d_state).
template <typename Real>
SelectiveInputs<Real> make_selective_inputs(Mat<Real> a_bar, Mat<Real> b_bar, Mat<Real> c,
                                            Mat<Real> d_skip, Mat<Real> u) {
    SelectiveInputs<Real> in;
    in.a_bar = std::move(a_bar);
    in.b_bar = std::move(b_bar);
    in.c = std::move(c);
    in.d_skip = std::move(d_skip);
    in.u = std::move(u);
    in.b_bar_u = Mat<Real>::Zero(in.a_bar.rows(), in.a_bar.cols());
    in.delta = Mat<Real>::Zero(in.u.rows(), in.u.cols());
    in.validate();
    require_shape(in.b_bar.rows() == in.a_bar.rows() && in.b_bar.cols() == in.a_bar.cols(),
                  "make_selective_inputs: b_bar shape");
    in.refresh_b_bar_u();
    return in;
}

// B_t = u_t w_b, C_t = u_t w_c, delta_t = clamp(softplus(u_t w_delta + bias)),
// followed by elementwise ZOH against A = -exp(a_log).
template <typename Real>
SelectiveInputs<Real> selective_heads(const Mat<Real>& u, const SsmParams<Real>& p) {
    const Index T = u.rows(), di = p.d_inner(), ds = p.d_state();
    require_shape(T >= 1, "selective_heads: need T >= 1");
    require_shape(u.cols() == di, "selective_heads: u has " + std::to_string(u.cols()) +
                                      " columns, expected d_inner=" + std::to_string(di));
    SelectiveInputs<Real> in;
    in.u = u;
    in.d_skip = p.d_skip;
    in.b.noalias() = u * p.w_b;
    in.c.noalias() = u * p.w_c;
    in.delta_pre.noalias() = u * p.w_delta;
    in.delta_pre.rowwise() += p.delta_bias.row(0);
    in.delta.resize(T, di);
    for (Index t = 0; t < T; ++t)
        for (Index i = 0; i < di; ++i)
            in.delta(t, i) = std::clamp(softplus(in.delta_pre(t, i)), p.delta_min, p.delta_max);

    // Vectorised ZOH, one row at a time through the same aligned buffers so a
    // token's coefficients do not depend on T. Near zero,
    // expm1(x) / a = delta * (1 + x/2 (1 + x/3 (...))) avoids the cancellation
    // in e - 1; 17 terms reach double precision for |x| <= 0.5.
    const Mat<Real> a = p.a();
    const Index K = di * ds;
    using Row = Eigen::Array<Real, 1, Eigen::Dynamic>;
    Row A(K), DT(K), X(K), E(K), series(K);
    for (Index i = 0; i < di; ++i)
        for (Index n = 0; n < ds; ++n) A(i * ds + n) = a(i, n);
    in.phi.resize(T, K);
    in.a_bar.resize(T, K);
    for (Index t = 0; t < T; ++t) {
        for (Index i = 0; i < di; ++i) DT.segment(i * ds, ds).setConstant(in.delta(t, i));
        X = DT * A;
        E = X.exp();
        series.setOnes();
        for (int j = 17; j >= 2; --j) series = Real(1) + X * series / Real(j);
        in.phi.row(t) = (X.abs() > Real(0.5)).select((E - Real(1)) / A, DT * series).matrix();
        in.a_bar.row(t) = E.matrix();
    }
    in.b_bar.resize(T, K);
    in.b_bar_u.resize(T, K);
    for (Index t = 0; t < T; ++t)
        for (Index i = 0; i < di; ++i)
            for (Index n = 0; n < ds; ++n) {
                const Index k = i * ds + n;
                in.b_bar(t, k) = in.phi(t, k) * in.b(t, n);
                in.b_bar_u(t, k) = in.b_bar(t, k) * u(t, i);
            }
    return in;
}

// Cotangents on the scan coefficients, as produced by scan_backward.
template <typename Real>
struct SelectiveGrads {
    Mat<Real> a_bar;    // T x (d_inner*d_state)
    Mat<Real> b_bar_u;  // T x (d_inner*d_state)
    Mat<Real> c;        // T x d_state
    Mat<Real> d_skip;   // 1 x d_inner
    Mat<Real> u;        // T x d_inner, direct path through D only
    Mat<Real> h0;       // d_inner x d_state
};

// Chain rule through the heads: returns parameter gradients and the total
// gradient on u (direct D path + B_bar u product + the three projections).
template <typename Real>
std::pair<SsmParams<Real>, Mat<Real>> selective_heads_backward(const SsmParams<Real>& p,
                                                               const SelectiveInputs<Real>& in,
                                                               const SelectiveGrads<Real>& g) {
    const Index T = in.steps(), di = p.d_inner(), ds = p.d_state();
    SsmParams<Real> gp = SsmParams<Real>::zeros(di, ds);
    gp.delta_min = p.delta_min;
    gp.delta_max = p.delta_max;
    gp.d_skip = g.d_skip;

    Mat<Real> g_u = g.u;
    Mat<Real> g_b = Mat<Real>::Zero(T, ds);
    Mat<Real> g_pre = Mat<Real>::Zero(T, di);
    Mat<Real> g_a = Mat<Real>::Zero(di, ds);
    const Mat<Real> a = p.a();

    for (Index t = 0; t < T; ++t) {
        for (Index i = 0; i < di; ++i) {
            const Real dt = in.delta(t, i);
            const Real ut = in.u(t, i);
            Real g_dt = 0;
            Real g_ut = 0;
            for (Index n = 0; n < ds; ++n) {
                const Index k = i * ds + n;
                const Real an = a(i, n);
                const Real e = in.a_bar(t, k);
                const Real phi = in.phi(t, k);
                const Real g_bbu = g.b_bar_u(t, k);
                const Real g_bbar = g_bbu * ut;
                g_ut += g_bbu * in.b_bar(t, k);
                const Real bn = in.b(t, n);
                g_dt += g.a_bar(t, k) * an * e + g_bbar * bn * e;
                g_a(i, n) += g.a_bar(t, k) * dt * e + g_bbar * bn * (dt * e - phi) / an;
                g_b(t, n) += g_bbar * phi;
            }
            g_u(t, i) += g_ut;
            const Real sp = softplus(in.delta_pre(t, i));
            if (sp > p.delta_min && sp < p.delta_max)
                g_pre(t, i) = g_dt * sigmoid(in.delta_pre(t, i));
        }
    }
    gp.a_log = (g_a.array() * a.array()).matrix();
    gp.w_b.noalias() = in.u.transpose() * g_b;
    gp.w_c.noalias() = in.u.transpose() * g.c;
    gp.w_delta.noalias() = in.u.transpose() * g_pre;
    gp.delta_bias = g_pre.colwise().sum();
    g_u.noalias() += g_pre * p.w_delta.transpose();
    g_u.noalias() += g_b * p.w_b.transpose();
    g_u.noalias() += g.c * p.w_c.transpose();
    return {std::move(gp), std::move(g_u)};
}

}  // namespace arcee
