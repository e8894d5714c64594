#pragma once

// Deterministic ODE sampling dx/dt = v(x, t) from t = 0 to t_end.

#include "arcee/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace arcee {

enum class SamplerMethod { rk4_fixed, dopri5_adaptive };

inline SamplerMethod sampler_from_name(const std::string& s) {
    if (s == "rk4" || s == "rk4_fixed") return SamplerMethod::rk4_fixed;
    if (s == "dopri5" || s == "dopri5_adaptive") return SamplerMethod::dopri5_adaptive;
    throw InvalidArgument("unknown sampler '" + s + "'");
}

inline const char* sampler_name(SamplerMethod m) { return m == SamplerMethod::rk4_fixed ? "rk4" : "dopri5"; }

struct SamplerConfig {
    SamplerMethod method = SamplerMethod::rk4_fixed;
    // rk4: number of field evaluations; steps = max(1, nfe_budget / 4).
    int nfe_budget = 50;
    double rtol = 1e-5;
    double atol = 1e-5;
    double t_eps = 1e-3;
    // dopri5 gives up when the step shrinks below this.
    double min_step = 1e-10;
    int max_steps = 100000;

    double t_end() const { return 1.0 - t_eps; }
    int rk4_steps() const { return std::max(1, nfe_budget / 4); }

    static SamplerConfig rk4_with_steps(int steps, double t_eps = 1e-3) {
        SamplerConfig c;
        c.nfe_budget = 4 * steps;
        c.t_eps = t_eps;
        return c;
    }

    void validate() const {
        require(nfe_budget >= 1, "SamplerConfig: nfe_budget must be >= 1");
        require(rtol > 0 && atol > 0, "SamplerConfig: tolerances must be positive");
        require(t_eps >= 0 && t_eps < 1, "SamplerConfig: t_eps must lie in [0, 1)");
    }
};

template <typename Real>
struct SampleResult {
    Mat<Real> x;
    int nfe = 0;
    int steps = 0;
    int rejected = 0;
};

template <typename Real, typename Field>
SampleResult<Real> integrate_rk4(const Field& field, const Mat<Real>& x0, double t0, double t1, int steps) {
    require(steps >= 1, "integrate_rk4: steps must be >= 1");
    SampleResult<Real> r;
    r.x = x0;
    const double h = (t1 - t0) / steps;
    const Real hr = Real(h);
    for (int s = 0; s < steps; ++s) {
        const double t = t0 + s * h;
        const Mat<Real> k1 = field(r.x, Real(t));
        const Mat<Real> k2 = field(Mat<Real>(r.x + (hr / 2) * k1), Real(t + h / 2));
        const Mat<Real> k3 = field(Mat<Real>(r.x + (hr / 2) * k2), Real(t + h / 2));
        const Mat<Real> k4 = field(Mat<Real>(r.x + hr * k3), Real(t + h));
        r.x += (hr / 6) * (k1 + Real(2) * k2 + Real(2) * k3 + k4);
        r.nfe += 4;
    }
    r.steps = steps;
    return r;
}

// Dormand-Prince 5(4), FSAL, PI step-size control on the RMS error norm.
template <typename Real, typename Field>
SampleResult<Real> integrate_dopri5(const Field& field, const Mat<Real>& x0, double t0, double t1,
                                    const SamplerConfig& cfg) {
    constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
    constexpr double a21 = 1.0 / 5;
    constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
    constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
    constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561, a54 = -212.0 / 729;
    constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                     a65 = -5103.0 / 18656;
    constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784, b6 = 11.0 / 84;
    constexpr double e1 = b1 - 5179.0 / 57600, e3 = b3 - 7571.0 / 16695, e4 = b4 - 393.0 / 640,
                     e5 = b5 - -92097.0 / 339200, e6 = b6 - 187.0 / 2100, e7 = -1.0 / 40;
    constexpr double safety = 0.9, alpha = 0.7 / 5, beta = 0.4 / 5;

    SampleResult<Real> r;
    r.x = x0;
    double t = t0;
    const double span = t1 - t0;
    if (span <= 0) return r;
    double h = std::min(0.05 * span, span);
    double err_prev = 1.0;
    Mat<Real> k1 = field(r.x, Real(t));
    r.nfe = 1;
    while (t < t1) {
        if (r.steps + r.rejected >= cfg.max_steps) throw IntegrationError("dopri5: step limit reached");
        if (t + h > t1) h = t1 - t;
        const Real H = Real(h);
        const Mat<Real>& x = r.x;
        const Mat<Real> k2 = field(Mat<Real>(x + H * Real(a21) * k1), Real(t + c2 * h));
        const Mat<Real> k3 = field(Mat<Real>(x + H * (Real(a31) * k1 + Real(a32) * k2)), Real(t + c3 * h));
        const Mat<Real> k4 =
            field(Mat<Real>(x + H * (Real(a41) * k1 + Real(a42) * k2 + Real(a43) * k3)), Real(t + c4 * h));
        const Mat<Real> k5 = field(
            Mat<Real>(x + H * (Real(a51) * k1 + Real(a52) * k2 + Real(a53) * k3 + Real(a54) * k4)), Real(t + c5 * h));
        const Mat<Real> k6 = field(
            Mat<Real>(x + H * (Real(a61) * k1 + Real(a62) * k2 + Real(a63) * k3 + Real(a64) * k4 + Real(a65) * k5)),
            Real(t + h));
        const Mat<Real> x_new =
            x + H * (Real(b1) * k1 + Real(b3) * k3 + Real(b4) * k4 + Real(b5) * k5 + Real(b6) * k6);
        const Mat<Real> k7 = field(x_new, Real(t + h));
        r.nfe += 6;
        const Mat<Real> err_vec =
            H * (Real(e1) * k1 + Real(e3) * k3 + Real(e4) * k4 + Real(e5) * k5 + Real(e6) * k6 + Real(e7) * k7);
        double acc = 0.0;
        for (Index k = 0; k < err_vec.size(); ++k) {
            const double scale = cfg.atol + cfg.rtol * std::max(std::abs(double(x.data()[k])), std::abs(double(x_new.data()[k])));
            const double e = double(err_vec.data()[k]) / scale;
            acc += e * e;
        }
        const double err = std::sqrt(acc / double(std::max<Index>(1, err_vec.size())));
        if (!std::isfinite(err)) throw IntegrationError("dopri5: non-finite error estimate at t = " + std::to_string(t));
        if (err <= 1.0) {
            t += h;
            r.x = x_new;
            k1 = k7;
            ++r.steps;
            const double e = std::max(err, 1e-10);
            const double factor = std::clamp(safety * std::pow(e, -alpha) * std::pow(err_prev, beta), 0.2, 10.0);
            err_prev = e;
            h *= factor;
        } else {
            ++r.rejected;
            h *= std::max(0.2, safety * std::pow(err, -1.0 / 5));
        }
        if (t < t1 && h < cfg.min_step) throw IntegrationError("dopri5: step size underflow at t = " + std::to_string(t));
    }
    return r;
}

// Integrates from t = 0 to 1 - t_eps.
template <typename Real, typename Field>
SampleResult<Real> integrate(const Field& field, const Mat<Real>& x0, const SamplerConfig& cfg) {
    cfg.validate();
    if (cfg.method == SamplerMethod::rk4_fixed) return integrate_rk4<Real>(field, x0, 0.0, cfg.t_end(), cfg.rk4_steps());
    return integrate_dopri5<Real>(field, x0, 0.0, cfg.t_end(), cfg);
}

}  // namespace arcee
