#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace arcee;
using arcee::testing::random_mat;

namespace {

Mat<double> decay(const Mat<double>& x, double) { return -x; }

SamplerConfig dopri(double rtol, double atol, double t_eps = 1e-3) {
    SamplerConfig c;
    c.method = SamplerMethod::dopri5_adaptive;
    c.rtol = rtol;
    c.atol = atol;
    c.t_eps = t_eps;
    return c;
}

}  // namespace

TEST(Rk4, ZeroFieldKeepsStart) {
    std::mt19937_64 rng(1);
    const Mat<double> x0 = random_mat(rng, 3, 4);
    auto zero = [](const Mat<double>& x, double) { return Mat<double>::Zero(x.rows(), x.cols()).eval(); };
    const auto r = integrate(zero, x0, SamplerConfig{});
    EXPECT_EQ(r.x, x0);
    EXPECT_EQ(r.nfe, 48);
    EXPECT_EQ(r.steps, 12);
}

TEST(Rk4, ConstantFieldIsExact) {
    const Mat<double> x0 = Mat<double>::Constant(2, 2, 0.5);
    auto c = [](const Mat<double>& x, double) { return Mat<double>::Constant(x.rows(), x.cols(), 2.0).eval(); };
    const auto r = integrate_rk4<double>(c, x0, 0.0, 0.75, 7);
    EXPECT_NEAR(r.x(0, 0), 0.5 + 1.5, 1e-14);
}

TEST(Rk4, LinearDecayFiftySteps) {
    const Mat<double> x0 = Mat<double>::Constant(1, 3, 1.0);
    const auto r = integrate_rk4<double>(decay, x0, 0.0, 1.0, 50);
    EXPECT_LE(std::abs(r.x(0, 0) - std::exp(-1.0)), 1e-6);
}

TEST(Rk4, FourthOrderConvergence) {
    const Mat<double> x0 = Mat<double>::Constant(1, 1, 1.0);
    auto err = [&](int n) { return std::abs(integrate_rk4<double>(decay, x0, 0.0, 1.0, n).x(0, 0) - std::exp(-1.0)); };
    for (int n : {5, 10, 20}) {
        const double ratio = err(n) / err(2 * n);
        EXPECT_GE(ratio, 12.0) << n;
        EXPECT_LE(ratio, 20.0) << n;
    }
}

TEST(Rk4, TimeDependentField) {
    // dx/dt = cos(t), x(T) = x0 + sin(T)
    auto f = [](const Mat<double>& x, double t) { return Mat<double>::Constant(x.rows(), x.cols(), std::cos(t)).eval(); };
    const auto r = integrate_rk4<double>(f, Mat<double>::Zero(1, 1).eval(), 0.0, 2.0, 40);
    EXPECT_NEAR(r.x(0, 0), std::sin(2.0), 1e-7);
}

TEST(Rk4, StepsFromBudget) {
    SamplerConfig c;
    c.nfe_budget = 3;
    EXPECT_EQ(c.rk4_steps(), 1);
    c.nfe_budget = 50;
    EXPECT_EQ(c.rk4_steps(), 12);
    c.nfe_budget = 0;
    EXPECT_THROW(c.validate(), InvalidArgument);
}

TEST(Dopri5, AgreesWithFineRk4) {
    std::mt19937_64 rng(2);
    const Mat<double> x0 = random_mat(rng, 4, 2);
    auto f = [](const Mat<double>& x, double t) {
        return (-x.array() * (1.0 + t) + std::sin(3.0 * t)).matrix().eval();
    };
    const auto a = integrate_dopri5<double>(f, x0, 0.0, 0.999, dopri(1e-8, 1e-8));
    const auto b = integrate_rk4<double>(f, x0, 0.0, 0.999, 2000);
    EXPECT_LE((a.x - b.x).cwiseAbs().maxCoeff(), 1e-5);
    EXPECT_GT(a.steps, 0);
    EXPECT_EQ(a.nfe, 1 + 6 * (a.steps + a.rejected));
}

TEST(Dopri5, Deterministic) {
    std::mt19937_64 rng(3);
    const Mat<double> x0 = random_mat(rng, 5, 5);
    const auto a = integrate(decay, x0, dopri(1e-5, 1e-5));
    const auto b = integrate(decay, x0, dopri(1e-5, 1e-5));
    EXPECT_EQ(a.x, b.x);
    EXPECT_EQ(a.nfe, b.nfe);
}

TEST(Dopri5, TransportsNoiseToData) {
    // Conditional field for a single data point carries any start to z.
    std::mt19937_64 rng(4);
    const Mat<double> z = random_mat(rng, 8, 1), eps = random_mat(rng, 8, 1, 2.0);
    auto f = [&](const Mat<double>& x, double t) { return conditional_vf(x, z, t, InterpolantSchedule{}); };
    const auto r = integrate(f, eps, dopri(1e-8, 1e-8, 1e-4));
    EXPECT_LE((r.x - z).cwiseAbs().maxCoeff(), 1e-3);
    // The path stays on x_t = alpha z + sigma eps.
    const auto s = gvp_schedule(1.0 - 1e-4);
    EXPECT_LE((r.x - (s.alpha * z + s.sigma * eps)).cwiseAbs().maxCoeff(), 1e-5);
}

TEST(Dopri5, StepUnderflowThrows) {
    auto blowup = [](const Mat<double>& x, double t) {
        return Mat<double>::Constant(x.rows(), x.cols(), 1.0 / std::pow(0.5 - t, 2)).eval();
    };
    auto cfg = dopri(1e-8, 1e-8);
    cfg.min_step = 1e-6;
    EXPECT_THROW(integrate(blowup, Mat<double>::Zero(1, 1).eval(), cfg), IntegrationError);
}

TEST(SamplerNames, RoundTrip) {
    EXPECT_EQ(sampler_from_name("rk4"), SamplerMethod::rk4_fixed);
    EXPECT_EQ(sampler_from_name(sampler_name(SamplerMethod::dopri5_adaptive)), SamplerMethod::dopri5_adaptive);
    EXPECT_THROW(sampler_from_name("euler"), InvalidArgument);
}
