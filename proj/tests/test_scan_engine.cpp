#include "test_util.hpp"

#include <gtest/gtest.h>

using namespace arcee;
using namespace arcee::testing;

namespace {

BoundaryState<double> scalar_state(double v) { return {scalar_mat(v), 0}; }

// sum(g_y * y) + sum(g_h * h_T) for finite differences of scan_backward.
double scan_objective(const SelectiveInputs<double>& in, const BoundaryState<double>& h0, const Mat<double>& g_y,
                      const Mat<double>& g_h, Readout readout) {
    const auto out = scan_forward_seq(in, h0, readout);
    return (out.y.array() * g_y.array()).sum() + (out.h_terminal.h.array() * g_h.array()).sum();
}

}  // namespace

TEST(ScanForward, ScalarHandUnroll) {
    const auto in = scalar_inputs({0.5, 0.5, 0.5}, {1, 1, 1}, {1, 1, 1}, 0.0, {1, 0, 0});
    const auto out = scan_forward_seq(in, scalar_state(0.0));
    EXPECT_DOUBLE_EQ(out.y(0, 0), 0.0);
    EXPECT_DOUBLE_EQ(out.y(1, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.y(2, 0), 0.5);
    EXPECT_DOUBLE_EQ(out.h_terminal.h(0, 0), 0.25);
}

TEST(ScanForward, ScalarWithInitialState) {
    const auto in = scalar_inputs({0.5, 0.5, 0.5}, {1, 1, 1}, {1, 1, 1}, 0.0, {1, 0, 0});
    const auto out = scan_forward_seq(in, scalar_state(2.0));
    EXPECT_DOUBLE_EQ(out.y(0, 0), 2.0);
    EXPECT_DOUBLE_EQ(out.y(1, 0), 2.0);
    EXPECT_DOUBLE_EQ(out.y(2, 0), 1.0);
    EXPECT_DOUBLE_EQ(out.h_terminal.h(0, 0), 0.5);
}

TEST(ScanForward, ZeroDynamics) {
    std::mt19937_64 rng(1);
    auto in = random_inputs(rng, 6, 2, 3);
    in.u.setZero();
    in.refresh_b_bar_u();
    const auto out = scan_forward_seq(in, BoundaryState<double>::zeros(2, 3));
    EXPECT_TRUE(out.y.isZero(0.0));
    EXPECT_TRUE(out.h_terminal.h.isZero(0.0));
}

TEST(ScanForward, SingleStep) {
    const auto in = scalar_inputs({0.25}, {2.0}, {3.0}, 0.5, {4.0});
    const auto pre = scan_forward_seq(in, scalar_state(1.0));
    EXPECT_DOUBLE_EQ(pre.y(0, 0), 3.0 * 1.0 + 0.5 * 4.0);
    EXPECT_DOUBLE_EQ(pre.h_terminal.h(0, 0), 0.25 + 8.0);
    const auto post = scan_forward_seq(in, scalar_state(1.0), Readout::post);
    EXPECT_DOUBLE_EQ(post.y(0, 0), 3.0 * 8.25 + 2.0);
}

TEST(ScanForward, OverflowNamesTimestep) {
    const auto in = scalar_inputs({1e200, 1e200, 1e200}, {0, 0, 0}, {1, 1, 1}, 0.0, {0, 0, 0});
    try {
        scan_forward_seq(in, scalar_state(1.0));
        FAIL() << "expected NumericError";
    } catch (const NumericError& e) {
        EXPECT_EQ(e.where, "timestep 2");
    }
}

TEST(ScanForward, RejectsBadShapes) {
    std::mt19937_64 rng(2);
    const auto in = random_inputs(rng, 4, 2, 3);
    EXPECT_THROW(scan_forward_seq(in, BoundaryState<double>::zeros(3, 2)), ShapeError);
    auto bad = BoundaryState<double>::zeros(2, 3);
    bad.h(0, 0) = std::nan("");
    EXPECT_THROW(scan_forward_seq(in, bad), InvalidArgument);
}

TEST(ScanMonoid, IdentityAndComposition) {
    const ScanPair<double> p{0.7, -1.5};
    const auto left = compose(scan_identity<double>(), p);
    EXPECT_EQ(left.a, p.a);
    EXPECT_EQ(left.b, p.b);
    const auto q = compose(ScanPair<double>{2, 3}, ScanPair<double>{4, 5});
    EXPECT_EQ(q.a, 8);
    EXPECT_EQ(q.b, 13);
}

TEST(ScanMonoid, Associative) {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> u(-2, 2);
    for (int i = 0; i < 100; ++i) {
        const ScanPair<double> a{u(rng), u(rng)}, b{u(rng), u(rng)}, c{u(rng), u(rng)};
        const auto l = compose(compose(a, b), c), r = compose(a, compose(b, c));
        EXPECT_NEAR(l.a, r.a, 1e-12);
        EXPECT_NEAR(l.b, r.b, 1e-12);
    }
}

TEST(ScanPrefix, SingleChunkMatchesSequential) {
    std::mt19937_64 rng(4);
    const auto in = random_inputs(rng, 17, 3, 4);
    const auto h0 = random_state(rng, 3, 4);
    const auto seq = scan_forward_seq(in, h0);
    const auto pre = scan_forward_prefix(in, h0, 17);
    EXPECT_LE(rel_error(seq.y, pre.y), 1e-12);
    EXPECT_LE(rel_error(seq.h_terminal.h, pre.h_terminal.h), 1e-12);
}

TEST(ScanPrefix, AllChunkSizesMatchSequential) {
    std::mt19937_64 rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const Index T = 1 + Index(rng() % 64);
        const auto in = random_inputs(rng, T, 1 + rng() % 8, 1 + rng() % 8);
        const auto h0 = random_state(rng, in.d_inner(), in.d_state());
        for (Readout r : {Readout::pre, Readout::post}) {
            const auto seq = scan_forward_seq(in, h0, r);
            for (Index chunk : {Index(1), Index(2), Index(3), Index(7), T}) {
                const auto pre = scan_forward_prefix(in, h0, chunk, r);
                EXPECT_LE(rel_error(seq.y, pre.y), 1e-10) << "T=" << T << " chunk=" << chunk;
                EXPECT_LE(rel_error(seq.h_terminal.h, pre.h_terminal.h), 1e-10);
            }
        }
    }
}

TEST(ScanPrefix, RejectsZeroChunk) {
    std::mt19937_64 rng(6);
    const auto in = random_inputs(rng, 4, 1, 1);
    EXPECT_THROW(scan_forward_prefix(in, BoundaryState<double>::zeros(1, 1), 0), InvalidArgument);
}

TEST(ScanOracle, ScalarExampleExact) {
    const auto in = scalar_inputs({0.5, 0.5, 0.5}, {1, 1, 1}, {1, 1, 1}, 0.0, {1, 0, 0});
    for (double h : {0.0, 2.0}) {
        const auto a = scan_forward_seq(in, scalar_state(h));
        const auto b = scan_oracle_unrolled(in, scalar_state(h));
        EXPECT_EQ(a.y, b.y);
        EXPECT_EQ(a.h_terminal.h, b.h_terminal.h);
    }
}

TEST(ScanOracle, ZeroInitialStateIsConvolution) {
    std::mt19937_64 rng(7);
    const auto in = random_inputs(rng, 9, 1, 1);
    const auto out = scan_oracle_unrolled(in, scalar_state(0.0));
    // y(t) = D u(t) + C_t sum_{i<t} (prod_{j=i+1}^{t-1} a_j) b_i u_i
    for (Index t = 0; t < 9; ++t) {
        double conv = 0;
        for (Index i = 0; i < t; ++i) {
            double kernel = in.b_bar(i, 0);
            for (Index j = i + 1; j < t; ++j) kernel *= in.a_bar(j, 0);
            conv += kernel * in.u(i, 0);
        }
        EXPECT_NEAR(out.y(t, 0), in.d_skip(0, 0) * in.u(t, 0) + in.c(t, 0) * conv, 1e-14);
    }
}

TEST(ScanOracle, RandomInstancesMatchSequential) {
    std::mt19937_64 rng(8);
    const auto in = random_inputs(rng, 32, 4, 8);
    const auto h0 = random_state(rng, 4, 8);
    const auto a = scan_forward_seq(in, h0);
    const auto b = scan_oracle_unrolled(in, h0);
    EXPECT_LE(rel_error(a.y, b.y), 1e-10);
    EXPECT_LE(rel_error(a.h_terminal.h, b.h_terminal.h), 1e-10);
}

TEST(ScanBackward, ZeroCotangentGivesZeroGradients) {
    std::mt19937_64 rng(9);
    const auto in = random_inputs(rng, 6, 2, 3);
    const auto g = scan_backward(in, random_state(rng, 2, 3), Mat<double>::Zero(6, 2).eval(),
                                 AdjointSeed<double>::zeros(2, 3));
    EXPECT_TRUE(g.a_bar.isZero(0.0));
    EXPECT_TRUE(g.b_bar_u.isZero(0.0));
    EXPECT_TRUE(g.c.isZero(0.0));
    EXPECT_TRUE(g.d_skip.isZero(0.0));
    EXPECT_TRUE(g.u.isZero(0.0));
    EXPECT_TRUE(g.h0.isZero(0.0));
}

TEST(ScanBackward, ScalarReadoutAdjoint) {
    const auto in = scalar_inputs({0.5, 0.5, 0.5}, {1, 1, 1}, {1, 1, 1}, 0.0, {1, 0, 0});
    Mat<double> g_y(3, 1);
    g_y << 0, 0, 1;
    const auto g = scan_backward(in, scalar_state(0.0), g_y, AdjointSeed<double>::zeros(1, 1));
    EXPECT_DOUBLE_EQ(g.h0(0, 0), 0.25);
    auto f = [&](const Mat<double>& h) { return Mat<double>(scan_forward_seq(in, BoundaryState<double>{h, 0}).y.row(2)); };
    EXPECT_NEAR(central_difference_jacobian<double>(f, scalar_mat(0.0), 1e-5)(0, 0), 0.25, 1e-10);
}

TEST(ScanBackward, TerminalSeedPropagatesThroughDecayProduct) {
    std::mt19937_64 rng(10);
    const Index T = 7, di = 2, ds = 3;
    const auto in = random_inputs(rng, T, di, ds);
    const auto h0 = random_state(rng, di, ds);
    for (Index e = 0; e < di * ds; ++e) {
        Mat<double> seed = Mat<double>::Zero(di, ds);
        seed.data()[e] = 1.0;
        const auto g = scan_backward(in, h0, Mat<double>::Zero(T, di).eval(), AdjointSeed<double>{seed});
        double prod = 1;
        for (Index t = 0; t < T; ++t) prod *= in.a_bar(t, e);
        for (Index k = 0; k < di * ds; ++k) EXPECT_NEAR(g.h0.data()[k], k == e ? prod : 0.0, 1e-15);
        auto f = [&](const Mat<double>& h) {
            return Mat<double>::Constant(1, 1, scan_forward_seq(in, BoundaryState<double>{h, 0}).h_terminal.h.data()[e]);
        };
        const Mat<double> fd = central_difference_jacobian<double>(f, h0.h, 1e-5);
        EXPECT_NEAR(fd(0, e), prod, 1e-9);
    }
}

class ScanGradient : public ::testing::TestWithParam<std::tuple<Readout, Index>> {};

TEST_P(ScanGradient, MatchesFiniteDifferences) {
    const auto [readout, chunk] = GetParam();
    std::mt19937_64 rng(11);
    const Index T = 11, di = 3, ds = 4;
    auto in = random_inputs(rng, T, di, ds);
    auto h0 = random_state(rng, di, ds);
    const Mat<double> g_y = random_mat(rng, T, di);
    const Mat<double> g_h = random_mat(rng, di, ds);
    const auto g = scan_backward(in, h0, g_y, AdjointSeed<double>{g_h}, readout, chunk);

    const double eps = 1e-6;
    auto obj = [&] { return scan_objective(in, h0, g_y, g_h, readout); };
    EXPECT_LE(rel_error(g.h0, central_difference_gradient<double>(obj, h0.h, eps)), 1e-5);
    EXPECT_LE(rel_error(g.a_bar, central_difference_gradient<double>(obj, in.a_bar, eps)), 1e-5);
    EXPECT_LE(rel_error(g.b_bar_u, central_difference_gradient<double>(obj, in.b_bar_u, eps)), 1e-5);
    EXPECT_LE(rel_error(g.c, central_difference_gradient<double>(obj, in.c, eps)), 1e-5);
    EXPECT_LE(rel_error(g.d_skip, central_difference_gradient<double>(obj, in.d_skip, eps)), 1e-5);
    // u enters the objective directly only through D u (b_bar_u is a separate input here).
    Mat<double> u_copy = in.u;
    auto obj_u = [&] {
        SelectiveInputs<double> w = in;
        w.u = u_copy;
        return scan_objective(w, h0, g_y, g_h, readout);
    };
    EXPECT_LE(rel_error(g.u, central_difference_gradient<double>(obj_u, u_copy, eps)), 1e-5);
}

INSTANTIATE_TEST_SUITE_P(ReadoutsAndChunks, ScanGradient,
                         ::testing::Combine(::testing::Values(Readout::pre, Readout::post),
                                            ::testing::Values(Index(1), Index(4), Index(16))));

TEST(ScanBackward, UsesForwardCheckpoints) {
    std::mt19937_64 rng(12);
    const auto in = random_inputs(rng, 13, 2, 2);
    const auto h0 = random_state(rng, 2, 2);
    const Mat<double> g_y = random_mat(rng, 13, 2);
    const auto seed = AdjointSeed<double>{random_mat(rng, 2, 2)};
    const auto fwd = scan_forward_seq(in, h0, Readout::pre, 5);
    EXPECT_EQ(fwd.checkpoints.size(), 3u);
    const auto a = scan_backward(in, h0, g_y, seed, Readout::pre, 5, &fwd);
    const auto b = scan_backward(in, h0, g_y, seed, Readout::pre, 13);
    EXPECT_LE(rel_error(a.a_bar, b.a_bar), 1e-14);
    EXPECT_LE(rel_error(a.h0, b.h0), 1e-14);
}

TEST(ScanJacobian, StrictlyCausal) {
    std::mt19937_64 rng(13);
    const Index T = 8, di = 2, ds = 3;
    const auto in = random_inputs(rng, T, di, ds);
    const Mat<double> jac = jacobian_numeric(in, random_state(rng, di, ds), JacobianWrt::u);
    for (Index j = 0; j < T; ++j)
        for (Index i = j + 1; i < T; ++i)
            for (Index a = 0; a < di; ++a)
                for (Index b = 0; b < di; ++b) EXPECT_LT(std::abs(jac(j * di + a, i * di + b)), 1e-8);
}

TEST(ScanJacobian, DiagonalBlockIsSkip) {
    std::mt19937_64 rng(14);
    const Index T = 6, di = 3, ds = 2;
    const auto in = random_inputs(rng, T, di, ds);
    const Mat<double> jac = jacobian_numeric(in, random_state(rng, di, ds), JacobianWrt::u);
    for (Index t = 0; t < T; ++t)
        for (Index a = 0; a < di; ++a)
            for (Index b = 0; b < di; ++b)
                EXPECT_NEAR(jac(t * di + a, t * di + b), a == b ? in.d_skip(0, a) : 0.0, 1e-8);
}

TEST(ScanJacobian, InitialStateColumnSpace) {
    std::mt19937_64 rng(15);
    const Index T = 10, di = 2, ds = 3;
    const auto in = random_inputs(rng, T, di, ds);
    const Mat<double> jac = jacobian_numeric(in, random_state(rng, di, ds), JacobianWrt::h0);
    EXPECT_EQ(jac.cols(), di * ds);
    Eigen::FullPivLU<Eigen::MatrixXd> lu(jac);
    EXPECT_LE(lu.rank(), di * ds);
}

TEST(ScanStability, TerminalStatesContract) {
    std::mt19937_64 rng(16);
    for (int trial = 0; trial < 20; ++trial) {
        auto p = init_ssm_params<double>(3, 4, rng);
        const auto in = selective_heads(random_mat(rng, 16, 3), p);
        const double rho = contraction_factor(in);
        EXPECT_LT(rho, 1.0);
        const auto h0 = random_state(rng, 3, 4), h1 = random_state(rng, 3, 4);
        const auto a = scan_forward_seq(in, h0), b = scan_forward_seq(in, h1);
        EXPECT_LE((a.h_terminal.h - b.h_terminal.h).norm(), std::pow(rho, 16) * (h0.h - h1.h).norm() * (1 + 1e-12));
    }
}

TEST(ScanStability, TerminalStateIsAffineInInitialState) {
    std::mt19937_64 rng(17);
    const auto in = random_inputs(rng, 12, 2, 3);
    const auto zero = scan_forward_seq(in, BoundaryState<double>::zeros(2, 3)).h_terminal.h;
    const auto h1 = random_state(rng, 2, 3), h2 = random_state(rng, 2, 3);
    auto lin = [&](const Mat<double>& h) { return Mat<double>(scan_forward_seq(in, BoundaryState<double>{h, 0}).h_terminal.h - zero); };
    const Mat<double> sum = lin(Mat<double>(1.5 * h1.h - 0.5 * h2.h));
    const Mat<double> parts = 1.5 * lin(h1.h) - 0.5 * lin(h2.h);
    EXPECT_LE((sum - parts).cwiseAbs().maxCoeff(), 1e-12);
}
