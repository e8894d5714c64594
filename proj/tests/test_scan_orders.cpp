#include "test_util.hpp"

#include <gtest/gtest.h>

#include <set>

using namespace arcee;

TEST(MakeOrder, RowSerpentine2x2) {
    EXPECT_EQ(make_order(ScanRule::row_serpentine, 2, 2).perm, (std::vector<Index>{0, 1, 3, 2}));
}

TEST(MakeOrder, ColSerpentine2x2) {
    EXPECT_EQ(make_order(ScanRule::col_serpentine, 2, 2).perm, (std::vector<Index>{0, 2, 3, 1}));
}

TEST(MakeOrder, RemainingRules2x3) {
    // 0 1 2
    // 3 4 5
    EXPECT_EQ(make_order(ScanRule::row_serpentine, 2, 3).perm, (std::vector<Index>{0, 1, 2, 5, 4, 3}));
    EXPECT_EQ(make_order(ScanRule::col_serpentine, 2, 3).perm, (std::vector<Index>{0, 3, 4, 1, 2, 5}));
    EXPECT_EQ(make_order(ScanRule::row_serpentine_rev, 2, 3).perm, (std::vector<Index>{3, 4, 5, 2, 1, 0}));
    EXPECT_EQ(make_order(ScanRule::col_serpentine_rev, 2, 3).perm, (std::vector<Index>{5, 2, 1, 4, 3, 0}));
    EXPECT_EQ(make_order(ScanRule::row_serpentine_flip, 2, 3).perm, (std::vector<Index>{2, 1, 0, 3, 4, 5}));
    EXPECT_EQ(make_order(ScanRule::col_serpentine_flip, 2, 3).perm, (std::vector<Index>{3, 0, 1, 4, 5, 2}));
    EXPECT_EQ(make_order(ScanRule::row_serpentine_flip_rev, 2, 3).perm, (std::vector<Index>{5, 4, 3, 0, 1, 2}));
    EXPECT_EQ(make_order(ScanRule::col_serpentine_flip_rev, 2, 3).perm, (std::vector<Index>{2, 5, 4, 1, 0, 3}));
}

TEST(MakeOrder, Singleton) {
    for (int r = 0; r < kNumScanRules; ++r) EXPECT_EQ(make_order(static_cast<ScanRule>(r), 1, 1).perm, std::vector<Index>{0});
}

TEST(MakeOrder, EmptyGridThrows) {
    EXPECT_THROW(make_order(ScanRule::row_serpentine, 0, 3), InvalidArgument);
}

TEST(MakeOrder, ExhaustiveValidity) {
    for (int r = 0; r < kNumScanRules; ++r)
        for (Index h = 1; h <= 8; ++h)
            for (Index w = 1; w <= 8; ++w) {
                const auto o = make_order(static_cast<ScanRule>(r), h, w);
                ASSERT_EQ(o.size(), h * w);
                std::set<Index> seen(o.perm.begin(), o.perm.end());
                EXPECT_EQ(Index(seen.size()), h * w);
                EXPECT_EQ(*seen.begin(), 0);
                EXPECT_EQ(*seen.rbegin(), h * w - 1);
                for (Index i = 0; i < h * w; ++i) EXPECT_EQ(o.perm[o.inv_perm[i]], i);
                // consecutive steps are grid neighbours
                for (Index i = 1; i < h * w; ++i) {
                    const Index a = o.perm[i - 1], b = o.perm[i];
                    EXPECT_EQ(std::abs(a / w - b / w) + std::abs(a % w - b % w), 1);
                }
            }
}

TEST(RuleNames, RoundTrip) {
    for (int r = 0; r < kNumScanRules; ++r)
        EXPECT_EQ(rule_from_name(rule_name(static_cast<ScanRule>(r))), static_cast<ScanRule>(r));
    EXPECT_THROW(rule_from_name("hilbert"), InvalidArgument);
}

TEST(AssignOrders, CyclesFirstKRules) {
    using R = ScanRule;
    EXPECT_EQ(assign_orders(4, 1), (std::vector<R>{R::row_serpentine, R::row_serpentine, R::row_serpentine, R::row_serpentine}));
    EXPECT_EQ(assign_orders(4, 2), (std::vector<R>{R::row_serpentine, R::col_serpentine, R::row_serpentine, R::col_serpentine}));
    const auto all = assign_orders(8, 8);
    EXPECT_EQ(std::set<R>(all.begin(), all.end()).size(), 8u);
    EXPECT_THROW(assign_orders(4, 3), InvalidArgument);
    EXPECT_THROW(assign_orders(0, 1), InvalidArgument);
}

TEST(PermuteTokens, SerpentineGather) {
    Mat<double> x(4, 1);
    x << 10, 11, 12, 13;
    const auto o = make_order(ScanRule::row_serpentine, 2, 2);
    const Mat<double> y = permute_tokens(x, o, PermuteDirection::fwd);
    EXPECT_EQ(y(0, 0), 10);
    EXPECT_EQ(y(1, 0), 11);
    EXPECT_EQ(y(2, 0), 13);
    EXPECT_EQ(y(3, 0), 12);
}

TEST(PermuteTokens, InverseRestoresInput) {
    std::mt19937_64 rng(1);
    for (int r = 0; r < kNumScanRules; ++r) {
        const auto o = make_order(static_cast<ScanRule>(r), 5, 7);
        const Mat<double> x = arcee::testing::random_mat(rng, 35, 3);
        EXPECT_EQ(permute_tokens(permute_tokens(x, o, PermuteDirection::fwd), o, PermuteDirection::inv), x);
    }
    ScanOrder id;
    id.perm = id.inv_perm = {0, 1, 2};
    const Mat<double> x = arcee::testing::random_mat(rng, 3, 2);
    EXPECT_EQ(permute_tokens(x, id, PermuteDirection::fwd), x);
}

TEST(PermuteTokens, LengthMismatchThrows) {
    const auto o = make_order(ScanRule::row_serpentine, 2, 2);
    EXPECT_THROW(permute_tokens(Mat<double>::Zero(3, 1).eval(), o, PermuteDirection::fwd), ShapeError);
}
