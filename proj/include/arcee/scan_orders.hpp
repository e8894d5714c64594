#pragma once

// 2-D grid traversal permutations for flattened image tokens.

#include "arcee/tensor.hpp"

#include <array>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace arcee {

// Serpentine traversals. `_flip` variants mirror the grid before walking
// (rows start at the right edge, columns start at the bottom); `_rev` walks the
// resulting path backwards. The enumerator order is the order assign_orders
// cycles through.
enum class ScanRule : int {
    row_serpentine = 0,
    col_serpentine,
    row_serpentine_rev,
    col_serpentine_rev,
    row_serpentine_flip,
    col_serpentine_flip,
    row_serpentine_flip_rev,
    col_serpentine_flip_rev,
};

inline constexpr int kNumScanRules = 8;

inline constexpr std::array<std::string_view, kNumScanRules> kScanRuleNames = {
    "row_serpentine",      "col_serpentine",      "row_serpentine_rev",      "col_serpentine_rev",
    "row_serpentine_flip", "col_serpentine_flip", "row_serpentine_flip_rev", "col_serpentine_flip_rev",
};

inline std::string_view rule_name(ScanRule r) { return kScanRuleNames[static_cast<int>(r)]; }

inline ScanRule rule_from_name(std::string_view name) {
    for (int i = 0; i < kNumScanRules; ++i)
        if (kScanRuleNames[i] == name) return static_cast<ScanRule>(i);
    throw InvalidArgument("unknown scan rule '" + std::string(name) + "'");
}

struct ScanOrder {
    std::vector<Index> perm;      // perm[step] = raster index visited at that step
    std::vector<Index> inv_perm;  // inv_perm[raster index] = step
    ScanRule rule = ScanRule::row_serpentine;

    Index size() const { return static_cast<Index>(perm.size()); }
};

inline ScanOrder make_order(ScanRule rule, Index height, Index width) {
    require(height >= 1 && width >= 1, "make_order: grid must be at least 1x1");
    const Index T = height * width;
    const int id = static_cast<int>(rule);
    const bool by_col = id % 2 == 1;
    const bool reversed = id == 2 || id == 3 || id == 6 || id == 7;
    const bool flipped = id >= 4;

    ScanOrder order;
    order.rule = rule;
    order.perm.reserve(T);
    const Index outer = by_col ? width : height;
    const Index inner = by_col ? height : width;
    for (Index o = 0; o < outer; ++o) {
        for (Index s = 0; s < inner; ++s) {
            Index along = (o % 2 == 0) ? s : inner - 1 - s;
            if (flipped) along = inner - 1 - along;
            const Index r = by_col ? along : o;
            const Index c = by_col ? o : along;
            order.perm.push_back(r * width + c);
        }
    }
    if (reversed) std::reverse(order.perm.begin(), order.perm.end());
    order.inv_perm.assign(T, 0);
    for (Index i = 0; i < T; ++i) order.inv_perm[order.perm[i]] = i;
    return order;
}

// Block l gets rule (l mod k); k must be one of {1, 2, 4, 8}.
inline std::vector<ScanRule> assign_orders(int depth, int k) {
    require(depth >= 1, "assign_orders: depth must be >= 1");
    require(k == 1 || k == 2 || k == 4 || k == 8, "assign_orders: k must be one of {1,2,4,8}");
    std::vector<ScanRule> rules;
    rules.reserve(depth);
    for (int l = 0; l < depth; ++l) rules.push_back(static_cast<ScanRule>(l % k));
    return rules;
}

enum class PermuteDirection { fwd, inv };

// fwd gathers rows by perm (raster -> scan order); inv gathers by inv_perm.
template <typename Real>
Mat<Real> permute_tokens(const Mat<Real>& x, const ScanOrder& order, PermuteDirection dir) {
    require_shape(x.rows() == order.size(), "permute_tokens: token count " + std::to_string(x.rows()) +
                                                " does not match order length " +
                                                std::to_string(order.size()));
    const auto& idx = dir == PermuteDirection::fwd ? order.perm : order.inv_perm;
    Mat<Real> out(x.rows(), x.cols());
    for (Index i = 0; i < x.rows(); ++i) out.row(i) = x.row(idx[i]);
    return out;
}

}  // namespace arcee
