#pragma once

// Core numeric aliases and error types shared by every arcee module.

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <string>

namespace arcee {

template <typename Real>
using Mat = Eigen::Matrix<Real, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

template <typename Real>
using Vec = Eigen::Matrix<Real, Eigen::Dynamic, 1>;

using Index = Eigen::Index;

struct InvalidArgument : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

struct ShapeError : std::invalid_argument {
    using std::invalid_argument::invalid_argument;
};

// Raised when a forward or backward sweep produces a non-finite value.
// `where` names the timestep or block so failures can be located.
struct NumericError : std::runtime_error {
    NumericError(const std::string& what_arg, std::string where_arg)
        : std::runtime_error(what_arg + " (" + where_arg + ")"), where(std::move(where_arg)) {}
    std::string where;
};

struct IntegrationError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw InvalidArgument(msg);
}

inline void require_shape(bool cond, const std::string& msg) {
    if (!cond) throw ShapeError(msg);
}

template <typename Derived>
bool all_finite(const Eigen::DenseBase<Derived>& m) {
    return m.allFinite();
}

template <typename Real>
inline Real sigmoid(Real x) {
    return x >= Real(0) ? Real(1) / (Real(1) + std::exp(-x))
                        : std::exp(x) / (Real(1) + std::exp(x));
}

template <typename Real>
inline Real softplus(Real x) {
    // log(1 + e^x) without overflow for large |x|
    return x > Real(0) ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x));
}

template <typename Real>
inline Real silu(Real x) {
    return x * sigmoid(x);
}

template <typename Real>
inline Real silu_grad(Real x) {
    const Real s = sigmoid(x);
    return s * (Real(1) + x * (Real(1) - s));
}

// max|a - b| / max(max|a|, max|b|); zero when both are zero.
template <typename DA, typename DB>
double rel_error(const Eigen::DenseBase<DA>& a, const Eigen::DenseBase<DB>& b) {
    const double diff = (a.derived().template cast<double>() - b.derived().template cast<double>())
                            .cwiseAbs()
                            .maxCoeff();
    const double scale = std::max(a.derived().template cast<double>().cwiseAbs().maxCoeff(),
                                  b.derived().template cast<double>().cwiseAbs().maxCoeff());
    if (scale == 0.0) return diff;
    return diff / scale;
}

}  // namespace arcee
