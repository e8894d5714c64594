#pragma once

// Central finite differences over flattened Eigen tensors.

#include "arcee/tensor.hpp"

#include <functional>

namespace arcee {

// J(r, c) = d f_r / d x_c by central differences with step eps. `f` maps a
// tensor shaped like `x` to any tensor; the output is flattened row-major.
template <typename Real, typename F>
Mat<Real> central_difference_jacobian(F&& f, const Mat<Real>& x, Real eps) {
    Mat<Real> probe = x;
    const Mat<Real> f0 = f(probe);
    const Index rows = f0.size();
    Mat<Real> jac(rows, x.size());
    for (Index c = 0; c < x.size(); ++c) {
        const Real saved = probe.data()[c];
        probe.data()[c] = saved + eps;
        const Mat<Real> fp = f(probe);
        probe.data()[c] = saved - eps;
        const Mat<Real> fm = f(probe);
        probe.data()[c] = saved;
        for (Index r = 0; r < rows; ++r) jac(r, c) = (fp.data()[r] - fm.data()[r]) / (Real(2) * eps);
    }
    return jac;
}

// d loss / d x for a scalar-valued loss, by central differences.
template <typename Real, typename F>
Mat<Real> central_difference_gradient(F&& loss, Mat<Real>& x, Real eps) {
    Mat<Real> g(x.rows(), x.cols());
    for (Index c = 0; c < x.size(); ++c) {
        const Real saved = x.data()[c];
        x.data()[c] = saved + eps;
        const Real lp = loss();
        x.data()[c] = saved - eps;
        const Real lm = loss();
        x.data()[c] = saved;
        g.data()[c] = (lp - lm) / (Real(2) * eps);
    }
    return g;
}

}  // namespace arcee
