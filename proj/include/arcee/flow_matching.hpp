#pragma once

// Gaussian conditional probability paths x_t = alpha_t z + sigma_t eps with
// noise at t = 0 and data at t = 1, their conditional vector fields, and the
// conditional flow matching regression loss.

#include "arcee/tensor.hpp"

#include <numbers>
#include <random>
#include <string>
#include <vector>

namespace arcee {

enum class ScheduleKind { gvp, linear };

inline ScheduleKind schedule_from_name(const std::string& s) {
    if (s == "gvp") return ScheduleKind::gvp;
    if (s == "linear") return ScheduleKind::linear;
    throw InvalidArgument("unknown schedule '" + s + "'");
}

inline const char* schedule_name(ScheduleKind k) { return k == ScheduleKind::gvp ? "gvp" : "linear"; }

struct ScheduleValues {
    double alpha;
    double sigma;
    double alpha_dot;
    double sigma_dot;
};

// GVP: alpha = sin(pi t / 2), sigma = cos(pi t / 2), so alpha^2 + sigma^2 = 1.
inline ScheduleValues gvp_schedule(double t) {
    require(t >= 0.0 && t <= 1.0, "gvp_schedule: t must lie in [0, 1]");
    constexpr double half_pi = std::numbers::pi / 2.0;
    if (t == 0.0) return {0.0, 1.0, half_pi, 0.0};
    if (t == 1.0) return {1.0, 0.0, 0.0, -half_pi};
    const double s = std::sin(half_pi * t), c = std::cos(half_pi * t);
    return {s, c, half_pi * c, -half_pi * s};
}

inline ScheduleValues linear_schedule(double t) {
    require(t >= 0.0 && t <= 1.0, "linear_schedule: t must lie in [0, 1]");
    return {t, 1.0 - t, 1.0, -1.0};
}

struct InterpolantSchedule {
    ScheduleKind kind = ScheduleKind::gvp;

    ScheduleValues operator()(double t) const {
        return kind == ScheduleKind::gvp ? gvp_schedule(t) : linear_schedule(t);
    }
};

// u_t(x|z) = (sigma_dot/sigma) x + (alpha_dot - alpha sigma_dot / sigma) z
template <typename Real>
Mat<Real> conditional_vf(const Mat<Real>& x_t, const Mat<Real>& z, double t, const InterpolantSchedule& schedule) {
    require_shape(x_t.rows() == z.rows() && x_t.cols() == z.cols(), "conditional_vf: x_t and z shapes differ");
    const ScheduleValues s = schedule(t);
    if (!(s.sigma > 0.0)) throw InvalidArgument("conditional_vf: sigma_t = 0 at t = " + std::to_string(t));
    const double ratio = s.sigma_dot / s.sigma;
    return (Real(ratio) * x_t.array() + Real(s.alpha_dot - s.alpha * ratio) * z.array()).matrix();
}

template <typename Real>
struct PathSample {
    double t = 0.0;
    Mat<Real> z;
    Mat<Real> eps;
    Mat<Real> x_t;
    Mat<Real> target;
};

template <typename Real>
PathSample<Real> make_path_sample(const Mat<Real>& z, Mat<Real> eps, double t, const InterpolantSchedule& schedule) {
    const ScheduleValues s = schedule(t);
    PathSample<Real> p;
    p.t = t;
    p.z = z;
    p.x_t = (Real(s.alpha) * z.array() + Real(s.sigma) * eps.array()).matrix();
    p.eps = std::move(eps);
    p.target = conditional_vf(p.x_t, z, t, schedule);
    return p;
}

template <typename Real, typename Rng>
Mat<Real> standard_normal(Index rows, Index cols, Rng& rng) {
    std::normal_distribution<double> nd(0.0, 1.0);
    Mat<Real> m(rows, cols);
    for (Index k = 0; k < m.size(); ++k) m.data()[k] = Real(nd(rng));
    return m;
}

// Draws t ~ U[0, 1 - t_eps] and eps ~ N(0, I) for every data point, in batch order.
template <typename Real, typename Rng>
std::vector<PathSample<Real>> sample_paths(const std::vector<Mat<Real>>& batch, const InterpolantSchedule& schedule,
                                           double t_eps, Rng& rng) {
    require(!batch.empty(), "cfm: empty batch");
    std::uniform_real_distribution<double> ud(0.0, 1.0 - t_eps);
    std::vector<PathSample<Real>> out;
    out.reserve(batch.size());
    for (const auto& z : batch) {
        const double t = ud(rng);
        out.push_back(make_path_sample(z, standard_normal<Real>(z.rows(), z.cols(), rng), t, schedule));
    }
    return out;
}

template <typename Real>
struct CfmLoss {
    double loss = 0.0;
    // d loss / d prediction for each path sample.
    std::vector<Mat<Real>> g_pred;
};

// Mean squared error over batch and all dimensions. Reduction runs in batch order.
template <typename Real>
CfmLoss<Real> cfm_loss_from_predictions(const std::vector<PathSample<Real>>& paths,
                                        const std::vector<Mat<Real>>& predictions) {
    require(!paths.empty(), "cfm: empty batch");
    require_shape(paths.size() == predictions.size(), "cfm: prediction count mismatch");
    const double denom = double(paths.size()) * double(paths.front().target.size());
    CfmLoss<Real> out;
    for (std::size_t b = 0; b < paths.size(); ++b) {
        require_shape(predictions[b].rows() == paths[b].target.rows() && predictions[b].cols() == paths[b].target.cols(),
                      "cfm: prediction shape mismatch");
        const Mat<Real> diff = predictions[b] - paths[b].target;
        out.loss += diff.template cast<double>().squaredNorm() / denom;
        out.g_pred.push_back((Real(2.0 / denom) * diff.array()).matrix());
    }
    return out;
}

// Loss of `model` (callable (x_t, t) -> prediction) on freshly sampled paths.
template <typename Real, typename Model, typename Rng>
CfmLoss<Real> cfm_loss(const std::vector<Mat<Real>>& batch, const Model& model, const InterpolantSchedule& schedule,
                       double t_eps, Rng& rng) {
    const auto paths = sample_paths(batch, schedule, t_eps, rng);
    std::vector<Mat<Real>> preds;
    preds.reserve(paths.size());
    for (const auto& p : paths) preds.push_back(model(p.x_t, Real(p.t)));
    return cfm_loss_from_predictions(paths, preds);
}

}  // namespace arcee
