#pragma once

#include <Eigen/Dense>

#include <cmath>

#include "sfm/types.hpp"

// Closed-form Riemannian kernels for the manifold of categorical
// distributions, its image on the positive orthant of the unit sphere under
// the componentwise square-root map, and the Euclidean simplex baseline.
//
// All functions here are pure; they can be called concurrently from any
// number of threads. arccos arguments are clamped to [-1, 1] and square-root
// arguments to [0, inf) throughout: floating-point noise at the boundary is
// the dominant failure mode these kernels have to absorb.

namespace sfm::geo {

/// Angle below which the exponential map switches to the Taylor series of
/// sin(t)/t and friends.
inline constexpr double kSincSeriesThreshold = 1e-8;

/// Distance below which the logarithm map returns the zero tangent.
inline constexpr double kLogZeroThreshold = 1e-10;

template <typename Scalar>
Scalar clamp(Scalar v, Scalar lo, Scalar hi) {
    return v < lo ? lo : (v > hi ? hi : v);
}

/// Unnormalized sinc, safe at zero.
template <typename Scalar>
Scalar sinc(Scalar theta) {
    if (std::abs(theta) < Scalar(kSincSeriesThreshold)) {
        const Scalar t2 = theta * theta;
        return Scalar(1) - t2 / Scalar(6) + t2 * t2 / Scalar(120);
    }
    return std::sin(theta) / theta;
}

// --- simplex <-> sphere -----------------------------------------------------

/// Componentwise square root, mapping a categorical distribution to the
/// positive orthant of the unit sphere.
template <typename Derived>
typename Derived::PlainObject to_sphere(const Eigen::MatrixBase<Derived>& mu) {
    return mu.cwiseMax(typename Derived::Scalar(0)).cwiseSqrt();
}

/// Inverse map: componentwise square.
template <typename Derived>
typename Derived::PlainObject to_simplex(const Eigen::MatrixBase<Derived>& x) {
    return x.cwiseProduct(x);
}

// --- distances --------------------------------------------------------------

/// Fisher-Rao geodesic distance between two categorical distributions:
/// twice the arccosine of the Bhattacharyya coefficient. Range [0, pi].
template <typename D1, typename D2>
typename D1::Scalar dist_cat(const Eigen::MatrixBase<D1>& mu, const Eigen::MatrixBase<D2>& nu) {
    using S = typename D1::Scalar;
    const S bc = mu.cwiseMax(S(0)).cwiseProduct(nu.cwiseMax(S(0)).derived()).cwiseSqrt().sum();
    return S(2) * std::acos(clamp(bc, S(0), S(1)));
}

/// Great-circle distance on the unit sphere; at most pi/2 on the positive
/// orthant. Equals half of dist_cat through the square-root map.
template <typename D1, typename D2>
typename D1::Scalar dist_sphere(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& y) {
    using S = typename D1::Scalar;
    return std::acos(clamp(x.dot(y), S(-1), S(1)));
}

// --- tangent projections ----------------------------------------------------

/// Orthogonal projection of an ambient vector onto the tangent space of the
/// sphere at x: w - <x,w> x. Idempotent.
template <typename D1, typename D2>
typename D2::PlainObject project_tangent_sphere(const Eigen::MatrixBase<D1>& x,
                                                const Eigen::MatrixBase<D2>& w) {
    return w - x.dot(w) * x;
}

/// Projection onto the sum-zero tangent space of the simplex: w - mean(w).
template <typename Derived>
typename Derived::PlainObject project_tangent_simplex(const Eigen::MatrixBase<Derived>& w) {
    using S = typename Derived::Scalar;
    return w.array() - w.sum() / S(w.size());
}

// --- sphere exponential / logarithm maps ------------------------------------

/// exp_x(u) = x cos|u| + u sinc|u|, renormalized to unit length.
template <typename D1, typename D2>
typename D1::PlainObject exp_sphere(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& u) {
    using S = typename D1::Scalar;
    const S theta = u.norm();
    typename D1::PlainObject out = std::cos(theta) * x + sinc(theta) * u;
    out /= out.norm();
    return out;
}

/// log_x(y): tangent at x of length dist_sphere(x, y) pointing along the
/// great circle toward y. Returns zero below kLogZeroThreshold. Antipodal
/// pairs (which cannot occur on the positive orthant) are rejected.
/// The angle comes from atan2(|P_x(y-x)|, <x,y>): the arccosine form loses
/// half the significant digits for nearly identical points.
template <typename D1, typename D2>
typename D1::PlainObject log_sphere(const Eigen::MatrixBase<D1>& x, const Eigen::MatrixBase<D2>& y) {
    using S = typename D1::Scalar;
    typename D1::PlainObject p = y - x.dot(y) * x;
    const S pn = p.norm();
    const S theta = std::atan2(pn, clamp(x.dot(y), S(-1), S(1)));
    if (theta < S(kLogZeroThreshold)) return D1::PlainObject::Zero(x.size());
    if (pn < S(1e-15))
        throw NumericalError("log_sphere: direction undefined (antipodal points?)");
    p *= theta / pn;
    return p;
}

// --- statistical-manifold exponential / logarithm maps -----------------------

inline constexpr double kInteriorEps = 1e-12;

template <typename Derived>
void require_interior(const Eigen::MatrixBase<Derived>& mu, const char* who) {
    if (mu.minCoeff() < typename Derived::Scalar(kInteriorEps))
        throw std::invalid_argument(std::string(who) + ": base point not strictly interior");
}

/// exp map on the categorical manifold (direct parameterization, no sphere
/// transform). Valid only for strictly interior base points; this route is
/// numerically fragile near the boundary.
template <typename D1, typename D2>
typename D1::PlainObject exp_stat(const Eigen::MatrixBase<D1>& mu, const Eigen::MatrixBase<D2>& u) {
    using S = typename D1::Scalar;
    require_interior(mu, "exp_stat");
    const typename D1::PlainObject s = mu.cwiseSqrt();
    const typename D1::PlainObject w = u.cwiseQuotient(S(2) * s);
    const S theta = w.norm();
    typename D1::PlainObject y = std::cos(theta) * s + sinc(theta) * w;
    typename D1::PlainObject out = y.cwiseProduct(y);
    out /= out.sum();
    return out;
}

/// log map on the categorical manifold; the Fisher norm of the result equals
/// dist_cat(mu, nu).
template <typename D1, typename D2>
typename D1::PlainObject log_stat(const Eigen::MatrixBase<D1>& mu, const Eigen::MatrixBase<D2>& nu) {
    using S = typename D1::Scalar;
    require_interior(mu, "log_stat");
    const typename D1::PlainObject smu = mu.cwiseSqrt();
    const typename D1::PlainObject snu = nu.cwiseMax(S(0)).cwiseSqrt();
    const S c = clamp(smu.dot(snu), S(0), S(1));
    const S s2 = S(1) - c * c;
    if (s2 < S(1e-20)) return D1::PlainObject::Zero(mu.size());
    const S scale = S(2) * std::acos(c) / std::sqrt(s2);
    return scale * (smu.cwiseProduct(snu) - c * mu);
}

/// Fisher information inner product at an interior point: sum u_i v_i / mu_i.
template <typename D1, typename D2, typename D3>
typename D1::Scalar inner_fisher(const Eigen::MatrixBase<D1>& mu, const Eigen::MatrixBase<D2>& u,
                                 const Eigen::MatrixBase<D3>& v) {
    require_interior(mu, "inner_fisher");
    return u.cwiseProduct(v.derived()).cwiseQuotient(mu.derived()).sum();
}

// --- conditional flow -------------------------------------------------------

/// Point at parameter t on the geodesic from x0 to x1:
/// exp_{x0}(t log_{x0} x1). Geodesic distance to x1 decays linearly in t.
template <typename D1, typename D2>
typename D1::PlainObject geodesic_interp(const Eigen::MatrixBase<D1>& x0,
                                         const Eigen::MatrixBase<D2>& x1, double t) {
    const typename D1::PlainObject u = log_sphere(x0, x1);
    return exp_sphere(x0, (typename D1::Scalar(t)) * u);
}

/// Target conditional vector field log_{x_t}(x1) / (1 - t). Constant norm
/// along the geodesic, singular at t = 1.
template <typename D1, typename D2>
typename D1::PlainObject cond_vector_field(const Eigen::MatrixBase<D1>& xt,
                                           const Eigen::MatrixBase<D2>& x1, double t) {
    if (t >= 1.0 - 1e-6) throw std::invalid_argument("cond_vector_field: t too close to 1");
    typename D1::PlainObject u = log_sphere(xt, x1);
    u /= typename D1::Scalar(1.0 - t);
    return u;
}

// --- cleanup after numerical steps -------------------------------------------

/// Clip negative coordinates to zero and renormalize to unit Euclidean norm.
template <typename Derived>
typename Derived::PlainObject clip_to_orthant(const Eigen::MatrixBase<Derived>& x) {
    using S = typename Derived::Scalar;
    typename Derived::PlainObject out = x.cwiseMax(S(0));
    const S n = out.norm();
    if (n < S(1e-300)) throw NumericalError("clip_to_orthant: zero vector");
    out /= n;
    return out;
}

/// Clip negative coordinates to zero and renormalize to unit sum.
template <typename Derived>
typename Derived::PlainObject clip_to_simplex(const Eigen::MatrixBase<Derived>& mu) {
    using S = typename Derived::Scalar;
    typename Derived::PlainObject out = mu.cwiseMax(S(0));
    const S s = out.sum();
    if (s < S(1e-300)) throw NumericalError("clip_to_simplex: zero mass");
    out /= s;
    return out;
}

/// Push an interior-degenerate point away from the boundary: floor entries
/// at eps, renormalize to unit sum.
template <typename Derived>
typename Derived::PlainObject clamp_interior(const Eigen::MatrixBase<Derived>& mu,
                                             typename Derived::Scalar eps) {
    typename Derived::PlainObject out = mu.cwiseMax(eps);
    out /= out.sum();
    return out;
}

// --- row-wise (batched) kernels ----------------------------------------------
//
// Batches are stacked-row matrices of shape (B*D) x n: data dimensions are
// independent channels, so every kernel applies row by row with a shared t
// per sample.

inline Mat to_sphere_rows(const Mat& mu) { return mu.cwiseMax(0.0).cwiseSqrt(); }
inline Mat to_simplex_rows(const Mat& x) { return x.cwiseProduct(x); }

inline Vec dist_sphere_rows(const Mat& x, const Mat& y) {
    Vec d(x.rows());
    for (Eigen::Index r = 0; r < x.rows(); ++r) d[r] = dist_sphere(x.row(r), y.row(r));
    return d;
}

inline Vec dist_cat_rows(const Mat& mu, const Mat& nu) {
    Vec d(mu.rows());
    for (Eigen::Index r = 0; r < mu.rows(); ++r) d[r] = dist_cat(mu.row(r), nu.row(r));
    return d;
}

inline Mat exp_sphere_rows(const Mat& x, const Mat& u) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = exp_sphere(x.row(r), u.row(r));
    return out;
}

inline Mat log_sphere_rows(const Mat& x, const Mat& y) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r) out.row(r) = log_sphere(x.row(r), y.row(r));
    return out;
}

/// Row r interpolated with t[r / rows_per_sample]; pass rows_per_sample = 1
/// for one t per row.
inline Mat geodesic_interp_rows(const Mat& x0, const Mat& x1, const Vec& t,
                                Eigen::Index rows_per_sample = 1) {
    Mat out(x0.rows(), x0.cols());
    for (Eigen::Index r = 0; r < x0.rows(); ++r)
        out.row(r) = geodesic_interp(x0.row(r), x1.row(r), t[r / rows_per_sample]);
    return out;
}

inline Mat cond_vector_field_rows(const Mat& xt, const Mat& x1, const Vec& t,
                                  Eigen::Index rows_per_sample = 1) {
    Mat out(xt.rows(), xt.cols());
    for (Eigen::Index r = 0; r < xt.rows(); ++r)
        out.row(r) = cond_vector_field(xt.row(r), x1.row(r), t[r / rows_per_sample]);
    return out;
}

/// Projects each row of w onto the tangent space at the matching row of x.
inline Mat project_tangent_rows(ManifoldMode mode, const Mat& x, const Mat& w) {
    Mat out(w.rows(), w.cols());
    if (mode == ManifoldMode::Sphere) {
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            out.row(r) = w.row(r) - x.row(r).dot(w.row(r)) * x.row(r);
    } else {
        const double n = static_cast<double>(w.cols());
        for (Eigen::Index r = 0; r < w.rows(); ++r)
            out.row(r) = w.row(r).array() - w.row(r).sum() / n;
    }
    return out;
}

inline Mat clip_rows(ManifoldMode mode, const Mat& x) {
    Mat out(x.rows(), x.cols());
    for (Eigen::Index r = 0; r < x.rows(); ++r)
        out.row(r) = mode == ManifoldMode::Sphere ? clip_to_orthant(x.row(r).transpose()).transpose()
                                                  : clip_to_simplex(x.row(r).transpose()).transpose();
    return out;
}

}  // namespace sfm::geo
