#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace sfm {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using VecI = Eigen::VectorXi;

/// Thrown when a numerical routine cannot continue (solver underflow,
/// non-finite state, ...). The CLI maps this to exit code 2.
struct NumericalError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

enum class ManifoldMode { Sphere, Simplex };

/// Which flow variant a model was trained as. Determines the manifold the
/// integrators run on and how the likelihood terms are assembled.
enum class FlowKind { Sfm, SfmNoPi, LinearFm };

inline ManifoldMode manifold_of(FlowKind k) {
    return k == FlowKind::Sfm ? ManifoldMode::Sphere : ManifoldMode::Simplex;
}

const char* to_string(FlowKind k);
FlowKind flow_kind_from_string(const std::string& s);

// --- invariant checks -------------------------------------------------------

bool is_simplex_point(const Vec& mu, double tol = 1e-9);
bool is_sphere_point(const Vec& x, double tol = 1e-9);

/// Row-wise simplex check for a stacked D x n (or B*D x n) matrix.
bool is_prob_matrix(const Mat& rows, double tol = 1e-9);
bool is_sphere_matrix(const Mat& rows, double tol = 1e-9);

bool is_interior(const Vec& mu, double eps = 1e-12);
bool is_interior_matrix(const Mat& rows, double eps = 1e-12);

// --- batched state ----------------------------------------------------------

/// Time-stamped sequence of manifold states produced by an integrator.
/// Each state holds a whole batch as stacked rows (B*D x n); `logp`, when
/// used, carries one accumulator per batch element.
struct Trajectory {
    std::vector<double> times;
    std::vector<Mat> states;
    std::vector<Vec> logp;

    bool times_increasing() const;
};

}  // namespace sfm
