#pragma once

#include "sfm/flow_model.hpp"
#include "sfm/rng.hpp"
#include "sfm/types.hpp"

namespace sfm {

/// N fixed steps at t = 0, 1/N, ..., (N-1)/N. Each step moves along the
/// manifold exponential map of the field value scaled by 1/N: great-circle
/// step in sphere mode, straight step on the simplex for the linear flow,
/// statistical-manifold exp for the direct variant. States are kept valid
/// (clip + renormalize) throughout. `x0` is in the flow's native
/// coordinates; so is the returned state.
Mat sample_euler_field(const BatchField& field, FlowKind kind, Mat x0, int D, int N,
                       Trajectory* traj = nullptr);

/// Adaptive Dormand-Prince in ambient coordinates from t=0 to t=1, with the
/// state projected back onto the manifold after every accepted step.
Mat sample_ode_field(const BatchField& field, FlowKind kind, Mat x0, int D, double rtol,
                     double atol, Trajectory* traj = nullptr);

/// Model-level sampling: takes prior draws as a stacked ProbMatrix batch,
/// runs the integrator in the model's native coordinates and maps the result
/// back to categorical distributions.
Mat sample_euler(const FlowModel& model, const Mat& mu0, int N, Trajectory* traj = nullptr);
Mat sample_ode(const FlowModel& model, const Mat& mu0, double rtol = 1e-5, double atol = 1e-5,
               Trajectory* traj = nullptr);

/// Draws one class index per stacked row. Sample mode draws from the row's
/// categorical distribution; argmax mode is deterministic with ties broken
/// toward the lowest index.
enum class DiscretizeMode { Argmax, Sample };
VecI discretize(const Mat& prob_rows, Rng& rng, DiscretizeMode mode);

}  // namespace sfm
