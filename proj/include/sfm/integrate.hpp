#pragma once

#include <functional>

#include "sfm/types.hpp"

namespace sfm {

struct OdeOptions {
    double rtol = 1e-5;
    double atol = 1e-5;
    double h_initial = 0.0;  // 0: |t1 - t0| / 100
    double h_min = 1e-12;    // below this the solver aborts
    long max_steps = 2000000;
};

using OdeRhs = std::function<Mat(const Mat&, double)>;
/// Called after each accepted step; mutates the state in place
/// (projection back onto the manifold).
using OdePostStep = std::function<void(Mat&, double)>;
/// Called once before each step attempt (including retries after a
/// rejection) with (t, h); used to refresh per-step randomness so the
/// right-hand side stays consistent across the stages of one attempt.
using OdePreStep = std::function<void(double, double)>;

struct OdeStats {
    long accepted = 0;
    long rejected = 0;
    long rhs_evals = 0;
};

/// Adaptive Dormand-Prince 5(4) over a dense state matrix; integrates from
/// t0 to t1 in either direction. Error control uses the standard mixed
/// absolute/relative norm. Throws NumericalError on step-size underflow or
/// persistent non-finite states.
Mat dopri5(const OdeRhs& rhs, Mat y0, double t0, double t1, const OdeOptions& opt = {},
           const OdePostStep& post_step = nullptr, const OdePreStep& pre_step = nullptr,
           OdeStats* stats = nullptr);

}  // namespace sfm
