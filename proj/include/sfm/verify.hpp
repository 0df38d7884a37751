#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "sfm/rng.hpp"
#include "sfm/types.hpp"

namespace sfm {

struct CheckResult {
    std::string name;
    bool pass = false;
    double observed = 0.0;   // worst error or measured value
    double tolerance = 0.0;
    std::string note;
};

struct VerifyOptions {
    uint64_t seed = 0;
    int points = 1000;      // random points per manifold size
    int ot_trials = 50;     // brute-force assignment comparisons
    int hutchinson_probes = 10000;
};

/// Runs the geometry / gradient / OT / likelihood invariant suite and
/// returns one row per check.
std::vector<CheckResult> run_verification(const VerifyOptions& opt);

/// Prints an aligned table; returns true iff every check passed.
bool print_verification(const std::vector<CheckResult>& results, std::ostream& os);

/// Verification oracle: integrates the great-circle geodesic equation
/// x'' = -|u0|^2 x with classic RK4 and returns the endpoint at unit time.
/// Independent of the closed-form exponential map it is checked against.
Vec geodesic_ode_oracle(const Vec& x0, const Vec& u0, int steps);

/// Random interior simplex points as stacked rows (uniform draws, floored
/// away from the boundary and renormalized).
Mat random_interior_simplex(int count, int n, Rng& rng, double min_coord = 1e-4);

/// Exhaustive minimum assignment cost for small batches.
double brute_force_assignment_cost(const Mat& cost);

}  // namespace sfm
