#pragma once

#include <vector>

#include "sfm/types.hpp"

namespace sfm {

/// Minimum-cost perfect matching between batch noise and batch data.
/// `perm[i] = j` pairs noise sample i with data sample j.
struct OTAssignment {
    std::vector<int> perm;
    double cost = 0.0;
};

/// Exact solution of the square assignment problem (Kuhn-Munkres with
/// potentials, O(B^3)). Returns row -> column assignment.
std::vector<int> solve_assignment(const Mat& cost);

/// B x B cost matrix of Fisher-Rao distances averaged over the D data
/// dimensions; inputs are stacked-row batches (B*D x n).
Mat ot_cost_matrix(const Mat& noise, const Mat& data, int D);

/// Optimal pairing of noise to data under the averaged statistical distance.
/// The argmin is invariant to the constant factor between the categorical
/// and spherical distances.
OTAssignment ot_pair(const Mat& noise, const Mat& data, int D);

}  // namespace sfm
