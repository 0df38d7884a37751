#include "sfm/ot.hpp"

#include <limits>

#include "sfm/geometry.hpp"

namespace sfm {

std::vector<int> solve_assignment(const Mat& cost) {
    const int n = static_cast<int>(cost.rows());
    if (n == 0) throw std::invalid_argument("solve_assignment: empty cost matrix");
    if (cost.cols() != n) throw std::invalid_argument("solve_assignment: matrix must be square");

    constexpr double inf = std::numeric_limits<double>::infinity();
    std::vector<double> u(n + 1, 0.0), v(n + 1, 0.0);
    std::vector<int> p(n + 1, 0), way(n + 1, 0);

    for (int i = 1; i <= n; ++i) {
        p[0] = i;
        int j0 = 0;
        std::vector<double> minv(n + 1, inf);
        std::vector<char> used(n + 1, 0);
        do {
            used[j0] = 1;
            const int i0 = p[j0];
            int j1 = 0;
            double delta = inf;
            for (int j = 1; j <= n; ++j) {
                if (used[j]) continue;
                const double cur = cost(i0 - 1, j - 1) - u[i0] - v[j];
                if (cur < minv[j]) {
                    minv[j] = cur;
                    way[j] = j0;
                }
                if (minv[j] < delta) {
                    delta = minv[j];
                    j1 = j;
                }
            }
            for (int j = 0; j <= n; ++j) {
                if (used[j]) {
                    u[p[j]] += delta;
                    v[j] -= delta;
                } else {
                    minv[j] -= delta;
                }
            }
            j0 = j1;
        } while (p[j0] != 0);
        do {
            const int j1 = way[j0];
            p[j0] = p[j1];
            j0 = j1;
        } while (j0);
    }

    std::vector<int> row_to_col(n, -1);
    for (int j = 1; j <= n; ++j)
        if (p[j] > 0) row_to_col[p[j] - 1] = j - 1;
    return row_to_col;
}

Mat ot_cost_matrix(const Mat& noise, const Mat& data, int D) {
    if (noise.rows() != data.rows() || noise.rows() % D != 0)
        throw std::invalid_argument("ot_cost_matrix: batch shape mismatch");
    const Eigen::Index B = noise.rows() / D;
    Mat cost(B, B);
    for (Eigen::Index i = 0; i < B; ++i) {
        for (Eigen::Index j = 0; j < B; ++j) {
            double acc = 0.0;
            for (int d = 0; d < D; ++d)
                acc += geo::dist_cat(noise.row(i * D + d), data.row(j * D + d));
            cost(i, j) = acc / static_cast<double>(D);
        }
    }
    return cost;
}

OTAssignment ot_pair(const Mat& noise, const Mat& data, int D) {
    const Mat cost = ot_cost_matrix(noise, data, D);
    OTAssignment out;
    out.perm = solve_assignment(cost);
    for (size_t i = 0; i < out.perm.size(); ++i) out.cost += cost(static_cast<Eigen::Index>(i), out.perm[i]);
    return out;
}

}  // namespace sfm
