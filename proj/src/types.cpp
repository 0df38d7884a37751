#include "sfm/types.hpp"

namespace sfm {

const char* to_string(FlowKind k) {
    switch (k) {
        case FlowKind::Sfm: return "sfm";
        case FlowKind::SfmNoPi: return "sfm_nopi";
        case FlowKind::LinearFm: return "linearfm";
    }
    return "?";
}

FlowKind flow_kind_from_string(const std::string& s) {
    if (s == "sfm") return FlowKind::Sfm;
    if (s == "sfm_nopi") return FlowKind::SfmNoPi;
    if (s == "linearfm") return FlowKind::LinearFm;
    throw std::invalid_argument("unknown flow mode: " + s);
}

bool is_simplex_point(const Vec& mu, double tol) {
    if (mu.size() == 0) return false;
    if (mu.minCoeff() < -tol) return false;
    return std::abs(mu.sum() - 1.0) <= tol;
}

bool is_sphere_point(const Vec& x, double tol) {
    if (x.size() == 0) return false;
    if (x.minCoeff() < -tol) return false;
    return std::abs(x.norm() - 1.0) <= tol;
}

bool is_prob_matrix(const Mat& rows, double tol) {
    if (rows.size() == 0) return false;
    if (rows.minCoeff() < -tol) return false;
    return ((rows.rowwise().sum().array() - 1.0).abs() <= tol).all();
}

bool is_sphere_matrix(const Mat& rows, double tol) {
    if (rows.size() == 0) return false;
    if (rows.minCoeff() < -tol) return false;
    return ((rows.rowwise().norm().array() - 1.0).abs() <= tol).all();
}

bool is_interior(const Vec& mu, double eps) {
    return mu.size() > 0 && mu.minCoeff() > eps;
}

bool is_interior_matrix(const Mat& rows, double eps) {
    return rows.size() > 0 && rows.minCoeff() > eps;
}

bool Trajectory::times_increasing() const {
    for (size_t i = 1; i < times.size(); ++i)
        if (times[i] <= times[i - 1]) return false;
    return true;
}

}  // namespace sfm
