#include "sfm/sampler.hpp"

#include "sfm/geometry.hpp"
#include "sfm/integrate.hpp"

namespace sfm {

namespace {

Mat euler_step(FlowKind kind, const Mat& x, const Mat& v, double h) {
    switch (kind) {
        case FlowKind::Sfm:
            return geo::exp_sphere_rows(x, h * v);
        case FlowKind::LinearFm:
            return geo::clip_rows(ManifoldMode::Simplex, x + h * v);
        case FlowKind::SfmNoPi: {
            Mat out(x.rows(), x.cols());
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                const Vec base = geo::clamp_interior(x.row(r).transpose(), 1e-9);
                out.row(r) = geo::exp_stat(base, Vec(h * v.row(r).transpose())).transpose();
            }
            return out;
        }
    }
    throw std::invalid_argument("euler_step: bad kind");
}

void record(Trajectory* traj, double t, const Mat& x) {
    if (!traj) return;
    traj->times.push_back(t);
    traj->states.push_back(x);
}

}  // namespace

Mat sample_euler_field(const BatchField& field, FlowKind kind, Mat x0, int D, int N,
                       Trajectory* traj) {
    if (N < 1) throw std::invalid_argument("sample_euler: N must be >= 1");
    (void)D;
    record(traj, 0.0, x0);
    const double h = 1.0 / static_cast<double>(N);
    for (int k = 0; k < N; ++k) {
        const double t = static_cast<double>(k) / static_cast<double>(N);
        const Mat v = field(x0, t);
        x0 = euler_step(kind, x0, v, h);
        if (!x0.allFinite()) throw NumericalError("sample_euler: non-finite state");
        record(traj, t + h, x0);
    }
    return x0;
}

Mat sample_ode_field(const BatchField& field, FlowKind kind, Mat x0, int D, double rtol,
                     double atol, Trajectory* traj) {
    (void)D;
    const ManifoldMode mode = manifold_of(kind);
    record(traj, 0.0, x0);
    OdeOptions opt;
    opt.rtol = rtol;
    opt.atol = atol;
    auto post = [&](Mat& y, double t) {
        y = geo::clip_rows(mode, y);
        record(traj, t, y);
    };
    return dopri5([&](const Mat& y, double t) { return field(y, t); }, std::move(x0), 0.0, 1.0, opt,
                  post);
}

Mat sample_euler(const FlowModel& model, const Mat& mu0, int N, Trajectory* traj) {
    const bool sphere = model.mode() == ManifoldMode::Sphere;
    const Mat x0 = sphere ? geo::to_sphere_rows(mu0) : mu0;
    const Mat x1 = sample_euler_field(model.field(), model.kind(), x0, model.D(), N, traj);
    return sphere ? geo::clip_rows(ManifoldMode::Simplex, geo::to_simplex_rows(x1)) : x1;
}

Mat sample_ode(const FlowModel& model, const Mat& mu0, double rtol, double atol, Trajectory* traj) {
    const bool sphere = model.mode() == ManifoldMode::Sphere;
    const Mat x0 = sphere ? geo::to_sphere_rows(mu0) : mu0;
    const Mat x1 = sample_ode_field(model.field(), model.kind(), x0, model.D(), rtol, atol, traj);
    return sphere ? geo::clip_rows(ManifoldMode::Simplex, geo::to_simplex_rows(x1)) : x1;
}

VecI discretize(const Mat& prob_rows, Rng& rng, DiscretizeMode mode) {
    VecI out(prob_rows.rows());
    for (Eigen::Index r = 0; r < prob_rows.rows(); ++r) {
        if (mode == DiscretizeMode::Argmax) {
            int best = 0;
            for (Eigen::Index c = 1; c < prob_rows.cols(); ++c)
                if (prob_rows(r, c) > prob_rows(r, best)) best = static_cast<int>(c);
            out[r] = best;
        } else {
            const double u = rng.uniform() * prob_rows.row(r).sum();
            double acc = 0.0;
            int pick = static_cast<int>(prob_rows.cols()) - 1;
            for (Eigen::Index c = 0; c < prob_rows.cols(); ++c) {
                acc += prob_rows(r, c);
                if (u < acc) {
                    pick = static_cast<int>(c);
                    break;
                }
            }
            out[r] = pick;
        }
    }
    return out;
}

}  // namespace sfm
