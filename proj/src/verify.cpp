#include "sfm/verify.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <numeric>
#include <ostream>

#include "sfm/flow_model.hpp"
#include "sfm/geometry.hpp"
#include "sfm/likelihood.hpp"
#include "sfm/ot.hpp"
#include "sfm/training.hpp"

namespace sfm {

Vec geodesic_ode_oracle(const Vec& x0, const Vec& u0, int steps) {
    const double speed2 = u0.squaredNorm();
    Vec x = x0, u = u0;
    const double h = 1.0 / static_cast<double>(steps);
    auto acc = [&](const Vec& xi) { return Vec(-speed2 * xi); };
    for (int k = 0; k < steps; ++k) {
        const Vec k1x = u, k1u = acc(x);
        const Vec k2x = u + 0.5 * h * k1u, k2u = acc(x + 0.5 * h * k1x);
        const Vec k3x = u + 0.5 * h * k2u, k3u = acc(x + 0.5 * h * k2x);
        const Vec k4x = u + h * k3u, k4u = acc(x + h * k3x);
        x += h / 6.0 * (k1x + 2.0 * k2x + 2.0 * k3x + k4x);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
    }
    return x;
}

Mat random_interior_simplex(int count, int n, Rng& rng, double min_coord) {
    Mat out = sample_prior_batch(count, 1, n, rng);
    for (Eigen::Index r = 0; r < out.rows(); ++r)
        out.row(r) = geo::clamp_interior(out.row(r).transpose(), min_coord).transpose();
    return out;
}

double brute_force_assignment_cost(const Mat& cost) {
    const int B = static_cast<int>(cost.rows());
    std::vector<int> perm(B);
    std::iota(perm.begin(), perm.end(), 0);
    double best = std::numeric_limits<double>::infinity();
    do {
        double c = 0.0;
        for (int i = 0; i < B; ++i) c += cost(i, perm[i]);
        best = std::min(best, c);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

namespace {

const std::vector<int> kSizes = {2, 3, 4, 10, 27};

CheckResult check_roundtrip(const VerifyOptions& opt) {
    CheckResult r{"geometry/sqrt-map round trip", false, 0.0, 1e-12, ""};
    Rng rng = Rng(opt.seed).fork(1);
    for (int n : kSizes) {
        const Mat mu = sample_prior_batch(opt.points, 1, n, rng);
        const Mat back = geo::to_simplex_rows(geo::to_sphere_rows(mu));
        r.observed = std::max(r.observed, (mu - back).cwiseAbs().maxCoeff());
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_distance_factor(const VerifyOptions& opt) {
    CheckResult r{"geometry/sphere distance = cat distance / 2", false, 0.0, 1e-10, ""};
    Rng rng = Rng(opt.seed).fork(2);
    for (int n : kSizes) {
        const Mat mu = sample_prior_batch(opt.points, 1, n, rng);
        const Mat nu = sample_prior_batch(opt.points, 1, n, rng);
        for (int i = 0; i < opt.points; ++i) {
            const double ds = geo::dist_sphere(geo::to_sphere(mu.row(i).transpose()).eval(),
                                               geo::to_sphere(nu.row(i).transpose()).eval());
            const double dc = geo::dist_cat(mu.row(i).transpose(), nu.row(i).transpose());
            r.observed = std::max(r.observed, std::abs(ds - 0.5 * dc));
        }
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_exp_log_inverse(const VerifyOptions& opt) {
    CheckResult r{"geometry/exp-log inversion on sphere", false, 0.0, 1e-9, ""};
    Rng rng = Rng(opt.seed).fork(3);
    for (int n : kSizes) {
        for (int i = 0; i < opt.points; ++i) {
            const Vec x = geo::to_sphere(Vec(sample_prior(1, n, rng).row(0).transpose())).eval();
            const Vec y = geo::to_sphere(Vec(sample_prior(1, n, rng).row(0).transpose())).eval();
            const Vec u = geo::log_sphere(x, y);
            const Vec back = geo::exp_sphere(x, u);
            r.observed = std::max(r.observed, (back - y).norm());
        }
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_log_tangency(const VerifyOptions& opt) {
    CheckResult r{"geometry/log map tangency", false, 0.0, 1e-10, ""};
    Rng rng = Rng(opt.seed).fork(4);
    for (int n : kSizes) {
        for (int i = 0; i < opt.points; ++i) {
            const Vec x = geo::to_sphere(Vec(sample_prior(1, n, rng).row(0).transpose())).eval();
            const Vec y = geo::to_sphere(Vec(sample_prior(1, n, rng).row(0).transpose())).eval();
            r.observed = std::max(r.observed, std::abs(x.dot(geo::log_sphere(x, y))));
        }
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_distance_decay(const VerifyOptions& opt) {
    CheckResult r{"geometry/geodesic distance decay", false, 0.0, 1e-8, ""};
    Rng rng = Rng(opt.seed).fork(5);
    for (int n : kSizes) {
        const Vec x0 = geo::to_sphere(Vec(sample_prior(1, n, rng).row(0).transpose())).eval();
        const Vec x1 = geo::to_sphere(Vec(sample_prior(1, n, rng).row(0).transpose())).eval();
        const double d01 = geo::dist_sphere(x0, x1);
        for (int k = 0; k <= 100; ++k) {
            const double t = 0.01 * k;
            const Vec xt = geo::geodesic_interp(x0, x1, t);
            r.observed = std::max(r.observed, std::abs(geo::dist_sphere(xt, x1) - (1.0 - t) * d01));
        }
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_isometry_factor(const VerifyOptions& opt) {
    CheckResult r{"geometry/pushforward isometry factor 1/4", false, 0.0, 1e-6, "relative"};
    Rng rng = Rng(opt.seed).fork(6);
    const double h = 1e-6;
    for (int n : kSizes) {
        for (int i = 0; i < 50; ++i) {
            const Vec mu = random_interior_simplex(1, n, rng, 1e-2).row(0).transpose();
            Vec u(n), v(n);
            for (int j = 0; j < n; ++j) {
                u[j] = rng.normal();
                v[j] = rng.normal();
            }
            u = geo::project_tangent_simplex(u).normalized();
            v = geo::project_tangent_simplex(v).normalized();
            const Vec du = (geo::to_sphere(Vec(mu + h * u)) - geo::to_sphere(Vec(mu - h * u))) / (2 * h);
            const Vec dv = (geo::to_sphere(Vec(mu + h * v)) - geo::to_sphere(Vec(mu - h * v))) / (2 * h);
            const double lhs = du.dot(dv);
            const double rhs = 0.25 * geo::inner_fisher(mu, u, v);
            r.observed = std::max(r.observed, std::abs(lhs - rhs) / std::max(1e-12, std::abs(rhs)));
        }
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_geodesic_oracle(const VerifyOptions& opt) {
    CheckResult r{"geometry/exp map vs geodesic-equation oracle", false, 0.0, 1e-6, "RK4, 1e4 steps"};
    Rng rng = Rng(opt.seed).fork(7);
    for (int trial = 0; trial < 3; ++trial) {
        const int n = kSizes[trial % kSizes.size()];
        const Vec x0 = geo::to_sphere(Vec(sample_prior(1, n, rng).row(0).transpose())).eval();
        Vec w(n);
        for (int j = 0; j < n; ++j) w[j] = rng.normal();
        const Vec u = geo::project_tangent_sphere(x0, w);
        const Vec via_ode = geodesic_ode_oracle(x0, u, 10000);
        const Vec via_exp = geo::exp_sphere(x0, u);
        r.observed = std::max(r.observed, (via_ode - via_exp).norm());
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_gradients(const VerifyOptions& opt) {
    CheckResult r{"vectorfield/analytic gradients vs central differences", false, 0.0, 1e-4,
                  "relative"};
    Rng rng = Rng(opt.seed).fork(8);
    FlowModel model(FlowKind::Sfm, 3, 2, 16, 1);
    TrainBatch batch;
    batch.mu0 = sample_prior_batch(4, 2, 3, rng);
    batch.mu1 = random_interior_simplex(8, 3, rng, 1e-3);
    batch.t.resize(4);
    for (int b = 0; b < 4; ++b) batch.t[b] = 0.1 + 0.2 * b;

    model.zero_grad();
    flow_loss(model, batch, true);

    const double h = 1e-5;
    for (auto* layer : model.layers()) {
        auto check_entry = [&](double& param, double analytic) {
            const double keep = param;
            param = keep + h;
            const double lp = flow_loss(model, batch, false);
            param = keep - h;
            const double lm = flow_loss(model, batch, false);
            param = keep;
            const double fd = (lp - lm) / (2.0 * h);
            // denominator floored at 1e-6: below that the difference is
            // round-off in the loss, not gradient error
            const double rel = std::abs(analytic - fd) /
                               std::max(1e-6, std::max(std::abs(analytic), std::abs(fd)));
            r.observed = std::max(r.observed, rel);
        };
        const Eigen::Index wn = layer->W.size();
        const Eigen::Index step = std::max<Eigen::Index>(1, wn / 10);
        for (Eigen::Index k = 0; k < wn; k += step) check_entry(layer->W.data()[k], layer->gW.data()[k]);
        const Eigen::Index bn = layer->b.size();
        const Eigen::Index bstep = std::max<Eigen::Index>(1, bn / 5);
        for (Eigen::Index k = 0; k < bn; k += bstep) check_entry(layer->b[k], layer->gb[k]);
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_ot_exact(const VerifyOptions& opt) {
    CheckResult r{"training/assignment matches exhaustive minimum", false, 0.0, 1e-9, ""};
    Rng rng = Rng(opt.seed).fork(9);
    for (int trial = 0; trial < opt.ot_trials; ++trial) {
        const int B = 2 + trial % 5;  // 2..6
        const Mat noise = sample_prior_batch(B, 1, 3, rng);
        const Mat data = sample_prior_batch(B, 1, 3, rng);
        const Mat cost = ot_cost_matrix(noise, data, 1);
        const OTAssignment a = ot_pair(noise, data, 1);
        const double best = brute_force_assignment_cost(cost);
        r.observed = std::max(r.observed, std::abs(a.cost - best));
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_ot_identity_bound(const VerifyOptions& opt) {
    CheckResult r{"training/assignment cost <= identity pairing", false, 0.0, 1e-12, "B=256"};
    Rng rng = Rng(opt.seed).fork(10);
    const int B = 256;
    const Mat noise = sample_prior_batch(B, 1, 4, rng);
    const Mat data = sample_prior_batch(B, 1, 4, rng);
    const Mat cost = ot_cost_matrix(noise, data, 1);
    const OTAssignment a = ot_pair(noise, data, 1);
    r.observed = std::max(0.0, a.cost - cost.trace());
    r.pass = r.observed <= r.tolerance;
    return r;
}

CheckResult check_hutchinson(const VerifyOptions& opt) {
    CheckResult r{"vectorfield/Hutchinson unbiased on linear field", false, 0.0, 3.0,
                  "|z| in sigma units"};
    Rng rng = Rng(opt.seed).fork(11);
    const int dim = 6;  // D=2, n=3
    Mat A(dim, dim);
    for (int i = 0; i < dim; ++i)
        for (int j = 0; j < dim; ++j) A(i, j) = rng.normal();
    const int D = 2, n = 3;
    BatchField field = [&](const Mat& X, double) {
        Mat out(X.rows(), X.cols());
        const Eigen::Index B = X.rows() / D;
        for (Eigen::Index b = 0; b < B; ++b) {
            Vec flat(dim);
            for (int d = 0; d < D; ++d) flat.segment(d * n, n) = X.row(b * D + d).transpose();
            const Vec y = A * flat;
            for (int d = 0; d < D; ++d) out.row(b * D + d) = y.segment(d * n, n).transpose();
        }
        return out;
    };
    const Mat X = sample_prior_batch(1, D, n, rng);
    const int m = opt.hutchinson_probes;
    Vec vals(m);
    for (int p = 0; p < m; ++p)
        vals[p] = divergence_batch(field, X, D, 0.5, DivMethod::Hutchinson, 1, rng)[0];
    const double mean = vals.mean();
    const double sd = std::sqrt((vals.array() - mean).square().sum() / (m - 1));
    const double z = (mean - A.trace()) / (sd / std::sqrt(static_cast<double>(m)));
    r.observed = std::abs(z);
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_logdet_cancellation(const VerifyOptions& opt) {
    CheckResult r{"likelihood/change-of-measure cancellation", false, 0.0, 1e-12, ""};
    Rng rng = Rng(opt.seed).fork(12);
    for (int n : kSizes) {
        const Mat mu = random_interior_simplex(opt.points, n, rng, 1e-6);
        for (Eigen::Index i = 0; i < mu.rows(); ++i) {
            const Vec m = mu.row(i).transpose();
            const double s = logdet_fwd(geo::to_sphere(m).eval()) + logdet_bwd(m);
            r.observed = std::max(r.observed, std::abs(s));
        }
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

CheckResult check_zero_field_nll(const VerifyOptions& opt) {
    CheckResult r{"likelihood/zero-field density is the prior", false, 0.0, 1e-10, ""};
    Rng rng = Rng(opt.seed).fork(13);
    for (int n : kSizes) {
        FlowModel model(FlowKind::Sfm, n, 1, 8, 1);
        model.zero_output_layer();
        const Mat mu = random_interior_simplex(8, n, rng, 1e-4);
        LikelihoodOptions lo;
        lo.method = DivMethod::Exact;
        Rng lrng = rng.fork(n);
        const auto reports = nll_interior(model, mu, lo, lrng);
        for (const auto& rep : reports)
            r.observed = std::max(r.observed, std::abs(rep.total - prior_logp(n)));
    }
    r.pass = r.observed < r.tolerance;
    return r;
}

}  // namespace

std::vector<CheckResult> run_verification(const VerifyOptions& opt) {
    std::vector<CheckResult> results;
    results.push_back(check_roundtrip(opt));
    results.push_back(check_distance_factor(opt));
    results.push_back(check_exp_log_inverse(opt));
    results.push_back(check_log_tangency(opt));
    results.push_back(check_distance_decay(opt));
    results.push_back(check_isometry_factor(opt));
    results.push_back(check_geodesic_oracle(opt));
    results.push_back(check_gradients(opt));
    results.push_back(check_ot_exact(opt));
    results.push_back(check_ot_identity_bound(opt));
    results.push_back(check_hutchinson(opt));
    results.push_back(check_logdet_cancellation(opt));
    results.push_back(check_zero_field_nll(opt));
    return results;
}

bool print_verification(const std::vector<CheckResult>& results, std::ostream& os) {
    bool all = true;
    size_t width = 0;
    for (const auto& r : results) width = std::max(width, r.name.size());
    for (const auto& r : results) {
        all = all && r.pass;
        os << (r.pass ? "[PASS] " : "[FAIL] ") << std::left << std::setw(static_cast<int>(width) + 2)
           << r.name << " observed " << std::scientific << std::setprecision(3) << r.observed
           << "  tol " << r.tolerance;
        if (!r.note.empty()) os << "  (" << r.note << ")";
        os << '\n' << std::defaultfloat;
    }
    return all;
}

}  // namespace sfm
