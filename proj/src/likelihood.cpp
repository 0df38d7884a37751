#include "sfm/likelihood.hpp"

#include <cmath>
#include <fstream>

#include "sfm/csv.hpp"
#include "sfm/geometry.hpp"
#include "sfm/integrate.hpp"
#include "sfm/training.hpp"

namespace sfm {

double prior_logp(int n) {
    if (n < 1) throw std::invalid_argument("prior_logp: n must be >= 1");
    return std::lgamma(static_cast<double>(n));
}

namespace {

void require_interior_vec(const Vec& v, const char* who) {
    if (v.minCoeff() <= 1e-12)
        throw std::invalid_argument(std::string(who) + ": undefined on the boundary");
}

}  // namespace

double logdet_fwd(const Vec& x) {
    require_interior_vec(x, "logdet_fwd");
    const double n = static_cast<double>(x.size());
    return -(n - 1.0) * std::log(2.0) - x.array().log().sum();
}

double logdet_bwd(const Vec& mu) {
    require_interior_vec(mu, "logdet_bwd");
    const double n = static_cast<double>(mu.size());
    return (n - 1.0) * std::log(2.0) + 0.5 * mu.array().log().sum();
}

double logdet_fwd_rows(const Mat& x_rows) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < x_rows.rows(); ++r) acc += logdet_fwd(x_rows.row(r).transpose());
    return acc;
}

double logdet_bwd_rows(const Mat& mu_rows) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < mu_rows.rows(); ++r) acc += logdet_bwd(mu_rows.row(r).transpose());
    return acc;
}

// --- backward divergence integral ------------------------------------------------

namespace {

// Augmented state layout: B x (D*n + 1); the last column accumulates the
// per-sample divergence integral.
Mat pack_state(const Mat& x_rows, const Vec& logp, int D, int n) {
    const Eigen::Index B = logp.size();
    Mat y(B, static_cast<Eigen::Index>(D) * n + 1);
    for (Eigen::Index b = 0; b < B; ++b) {
        for (int d = 0; d < D; ++d)
            y.row(b).segment(static_cast<Eigen::Index>(d) * n, n) = x_rows.row(b * D + d);
        y(b, D * n) = logp[b];
    }
    return y;
}

Mat unpack_rows(const Mat& y, int D, int n) {
    const Eigen::Index B = y.rows();
    Mat x(B * D, n);
    for (Eigen::Index b = 0; b < B; ++b)
        for (int d = 0; d < D; ++d)
            x.row(b * D + d) = y.row(b).segment(static_cast<Eigen::Index>(d) * n, n);
    return x;
}

Mat reverse_euler_step(FlowKind kind, const Mat& x, const Mat& v, double h) {
    switch (kind) {
        case FlowKind::Sfm:
            return geo::exp_sphere_rows(x, -h * v);
        case FlowKind::LinearFm:
            return geo::clip_rows(ManifoldMode::Simplex, x - h * v);
        case FlowKind::SfmNoPi: {
            Mat out(x.rows(), x.cols());
            for (Eigen::Index r = 0; r < x.rows(); ++r) {
                const Vec base = geo::clamp_interior(x.row(r).transpose(), 1e-9);
                out.row(r) = geo::exp_stat(base, Vec(-h * v.row(r).transpose())).transpose();
            }
            return out;
        }
    }
    throw std::invalid_argument("reverse_euler_step: bad kind");
}

std::vector<Mat> draw_probes(Eigen::Index rows, Eigen::Index cols, int probes, Rng& rng) {
    std::vector<Mat> eps(probes);
    for (auto& e : eps) {
        e.resize(rows, cols);
        for (Eigen::Index i = 0; i < rows; ++i)
            for (Eigen::Index j = 0; j < cols; ++j) e(i, j) = rng.normal();
    }
    return eps;
}

Vec divergence_with_probes(const BatchField& field, const Mat& X, int D, double t,
                           const std::vector<Mat>& eps, double h) {
    const Eigen::Index B = X.rows() / D;
    Vec div = Vec::Zero(B);
    for (const auto& e : eps) {
        const Mat dd = (field(X + h * e, t) - field(X - h * e, t)) / (2.0 * h);
        for (Eigen::Index b = 0; b < B; ++b)
            div[b] += e.middleRows(b * D, D).cwiseProduct(dd.middleRows(b * D, D)).sum();
    }
    return div / static_cast<double>(eps.size());
}

}  // namespace

OdeLogpResult ode_logp_field(const BatchField& field, FlowKind kind, const Mat& x1, int D,
                             const LikelihoodOptions& opt, Rng& rng) {
    if (opt.method == DivMethod::Hutchinson && opt.probes < 1)
        throw std::invalid_argument("ode_logp: probes must be >= 1");
    const int n = static_cast<int>(x1.cols());
    const Eigen::Index B = x1.rows() / D;
    const ManifoldMode mode = manifold_of(kind);

    std::vector<Mat> eps;  // held fixed within one step attempt
    auto divergence_now = [&](const Mat& X, double t) -> Vec {
        if (opt.method == DivMethod::Exact) {
            Rng unused(0);
            return divergence_batch(field, X, D, t, DivMethod::Exact, 1, unused, opt.fd_step);
        }
        return divergence_with_probes(field, X, D, t, eps, opt.fd_step);
    };

    OdeLogpResult result;

    if (opt.use_euler) {
        // fixed reverse steps in s = 1 - t
        const int N = opt.euler_steps;
        if (N < 1) throw std::invalid_argument("ode_logp: euler_steps must be >= 1");
        Mat x = x1;
        Vec logp = Vec::Zero(B);
        const double h = 1.0 / static_cast<double>(N);
        for (int k = 0; k < N; ++k) {
            const double t = 1.0 - static_cast<double>(k) / static_cast<double>(N);
            if (opt.method == DivMethod::Hutchinson)
                eps = draw_probes(x.rows(), x.cols(), opt.probes, rng);
            const Mat v = field(x, t);
            logp -= h * divergence_now(x, t);
            x = reverse_euler_step(kind, x, v, h);
            if (!x.allFinite()) throw NumericalError("ode_logp: non-finite state");
            result.rhs_evals += 1;
        }
        result.x0 = std::move(x);
        result.logp = std::move(logp);
        return result;
    }

    // adaptive path: integrate d/ds [x, logp] = [-v, -div] for s in [0, 1]
    OdeOptions oopt;
    oopt.rtol = opt.rtol;
    oopt.atol = opt.atol;
    OdeStats stats;
    Mat y0 = pack_state(x1, Vec::Zero(B), D, n);
    auto rhs = [&](const Mat& y, double s) {
        const double t = 1.0 - s;
        const Mat x = unpack_rows(y, D, n);
        const Mat v = field(x, t);
        const Vec div = divergence_now(x, t);
        Mat dy(y.rows(), y.cols());
        for (Eigen::Index b = 0; b < B; ++b) {
            for (int d = 0; d < D; ++d)
                dy.row(b).segment(static_cast<Eigen::Index>(d) * n, n) = -v.row(b * D + d);
            dy(b, static_cast<Eigen::Index>(D) * n) = -div[b];
        }
        return dy;
    };
    auto pre = [&](double, double) {
        if (opt.method == DivMethod::Hutchinson)
            eps = draw_probes(x1.rows(), x1.cols(), opt.probes, rng);
    };
    auto post = [&](Mat& y, double) {
        Mat x = geo::clip_rows(mode, unpack_rows(y, D, n));
        for (Eigen::Index b = 0; b < B; ++b)
            for (int d = 0; d < D; ++d)
                y.row(b).segment(static_cast<Eigen::Index>(d) * n, n) = x.row(b * D + d);
    };
    const Mat yT = dopri5(rhs, std::move(y0), 0.0, 1.0, oopt, post, pre, &stats);
    result.x0 = unpack_rows(yT, D, n);
    result.logp = yT.col(static_cast<Eigen::Index>(D) * n);
    result.rhs_evals = stats.rhs_evals;
    return result;
}

OdeLogpResult ode_logp(const FlowModel& model, const Mat& x1_native, const LikelihoodOptions& opt,
                       Rng& rng) {
    return ode_logp_field(model.field(), model.kind(), x1_native, model.D(), opt, rng);
}

// --- interior NLL --------------------------------------------------------------

std::vector<NLLReport> nll_interior(const FlowModel& model, const Mat& mu1,
                                    const LikelihoodOptions& opt, Rng& rng) {
    const int D = model.D();
    const int n = model.n();
    if (mu1.cols() != n || mu1.rows() % D != 0)
        throw std::invalid_argument("nll_interior: data shape mismatch");
    if (mu1.minCoeff() <= 1e-12)
        throw std::invalid_argument("nll_interior: boundary points need the variational bound");
    const Eigen::Index B = mu1.rows() / D;
    const bool sphere = model.mode() == ManifoldMode::Sphere;

    const Mat x1 = sphere ? geo::to_sphere_rows(mu1) : mu1;
    const OdeLogpResult ode = ode_logp(model, x1, opt, rng);

    std::vector<NLLReport> reports(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        NLLReport& r = reports[b];
        r.method = opt.method;
        r.probes = opt.method == DivMethod::Hutchinson ? opt.probes : 0;
        r.integrator = opt.use_euler ? "euler" + std::to_string(opt.euler_steps) : "dopri5";
        r.rtol = opt.use_euler ? 0.0 : opt.rtol;
        r.ode_logp = ode.logp[b];
        r.prior_logp = static_cast<double>(D) * prior_logp(n);
        if (sphere) {
            r.logdet_fwd = logdet_fwd_rows(x1.middleRows(b * D, D));
            const Mat mu0 =
                geo::clip_rows(ManifoldMode::Simplex, geo::to_simplex_rows(ode.x0.middleRows(b * D, D)));
            r.logdet_bwd = logdet_bwd_rows(mu0);
        }
        r.total = r.recompose();
    }
    return reports;
}

// --- boundary (variational) NLL ---------------------------------------------------

Mat sample_qt(const VecI& delta_rows, int n, double t, Rng& rng) {
    if (t <= 0.0 || t >= 1.0) throw std::invalid_argument("sample_qt: t must lie in (0, 1)");
    Mat out(delta_rows.size(), n);
    for (Eigen::Index r = 0; r < delta_rows.size(); ++r) {
        const Mat nu = sample_prior(1, n, rng);
        out.row(r) = (1.0 - t) * nu.row(0);
        out(r, delta_rows[r]) += t;
    }
    return out;
}

double posterior_logq_row(int n, double t) {
    return prior_logp(n) - (static_cast<double>(n) - 1.0) * std::log(1.0 - t);
}

double cat_logp_rows(const Mat& mu_rows, const VecI& delta_rows) {
    double acc = 0.0;
    for (Eigen::Index r = 0; r < mu_rows.rows(); ++r)
        acc += std::log(std::max(mu_rows(r, delta_rows[r]), 1e-300));
    return acc;
}

std::vector<NLLReport> nll_boundary(const FlowModel& model, const VecI& delta, double t_max,
                                    int samples, const LikelihoodOptions& opt, Rng& rng) {
    if (t_max <= 0.0 || t_max >= 1.0) throw std::invalid_argument("nll_boundary: t_max not in (0, 1)");
    if (samples < 1) throw std::invalid_argument("nll_boundary: samples must be >= 1");
    const int D = model.D();
    const int n = model.n();
    if (delta.size() % D != 0) throw std::invalid_argument("nll_boundary: delta shape mismatch");
    if (delta.minCoeff() < 0 || delta.maxCoeff() >= n)
        throw std::invalid_argument("nll_boundary: class index out of range");
    const Eigen::Index B = delta.size() / D;

    // expand to B*samples interior draws, integrate once as a single batch
    VecI delta_rep(delta.size() * samples);
    for (Eigen::Index b = 0; b < B; ++b)
        for (int s = 0; s < samples; ++s)
            delta_rep.segment((b * samples + s) * D, D) = delta.segment(b * D, D);
    const Mat mu_tilde = sample_qt(delta_rep, n, t_max, rng);
    const auto inner = nll_interior(model, mu_tilde, opt, rng);

    const double logq = static_cast<double>(D) * posterior_logq_row(n, t_max);
    std::vector<NLLReport> reports(B);
    for (Eigen::Index b = 0; b < B; ++b) {
        NLLReport& r = reports[b];
        r.method = opt.method;
        r.probes = inner[0].probes;
        r.integrator = inner[0].integrator;
        r.rtol = inner[0].rtol;
        r.t_max = t_max;
        for (int s = 0; s < samples; ++s) {
            const NLLReport& in = inner[b * samples + s];
            r.ode_logp += in.ode_logp;
            r.prior_logp += in.prior_logp;
            r.logdet_fwd += in.logdet_fwd;
            r.logdet_bwd += in.logdet_bwd;
            r.cat_logp +=
                cat_logp_rows(mu_tilde.middleRows((b * samples + s) * D, D), delta.segment(b * D, D));
        }
        const double inv = 1.0 / static_cast<double>(samples);
        r.ode_logp *= inv;
        r.prior_logp *= inv;
        r.logdet_fwd *= inv;
        r.logdet_bwd *= inv;
        r.cat_logp *= inv;
        r.posterior_logq = logq;
        r.total = r.recompose();
    }
    return reports;
}

// --- bits per character ------------------------------------------------------------

OneStepPredictor one_step_predictor(const FlowModel& model) {
    const FlowKind kind = model.kind();
    return [&model, kind](const Mat& mu_t, double t) -> Mat {
        switch (kind) {
            case FlowKind::Sfm: {
                const Mat x_t = geo::to_sphere_rows(mu_t);
                const Mat v = model.forward_shared(x_t, t);
                const Mat x1 = geo::exp_sphere_rows(x_t, (1.0 - t) * v);
                return geo::clip_rows(ManifoldMode::Simplex, geo::to_simplex_rows(x1));
            }
            case FlowKind::LinearFm: {
                const Mat v = model.forward_shared(mu_t, t);
                return geo::clip_rows(ManifoldMode::Simplex, mu_t + (1.0 - t) * v);
            }
            case FlowKind::SfmNoPi: {
                Mat base(mu_t.rows(), mu_t.cols());
                for (Eigen::Index r = 0; r < mu_t.rows(); ++r)
                    base.row(r) = geo::clamp_interior(mu_t.row(r).transpose(), 1e-9).transpose();
                const Mat v = model.forward_shared(base, t);
                Mat out(mu_t.rows(), mu_t.cols());
                for (Eigen::Index r = 0; r < mu_t.rows(); ++r)
                    out.row(r) = geo::exp_stat(Vec(base.row(r).transpose()),
                                               Vec((1.0 - t) * v.row(r).transpose()))
                                     .transpose();
                return out;
            }
        }
        throw std::invalid_argument("one_step_predictor: bad kind");
    };
}

double bpc_with_predictor(FlowKind kind, const OneStepPredictor& predict, const Mat& mu1, int D,
                          int n, double s_max, double rtol, double atol, Rng& rng) {
    if (mu1.cols() != n || mu1.rows() % D != 0)
        throw std::invalid_argument("bpc: data shape mismatch");
    const Eigen::Index B = mu1.rows() / D;
    const Mat mu0 = sample_prior_batch(static_cast<int>(B), D, n, rng);

    // path ingredients by flow geometry
    const bool sphere = kind == FlowKind::Sfm;
    Mat x0, x1, log01;       // sphere route
    Mat stat_logs;           // direct route tangents
    Mat mu0_c = mu0, mu1_c = mu1;
    if (sphere) {
        x0 = geo::to_sphere_rows(mu0);
        x1 = geo::to_sphere_rows(mu1);
        log01 = geo::log_sphere_rows(x0, x1);
    } else if (kind == FlowKind::SfmNoPi) {
        stat_logs.resize(mu0.rows(), mu0.cols());
        for (Eigen::Index r = 0; r < mu0.rows(); ++r) {
            mu0_c.row(r) = geo::clamp_interior(mu0.row(r).transpose(), 1e-9).transpose();
            mu1_c.row(r) = geo::clamp_interior(mu1.row(r).transpose(), 1e-9).transpose();
            stat_logs.row(r) =
                geo::log_stat(Vec(mu0_c.row(r).transpose()), Vec(mu1_c.row(r).transpose())).transpose();
        }
    }

    auto path_at = [&](double t) -> Mat {
        if (sphere) {
            Mat xt(x0.rows(), x0.cols());
            for (Eigen::Index r = 0; r < x0.rows(); ++r)
                xt.row(r) = geo::exp_sphere(x0.row(r), Eigen::RowVectorXd(t * log01.row(r)));
            return geo::to_simplex_rows(xt);
        }
        if (kind == FlowKind::LinearFm) return (1.0 - t) * mu0 + t * mu1;
        Mat mt(mu0.rows(), mu0.cols());
        for (Eigen::Index r = 0; r < mu0.rows(); ++r)
            mt.row(r) = geo::exp_stat(Vec(mu0_c.row(r).transpose()),
                                      Vec(t * stat_logs.row(r).transpose()))
                            .transpose();
        return mt;
    };

    // cross-entropy of the one-step prediction at t(s) = 1 - e^{-s},
    // weighted by e^{-s} so the integral carries unit mass over t
    auto integrand = [&](double s) -> double {
        const double t = 1.0 - std::exp(-s);
        const Mat mu_t = path_at(t);
        const Mat mu_hat = predict(mu_t, t);
        double acc = 0.0;
        for (Eigen::Index r = 0; r < mu_hat.rows(); ++r) {
            const double ip = std::max(mu_hat.row(r).dot(mu1.row(r)), 1e-12);
            acc -= std::log(ip);
        }
        return std::exp(-s) * acc / static_cast<double>(mu_hat.rows());
    };

    OdeOptions opt;
    opt.rtol = rtol;
    opt.atol = atol;
    const Mat total = dopri5([&](const Mat&, double s) { return Mat::Constant(1, 1, integrand(s)); },
                             Mat::Zero(1, 1), 0.0, s_max, opt);
    return total(0, 0) / std::log(2.0);
}

double bpc(const FlowModel& model, const Mat& mu1, double s_max, double rtol, double atol,
           Rng& rng) {
    return bpc_with_predictor(model.kind(), one_step_predictor(model), mu1, model.D(), model.n(),
                              s_max, rtol, atol, rng);
}

void write_nll_csv(const std::string& path, const std::vector<NLLReport>& reports) {
    std::ofstream os(path);
    if (!os) throw std::runtime_error("cannot write NLL report: " + path);
    os << "sample,total,nll,ode_logp,prior_logp,logdet_fwd,logdet_bwd,posterior_logq,cat_logp,"
          "method,t_max,probes,integrator,rtol\n";
    for (size_t i = 0; i < reports.size(); ++i) {
        const NLLReport& r = reports[i];
        os << i << ',' << csvfmt::num(r.total) << ',' << csvfmt::num(r.nll()) << ','
           << csvfmt::num(r.ode_logp) << ',' << csvfmt::num(r.prior_logp) << ','
           << csvfmt::num(r.logdet_fwd) << ',' << csvfmt::num(r.logdet_bwd) << ','
           << csvfmt::num(r.posterior_logq) << ',' << csvfmt::num(r.cat_logp) << ','
           << (r.method == DivMethod::Exact ? "exact" : "hutchinson") << ',' << csvfmt::num(r.t_max)
           << ',' << r.probes << ',' << r.integrator << ',' << csvfmt::num(r.rtol) << '\n';
    }
}

}  // namespace sfm
