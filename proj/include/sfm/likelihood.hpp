#pragma once

#include <string>
#include <vector>

#include "sfm/flow_model.hpp"
#include "sfm/rng.hpp"
#include "sfm/types.hpp"

namespace sfm {

/// Per-sample likelihood decomposition, all in nats. `total` is the signed
/// sum of the components:
///
///   total = ode_logp + prior_logp + logdet_fwd + logdet_bwd
///         + cat_logp - posterior_logq
///
/// For interior evaluations the last two are zero and total is the exact
/// log-density; for boundary (one-hot) data total is the variational lower
/// bound on the log-likelihood. Negative NLLs (positive totals) are
/// legitimate: densities on the simplex can exceed 1.
struct NLLReport {
    double total = 0.0;
    double ode_logp = 0.0;
    double prior_logp = 0.0;
    double logdet_fwd = 0.0;
    double logdet_bwd = 0.0;
    double posterior_logq = 0.0;
    double cat_logp = 0.0;

    DivMethod method = DivMethod::Exact;
    double t_max = 0.0;
    int probes = 0;
    std::string integrator;  // "dopri5" or "euler<N>"
    double rtol = 0.0;

    double recompose() const {
        return ode_logp + prior_logp + logdet_fwd + logdet_bwd + cat_logp - posterior_logq;
    }
    double nll() const { return -total; }
};

struct LikelihoodOptions {
    DivMethod method = DivMethod::Hutchinson;
    int probes = 1;  // fresh probes per integrator step
    bool use_euler = false;
    int euler_steps = 300;
    double rtol = 1e-5;
    double atol = 1e-5;
    double fd_step = 1e-5;
};

/// Log-density of the uniform prior over the (n-1)-simplex: log Gamma(n).
double prior_logp(int n);

/// Change-of-measure term at a sphere point: -(n-1) log 2 - sum_i log x_i.
/// Undefined on the boundary; interior input required.
double logdet_fwd(const Vec& x);

/// Change-of-measure term at a simplex point:
/// (n-1) log 2 + (1/2) sum_i log mu_i. Cancels logdet_fwd exactly through
/// the square-root map.
double logdet_bwd(const Vec& mu);

double logdet_fwd_rows(const Mat& x_rows);
double logdet_bwd_rows(const Mat& mu_rows);

/// Joint reverse integration of the state and the divergence accumulator
/// from t=1 to t=0. Returns the reached prior-side points (native
/// coordinates) and, per sample, the integral of the divergence backward
/// through time was; adding prior_logp gives the flow's log-density at x1.
struct OdeLogpResult {
    Mat x0;    // stacked rows, native coordinates
    Vec logp;  // per sample
    long rhs_evals = 0;
};

OdeLogpResult ode_logp_field(const BatchField& field, FlowKind kind, const Mat& x1, int D,
                             const LikelihoodOptions& opt, Rng& rng);
OdeLogpResult ode_logp(const FlowModel& model, const Mat& x1_native, const LikelihoodOptions& opt,
                       Rng& rng);

/// Exact log-density of interior categorical distributions under the model:
/// change-of-measure terms, backward divergence integral, and the prior
/// density assembled per the flow's manifold. One batched integration, one
/// report per sample.
std::vector<NLLReport> nll_interior(const FlowModel& model, const Mat& mu1,
                                    const LikelihoodOptions& opt, Rng& rng);

/// One draw region sample from the forward posterior q_t(mu | delta):
/// a uniform simplex draw shrunk into the corner box at the one-hot vertex,
/// mu = t * delta + (1 - t) * nu. Row r uses class delta_rows[r].
Mat sample_qt(const VecI& delta_rows, int n, double t, Rng& rng);

/// log q_t per row: log Gamma(n) - (n-1) log(1-t).
double posterior_logq_row(int n, double t);

/// Categorical log-likelihood sum_rows log mu[delta].
double cat_logp_rows(const Mat& mu_rows, const VecI& delta_rows);

/// Variational lower bound for one-hot data: draws `samples` posterior
/// points per datum, evaluates the interior density on each and averages
/// the bound. delta is stacked (B*D entries).
std::vector<NLLReport> nll_boundary(const FlowModel& model, const VecI& delta, double t_max,
                                    int samples, const LikelihoodOptions& opt, Rng& rng);

/// One-step prediction of the target distribution from an intermediate
/// point: exp_{mu_t}((1-t) v) carried out on the flow's manifold, returned
/// in simplex coordinates.
using OneStepPredictor = std::function<Mat(const Mat&, double)>;
OneStepPredictor one_step_predictor(const FlowModel& model);

/// Bits per character: the weighted cross-entropy of one-step predictions
/// integrated over the unit time mass, evaluated through the substitution
/// s = -log(1-t) on s in [0, s_max], divided by log 2. Inner products are
/// floored at 1e-12 before the log. `mu1` holds one-hot rows.
double bpc_with_predictor(FlowKind kind, const OneStepPredictor& predict, const Mat& mu1, int D,
                          int n, double s_max, double rtol, double atol, Rng& rng);
double bpc(const FlowModel& model, const Mat& mu1, double s_max, double rtol, double atol,
           Rng& rng);

/// One CSV row per report: total, nll, the six components, and estimator
/// metadata.
void write_nll_csv(const std::string& path, const std::vector<NLLReport>& reports);

}  // namespace sfm
