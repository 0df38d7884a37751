#pragma once

#include <optional>
#include <string>

#include "sfm/flow_model.hpp"
#include "sfm/rng.hpp"
#include "sfm/types.hpp"

namespace sfm {

/// One training batch: prior noise, targets, and one timestep per sample
/// (shared across the sample's D rows). Stacked-row layout, B*D x n.
struct TrainBatch {
    Mat mu0;
    Mat mu1;
    Vec t;
};

/// One sample (D rows) uniform over the simplex per row: n i.i.d. Exp(1)
/// variables normalized by their sum, i.e. Dirichlet(1, ..., 1).
Mat sample_prior(int D, int n, Rng& rng);
Mat sample_prior_batch(int B, int D, int n, Rng& rng);

/// Timestep uniform on [0, 1), resampled away from the 1/(1-t) singularity.
double sample_time(Rng& rng);

/// Regression inputs and targets for one batch: `inputs` are the
/// interpolated manifold points fed to the network, `targets` the
/// conditional vector field rows the network regresses onto.
struct LossTerms {
    Mat inputs;
    Mat targets;
    Vec t;
};

/// Geodesic interpolation on the sphere after the square-root transform.
LossTerms sfm_terms(const TrainBatch& batch);

/// Straight-line interpolation on the simplex, target mu1 - mu0.
LossTerms linearfm_terms(const TrainBatch& batch);

/// Geodesic interpolation directly on the statistical manifold
/// (interior-clamped; numerically fragile near the boundary by design).
LossTerms sfm_nopi_terms(const TrainBatch& batch);

LossTerms loss_terms(FlowKind kind, const TrainBatch& batch);

/// Mean over batch and rows of the squared row norms ||v - u||^2.
double mse_rows(const Mat& v, const Mat& u, int D);

/// Full loss evaluation; when with_grad is set, accumulates parameter
/// gradients (call model.zero_grad() first).
double flow_loss(FlowModel& model, const TrainBatch& batch, bool with_grad);

struct TrainOptions {
    int iters = 2000;
    int batch = 0;  // 0 or >= N: full batch
    bool ot = false;
    double lr = 1e-3;
    double grad_clip = 10.0;
    uint64_t seed = 0;
    std::string metrics_path;     // empty: no CSV
    std::string checkpoint_path;  // empty: no checkpoints
    int checkpoint_every = 0;     // 0: final only
    int val_interval = 0;         // 0: no validation column
    bool log_walltime = false;    // off by default so metrics are reproducible
};

struct TrainResult {
    double final_loss = 0.0;
    int iters_run = 0;
};

/// Algorithm: per iteration sample prior noise, optionally OT-pair it with
/// the data, sample t, interpolate along the geodesic, regress the
/// conditional field, Adam step. Deterministic for a fixed seed in this
/// single-threaded implementation. A non-finite loss aborts with the last
/// good parameters written to `<checkpoint_path>.lastgood`.
TrainResult train(FlowModel& model, const Mat& data, const TrainOptions& opt,
                  const Mat* val_data = nullptr);

}  // namespace sfm
