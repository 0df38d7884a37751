#include "sfm/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>

#include "sfm/csv.hpp"
#include "sfm/geometry.hpp"
#include "sfm/ot.hpp"

namespace sfm {

Mat sample_prior(int D, int n, Rng& rng) {
    Mat out(D, n);
    for (int d = 0; d < D; ++d) {
        double sum = 0.0;
        for (int i = 0; i < n; ++i) {
            out(d, i) = rng.exponential();
            sum += out(d, i);
        }
        out.row(d) /= sum;
    }
    return out;
}

Mat sample_prior_batch(int B, int D, int n, Rng& rng) {
    Mat out(static_cast<Eigen::Index>(B) * D, n);
    for (int b = 0; b < B; ++b) out.middleRows(static_cast<Eigen::Index>(b) * D, D) = sample_prior(D, n, rng);
    return out;
}

double sample_time(Rng& rng) {
    double t = rng.uniform();
    while (t > 1.0 - 1e-6) t = rng.uniform();
    return t;
}

LossTerms sfm_terms(const TrainBatch& batch) {
    const Eigen::Index rows_per_sample = batch.mu0.rows() / batch.t.size();
    const Mat x0 = geo::to_sphere_rows(batch.mu0);
    const Mat x1 = geo::to_sphere_rows(batch.mu1);
    LossTerms terms;
    terms.inputs = geo::geodesic_interp_rows(x0, x1, batch.t, rows_per_sample);
    terms.targets = geo::cond_vector_field_rows(terms.inputs, x1, batch.t, rows_per_sample);
    terms.t = batch.t;
    return terms;
}

LossTerms linearfm_terms(const TrainBatch& batch) {
    const Eigen::Index rows_per_sample = batch.mu0.rows() / batch.t.size();
    LossTerms terms;
    terms.inputs.resize(batch.mu0.rows(), batch.mu0.cols());
    for (Eigen::Index r = 0; r < batch.mu0.rows(); ++r) {
        const double t = batch.t[r / rows_per_sample];
        terms.inputs.row(r) = (1.0 - t) * batch.mu0.row(r) + t * batch.mu1.row(r);
    }
    terms.targets = batch.mu1 - batch.mu0;
    terms.t = batch.t;
    return terms;
}

LossTerms sfm_nopi_terms(const TrainBatch& batch) {
    const Eigen::Index rows_per_sample = batch.mu0.rows() / batch.t.size();
    constexpr double eps = 1e-8;
    LossTerms terms;
    terms.inputs.resize(batch.mu0.rows(), batch.mu0.cols());
    terms.targets.resize(batch.mu0.rows(), batch.mu0.cols());
    for (Eigen::Index r = 0; r < batch.mu0.rows(); ++r) {
        const double t = batch.t[r / rows_per_sample];
        const Vec mu0 = geo::clamp_interior(batch.mu0.row(r).transpose(), eps);
        const Vec mu1 = geo::clamp_interior(batch.mu1.row(r).transpose(), eps);
        const Vec mut = geo::exp_stat(mu0, Vec(t * geo::log_stat(mu0, mu1)));
        const Vec mut_c = geo::clamp_interior(mut, eps);
        terms.inputs.row(r) = mut_c.transpose();
        terms.targets.row(r) = geo::log_stat(mut_c, mu1).transpose() / (1.0 - t);
    }
    terms.t = batch.t;
    return terms;
}

LossTerms loss_terms(FlowKind kind, const TrainBatch& batch) {
    switch (kind) {
        case FlowKind::Sfm: return sfm_terms(batch);
        case FlowKind::LinearFm: return linearfm_terms(batch);
        case FlowKind::SfmNoPi: return sfm_nopi_terms(batch);
    }
    throw std::invalid_argument("loss_terms: bad kind");
}

double mse_rows(const Mat& v, const Mat& u, int D) {
    const double rows = static_cast<double>(v.rows());
    (void)D;  // normalization is per row: mean over batch and data dimensions
    return (v - u).rowwise().squaredNorm().sum() / rows;
}

double flow_loss(FlowModel& model, const TrainBatch& batch, bool with_grad) {
    const LossTerms terms = loss_terms(model.kind(), batch);
    FlowModel::Cache cache;
    const Mat v = model.forward(terms.inputs, terms.t, with_grad ? &cache : nullptr);
    const double loss = mse_rows(v, terms.targets, model.D());
    if (with_grad) {
        const Mat dV = 2.0 * (v - terms.targets) / static_cast<double>(v.rows());
        model.backward(cache, dV);
    }
    return loss;
}

namespace {

std::vector<Eigen::Index> pick_batch(Eigen::Index N, int batch, Rng& rng) {
    std::vector<Eigen::Index> idx(N);
    std::iota(idx.begin(), idx.end(), Eigen::Index(0));
    if (batch <= 0 || batch >= N) return idx;
    // partial Fisher-Yates: first `batch` entries are a uniform subset
    for (int i = 0; i < batch; ++i) {
        const int j = i + rng.uniform_int(static_cast<int>(N) - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(batch);
    return idx;
}

Mat gather_rows(const Mat& data, const std::vector<Eigen::Index>& samples, int D) {
    Mat out(static_cast<Eigen::Index>(samples.size()) * D, data.cols());
    for (size_t i = 0; i < samples.size(); ++i)
        out.middleRows(static_cast<Eigen::Index>(i) * D, D) = data.middleRows(samples[i] * D, D);
    return out;
}

}  // namespace

TrainResult train(FlowModel& model, const Mat& data, const TrainOptions& opt, const Mat* val_data) {
    const int D = model.D();
    const int n = model.n();
    if (data.cols() != n || data.rows() % D != 0)
        throw std::invalid_argument("train: data shape does not match model");
    const Eigen::Index N = data.rows() / D;
    if (N == 0) throw std::invalid_argument("train: empty dataset");

    Rng root(opt.seed);
    Adam adam(model, opt.lr);

    std::ofstream metrics;
    if (!opt.metrics_path.empty()) {
        metrics.open(opt.metrics_path);
        if (!metrics) throw std::runtime_error("cannot write metrics: " + opt.metrics_path);
        metrics << "iteration,wall_time,loss,lr,ot_cost,val_loss\n";
    }
    const auto t_start = std::chrono::steady_clock::now();

    TrainResult result;
    FlowModel last_good = model;
    for (int iter = 0; iter < opt.iters; ++iter) {
        Rng rng = root.fork(static_cast<uint64_t>(iter) + 1);
        const auto idx = pick_batch(N, opt.batch, rng);
        const int B = static_cast<int>(idx.size());

        TrainBatch batch;
        batch.mu0 = sample_prior_batch(B, D, n, rng);
        batch.mu1 = gather_rows(data, idx, D);

        std::string ot_cost_cell;
        if (opt.ot) {
            const OTAssignment a = ot_pair(batch.mu0, batch.mu1, D);
            Mat paired(batch.mu1.rows(), batch.mu1.cols());
            for (int i = 0; i < B; ++i)
                paired.middleRows(static_cast<Eigen::Index>(i) * D, D) =
                    batch.mu1.middleRows(static_cast<Eigen::Index>(a.perm[i]) * D, D);
            batch.mu1 = std::move(paired);
            ot_cost_cell = csvfmt::num(a.cost);
        }

        batch.t.resize(B);
        for (int b = 0; b < B; ++b) batch.t[b] = sample_time(rng);

        model.zero_grad();
        const double loss = flow_loss(model, batch, true);
        if (!std::isfinite(loss)) {
            if (!opt.checkpoint_path.empty()) last_good.save(opt.checkpoint_path + ".lastgood");
            throw NumericalError("train: non-finite loss at iteration " + std::to_string(iter));
        }
        model.clip_grad_norm(opt.grad_clip);
        adam.step();
        last_good = model;

        std::string val_cell;
        if (val_data && opt.val_interval > 0 && (iter + 1) % opt.val_interval == 0) {
            Rng vrng = root.fork(0xa110000ull + static_cast<uint64_t>(iter));
            const Eigen::Index VN = val_data->rows() / D;
            TrainBatch vb;
            vb.mu0 = sample_prior_batch(static_cast<int>(VN), D, n, vrng);
            vb.mu1 = *val_data;
            vb.t.resize(VN);
            for (Eigen::Index b = 0; b < VN; ++b) vb.t[b] = sample_time(vrng);
            val_cell = csvfmt::num(flow_loss(model, vb, false));
        }

        if (metrics.is_open()) {
            std::string wall;
            if (opt.log_walltime) {
                const auto dt = std::chrono::steady_clock::now() - t_start;
                wall = csvfmt::num(std::chrono::duration<double>(dt).count());
            }
            metrics << iter << ',' << wall << ',' << csvfmt::num(loss) << ',' << csvfmt::num(adam.lr())
                    << ',' << ot_cost_cell << ',' << val_cell << '\n';
        }
        if (!opt.checkpoint_path.empty() && opt.checkpoint_every > 0 &&
            (iter + 1) % opt.checkpoint_every == 0)
            model.save(opt.checkpoint_path);

        result.final_loss = loss;
        result.iters_run = iter + 1;
    }
    if (!opt.checkpoint_path.empty()) model.save(opt.checkpoint_path);
    return result;
}

}  // namespace sfm
