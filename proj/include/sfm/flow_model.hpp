#pragma once

#include <functional>
#include <string>
#include <vector>

#include "sfm/rng.hpp"
#include "sfm/types.hpp"

namespace sfm {

struct DenseLayer {
    Mat W;   // out x in
    Vec b;   // out
    Mat gW;  // gradient buffer, same shape as W
    Vec gb;

    void init(int out, int in, double weight_scale, Rng& rng);
    void zero_grad();
};

enum class DivMethod { Exact, Hutchinson };

/// Batched vector field: maps stacked manifold rows (B*D x n) at a shared
/// time t to stacked ambient vectors of the same shape.
using BatchField = std::function<Mat(const Mat&, double)>;

/// Time-conditioned MLP vector field
///
///     v(x, t) = head( branch_x(x) || branch_t(Emb(t)) )
///
/// followed by projection of each output row onto the tangent space at the
/// input row (orthogonal projection in sphere mode, mean subtraction in
/// simplex mode). Forward and divergence are read-only over parameters and
/// safe to run concurrently; backward accumulation is single-writer.
class FlowModel {
public:
    FlowModel(FlowKind kind, int n, int D, int H = 128, int depth = 1);

    FlowKind kind() const { return kind_; }
    ManifoldMode mode() const { return manifold_of(kind_); }
    int n() const { return n_; }
    int D() const { return D_; }
    int H() const { return H_; }
    int depth() const { return depth_; }

    /// Intermediate activations kept for the backward pass.
    struct Cache {
        Mat base_rows;              // B*D x n input points (projection backprop)
        Mat xin;                    // Dn x B
        Mat temb;                   // H x B
        Mat ax, at;                 // branch activations, H x B
        std::vector<Mat> head_act;  // post-tanh activations per head layer
    };

    /// Forward pass: X holds B*D stacked rows, t one entry per sample.
    /// Output rows are tangent at the matching input rows. Throws
    /// NumericalError if the input or output is not finite.
    Mat forward(const Mat& X, const Vec& t, Cache* cache = nullptr) const;

    /// Forward with one t shared by the whole batch (integration loops).
    Mat forward_shared(const Mat& X, double t) const;

    /// Field functor over this model (shared t), for the integrators.
    BatchField field() const;

    /// Accumulates parameter gradients for upstream dL/dv given in stacked
    /// rows. Gradients add onto the existing buffers; call zero_grad first.
    void backward(const Cache& cache, const Mat& dV);

    void zero_grad();
    double grad_norm() const;
    void clip_grad_norm(double max_norm);

    /// All layers in a fixed order (x branch, t branch, head..., output).
    std::vector<DenseLayer*> layers();
    std::vector<const DenseLayer*> layers() const;

    /// Zeroes the output layer so the model is exactly the zero field.
    void zero_output_layer();

    void save(const std::string& path) const;
    static FlowModel load(const std::string& path);

private:
    FlowKind kind_;
    int n_, D_, H_, depth_;
    DenseLayer in_x_;                // Dn -> H
    DenseLayer in_t_;                // H  -> H
    std::vector<DenseLayer> head_;   // 2H -> H, then H -> H
    DenseLayer out_;                 // H  -> Dn

    Mat forward_impl(const Mat& X, const Mat& temb, Cache* cache) const;
};

/// Per-sample divergence of a batched field at shared time t, in ambient
/// coordinates. Exact mode runs D*n central-difference directional
/// derivatives and sums the diagonal of the Jacobian; Hutchinson mode
/// averages eps . (directional derivative along eps) over standard-normal
/// probes, one independent probe set per sample.
Vec divergence_batch(const BatchField& field, const Mat& X, int D, double t, DivMethod method,
                     int probes, Rng& rng, double fd_step = 1e-5);

/// Single-point convenience wrapper (one sample of D rows).
double divergence(const BatchField& field, const Mat& X, int D, double t, DivMethod method,
                  int probes, Rng& rng, double fd_step = 1e-5);

/// Adam with bias correction; moment buffers sit beside the gradient
/// buffers and shape-match them.
class Adam {
public:
    explicit Adam(FlowModel& model, double lr = 1e-3, double beta1 = 0.9, double beta2 = 0.999,
                  double eps = 1e-8);
    void step();
    double lr() const { return lr_; }
    void set_lr(double lr) { lr_ = lr; }

private:
    FlowModel* model_;
    double lr_, beta1_, beta2_, eps_;
    long steps_ = 0;
    std::vector<Mat> mW_, vW_;
    std::vector<Vec> mb_, vb_;
};

}  // namespace sfm
