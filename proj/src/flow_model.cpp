#include "sfm/flow_model.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "sfm/geometry.hpp"
#include "sfm/time_embedding.hpp"

namespace sfm {

void DenseLayer::init(int out, int in, double weight_scale, Rng& rng) {
    W.resize(out, in);
    const double a = weight_scale / std::sqrt(static_cast<double>(in));
    for (Eigen::Index j = 0; j < W.cols(); ++j)
        for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = a * (2.0 * rng.uniform() - 1.0);
    b = Vec::Zero(out);
    gW = Mat::Zero(out, in);
    gb = Vec::Zero(out);
}

void DenseLayer::zero_grad() {
    gW.setZero();
    gb.setZero();
}

FlowModel::FlowModel(FlowKind kind, int n, int D, int H, int depth)
    : kind_(kind), n_(n), D_(D), H_(H), depth_(depth) {
    if (n < 1 || D < 1 || H < 2 || H % 2 != 0 || depth < 1)
        throw std::invalid_argument("FlowModel: bad dimensions");
    Rng rng(0x5f3759df);  // deterministic init; training seeds control the data stream
    in_x_.init(H, n * D, 1.0, rng);
    in_t_.init(H, H, 1.0, rng);
    head_.resize(depth);
    head_[0].init(H, 2 * H, 1.0, rng);
    for (int i = 1; i < depth; ++i) head_[i].init(H, H, 1.0, rng);
    // near-zero initial field keeps early trajectories on-manifold
    out_.init(n * D, H, 0.01, rng);
}

std::vector<DenseLayer*> FlowModel::layers() {
    std::vector<DenseLayer*> v{&in_x_, &in_t_};
    for (auto& l : head_) v.push_back(&l);
    v.push_back(&out_);
    return v;
}

std::vector<const DenseLayer*> FlowModel::layers() const {
    std::vector<const DenseLayer*> v{&in_x_, &in_t_};
    for (const auto& l : head_) v.push_back(&l);
    v.push_back(&out_);
    return v;
}

void FlowModel::zero_grad() {
    for (auto* l : layers()) l->zero_grad();
}

void FlowModel::zero_output_layer() {
    out_.W.setZero();
    out_.b.setZero();
}

double FlowModel::grad_norm() const {
    double sq = 0;
    for (const auto* l : layers()) sq += l->gW.squaredNorm() + l->gb.squaredNorm();
    return std::sqrt(sq);
}

void FlowModel::clip_grad_norm(double max_norm) {
    const double g = grad_norm();
    if (g <= max_norm || g == 0.0) return;
    const double s = max_norm / g;
    for (auto* l : layers()) {
        l->gW *= s;
        l->gb *= s;
    }
}

namespace {

// stacked rows (B*D x n) -> feature-major columns (D*n x B)
Mat rows_to_columns(const Mat& X, int D, int n) {
    const Eigen::Index B = X.rows() / D;
    Mat out(static_cast<Eigen::Index>(D) * n, B);
    for (Eigen::Index b = 0; b < B; ++b)
        for (int d = 0; d < D; ++d)
            out.col(b).segment(static_cast<Eigen::Index>(d) * n, n) = X.row(b * D + d).transpose();
    return out;
}

Mat columns_to_rows(const Mat& C, int D, int n) {
    const Eigen::Index B = C.cols();
    Mat out(B * D, n);
    for (Eigen::Index b = 0; b < B; ++b)
        for (int d = 0; d < D; ++d)
            out.row(b * D + d) = C.col(b).segment(static_cast<Eigen::Index>(d) * n, n).transpose();
    return out;
}

inline Mat affine(const DenseLayer& l, const Mat& in) {
    return (l.W * in).colwise() + l.b;
}

}  // namespace

Mat FlowModel::forward_impl(const Mat& X, const Mat& temb, Cache* cache) const {
    if (X.cols() != n_ || X.rows() % D_ != 0)
        throw std::invalid_argument("FlowModel::forward: input shape mismatch");
    if (!X.allFinite()) throw NumericalError("FlowModel::forward: non-finite input");
    const Eigen::Index B = X.rows() / D_;

    Mat xin = rows_to_columns(X, D_, n_);
    Mat ax = affine(in_x_, xin).array().tanh();
    Mat at = affine(in_t_, temb).array().tanh();
    if (at.cols() == 1 && B > 1) at = at.replicate(1, B);

    Mat h(2 * H_, B);
    h.topRows(H_) = ax;
    h.bottomRows(H_) = at;

    std::vector<Mat> head_act;
    head_act.reserve(head_.size());
    for (const auto& l : head_) {
        h = affine(l, h).array().tanh();
        head_act.push_back(h);
    }

    Mat v = columns_to_rows(affine(out_, h), D_, n_);
    v = geo::project_tangent_rows(mode(), X, v);
    if (!v.allFinite()) throw NumericalError("FlowModel::forward: non-finite activations");

    if (cache) {
        cache->base_rows = X;
        cache->xin = std::move(xin);
        cache->temb = temb.cols() == B ? temb : Mat(temb.replicate(1, B));
        cache->ax = std::move(ax);
        cache->at = std::move(at);
        cache->head_act = std::move(head_act);
    }
    return v;
}

Mat FlowModel::forward(const Mat& X, const Vec& t, Cache* cache) const {
    const Eigen::Index B = X.rows() / D_;
    if (t.size() != B) throw std::invalid_argument("FlowModel::forward: t size mismatch");
    Mat temb(H_, B);
    for (Eigen::Index b = 0; b < B; ++b) temb.col(b) = embed_time(t[b], H_);
    return forward_impl(X, temb, cache);
}

Mat FlowModel::forward_shared(const Mat& X, double t) const {
    Mat temb(H_, 1);
    temb.col(0) = embed_time(t, H_);
    return forward_impl(X, temb, nullptr);
}

BatchField FlowModel::field() const {
    return [this](const Mat& X, double t) { return forward_shared(X, t); };
}

void FlowModel::backward(const Cache& cache, const Mat& dV) {
    // projection is self-adjoint: pull the upstream gradient back through it
    Mat g_rows = geo::project_tangent_rows(mode(), cache.base_rows, dV);
    Mat g = rows_to_columns(g_rows, D_, n_);

    // output layer (linear)
    const Mat& h_last = cache.head_act.back();
    out_.gW.noalias() += g * h_last.transpose();
    out_.gb += g.rowwise().sum();
    Mat gh = out_.W.transpose() * g;

    // head layers, reversed
    for (int i = static_cast<int>(head_.size()) - 1; i >= 0; --i) {
        const Mat& act = cache.head_act[i];
        Mat dz = gh.cwiseProduct(Mat::Ones(act.rows(), act.cols()) - act.cwiseProduct(act));
        Mat input;
        if (i == 0) {
            input.resize(2 * H_, act.cols());
            input.topRows(H_) = cache.ax;
            input.bottomRows(H_) = cache.at;
        } else {
            input = cache.head_act[i - 1];
        }
        head_[i].gW.noalias() += dz * input.transpose();
        head_[i].gb += dz.rowwise().sum();
        gh = head_[i].W.transpose() * dz;
    }

    Mat gx = gh.topRows(H_);
    Mat gt = gh.bottomRows(H_);

    Mat dzx = gx.cwiseProduct(Mat::Ones(gx.rows(), gx.cols()) - cache.ax.cwiseProduct(cache.ax));
    in_x_.gW.noalias() += dzx * cache.xin.transpose();
    in_x_.gb += dzx.rowwise().sum();

    Mat dzt = gt.cwiseProduct(Mat::Ones(gt.rows(), gt.cols()) - cache.at.cwiseProduct(cache.at));
    in_t_.gW.noalias() += dzt * cache.temb.transpose();
    in_t_.gb += dzt.rowwise().sum();
}

// --- divergence ---------------------------------------------------------------

Vec divergence_batch(const BatchField& field, const Mat& X, int D, double t, DivMethod method,
                     int probes, Rng& rng, double fd_step) {
    const int n = static_cast<int>(X.cols());
    const Eigen::Index B = X.rows() / D;
    Vec div = Vec::Zero(B);
    const double h = fd_step;

    if (method == DivMethod::Exact) {
        for (int d = 0; d < D; ++d) {
            for (int c = 0; c < n; ++c) {
                Mat Xp = X, Xm = X;
                for (Eigen::Index b = 0; b < B; ++b) {
                    Xp(b * D + d, c) += h;
                    Xm(b * D + d, c) -= h;
                }
                const Mat dd = (field(Xp, t) - field(Xm, t)) / (2.0 * h);
                for (Eigen::Index b = 0; b < B; ++b) div[b] += dd(b * D + d, c);
            }
        }
        return div;
    }

    if (probes < 1) throw std::invalid_argument("divergence: probes must be >= 1");
    for (int p = 0; p < probes; ++p) {
        Mat eps(X.rows(), X.cols());
        for (Eigen::Index i = 0; i < eps.rows(); ++i)
            for (Eigen::Index j = 0; j < eps.cols(); ++j) eps(i, j) = rng.normal();
        const Mat dd = (field(X + h * eps, t) - field(X - h * eps, t)) / (2.0 * h);
        for (Eigen::Index b = 0; b < B; ++b)
            div[b] += eps.middleRows(b * D, D).cwiseProduct(dd.middleRows(b * D, D)).sum();
    }
    return div / static_cast<double>(probes);
}

double divergence(const BatchField& field, const Mat& X, int D, double t, DivMethod method,
                  int probes, Rng& rng, double fd_step) {
    if (X.rows() != D) throw std::invalid_argument("divergence: expected a single sample");
    return divergence_batch(field, X, D, t, method, probes, rng, fd_step)[0];
}

// --- checkpoint io --------------------------------------------------------------
//
// Layout (little-endian):
//   8 bytes magic "SFMCKPT\0", u32 version (1), u8 kind, u32 n, D, H, depth,
//   u32 tensor count, then per tensor: u32 rows, u32 cols, rows*cols f64
//   values in column-major order. Tensors alternate W, b (as a cols=1
//   matrix) in layer order.

namespace {

constexpr char kMagic[8] = {'S', 'F', 'M', 'C', 'K', 'P', 'T', '\0'};
constexpr uint32_t kVersion = 1;

void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }

uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    return v;
}

void write_tensor(std::ostream& os, const Mat& m) {
    write_u32(os, static_cast<uint32_t>(m.rows()));
    write_u32(os, static_cast<uint32_t>(m.cols()));
    os.write(reinterpret_cast<const char*>(m.data()),
             static_cast<std::streamsize>(sizeof(double)) * m.size());
}

Mat read_tensor(std::istream& is) {
    const uint32_t r = read_u32(is), c = read_u32(is);
    Mat m(r, c);
    is.read(reinterpret_cast<char*>(m.data()), static_cast<std::streamsize>(sizeof(double)) * m.size());
    return m;
}

}  // namespace

void FlowModel::save(const std::string& path) const {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw std::runtime_error("cannot write checkpoint: " + path);
    os.write(kMagic, 8);
    write_u32(os, kVersion);
    const uint8_t kind = static_cast<uint8_t>(kind_);
    os.write(reinterpret_cast<const char*>(&kind), 1);
    write_u32(os, static_cast<uint32_t>(n_));
    write_u32(os, static_cast<uint32_t>(D_));
    write_u32(os, static_cast<uint32_t>(H_));
    write_u32(os, static_cast<uint32_t>(depth_));
    const auto ls = layers();
    write_u32(os, static_cast<uint32_t>(2 * ls.size()));
    for (const auto* l : ls) {
        write_tensor(os, l->W);
        write_tensor(os, l->b);
    }
    if (!os) throw std::runtime_error("checkpoint write failed: " + path);
}

FlowModel FlowModel::load(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot read checkpoint: " + path);
    char magic[8];
    is.read(magic, 8);
    if (std::memcmp(magic, kMagic, 8) != 0) throw std::runtime_error("bad checkpoint magic: " + path);
    if (read_u32(is) != kVersion) throw std::runtime_error("unsupported checkpoint version");
    uint8_t kind = 0;
    is.read(reinterpret_cast<char*>(&kind), 1);
    const int n = static_cast<int>(read_u32(is));
    const int D = static_cast<int>(read_u32(is));
    const int H = static_cast<int>(read_u32(is));
    const int depth = static_cast<int>(read_u32(is));
    FlowModel model(static_cast<FlowKind>(kind), n, D, H, depth);
    const uint32_t count = read_u32(is);
    auto ls = model.layers();
    if (count != 2 * ls.size()) throw std::runtime_error("checkpoint tensor count mismatch");
    for (auto* l : ls) {
        Mat W = read_tensor(is);
        Mat b = read_tensor(is);
        if (W.rows() != l->W.rows() || W.cols() != l->W.cols() || b.rows() != l->b.size())
            throw std::runtime_error("checkpoint tensor shape mismatch");
        l->W = W;
        l->b = b.col(0);
    }
    if (!is) throw std::runtime_error("checkpoint read failed: " + path);
    return model;
}

// --- Adam -----------------------------------------------------------------------

Adam::Adam(FlowModel& model, double lr, double beta1, double beta2, double eps)
    : model_(&model), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    for (auto* l : model.layers()) {
        mW_.push_back(Mat::Zero(l->W.rows(), l->W.cols()));
        vW_.push_back(Mat::Zero(l->W.rows(), l->W.cols()));
        mb_.push_back(Vec::Zero(l->b.size()));
        vb_.push_back(Vec::Zero(l->b.size()));
    }
}

void Adam::step() {
    ++steps_;
    const double c1 = 1.0 - std::pow(beta1_, static_cast<double>(steps_));
    const double c2 = 1.0 - std::pow(beta2_, static_cast<double>(steps_));
    auto ls = model_->layers();
    for (size_t i = 0; i < ls.size(); ++i) {
        auto* l = ls[i];
        mW_[i] = beta1_ * mW_[i] + (1.0 - beta1_) * l->gW;
        vW_[i] = beta2_ * vW_[i] + (1.0 - beta2_) * l->gW.cwiseProduct(l->gW);
        l->W -= lr_ * (mW_[i] / c1).cwiseQuotient(((vW_[i] / c2).cwiseSqrt().array() + eps_).matrix());
        mb_[i] = beta1_ * mb_[i] + (1.0 - beta1_) * l->gb;
        vb_[i] = beta2_ * vb_[i] + (1.0 - beta2_) * l->gb.cwiseProduct(l->gb);
        l->b -= lr_ * (mb_[i] / c1).cwiseQuotient(((vb_[i] / c2).cwiseSqrt().array() + eps_).matrix());
    }
}

}  // namespace sfm
