#include "sfm/integrate.hpp"

#include <cmath>

namespace sfm {

namespace {

// Dormand-Prince 5(4) tableau
constexpr double c2 = 1.0 / 5, c3 = 3.0 / 10, c4 = 4.0 / 5, c5 = 8.0 / 9;
constexpr double a21 = 1.0 / 5;
constexpr double a31 = 3.0 / 40, a32 = 9.0 / 40;
constexpr double a41 = 44.0 / 45, a42 = -56.0 / 15, a43 = 32.0 / 9;
constexpr double a51 = 19372.0 / 6561, a52 = -25360.0 / 2187, a53 = 64448.0 / 6561,
                 a54 = -212.0 / 729;
constexpr double a61 = 9017.0 / 3168, a62 = -355.0 / 33, a63 = 46732.0 / 5247, a64 = 49.0 / 176,
                 a65 = -5103.0 / 18656;
constexpr double b1 = 35.0 / 384, b3 = 500.0 / 1113, b4 = 125.0 / 192, b5 = -2187.0 / 6784,
                 b6 = 11.0 / 84;
// 5th-order minus embedded 4th-order weights
constexpr double e1 = 71.0 / 57600, e3 = -71.0 / 16695, e4 = 71.0 / 1920, e5 = -17253.0 / 339200,
                 e6 = 22.0 / 525, e7 = -1.0 / 40;

double error_norm(const Mat& err, const Mat& y0, const Mat& y1, double atol, double rtol) {
    double acc = 0.0;
    for (Eigen::Index j = 0; j < err.cols(); ++j) {
        for (Eigen::Index i = 0; i < err.rows(); ++i) {
            const double scale =
                atol + rtol * std::max(std::abs(y0(i, j)), std::abs(y1(i, j)));
            const double r = err(i, j) / scale;
            acc += r * r;
        }
    }
    return std::sqrt(acc / static_cast<double>(err.size()));
}

}  // namespace

Mat dopri5(const OdeRhs& rhs, Mat y, double t0, double t1, const OdeOptions& opt,
           const OdePostStep& post_step, const OdePreStep& pre_step, OdeStats* stats) {
    if (t0 == t1) return y;
    const double dir = t1 > t0 ? 1.0 : -1.0;
    double t = t0;
    double h = opt.h_initial > 0 ? dir * opt.h_initial : (t1 - t0) / 100.0;

    auto eval = [&](const Mat& state, double time) {
        if (stats) ++stats->rhs_evals;
        return rhs(state, time);
    };

    long steps = 0;
    while (dir * (t1 - t) > 0) {
        if (++steps > opt.max_steps) throw NumericalError("dopri5: max step count exceeded");
        if (std::abs(h) < opt.h_min) throw NumericalError("dopri5: step size underflow");
        if (dir * (t + h - t1) > 0) h = t1 - t;

        if (pre_step) pre_step(t, h);
        const Mat k1 = eval(y, t);
        const Mat k2 = eval(y + h * (a21 * k1), t + c2 * h);
        const Mat k3 = eval(y + h * (a31 * k1 + a32 * k2), t + c3 * h);
        const Mat k4 = eval(y + h * (a41 * k1 + a42 * k2 + a43 * k3), t + c4 * h);
        const Mat k5 = eval(y + h * (a51 * k1 + a52 * k2 + a53 * k3 + a54 * k4), t + c5 * h);
        const Mat k6 = eval(y + h * (a61 * k1 + a62 * k2 + a63 * k3 + a64 * k4 + a65 * k5), t + h);
        Mat y5 = y + h * (b1 * k1 + b3 * k3 + b4 * k4 + b5 * k5 + b6 * k6);
        const Mat k7 = eval(y5, t + h);
        const Mat err = h * (e1 * k1 + e3 * k3 + e4 * k4 + e5 * k5 + e6 * k6 + e7 * k7);

        double en;
        if (!y5.allFinite() || !err.allFinite()) {
            en = 1e10;  // force rejection and shrink
        } else {
            en = error_norm(err, y, y5, opt.atol, opt.rtol);
        }

        if (en <= 1.0) {
            t += h;
            y = std::move(y5);
            if (post_step) post_step(y, t);
            if (stats) ++stats->accepted;
            const double factor = en == 0.0 ? 5.0 : std::min(5.0, std::max(0.2, 0.9 * std::pow(en, -0.2)));
            h *= factor;
        } else {
            if (stats) ++stats->rejected;
            h *= std::max(0.2, 0.9 * std::pow(en, -0.2));
        }
    }
    return y;
}

}  // namespace sfm
