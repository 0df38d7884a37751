#include <doctest.h>

#include <cmath>
#include <cstdio>
#include <fstream>

#include "sfm/data.hpp"
#include "sfm/geometry.hpp"
#include "sfm/likelihood.hpp"
#include "sfm/training.hpp"

using namespace sfm;

namespace {

FlowModel zero_model(int n, int D = 1) {
    FlowModel m(FlowKind::Sfm, n, D, 8, 1);
    m.zero_output_layer();
    return m;
}

const std::vector<int> kSizes = {2, 3, 4, 10, 27};

}  // namespace

TEST_SUITE("likelihood") {

TEST_CASE("prior log-density") {
    CHECK(prior_logp(2) == doctest::Approx(0.0));
    CHECK(prior_logp(3) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
    CHECK(prior_logp(4) == doctest::Approx(std::log(6.0)).epsilon(1e-12));
}

TEST_CASE("change-of-measure terms") {
    Vec x(2);
    x << std::sqrt(2.0) / 2, std::sqrt(2.0) / 2;
    CHECK(logdet_fwd(x) == doctest::Approx(0.0).epsilon(1e-14));

    Vec mu(2);
    mu << 0.5, 0.5;
    CHECK(logdet_bwd(mu) == doctest::Approx(0.0).epsilon(1e-14));

    Rng rng(3);
    double worst = 0.0;
    for (int n : kSizes) {
        for (int i = 0; i < 1000; ++i) {
            const Vec m = geo::clamp_interior(Vec(sample_prior(1, n, rng).row(0).transpose()), 1e-6);
            worst = std::max(worst, std::abs(logdet_fwd(geo::to_sphere(m).eval()) + logdet_bwd(m)));
        }
    }
    CHECK(worst < 1e-12);

    Vec boundary(3);
    boundary << 1.0, 0.0, 0.0;
    CHECK_THROWS_AS(logdet_bwd(boundary), std::invalid_argument);
    CHECK_THROWS_AS(logdet_fwd(boundary), std::invalid_argument);
}

TEST_CASE("zero field: no density change, state fixed") {
    Rng rng(5);
    const FlowModel model = zero_model(3);
    const Mat x1 = geo::to_sphere_rows(sample_prior_batch(4, 1, 3, rng));
    LikelihoodOptions lo;
    lo.method = DivMethod::Exact;
    Rng lrng(7);
    const OdeLogpResult res = ode_logp(model, x1, lo, lrng);
    CHECK(res.logp.cwiseAbs().maxCoeff() == 0.0);
    CHECK((res.x0 - x1).cwiseAbs().maxCoeff() < 1e-13);
}

TEST_CASE("constant-Jacobian field: divergence integral has closed form") {
    // sum-zero linear field on the simplex; its divergence is constant in
    // space and time, so the renormalization hooks cannot disturb the value
    const int n = 3;
    Rng rng(9);
    Mat A0(n, n);
    for (int i = 0; i < n; ++i)
        for (int j = 0; j < n; ++j) A0(i, j) = 0.1 * rng.normal();
    const Mat P = Mat::Identity(n, n) - Mat::Constant(n, n, 1.0 / n);
    const Mat J = P * A0;
    BatchField field = [&](const Mat& X, double) { return Mat(X * J.transpose()); };

    const Mat mu1 = sample_prior_batch(5, 1, n, rng);
    LikelihoodOptions lo;
    lo.method = DivMethod::Exact;

    Rng r1(11);
    const OdeLogpResult ode = ode_logp_field(field, FlowKind::LinearFm, mu1, 1, lo, r1);
    for (int b = 0; b < 5; ++b) CHECK(ode.logp[b] == doctest::Approx(-J.trace()).epsilon(1e-6));

    LikelihoodOptions le = lo;
    le.use_euler = true;
    le.euler_steps = 500;
    Rng r2(13);
    const OdeLogpResult eul = ode_logp_field(field, FlowKind::LinearFm, mu1, 1, le, r2);
    for (int b = 0; b < 5; ++b) CHECK(eul.logp[b] == doctest::Approx(-J.trace()).epsilon(1e-4));

    // Hutchinson with many probes agrees within a loose window
    LikelihoodOptions lh = lo;
    lh.method = DivMethod::Hutchinson;
    lh.probes = 256;
    Rng r3(17);
    const OdeLogpResult hut = ode_logp_field(field, FlowKind::LinearFm, mu1, 1, lh, r3);
    for (int b = 0; b < 5; ++b) CHECK(std::abs(hut.logp[b] + J.trace()) < 0.05);
}

TEST_CASE("zero-field interior density equals the prior exactly") {
    Rng rng(19);
    for (int n : kSizes) {
        const FlowModel model = zero_model(n);
        const Mat mu = sample_prior_batch(6, 1, n, rng);
        Mat interior(mu.rows(), mu.cols());
        for (Eigen::Index r = 0; r < mu.rows(); ++r)
            interior.row(r) = geo::clamp_interior(Vec(mu.row(r).transpose()), 1e-4).transpose();
        LikelihoodOptions lo;
        lo.method = DivMethod::Exact;
        Rng lrng(23);
        const auto reports = nll_interior(model, interior, lo, lrng);
        for (const auto& r : reports) {
            CHECK(std::abs(r.total - prior_logp(n)) < 1e-10);
            CHECK(std::abs(r.total - r.recompose()) < 1e-12);
            CHECK(r.nll() == -r.total);
        }
    }

    // multi-dimensional: one prior term per data dimension
    const FlowModel model3 = zero_model(3, 4);
    Rng rng_md(31);
    const Mat mu = sample_prior_batch(2, 4, 3, rng_md);
    Mat interior(mu.rows(), mu.cols());
    for (Eigen::Index r = 0; r < mu.rows(); ++r)
        interior.row(r) = geo::clamp_interior(Vec(mu.row(r).transpose()), 1e-4).transpose();
    LikelihoodOptions lo;
    lo.method = DivMethod::Exact;
    Rng lrng(37);
    const auto reports = nll_interior(model3, interior, lo, lrng);
    for (const auto& r : reports) CHECK(std::abs(r.total - 4.0 * prior_logp(3)) < 1e-9);
}

TEST_CASE("boundary rejects interior-op misuse and bad arguments") {
    const FlowModel model = zero_model(3);
    Mat boundary(1, 3);
    boundary << 1.0, 0.0, 0.0;
    LikelihoodOptions lo;
    Rng rng(41);
    CHECK_THROWS_AS(nll_interior(model, boundary, lo, rng), std::invalid_argument);

    VecI delta(1);
    delta << 1;
    CHECK_THROWS_AS(nll_boundary(model, delta, 1.5, 1, lo, rng), std::invalid_argument);
    CHECK_THROWS_AS(nll_boundary(model, delta, 0.5, 0, lo, rng), std::invalid_argument);
}

TEST_CASE("posterior draws live in the shrunken corner region") {
    Rng rng(43);
    const double t = 0.97;
    VecI delta(200);
    for (int i = 0; i < 200; ++i) delta[i] = i % 3;
    const Mat draws = sample_qt(delta, 3, t, rng);
    CHECK(is_prob_matrix(draws, 1e-12));
    for (int i = 0; i < 200; ++i) {
        CHECK(draws(i, delta[i]) >= t);
        for (int c = 0; c < 3; ++c)
            if (c != delta[i]) CHECK(draws(i, c) <= 1.0 - t + 1e-15);
    }
}

TEST_CASE("posterior and categorical log terms") {
    // n = 3, t = 0.995: log 2 - 2 log 0.005
    CHECK(posterior_logq_row(3, 0.995) ==
          doctest::Approx(std::log(2.0) - 2.0 * std::log(0.005)).epsilon(1e-12));
    CHECK(posterior_logq_row(3, 0.995) == doctest::Approx(11.2898).epsilon(1e-4));

    Mat mu(1, 2);
    mu << 0.9, 0.1;
    VecI delta(1);
    delta << 0;
    CHECK(cat_logp_rows(mu, delta) == doctest::Approx(std::log(0.9)).epsilon(1e-12));
    CHECK(cat_logp_rows(mu, delta) == doctest::Approx(-0.1054).epsilon(1e-3));
}

TEST_CASE("boundary bound with zero field decomposes in closed form") {
    const FlowModel model = zero_model(3);
    VecI delta(1);
    delta << 2;
    LikelihoodOptions lo;
    lo.method = DivMethod::Exact;
    const double t = 0.9;
    Rng rng(47);
    const auto reports = nll_boundary(model, delta, t, 32, lo, rng);
    REQUIRE(reports.size() == 1);
    const NLLReport& r = reports[0];
    // with a zero field the interior part collapses to the prior density,
    // so the bound is log p0 - log q + E[log mu[delta]]
    CHECK(std::abs(r.total - r.recompose()) < 1e-12);
    CHECK(r.posterior_logq == doctest::Approx(posterior_logq_row(3, t)).epsilon(1e-12));
    CHECK(r.ode_logp == doctest::Approx(0.0).epsilon(1e-12));
    CHECK(std::abs(r.logdet_fwd + r.logdet_bwd) < 1e-10);
    CHECK(r.cat_logp < 0.0);
    CHECK(r.cat_logp > std::log(t));  // mu[delta] >= t
}

TEST_CASE("bound variance shrinks with the number of draws") {
    const FlowModel model = zero_model(3);
    VecI delta(1);
    delta << 0;
    LikelihoodOptions lo;
    lo.method = DivMethod::Exact;
    const double t = 0.6;

    auto variance_of_bound = [&](int samples, uint64_t seed_base) {
        const int R = 400;
        std::vector<double> vals(R);
        for (int i = 0; i < R; ++i) {
            Rng rng = Rng(seed_base).fork(static_cast<uint64_t>(i));
            vals[static_cast<size_t>(i)] = nll_boundary(model, delta, t, samples, lo, rng)[0].total;
        }
        double mean = 0.0;
        for (double v : vals) mean += v;
        mean /= R;
        double var = 0.0;
        for (double v : vals) var += (v - mean) * (v - mean);
        return var / (R - 1);
    };

    const double v1 = variance_of_bound(1, 61);
    const double v16 = variance_of_bound(16, 67);
    const double ratio = v1 / v16;
    CHECK(ratio > 8.0);
    CHECK(ratio < 32.0);
}

TEST_CASE("exact and Hutchinson likelihoods agree on a trained toy model") {
    const Dataset ds = gen_swissroll(200, 0.02, 53);
    FlowModel model(FlowKind::Sfm, 3, 1, 32, 1);
    TrainOptions topt;
    topt.iters = 300;
    topt.seed = 59;
    train(model, ds.targets, topt);

    const Mat point = ds.targets.topRows(1);
    LikelihoodOptions exact_opt;
    exact_opt.method = DivMethod::Exact;
    Rng r1(61);
    const double exact = nll_interior(model, point, exact_opt, r1)[0].total;

    // average independent single-probe integrations of the same point
    const int replicas = 512;
    Mat rep(replicas, 3);
    for (int i = 0; i < replicas; ++i) rep.row(i) = point.row(0);
    LikelihoodOptions hutch_opt;
    hutch_opt.method = DivMethod::Hutchinson;
    hutch_opt.probes = 8;
    Rng r2(67);
    const auto reports = nll_interior(model, rep, hutch_opt, r2);
    double mean = 0.0;
    for (const auto& r : reports) mean += r.total;
    mean /= replicas;
    CHECK(std::abs(mean - exact) < 0.05);
}

TEST_CASE("Euler and adaptive likelihoods agree on a trained model") {
    const Dataset ds = gen_swissroll(200, 0.02, 71);
    FlowModel model(FlowKind::Sfm, 3, 1, 32, 1);
    TrainOptions topt;
    topt.iters = 300;
    topt.seed = 73;
    train(model, ds.targets, topt);

    const Mat pts = ds.targets.topRows(16);
    LikelihoodOptions ode_opt;
    ode_opt.method = DivMethod::Exact;
    LikelihoodOptions euler_opt = ode_opt;
    euler_opt.use_euler = true;
    euler_opt.euler_steps = 300;

    Rng r1(79), r2(83);
    const auto a = nll_interior(model, pts, ode_opt, r1);
    const auto b = nll_interior(model, pts, euler_opt, r2);
    double mean_a = 0, mean_b = 0;
    for (size_t i = 0; i < a.size(); ++i) {
        mean_a += a[i].nll();
        mean_b += b[i].nll();
    }
    CHECK(std::abs(mean_a - mean_b) / 16.0 < 0.1);
}

TEST_CASE("bits per character") {
    Rng rng(89);
    const int n = 27, D = 8;
    VecI classes(4 * D);
    for (int i = 0; i < classes.size(); ++i) classes[i] = i % n;
    const Mat mu1 = encode_onehot(classes, n);

    // perfect one-step predictor: zero cross-entropy
    OneStepPredictor perfect = [&](const Mat&, double) { return mu1; };
    Rng r1(91);
    CHECK(bpc_with_predictor(FlowKind::Sfm, perfect, mu1, D, n, 10.0, 1e-7, 1e-7, r1) ==
          doctest::Approx(0.0).epsilon(1e-9));

    // uniform predictor: log2 n bits per character
    OneStepPredictor uniform = [&](const Mat& mu_t, double) {
        return Mat(Mat::Constant(mu_t.rows(), n, 1.0 / n));
    };
    Rng r2(97);
    const double u = bpc_with_predictor(FlowKind::Sfm, uniform, mu1, D, n, 10.0, 1e-7, 1e-7, r2);
    CHECK(std::abs(u - std::log2(static_cast<double>(n))) < 1e-3);

    // s_max = 10 leaves only e^-10 of the time mass uncovered
    CHECK(1.0 - std::exp(-10.0) == doctest::Approx(1.0).epsilon(5e-5));

    // inner products are floored, so a hostile predictor stays finite
    OneStepPredictor zeroed = [&](const Mat& mu_t, double) {
        Mat out = Mat::Zero(mu_t.rows(), n);
        out.col(0).setConstant(1.0);
        return out;
    };
    VecI other(2 * D);
    for (int i = 0; i < other.size(); ++i) other[i] = 1 + (i % (n - 1));
    Rng r3(101);
    const double hostile = bpc_with_predictor(FlowKind::Sfm, zeroed, encode_onehot(other, n), D, n,
                                              10.0, 1e-6, 1e-6, r3);
    CHECK(std::isfinite(hostile));
}

TEST_CASE("report CSV has one row per sample") {
    std::vector<NLLReport> reports(3);
    reports[0].total = 1.25;
    reports[1].total = -0.5;
    reports[2].integrator = "dopri5";
    const std::string path = "nll_report_test.csv";
    write_nll_csv(path, reports);
    std::ifstream is(path);
    std::string line;
    int rows = 0;
    std::getline(is, line);
    CHECK(line.rfind("sample,total,nll,", 0) == 0);
    while (std::getline(is, line))
        if (!line.empty()) ++rows;
    CHECK(rows == 3);
    std::remove(path.c_str());
}

}  // TEST_SUITE
