#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "riccdiff/error.hpp"
#include "riccdiff/mc.hpp"
#include "riccdiff/rng.hpp"
#include "support/oracles.hpp"

#include <limits>

using namespace riccdiff;

namespace {

ModelParams iso2(int kappa, double eps, double a = 0.0) {
    return ModelParams(a * Matrix::Identity(2, 2), SymMat::identity(2), SymMat::identity(2), kappa, 0.0, eps);
}

ModelParams scalar(double a, double r, double s, int kappa, double eps) {
    return ModelParams(Matrix::Constant(1, 1, a), SymMat::identity(1, r), SymMat::identity(1, s), kappa, 0.0, eps);
}

}  // namespace

TEST_CASE("batch means") {
    std::vector<double> x(100);
    for (int i = 0; i < 100; ++i) x[i] = i;
    const auto b = batch_means(x, 4);
    REQUIRE(b.size() == 4);
    CHECK(b[0] == doctest::Approx(12.0));
    CHECK(b[3] == doctest::Approx(87.0));
    const MeanEstimate m = batch_mean(x, 4);
    CHECK(m.mean == doctest::Approx(49.5));
    CHECK(m.batches == 4);
    CHECK(batch_mean({1.0, 2.0}, 20).batches == 2);
    CHECK_THROWS_AS(batch_mean({}), Error);
}

TEST_CASE("matrix norms") {
    Matrix m(2, 2);
    m << 3.0, 0.0, 0.0, -4.0;
    CHECK(matrix_norm(m, NormKind::Spectral) == doctest::Approx(4.0));
    CHECK(matrix_norm(m, NormKind::Frobenius) == doctest::Approx(5.0));
    CHECK(matrix_norm(m, NormKind::Trace) == doctest::Approx(1.0));
    Matrix n(2, 2);
    n << 0.0, 2.0, 0.0, 0.0;
    CHECK(matrix_norm(n, NormKind::Spectral) == doctest::Approx(2.0));
}

TEST_CASE("moment norm of a constant sampler is exact") {
    const PathSampler id = [](std::uint64_t) -> Matrix { return Matrix::Identity(2, 2); };
    const MomentEstimate m = estimate_moment_norm(id, NormKind::Spectral, 3, 200, 20, 1);
    CHECK(m.value == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(m.std_error == 0.0);
    CHECK(m.constant);
    CHECK(m.diverged == 0);
    CHECK_THROWS_AS(estimate_moment_norm(id, NormKind::Spectral, 1, 99), Error);
}

TEST_CASE("moment norm of a Gaussian scalar") {
    // E[|Z|²]^{1/2} = 1.
    const PathSampler z = [](std::uint64_t i) -> Matrix {
        Rng rng(5, i, StreamTag::Auxiliary);
        return Matrix::Constant(1, 1, rng.normal());
    };
    const MomentEstimate m = estimate_moment_norm(z, NormKind::Frobenius, 2, 40000);
    CHECK(std::abs(m.value - 1.0) <= 4 * m.std_error);
}

TEST_CASE("standard error shrinks like one over root n") {
    const PathSampler z = [](std::uint64_t i) -> Matrix {
        Rng rng(7, i, StreamTag::Auxiliary);
        return Matrix::Constant(1, 1, 1.0 + rng.normal());
    };
    const MomentEstimate a = estimate_moment_norm(z, NormKind::Trace, 1, 20000, 200);
    const MomentEstimate b = estimate_moment_norm(z, NormKind::Trace, 1, 40000, 200);
    CHECK(a.std_error / b.std_error == doctest::Approx(std::sqrt(2.0)).epsilon(0.2));
}

TEST_CASE("diverged paths are counted and flagged") {
    std::vector<double> norms(200, 1.0);
    for (int i = 0; i < 5; ++i) norms[i] = std::numeric_limits<double>::quiet_NaN();
    const MomentEstimate m = moment_from_norms(norms, 2);
    CHECK(m.diverged == 5);
    CHECK(m.diverged_fraction == doctest::Approx(0.025));
    CHECK_FALSE(m.reliable);
    CHECK(m.value == doctest::Approx(1.0));
}

TEST_CASE("log-log fit recovers exact power laws") {
    std::vector<ScalingPoint> pts;
    for (double e : {0.05, 0.1, 0.2, 0.4}) {
        ScalingPoint p;
        p.eps = e;
        p.response = 3.0 * e * e;
        p.std_error = 0.01 * p.response;
        pts.push_back(p);
    }
    const ScalingFit fit = fit_loglog(pts);
    CHECK(fit.slope == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(fit.intercept == doctest::Approx(std::log(3.0)).epsilon(1e-12));
    CHECK(fit.fitted_points == 4);
    pts[0].dropped = pts[1].dropped = pts[2].dropped = true;
    CHECK(std::isnan(fit_loglog(pts).slope));
}

TEST_CASE("bias of the Euler mean is second order in eps") {
    McOptions opts;
    opts.dt = 0.01;
    opts.threads = 1;
    const ScalingFit fit = bias_curve(iso2(1, 0.0), SymMat::identity(2, 0.5), 1.0, {0.1, 0.2, 0.3, 0.4}, 16000, 3, opts);
    CHECK(fit.fitted_points >= 3);
    CHECK(std::abs(fit.slope - 2.0) <= std::max(0.3, 2 * fit.slope_stderr));
    for (const auto& p : fit.points) CHECK(p.diverged_fraction == 0.0);
}

TEST_CASE("bias point at eps zero is exactly zero") {
    McOptions opts;
    opts.dt = 0.01;
    const ScalingPoint p = bias_point(iso2(1, 0.0), SymMat::identity(2), 1.0, 50, 1, opts);
    CHECK(p.response <= 1e-14);
}

TEST_CASE("fluctuations are first order in eps") {
    McOptions opts;
    opts.dt = 0.01;
    const ScalingFit fit =
        fluctuation_curve(iso2(0, 0.0), SymMat::identity(2, 0.5), 1.0, 2, {0.05, 0.1, 0.2, 0.4}, 2000, 5, opts);
    CHECK(fit.fitted_points == 4);
    CHECK(std::abs(fit.slope - 1.0) <= std::max(0.2, 2 * fit.slope_stderr));
}

TEST_CASE("moments stay below the comparison bound") {
    const ModelParams p = iso2(1, 0.3, 0.2);
    const SymMat q0 = SymMat::identity(2, 2.0);
    McOptions opts;
    opts.dt = 0.01;
    for (double t : {0.5, 2.0}) {
        const PathSampler s = [&](std::uint64_t i) -> Matrix {
            const SnapshotPath path = simulate_snapshots(q0, {t}, opts.dt, p, 9, i, SimOptions{1, false});
            return path.diverged ? Matrix() : path.at[0].Q;
        };
        const MomentEstimate m = estimate_moment_norm(s, NormKind::Trace, 2, 2000);
        CHECK(m.value <= trace_moment_bound(p, 2, t, q0).value + 3 * m.std_error);
    }
}

TEST_CASE("relative spread") {
    std::vector<ScalingPoint> pts(3);
    pts[0].response = 1.0;
    pts[1].response = 1.2;
    pts[2].response = 1.1;
    CHECK(relative_spread(pts) == doctest::Approx(0.2));
}

TEST_CASE("quantiles interpolate") {
    CHECK(empirical_quantile({3, 1, 2}, 0.5) == 2.0);
    CHECK(empirical_quantile({0, 10}, 0.25) == doctest::Approx(2.5));
    const LyapunovStats s = lyapunov_from_samples({-1, -2, 0.5}, {}, 1.0, 0.0, 1);
    CHECK(s.fraction_below == doctest::Approx(0.5));
}

TEST_CASE("noise-free semigroup exponent matches the stable drift") {
    const ModelParams p = iso2(0, 0.0, 0.5);
    McOptions opts;
    opts.dt = 0.01;
    const SymMat pinf = solve_fixed_point(p);
    const LyapunovStats s = lyapunov_exponent(p, pinf, 5.0, 10, 1, opts);
    const double mu = log_norm(p.A() - pinf.dense() * p.S_dense());
    CHECK(s.median == doctest::Approx(mu).epsilon(1e-9));
    CHECK(s.threshold == doctest::Approx(mu / 2));
    CHECK(s.fraction_below == 1.0);
}

TEST_CASE("determinant decay is exact at the fixed point without noise") {
    for (double a : {0.0, 0.7}) {
        const ModelParams p = scalar(a, 1.0, 1.0, 1, 0.0);
        const SymMat pinf = solve_fixed_point(p);
        McOptions opts;
        opts.dt = 0.01;
        const DetDecay d = det_decay_rate(p, 2, pinf, 5.0, 100, 1, opts);
        CHECK(d.rate == doctest::Approx(std::sqrt(a * a + 1.0)).epsilon(1e-8));
        CHECK(d.std_error <= 1e-12);
        CHECK(d.bound == doctest::Approx(1.0));
        CHECK(det_decay_h(d.rate, p) == doctest::Approx(1.0 - d.rate / std::sqrt(a * a + 1.0)));
    }
    CHECK_THROWS_AS(det_decay_rate(scalar(0, 1, 1, 1, 1.5), 2, SymMat::identity(1), 1.0, 100, 1), Error);
}

TEST_CASE("determinant decay from log-determinants") {
    const DetDecay d = det_decay_from_logdets({-2.0, -2.0, -2.0}, 1, 2.0);
    CHECK(d.rate == doctest::Approx(1.0));
    // log mean exp(2L) with L ∈ {0, −1000} stays finite.
    const DetDecay e = det_decay_from_logdets({-1000.0, -1000.0}, 2, 10.0);
    CHECK(e.rate == doctest::Approx(100.0));
}

TEST_CASE("Lambda and W1") {
    Matrix p(2, 2);
    p << 2.0, 0.0, 0.0, 0.5;
    CHECK(lambda_function(p) == doctest::Approx(4.0));
    CHECK(std::isinf(lambda_function(Matrix::Zero(2, 2))));
    CHECK(wasserstein1({1, 2, 3}, {3, 2, 1}) == 0.0);
    CHECK(wasserstein1({0, 0}, {1, 3}) == doctest::Approx(2.0));
    CHECK_THROWS_AS(wasserstein1({1}, {1, 2}), Error);
}

TEST_CASE("stationarity distance vanishes for identical initializations") {
    McOptions opts;
    opts.dt = 0.01;
    const ModelParams p = scalar(1.0, 1.0, 1.0, 1, 0.3);
    const StationarityCurve same =
        stationarity_diagnostic(p, SymMat::identity(1), SymMat::identity(1), {1.0, 2.0}, 2000, 3, opts);
    for (std::size_t k = 0; k < same.times.size(); ++k) CHECK(same.distance[k] <= 4 * same.std_error[k] + 0.02);
    const StationarityCurve apart =
        stationarity_diagnostic(p, SymMat::identity(1, 0.1), SymMat::identity(1, 5.0), {0.5, 1.0, 2.0, 4.0}, 1000, 3, opts);
    CHECK(apart.distance.front() > apart.distance.back());
    CHECK(apart.diverged == 0);
    CHECK_THROWS_AS(stationarity_diagnostic(p.with_eps(1.5), SymMat::identity(1), SymMat::identity(1, 2.0), {1.0}, 100, 3, opts),
                    Error);
}

TEST_CASE("decay rate fit respects the upsilon window") {
    StationarityCurve c;
    for (double t : {0.1, 0.3, 0.6, 1.0, 2.0, 4.0}) {
        c.times.push_back(t);
        // Early transient decays faster; from t = 0.5 on the rate is exactly 0.7.
        const double d = t < 0.5 ? std::exp(-3.0 * t + 1.1) : std::exp(-0.7 * t);
        c.distance.push_back(d);
        c.std_error.push_back(0.01 * d);
    }
    const auto [rate, se] = fit_decay_rate(c, 0.5);
    CHECK(rate == doctest::Approx(0.7).epsilon(1e-12));
    CHECK(se > 0.0);
    CHECK(fit_decay_rate(c, 0.0).first > 0.75);
    CHECK(fit_decay_rate(c, 3.0).first == 0.0);
}

TEST_CASE("Richardson check on an unbiased estimator") {
    const auto run = [](double dt) {
        std::vector<double> x(4000);
        Rng rng(static_cast<std::uint64_t>(1.0 / dt));
        for (double& v : x) v = 1.0 + rng.normal();
        return batch_mean(x);
    };
    const RichardsonCheck ok = richardson_check(run, 0.01);
    CHECK(ok.gap_stderr > 0.0);
    CHECK(ok.passed == (std::abs(ok.gap) <= 2 * ok.gap_stderr));
    const auto biased = [](double dt) {
        std::vector<double> x(4000);
        Rng rng(static_cast<std::uint64_t>(1.0 / dt));
        for (double& v : x) v = 100 * dt + 0.01 * rng.normal();
        return batch_mean(x);
    };
    CHECK_FALSE(richardson_check(biased, 0.01).passed);
}

TEST_CASE("mean trace is reproducible across thread counts") {
    McOptions a, b;
    a.dt = b.dt = 0.01;
    a.threads = 1;
    b.threads = 3;
    const MeanEstimate x = mean_trace(iso2(1, 0.3), SymMat::identity(2), 1.0, 300, 11, a);
    const MeanEstimate y = mean_trace(iso2(1, 0.3), SymMat::identity(2), 1.0, 300, 11, b);
    CHECK(x.mean == y.mean);
    CHECK(x.std_error == y.std_error);
}
