#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "riccdiff/enkf.hpp"
#include "riccdiff/error.hpp"
#include "riccdiff/mc.hpp"
#include "support/oracles.hpp"

#include <unsupported/Eigen/MatrixFunctions>

using namespace riccdiff;

namespace {

FilterModel scalar_model(double a, double b, double r1, double r2) {
    return FilterModel(Matrix::Constant(1, 1, a), Matrix::Constant(1, 1, b), SymMat::identity(1, r1), SymMat::identity(1, r2));
}

FilterModel planar_model() {
    Matrix a(2, 2);
    a << -0.5, 1.0, 0.0, 0.3;
    Matrix b(1, 2);
    b << 1.0, 0.5;
    return FilterModel(a, b, SymMat::identity(2, 0.8), SymMat::identity(1, 0.5));
}

struct StepMoments {
    Matrix mean, var;
    long n = 0;
};

// Mean and variance of (P̂_dt − P̂_0)/dt over independent single steps from the same ensemble.
StepMoments one_step_moments(const Ensemble& start, const FilterModel& model, double dt, long reps, std::uint64_t seed) {
    const Matrix p0 = sample_stats(start).cov.dense();
    const int r = start.dim();
    Matrix sum = Matrix::Zero(r, r), sum2 = Matrix::Zero(r, r);
    const Vector dy = Vector::Zero(model.obs_dim());
    for (long k = 0; k < reps; ++k) {
        Ensemble e = start;
        Rng rng(seed, static_cast<std::uint64_t>(k), StreamTag::Ensemble);
        enkf_step(e, dy, model, dt, rng);
        const Matrix rate = (sample_stats(e).cov.dense() - p0) / dt;
        sum += rate;
        sum2 += rate.cwiseProduct(rate);
    }
    StepMoments out;
    out.n = reps;
    out.mean = sum / reps;
    out.var = sum2 / reps - out.mean.cwiseProduct(out.mean);
    return out;
}

}  // namespace

TEST_CASE("filter model validates and derives S") {
    const FilterModel m = planar_model();
    CHECK(m.S()(0, 0) == doctest::Approx(2.0));
    CHECK(m.S()(0, 1) == doctest::Approx(1.0));
    CHECK(m.S()(1, 1) == doctest::Approx(0.5));
    CHECK_THROWS_AS(scalar_model(0, 1, 1, 0), Error);
    CHECK_THROWS_AS(scalar_model(0, 1, -1, 1), Error);
    CHECK_THROWS_AS(FilterModel(Matrix::Zero(2, 2), Matrix::Zero(1, 3), SymMat::identity(2), SymMat::identity(1)), Error);
    CHECK_NOTHROW(scalar_model(0, 1, 0, 1));
}

TEST_CASE("sample statistics") {
    Matrix same = Matrix::Constant(2, 4, 1.5);
    const SampleStats s0 = sample_stats(Ensemble(same, EnkfType::Midpoint, 0.0));
    CHECK(s0.cov.frobenius_norm() == 0.0);
    CHECK(s0.mean(0) == 1.5);
    Vector x(2);
    x << 1.0, -2.0;
    Matrix pair(2, 2);
    pair << x, -x;
    const SampleStats s1 = sample_stats(Ensemble(pair, EnkfType::Midpoint, 0.0));
    CHECK((s1.cov.dense() - 2.0 * x * x.transpose()).norm() <= 1e-14);
    Rng rng(3);
    const SymMat p0 = SymMat::symmetric_part(oracle::random_spd(3, rng));
    const Ensemble big = Ensemble::sample(Vector::Ones(3), p0, 200000, EnkfType::Midpoint, 0.0, rng);
    const SampleStats s2 = sample_stats(big);
    CHECK((s2.cov.dense() - p0.dense()).norm() <= 0.05 * p0.frobenius_norm());
    CHECK((s2.mean - Vector::Ones(3)).norm() <= 0.02);
}

TEST_CASE("moment-matched ensembles reproduce the prior exactly") {
    Rng rng(5);
    for (int trial = 0; trial < 20; ++trial) {
        const int r = 1 + trial % 4;
        const SymMat p0 = SymMat::symmetric_part(oracle::random_spd(r, rng));
        const Vector m0 = oracle::gaussian(r, 1, rng);
        const Ensemble e = Ensemble::moment_matched(m0, p0, r + trial, EnkfType::Midpoint, 0.0, rng);
        const SampleStats s = sample_stats(e);
        CHECK((s.cov.dense() - p0.dense()).norm() <= 1e-10 * (1 + p0.frobenius_norm()));
        CHECK((s.mean - m0).norm() <= 1e-12 * (1 + m0.norm()));
    }
    CHECK_THROWS_AS(Ensemble::moment_matched(Vector::Zero(3), SymMat::identity(3), 2, EnkfType::Midpoint, 0.0, rng), Error);
}

TEST_CASE("noise-free signal follows the matrix exponential") {
    const FilterModel m(planar_model().A(), planar_model().B(), SymMat(2), SymMat::identity(1));
    Vector x0(2);
    x0 << 1.0, -1.0;
    const TruthPath path = simulate_truth(m, x0, 2.0, 0.01, 1);
    const Vector expected = (m.A() * 2.0).exp() * x0;
    CHECK((path.X.back() - expected).norm() <= 1e-8);
    CHECK(path.dY.size() == 200);
    CHECK(path.X.size() == 201);
}

TEST_CASE("signal transition has the exact Gaussian law") {
    for (double a : {0.0, -1.0}) {
        const FilterModel m = scalar_model(a, 1.0, 1.0, 1.0);
        const double T = a == 0.0 ? 1.0 : 5.0;
        const double expected = a == 0.0 ? T : (1.0 - std::exp(2 * a * T)) / (-2 * a);
        std::vector<double> sq;
        for (std::uint64_t i = 0; i < 4000; ++i) {
            const double x = simulate_truth(m, Vector::Zero(1), T, 0.05, 7, i).X.back()(0);
            sq.push_back(x * x);
        }
        const MeanEstimate v = batch_mean(sq);
        CHECK(std::abs(v.mean - expected) <= 4 * v.std_error);
    }
}

TEST_CASE("observation increments have the stated law") {
    const FilterModel m = scalar_model(0.0, 2.0, 0.0, 0.25);
    const TruthPath path = simulate_truth(m, Vector::Constant(1, 3.0), 10.0, 0.01, 9);
    std::vector<double> resid;
    for (const Vector& dy : path.dY) resid.push_back((dy(0) - 6.0 * 0.01) / std::sqrt(0.01 * 0.25));
    const MeanEstimate mu = batch_mean(resid);
    CHECK(std::abs(mu.mean) <= 4 * mu.std_error);
    double var = 0;
    for (double x : resid) var += x * x;
    CHECK(var / resid.size() == doctest::Approx(1.0).epsilon(0.05));
}

TEST_CASE("Kalman-Bucy covariance converges to the algebraic solution") {
    const FilterModel m = scalar_model(-1.0, 1.0, 1.0, 1.0);
    const TruthPath path = simulate_truth(m, Vector::Zero(1), 10.0, 1e-3, 1);
    const KalmanPath kb = kalman_bucy(m, path.dY, Vector::Zero(1), SymMat::identity(1, 3.0), 1e-3);
    CHECK(kb.P.back()(0, 0) == doctest::Approx(std::sqrt(2.0) - 1.0).epsilon(1e-8));
    CHECK(kb.mean.size() == path.X.size());
}

TEST_CASE("Kalman-Bucy error variance matches the filter covariance") {
    const FilterModel m = scalar_model(-0.5, 1.0, 1.0, 0.5);
    const double dt = 2e-3, T = 2.0;
    std::vector<double> sq;
    double p_t = 0.0;
    for (std::uint64_t i = 0; i < 3000; ++i) {
        Rng rng(11, i, StreamTag::Initial);
        const Vector x0 = Vector::Constant(1, std::sqrt(2.0) * rng.normal());
        const TruthPath path = simulate_truth(m, x0, T, dt, 11, i);
        const KalmanPath kb = kalman_bucy(m, path.dY, Vector::Zero(1), SymMat::identity(1, 2.0), dt);
        const double e = kb.mean.back()(0) - path.X.back()(0);
        sq.push_back(e * e);
        p_t = kb.P.back()(0, 0);
    }
    const MeanEstimate v = batch_mean(sq);
    CHECK(std::abs(v.mean - p_t) <= 4 * v.std_error + 0.01 * p_t);
}

TEST_CASE("without observations particles evolve independently") {
    const FilterModel m(planar_model().A(), Matrix::Zero(1, 2), SymMat(2), SymMat::identity(1));
    Matrix particles(2, 2);
    particles << 1.0, -0.5, 2.0, 0.3;
    for (EnkfType type : {EnkfType::PerturbedObservation, EnkfType::Midpoint}) {
        Ensemble e(particles, type, 0.4);
        Rng rng(13);
        for (int k = 0; k < 1000; ++k) enkf_step(e, Vector::Zero(1), m, 1e-3, rng);
        const Matrix expected = (Matrix::Identity(2, 2) + 1e-3 * m.A()).pow(1000) * particles;
        CHECK((e.particles() - expected).norm() <= 1e-10);
    }
}

TEST_CASE("midpoint ensemble covariance drifts like the shifted Riccati equation") {
    const FilterModel m = planar_model();
    const double varpi = 0.3;
    Rng rng(17);
    const SymMat p0 = SymMat::symmetric_part(oracle::random_spd(2, rng, 0.5, 2.0));
    const Ensemble start = Ensemble::moment_matched(Vector::Zero(2), p0, 100, EnkfType::Midpoint, varpi, rng);
    const StepMoments mo = one_step_moments(start, m, 1e-3, 20000, 19);
    const ModelParams eq = riccati_equivalent(m, EnkfType::Midpoint, varpi, 100);
    const Matrix theta = drift_theta(p0, eq).dense();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(std::abs(mo.mean(i, j) - theta(i, j)) <= 4 * std::sqrt(mo.var(i, j) / mo.n) + 0.02);
    // Quadratic variation ε²·P₁₁·Σ₁₁ with ε = 2/√N and Σ = R1.
    const double expected_var = eq.eps() * eq.eps() * p0(0, 0) * m.R1()(0, 0) / 1e-3;
    CHECK(mo.var(0, 0) == doctest::Approx(expected_var).epsilon(0.06));
}

TEST_CASE("perturbed-observation ensemble covariance drifts with the inflated noise") {
    const FilterModel m = planar_model();
    const double varpi = 0.3;
    Rng rng(23);
    const SymMat p0 = SymMat::symmetric_part(oracle::random_spd(2, rng, 0.5, 2.0));
    const Ensemble start = Ensemble::moment_matched(Vector::Zero(2), p0, 100, EnkfType::PerturbedObservation, varpi, rng);
    const StepMoments mo = one_step_moments(start, m, 1e-3, 20000, 29);
    const Matrix exact = type1_covariance_drift(p0, m, varpi).dense();
    for (int i = 0; i < 2; ++i)
        for (int j = 0; j < 2; ++j) CHECK(std::abs(mo.mean(i, j) - exact(i, j)) <= 4 * std::sqrt(mo.var(i, j) / mo.n) + 0.02);
    // The matched Riccati drift differs from the exact drift by ϖ(SP + PS) + ϖ²S.
    const ModelParams eq = riccati_equivalent(m, EnkfType::PerturbedObservation, varpi, 100);
    const Matrix s = m.S().dense(), p = p0.dense();
    const Matrix gap = exact - drift_theta(p0, eq).dense();
    CHECK((gap - varpi * (s * p + p * s) - varpi * varpi * s).norm() <= 1e-12);
    CHECK(eq.kappa() == 1);
    CHECK(eq.eps() == doctest::Approx(0.2));
}

TEST_CASE("inflation stabilizes the error drift") {
    const FilterModel m = FilterModel(Matrix::Identity(2, 2), Matrix::Identity(2, 2), SymMat::identity(2), SymMat::identity(2));
    CHECK(spectral_abscissa(error_drift_matrix(m, 0.0)) == doctest::Approx(1.0));
    CHECK(spectral_abscissa(error_drift_matrix(m, 1.5)) == doctest::Approx(-0.5));
    const ModelParams eq = riccati_equivalent(m, EnkfType::Midpoint, 1.5, 16);
    CHECK((eq.A() - 0.25 * Matrix::Identity(2, 2)).norm() <= 1e-15);
    CHECK(eq.kappa() == 0);
    CHECK(eq.eps() == 0.5);
}

TEST_CASE("filter runs are reproducible and honour the grid") {
    const FilterModel m = planar_model();
    FilterRunSpec spec;
    spec.N = 20;
    spec.m0 = Vector::Zero(2);
    spec.x0 = Vector::Ones(2);
    spec.p0 = SymMat::identity(2);
    spec.dt = 0.01;
    const auto a = run_filter(m, spec, {0.0, 0.5, 1.0}, 31, 2);
    const auto b = run_filter(m, spec, {0.0, 0.5, 1.0}, 31, 2);
    REQUIRE(a.size() == 3);
    CHECK((a[0].cov.dense() - Matrix::Identity(2, 2)).norm() <= 1e-12);
    CHECK(a[2].cov == b[2].cov);
    CHECK(a[2].mean == b[2].mean);
    CHECK_THROWS_AS(run_filter(m, spec, {0.505}, 31, 2), Error);
}

TEST_CASE("large ensembles track the Kalman-Bucy covariance") {
    const FilterModel m = planar_model();
    FilterRunSpec spec;
    spec.N = 1000;
    spec.m0 = Vector::Zero(2);
    spec.x0 = Vector::Zero(2);
    spec.p0 = SymMat::identity(2);
    spec.dt = 0.01;
    const auto run = run_filter(m, spec, {2.0}, 37, 0);
    const Matrix kb = det_flow_endpoint(spec.p0, 2.0, 1e-3, m.kalman_params()).first.dense();
    CHECK((run[0].cov.dense() - kb).norm() <= 5.0 / std::sqrt(1000.0));
}
