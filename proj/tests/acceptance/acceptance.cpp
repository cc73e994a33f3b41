#include "riccdiff/config.hpp"
#include "riccdiff/dyson.hpp"
#include "riccdiff/enkf.hpp"
#include "riccdiff/error.hpp"
#include "riccdiff/experiments.hpp"
#include "riccdiff/mc.hpp"
#include "riccdiff/parallel.hpp"
#include "riccdiff/riccati.hpp"
#include "support/oracles.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <functional>
#include <set>
#include <string>
#include <vector>

using namespace riccdiff;

namespace {

// Tolerances.
constexpr double kC1MaxError = 1e-8;
constexpr double kC2Residual = 1e-10;
constexpr double kC2Agreement = 1e-8;
constexpr double kSe = 3.0;
constexpr double kBiasSlope = 2.0, kBiasTol = 0.3;
constexpr double kFluctSlope = 1.0, kFluctTol = 0.2;
constexpr double kTimeSpread = 0.3;
constexpr double kLiouvilleRel = 1e-6;
constexpr double kDetExact = 1e-8;
constexpr double kKs = 0.05;
constexpr double kDriftSlope = 1.0, kDriftTol = 0.15;
constexpr double kKalmanFactor = 5.0;
constexpr double kW1 = 0.05;
constexpr double kWiggle = 2.0;
constexpr double kStable = 0.95;
constexpr double kInequalitySlack = 1e-10;
constexpr int kInstances = 200;

struct Outcome {
    std::string measured;
    std::string target;
    bool pass = false;
};

std::string fmt(const char* f, double x) {
    char buf[96];
    std::snprintf(buf, sizeof buf, f, x);
    return buf;
}

Matrix diag2(double a, double b) {
    Matrix m = Matrix::Zero(2, 2);
    m(0, 0) = a;
    m(1, 1) = b;
    return m;
}

SymMat sym(const Matrix& m) { return SymMat::symmetric_part(m); }

ModelParams iso(int r, double a, int kappa, double eps) {
    return ModelParams(a * Matrix::Identity(r, r), SymMat::identity(r), SymMat::identity(r), kappa, 0.0, eps);
}

std::string richardson_text(const RichardsonCheck& rc) {
    return "richardson gap " + fmt("%.2e", rc.gap) + " (SE " + fmt("%.1e", rc.gap_stderr) + ")";
}

Outcome c1_scalar_oracle() {
    const ModelParams p = iso(1, 0.0, 0, 0.0);
    const DetFlowPath path = integrate_det_flow(SymMat(1), 5.0, 1e-3, p);
    double worst = 0.0;
    for (std::size_t k = 0; k < path.grid.size(); ++k)
        worst = std::max(worst, std::abs(path.P[k](0, 0) - std::tanh(path.grid[k])));
    return {"max error " + fmt("%.2e", worst), "<= 1e-8", worst <= kC1MaxError};
}

Outcome c2_fixed_point() {
    Rng rng(2024);
    double worst_res = 0.0, worst_agree = 0.0, worst_absc = -1e300;
    bool ok = true;
    for (int k = 0; k < 10; ++k) {
        const int r = 1 + k % 6;
        const ModelParams p(oracle::gaussian(r, r, rng), sym(oracle::random_psd_rank(r, std::max(1, r - k % 2), rng)),
                            sym(oracle::random_spd(r, rng, 0.2, 2.0)), 0, 0.0, 0.0);
        if (!p.detectable() || !p.stabilizable()) {
            --k;
            continue;
        }
        const FixedPointReport rep = solve_fixed_point_report(p);
        const Matrix pinf = rep.newton.dense();
        const double norm = oracle::spectral(pinf);
        const double res = drift_theta(rep.newton, p).frobenius_norm() / (1.0 + norm * norm);
        const double absc = spectral_abscissa(p.A() - pinf * p.S_dense());
        worst_res = std::max(worst_res, res);
        worst_agree = std::max(worst_agree, rep.agreement);
        worst_absc = std::max(worst_absc, absc);
        ok = ok && res <= kC2Residual && absc < 0.0 && rep.agreement <= kC2Agreement;
    }
    return {"residual " + fmt("%.1e", worst_res) + ", abscissa " + fmt("%.3f", worst_absc) + ", agreement " +
                fmt("%.1e", worst_agree),
            "residual <= 1e-10, abscissa < 0, agreement <= 1e-8", ok};
}

Outcome c3_under_bias() {
    const ModelParams p = iso(2, 0.0, 1, 0.3);
    const SymMat q0 = SymMat::identity(2, 0.5);
    McOptions opts;
    opts.dt = 5e-3;
    double worst = 1e300;
    bool ok = true;
    std::uint64_t seed = 300;
    for (double t : {0.5, 1.0, 2.0, 5.0}) {
        const ScalingPoint pt = bias_point(p, q0, t, 10000, seed++, opts);
        const double z = pt.loewner_min / pt.loewner_se;
        worst = std::min(worst, z);
        ok = ok && pt.loewner_min >= -kSe * pt.loewner_se && pt.diverged_fraction == 0.0;
    }
    const RichardsonCheck rc =
        richardson_check([&](double dt) { McOptions o = opts; o.dt = dt; return mean_trace(p, q0, 1.0, 10000, 310, o); }, opts.dt);
    ok = ok && rc.passed;
    return {"min lambda_min/SE " + fmt("%.2f", worst) + "; " + richardson_text(rc), ">= -3 at t in {0.5,1,2,5}; richardson |gap| <= 2 SE", ok};
}

Outcome c4_bias_scaling() {
    McOptions opts;
    opts.dt = 0.01;
    const ScalingFit fit = bias_curve(iso(2, 0.0, 1, 0.0), SymMat::identity(2), 1.0, {0.05, 0.1, 0.2, 0.4}, 100000, 400, opts);
    double div = 0.0;
    for (const auto& p : fit.points) div = std::max(div, p.diverged_fraction);
    const bool ok = fit.fitted_points >= 3 && std::abs(fit.slope - kBiasSlope) <= std::max(kBiasTol, 2 * fit.slope_stderr) && div == 0.0;
    return {"slope " + fmt("%.3f", fit.slope) + " ± " + fmt("%.3f", fit.slope_stderr) + " (" +
                std::to_string(fit.fitted_points) + " points)",
            "2 ± max(0.3, 2 SE)", ok};
}

Outcome c5_fluctuation() {
    McOptions opts;
    opts.dt = 0.01;
    std::string measured;
    bool ok = true;
    for (int kappa : {0, 1}) {
        const ModelParams base = iso(2, 0.0, kappa, 0.0);
        const ScalingFit fit =
            fluctuation_curve(base, SymMat::identity(2), 1.0, 2, {0.05, 0.1, 0.2, 0.4}, 10000, 500 + 10 * kappa, opts);
        const auto prof = fluctuation_profile(base.with_eps(0.2), SymMat::identity(2), {1.0, 2.0, 5.0, 10.0}, 2, 10000,
                                              520 + kappa, opts);
        const double spread = relative_spread(prof);
        ok = ok && fit.fitted_points >= 3 && std::abs(fit.slope - kFluctSlope) <= std::max(kFluctTol, 2 * fit.slope_stderr) &&
             spread <= kTimeSpread;
        measured += (kappa ? "; " : "") + std::string("kappa=") + std::to_string(kappa) + " slope " + fmt("%.3f", fit.slope) +
                    " spread " + fmt("%.3f", spread);
    }
    return {measured, "slope 1 ± 0.2, time spread <= 0.3", ok};
}

Outcome c6_liouville() {
    const ModelParams p = iso(2, 0.0, 1, 0.3);
    double worst = 0.0;
    for (std::uint64_t i = 0; i < 100; ++i) {
        const SnapshotPath path = simulate_snapshots(SymMat::identity(2), {2.0}, 2.5e-4, p, 600, i);
        if (path.diverged) return {"path diverged", "<= 1e-6", false};
        const Snapshot& s = path.at[0];
        worst = std::max(worst, std::abs(s.log_det_E - s.logdet_integral) / std::max(1.0, std::abs(s.logdet_integral)));
    }
    return {"max relative gap " + fmt("%.2e", worst), "<= 1e-6 on 100 paths", worst <= kLiouvilleRel};
}

Outcome c7_det_decay() {
    McOptions opts;
    opts.dt = 2e-3;
    std::string measured;
    bool ok = true;
    std::uint64_t seed = 700;
    for (const auto& [r, n, eps] : {std::tuple{1, 2, 0.2}, std::tuple{2, 2, 0.1}}) {
        const ModelParams p = iso(r, 0.0, 1, eps);
        const SymMat pinf = solve_fixed_point(p);
        const DetDecay d = det_decay_rate(p, n, pinf, 5.0, 10000, seed++, opts);
        ok = ok && d.rate >= d.bound - kSe * d.std_error && d.diverged == 0;
        measured += (measured.empty() ? "" : "; ") + std::string("r=") + std::to_string(r) + " rate " + fmt("%.4f", d.rate) +
                    " bound " + fmt("%.4f", d.bound);
    }
    const ModelParams exact(Matrix::Identity(2, 2) * 0.3, SymMat::identity(2), SymMat::identity(2), 1, 0.0, 0.0);
    const SymMat pinf = solve_fixed_point(exact);
    const double expected = -(exact.A() - pinf.dense() * exact.S_dense()).trace();
    const DetDecay d0 = det_decay_rate(exact, 2, pinf, 5.0, 100, seed, opts);
    const double err = std::abs(d0.rate - expected);
    ok = ok && err <= kDetExact;
    measured += "; eps=0 error " + fmt("%.1e", err);
    const ModelParams p1 = iso(1, 0.0, 1, 0.2);
    const RichardsonCheck rc = richardson_check(
        [&](double dt) {
            const auto logdets = parallel_map(2000, 0, [&](std::size_t i) {
                return simulate_snapshots(SymMat::identity(1), {1.0}, dt, p1, 710, i).at[0].log_det_E;
            });
            return batch_mean(logdets);
        },
        opts.dt);
    ok = ok && rc.passed;
    measured += "; " + richardson_text(rc);
    return {measured, "rate >= bound - 3 SE; eps=0 exact to 1e-8; richardson |gap| <= 2 SE", ok};
}

Outcome c8_dyson() {
    const ModelParams p = iso(2, 1.0, 1, 0.5);
    const DysonComparison c = dyson_compare(p, SymMat::diagonal((Vector(2) << 1.5, 0.5).finished()), 1.0, 5e-3, 10000, 800);
    return {"max KS " + fmt("%.4f", c.max_ks) + " (" + std::to_string(c.collision_events) + " refined steps)", "<= 0.05",
            c.max_ks <= kKs && c.diverged == 0};
}

Outcome c9_dyson_drift() {
    Matrix a(2, 2);
    a << -0.5, 0.8, 0.0, -1.0;
    Matrix s(2, 2);
    s << 1.0, 0.3, 0.3, 0.5;
    const ModelParams p(a, SymMat::diagonal((Vector(2) << 1.0, 0.5).finished()), sym(s), 1, 0.0, 0.5);
    const std::vector<SymMat> starts{SymMat::diagonal((Vector(2) << 4.0, 0.3).finished()), SymMat::identity(2, 0.2),
                                     sym((Matrix(2, 2) << 2.0, 1.0, 1.0, 3.0).finished())};
    DriftRegressionData data;
    for (std::uint64_t i = 0; i < 400; ++i)
        accumulate_eigen_drift(simulate_path(starts[i % starts.size()], 2.0, 1e-3, p, 900, i), p, data);
    const DriftRegression fit = data.fit();
    return {"slope " + fmt("%.4f", fit.slope) + " ± " + fmt("%.4f", fit.slope_se), "1 ± 0.15",
            std::abs(fit.slope - kDriftSlope) <= kDriftTol};
}

FilterModel c10_model() {
    Matrix a(2, 2);
    a << -1.0, 0.5, 0.0, 0.2;
    return FilterModel(a, Matrix::Identity(2, 2), SymMat::identity(2), SymMat::identity(2));
}

Outcome c10_enkf() {
    const FilterModel model = c10_model();
    const double dt = 5e-3;
    const std::vector<double> times{1.0, 3.0};
    FilterRunSpec spec;
    spec.N = 100;
    spec.type = EnkfType::Midpoint;
    spec.m0 = Vector::Zero(2);
    spec.x0 = Vector::Zero(2);
    spec.p0 = SymMat::identity(2);
    spec.dt = dt;
    const long runs = 4000;
    const auto filters = parallel_map(static_cast<std::size_t>(runs), 0, [&](std::size_t i) {
        return run_filter(model, spec, times, 1000, i);
    });
    const ModelParams eq = riccati_equivalent(model, EnkfType::Midpoint, 0.0, spec.N);
    SimOptions sim;
    sim.track_semigroup = false;
    const auto ricc = parallel_map(static_cast<std::size_t>(runs), 0, [&](std::size_t i) {
        return simulate_snapshots(spec.p0, times, dt, eq, 1001, i, sim);
    });
    double worst = 0.0;
    bool ok = true;
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::vector<double> e1, e2, r1, r2;
        for (long i = 0; i < runs; ++i) {
            const double x = filters[i][k].cov.trace();
            e1.push_back(x);
            e2.push_back(x * x);
            if (ricc[i].diverged) {
                ok = false;
                continue;
            }
            const double y = ricc[i].at[k].Q.trace();
            r1.push_back(y);
            r2.push_back(y * y);
        }
        for (const auto& [x, y] : {std::pair{e1, r1}, std::pair{e2, r2}}) {
            const MeanEstimate mx = batch_mean(x), my = batch_mean(y);
            const double z = std::abs(mx.mean - my.mean) / std::hypot(mx.std_error, my.std_error);
            worst = std::max(worst, z);
            ok = ok && z <= kSe;
        }
    }
    // Kalman consistency at N = 2000.
    FilterRunSpec big = spec;
    big.N = 2000;
    const double T = 3.0;
    const Matrix kalman = det_flow_endpoint(spec.p0, T, 1e-3, model.kalman_params()).first.dense();
    double gap = 0.0;
    for (std::uint64_t seed = 0; seed < 20; ++seed) gap += (run_filter(model, big, {T}, 1100 + seed, 0)[0].cov.dense() - kalman).norm();
    gap /= 20.0;
    const double limit = kKalmanFactor / std::sqrt(2000.0);
    ok = ok && gap <= limit;
    return {"max moment z " + fmt("%.2f", worst) + "; mean Kalman gap " + fmt("%.4f", gap),
            "z <= 3; gap <= " + fmt("%.4f", limit), ok};
}

Outcome c11_stationarity() {
    const ModelParams p = iso(1, 1.0, 1, 0.3);
    McOptions opts;
    opts.dt = 5e-3;
    const StationarityCurve c = stationarity_diagnostic(p, SymMat::identity(1, 0.1), SymMat::identity(1, 5.0),
                                                        {1.0, 2.0, 3.0, 5.0, 7.5, 10.0, 15.0}, 10000, 1200, opts);
    const RichardsonCheck rc = richardson_check(
        [&](double dt) { McOptions o = opts; o.dt = dt; return mean_trace(p, SymMat::identity(1, 5.0), 2.0, 4000, 1210, o); },
        opts.dt);
    const bool ok = c.distance.back() <= kW1 && c.max_rise_se <= kWiggle && c.diverged == 0 && rc.passed;
    return {"W1(T=15) " + fmt("%.4f", c.distance.back()) + ", largest rise " + fmt("%.2f", c.max_rise_se) + " SE; " +
                richardson_text(rc),
            "W1 <= 0.05, rise <= 2 SE; richardson |gap| <= 2 SE", ok};
}

Outcome c12_semigroup() {
    const ModelParams p(diag2(0.5, -1.0), SymMat::identity(2), SymMat::identity(2), 0, 0.0, 0.05);
    McOptions opts;
    opts.dt = 0.01;
    const LyapunovStats st = lyapunov_exponent(p, SymMat::identity(2), 20.0, 1000, 1300, opts);
    return {"fraction " + fmt("%.3f", st.fraction_below) + " (median " + fmt("%.3f", st.median) + ", threshold " +
                fmt("%.3f", st.threshold) + ")",
            ">= 0.95", st.fraction_below >= kStable};
}

Outcome c13_inequalities() {
    Rng rng(1400);
    int failures = 0, checks = 0;
    double worst = 0.0;
    auto check = [&](double margin) {
        ++checks;
        worst = std::min(worst, margin);
        if (margin < -kInequalitySlack) ++failures;
    };
    for (int k = 0; k < kInstances; ++k) {
        const int r = 1 + k % 6;
        // Tr(P⁻¹R + PS) ≥ 2·Tr((S^{1/2}RS^{1/2})^{1/2}) ≥ 2√Tr(RS).
        const Matrix pp = oracle::random_spd(r, rng);
        const Matrix rr = oracle::random_psd_rank(r, 1 + k % r, rng), ss = oracle::random_psd_rank(r, 1 + (k / 2) % r, rng);
        const double lhs = (pp.inverse() * rr + pp * ss).trace();
        const Matrix root_s = oracle::sqrt_spd(ss);
        const double mid = 2.0 * oracle::sqrt_spd(root_s * rr * root_s).trace();
        check((lhs - mid) / (1.0 + lhs));
        check((mid - 2.0 * std::sqrt(std::max(0.0, (rr * ss).trace()))) / (1.0 + lhs));
        // Hoffman–Wielandt.
        const SymMat a = sym(oracle::random_symmetric(r, rng)), b = sym(oracle::random_symmetric(r, rng));
        check(hw_gap(a, b) / (1.0 + std::pow((a - b).frobenius_norm(), 2)));
        // Tensor embedding spectrum between the extreme products.
        const SymMat q1 = sym(oracle::random_spd(r, rng)), q2 = sym(oracle::random_spd(r, rng));
        const Vector l1 = oracle::sorted_eigenvalues(q1.dense()), l2 = oracle::sorted_eigenvalues(q2.dense());
        const Vector e = oracle::sorted_eigenvalues(sym_tensor_embed(q1, q2));
        check((e(e.size() - 1) - l1(r - 1) * l2(r - 1)) / (1.0 + e(0)));
        check((l1(0) * l2(0) - e(0)) / (1.0 + e(0)));
        // Σ ≤ U + PVP.
        const ModelParams mp(oracle::gaussian(r, r, rng), sym(oracle::random_spd(r, rng)), sym(oracle::random_spd(r, rng)),
                             k % 2, 0.8 * rng.uniform(), 0.0);
        const Matrix pd = oracle::random_spd(r, rng);
        Matrix sigma;
        sigma_map(pd, mp, sigma);
        const Matrix bound = mp.U().dense() + pd * mp.V().dense() * pd;
        check(min_eigenvalue(bound - sigma) / (1.0 + bound.norm()));
        // Inverse drift below its bound.
        const double e0 = threshold_eps0(mp);
        const ModelParams me = mp.with_eps((std::isfinite(e0) ? e0 : 1.0) * rng.uniform());
        const SymMat y = sym(oracle::random_spd(r, rng, 0.05, 4.0));
        const Matrix exact = inverse_drift_exact(y, me).dense(), ub = inverse_drift_bound(y, me).dense();
        check(min_eigenvalue(ub - exact) / (1.0 + ub.norm()));
    }
    // Thresholds against a grid scan of R^ε and S^ε.
    int flips = 0, flip_fail = 0;
    const double step = 1e-3;
    for (int k = 0; k < 40; ++k) {
        const int r = 1 + k % 4;
        const ModelParams mp(oracle::gaussian(r, r, rng), sym(oracle::random_spd(r, rng, 0.2, 2.0)),
                             sym(oracle::random_spd(r, rng, 0.2, 2.0)), 1, k % 2 ? 0.0 : 0.5 * rng.uniform(), 0.0);
        const double e0 = threshold_eps0(mp);
        double flip = -1.0;
        for (double x = 0.0; x < 5.0; x += step) {
            const Thresholds t = thresholds(mp.with_eps(x), 1);
            if (min_eigenvalue(t.R_eps.dense()) < -1e-12 || min_eigenvalue(t.S_eps.dense()) < -1e-12) {
                flip = x;
                break;
            }
        }
        ++flips;
        if (!(std::abs(flip - e0) <= step + 1e-9)) ++flip_fail;
    }
    return {std::to_string(5 * kInstances) + " instances, " + std::to_string(checks) + " checks, " + std::to_string(failures) + " violations (worst margin " +
                fmt("%.1e", worst) + "); " + std::to_string(flips - flip_fail) + "/" + std::to_string(flips) +
                " threshold scans agree",
            "no violation beyond 1e-10; all scans within one grid step", failures == 0 && flip_fail == 0};
}

// Small versions of every experiment; determinism does not depend on the path count.
std::vector<std::string> c14_configs() {
    const std::string m2 = R"("A": [[0, 0], [0, 0]], "R": [[1, 0], [0, 1]], "S": [[1, 0], [0, 1]])";
    return {
        R"({"schema_version": 1, "experiment": "simulate", "model": {)" + m2 + R"(, "eps": 0.3},
            "run": {"T": 1, "dt": 0.01, "n_paths": 300, "seed": 5, "time_grid": [0.5, 1]}})",
        R"({"schema_version": 1, "experiment": "moments", "model": {)" + m2 + R"(, "eps": 0.3},
            "run": {"T": 1, "dt": 0.01, "n_paths": 300, "seed": 5, "n_orders": [1, 2]}})",
        R"({"schema_version": 1, "experiment": "bias", "model": {)" + m2 + R"(},
            "run": {"T": 1, "dt": 0.01, "n_paths": 300, "seed": 5, "eps_grid": [0.05, 0.1, 0.2, 0.4]}})",
        R"({"schema_version": 1, "experiment": "fluctuation", "model": {)" + m2 + R"(, "kappa": 0},
            "run": {"T": 1, "dt": 0.01, "n_paths": 300, "seed": 5, "eps_grid": [0.05, 0.1, 0.2, 0.4], "time_grid": [1, 2]}})",
        R"({"schema_version": 1, "experiment": "semigroup", "model": {"A": [[0.5, 0], [0, -1]], "R": [[1, 0], [0, 1]],
            "S": [[1, 0], [0, 1]], "kappa": 0, "eps": 0.05}, "run": {"T": 2, "dt": 0.01, "n_paths": 200, "seed": 5}})",
        R"({"schema_version": 1, "experiment": "det-decay", "model": {"A": 0, "R": 1, "S": 1, "eps": 0.2},
            "run": {"T": 1, "dt": 0.01, "n_paths": 300, "seed": 5, "n_orders": [2]}})",
        R"({"schema_version": 1, "experiment": "dyson-compare", "model": {"A": [[1, 0], [0, 1]], "R": [[1, 0], [0, 1]],
            "S": [[1, 0], [0, 1]], "eps": 0.5, "Q0": [[1.5, 0], [0, 0.5]]}, "run": {"T": 1, "dt": 0.01, "n_paths": 300, "seed": 5}})",
        R"({"schema_version": 1, "experiment": "enkf", "model": {"A": [[-1, 0.5], [0, 0.2]], "B": [[1, 0], [0, 1]],
            "R1": [[1, 0], [0, 1]], "R2": [[1, 0], [0, 1]], "N": 20}, "run": {"T": 1, "dt": 0.01, "n_paths": 50, "seed": 5,
            "time_grid": [0.5, 1]}})",
        R"({"schema_version": 1, "experiment": "stationarity", "model": {"A": 1, "R": 1, "S": 1, "eps": 0.3, "Q0": 0.1,
            "Q0_b": 5}, "run": {"T": 3, "dt": 0.01, "n_paths": 300, "seed": 5}})",
    };
}

std::string numeric_fingerprint(const ExperimentResult& r) {
    std::string out = summary_json(r, 0).dump();
    for (const auto& row : r.rows)
        out += row.quantity + "," + row.parameters + "," + format_number(row.estimate) + "," + format_number(row.std_error) + "," +
               std::to_string(row.n_paths) + "," + format_number(row.diverged_fraction) + "\n";
    for (const auto& p : r.plots)
        for (std::size_t i = 0; i < p.x.size(); ++i)
            out += p.name + "," + format_number(p.x[i]) + "," + format_number(p.y[i]) + "," + format_number(p.std_error[i]) + "\n";
    return out;
}

Outcome c14_determinism() {
    int same = 0, total = 0;
    std::string differing;
    for (const auto& text : c14_configs()) {
        const ParseResult parsed = parse_config(text);
        if (!parsed.ok()) return {"config rejected: " + parsed.errors.front(), "byte-identical", false};
        const ExperimentConfig& cfg = *parsed.config;
        const std::string one = numeric_fingerprint(run_experiment(cfg, 1));
        const std::string four = numeric_fingerprint(run_experiment(cfg, 4));
        const std::string again = numeric_fingerprint(run_experiment(cfg, 4));
        ++total;
        if (one == four && four == again)
            ++same;
        else
            differing += " " + experiment_name(cfg.experiment);
    }
    return {std::to_string(same) + "/" + std::to_string(total) + " experiments identical" + differing,
            "identical output for 1 and 4 threads", same == total};
}

struct Criterion {
    int id;
    const char* name;
    std::function<Outcome()> run;
};

}  // namespace

int main(int argc, char** argv) {
    const std::vector<Criterion> all{
        {1, "scalar oracle", c1_scalar_oracle},
        {2, "fixed point", c2_fixed_point},
        {3, "under-bias", c3_under_bias},
        {4, "bias scaling", c4_bias_scaling},
        {5, "fluctuation scaling", c5_fluctuation},
        {6, "Liouville identity", c6_liouville},
        {7, "determinant decay", c7_det_decay},
        {8, "Dyson equivalence", c8_dyson},
        {9, "Dyson drift regression", c9_dyson_drift},
        {10, "EnKF correspondence", c10_enkf},
        {11, "stationarity", c11_stationarity},
        {12, "semigroup stability", c12_semigroup},
        {13, "inequality suites", c13_inequalities},
        {14, "determinism", c14_determinism},
    };
    std::set<int> only;
    for (int i = 1; i < argc; ++i) only.insert(std::atoi(argv[i]));
    int failed = 0;
    for (const auto& c : all) {
        if (!only.empty() && !only.count(c.id)) continue;
        const auto start = std::chrono::steady_clock::now();
        Outcome o;
        try {
            o = c.run();
        } catch (const std::exception& e) {
            o = {std::string("error: ") + e.what(), "completes", false};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
        std::printf("C%02d %-4s %-24s measured: %s | target: %s | %.1fs\n", c.id, o.pass ? "PASS" : "FAIL", c.name,
                    o.measured.c_str(), o.target.c_str(), secs);
        std::fflush(stdout);
        if (!o.pass) ++failed;
    }
    return failed == 0 ? 0 : 1;
}
