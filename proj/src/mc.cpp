#include "riccdiff/mc.hpp"

#include "riccdiff/error.hpp"
#include "riccdiff/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>
#include <tuple>

namespace riccdiff {

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

double sample_sd(const std::vector<double>& x) {
    if (x.size() < 2) return 0.0;
    const double m = std::accumulate(x.begin(), x.end(), 0.0) / x.size();
    double ss = 0.0;
    for (double v : x) ss += (v - m) * (v - m);
    return std::sqrt(ss / (x.size() - 1));
}

void require_grid(const std::vector<double>& eps_grid) {
    require(eps_grid.size() >= 4, ErrorCode::InvalidArgument, "a scaling grid needs at least 4 points");
    for (std::size_t i = 0; i < eps_grid.size(); ++i) {
        require(eps_grid[i] >= 0.0 && std::isfinite(eps_grid[i]), ErrorCode::InvalidArgument, "eps grid values must be non-negative");
        if (i > 0) require(eps_grid[i] > eps_grid[i - 1], ErrorCode::InvalidArgument, "eps grid must be increasing");
    }
}

// Index ranges of B contiguous batches over n items.
std::vector<std::pair<std::size_t, std::size_t>> batch_ranges(std::size_t n, int batches) {
    const std::size_t b = std::max<std::size_t>(1, std::min<std::size_t>(static_cast<std::size_t>(std::max(batches, 1)), n));
    std::vector<std::pair<std::size_t, std::size_t>> out;
    for (std::size_t k = 0; k < b; ++k) out.emplace_back(k * n / b, (k + 1) * n / b);
    return out;
}

struct PathSet {
    std::vector<std::vector<Matrix>> q;  // q[path][time]; empty for diverged paths
    std::vector<SnapshotPath> meta;
    long diverged = 0;
};

PathSet run_paths(const ModelParams& params, const SymMat& q0, const std::vector<double>& times, long n_paths,
                  std::uint64_t seed, const McOptions& options, bool keep_meta = false) {
    require(n_paths >= 1, ErrorCode::InvalidArgument, "n_paths must be positive");
    auto results = parallel_map(static_cast<std::size_t>(n_paths), options.threads, [&](std::size_t i) {
        return simulate_snapshots(q0, times, options.dt, params, seed, i, options.sim);
    });
    PathSet out;
    out.q.resize(results.size());
    for (std::size_t i = 0; i < results.size(); ++i) {
        if (results[i].diverged) {
            ++out.diverged;
            continue;
        }
        for (auto& s : results[i].at) out.q[i].push_back(std::move(s.Q));
    }
    if (keep_meta) out.meta = std::move(results);
    return out;
}

std::vector<Matrix> reference_flow(const ModelParams& params, const SymMat& q0, const std::vector<double>& times,
                                   const McOptions& options) {
    std::vector<Matrix> out;
    if (options.euler_reference) {
        SimOptions sim = options.sim;
        sim.track_semigroup = false;
        const SnapshotPath det = simulate_snapshots(q0, times, options.dt, params.with_eps(0.0), 0, 0, sim);
        require(!det.diverged, ErrorCode::PathDiverged, "reference flow diverged");
        for (const auto& s : det.at) out.push_back(s.Q);
    } else {
        const double h = std::min(options.dt, 1e-3);
        for (double t : times) out.push_back(t > 0.0 ? det_flow_endpoint(q0, t, h, params).first.dense() : q0.dense());
    }
    return out;
}

double spectral_sym(const Matrix& m) {
    SymEigen eig;
    eig.compute(m);
    return std::max(std::abs(eig.max_value()), std::abs(eig.min_value()));
}

ScalingPoint bias_from_paths(const PathSet& set, std::size_t time_index, const Matrix& phi, int batches, long n_paths) {
    ScalingPoint pt;
    pt.n_paths = n_paths;
    pt.diverged_fraction = static_cast<double>(set.diverged) / n_paths;
    std::vector<const Matrix*> kept;
    for (const auto& q : set.q)
        if (!q.empty()) kept.push_back(&q[time_index]);
    require(kept.size() >= 2, ErrorCode::InsufficientData, "too few converged paths for a bias estimate");
    const auto ranges = batch_ranges(kept.size(), batches);
    const int r = static_cast<int>(phi.rows());
    std::vector<Matrix> sums;
    Matrix total = Matrix::Zero(r, r);
    for (const auto& [lo, hi] : ranges) {
        Matrix s = Matrix::Zero(r, r);
        for (std::size_t i = lo; i < hi; ++i) s += *kept[i];
        total += s;
        sums.push_back(std::move(s));
    }
    const double n = static_cast<double>(kept.size());
    const Matrix gap = phi - total / n;
    pt.response = spectral_sym(gap);
    pt.loewner_min = min_eigenvalue(gap);
    const std::size_t b = ranges.size();
    std::vector<double> jack(b), batch_min(b);
    for (std::size_t k = 0; k < b; ++k) {
        const double nk = static_cast<double>(ranges[k].second - ranges[k].first);
        jack[k] = spectral_sym(phi - (total - sums[k]) / (n - nk));
        batch_min[k] = min_eigenvalue(phi - sums[k] / nk);
    }
    if (b >= 2) {
        const double jm = std::accumulate(jack.begin(), jack.end(), 0.0) / b;
        double ss = 0.0;
        for (double v : jack) ss += (v - jm) * (v - jm);
        pt.std_error = std::sqrt((b - 1.0) / b * ss);
        pt.loewner_se = sample_sd(batch_min) / std::sqrt(static_cast<double>(b));
    }
    return pt;
}

ScalingPoint fluctuation_from_paths(const PathSet& set, std::size_t time_index, const Matrix& phi, int n, int batches,
                                    long n_paths) {
    const std::size_t paths = set.q.size();
    const int r = static_cast<int>(phi.rows());
    std::vector<double> frob(paths, kNaN);
    std::vector<std::vector<double>> eig_gap(r, std::vector<double>(paths, kNaN));
    const Vector lam_phi = eigen_sym(phi).eigenvalues;
    SymEigen eig;
    for (std::size_t i = 0; i < paths; ++i) {
        if (set.q[i].empty()) continue;
        const Matrix& q = set.q[i][time_index];
        frob[i] = (q - phi).norm();
        eig.compute(q);
        for (int j = 0; j < r; ++j) eig_gap[j][i] = std::abs(eig.values()(j) - lam_phi(j));
    }
    const MomentEstimate m = moment_from_norms(frob, n, batches);
    ScalingPoint pt;
    pt.response = m.value;
    pt.std_error = m.std_error;
    pt.n_paths = n_paths;
    pt.diverged_fraction = m.diverged_fraction;
    for (int j = 0; j < r; ++j) {
        const MomentEstimate e = moment_from_norms(eig_gap[j], n, batches);
        if (e.value > pt.spectral_sup) {
            pt.spectral_sup = e.value;
            pt.spectral_sup_se = e.std_error;
        }
    }
    return pt;
}

void mark_noise_dominated(ScalingPoint& pt) {
    if (pt.eps == 0.0 || !(pt.response > 2.0 * pt.std_error)) pt.dropped = true;
}

}  // namespace

std::vector<double> batch_means(const std::vector<double>& samples, int batches) {
    std::vector<double> out;
    for (const auto& [lo, hi] : batch_ranges(samples.size(), batches)) {
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += samples[i];
        out.push_back(hi > lo ? s / (hi - lo) : 0.0);
    }
    return out;
}

MeanEstimate batch_mean(const std::vector<double>& samples, int batches) {
    require(!samples.empty(), ErrorCode::InsufficientData, "no samples");
    MeanEstimate out;
    out.n = static_cast<long>(samples.size());
    out.mean = std::accumulate(samples.begin(), samples.end(), 0.0) / samples.size();
    const auto means = batch_means(samples, batches);
    out.batches = static_cast<int>(means.size());
    out.std_error = sample_sd(means) / std::sqrt(static_cast<double>(means.size()));
    return out;
}

double matrix_norm(const Matrix& m, NormKind kind) {
    switch (kind) {
        case NormKind::Spectral:
            return m.isApprox(m.transpose(), 1e-12) ? spectral_sym(m) : spectral_norm(m);
        case NormKind::Frobenius:
            return m.norm();
        case NormKind::Trace:
            return std::abs(m.trace());
    }
    return kNaN;
}

MomentEstimate moment_from_norms(const std::vector<double>& norms, int n, int batches) {
    require(n >= 1, ErrorCode::InvalidArgument, "moment order n must be at least 1");
    MomentEstimate out;
    out.order_n = n;
    out.n_paths = static_cast<long>(norms.size());
    std::vector<double> powered;
    powered.reserve(norms.size());
    for (double v : norms) {
        if (std::isnan(v)) {
            ++out.diverged;
            continue;
        }
        powered.push_back(std::pow(v, n));
    }
    out.diverged_fraction = norms.empty() ? 0.0 : static_cast<double>(out.diverged) / norms.size();
    out.reliable = out.diverged_fraction <= 0.01;
    require(!powered.empty(), ErrorCode::InsufficientData, "every path diverged");
    const MeanEstimate m = batch_mean(powered, batches);
    out.batch_count = m.batches;
    out.constant = std::all_of(powered.begin(), powered.end(), [&](double v) { return v == powered.front(); });
    out.value = std::pow(m.mean, 1.0 / n);
    out.std_error = m.mean > 0.0 ? m.std_error * out.value / (n * m.mean) : 0.0;
    if (out.constant) out.std_error = 0.0;
    return out;
}

MomentEstimate estimate_moment_norm(const PathSampler& sampler, NormKind norm, int n, long n_paths, int batches, int threads) {
    require(n_paths >= 100, ErrorCode::InvalidArgument, "moment estimates need at least 100 paths");
    const auto norms = parallel_map(static_cast<std::size_t>(n_paths), threads, [&](std::size_t i) {
        const Matrix x = sampler(i);
        return x.size() == 0 ? kNaN : matrix_norm(x, norm);
    });
    return moment_from_norms(norms, n, batches);
}

ScalingFit fit_loglog(const std::vector<ScalingPoint>& points) {
    ScalingFit fit;
    for (const auto& p : points) {
        fit.eps_grid.push_back(p.eps);
        fit.responses.push_back(p.response);
    }
    fit.points = points;
    std::vector<double> x, y, w;
    for (const auto& p : points) {
        if (p.dropped || p.eps <= 0.0 || p.response <= 0.0) continue;
        const double rel = p.std_error > 0.0 ? p.std_error / p.response : 1e-12;
        x.push_back(std::log(p.eps));
        y.push_back(std::log(p.response));
        w.push_back(1.0 / (rel * rel));
    }
    fit.fitted_points = static_cast<int>(x.size());
    if (x.size() < 2) {
        fit.slope = kNaN;
        fit.slope_stderr = kNaN;
        return fit;
    }
    double sw = 0, sx = 0, sy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sw += w[i];
        sx += w[i] * x[i];
        sy += w[i] * y[i];
    }
    const double mx = sx / sw, my = sy / sw;
    double sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += w[i] * (x[i] - mx) * (x[i] - mx);
        sxy += w[i] * (x[i] - mx) * (y[i] - my);
    }
    fit.slope = sxy / sxx;
    fit.intercept = my - fit.slope * mx;
    double chi2 = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        const double res = y[i] - fit.intercept - fit.slope * x[i];
        chi2 += w[i] * res * res;
    }
    const double dof = static_cast<double>(x.size()) - 2.0;
    const double scale = dof > 0.0 ? std::max(1.0, chi2 / dof) : 1.0;
    fit.slope_stderr = std::sqrt(scale / sxx);
    return fit;
}

ScalingPoint bias_point(const ModelParams& params, const SymMat& q0, double t, long n_paths, std::uint64_t seed,
                        const McOptions& options) {
    const std::vector<double> times{t};
    const PathSet set = run_paths(params, q0, times, n_paths, seed, options);
    const Matrix phi = reference_flow(params, q0, times, options)[0];
    ScalingPoint pt = bias_from_paths(set, 0, phi, options.batches, n_paths);
    pt.eps = params.eps();
    return pt;
}

ScalingFit bias_curve(const ModelParams& base, const SymMat& q0, double t, const std::vector<double>& eps_grid, long n_paths,
                      std::uint64_t seed, const McOptions& options) {
    require_grid(eps_grid);
    std::vector<ScalingPoint> points;
    for (std::size_t k = 0; k < eps_grid.size(); ++k) {
        ScalingPoint pt = bias_point(base.with_eps(eps_grid[k]), q0, t, n_paths, seed + k, options);
        mark_noise_dominated(pt);
        points.push_back(pt);
    }
    return fit_loglog(points);
}

std::vector<ScalingPoint> fluctuation_profile(const ModelParams& params, const SymMat& q0, const std::vector<double>& times,
                                              int n, long n_paths, std::uint64_t seed, const McOptions& options) {
    const PathSet set = run_paths(params, q0, times, n_paths, seed, options);
    const std::vector<Matrix> phi = reference_flow(params, q0, times, options);
    std::vector<ScalingPoint> out;
    for (std::size_t k = 0; k < times.size(); ++k) {
        ScalingPoint pt = fluctuation_from_paths(set, k, phi[k], n, options.batches, n_paths);
        pt.eps = params.eps();
        out.push_back(pt);
    }
    return out;
}

ScalingFit fluctuation_curve(const ModelParams& base, const SymMat& q0, double t, int n, const std::vector<double>& eps_grid,
                             long n_paths, std::uint64_t seed, const McOptions& options) {
    require_grid(eps_grid);
    std::vector<ScalingPoint> points;
    for (std::size_t k = 0; k < eps_grid.size(); ++k) {
        ScalingPoint pt = fluctuation_profile(base.with_eps(eps_grid[k]), q0, {t}, n, n_paths, seed + k, options)[0];
        mark_noise_dominated(pt);
        points.push_back(pt);
    }
    return fit_loglog(points);
}

double relative_spread(const std::vector<ScalingPoint>& points) {
    require(!points.empty(), ErrorCode::InsufficientData, "no points");
    double lo = points.front().response, hi = lo;
    for (const auto& p : points) {
        lo = std::min(lo, p.response);
        hi = std::max(hi, p.response);
    }
    return lo > 0.0 ? hi / lo - 1.0 : std::numeric_limits<double>::infinity();
}

ScalingFit inverse_fluctuation_curve(const ModelParams& base, const SymMat& q0, double t, const std::vector<double>& eps_grid,
                                     long n_paths, std::uint64_t seed, const McOptions& options) {
    require_grid(eps_grid);
    const Matrix phi_inv = inverse_spd(det_flow_endpoint(q0, t, std::min(options.dt, 1e-3), base).first).dense();
    std::vector<ScalingPoint> points;
    for (std::size_t k = 0; k < eps_grid.size(); ++k) {
        const ModelParams params = base.with_eps(eps_grid[k]);
        const auto norms = parallel_map(static_cast<std::size_t>(n_paths), options.threads, [&](std::size_t i) {
            bool diverged = false;
            const auto y = simulate_inverse_snapshots(q0, {t}, options.dt, params, seed + k, i, &diverged);
            if (diverged || y.empty() || y[0].size() == 0) return kNaN;
            return spectral_sym(y[0] - phi_inv);
        });
        const MomentEstimate m = moment_from_norms(norms, 1, options.batches);
        ScalingPoint pt;
        pt.eps = eps_grid[k];
        pt.response = m.value;
        pt.std_error = m.std_error;
        pt.n_paths = n_paths;
        pt.diverged_fraction = m.diverged_fraction;
        mark_noise_dominated(pt);
        points.push_back(pt);
    }
    return fit_loglog(points);
}

double empirical_quantile(std::vector<double> values, double q) {
    require(!values.empty(), ErrorCode::InsufficientData, "no values");
    std::sort(values.begin(), values.end());
    const double pos = q * (values.size() - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(pos));
    const std::size_t hi = std::min(lo + 1, values.size() - 1);
    return values[lo] + (pos - lo) * (values[hi] - values[lo]);
}

LyapunovStats lyapunov_from_samples(std::vector<double> exponents, std::vector<double> trace_averages, double t,
                                    double threshold, long diverged) {
    require(!exponents.empty(), ErrorCode::InsufficientData, "no exponents");
    LyapunovStats out;
    out.t = t;
    out.threshold = threshold;
    out.diverged = diverged;
    out.q05 = empirical_quantile(exponents, 0.05);
    out.median = empirical_quantile(exponents, 0.5);
    out.q95 = empirical_quantile(exponents, 0.95);
    out.mean = std::accumulate(exponents.begin(), exponents.end(), 0.0) / exponents.size();
    const long below = std::count_if(exponents.begin(), exponents.end(), [&](double e) { return e < threshold; });
    // Diverged paths count against the fraction.
    out.fraction_below = static_cast<double>(below) / (exponents.size() + diverged);
    if (!trace_averages.empty())
        out.trace_average_mean = std::accumulate(trace_averages.begin(), trace_averages.end(), 0.0) / trace_averages.size();
    out.exponents = std::move(exponents);
    out.trace_averages = std::move(trace_averages);
    return out;
}

LyapunovStats lyapunov_exponent(const ModelParams& params, const SymMat& q0, double t, long n_paths, std::uint64_t seed,
                                const McOptions& options) {
    require(t > 0.0, ErrorCode::InvalidArgument, "t must be positive");
    const SymMat p_inf = solve_fixed_point(params);
    const double threshold = 0.5 * log_norm(params.A() - p_inf.dense() * params.S_dense());
    McOptions opts = options;
    opts.sim.track_semigroup = true;
    const auto paths = parallel_map(static_cast<std::size_t>(n_paths), opts.threads, [&](std::size_t i) {
        return simulate_snapshots(q0, {t}, opts.dt, params, seed, i, opts.sim);
    });
    std::vector<double> exps, traces;
    long diverged = 0;
    for (const auto& p : paths) {
        if (p.diverged) {
            ++diverged;
            continue;
        }
        exps.push_back(p.at[0].log_norm_E / t);
        traces.push_back(p.at[0].logdet_integral / t);
    }
    return lyapunov_from_samples(std::move(exps), std::move(traces), t, threshold, diverged);
}

DetDecay det_decay_from_logdets(const std::vector<double>& logdets, int n, double t, int batches) {
    require(n >= 1 && t > 0.0, ErrorCode::InvalidArgument, "det decay needs n ≥ 1 and t > 0");
    require(!logdets.empty(), ErrorCode::InsufficientData, "no paths");
    double c = -std::numeric_limits<double>::infinity();
    for (double l : logdets) c = std::max(c, n * l);
    std::vector<double> w;
    w.reserve(logdets.size());
    for (double l : logdets) w.push_back(std::exp(n * l - c));
    const MeanEstimate m = batch_mean(w, batches);
    DetDecay out;
    out.n = n;
    out.t = t;
    out.n_paths = static_cast<long>(logdets.size());
    out.rate = -(c + std::log(m.mean)) / (t * n);
    out.std_error = m.std_error / (m.mean * t * n);
    return out;
}

DetDecay det_decay_rate(const ModelParams& params, int n, const SymMat& q0, double t, long n_paths, std::uint64_t seed,
                        const McOptions& options) {
    const Thresholds th = thresholds(params, n);
    require(min_eigenvalue(th.R_eps_n.dense()) > 0.0 && min_eigenvalue(th.S_eps_n.dense()) > 0.0,
            ErrorCode::PreconditionViolated, "R^eps_n and S^eps_n must be positive definite");
    McOptions opts = options;
    opts.sim.track_semigroup = true;
    const auto paths = parallel_map(static_cast<std::size_t>(n_paths), opts.threads, [&](std::size_t i) {
        return simulate_snapshots(q0, {t}, opts.dt, params, seed, i, opts.sim);
    });
    std::vector<double> logdets;
    long diverged = 0;
    for (const auto& p : paths) {
        if (p.diverged) {
            ++diverged;
            continue;
        }
        logdets.push_back(p.at[0].log_det_E);
    }
    DetDecay out = det_decay_from_logdets(logdets, n, t, opts.batches);
    out.diverged = diverged;
    out.bound = std::sqrt((th.R_eps_n.dense() * th.S_eps_n.dense()).trace());
    return out;
}

double det_decay_h(double rate, const ModelParams& params) {
    const double tr_a = params.A().trace();
    const double scale = std::sqrt(tr_a * tr_a + (params.R_dense() * params.S_dense()).trace());
    require(scale > 0.0, ErrorCode::InvalidArgument, "degenerate asymptotic rate");
    return 1.0 - rate / scale;
}

double lambda_function(const Matrix& p) {
    SymEigen eig;
    eig.compute(p);
    if (eig.min_value() <= 0.0) return std::numeric_limits<double>::infinity();
    return eig.max_value() + 1.0 / eig.min_value();
}

double wasserstein1(std::vector<double> a, std::vector<double> b) {
    require(a.size() == b.size() && !a.empty(), ErrorCode::InvalidArgument, "samples must be non-empty and of equal size");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += std::abs(a[i] - b[i]);
    return s / a.size();
}

StationarityCurve stationarity_diagnostic(const ModelParams& params, const SymMat& q0_a, const SymMat& q0_b,
                                          const std::vector<double>& times, long n_paths, std::uint64_t seed,
                                          const McOptions& options) {
    require(!times.empty(), ErrorCode::InvalidArgument, "stationarity needs at least one time");
    require(min_eigenvalue(q0_a.dense()) > 0.0 && min_eigenvalue(q0_b.dense()) > 0.0, ErrorCode::NotPositiveSemidefinite,
            "initial conditions must be positive definite");
    const double limit = std::min(threshold_eps_n_V(params, 1), threshold_eps_n_UV(params, 1));
    require(params.eps() <= limit, ErrorCode::PreconditionViolated,
            "eps exceeds min(eps_1(V), eps_1(U,V)) = " + std::to_string(limit));
    // The second initialisation draws from path indices disjoint from the first.
    const auto lam = [&](const SymMat& q0, std::uint64_t offset) {
        return parallel_map(static_cast<std::size_t>(n_paths), options.threads, [&](std::size_t i) {
            const SnapshotPath p = simulate_snapshots(q0, times, options.dt, params, seed, offset + i, options.sim);
            std::vector<double> v(times.size(), std::numeric_limits<double>::infinity());
            if (!p.diverged)
                for (std::size_t k = 0; k < times.size(); ++k) v[k] = lambda_function(p.at[k].Q);
            return v;
        });
    };
    const auto la = lam(q0_a, 0);
    const auto lb = lam(q0_b, static_cast<std::uint64_t>(n_paths));
    StationarityCurve out;
    out.times = times;
    out.n_paths = n_paths;
    for (std::size_t i = 0; i < la.size(); ++i) {
        if (!std::isfinite(la[i].back())) ++out.diverged;
        if (!std::isfinite(lb[i].back())) ++out.diverged;
    }
    const auto ranges = batch_ranges(static_cast<std::size_t>(n_paths), options.batches);
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::vector<double> a(n_paths), b(n_paths);
        for (long i = 0; i < n_paths; ++i) {
            a[i] = la[i][k];
            b[i] = lb[i][k];
        }
        out.distance.push_back(wasserstein1(a, b));
        std::vector<double> per_batch;
        for (const auto& [lo, hi] : ranges)
            per_batch.push_back(wasserstein1(std::vector<double>(a.begin() + lo, a.begin() + hi),
                                             std::vector<double>(b.begin() + lo, b.begin() + hi)));
        // Batch estimates use n/B samples each; their spread over √B approximates the full-sample error.
        out.std_error.push_back(sample_sd(per_batch) / std::sqrt(static_cast<double>(per_batch.size())));
    }
    for (std::size_t k = 0; k + 1 < times.size(); ++k) {
        for (std::size_t j = k + 1; j < times.size(); ++j) {
            if (times[k] < 1.0) continue;
            const double se = std::hypot(out.std_error[k], out.std_error[j]);
            if (se > 0.0) out.max_rise_se = std::max(out.max_rise_se, (out.distance[j] - out.distance[k]) / se);
        }
    }
    std::tie(out.rate, out.rate_stderr) = fit_decay_rate(out, kDefaultUpsilon);
    return out;
}

std::pair<double, double> fit_decay_rate(const StationarityCurve& curve, double upsilon) {
    double sw = 0, sx = 0, sy = 0, sxx = 0, sxy = 0;
    int used = 0;
    for (std::size_t k = 0; k < curve.times.size(); ++k) {
        const double t = curve.times[k], d = curve.distance[k], se = curve.std_error[k];
        if (t < upsilon || !(d > 2.0 * se) || se <= 0.0) continue;
        const double w = (d / se) * (d / se);
        sw += w;
        sx += w * t;
        sy += w * std::log(d);
        sxx += w * t * t;
        sxy += w * t * std::log(d);
        ++used;
    }
    if (used < 2) return {0.0, 0.0};
    const double det = sw * sxx - sx * sx;
    return {-(sw * sxy - sx * sy) / det, std::sqrt(sw / det)};
}

RichardsonCheck richardson_check(const std::function<MeanEstimate(double dt)>& run, double dt) {
    require(dt > 0.0, ErrorCode::InvalidArgument, "dt must be positive");
    RichardsonCheck out;
    out.coarse = run(dt);
    out.fine = run(0.5 * dt);
    out.gap = out.coarse.mean - out.fine.mean;
    out.gap_stderr = std::hypot(out.coarse.std_error, out.fine.std_error);
    out.passed = std::abs(out.gap) <= 2.0 * out.gap_stderr;
    return out;
}

MeanEstimate mean_trace(const ModelParams& params, const SymMat& q0, double t, long n_paths, std::uint64_t seed,
                        const McOptions& options) {
    const PathSet set = run_paths(params, q0, {t}, n_paths, seed, options);
    std::vector<double> tr;
    for (const auto& q : set.q)
        if (!q.empty()) tr.push_back(q[0].trace());
    return batch_mean(tr, options.batches);
}

}  // namespace riccdiff
