#include "riccdiff/experiments.hpp"

#include "riccdiff/dyson.hpp"
#include "riccdiff/error.hpp"
#include "riccdiff/parallel.hpp"

#include <chrono>
#include <cmath>
#include <cstdio>
#include <ostream>

namespace riccdiff {

namespace fs = std::filesystem;
using json = nlohmann::json;

namespace {

constexpr double kBiasSlope = 2.0, kBiasSlopeTol = 0.3;
constexpr double kFluctSlope = 1.0, kFluctSlopeTol = 0.2;
constexpr double kTimeSpreadMax = 0.3;
constexpr double kSeFactor = 3.0;
constexpr double kStableFraction = 0.95;
constexpr double kKsMax = 0.05;
constexpr double kW1Max = 0.05;
constexpr double kWiggleSe = 2.0;
constexpr double kMaxDivergedFraction = 0.01;

std::string fixed(double x, int decimals) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.*f", decimals, x);
    return buf;
}

std::string general(double x) {
    char buf[64];
    std::snprintf(buf, sizeof buf, "%.4g", x);
    return buf;
}

std::string params_str(std::initializer_list<std::pair<const char*, double>> kv) {
    std::string out;
    for (const auto& [k, v] : kv) out += (out.empty() ? "" : ";") + std::string(k) + "=" + format_number(v);
    return out;
}

class Builder {
public:
    explicit Builder(const ExperimentConfig& cfg) : cfg_(cfg) { result.experiment = experiment_name(cfg.experiment); }

    void row(const std::string& quantity, const std::string& params, double est, double se, long n_paths, double diverged = 0.0) {
        result.rows.push_back({result.experiment, quantity, params, est, se, n_paths, diverged, 0.0, ""});
    }
    void verdict(const std::string& criterion, const std::string& target, const std::string& measured, bool pass) {
        result.verdicts.push_back({criterion, target, measured, pass});
    }
    void divergence(double fraction) {
        verdict("diverged fraction", "<=" + general(kMaxDivergedFraction), general(fraction), fraction <= kMaxDivergedFraction);
    }

    ExperimentResult result;

private:
    const ExperimentConfig& cfg_;
};

McOptions mc_options(const ExperimentConfig& cfg, int threads) {
    McOptions o;
    o.dt = cfg.run.dt;
    o.batches = cfg.run.batches;
    o.threads = threads;
    return o;
}

std::vector<double> times_of(const ExperimentConfig& cfg) {
    return cfg.run.time_grid.empty() ? std::vector<double>{cfg.run.T} : cfg.run.time_grid;
}

std::vector<SnapshotPath> snapshot_paths(const ExperimentConfig& cfg, const ModelParams& params, const std::vector<double>& times,
                                         int threads, bool track) {
    SimOptions sim;
    sim.track_semigroup = track;
    return parallel_map(static_cast<std::size_t>(cfg.run.n_paths), threads, [&](std::size_t i) {
        return simulate_snapshots(cfg.model->Q0, times, cfg.run.dt, params, cfg.run.seed, i, sim);
    });
}

double diverged_fraction(const std::vector<SnapshotPath>& paths) {
    long d = 0;
    for (const auto& p : paths) d += p.diverged ? 1 : 0;
    return paths.empty() ? 0.0 : static_cast<double>(d) / paths.size();
}

void run_simulate(const ExperimentConfig& cfg, int threads, Builder& b) {
    const ModelParams params = cfg.params();
    const auto times = times_of(cfg);
    const auto paths = snapshot_paths(cfg, params, times, threads, false);
    const double div = diverged_fraction(paths);
    PlotSeries trace{"mean_trace", {}, {}, {}}, flow{"flow_trace", {}, {}, {}};
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::vector<double> tr, top, bottom;
        for (const auto& p : paths) {
            if (p.diverged) continue;
            const auto d = eigen_sym(p.at[k].Q);
            tr.push_back(p.at[k].Q.trace());
            top.push_back(d.eigenvalues(0));
            bottom.push_back(d.eigenvalues(d.eigenvalues.size() - 1));
        }
        const auto ps = params_str({{"t", times[k]}});
        const MeanEstimate mt = batch_mean(tr, cfg.run.batches);
        const MeanEstimate mx = batch_mean(top, cfg.run.batches);
        const MeanEstimate mn = batch_mean(bottom, cfg.run.batches);
        const double phi = det_flow_endpoint(cfg.model->Q0, times[k], std::min(cfg.run.dt, 1e-3), params).first.trace();
        b.row("mean_trace", ps, mt.mean, mt.std_error, cfg.run.n_paths, div);
        b.row("mean_lambda_max", ps, mx.mean, mx.std_error, cfg.run.n_paths, div);
        b.row("mean_lambda_min", ps, mn.mean, mn.std_error, cfg.run.n_paths, div);
        b.row("flow_trace", ps, phi, 0.0, 0, 0.0);
        trace.x.push_back(times[k]);
        trace.y.push_back(mt.mean);
        trace.std_error.push_back(mt.std_error);
        flow.x.push_back(times[k]);
        flow.y.push_back(phi);
        flow.std_error.push_back(0.0);
    }
    b.result.plots = {trace, flow};
    b.result.aggregates["diverged_fraction"] = div;
    b.divergence(div);
}

void run_moments(const ExperimentConfig& cfg, int threads, Builder& b) {
    const ModelParams params = cfg.params();
    const auto times = times_of(cfg);
    const std::vector<int> orders = cfg.run.n_orders.empty() ? std::vector<int>{1, 2} : cfg.run.n_orders;
    const auto paths = snapshot_paths(cfg, params, times, threads, false);
    const double div = diverged_fraction(paths);
    for (int n : orders) {
        PlotSeries series{"moment_n" + std::to_string(n), {}, {}, {}};
        for (std::size_t k = 0; k < times.size(); ++k) {
            std::vector<double> norms;
            for (const auto& p : paths) norms.push_back(p.diverged ? std::nan("") : matrix_norm(p.at[k].Q, cfg.run.norm));
            const MomentEstimate m = moment_from_norms(norms, n, cfg.run.batches);
            const auto ps = params_str({{"n", static_cast<double>(n)}, {"t", times[k]}});
            b.row("moment_norm", ps, m.value, m.std_error, m.n_paths, m.diverged_fraction);
            series.x.push_back(times[k]);
            series.y.push_back(m.value);
            series.std_error.push_back(m.std_error);
            if (cfg.run.norm == NormKind::Trace) {
                try {
                    const TraceBound tb = trace_moment_bound(params, n, times[k], cfg.model->Q0);
                    b.row("trace_moment_bound", ps, tb.value, 0.0, 0, 0.0);
                    b.verdict("moment n=" + std::to_string(n) + " t=" + general(times[k]) + " below bound",
                              "<=" + general(tb.value), general(m.value - kSeFactor * m.std_error),
                              m.value - kSeFactor * m.std_error <= tb.value);
                } catch (const Error& e) {
                    if (e.code() != ErrorCode::ThresholdExceeded) throw;
                    b.result.warnings.push_back("no trace bound for n=" + std::to_string(n) + ": " + e.what());
                }
            }
        }
        b.result.plots.push_back(series);
    }
    b.result.aggregates["diverged_fraction"] = div;
    b.divergence(div);
}

void scaling_rows(const ScalingFit& fit, const char* quantity, double t, Builder& b, PlotSeries& series) {
    for (const auto& p : fit.points) {
        const auto ps = params_str({{"eps", p.eps}, {"t", t}});
        b.row(quantity, ps, p.response, p.std_error, p.n_paths, p.diverged_fraction);
        if (p.dropped) b.row(std::string(quantity) + "_dropped", ps, 1.0, 0.0, p.n_paths, p.diverged_fraction);
        series.x.push_back(p.eps);
        series.y.push_back(p.response);
        series.std_error.push_back(p.std_error);
    }
    b.row("slope", params_str({{"t", t}}), fit.slope, fit.slope_stderr, fit.points.empty() ? 0 : fit.points[0].n_paths);
    b.row("intercept", params_str({{"t", t}}), fit.intercept, 0.0, 0);
}

bool slope_ok(const ScalingFit& fit, double target, double tol) {
    return fit.fitted_points >= 3 && std::abs(fit.slope - target) <= std::max(tol, 2.0 * fit.slope_stderr);
}

double max_diverged(const ScalingFit& fit) {
    double d = 0.0;
    for (const auto& p : fit.points) d = std::max(d, p.diverged_fraction);
    return d;
}

void run_bias(const ExperimentConfig& cfg, int threads, Builder& b) {
    const ModelParams base = cfg.params();
    const ScalingFit fit = bias_curve(base, cfg.model->Q0, cfg.run.T, cfg.run.eps_grid, cfg.run.n_paths, cfg.run.seed,
                                      mc_options(cfg, threads));
    PlotSeries series{"bias", {}, {}, {}}, loewner{"loewner_min", {}, {}, {}};
    scaling_rows(fit, "bias", cfg.run.T, b, series);
    bool loewner_ok = true;
    double worst = 0.0;
    for (const auto& p : fit.points) {
        b.row("loewner_min", params_str({{"eps", p.eps}, {"t", cfg.run.T}}), p.loewner_min, p.loewner_se, p.n_paths,
              p.diverged_fraction);
        loewner.x.push_back(p.eps);
        loewner.y.push_back(p.loewner_min);
        loewner.std_error.push_back(p.loewner_se);
        const double z = p.loewner_se > 0.0 ? p.loewner_min / p.loewner_se : (p.loewner_min >= 0.0 ? 0.0 : -INFINITY);
        worst = std::min(worst, z);
        loewner_ok = loewner_ok && p.loewner_min >= -kSeFactor * p.loewner_se;
    }
    b.result.plots = {series, loewner};
    b.result.aggregates["slope"] = fit.slope;
    b.result.aggregates["slope_stderr"] = fit.slope_stderr;
    b.result.aggregates["fitted_points"] = fit.fitted_points;
    b.verdict("bias slope", fixed(kBiasSlope, 0) + "±" + general(kBiasSlopeTol), fixed(fit.slope, 2),
              slope_ok(fit, kBiasSlope, kBiasSlopeTol));
    b.verdict("bias Loewner sign", "min z >= -3", fixed(worst, 2), loewner_ok);
    b.divergence(max_diverged(fit));
}

void run_fluctuation(const ExperimentConfig& cfg, int threads, Builder& b) {
    const ModelParams base = cfg.params();
    const int n = cfg.run.n_orders.empty() ? 2 : cfg.run.n_orders.front();
    const McOptions opts = mc_options(cfg, threads);
    const ScalingFit fit = fluctuation_curve(base, cfg.model->Q0, cfg.run.T, n, cfg.run.eps_grid, cfg.run.n_paths, cfg.run.seed, opts);
    PlotSeries series{"fluctuation", {}, {}, {}};
    scaling_rows(fit, "fluctuation", cfg.run.T, b, series);
    bool spectral_ok = true;
    for (const auto& p : fit.points) {
        b.row("spectral_sup", params_str({{"eps", p.eps}, {"t", cfg.run.T}}), p.spectral_sup, p.spectral_sup_se, p.n_paths,
              p.diverged_fraction);
        spectral_ok = spectral_ok && p.spectral_sup <= p.response + kSeFactor * std::hypot(p.std_error, p.spectral_sup_se);
    }
    b.result.plots = {series};
    b.result.aggregates["slope"] = fit.slope;
    b.result.aggregates["slope_stderr"] = fit.slope_stderr;
    b.verdict("fluctuation slope", fixed(kFluctSlope, 0) + "±" + general(kFluctSlopeTol), fixed(fit.slope, 2),
              slope_ok(fit, kFluctSlope, kFluctSlopeTol));
    b.verdict("spectral corollary", "sup_i gap <= response + 3 SE", spectral_ok ? "holds" : "violated", spectral_ok);
    if (cfg.run.time_grid.size() >= 2) {
        const double eps = base.eps() > 0.0 ? base.eps() : cfg.run.eps_grid[cfg.run.eps_grid.size() / 2];
        const auto profile = fluctuation_profile(base.with_eps(eps), cfg.model->Q0, cfg.run.time_grid, n, cfg.run.n_paths,
                                                 cfg.run.seed + 1000, opts);
        PlotSeries prof{"fluctuation_time", {}, {}, {}};
        for (std::size_t k = 0; k < profile.size(); ++k) {
            b.row("fluctuation_time", params_str({{"eps", eps}, {"t", cfg.run.time_grid[k]}}), profile[k].response,
                  profile[k].std_error, profile[k].n_paths, profile[k].diverged_fraction);
            prof.x.push_back(cfg.run.time_grid[k]);
            prof.y.push_back(profile[k].response);
            prof.std_error.push_back(profile[k].std_error);
        }
        b.result.plots.push_back(prof);
        const double spread = relative_spread(profile);
        b.result.aggregates["time_spread"] = spread;
        b.verdict("fluctuation time uniformity", "<=" + general(kTimeSpreadMax), fixed(spread, 3), spread <= kTimeSpreadMax);
    }
    b.divergence(max_diverged(fit));
}

void run_semigroup(const ExperimentConfig& cfg, int threads, Builder& b) {
    const ModelParams params = cfg.params();
    const LyapunovStats st = lyapunov_exponent(params, cfg.model->Q0, cfg.run.T, cfg.run.n_paths, cfg.run.seed, mc_options(cfg, threads));
    const auto ps = params_str({{"t", cfg.run.T}});
    const double div = static_cast<double>(st.diverged) / cfg.run.n_paths;
    b.row("fraction_below", ps, st.fraction_below, std::sqrt(st.fraction_below * (1 - st.fraction_below) / cfg.run.n_paths),
          cfg.run.n_paths, div);
    b.row("threshold", ps, st.threshold, 0.0, 0);
    b.row("exponent_mean", ps, st.mean, 0.0, cfg.run.n_paths, div);
    b.row("exponent_q05", ps, st.q05, 0.0, cfg.run.n_paths, div);
    b.row("exponent_median", ps, st.median, 0.0, cfg.run.n_paths, div);
    b.row("exponent_q95", ps, st.q95, 0.0, cfg.run.n_paths, div);
    b.row("trace_average", ps, st.trace_average_mean, 0.0, cfg.run.n_paths, div);
    PlotSeries hist{"exponents", {}, {}, {}};
    for (std::size_t i = 0; i < st.exponents.size(); ++i) {
        hist.x.push_back(static_cast<double>(i));
        hist.y.push_back(st.exponents[i]);
        hist.std_error.push_back(0.0);
    }
    b.result.plots = {hist};
    b.result.aggregates["fraction_below"] = st.fraction_below;
    b.result.aggregates["threshold"] = st.threshold;
    b.verdict("semigroup stability fraction", ">=" + general(kStableFraction), fixed(st.fraction_below, 3),
              st.fraction_below >= kStableFraction);
    b.divergence(div);
}

void run_det_decay(const ExperimentConfig& cfg, int threads, Builder& b) {
    const ModelParams params = cfg.params();
    const int n = cfg.run.n_orders.empty() ? 1 : cfg.run.n_orders.front();
    const DetDecay d = det_decay_rate(params, n, cfg.model->Q0, cfg.run.T, cfg.run.n_paths, cfg.run.seed, mc_options(cfg, threads));
    const auto ps = params_str({{"n", static_cast<double>(n)}, {"t", cfg.run.T}});
    const double div = static_cast<double>(d.diverged) / cfg.run.n_paths;
    b.row("decay_rate", ps, d.rate, d.std_error, cfg.run.n_paths, div);
    b.row("decay_bound", ps, d.bound, 0.0, 0);
    b.result.aggregates["rate"] = d.rate;
    b.result.aggregates["bound"] = d.bound;
    b.verdict("det decay rate", ">=" + general(d.bound) + " - 3 SE", general(d.rate), d.rate >= d.bound - kSeFactor * d.std_error);
    b.divergence(div);
}

void run_dyson(const ExperimentConfig& cfg, int threads, Builder& b) {
    const ModelParams params = cfg.params();
    const DysonComparison c = dyson_compare(params, cfg.model->Q0, cfg.run.T, cfg.run.dt, cfg.run.n_paths, cfg.run.seed, threads);
    const double div = static_cast<double>(c.diverged) / cfg.run.n_paths;
    PlotSeries ks{"ks_distance", {}, {}, {}};
    for (std::size_t i = 0; i < c.ks.size(); ++i) {
        b.row("ks_distance", params_str({{"i", static_cast<double>(i + 1)}, {"t", cfg.run.T}}), c.ks[i], 0.0, cfg.run.n_paths, div);
        ks.x.push_back(static_cast<double>(i + 1));
        ks.y.push_back(c.ks[i]);
        ks.std_error.push_back(0.0);
    }
    b.row("collision_events", params_str({{"t", cfg.run.T}}), static_cast<double>(c.collision_events), 0.0, cfg.run.n_paths);
    b.result.plots = {ks};
    b.result.aggregates["ks"] = c.ks;
    b.result.aggregates["max_ks"] = c.max_ks;
    b.result.aggregates["ks_pass"] = c.max_ks <= kKsMax;
    b.verdict("dyson KS distance", "<=" + general(kKsMax), fixed(c.max_ks, 4), c.max_ks <= kKsMax);
    b.divergence(div);
}

void run_enkf(const ExperimentConfig& cfg, int threads, Builder& b) {
    const FilterModel model = cfg.filter_model();
    const FilterSpec& f = *cfg.filter;
    const auto times = times_of(cfg);
    FilterRunSpec spec;
    spec.N = f.N;
    spec.type = f.type;
    spec.varpi = f.varpi;
    spec.m0 = f.m0;
    spec.x0 = f.x0;
    spec.p0 = f.P0;
    spec.dt = cfg.run.dt;
    spec.moment_matched = f.N >= model.dim();
    if (f.type == EnkfType::PerturbedObservation && f.varpi > 0.0)
        b.result.warnings.push_back("type 1 with inflation: the A - varpi*S substitution omits the varpi^2*S and "
                                    "varpi*(SP+PS) terms of the exact covariance drift");
    const std::size_t runs = static_cast<std::size_t>(cfg.run.n_paths);
    const auto filters = parallel_map(runs, threads, [&](std::size_t i) { return run_filter(model, spec, times, cfg.run.seed, i); });
    const ModelParams eq = riccati_equivalent(model, f.type, f.varpi, f.N);
    SimOptions sim;
    sim.track_semigroup = false;
    const auto ricc = parallel_map(runs, threads, [&](std::size_t i) {
        return simulate_snapshots(f.P0, times, cfg.run.dt, eq, cfg.run.seed, i, sim);
    });
    const double div = diverged_fraction(ricc);
    const DetFlowPath kalman = integrate_det_flow(f.P0, times.back(), std::min(cfg.run.dt, 1e-3), model.kalman_params());
    PlotSeries m1{"trace_mean_enkf", {}, {}, {}}, m1r{"trace_mean_riccati", {}, {}, {}};
    bool all_ok = true;
    double worst_z = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        std::vector<double> e1, e2, r1, r2, err;
        for (std::size_t i = 0; i < runs; ++i) {
            const double tr = filters[i][k].cov.trace();
            e1.push_back(tr);
            e2.push_back(tr * tr);
            const Vector e = filters[i][k].mean - filters[i][k].truth;
            err.push_back(e.squaredNorm());
            if (ricc[i].diverged) continue;
            const double q = ricc[i].at[k].Q.trace();
            r1.push_back(q);
            r2.push_back(q * q);
        }
        const auto ps = params_str({{"N", static_cast<double>(f.N)}, {"t", times[k]}});
        const MeanEstimate a1 = batch_mean(e1, cfg.run.batches), a2 = batch_mean(e2, cfg.run.batches);
        const MeanEstimate b1 = batch_mean(r1, cfg.run.batches), b2 = batch_mean(r2, cfg.run.batches);
        const MeanEstimate ee = batch_mean(err, cfg.run.batches);
        b.row("enkf_trace_m1", ps, a1.mean, a1.std_error, cfg.run.n_paths);
        b.row("enkf_trace_m2", ps, a2.mean, a2.std_error, cfg.run.n_paths);
        b.row("riccati_trace_m1", ps, b1.mean, b1.std_error, cfg.run.n_paths, div);
        b.row("riccati_trace_m2", ps, b2.mean, b2.std_error, cfg.run.n_paths, div);
        b.row("error_sq_norm", ps, ee.mean, ee.std_error, cfg.run.n_paths);
        const std::size_t kal = static_cast<std::size_t>(std::lround(times[k] / (kalman.grid.size() > 1 ? kalman.grid[1] : 1.0)));
        if (kal < kalman.P.size()) b.row("kalman_trace", ps, kalman.P[kal].trace(), 0.0, 0);
        const double z1 = std::abs(a1.mean - b1.mean) / std::hypot(a1.std_error, b1.std_error);
        const double z2 = std::abs(a2.mean - b2.mean) / std::hypot(a2.std_error, b2.std_error);
        worst_z = std::max({worst_z, z1, z2});
        all_ok = all_ok && z1 <= kSeFactor && z2 <= kSeFactor;
        m1.x.push_back(times[k]);
        m1.y.push_back(a1.mean);
        m1.std_error.push_back(a1.std_error);
        m1r.x.push_back(times[k]);
        m1r.y.push_back(b1.mean);
        m1r.std_error.push_back(b1.std_error);
    }
    b.result.plots = {m1, m1r};
    b.result.aggregates["max_z"] = worst_z;
    b.result.aggregates["eps"] = eq.eps();
    b.verdict("enkf riccati moments", "max z <= 3", fixed(worst_z, 2), all_ok);
    b.divergence(div);
}

void run_stationarity(const ExperimentConfig& cfg, int threads, Builder& b) {
    const ModelParams params = cfg.params();
    std::vector<double> times = cfg.run.time_grid;
    if (times.empty())
        for (int k = 1; k <= static_cast<int>(std::floor(cfg.run.T + 1e-9)); ++k) times.push_back(k);
    if (times.empty()) times.push_back(cfg.run.T);
    const StationarityCurve c = stationarity_diagnostic(params, cfg.model->Q0, cfg.model->Q0_b, times, cfg.run.n_paths,
                                                        cfg.run.seed, mc_options(cfg, threads));
    const double div = static_cast<double>(c.diverged) / (2.0 * cfg.run.n_paths);
    PlotSeries w{"w1_distance", {}, {}, {}};
    for (std::size_t k = 0; k < times.size(); ++k) {
        b.row("w1_distance", params_str({{"t", times[k]}}), c.distance[k], c.std_error[k], cfg.run.n_paths, div);
        w.x.push_back(times[k]);
        w.y.push_back(c.distance[k]);
        w.std_error.push_back(c.std_error[k]);
    }
    for (double upsilon : {0.25, kDefaultUpsilon, 1.0}) {
        const auto [rate, se] = fit_decay_rate(c, upsilon);
        b.row("decay_rate", params_str({{"upsilon", upsilon}}), rate, se, cfg.run.n_paths, div);
    }
    b.result.plots = {w};
    b.result.aggregates["final_distance"] = c.distance.back();
    b.result.aggregates["max_rise_se"] = c.max_rise_se;
    b.verdict("stationarity W1 at T", "<=" + general(kW1Max), general(c.distance.back()), c.distance.back() <= kW1Max);
    b.verdict("stationarity monotone after t=1", "rise <= 2 SE", fixed(c.max_rise_se, 2), c.max_rise_se <= kWiggleSe);
    b.divergence(div);
}

int exit_for(const Error& e) {
    switch (e.code()) {
        case ErrorCode::InvalidArgument:
        case ErrorCode::NotPositiveSemidefinite:
            return kExitUsage;
        default:
            return kExitNumerical;
    }
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& cfg, int threads) {
    Builder b(cfg);
    b.result.warnings = cfg.warnings;
    switch (cfg.experiment) {
        case Experiment::Simulate: run_simulate(cfg, threads, b); break;
        case Experiment::Moments: run_moments(cfg, threads, b); break;
        case Experiment::Bias: run_bias(cfg, threads, b); break;
        case Experiment::Fluctuation: run_fluctuation(cfg, threads, b); break;
        case Experiment::Semigroup: run_semigroup(cfg, threads, b); break;
        case Experiment::DetDecay: run_det_decay(cfg, threads, b); break;
        case Experiment::DysonCompare: run_dyson(cfg, threads, b); break;
        case Experiment::Enkf: run_enkf(cfg, threads, b); break;
        case Experiment::Stationarity: run_stationarity(cfg, threads, b); break;
    }
    return std::move(b.result);
}

int run_and_write(const ExperimentConfig& cfg, const fs::path& dir, int threads, std::ostream& log) {
    std::error_code ec;
    fs::create_directories(dir, ec);
    if (ec) {
        log << "error: cannot create " << dir.string() << ": " << ec.message() << "\n";
        return kExitUsage;
    }
    Manifest manifest(dir / "MANIFEST");
    manifest.complete("config");
    for (const auto& w : cfg.warnings) log << "warning: " << w << "\n";
    const auto start = std::chrono::steady_clock::now();
    ExperimentResult result;
    try {
        result = run_experiment(cfg, threads);
    } catch (const Error& e) {
        manifest.fail(experiment_name(cfg.experiment), e.what());
        log << "error [" << error_code_name(e.code()) << "]: " << e.what() << "\n";
        return exit_for(e);
    }
    manifest.complete(experiment_name(cfg.experiment));
    const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    const std::string fp = build_fingerprint();
    for (auto& r : result.rows) {
        r.wall_time_s = wall;
        r.fingerprint = fp;
    }
    if (cfg.output.csv) {
        write_results_csv(dir / "results.csv", result.rows);
        manifest.complete("results.csv");
        write_plotdata(dir / "plotdata", result.plots);
        manifest.complete("plotdata");
    }
    if (cfg.output.json) {
        write_summary_json(dir / "summary.json", summary_json(result, cfg.run.seed));
        manifest.complete("summary.json");
    }
    for (const auto& v : result.verdicts)
        log << v.criterion << " " << v.measured << " target " << v.target << " " << (v.pass ? "PASS" : "FAIL") << "\n";
    return result.all_pass() ? kExitPass : kExitCriterionFailure;
}

}  // namespace riccdiff
