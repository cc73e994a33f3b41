#pragma once

#include "riccdiff/matcore.hpp"
#include "riccdiff/riccati.hpp"

#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

namespace riccdiff {

inline constexpr int kDefaultBatches = 20;

/// Mean with a batch-means standard error; samples are taken in index order.
struct MeanEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    long n = 0;
    int batches = 0;
};

MeanEstimate batch_mean(const std::vector<double>& samples, int batches = kDefaultBatches);
/// Batch means of the samples, batch k holding indices [k·n/B, (k+1)·n/B).
std::vector<double> batch_means(const std::vector<double>& samples, int batches);

enum class NormKind { Spectral, Frobenius, Trace };
double matrix_norm(const Matrix& m, NormKind kind);

/// |||X|||ₙ = E[‖X‖ⁿ]^{1/n}.
struct MomentEstimate {
    int order_n = 1;
    double value = 0.0;
    double std_error = 0.0;
    long n_paths = 0;
    int batch_count = 0;
    long diverged = 0;
    double diverged_fraction = 0.0;
    /// False when more than 1% of paths diverged.
    bool reliable = true;
    /// True when every sample was identical, so std_error = 0 is exact.
    bool constant = false;
};

/// Returns X for one path index, or an empty matrix when the path diverged.
using PathSampler = std::function<Matrix(std::uint64_t path_index)>;

MomentEstimate estimate_moment_norm(const PathSampler& sampler, NormKind norm, int n, long n_paths,
                                    int batches = kDefaultBatches, int threads = 0);
/// Moment norm from per-path ‖X‖ values; NaN marks a diverged path.
MomentEstimate moment_from_norms(const std::vector<double>& norms, int n, int batches = kDefaultBatches);

struct McOptions {
    double dt = 1e-3;
    int batches = kDefaultBatches;
    int threads = 0;
    /// Reference φ_t: Euler with the noise switched off (same dt) or the RK4 flow.
    bool euler_reference = true;
    SimOptions sim;
};

struct ScalingPoint {
    double eps = 0.0;
    double response = 0.0;
    double std_error = 0.0;
    /// λ_min(φ_t − mean) and its batch-means standard error (bias curves only).
    double loewner_min = 0.0;
    double loewner_se = 0.0;
    /// sup_i |||λᵢ(φ^ε_t) − λᵢ(φ_t)|||ₙ (fluctuation curves only).
    double spectral_sup = 0.0;
    double spectral_sup_se = 0.0;
    long n_paths = 0;
    double diverged_fraction = 0.0;
    bool dropped = false;
};

struct ScalingFit {
    std::vector<double> eps_grid;
    std::vector<double> responses;
    std::vector<ScalingPoint> points;
    double slope = 0.0;
    double slope_stderr = 0.0;
    double intercept = 0.0;
    int fitted_points = 0;
};

/// Weighted least squares of log y on log x, weights from the relative errors; slope SE inflated by the reduced χ² when above 1.
ScalingFit fit_loglog(const std::vector<ScalingPoint>& points);

/// Response ‖φ_t(Q0) − mean φ^ε_t(Q0)‖₂ across the grid.
ScalingFit bias_curve(const ModelParams& base, const SymMat& q0, double t, const std::vector<double>& eps_grid, long n_paths,
                      std::uint64_t seed, const McOptions& options = {});
/// One bias point; the building block of bias_curve.
ScalingPoint bias_point(const ModelParams& params, const SymMat& q0, double t, long n_paths, std::uint64_t seed,
                        const McOptions& options = {});

/// Response |||φ^ε_t(Q0) − φ_t(Q0)|||ₙ in the Frobenius norm.
ScalingFit fluctuation_curve(const ModelParams& base, const SymMat& q0, double t, int n, const std::vector<double>& eps_grid,
                             long n_paths, std::uint64_t seed, const McOptions& options = {});
/// Fluctuation response at each of the sorted times from one set of paths.
std::vector<ScalingPoint> fluctuation_profile(const ModelParams& params, const SymMat& q0, const std::vector<double>& times,
                                              int n, long n_paths, std::uint64_t seed, const McOptions& options = {});
/// max/min − 1 of the responses.
double relative_spread(const std::vector<ScalingPoint>& points);
/// Response |||Y^ε_t − φ_t(Q0)⁻¹|||₁ for the inverse flow, spectral norm.
ScalingFit inverse_fluctuation_curve(const ModelParams& base, const SymMat& q0, double t, const std::vector<double>& eps_grid,
                                     long n_paths, std::uint64_t seed, const McOptions& options = {});

struct LyapunovStats {
    double t = 0.0;
    std::vector<double> exponents;
    std::vector<double> trace_averages;
    double q05 = 0.0, median = 0.0, q95 = 0.0;
    double mean = 0.0;
    double threshold = 0.0;
    double fraction_below = 0.0;
    double trace_average_mean = 0.0;
    long diverged = 0;
};

/// Summary of per-path exponents (1/t)·log‖E_{0,t}‖₂ against the threshold.
LyapunovStats lyapunov_from_samples(std::vector<double> exponents, std::vector<double> trace_averages, double t,
                                    double threshold, long diverged);
/// Simulates paths to time t and summarises their exponents; threshold μ(A − P∞S)/2.
LyapunovStats lyapunov_exponent(const ModelParams& params, const SymMat& q0, double t, long n_paths, std::uint64_t seed,
                                const McOptions& options = {});
double empirical_quantile(std::vector<double> values, double q);

struct DetDecay {
    double rate = 0.0;
    double std_error = 0.0;
    double bound = 0.0;
    double t = 0.0;
    int n = 1;
    long n_paths = 0;
    long diverged = 0;
};

/// −(1/(t·n))·log mean exp(n·L_i) with a delta-method batch error, evaluated in the log domain.
DetDecay det_decay_from_logdets(const std::vector<double>& logdets, int n, double t, int batches = kDefaultBatches);
/// Empirical rate and the bound √Tr(R^ε_n S^ε_n); precondition-violated when R^ε_n or S^ε_n is not SPD.
DetDecay det_decay_rate(const ModelParams& params, int n, const SymMat& q0, double t, long n_paths, std::uint64_t seed,
                        const McOptions& options = {});
/// 1 − rate/√(Tr(A)² + Tr(RS)).
double det_decay_h(double rate, const ModelParams& params);

/// Λ(P) = ‖P‖₂ + ‖P⁻¹‖₂, +∞ when P is singular.
double lambda_function(const Matrix& p);
/// 1-Wasserstein distance between two equal-size empirical laws on ℝ.
double wasserstein1(std::vector<double> a, std::vector<double> b);

struct StationarityCurve {
    std::vector<double> times;
    std::vector<double> distance;
    std::vector<double> std_error;
    double rate = 0.0;
    double rate_stderr = 0.0;
    long n_paths = 0;
    long diverged = 0;
    /// Largest rise of the curve after t ≥ 1 in units of the combined standard error.
    double max_rise_se = 0.0;
};

/// Start of the window in which the contraction is fitted.
inline constexpr double kDefaultUpsilon = 0.5;

/// Weighted log-linear fit of the distance over times t ≥ upsilon where it clears twice its error.
std::pair<double, double> fit_decay_rate(const StationarityCurve& curve, double upsilon);

/// Distance curve with its rate fitted from kDefaultUpsilon on.
StationarityCurve stationarity_diagnostic(const ModelParams& params, const SymMat& q0_a, const SymMat& q0_b,
                                          const std::vector<double>& times, long n_paths, std::uint64_t seed,
                                          const McOptions& options = {});

struct RichardsonCheck {
    MeanEstimate coarse, fine;
    double gap = 0.0;
    double gap_stderr = 0.0;
    bool passed = false;
};

/// Weak-error gap between runs at dt and dt/2; passes when |gap| ≤ 2·SE(gap).
RichardsonCheck richardson_check(const std::function<MeanEstimate(double dt)>& run, double dt);

/// E[Tr(Q_t)] at dt with per-path values; used for Richardson checks.
MeanEstimate mean_trace(const ModelParams& params, const SymMat& q0, double t, long n_paths, std::uint64_t seed,
                        const McOptions& options);

}  // namespace riccdiff
