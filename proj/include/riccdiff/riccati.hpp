#pragma once

#include "riccdiff/matcore.hpp"
#include "riccdiff/rng.hpp"

#include <cstdint>
#include <limits>
#include <vector>

namespace riccdiff {

inline constexpr double kUnbounded = std::numeric_limits<double>::infinity();
inline bool is_unbounded(double x) { return x == kUnbounded; }

/// One Riccati diffusion instance: drift (A, R, S), diffusion flavour (κ, ϖ) and noise level ε.
class ModelParams {
public:
    ModelParams(Matrix a, SymMat r, SymMat s, int kappa, double varpi, double eps);

    int dim() const { return static_cast<int>(a_.rows()); }
    const Matrix& A() const { return a_; }
    const SymMat& R() const { return r_; }
    const SymMat& S() const { return s_; }
    int kappa() const { return kappa_; }
    double varpi() const { return varpi_; }
    double eps() const { return eps_; }
    const SymMat& U() const { return u_; }
    const SymMat& V() const { return v_; }
    bool stabilizable() const { return stabilizable_; }
    bool detectable() const { return detectable_; }

    const Matrix& R_dense() const { return r_dense_; }
    const Matrix& S_dense() const { return s_dense_; }
    const Matrix& sqrt_R() const { return sqrt_r_; }

    ModelParams with_eps(double eps) const;
    ModelParams with_kappa(int kappa) const;

private:
    Matrix a_;
    SymMat r_, s_;
    int kappa_;
    double varpi_;
    double eps_;
    SymMat u_, v_;
    bool stabilizable_ = false;
    bool detectable_ = false;
    Matrix r_dense_, s_dense_, sqrt_r_;
};

/// rank [A − λI, B] = r for every eigenvalue λ of A with Re λ ≥ 0.
bool pbh_stabilizable(const Matrix& a, const Matrix& b);
/// rank [A − λI; C] = r for every eigenvalue λ of A with Re λ ≥ 0.
bool pbh_detectable(const Matrix& a, const Matrix& c);

SymMat drift_theta(const SymMat& p, const ModelParams& params);
void drift_theta(const Matrix& p, const ModelParams& params, Matrix& out);
SymMat sigma_map(const SymMat& p, const ModelParams& params);
void sigma_map(const Matrix& p, const ModelParams& params, Matrix& out);
std::pair<SymMat, SymMat> uv_bound(const ModelParams& params);

struct Thresholds {
    int n = 1;
    double eps0 = 0.0;
    double epsN_V = 0.0;
    double epsN_UV = 0.0;
    SymMat R_eps, S_eps, R_eps_n, S_eps_n;
    bool degenerate = false;
};

double threshold_eps0(const ModelParams& params);
double threshold_eps_n_V(const ModelParams& params, int n);
double threshold_eps_n_UV(const ModelParams& params, int n);
/// Thresholds for order n, with R^ε, S^ε, R^ε_n, S^ε_n evaluated at params.eps().
Thresholds thresholds(const ModelParams& params, int n);

/// X solving F·X + X·Fᵀ + C = 0, via the Kronecker linear system.
Matrix solve_lyapunov(const Matrix& f, const Matrix& c);

struct FixedPointReport {
    SymMat newton;
    SymMat schur;
    int newton_iterations = 0;
    double agreement = 0.0;
    double residual = 0.0;
};

SymMat newton_kleinman(const ModelParams& params, int* iterations = nullptr);
SymMat hamiltonian_schur(const ModelParams& params);
/// Newton–Kleinman with the Hamiltonian solution as fallback and cross-check.
SymMat solve_fixed_point(const ModelParams& params);
FixedPointReport solve_fixed_point_report(const ModelParams& params);

struct DetFlowPath {
    std::vector<double> grid;
    std::vector<SymMat> P;
    std::vector<Matrix> E;
};

/// Classical RK4 on the coupled (φ_t, E_t) system.
DetFlowPath integrate_det_flow(const SymMat& q0, double T, double dt, const ModelParams& params);
/// (φ_t(Q0), E_{0,t}) only.
std::pair<SymMat, Matrix> det_flow_endpoint(const SymMat& q0, double T, double dt, const ModelParams& params);

struct RiccatiPath {
    std::vector<double> grid;
    std::vector<SymMat> Q;
    std::vector<Matrix> E;
    std::vector<double> logdet_integral;
    std::uint64_t seed = 0;
    double dt = 0.0;
    long steps = 0;
    long floor_events = 0;
    int halvings = 0;
    bool diverged = false;
};

struct SimOptions {
    int record_every = 1;
    bool track_semigroup = true;
    double blowup_trace = 1e8;
    int max_halvings = 3;
    double max_floor_rate = 0.01;
};

/// Euler–Maruyama for the matrix diffusion with PSD flooring; allocation free after construction.
class EulerStepper {
public:
    EulerStepper(const ModelParams& params, double dt, bool track_semigroup);

    void reset(const Matrix& q0);
    /// Deterministic step when rng is null.
    void step(Rng* rng);

    const Matrix& Q() const { return q_; }
    /// E = e_unit · exp(log_scale); the split keeps long horizons finite.
    const Matrix& E_unit() const { return e_; }
    double E_log_scale() const { return e_log_scale_; }
    Matrix E() const;
    double logdet_integral() const { return logdet_; }
    double time() const { return t_; }
    long steps() const { return steps_; }
    long floor_events() const { return floors_; }
    bool diverged() const { return diverged_; }
    double dt() const { return dt_; }
    double blowup_trace = 1e8;

private:
    void refresh_sqrt_q();

    const ModelParams& params_;
    double dt_;
    double sqrt_dt_;
    bool track_;
    int r_;
    Matrix q_, e_, drift_, sigma_, sqrt_q_, sqrt_sigma_, noise_, tmp_, tmp2_, gen_, step_exp_;
    SymEigen eig_q_, eig_sigma_;
    double e_log_scale_ = 0.0;
    double logdet_ = 0.0;
    double t_ = 0.0;
    long steps_ = 0;
    long floors_ = 0;
    bool diverged_ = false;
    bool constant_sigma_;
};

/// Euler–Maruyama in vech coordinates, driven by an r(r+1)/2-dimensional Brownian motion.
class VechStepper {
public:
    VechStepper(const ModelParams& params, double dt);
    void reset(const Matrix& q0);
    void step(Rng* rng);
    const Matrix& Q() const { return q_; }
    double time() const { return t_; }
    long floor_events() const { return floors_; }
    bool diverged() const { return diverged_; }
    double blowup_trace = 1e8;

private:
    const ModelParams& params_;
    double dt_, sqrt_dt_;
    int r_, rbar_;
    Matrix q_, drift_, sigma_, embed_, root_;
    Vector qv_, noise_, dv_;
    SymEigen eig_, eig_embed_;
    double t_ = 0.0;
    long floors_ = 0;
    bool diverged_ = false;
};

RiccatiPath simulate_path(const SymMat& q0, double T, double dt, const ModelParams& params, std::uint64_t seed,
                          std::uint64_t path_index = 0, const SimOptions& options = {});
RiccatiPath simulate_path_vech(const SymMat& q0, double T, double dt, const ModelParams& params, std::uint64_t seed,
                               std::uint64_t path_index = 0, const SimOptions& options = {});
/// Euler stepper with the noise switched off.
RiccatiPath deterministic_euler_path(const SymMat& q0, double T, double dt, const ModelParams& params,
                                     const SimOptions& options = {});

/// State of one path at requested times; the building block of Monte Carlo estimators.
struct Snapshot {
    Matrix Q;
    double logdet_integral = 0.0;
    double log_norm_E = 0.0;
    double log_det_E = 0.0;
};

struct SnapshotPath {
    std::vector<Snapshot> at;
    long steps = 0;
    long floor_events = 0;
    int halvings = 0;
    bool diverged = false;
};

enum class Scheme { Matrix, Vech };

/// Runs one path through the sorted times, halving dt (same stream) while the flooring rate exceeds the limit.
SnapshotPath simulate_snapshots(const SymMat& q0, const std::vector<double>& times, double dt, const ModelParams& params,
                                std::uint64_t seed, std::uint64_t path_index, const SimOptions& options = {},
                                Scheme scheme = Scheme::Matrix);

/// Exact law-level drift of Y = Q⁻¹ including the Itô corrections.
SymMat inverse_drift_exact(const SymMat& y, const ModelParams& params);
/// Upper bound −YA − AᵀY + S^ε_− − Y·R^ε_−·Y + (ε²/4)(Tr(YU) + Tr(V·Y⁻¹))·Y.
SymMat inverse_drift_bound(const SymMat& y, const ModelParams& params);

struct InversePath {
    std::vector<double> grid;
    std::vector<SymMat> Y;
    bool diverged = false;
};

InversePath simulate_inverse_path(const SymMat& q0, double T, double dt, const ModelParams& params, std::uint64_t seed,
                                  std::uint64_t path_index = 0, int record_every = 1);
/// Y at the requested sorted times; empty matrices after a loss of definiteness.
std::vector<Matrix> simulate_inverse_snapshots(const SymMat& q0, const std::vector<double>& times, double dt,
                                               const ModelParams& params, std::uint64_t seed, std::uint64_t path_index,
                                               bool* diverged = nullptr);

/// φ_t(Q2) + E_{s,t}(Q2)·[φ_s(Q1) − φ_s(Q2)]·E_{s,t}(Q2)ᵀ.
SymMat comparison_upper_bound(const SymMat& phi_s1, const SymMat& q2, double s, double t, const ModelParams& params,
                              double dt = 1e-3);

struct TraceBound {
    double value = 0.0;
    double stationary_cap = 0.0;
    double a = 0.0, r = 0.0, s = 0.0;
};

/// Scalar comparison flow for E[Tr(Q_t)ⁿ]^{1/n}.
TraceBound trace_moment_bound(const ModelParams& params, int n, double t, const SymMat& q0);
/// Uniform bound for E[Tr(Q_t⁻¹)ⁿ]^{1/n}.
double inverse_trace_bound(const ModelParams& params, int n, const SymMat& q0);

/// Terminal value of dX = (A_err − Q·S)X dt + (Σ_{1,ϖ}(Q) + ε̄²Σ_{κ,ϖ}(Q))^{1/2} dW, with Q following cov.
Vector simulate_error_process(const ModelParams& cov, const Matrix& a_err, double eps_bar, const Vector& x0,
                              const SymMat& q0, double T, double dt, std::uint64_t seed, std::uint64_t path_index);

}  // namespace riccdiff
