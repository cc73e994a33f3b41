#pragma once

#include "riccdiff/matcore.hpp"
#include "riccdiff/riccati.hpp"
#include "riccdiff/rng.hpp"

#include <cstdint>
#include <vector>

namespace riccdiff {

/// dX = A·X dt + R1^{1/2} dW,  dY = B·X dt + R2^{1/2} dV.
class FilterModel {
public:
    FilterModel(Matrix a, Matrix b, SymMat r1, SymMat r2);

    int dim() const { return static_cast<int>(a_.rows()); }
    int obs_dim() const { return static_cast<int>(b_.rows()); }
    const Matrix& A() const { return a_; }
    const Matrix& B() const { return b_; }
    const SymMat& R1() const { return r1_; }
    const SymMat& R2() const { return r2_; }
    const SymMat& S() const { return s_; }
    const Matrix& sqrt_R1() const { return sqrt_r1_; }
    const Matrix& sqrt_R2() const { return sqrt_r2_; }
    /// Bᵀ·R2⁻¹.
    const Matrix& gain_base() const { return gain_base_; }

    /// Deterministic Riccati parameters (A, R1, S) of the Kalman–Bucy covariance.
    ModelParams kalman_params() const;

private:
    Matrix a_, b_;
    SymMat r1_, r2_, s_;
    Matrix sqrt_r1_, sqrt_r2_, gain_base_;
};

enum class EnkfType { PerturbedObservation = 1, Midpoint = 2 };

struct TruthPath {
    std::vector<double> grid;
    std::vector<Vector> X;
    std::vector<Vector> dY;  // dY[k] covers [grid[k], grid[k+1]]
};

/// Exact Gaussian transition for the signal, left-point increments for the observation.
class TruthSimulator {
public:
    TruthSimulator(const FilterModel& model, double dt);
    void reset(const Vector& x0) { x_ = x0; }
    /// Advances one step and returns the observation increment over it.
    const Vector& step(Rng& rng);
    const Vector& state() const { return x_; }

private:
    const FilterModel& model_;
    double dt_;
    Matrix transition_, noise_root_;
    Vector x_, dy_, w_, v_;
};

TruthPath simulate_truth(const FilterModel& model, const Vector& x0, double T, double dt, std::uint64_t seed,
                         std::uint64_t path_index = 0);

struct KalmanPath {
    std::vector<double> grid;
    std::vector<Vector> mean;
    std::vector<SymMat> P;
};

KalmanPath kalman_bucy(const FilterModel& model, const std::vector<Vector>& dY, const Vector& m0, const SymMat& p0, double dt);

class Ensemble {
public:
    Ensemble(Matrix particles, EnkfType type, double varpi);

    /// N + 1 independent draws from N(m0, P0).
    static Ensemble sample(const Vector& m0, const SymMat& p0, int N, EnkfType type, double varpi, Rng& rng);
    /// Draws recentred and recoloured so the rescaled statistics equal (m0, P0) exactly; needs N ≥ r.
    static Ensemble moment_matched(const Vector& m0, const SymMat& p0, int N, EnkfType type, double varpi, Rng& rng);

    int N() const { return static_cast<int>(particles_.cols()) - 1; }
    int dim() const { return static_cast<int>(particles_.rows()); }
    EnkfType type() const { return type_; }
    double varpi() const { return varpi_; }
    const Matrix& particles() const { return particles_; }
    Matrix& particles() { return particles_; }

private:
    Matrix particles_;  // one particle per column
    EnkfType type_;
    double varpi_;
};

struct SampleStats {
    Vector mean;
    SymMat cov;  // (1 + 1/N) times the empirical covariance around the mean
};

SampleStats sample_stats(const Ensemble& ens);

/// One Euler step of the particle system sharing the observation increment dY.
void enkf_step(Ensemble& ens, const Vector& dY, const FilterModel& model, double dt, Rng& rng);

/// Riccati diffusion matched to the rescaled ensemble covariance, ε = 2/√N.
ModelParams riccati_equivalent(const FilterModel& model, EnkfType type, double varpi, int N);
/// Exact drift of the type (1) inflated sample covariance: A·P + P·Aᵀ + R + ϖ²S − P·S·P.
SymMat type1_covariance_drift(const SymMat& p, const FilterModel& model, double varpi);
/// Drift matrix A − ϖS of the estimation error.
Matrix error_drift_matrix(const FilterModel& model, double varpi);

struct FilterSnapshot {
    SymMat cov;
    Vector mean;
    Vector truth;
};

struct FilterRunSpec {
    int N = 100;
    EnkfType type = EnkfType::Midpoint;
    double varpi = 0.0;
    Vector m0, x0;
    SymMat p0;
    bool moment_matched = true;
    double dt = 1e-3;
};

/// Truth, observations and ensemble advanced together; statistics captured at the sorted times.
std::vector<FilterSnapshot> run_filter(const FilterModel& model, const FilterRunSpec& spec, const std::vector<double>& times,
                                       std::uint64_t seed, std::uint64_t run_index);

}  // namespace riccdiff
