#pragma once

#include "riccdiff/matcore.hpp"
#include "riccdiff/riccati.hpp"

#include <cstdint>
#include <vector>

namespace riccdiff {

/// Scalar coefficients when (A, R, S, U, V) are multiples of the identity.
struct IsotropicParams {
    double a = 0.0;
    double rr = 1.0;
    double ss = 1.0;
    double uu = 1.0;
    double vv = 0.0;

    double theta(double l) const { return 2.0 * a * l + rr - ss * l * l; }
    double sigma(double l) const { return uu + vv * l * l; }
};

struct EigenPath {
    std::vector<double> grid;
    std::vector<Vector> lambdas;  // descending
    long collision_events = 0;
};

/// Interaction term (ε²/4)·Σ_{j≠i}(λᵢΣ(λⱼ) + λⱼΣ(λᵢ))/(λᵢ − λⱼ).
double repulsion(const Vector& lambda, int i, const IsotropicParams& p, double eps);
Vector isotropic_drift(const Vector& lambda, const IsotropicParams& p, double eps);

EigenPath simulate_isotropic_eigenvalues(const IsotropicParams& p, int r, double eps, double T, double dt,
                                         std::uint64_t seed, const Vector& initial, std::uint64_t path_index = 0,
                                         int record_every = 1);

/// Ordinary least squares with heteroscedasticity-robust standard errors.
struct DriftRegression {
    double slope = 0.0;
    double slope_se = 0.0;
    double intercept = 0.0;
    double intercept_se = 0.0;
    long samples = 0;
    long skipped = 0;
};

class DriftRegressionData {
public:
    void add(double theoretical, double observed);
    void skip() { ++skipped_; }
    void merge(const DriftRegressionData& other);
    long size() const { return static_cast<long>(x_.size()); }
    DriftRegression fit() const;

private:
    std::vector<double> x_, y_;
    long skipped_ = 0;
};

/// Θ_{t,i}(λᵢ) + repulsion from the eigendecomposition of Q, with eigenvector-projected coefficients.
Vector dyson_drift(const Matrix& q, const ModelParams& params, const SpectralDecomp& decomp);

/// Adds every consecutive step pair of a fully recorded path; near-degenerate samples are skipped.
void accumulate_eigen_drift(const RiccatiPath& path, const ModelParams& params, DriftRegressionData& data,
                            double gap_tol = 1e-6);
DriftRegression eigen_drift_diagnostic(const RiccatiPath& path, const ModelParams& params);

/// Two-sample Kolmogorov–Smirnov statistic.
double ks_distance(std::vector<double> a, std::vector<double> b);

/// Scalar coefficients of a model whose A, R and S are multiples of the identity; throws otherwise.
IsotropicParams isotropic_from(const ModelParams& params);

struct DysonComparison {
    std::vector<double> ks;  // one per ordered eigenvalue
    double max_ks = 0.0;
    long matrix_samples = 0;
    long eigen_samples = 0;
    long collision_events = 0;
    long diverged = 0;
};

/// Ordered-eigenvalue marginals at time t from the matrix diffusion and from the eigenvalue SDE.
DysonComparison dyson_compare(const ModelParams& params, const SymMat& q0, double t, double dt, long samples,
                              std::uint64_t seed, int threads = 0);

}  // namespace riccdiff
