#pragma once

#include "riccdiff/matcore.hpp"
#include "riccdiff/rng.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <complex>
#include <numeric>
#include <vector>

namespace oracle {

using riccdiff::Matrix;
using riccdiff::Rng;
using riccdiff::SymMat;
using riccdiff::Vector;

inline Matrix gaussian(int rows, int cols, Rng& rng) {
    Matrix m(rows, cols);
    for (int j = 0; j < cols; ++j)
        for (int i = 0; i < rows; ++i) m(i, j) = rng.normal();
    return m;
}

inline Matrix random_symmetric(int r, Rng& rng) {
    const Matrix g = gaussian(r, r, rng);
    return 0.5 * (g + g.transpose());
}

// Orthogonal matrix from the QR factor of a Gaussian matrix.
inline Matrix random_orthogonal(int r, Rng& rng) {
    Eigen::HouseholderQR<Matrix> qr(gaussian(r, r, rng));
    return qr.householderQ();
}

// Eigenvalues drawn uniformly in [lo, hi] with a random basis.
inline Matrix random_spd(int r, Rng& rng, double lo = 0.1, double hi = 3.0) {
    const Matrix q = random_orthogonal(r, rng);
    Vector d(r);
    for (int i = 0; i < r; ++i) d(i) = lo + (hi - lo) * rng.uniform();
    Matrix m = q * d.asDiagonal() * q.transpose();
    return 0.5 * (m + m.transpose());
}

inline Matrix random_psd_rank(int r, int rank, Rng& rng) {
    const Matrix g = gaussian(r, rank, rng);
    Matrix m = g * g.transpose();
    return 0.5 * (m + m.transpose());
}

inline Vector sorted_eigenvalues(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()), Eigen::EigenvaluesOnly);
    Vector v = es.eigenvalues();
    std::sort(v.data(), v.data() + v.size(), std::greater<double>());
    return v;
}

inline Matrix sqrt_spd(const Matrix& m) {
    Eigen::SelfAdjointEigenSolver<Matrix> es(0.5 * (m + m.transpose()));
    Vector d = es.eigenvalues().cwiseMax(0.0).cwiseSqrt();
    return es.eigenvectors() * d.asDiagonal() * es.eigenvectors().transpose();
}

inline double spectral(const Matrix& m) { return Eigen::JacobiSVD<Matrix>(m).singularValues()(0); }

// min over all r! permutations of the largest matched gap.
inline double brute_force_matching(const std::vector<std::complex<double>>& x, const std::vector<std::complex<double>>& y) {
    std::vector<int> perm(x.size());
    std::iota(perm.begin(), perm.end(), 0);
    double best = INFINITY;
    do {
        double worst = 0.0;
        for (std::size_t i = 0; i < x.size(); ++i) worst = std::max(worst, std::abs(x[i] - y[perm[i]]));
        best = std::min(best, worst);
    } while (std::next_permutation(perm.begin(), perm.end()));
    return best;
}

// Scalar Riccati ṗ = 2ap + r − sp² with a = 0, r = s = 1 and p(0) = 0.
inline double tanh_flow(double t) { return std::tanh(t); }

// Positive root of 2ap + r − sp² = 0.
inline double scalar_fixed_point(double a, double r, double s) { return (a + std::sqrt(a * a + r * s)) / s; }

// Scalar Riccati flow in closed form: p(t) = p₊ + (p₊ − p₋)/(c·e^{λt} − 1), λ = s(p₊ − p₋).
inline double scalar_flow(double a, double r, double s, double p0, double t) {
    const double root = std::sqrt(a * a + r * s);
    const double pp = (a + root) / s, pm = (a - root) / s;
    const double lambda = 2.0 * root;
    if (p0 == pp) return pp;
    const double c = (p0 - pm) / (p0 - pp);
    return pp + (pp - pm) / (c * std::exp(lambda * t) - 1.0);
}

}  // namespace oracle
