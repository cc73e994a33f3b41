#pragma once

#include <Eigen/Dense>

#include <complex>
#include <vector>

namespace riccdiff {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

/// Real symmetric matrix stored as its packed upper triangle, row by row.
class SymMat {
public:
    SymMat() = default;
    explicit SymMat(int dim);

    static SymMat identity(int dim, double scale = 1.0);
    static SymMat diagonal(const Vector& d);
    /// Keeps (M + Mᵀ)/2.
    static SymMat symmetric_part(const Matrix& m);
    /// Rejects inputs whose asymmetry exceeds tol·(1 + ‖M‖_F).
    static SymMat from_dense(const Matrix& m, double tol = 1e-12);

    int dim() const { return dim_; }
    bool empty() const { return dim_ == 0; }
    double operator()(int i, int j) const { return data_[index(i, j)]; }
    void set(int i, int j, double v) { data_[index(i, j)] = v; }
    const std::vector<double>& packed() const { return data_; }

    Matrix dense() const;
    double trace() const;
    double frobenius_norm() const;

    SymMat& operator+=(const SymMat& o);
    SymMat& operator-=(const SymMat& o);
    SymMat& operator*=(double s);
    friend SymMat operator+(SymMat a, const SymMat& b) { return a += b; }
    friend SymMat operator-(SymMat a, const SymMat& b) { return a -= b; }
    friend SymMat operator*(SymMat a, double s) { return a *= s; }
    friend SymMat operator*(double s, SymMat a) { return a *= s; }
    bool operator==(const SymMat& o) const { return dim_ == o.dim_ && data_ == o.data_; }

private:
    int index(int i, int j) const;

    int dim_ = 0;
    std::vector<double> data_;
};

struct SpectralDecomp {
    Vector eigenvalues;   // descending
    Matrix eigenvectors;  // columns
};

/// Cyclic Jacobi eigensolver with reusable storage, for symmetric input.
class SymEigen {
public:
    static constexpr double kOffDiagonalTol = 1e-13;
    static constexpr int kMaxSweeps = 100;

    void compute(const Matrix& m);

    const Vector& values() const { return values_; }
    const Matrix& vectors() const { return vectors_; }
    double min_value() const { return values_(values_.size() - 1); }
    double max_value() const { return values_(0); }

    /// V·diag(f(λ))·Vᵀ written into out.
    template <class F>
    void reconstruct(F&& f, Matrix& out) {
        const Eigen::Index r = values_.size();
        scaled_ = vectors_;
        for (Eigen::Index k = 0; k < r; ++k) scaled_.col(k) *= f(values_(k));
        out.resize(r, r);
        out.noalias() = scaled_ * vectors_.transpose();
    }

private:
    Matrix work_;
    Matrix rot_;
    Matrix vectors_;
    Matrix scaled_;
    Vector values_;
    Vector raw_;
    std::vector<int> order_;
};

SpectralDecomp eigen_sym(const SymMat& m);
SpectralDecomp eigen_sym(const Matrix& m);

double tol_psd(double spectral_norm);
double spectral_norm(const SymMat& m);
double spectral_norm(const Matrix& m);
double min_eigenvalue(const Matrix& m);
double max_eigenvalue(const Matrix& m);
bool is_psd(const SymMat& m);

void symmetrize(Matrix& m);

SymMat sqrt_psd(const SymMat& p);
Matrix sqrt_psd(const Matrix& p);
SymMat inverse_spd(const SymMat& p);

/// Largest eigenvalue of the symmetric part.
double log_norm(const Matrix& a);
/// Largest real part of the spectrum.
double spectral_abscissa(const Matrix& a);
std::vector<std::complex<double>> eigenvalues_general(const Matrix& a);

/// Symmetric matrices as coordinates in the orthonormal basis, dimension r(r+1)/2.
struct VecHalf {
    int r = 0;
    Vector coords;

    int dim() const { return static_cast<int>(coords.size()); }
    double dot(const VecHalf& o) const;
};

int half_dim(int r);
VecHalf vech(const SymMat& h);
SymMat unvech(const VecHalf& v);
Vector vech_dense(const Matrix& h);
Matrix unvech_dense(const Vector& v, int r);

/// Matrix of H ↦ (Q1·H·Q2 + Q2·H·Q1)/2 in vech coordinates.
Matrix sym_tensor_embed(const SymMat& q1, const SymMat& q2);
Matrix sym_tensor_embed(const Matrix& q1, const Matrix& q2);
Matrix sym_tensor_embed_sqrt(const SymMat& q1, const SymMat& q2);

/// min over permutations of the largest matched eigenvalue gap, complex spectra.
double spectrum_distance(const Matrix& a, const Matrix& b);
double bottleneck_matching(const std::vector<std::complex<double>>& x, const std::vector<std::complex<double>>& y);
/// ‖A − B‖_F² − Σ(λᵢ(A) − λᵢ(B))².
double hw_gap(const SymMat& a, const SymMat& b);

/// λ_min(B − A) ≥ −slack.
bool loewner_leq(const Matrix& a, const Matrix& b, double slack = 0.0);

}  // namespace riccdiff
