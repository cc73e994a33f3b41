#include "riccdiff/matcore.hpp"

#include "riccdiff/error.hpp"

#include <Eigen/Eigenvalues>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <string>

namespace riccdiff {

namespace {

void check_square(const Matrix& m, const char* what) {
    require(m.rows() == m.cols() && m.rows() >= 1, ErrorCode::InvalidArgument,
            std::string(what) + " must be a non-empty square matrix");
}

}  // namespace

SymMat::SymMat(int dim) : dim_(dim), data_(static_cast<std::size_t>(half_dim(dim)), 0.0) {
    require(dim >= 1, ErrorCode::InvalidArgument, "SymMat dimension must be at least 1");
}

int SymMat::index(int i, int j) const {
    if (i > j) std::swap(i, j);
    return i * dim_ - i * (i - 1) / 2 + (j - i);
}

SymMat SymMat::identity(int dim, double scale) {
    SymMat m(dim);
    for (int i = 0; i < dim; ++i) m.set(i, i, scale);
    return m;
}

SymMat SymMat::diagonal(const Vector& d) {
    SymMat m(static_cast<int>(d.size()));
    for (int i = 0; i < m.dim(); ++i) m.set(i, i, d(i));
    return m;
}

SymMat SymMat::symmetric_part(const Matrix& m) {
    check_square(m, "symmetric_part input");
    const int r = static_cast<int>(m.rows());
    SymMat out(r);
    for (int i = 0; i < r; ++i)
        for (int j = i; j < r; ++j) out.set(i, j, i == j ? m(i, i) : 0.5 * (m(i, j) + m(j, i)));
    return out;
}

SymMat SymMat::from_dense(const Matrix& m, double tol) {
    check_square(m, "from_dense input");
    const double asym = (m - m.transpose()).norm();
    require(asym <= tol * (1.0 + m.norm()), ErrorCode::InvalidArgument,
            "matrix is not symmetric (asymmetry " + std::to_string(asym) + ")");
    return symmetric_part(m);
}

Matrix SymMat::dense() const {
    Matrix m(dim_, dim_);
    for (int i = 0; i < dim_; ++i)
        for (int j = i; j < dim_; ++j) m(i, j) = m(j, i) = (*this)(i, j);
    return m;
}

double SymMat::trace() const {
    double t = 0.0;
    for (int i = 0; i < dim_; ++i) t += (*this)(i, i);
    return t;
}

double SymMat::frobenius_norm() const {
    double s = 0.0;
    for (int i = 0; i < dim_; ++i)
        for (int j = i; j < dim_; ++j) {
            const double v = (*this)(i, j);
            s += (i == j ? 1.0 : 2.0) * v * v;
        }
    return std::sqrt(s);
}

SymMat& SymMat::operator+=(const SymMat& o) {
    require(dim_ == o.dim_, ErrorCode::InvalidArgument, "SymMat dimension mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] += o.data_[k];
    return *this;
}

SymMat& SymMat::operator-=(const SymMat& o) {
    require(dim_ == o.dim_, ErrorCode::InvalidArgument, "SymMat dimension mismatch");
    for (std::size_t k = 0; k < data_.size(); ++k) data_[k] -= o.data_[k];
    return *this;
}

SymMat& SymMat::operator*=(double s) {
    for (double& v : data_) v *= s;
    return *this;
}

void SymEigen::compute(const Matrix& m) {
    const Eigen::Index r = m.rows();
    work_.resize(r, r);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = i; j < r; ++j) work_(i, j) = work_(j, i) = (i == j) ? m(i, i) : 0.5 * (m(i, j) + m(j, i));
    rot_.setIdentity(r, r);

    double total = 0.0;
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < r; ++j) total += work_(i, j) * work_(i, j);
    const double target = kOffDiagonalTol * kOffDiagonalTol * total;

    for (int sweep = 0; sweep < kMaxSweeps; ++sweep) {
        double off = 0.0;
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = i + 1; j < r; ++j) off += 2.0 * work_(i, j) * work_(i, j);
        if (off <= target) break;
        for (Eigen::Index p = 0; p < r; ++p) {
            for (Eigen::Index q = p + 1; q < r; ++q) {
                const double apq = work_(p, q);
                if (apq == 0.0) continue;
                const double app = work_(p, p);
                const double aqq = work_(q, q);
                const double theta = (aqq - app) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0);
                const double s = t * c;
                for (Eigen::Index k = 0; k < r; ++k) {
                    if (k == p || k == q) continue;
                    const double akp = work_(k, p);
                    const double akq = work_(k, q);
                    work_(k, p) = work_(p, k) = c * akp - s * akq;
                    work_(k, q) = work_(q, k) = s * akp + c * akq;
                }
                work_(p, p) = app - t * apq;
                work_(q, q) = aqq + t * apq;
                work_(p, q) = work_(q, p) = 0.0;
                for (Eigen::Index k = 0; k < r; ++k) {
                    const double vkp = rot_(k, p);
                    const double vkq = rot_(k, q);
                    rot_(k, p) = c * vkp - s * vkq;
                    rot_(k, q) = s * vkp + c * vkq;
                }
            }
        }
    }

    raw_.resize(r);
    for (Eigen::Index i = 0; i < r; ++i) raw_(i) = work_(i, i);
    order_.resize(static_cast<std::size_t>(r));
    std::iota(order_.begin(), order_.end(), 0);
    std::stable_sort(order_.begin(), order_.end(), [&](int a, int b) { return raw_(a) > raw_(b); });
    values_.resize(r);
    vectors_.resize(r, r);
    for (Eigen::Index k = 0; k < r; ++k) {
        const int src = order_[static_cast<std::size_t>(k)];
        values_(k) = raw_(src);
        vectors_.col(k) = rot_.col(src);
        for (Eigen::Index i = 0; i < r; ++i) {
            const double v = vectors_(i, k);
            if (std::abs(v) > 1e-12) {
                if (v < 0.0) vectors_.col(k) *= -1.0;
                break;
            }
        }
    }
}

SpectralDecomp eigen_sym(const Matrix& m) {
    check_square(m, "eigen_sym input");
    SymEigen eig;
    eig.compute(m);
    return {eig.values(), eig.vectors()};
}

SpectralDecomp eigen_sym(const SymMat& m) { return eigen_sym(m.dense()); }

double tol_psd(double norm2) { return 1e-10 * (1.0 + norm2); }

double spectral_norm(const SymMat& m) {
    const auto d = eigen_sym(m);
    return std::max(std::abs(d.eigenvalues(0)), std::abs(d.eigenvalues(d.eigenvalues.size() - 1)));
}

double spectral_norm(const Matrix& m) {
    if (m.size() == 0) return 0.0;
    Eigen::JacobiSVD<Matrix> svd(m);
    return svd.singularValues()(0);
}

double min_eigenvalue(const Matrix& m) {
    SymEigen eig;
    eig.compute(m);
    return eig.min_value();
}

double max_eigenvalue(const Matrix& m) {
    SymEigen eig;
    eig.compute(m);
    return eig.max_value();
}

bool is_psd(const SymMat& m) {
    const auto d = eigen_sym(m);
    const double lo = d.eigenvalues(d.eigenvalues.size() - 1);
    const double norm = std::max(std::abs(d.eigenvalues(0)), std::abs(lo));
    return lo >= -tol_psd(norm);
}

void symmetrize(Matrix& m) {
    const Eigen::Index r = m.rows();
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = i + 1; j < r; ++j) m(i, j) = m(j, i) = 0.5 * (m(i, j) + m(j, i));
}

Matrix sqrt_psd(const Matrix& p) {
    check_square(p, "sqrt_psd input");
    SymEigen eig;
    eig.compute(p);
    const double norm = std::max(std::abs(eig.max_value()), std::abs(eig.min_value()));
    if (eig.min_value() < -tol_psd(norm))
        fail(ErrorCode::NotPositiveSemidefinite,
             "sqrt_psd: smallest eigenvalue " + std::to_string(eig.min_value()) + " below tolerance");
    Matrix out;
    eig.reconstruct([](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; }, out);
    symmetrize(out);
    return out;
}

SymMat sqrt_psd(const SymMat& p) { return SymMat::symmetric_part(sqrt_psd(p.dense())); }

SymMat inverse_spd(const SymMat& p) {
    SymEigen eig;
    eig.compute(p.dense());
    require(eig.min_value() > 0.0, ErrorCode::NotPositiveSemidefinite, "inverse_spd: matrix is not positive definite");
    Matrix out;
    eig.reconstruct([](double l) { return 1.0 / l; }, out);
    return SymMat::symmetric_part(out);
}

double log_norm(const Matrix& a) {
    check_square(a, "log_norm input");
    return max_eigenvalue(0.5 * (a + a.transpose()));
}

std::vector<std::complex<double>> eigenvalues_general(const Matrix& a) {
    check_square(a, "eigenvalue input");
    Eigen::EigenSolver<Matrix> es(a, false);
    require(es.info() == Eigen::Success, ErrorCode::SolverFailure, "general eigenvalue computation failed");
    std::vector<std::complex<double>> out(static_cast<std::size_t>(a.rows()));
    for (Eigen::Index i = 0; i < a.rows(); ++i) out[static_cast<std::size_t>(i)] = es.eigenvalues()(i);
    return out;
}

double spectral_abscissa(const Matrix& a) {
    double best = -std::numeric_limits<double>::infinity();
    for (const auto& z : eigenvalues_general(a)) best = std::max(best, z.real());
    return best;
}

int half_dim(int r) { return r * (r + 1) / 2; }

double VecHalf::dot(const VecHalf& o) const {
    require(r == o.r && coords.size() == o.coords.size(), ErrorCode::InvalidArgument, "VecHalf dimension mismatch");
    return coords.dot(o.coords);
}

Vector vech_dense(const Matrix& h) {
    check_square(h, "vech input");
    const int r = static_cast<int>(h.rows());
    Vector v(half_dim(r));
    int k = 0;
    for (int i = 0; i < r; ++i)
        for (int j = i; j < r; ++j) v(k++) = (i == j) ? h(i, i) : M_SQRT2 * h(i, j);
    return v;
}

Matrix unvech_dense(const Vector& v, int r) {
    require(r >= 1 && v.size() == half_dim(r), ErrorCode::InvalidArgument, "unvech: coordinate count does not match r(r+1)/2");
    Matrix h(r, r);
    int k = 0;
    for (int i = 0; i < r; ++i)
        for (int j = i; j < r; ++j) {
            const double x = v(k++);
            if (i == j)
                h(i, i) = x;
            else
                h(i, j) = h(j, i) = x / M_SQRT2;
        }
    return h;
}

VecHalf vech(const SymMat& h) {
    require(!h.empty(), ErrorCode::InvalidArgument, "vech of empty matrix");
    VecHalf out;
    out.r = h.dim();
    out.coords.resize(half_dim(h.dim()));
    int k = 0;
    for (int i = 0; i < h.dim(); ++i)
        for (int j = i; j < h.dim(); ++j) out.coords(k++) = (i == j) ? h(i, i) : M_SQRT2 * h(i, j);
    return out;
}

SymMat unvech(const VecHalf& v) {
    require(v.r >= 1 && v.coords.size() == half_dim(v.r), ErrorCode::InvalidArgument,
            "unvech: coordinate count does not match r(r+1)/2");
    SymMat h(v.r);
    int k = 0;
    for (int i = 0; i < v.r; ++i)
        for (int j = i; j < v.r; ++j) {
            const double x = v.coords(k++);
            h.set(i, j, i == j ? x : x / M_SQRT2);
        }
    return h;
}

Matrix sym_tensor_embed(const Matrix& q1, const Matrix& q2) {
    check_square(q1, "sym_tensor_embed input");
    require(q1.rows() == q2.rows() && q1.cols() == q2.cols(), ErrorCode::InvalidArgument, "sym_tensor_embed dimension mismatch");
    const int r = static_cast<int>(q1.rows());
    const int n = half_dim(r);
    Matrix out(n, n);
    Matrix basis = Matrix::Zero(r, r);
    int k = 0;
    for (int i = 0; i < r; ++i)
        for (int j = i; j < r; ++j, ++k) {
            basis.setZero();
            if (i == j) {
                basis(i, i) = 1.0;
            } else {
                basis(i, j) = basis(j, i) = 1.0 / M_SQRT2;
            }
            const Matrix image = 0.5 * (q1 * basis * q2 + q2 * basis * q1);
            out.col(k) = vech_dense(image);
        }
    symmetrize(out);
    return out;
}

Matrix sym_tensor_embed(const SymMat& q1, const SymMat& q2) {
    require(is_psd(q1) && is_psd(q2), ErrorCode::InvalidArgument, "sym_tensor_embed requires positive semidefinite inputs");
    return sym_tensor_embed(q1.dense(), q2.dense());
}

Matrix sym_tensor_embed_sqrt(const SymMat& q1, const SymMat& q2) { return sqrt_psd(sym_tensor_embed(q1, q2)); }

namespace {

bool perfect_matching_within(const std::vector<std::vector<double>>& cost, double limit) {
    const std::size_t n = cost.size();
    std::vector<int> match_right(n, -1);
    std::vector<char> seen(n);
    auto augment = [&](auto&& self, std::size_t u) -> bool {
        for (std::size_t v = 0; v < n; ++v) {
            if (cost[u][v] > limit || seen[v]) continue;
            seen[v] = 1;
            if (match_right[v] < 0 || self(self, static_cast<std::size_t>(match_right[v]))) {
                match_right[v] = static_cast<int>(u);
                return true;
            }
        }
        return false;
    };
    for (std::size_t u = 0; u < n; ++u) {
        std::fill(seen.begin(), seen.end(), 0);
        if (!augment(augment, u)) return false;
    }
    return true;
}

}  // namespace

double bottleneck_matching(const std::vector<std::complex<double>>& x, const std::vector<std::complex<double>>& y) {
    require(x.size() == y.size() && !x.empty(), ErrorCode::InvalidArgument, "spectrum sizes differ");
    const std::size_t n = x.size();
    if (n <= 8) {
        std::vector<std::size_t> perm(n);
        std::iota(perm.begin(), perm.end(), 0);
        double best = std::numeric_limits<double>::infinity();
        do {
            double worst = 0.0;
            for (std::size_t i = 0; i < n && worst < best; ++i) worst = std::max(worst, std::abs(x[i] - y[perm[i]]));
            best = std::min(best, worst);
        } while (std::next_permutation(perm.begin(), perm.end()));
        return best;
    }
    std::vector<std::vector<double>> cost(n, std::vector<double>(n));
    std::vector<double> candidates;
    candidates.reserve(n * n);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            cost[i][j] = std::abs(x[i] - y[j]);
            candidates.push_back(cost[i][j]);
        }
    std::sort(candidates.begin(), candidates.end());
    candidates.erase(std::unique(candidates.begin(), candidates.end()), candidates.end());
    std::size_t lo = 0, hi = candidates.size() - 1;
    while (lo < hi) {
        const std::size_t mid = (lo + hi) / 2;
        if (perfect_matching_within(cost, candidates[mid]))
            hi = mid;
        else
            lo = mid + 1;
    }
    return candidates[lo];
}

double spectrum_distance(const Matrix& a, const Matrix& b) {
    require(a.rows() == b.rows() && a.cols() == b.cols(), ErrorCode::InvalidArgument, "spectrum_distance dimension mismatch");
    return bottleneck_matching(eigenvalues_general(a), eigenvalues_general(b));
}

double hw_gap(const SymMat& a, const SymMat& b) {
    require(a.dim() == b.dim(), ErrorCode::InvalidArgument, "hw_gap dimension mismatch");
    const auto da = eigen_sym(a);
    const auto db = eigen_sym(b);
    const double diff = (a - b).frobenius_norm();
    return diff * diff - (da.eigenvalues - db.eigenvalues).squaredNorm();
}

bool loewner_leq(const Matrix& a, const Matrix& b, double slack) {
    Matrix d = b - a;
    symmetrize(d);
    return min_eigenvalue(d) >= -slack;
}

}  // namespace riccdiff
