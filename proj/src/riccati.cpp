#include "riccdiff/riccati.hpp"

#include "riccdiff/error.hpp"

#include <Eigen/Eigenvalues>
#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <string>

namespace riccdiff {

namespace {

using CMatrix = Eigen::MatrixXcd;

void check_dim(const SymMat& m, int r, const char* what) {
    require(m.dim() == r, ErrorCode::InvalidArgument, std::string(what) + " has the wrong dimension");
}

int step_count(double T, double dt) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidArgument, "dt must be positive");
    require(T >= 0.0 && std::isfinite(T), ErrorCode::InvalidArgument, "T must be non-negative");
    if (T == 0.0) return 0;
    const double ratio = T / dt;
    const double nearest = std::round(ratio);
    if (std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio)) return std::max(1, static_cast<int>(nearest));
    return static_cast<int>(std::ceil(ratio));
}

// Largest c ≥ 0 with R − c·U ⪰ 0.
double max_psd_ratio(const SymMat& r, const SymMat& u) {
    const auto dr = eigen_sym(r);
    const double norm_r = std::max(std::abs(dr.eigenvalues(0)), std::abs(dr.eigenvalues(dr.eigenvalues.size() - 1)));
    const double norm_u = spectral_norm(u);
    if (norm_u == 0.0) return kUnbounded;
    const double tol_r = 1e-12 * (1.0 + norm_r);
    const Matrix ud = u.dense();
    const int n = r.dim();
    std::vector<int> range, kernel;
    for (int k = 0; k < n; ++k) (dr.eigenvalues(k) > tol_r ? range : kernel).push_back(k);
    for (int k : kernel) {
        const Vector v = dr.eigenvectors.col(k);
        if (v.dot(ud * v) > 1e-12 * (1.0 + norm_u)) return 0.0;
    }
    if (range.empty()) return 0.0;
    Matrix w(n, static_cast<int>(range.size()));
    for (std::size_t j = 0; j < range.size(); ++j)
        w.col(static_cast<Eigen::Index>(j)) = dr.eigenvectors.col(range[j]) / std::sqrt(dr.eigenvalues(range[j]));
    const double top = max_eigenvalue(w.transpose() * ud * w);
    if (top <= 1e-14 * (1.0 + norm_u)) return kUnbounded;
    return 1.0 / top;
}

bool pbh_test(const Matrix& a, const Matrix& block, bool columns) {
    const int r = static_cast<int>(a.rows());
    const double scale = std::max({spectral_norm(a), spectral_norm(block), 1e-300});
    const double tol = 1e-8 * scale;
    for (const auto& lambda : eigenvalues_general(a)) {
        if (lambda.real() < -1e-10 * std::max(1.0, spectral_norm(a))) continue;
        CMatrix shifted = a.cast<std::complex<double>>();
        shifted.diagonal().array() -= lambda;
        CMatrix m;
        if (columns) {
            m.resize(r, r + block.cols());
            m << shifted, block.cast<std::complex<double>>();
        } else {
            m.resize(r + block.rows(), r);
            m << shifted, block.cast<std::complex<double>>();
        }
        Eigen::JacobiSVD<CMatrix> svd(m);
        int rank = 0;
        for (Eigen::Index k = 0; k < svd.singularValues().size(); ++k)
            if (svd.singularValues()(k) > tol) ++rank;
        if (rank < r) return false;
    }
    return true;
}

}  // namespace

ModelParams::ModelParams(Matrix a, SymMat r, SymMat s, int kappa, double varpi, double eps)
    : a_(std::move(a)), r_(std::move(r)), s_(std::move(s)), kappa_(kappa), varpi_(varpi), eps_(eps) {
    require(a_.rows() == a_.cols() && a_.rows() >= 1, ErrorCode::InvalidArgument, "A must be a non-empty square matrix");
    const int n = dim();
    check_dim(r_, n, "R");
    check_dim(s_, n, "S");
    require(kappa_ == 0 || kappa_ == 1, ErrorCode::InvalidArgument, "kappa must be 0 or 1");
    require(varpi_ >= 0.0 && std::isfinite(varpi_), ErrorCode::InvalidArgument, "varpi must be non-negative");
    require(eps_ >= 0.0 && std::isfinite(eps_), ErrorCode::InvalidArgument, "eps must be non-negative");
    require(a_.allFinite(), ErrorCode::InvalidArgument, "A has non-finite entries");
    require(is_psd(r_), ErrorCode::NotPositiveSemidefinite, "R must be positive semidefinite");
    require(is_psd(s_), ErrorCode::NotPositiveSemidefinite, "S must be positive semidefinite");

    r_dense_ = r_.dense();
    s_dense_ = s_.dense();
    sqrt_r_ = sqrt_psd(r_dense_);
    const Matrix shifted = s_dense_ + varpi_ * Matrix::Identity(n, n);
    u_ = SymMat::symmetric_part(r_dense_ + kappa_ * varpi_ * s_dense_ * shifted);
    v_ = SymMat::symmetric_part(kappa_ * shifted);
    stabilizable_ = pbh_stabilizable(a_, sqrt_r_);
    detectable_ = pbh_detectable(a_, sqrt_psd(s_dense_));
}

ModelParams ModelParams::with_eps(double eps) const {
    ModelParams out = *this;
    require(eps >= 0.0 && std::isfinite(eps), ErrorCode::InvalidArgument, "eps must be non-negative");
    out.eps_ = eps;
    return out;
}

ModelParams ModelParams::with_kappa(int kappa) const { return ModelParams(a_, r_, s_, kappa, varpi_, eps_); }

bool pbh_stabilizable(const Matrix& a, const Matrix& b) {
    require(a.rows() == a.cols() && b.rows() == a.rows(), ErrorCode::InvalidArgument, "PBH dimension mismatch");
    return pbh_test(a, b, true);
}

bool pbh_detectable(const Matrix& a, const Matrix& c) {
    require(a.rows() == a.cols() && c.cols() == a.rows(), ErrorCode::InvalidArgument, "PBH dimension mismatch");
    return pbh_test(a, c, false);
}

void drift_theta(const Matrix& p, const ModelParams& params, Matrix& out) {
    const Matrix ap = params.A() * p;
    out = ap + ap.transpose() + params.R_dense() - p * params.S_dense() * p;
    symmetrize(out);
}

SymMat drift_theta(const SymMat& p, const ModelParams& params) {
    check_dim(p, params.dim(), "P");
    Matrix out;
    drift_theta(p.dense(), params, out);
    return SymMat::symmetric_part(out);
}

void sigma_map(const Matrix& p, const ModelParams& params, Matrix& out) {
    out = params.R_dense();
    if (params.kappa() == 1) {
        const Matrix shifted = p + params.varpi() * Matrix::Identity(p.rows(), p.cols());
        out += shifted * params.S_dense() * shifted;
    }
    symmetrize(out);
}

SymMat sigma_map(const SymMat& p, const ModelParams& params) {
    check_dim(p, params.dim(), "P");
    require(is_psd(p), ErrorCode::NotPositiveSemidefinite, "sigma_map requires P positive semidefinite");
    Matrix out;
    sigma_map(p.dense(), params, out);
    return SymMat::symmetric_part(out);
}

std::pair<SymMat, SymMat> uv_bound(const ModelParams& params) { return {params.U(), params.V()}; }

double threshold_eps0(const ModelParams& params) {
    const int r = params.dim();
    const double c = std::min(max_psd_ratio(params.R(), params.U()), max_psd_ratio(params.S(), params.V()));
    if (is_unbounded(c)) return kUnbounded;
    if (params.varpi() == 0.0 && c > 0.0) return 2.0 / std::sqrt(r + 1.0);
    return std::sqrt(4.0 * c / (r + 1.0));
}

double threshold_eps_n_V(const ModelParams& params, int n) {
    require(n >= 1, ErrorCode::InvalidArgument, "moment order n must be at least 1");
    const auto ds = eigen_sym(params.S());
    const double lam_min = ds.eigenvalues(params.dim() - 1);
    if (lam_min <= 1e-14 * (1.0 + std::abs(ds.eigenvalues(0)))) return 0.0;
    const double lam_v = eigen_sym(params.V()).eigenvalues(0);
    const double lhs = 0.5 * params.dim() * (n - 1) * lam_v;
    if (lhs <= 0.0) return kUnbounded;
    return std::sqrt(lam_min / lhs);
}

double threshold_eps_n_UV(const ModelParams& params, int n) {
    require(n >= 1, ErrorCode::InvalidArgument, "moment order n must be at least 1");
    const int r = params.dim();
    const double e0 = threshold_eps0(params);
    const auto dr = eigen_sym(params.R());
    const double lam_min = dr.eigenvalues(r - 1);
    if (lam_min <= 1e-14 * (1.0 + std::abs(dr.eigenvalues(0)))) return 0.0;
    const double lu = eigen_sym(params.U()).eigenvalues(0);
    const double lv = eigen_sym(params.V()).eigenvalues(0);
    const double coeff = 0.5 * ((1.0 + n * r) * lu + lv * r / 4.0);
    if (coeff <= 0.0) return e0;
    return std::min(e0, std::sqrt(lam_min / coeff));
}

Thresholds thresholds(const ModelParams& params, int n) {
    Thresholds t;
    t.n = n;
    t.eps0 = threshold_eps0(params);
    t.epsN_V = threshold_eps_n_V(params, n);
    t.epsN_UV = threshold_eps_n_UV(params, n);
    const int r = params.dim();
    const double e2 = params.eps() * params.eps();
    t.R_eps = params.R() - (e2 / 4.0) * (r + 1.0) * params.U();
    t.S_eps = params.S() - (e2 / 4.0) * (r + 1.0) * params.V();
    t.R_eps_n = t.R_eps - (n * e2 / 2.0) * params.U();
    t.S_eps_n = t.S_eps - (n * e2 / 2.0) * params.V();
    t.degenerate = t.eps0 == 0.0 || t.epsN_V == 0.0 || t.epsN_UV == 0.0;
    return t;
}

Matrix solve_lyapunov(const Matrix& f, const Matrix& c) {
    require(f.rows() == f.cols() && c.rows() == f.rows() && c.cols() == f.cols(), ErrorCode::InvalidArgument,
            "Lyapunov dimension mismatch");
    const Eigen::Index r = f.rows();
    const Matrix id = Matrix::Identity(r, r);
    Matrix k = Matrix::Zero(r * r, r * r);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = 0; j < r; ++j) {
            k.block(i * r, j * r, r, r) += id(i, j) * f;
            k.block(i * r, j * r, r, r) += f(i, j) * id;
        }
    const Vector rhs = -Eigen::Map<const Vector>(c.data(), r * r);
    Eigen::FullPivLU<Matrix> lu(k);
    require(lu.isInvertible(), ErrorCode::SolverFailure, "Lyapunov operator is singular");
    Vector x = lu.solve(rhs);
    Matrix out = Eigen::Map<Matrix>(x.data(), r, r);
    symmetrize(out);
    return out;
}

namespace {

double fixed_point_residual(const Matrix& p, const ModelParams& params) {
    Matrix theta;
    drift_theta(p, params, theta);
    return theta.norm();
}

double residual_limit(const Matrix& p) {
    const double n = p.norm();
    return 1e-10 * (1.0 + n * n);
}

Matrix stabilizing_start(const ModelParams& params) {
    const int r = params.dim();
    const Matrix& a = params.A();
    const auto ds = eigen_sym(params.S());
    const double smin = ds.eigenvalues(r - 1);
    if (smin > 1e-8 * (1.0 + ds.eigenvalues(0))) {
        const double alpha = std::max(0.0, log_norm(a)) / smin + 1.0;
        return alpha * Matrix::Identity(r, r);
    }
    double min_re = std::numeric_limits<double>::infinity();
    for (const auto& z : eigenvalues_general(a)) min_re = std::min(min_re, z.real());
    const double beta = std::max(0.0, -min_re) + 1.0;
    const Matrix shifted = -(a.transpose() + beta * Matrix::Identity(r, r));
    const Matrix z = solve_lyapunov(shifted, 2.0 * params.S_dense());
    const double zmin = min_eigenvalue(z);
    require(zmin > 1e-12 * (1.0 + z.norm()), ErrorCode::SolverFailure, "no stabilizing initial gain found");
    return z.inverse();
}

}  // namespace

SymMat newton_kleinman(const ModelParams& params, int* iterations) {
    require(params.detectable(), ErrorCode::PreconditionViolated, "(A, S^1/2) is not detectable");
    require(params.stabilizable(), ErrorCode::PreconditionViolated, "(A, R^1/2) is not stabilizable");
    const Matrix& s = params.S_dense();
    Matrix p = stabilizing_start(params);
    require(spectral_abscissa(params.A() - p * s) < 0.0, ErrorCode::SolverFailure, "initial gain is not stabilizing");
    constexpr int kMaxIterations = 200;
    int it = 0;
    for (; it < kMaxIterations; ++it) {
        const Matrix f = params.A() - p * s;
        const Matrix c = params.R_dense() + p * s * p;
        Matrix next = solve_lyapunov(f, c);
        const double change = (next - p).norm();
        p = std::move(next);
        if (change <= 1e-14 * (1.0 + p.norm())) break;
    }
    if (iterations) *iterations = it + 1;
    require(it < kMaxIterations, ErrorCode::SolverFailure, "Newton-Kleinman did not converge");
    require(fixed_point_residual(p, params) <= residual_limit(p), ErrorCode::SolverFailure,
            "Newton-Kleinman residual above tolerance");
    return SymMat::symmetric_part(p);
}

SymMat hamiltonian_schur(const ModelParams& params) {
    const int r = params.dim();
    Matrix h(2 * r, 2 * r);
    h << params.A().transpose(), -params.S_dense(), -params.R_dense(), -params.A();
    Eigen::ComplexSchur<CMatrix> schur(h.cast<std::complex<double>>());
    require(schur.info() == Eigen::Success, ErrorCode::SolverFailure, "complex Schur decomposition failed");
    CMatrix t = schur.matrixT();
    CMatrix u = schur.matrixU();
    const int n = 2 * r;
    const double scale = std::max(1.0, h.norm());
    int stable = 0;
    for (int k = 0; k < n; ++k) {
        const double re = t(k, k).real();
        require(std::abs(re) > 1e-12 * scale, ErrorCode::SolverFailure, "Hamiltonian has eigenvalues on the imaginary axis");
        if (re < 0.0) ++stable;
    }
    require(stable == r, ErrorCode::SolverFailure, "Hamiltonian stable subspace has the wrong dimension");

    // Bubble stable diagonal entries to the leading block with unitary 2×2 swaps.
    bool moved = true;
    while (moved) {
        moved = false;
        for (int k = 0; k + 1 < n; ++k) {
            if (!(t(k, k).real() > 0.0 && t(k + 1, k + 1).real() < 0.0)) continue;
            const std::complex<double> t11 = t(k, k), t12 = t(k, k + 1), t22 = t(k + 1, k + 1);
            Eigen::Vector2cd x(t12, t22 - t11);
            x /= x.norm();
            Eigen::Matrix2cd g;
            g << x(0), -std::conj(x(1)), x(1), std::conj(x(0));
            t.middleRows(k, 2) = (g.adjoint() * t.middleRows(k, 2)).eval();
            t.middleCols(k, 2) = (t.middleCols(k, 2) * g).eval();
            u.middleCols(k, 2) = (u.middleCols(k, 2) * g).eval();
            t(k + 1, k) = 0.0;
            moved = true;
        }
    }
    const CMatrix x1 = u.topLeftCorner(r, r);
    const CMatrix x2 = u.bottomLeftCorner(r, r);
    Eigen::FullPivLU<CMatrix> lu(x1.transpose());
    require(lu.isInvertible(), ErrorCode::SolverFailure, "stable subspace is not a graph");
    const CMatrix p = lu.solve(x2.transpose()).transpose();
    Matrix out = p.real();
    symmetrize(out);
    return SymMat::symmetric_part(out);
}

FixedPointReport solve_fixed_point_report(const ModelParams& params) {
    FixedPointReport rep;
    rep.newton = newton_kleinman(params, &rep.newton_iterations);
    rep.schur = hamiltonian_schur(params);
    rep.agreement = (rep.newton - rep.schur).frobenius_norm();
    rep.residual = fixed_point_residual(rep.newton.dense(), params);
    return rep;
}

SymMat solve_fixed_point(const ModelParams& params) {
    require(params.detectable(), ErrorCode::PreconditionViolated, "(A, S^1/2) is not detectable");
    SymMat p;
    try {
        p = newton_kleinman(params);
    } catch (const Error& e) {
        if (e.code() == ErrorCode::PreconditionViolated) throw;
        p = hamiltonian_schur(params);
    }
    const Matrix pd = p.dense();
    require(fixed_point_residual(pd, params) <= residual_limit(pd), ErrorCode::SolverFailure, "fixed point residual above tolerance");
    require(spectral_abscissa(params.A() - pd * params.S_dense()) < 0.0, ErrorCode::SolverFailure, "fixed point is not stabilizing");
    require(is_psd(p), ErrorCode::SolverFailure, "fixed point is not positive semidefinite");
    return p;
}

namespace {

struct FlowState {
    Matrix p, e;
};

void flow_rhs(const FlowState& x, const ModelParams& params, FlowState& out) {
    drift_theta(x.p, params, out.p);
    out.e = (params.A() - x.p * params.S_dense()) * x.e;
}

void rk4_step(FlowState& x, double h, const ModelParams& params) {
    FlowState k1, k2, k3, k4, tmp;
    flow_rhs(x, params, k1);
    tmp.p = x.p + 0.5 * h * k1.p;
    tmp.e = x.e + 0.5 * h * k1.e;
    flow_rhs(tmp, params, k2);
    tmp.p = x.p + 0.5 * h * k2.p;
    tmp.e = x.e + 0.5 * h * k2.e;
    flow_rhs(tmp, params, k3);
    tmp.p = x.p + h * k3.p;
    tmp.e = x.e + h * k3.e;
    flow_rhs(tmp, params, k4);
    x.p += (h / 6.0) * (k1.p + 2.0 * k2.p + 2.0 * k3.p + k4.p);
    x.e += (h / 6.0) * (k1.e + 2.0 * k2.e + 2.0 * k3.e + k4.e);
    symmetrize(x.p);
}

void check_flow_psd(const Matrix& p) {
    SymEigen eig;
    eig.compute(p);
    const double norm = std::max(std::abs(eig.max_value()), std::abs(eig.min_value()));
    require(eig.min_value() >= -tol_psd(norm), ErrorCode::StepSizeTooLarge, "deterministic flow left the PSD cone; reduce dt");
}

template <class Visit>
void run_det_flow(const SymMat& q0, double T, double dt, const ModelParams& params, Visit&& visit) {
    check_dim(q0, params.dim(), "Q0");
    require(is_psd(q0), ErrorCode::NotPositiveSemidefinite, "Q0 must be positive semidefinite");
    const int steps = step_count(T, dt);
    const double h = steps > 0 ? T / steps : 0.0;
    FlowState x{q0.dense(), Matrix::Identity(params.dim(), params.dim())};
    visit(0, 0.0, x);
    for (int k = 1; k <= steps; ++k) {
        rk4_step(x, h, params);
        check_flow_psd(x.p);
        visit(k, k == steps ? T : k * h, x);
    }
}

}  // namespace

DetFlowPath integrate_det_flow(const SymMat& q0, double T, double dt, const ModelParams& params) {
    DetFlowPath out;
    run_det_flow(q0, T, dt, params, [&](int, double t, const FlowState& x) {
        out.grid.push_back(t);
        out.P.push_back(SymMat::symmetric_part(x.p));
        out.E.push_back(x.e);
    });
    return out;
}

std::pair<SymMat, Matrix> det_flow_endpoint(const SymMat& q0, double T, double dt, const ModelParams& params) {
    std::pair<SymMat, Matrix> out;
    run_det_flow(q0, T, dt, params, [&](int, double, const FlowState& x) {
        out.first = SymMat::symmetric_part(x.p);
        out.second = x.e;
    });
    return out;
}

EulerStepper::EulerStepper(const ModelParams& params, double dt, bool track_semigroup)
    : params_(params), dt_(dt), sqrt_dt_(std::sqrt(dt)), track_(track_semigroup), r_(params.dim()),
      constant_sigma_(params.kappa() == 0) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidArgument, "dt must be positive");
    if (constant_sigma_) sqrt_sigma_ = params.sqrt_R();
}

void EulerStepper::reset(const Matrix& q0) {
    require(q0.rows() == r_ && q0.cols() == r_, ErrorCode::InvalidArgument, "Q0 has the wrong dimension");
    q_ = q0;
    symmetrize(q_);
    eig_q_.compute(q_);
    const double norm = std::max(std::abs(eig_q_.max_value()), std::abs(eig_q_.min_value()));
    require(eig_q_.min_value() >= -tol_psd(norm), ErrorCode::NotPositiveSemidefinite, "Q0 must be positive semidefinite");
    refresh_sqrt_q();
    e_.setIdentity(r_, r_);
    e_log_scale_ = 0.0;
    logdet_ = 0.0;
    t_ = 0.0;
    steps_ = 0;
    floors_ = 0;
    diverged_ = false;
}

void EulerStepper::refresh_sqrt_q() {
    eig_q_.reconstruct([](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; }, sqrt_q_);
}

Matrix EulerStepper::E() const { return e_ * std::exp(e_log_scale_); }

void EulerStepper::step(Rng* rng) {
    if (diverged_) return;
    const Matrix& a = params_.A();
    const Matrix& s = params_.S_dense();

    tmp_.noalias() = a * q_;
    drift_ = tmp_ + tmp_.transpose();
    drift_ += params_.R_dense();
    tmp2_.noalias() = s * q_;
    drift_.noalias() -= q_ * tmp2_;

    gen_ = a - tmp2_.transpose();
    logdet_ += gen_.trace() * dt_;
    if (track_) {
        gen_ *= dt_;
        step_exp_ = gen_.exp();
        tmp_.noalias() = step_exp_ * e_;
        e_ = tmp_;
        const double scale = e_.cwiseAbs().maxCoeff();
        if (scale > 1e64 || (scale < 1e-64 && scale > 0.0)) {
            e_ /= scale;
            e_log_scale_ += std::log(scale);
        }
    }

    const double eps = params_.eps();
    const bool noisy = rng != nullptr && eps > 0.0;
    if (noisy) {
        if (!constant_sigma_) {
            sigma_ = params_.R_dense();
            tmp_ = q_;
            tmp_.diagonal().array() += params_.varpi();
            tmp2_.noalias() = s * tmp_;
            sigma_.noalias() += tmp_ * tmp2_;
            symmetrize(sigma_);
            eig_sigma_.compute(sigma_);
            eig_sigma_.reconstruct([](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; }, sqrt_sigma_);
        }
        noise_.resize(r_, r_);
        for (int j = 0; j < r_; ++j)
            for (int i = 0; i < r_; ++i) noise_(i, j) = sqrt_dt_ * rng->normal();
        tmp_.noalias() = sqrt_q_ * noise_;
        tmp2_.noalias() = tmp_ * sqrt_sigma_;
    }
    q_ += dt_ * drift_;
    if (noisy) q_ += (0.5 * eps) * (tmp2_ + tmp2_.transpose());
    symmetrize(q_);
    t_ += dt_;
    ++steps_;

    eig_q_.compute(q_);
    if (eig_q_.min_value() < 0.0) {
        ++floors_;
        eig_q_.reconstruct([](double l) { return l > 0.0 ? l : 0.0; }, q_);
        symmetrize(q_);
    }
    refresh_sqrt_q();
    const double tr = q_.trace();
    if (!std::isfinite(tr) || tr > blowup_trace) diverged_ = true;
}

VechStepper::VechStepper(const ModelParams& params, double dt)
    : params_(params), dt_(dt), sqrt_dt_(std::sqrt(dt)), r_(params.dim()), rbar_(half_dim(params.dim())) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidArgument, "dt must be positive");
}

void VechStepper::reset(const Matrix& q0) {
    require(q0.rows() == r_ && q0.cols() == r_, ErrorCode::InvalidArgument, "Q0 has the wrong dimension");
    q_ = q0;
    symmetrize(q_);
    require(min_eigenvalue(q_) >= -tol_psd(spectral_norm(q_)), ErrorCode::NotPositiveSemidefinite,
            "Q0 must be positive semidefinite");
    t_ = 0.0;
    floors_ = 0;
    diverged_ = false;
}

void VechStepper::step(Rng* rng) {
    if (diverged_) return;
    drift_theta(q_, params_, drift_);
    qv_ = vech_dense(q_ + dt_ * drift_);
    const double eps = params_.eps();
    if (rng != nullptr && eps > 0.0) {
        sigma_map(q_, params_, sigma_);
        embed_ = sym_tensor_embed(q_, sigma_);
        eig_embed_.compute(embed_);
        eig_embed_.reconstruct([](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; }, root_);
        dv_.resize(rbar_);
        for (int k = 0; k < rbar_; ++k) dv_(k) = sqrt_dt_ * rng->normal();
        qv_.noalias() += eps * (root_ * dv_);
    }
    q_ = unvech_dense(qv_, r_);
    t_ += dt_;
    eig_.compute(q_);
    if (eig_.min_value() < 0.0) {
        ++floors_;
        eig_.reconstruct([](double l) { return l > 0.0 ? l : 0.0; }, q_);
        symmetrize(q_);
    }
    const double tr = q_.trace();
    if (!std::isfinite(tr) || tr > blowup_trace) diverged_ = true;
}

namespace {

RiccatiPath run_matrix_path(const SymMat& q0, int steps, double h, const ModelParams& params, std::uint64_t seed,
                            std::uint64_t index, const SimOptions& options, bool stochastic) {
    EulerStepper stepper(params, h, options.track_semigroup);
    stepper.blowup_trace = options.blowup_trace;
    stepper.reset(q0.dense());
    Rng rng(seed, index, StreamTag::MatrixNoise);
    RiccatiPath path;
    path.seed = seed;
    path.dt = h;
    const int every = std::max(1, options.record_every);
    auto record = [&](double t) {
        path.grid.push_back(t);
        path.Q.push_back(SymMat::symmetric_part(stepper.Q()));
        path.E.push_back(options.track_semigroup ? stepper.E() : Matrix());
        path.logdet_integral.push_back(stepper.logdet_integral());
    };
    record(0.0);
    for (int k = 1; k <= steps; ++k) {
        stepper.step(stochastic ? &rng : nullptr);
        if (stepper.diverged()) {
            path.diverged = true;
            record(k * h);
            break;
        }
        if (k % every == 0 || k == steps) record(k * h);
    }
    path.steps = stepper.steps();
    path.floor_events = stepper.floor_events();
    return path;
}

void check_q0(const SymMat& q0, const ModelParams& params) {
    check_dim(q0, params.dim(), "Q0");
    require(is_psd(q0), ErrorCode::NotPositiveSemidefinite, "Q0 must be positive semidefinite");
}

}  // namespace

RiccatiPath simulate_path(const SymMat& q0, double T, double dt, const ModelParams& params, std::uint64_t seed,
                          std::uint64_t path_index, const SimOptions& options) {
    check_q0(q0, params);
    int steps = step_count(T, dt);
    double h = steps > 0 ? T / steps : dt;
    for (int halving = 0;; ++halving) {
        RiccatiPath path = run_matrix_path(q0, steps, h, params, seed, path_index, options, true);
        path.halvings = halving;
        const double rate = path.steps > 0 ? static_cast<double>(path.floor_events) / path.steps : 0.0;
        if (rate <= options.max_floor_rate || halving >= options.max_halvings || path.diverged) return path;
        steps *= 2;
        h *= 0.5;
    }
}

RiccatiPath deterministic_euler_path(const SymMat& q0, double T, double dt, const ModelParams& params,
                                     const SimOptions& options) {
    check_q0(q0, params);
    const int steps = step_count(T, dt);
    return run_matrix_path(q0, steps, steps > 0 ? T / steps : dt, params, 0, 0, options, false);
}

RiccatiPath simulate_path_vech(const SymMat& q0, double T, double dt, const ModelParams& params, std::uint64_t seed,
                               std::uint64_t path_index, const SimOptions& options) {
    check_q0(q0, params);
    int steps = step_count(T, dt);
    double h = steps > 0 ? T / steps : dt;
    for (int halving = 0;; ++halving) {
        VechStepper stepper(params, h);
        stepper.blowup_trace = options.blowup_trace;
        stepper.reset(q0.dense());
        Rng rng(seed, path_index, StreamTag::VechNoise);
        EulerStepper shadow(params, h, options.track_semigroup);
        RiccatiPath path;
        path.seed = seed;
        path.dt = h;
        path.halvings = halving;
        // E and the trace integral follow the vech state through the same left-point products.
        Matrix e = Matrix::Identity(params.dim(), params.dim());
        double logdet = 0.0;
        const int every = std::max(1, options.record_every);
        auto record = [&](double t) {
            path.grid.push_back(t);
            path.Q.push_back(SymMat::symmetric_part(stepper.Q()));
            path.E.push_back(options.track_semigroup ? e : Matrix());
            path.logdet_integral.push_back(logdet);
        };
        record(0.0);
        for (int k = 1; k <= steps; ++k) {
            const Matrix gen = params.A() - stepper.Q() * params.S_dense();
            logdet += gen.trace() * h;
            if (options.track_semigroup) e = (gen * h).exp() * e;
            stepper.step(&rng);
            if (stepper.diverged()) {
                path.diverged = true;
                record(k * h);
                break;
            }
            if (k % every == 0 || k == steps) record(k * h);
        }
        path.steps = static_cast<long>(path.grid.size() > 1 ? std::lround(path.grid.back() / h) : 0);
        path.floor_events = stepper.floor_events();
        const double rate = path.steps > 0 ? static_cast<double>(path.floor_events) / path.steps : 0.0;
        if (rate <= options.max_floor_rate || halving >= options.max_halvings || path.diverged) return path;
        steps *= 2;
        h *= 0.5;
    }
}

SnapshotPath simulate_snapshots(const SymMat& q0, const std::vector<double>& times, double dt, const ModelParams& params,
                                std::uint64_t seed, std::uint64_t path_index, const SimOptions& options, Scheme scheme) {
    check_q0(q0, params);
    require(std::is_sorted(times.begin(), times.end()) && (times.empty() || times.front() >= 0.0),
            ErrorCode::InvalidArgument, "snapshot times must be sorted and non-negative");
    require(dt > 0.0, ErrorCode::InvalidArgument, "dt must be positive");
    double h = dt;
    for (int halving = 0;; ++halving) {
        std::vector<long> marks;
        for (double t : times) {
            const double ratio = t / h;
            const double nearest = std::round(ratio);
            require(std::abs(ratio - nearest) <= 1e-6 * std::max(1.0, ratio), ErrorCode::InvalidArgument,
                    "snapshot times must be multiples of dt");
            marks.push_back(static_cast<long>(nearest));
        }
        SnapshotPath out;
        out.halvings = halving;
        out.at.resize(times.size());
        const Matrix q0d = q0.dense();
        if (scheme == Scheme::Matrix) {
            EulerStepper stepper(params, h, options.track_semigroup);
            stepper.blowup_trace = options.blowup_trace;
            stepper.reset(q0d);
            Rng rng(seed, path_index, StreamTag::MatrixNoise);
            long k = 0;
            for (std::size_t m = 0; m < marks.size(); ++m) {
                while (k < marks[m] && !stepper.diverged()) {
                    stepper.step(&rng);
                    ++k;
                }
                if (stepper.diverged()) {
                    out.diverged = true;
                    break;
                }
                Snapshot& snap = out.at[m];
                snap.Q = stepper.Q();
                snap.logdet_integral = stepper.logdet_integral();
                if (options.track_semigroup) {
                    snap.log_norm_E = std::log(spectral_norm(stepper.E_unit())) + stepper.E_log_scale();
                    snap.log_det_E = std::log(std::abs(stepper.E_unit().determinant())) + params.dim() * stepper.E_log_scale();
                }
            }
            out.steps = stepper.steps();
            out.floor_events = stepper.floor_events();
        } else {
            VechStepper stepper(params, h);
            stepper.blowup_trace = options.blowup_trace;
            stepper.reset(q0d);
            Rng rng(seed, path_index, StreamTag::VechNoise);
            long k = 0;
            double logdet = 0.0;
            for (std::size_t m = 0; m < marks.size(); ++m) {
                while (k < marks[m] && !stepper.diverged()) {
                    logdet += (params.A() - stepper.Q() * params.S_dense()).trace() * h;
                    stepper.step(&rng);
                    ++k;
                }
                if (stepper.diverged()) {
                    out.diverged = true;
                    break;
                }
                out.at[m].Q = stepper.Q();
                out.at[m].logdet_integral = logdet;
            }
            out.steps = k;
            out.floor_events = stepper.floor_events();
        }
        const double rate = out.steps > 0 ? static_cast<double>(out.floor_events) / out.steps : 0.0;
        if (rate <= options.max_floor_rate || halving >= options.max_halvings || out.diverged) return out;
        h *= 0.5;
    }
}

namespace {

struct InverseTerms {
    Matrix q, sigma, sigma_minus;
};

// Q = Y⁻¹, Σ(Q) and Σ_−(Y) = Y·Σ(Q)·Y for SPD Y.
bool inverse_terms(const Matrix& y, const ModelParams& params, SymEigen& eig, InverseTerms& out) {
    eig.compute(y);
    if (!(eig.min_value() > 0.0)) return false;
    eig.reconstruct([](double l) { return 1.0 / l; }, out.q);
    symmetrize(out.q);
    sigma_map(out.q, params, out.sigma);
    out.sigma_minus = y * out.sigma * y;
    symmetrize(out.sigma_minus);
    return true;
}

Matrix exact_inverse_drift(const Matrix& y, const ModelParams& params, const InverseTerms& terms) {
    const int r = params.dim();
    const double e2 = params.eps() * params.eps();
    const Matrix ya = y * params.A();
    Matrix out = -ya - ya.transpose() + params.S_dense() - y * params.R_dense() * y;
    out += (e2 / 4.0) * (r + 2.0) * terms.sigma_minus;
    out += (e2 / 4.0) * (y * terms.sigma).trace() * y;
    symmetrize(out);
    return out;
}

}  // namespace

SymMat inverse_drift_exact(const SymMat& y, const ModelParams& params) {
    check_dim(y, params.dim(), "Y");
    SymEigen eig;
    InverseTerms terms;
    const Matrix yd = y.dense();
    require(inverse_terms(yd, params, eig, terms), ErrorCode::NotPositiveSemidefinite, "inverse drift requires Y positive definite");
    return SymMat::symmetric_part(exact_inverse_drift(yd, params, terms));
}

SymMat inverse_drift_bound(const SymMat& y, const ModelParams& params) {
    check_dim(y, params.dim(), "Y");
    const int r = params.dim();
    const double e2 = params.eps() * params.eps();
    const Matrix yd = y.dense();
    const Matrix u = params.U().dense();
    const Matrix v = params.V().dense();
    const Matrix r_minus = params.R_dense() - (e2 / 4.0) * (r + 2.0) * u;
    const Matrix s_minus = params.S_dense() + (e2 / 4.0) * (r + 2.0) * v;
    const Matrix ya = yd * params.A();
    const Matrix yinv = inverse_spd(y).dense();
    Matrix out = -ya - ya.transpose() + s_minus - yd * r_minus * yd;
    out += (e2 / 4.0) * ((yd * u).trace() + (v * yinv).trace()) * yd;
    symmetrize(out);
    return SymMat::symmetric_part(out);
}

namespace {

template <class Visit>
bool run_inverse(const SymMat& q0, long steps, double h, const ModelParams& params, std::uint64_t seed,
                 std::uint64_t index, Visit&& visit) {
    check_dim(q0, params.dim(), "Q0");
    const int r = params.dim();
    Matrix y = inverse_spd(q0).dense();
    Rng rng(seed, index, StreamTag::InverseNoise);
    SymEigen eig, eig_sigma;
    InverseTerms terms;
    Matrix sqrt_y, sqrt_sm, noise(r, r), tmp;
    const double eps = params.eps();
    const double sqrt_h = std::sqrt(h);
    visit(0, y);
    for (long k = 1; k <= steps; ++k) {
        if (!inverse_terms(y, params, eig, terms)) return false;
        eig.reconstruct([](double l) { return std::sqrt(l); }, sqrt_y);
        const Matrix drift = exact_inverse_drift(y, params, terms);
        y += h * drift;
        if (eps > 0.0) {
            eig_sigma.compute(terms.sigma_minus);
            eig_sigma.reconstruct([](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; }, sqrt_sm);
            for (int j = 0; j < r; ++j)
                for (int i = 0; i < r; ++i) noise(i, j) = sqrt_h * rng.normal();
            tmp = sqrt_y * noise * sqrt_sm;
            y += (0.5 * eps) * (tmp + tmp.transpose());
        }
        symmetrize(y);
        if (!y.allFinite() || !(min_eigenvalue(y) > 0.0)) return false;
        visit(k, y);
    }
    return true;
}

}  // namespace

InversePath simulate_inverse_path(const SymMat& q0, double T, double dt, const ModelParams& params, std::uint64_t seed,
                                  std::uint64_t path_index, int record_every) {
    const long steps = step_count(T, dt);
    const double h = steps > 0 ? T / steps : dt;
    InversePath out;
    const int every = std::max(1, record_every);
    const bool ok = run_inverse(q0, steps, h, params, seed, path_index, [&](long k, const Matrix& y) {
        if (k % every == 0 || k == steps) {
            out.grid.push_back(k * h);
            out.Y.push_back(SymMat::symmetric_part(y));
        }
    });
    out.diverged = !ok;
    return out;
}

std::vector<Matrix> simulate_inverse_snapshots(const SymMat& q0, const std::vector<double>& times, double dt,
                                               const ModelParams& params, std::uint64_t seed, std::uint64_t path_index,
                                               bool* diverged) {
    require(std::is_sorted(times.begin(), times.end()), ErrorCode::InvalidArgument, "snapshot times must be sorted");
    std::vector<long> marks;
    for (double t : times) marks.push_back(std::lround(t / dt));
    std::vector<Matrix> out(times.size());
    const long steps = marks.empty() ? 0 : marks.back();
    std::size_t m = 0;
    const bool ok = run_inverse(q0, steps, dt, params, seed, path_index, [&](long k, const Matrix& y) {
        while (m < marks.size() && marks[m] == k) out[m++] = y;
    });
    if (diverged) *diverged = !ok;
    if (!ok)
        for (std::size_t j = m; j < out.size(); ++j) out[j].resize(0, 0);
    return out;
}

SymMat comparison_upper_bound(const SymMat& phi_s1, const SymMat& q2, double s, double t, const ModelParams& params,
                              double dt) {
    require(s >= 0.0 && s <= t, ErrorCode::InvalidArgument, "comparison bound requires 0 <= s <= t");
    check_dim(phi_s1, params.dim(), "phi_s(Q1)");
    const auto at_s = det_flow_endpoint(q2, s, dt, params);
    const auto at_t = det_flow_endpoint(at_s.first, t - s, dt, params);
    const Matrix& e = at_t.second;
    Matrix out = at_t.first.dense() + e * (phi_s1 - at_s.first).dense() * e.transpose();
    symmetrize(out);
    return SymMat::symmetric_part(out);
}

namespace {

double scalar_riccati_rk4(double p0, double a, double r, double s, double t) {
    if (t <= 0.0) return p0;
    const int steps = std::max(1, static_cast<int>(std::ceil(t / 1e-3)));
    const double h = t / steps;
    auto f = [&](double p) { return 2.0 * a * p + r - s * p * p; };
    double p = p0;
    for (int k = 0; k < steps; ++k) {
        const double k1 = f(p);
        const double k2 = f(p + 0.5 * h * k1);
        const double k3 = f(p + 0.5 * h * k2);
        const double k4 = f(p + h * k3);
        p += (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    }
    return p;
}

double scalar_fixed_point(double a, double r, double s) { return (a + std::sqrt(a * a + r * s)) / s; }

}  // namespace

TraceBound trace_moment_bound(const ModelParams& params, int n, double t, const SymMat& q0) {
    require(n >= 1, ErrorCode::InvalidArgument, "moment order n must be at least 1");
    require(t >= 0.0, ErrorCode::InvalidArgument, "t must be non-negative");
    check_q0(q0, params);
    const int r = params.dim();
    const double e2 = params.eps() * params.eps();
    const double lu = eigen_sym(params.U()).eigenvalues(0);
    const double lv = eigen_sym(params.V()).eigenvalues(0);
    TraceBound out;
    out.a = log_norm(params.A());
    out.r = params.R().trace() + 0.5 * e2 * (n - 1) * lu;
    out.s = eigen_sym(params.S()).eigenvalues(r - 1) / r - 0.5 * e2 * (n - 1) * lv;
    require(out.s > 0.0, ErrorCode::ThresholdExceeded, "trace bound needs a positive quadratic coefficient; eps too large");
    out.value = scalar_riccati_rk4(q0.trace(), out.a, out.r, out.s, t);
    out.stationary_cap = std::max(scalar_fixed_point(out.a, out.r, out.s), q0.trace());
    return out;
}

double inverse_trace_bound(const ModelParams& params, int n, const SymMat& q0) {
    require(n >= 1, ErrorCode::InvalidArgument, "moment order n must be at least 1");
    check_q0(q0, params);
    const int r = params.dim();
    const double e2 = params.eps() * params.eps();
    const double lu = eigen_sym(params.U()).eigenvalues(0);
    const double lv = eigen_sym(params.V()).eigenvalues(0);
    const Matrix a_sym = 0.5 * (params.A() + params.A().transpose());
    const double a_minus = -min_eigenvalue(a_sym);
    const double s_minus = eigen_sym(params.R()).eigenvalues(r - 1) / r - 0.5 * e2 * ((n + 1.0 / r) * lu + lv / 4.0);
    require(s_minus > 0.0, ErrorCode::ThresholdExceeded, "inverse trace bound needs a positive quadratic coefficient");
    const TraceBound fwd = trace_moment_bound(params, 2 * n, 0.0, q0);
    const double p2n = scalar_fixed_point(fwd.a, fwd.r, fwd.s);
    const double trq = q0.trace();
    const double r_minus = params.S().trace() +
                           0.5 * e2 * ((1.0 + r / 2.0) * params.V().trace() + (n - 1) * lv + (lv / 4.0) * std::max(p2n * p2n, trq * trq));
    return std::max(scalar_fixed_point(a_minus, r_minus, s_minus), inverse_spd(q0).trace());
}

Vector simulate_error_process(const ModelParams& cov, const Matrix& a_err, double eps_bar, const Vector& x0,
                              const SymMat& q0, double T, double dt, std::uint64_t seed, std::uint64_t path_index) {
    const int r = cov.dim();
    require(a_err.rows() == r && a_err.cols() == r && x0.size() == r, ErrorCode::InvalidArgument, "error process dimension mismatch");
    const long steps = step_count(T, dt);
    const double h = steps > 0 ? T / steps : dt;
    EulerStepper stepper(cov, h, false);
    stepper.reset(q0.dense());
    Rng rng_q(seed, path_index, StreamTag::MatrixNoise);
    Rng rng_x(seed, path_index, StreamTag::ErrorProcess);
    const ModelParams full = cov.with_kappa(1);
    Vector x = x0, dw(r);
    Matrix s1, sk, root;
    SymEigen eig;
    const double sqrt_h = std::sqrt(h);
    for (long k = 0; k < steps; ++k) {
        const Matrix& q = stepper.Q();
        sigma_map(q, full, s1);
        sigma_map(q, cov, sk);
        const Matrix total = s1 + eps_bar * eps_bar * sk;
        eig.compute(total);
        eig.reconstruct([](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; }, root);
        for (int i = 0; i < r; ++i) dw(i) = sqrt_h * rng_x.normal();
        const Vector drift = (a_err - q * cov.S_dense()) * x;
        x += h * drift + root * dw;
        stepper.step(&rng_q);
        require(!stepper.diverged(), ErrorCode::PathDiverged, "covariance path diverged in error process");
    }
    return x;
}

}  // namespace riccdiff
