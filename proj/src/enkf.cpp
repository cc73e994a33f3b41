#include "riccdiff/enkf.hpp"

#include "riccdiff/error.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>

namespace riccdiff {

namespace {

long grid_steps(double T, double dt) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidArgument, "dt must be positive");
    require(T >= 0.0 && std::isfinite(T), ErrorCode::InvalidArgument, "T must be non-negative");
    const double ratio = T / dt;
    const double nearest = std::round(ratio);
    require(std::abs(ratio - nearest) <= 1e-9 * std::max(1.0, ratio), ErrorCode::InvalidArgument,
            "times must be multiples of dt");
    return static_cast<long>(nearest);
}

void fill_normal(Matrix& m, Rng& rng, double scale) {
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = scale * rng.normal();
}

}  // namespace

FilterModel::FilterModel(Matrix a, Matrix b, SymMat r1, SymMat r2)
    : a_(std::move(a)), b_(std::move(b)), r1_(std::move(r1)), r2_(std::move(r2)) {
    require(a_.rows() == a_.cols() && a_.rows() >= 1, ErrorCode::InvalidArgument, "A must be a non-empty square matrix");
    require(b_.cols() == a_.rows() && b_.rows() >= 1, ErrorCode::InvalidArgument, "B must have as many columns as A");
    require(r1_.dim() == dim(), ErrorCode::InvalidArgument, "R1 has the wrong dimension");
    require(r2_.dim() == obs_dim(), ErrorCode::InvalidArgument, "R2 has the wrong dimension");
    require(a_.allFinite() && b_.allFinite(), ErrorCode::InvalidArgument, "A and B must be finite");
    require(is_psd(r1_), ErrorCode::NotPositiveSemidefinite, "R1 must be positive semidefinite");
    const auto d2 = eigen_sym(r2_);
    require(d2.eigenvalues(d2.eigenvalues.size() - 1) > tol_psd(d2.eigenvalues(0)), ErrorCode::NotPositiveSemidefinite,
            "R2 must be positive definite");
    const Matrix r2_inv = inverse_spd(r2_).dense();
    gain_base_ = b_.transpose() * r2_inv;
    s_ = SymMat::symmetric_part(gain_base_ * b_);
    sqrt_r1_ = sqrt_psd(r1_.dense());
    sqrt_r2_ = sqrt_psd(r2_.dense());
}

ModelParams FilterModel::kalman_params() const { return ModelParams(a_, r1_, s_, 0, 0.0, 0.0); }

TruthSimulator::TruthSimulator(const FilterModel& model, double dt) : model_(model), dt_(dt) {
    require(dt > 0.0 && std::isfinite(dt), ErrorCode::InvalidArgument, "dt must be positive");
    const int r = model.dim();
    // Van Loan: exp([[-A, R1], [0, Aᵀ]]·dt) = [[·, G12], [0, G22]], transition G22ᵀ, covariance G22ᵀ·G12.
    Matrix block = Matrix::Zero(2 * r, 2 * r);
    block.topLeftCorner(r, r) = -model.A();
    block.topRightCorner(r, r) = model.R1().dense();
    block.bottomRightCorner(r, r) = model.A().transpose();
    const Matrix ex = (block * dt).exp();
    transition_ = ex.bottomRightCorner(r, r).transpose();
    Matrix cov = transition_ * ex.topRightCorner(r, r);
    symmetrize(cov);
    SymEigen eig;
    eig.compute(cov);
    eig.reconstruct([](double l) { return l > 0.0 ? std::sqrt(l) : 0.0; }, noise_root_);
    x_ = Vector::Zero(r);
    w_.resize(r);
    v_.resize(model.obs_dim());
}

const Vector& TruthSimulator::step(Rng& rng) {
    for (Eigen::Index i = 0; i < v_.size(); ++i) v_(i) = rng.normal();
    for (Eigen::Index i = 0; i < w_.size(); ++i) w_(i) = rng.normal();
    dy_ = model_.B() * x_ * dt_ + std::sqrt(dt_) * (model_.sqrt_R2() * v_);
    x_ = transition_ * x_ + noise_root_ * w_;
    return dy_;
}

TruthPath simulate_truth(const FilterModel& model, const Vector& x0, double T, double dt, std::uint64_t seed,
                         std::uint64_t path_index) {
    require(x0.size() == model.dim(), ErrorCode::InvalidArgument, "x0 has the wrong dimension");
    const long steps = grid_steps(T, dt);
    TruthSimulator sim(model, dt);
    sim.reset(x0);
    Rng rng(seed, path_index, StreamTag::Signal);
    TruthPath out;
    out.grid.reserve(steps + 1);
    out.X.reserve(steps + 1);
    out.dY.reserve(steps);
    out.grid.push_back(0.0);
    out.X.push_back(x0);
    for (long k = 1; k <= steps; ++k) {
        out.dY.push_back(sim.step(rng));
        out.grid.push_back(k * dt);
        out.X.push_back(sim.state());
    }
    return out;
}

KalmanPath kalman_bucy(const FilterModel& model, const std::vector<Vector>& dY, const Vector& m0, const SymMat& p0, double dt) {
    require(m0.size() == model.dim(), ErrorCode::InvalidArgument, "m0 has the wrong dimension");
    const ModelParams params = model.kalman_params();
    const double T = dt * static_cast<double>(dY.size());
    const DetFlowPath flow = integrate_det_flow(p0, T, dt, params);
    require(flow.P.size() == dY.size() + 1, ErrorCode::SolverFailure, "covariance grid does not match the observations");
    KalmanPath out;
    out.grid = flow.grid;
    out.P = flow.P;
    out.mean.reserve(dY.size() + 1);
    out.mean.push_back(m0);
    Vector m = m0;
    const Matrix& s = params.S_dense();
    for (std::size_t k = 0; k < dY.size(); ++k) {
        require(dY[k].size() == model.obs_dim(), ErrorCode::InvalidArgument, "observation increment has the wrong dimension");
        const Matrix p = flow.P[k].dense();
        m += (model.A() - p * s) * m * dt + p * model.gain_base() * dY[k];
        out.mean.push_back(m);
    }
    return out;
}

Ensemble::Ensemble(Matrix particles, EnkfType type, double varpi) : particles_(std::move(particles)), type_(type), varpi_(varpi) {
    require(particles_.cols() >= 2 && particles_.rows() >= 1, ErrorCode::InvalidArgument, "an ensemble needs N ≥ 1");
    require(varpi_ >= 0.0 && std::isfinite(varpi_), ErrorCode::InvalidArgument, "varpi must be non-negative");
    require(type_ == EnkfType::PerturbedObservation || type_ == EnkfType::Midpoint, ErrorCode::InvalidArgument,
            "unknown EnKF type");
}

Ensemble Ensemble::sample(const Vector& m0, const SymMat& p0, int N, EnkfType type, double varpi, Rng& rng) {
    require(N >= 1, ErrorCode::InvalidArgument, "N must be at least 1");
    require(p0.dim() == m0.size(), ErrorCode::InvalidArgument, "P0 has the wrong dimension");
    const Matrix root = sqrt_psd(p0.dense());
    Matrix z(m0.size(), N + 1);
    fill_normal(z, rng, 1.0);
    Matrix x = root * z;
    x.colwise() += m0;
    return Ensemble(std::move(x), type, varpi);
}

Ensemble Ensemble::moment_matched(const Vector& m0, const SymMat& p0, int N, EnkfType type, double varpi, Rng& rng) {
    const int r = static_cast<int>(m0.size());
    require(N >= r, ErrorCode::InvalidArgument, "moment matching needs N ≥ r");
    require(p0.dim() == r, ErrorCode::InvalidArgument, "P0 has the wrong dimension");
    const Matrix root = sqrt_psd(p0.dense());
    Matrix z(r, N + 1);
    for (int attempt = 0;; ++attempt) {
        fill_normal(z, rng, 1.0);
        z.colwise() -= z.rowwise().mean();
        const Matrix c = z * z.transpose() / N;
        Eigen::LLT<Matrix> llt(c);
        if (llt.info() == Eigen::Success && llt.matrixL().toDenseMatrix().diagonal().minCoeff() > 1e-8) {
            z = llt.matrixL().solve(z);
            break;
        }
        require(attempt < 100, ErrorCode::SolverFailure, "could not draw a non-degenerate ensemble");
    }
    Matrix x = root * z;
    x.colwise() += m0;
    return Ensemble(std::move(x), type, varpi);
}

SampleStats sample_stats(const Ensemble& ens) {
    const Matrix& x = ens.particles();
    SampleStats out;
    out.mean = x.rowwise().mean();
    const Matrix d = x.colwise() - out.mean;
    out.cov = SymMat::symmetric_part(d * d.transpose() / ens.N());
    return out;
}

void enkf_step(Ensemble& ens, const Vector& dY, const FilterModel& model, double dt, Rng& rng) {
    require(ens.dim() == model.dim(), ErrorCode::InvalidArgument, "ensemble and model dimensions differ");
    require(dY.size() == model.obs_dim(), ErrorCode::InvalidArgument, "observation increment has the wrong dimension");
    require(dt > 0.0, ErrorCode::InvalidArgument, "dt must be positive");
    const int r = ens.dim();
    const Eigen::Index cols = ens.particles().cols();
    const SampleStats st = sample_stats(ens);
    Matrix p = st.cov.dense();
    p.diagonal().array() += ens.varpi();
    const Matrix gain = p * model.gain_base();
    const double sqrt_dt = std::sqrt(dt);

    Matrix& x = ens.particles();
    Matrix dw(r, cols);
    fill_normal(dw, rng, sqrt_dt);
    Matrix innovation;
    if (ens.type() == EnkfType::PerturbedObservation) {
        Matrix dv(model.obs_dim(), cols);
        fill_normal(dv, rng, sqrt_dt);
        innovation = -(model.B() * x) * dt - model.sqrt_R2() * dv;
    } else {
        Matrix mid = x;
        mid.colwise() += st.mean;
        innovation = -(model.B() * mid) * (0.5 * dt);
    }
    innovation.colwise() += dY;
    x += (model.A() * x) * dt + model.sqrt_R1() * dw + gain * innovation;
}

ModelParams riccati_equivalent(const FilterModel& model, EnkfType type, double varpi, int N) {
    require(N >= 1, ErrorCode::InvalidArgument, "N must be at least 1");
    const double eps = 2.0 / std::sqrt(static_cast<double>(N));
    const Matrix s = model.S().dense();
    if (type == EnkfType::PerturbedObservation) return ModelParams(model.A() - varpi * s, model.R1(), model.S(), 1, varpi, eps);
    return ModelParams(model.A() - 0.5 * varpi * s, model.R1(), model.S(), 0, varpi, eps);
}

SymMat type1_covariance_drift(const SymMat& p, const FilterModel& model, double varpi) {
    require(p.dim() == model.dim(), ErrorCode::InvalidArgument, "P has the wrong dimension");
    const Matrix pd = p.dense();
    const Matrix s = model.S().dense();
    const Matrix ap = model.A() * pd;
    return SymMat::symmetric_part(ap + ap.transpose() + model.R1().dense() + varpi * varpi * s - pd * s * pd);
}

Matrix error_drift_matrix(const FilterModel& model, double varpi) { return model.A() - varpi * model.S().dense(); }

std::vector<FilterSnapshot> run_filter(const FilterModel& model, const FilterRunSpec& spec, const std::vector<double>& times,
                                       std::uint64_t seed, std::uint64_t run_index) {
    const int r = model.dim();
    require(spec.m0.size() == r && spec.x0.size() == r && spec.p0.dim() == r, ErrorCode::InvalidArgument,
            "filter initial conditions have the wrong dimension");
    require(std::is_sorted(times.begin(), times.end()), ErrorCode::InvalidArgument, "times must be sorted");
    Rng rng_init(seed, run_index, StreamTag::Initial);
    Rng rng_ens(seed, run_index, StreamTag::Ensemble);
    Rng rng_sig(seed, run_index, StreamTag::Signal);
    Ensemble ens = spec.moment_matched ? Ensemble::moment_matched(spec.m0, spec.p0, spec.N, spec.type, spec.varpi, rng_init)
                                       : Ensemble::sample(spec.m0, spec.p0, spec.N, spec.type, spec.varpi, rng_init);
    TruthSimulator truth(model, spec.dt);
    truth.reset(spec.x0);
    std::vector<FilterSnapshot> out;
    out.reserve(times.size());
    long done = 0;
    for (double t : times) {
        const long target = grid_steps(t, spec.dt);
        for (; done < target; ++done) {
            const Vector dy = truth.step(rng_sig);
            enkf_step(ens, dy, model, spec.dt, rng_ens);
        }
        const SampleStats st = sample_stats(ens);
        out.push_back({st.cov, st.mean, truth.state()});
    }
    return out;
}

}  // namespace riccdiff
