#include "riccdiff/dyson.hpp"

#include "riccdiff/error.hpp"
#include "riccdiff/parallel.hpp"
#include "riccdiff/rng.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <string>

namespace riccdiff {

double repulsion(const Vector& lambda, int i, const IsotropicParams& p, double eps) {
    double sum = 0.0;
    const double li = lambda(i);
    for (Eigen::Index j = 0; j < lambda.size(); ++j) {
        if (j == i) continue;
        const double lj = lambda(j);
        sum += (li * p.sigma(lj) + lj * p.sigma(li)) / (li - lj);
    }
    return 0.25 * eps * eps * sum;
}

Vector isotropic_drift(const Vector& lambda, const IsotropicParams& p, double eps) {
    Vector out(lambda.size());
    for (Eigen::Index i = 0; i < lambda.size(); ++i) out(i) = p.theta(lambda(i)) + repulsion(lambda, static_cast<int>(i), p, eps);
    return out;
}

namespace {

bool ordered_positive(const Vector& l) {
    for (Eigen::Index i = 0; i < l.size(); ++i) {
        if (!std::isfinite(l(i)) || l(i) <= 0.0) return false;
        if (i > 0 && !(l(i - 1) > l(i))) return false;
    }
    return true;
}

constexpr int kMaxHalvings = 24;
constexpr int kMaxNewton = 100;

// Minimises ½‖x − b‖² − h·Σ_{i<j} c_ij·log(x_i − x_j) over the ordered cone, starting from the ordered point x.
// The minimiser solves x = b + h·rep(x) with the pair weights c frozen, so ordering survives every step.
void implicit_repulsion(Vector& x, const Vector& b, const Matrix& c, double h) {
    const Eigen::Index r = x.size();
    auto objective = [&](const Vector& y) {
        double f = 0.5 * (y - b).squaredNorm();
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = i + 1; j < r; ++j) f -= h * c(i, j) * std::log(y(i) - y(j));
        return f;
    };
    Vector grad(r), y(r);
    Matrix hess(r, r);
    double f = objective(x);
    for (int it = 0; it < kMaxNewton; ++it) {
        grad = x - b;
        hess.setIdentity();
        for (Eigen::Index i = 0; i < r; ++i)
            for (Eigen::Index j = i + 1; j < r; ++j) {
                const double d = x(i) - x(j);
                const double g = h * c(i, j) / d;
                const double k = g / d;
                grad(i) -= g;
                grad(j) += g;
                hess(i, i) += k;
                hess(j, j) += k;
                hess(i, j) -= k;
                hess(j, i) -= k;
            }
        const Vector step = hess.ldlt().solve(grad);
        if (step.lpNorm<Eigen::Infinity>() <= 1e-15 * (1.0 + x.lpNorm<Eigen::Infinity>())) return;
        double alpha = 1.0;
        for (;;) {
            y = x - alpha * step;
            bool ordered = true;
            for (Eigen::Index i = 1; i < r; ++i) ordered = ordered && y(i - 1) > y(i);
            if (ordered) {
                const double fy = objective(y);
                if (fy <= f) {
                    f = fy;
                    break;
                }
            }
            alpha *= 0.5;
            if (alpha < 1e-30) return;  // no further decrease at machine precision
        }
        x = y;
    }
}

// One step of size h driven by the Brownian increment dw, with the repulsion drift-implicit; steps that lose
// positivity are refined along a Brownian bridge.
void advance(Vector& lambda, double h, const Vector& dw, int depth, const IsotropicParams& p, double eps, Rng& rng,
             long& collisions) {
    const Eigen::Index r = lambda.size();
    Vector base(r);
    for (Eigen::Index i = 0; i < r; ++i)
        base(i) = lambda(i) + h * p.theta(lambda(i)) + eps * std::sqrt(std::max(lambda(i) * p.sigma(lambda(i)), 0.0)) * dw(i);
    Matrix weights = Matrix::Zero(r, r);
    for (Eigen::Index i = 0; i < r; ++i)
        for (Eigen::Index j = i + 1; j < r; ++j)
            weights(i, j) = 0.25 * eps * eps * (lambda(i) * p.sigma(lambda(j)) + lambda(j) * p.sigma(lambda(i)));
    Vector proposal = lambda;
    if (r == 1 || eps == 0.0)
        proposal = base;
    else
        implicit_repulsion(proposal, base, weights, h);
    if (ordered_positive(proposal)) {
        lambda = proposal;
        return;
    }
    if (depth >= kMaxHalvings)
        fail(ErrorCode::CollisionFailure, "eigenvalue step rejected after " + std::to_string(kMaxHalvings) + " halvings");
    ++collisions;
    Vector first(dw.size());
    const double bridge = std::sqrt(h / 4.0);
    for (Eigen::Index i = 0; i < dw.size(); ++i) first(i) = 0.5 * dw(i) + bridge * rng.normal();
    const Vector second = dw - first;
    advance(lambda, 0.5 * h, first, depth + 1, p, eps, rng, collisions);
    advance(lambda, 0.5 * h, second, depth + 1, p, eps, rng, collisions);
}

}  // namespace

EigenPath simulate_isotropic_eigenvalues(const IsotropicParams& p, int r, double eps, double T, double dt,
                                         std::uint64_t seed, const Vector& initial, std::uint64_t path_index,
                                         int record_every) {
    require(p.ss > 0.0 && p.rr > 0.0, ErrorCode::InvalidArgument, "isotropic model needs ss > 0 and rr > 0");
    require(p.uu >= 0.0 && p.vv >= 0.0, ErrorCode::InvalidArgument, "diffusion coefficients must be non-negative");
    require(r >= 1 && initial.size() == r, ErrorCode::InvalidArgument, "initial spectrum must have r entries");
    require(ordered_positive(initial), ErrorCode::InvalidArgument, "initial spectrum must be strictly decreasing and positive");
    require(eps >= 0.0 && eps <= 2.0 / std::sqrt(r + 1.0) + 1e-15, ErrorCode::PreconditionViolated,
            "eps exceeds 2/sqrt(r+1)");
    require(dt > 0.0 && T >= 0.0, ErrorCode::InvalidArgument, "need dt > 0 and T >= 0");
    const long steps = T == 0.0 ? 0 : std::max(1L, std::lround(std::ceil(T / dt - 1e-9)));
    const double h = steps > 0 ? T / steps : dt;
    const double sqrt_h = std::sqrt(h);
    Rng rng(seed, path_index, StreamTag::Eigenvalue);
    EigenPath path;
    Vector lambda = initial;
    Vector dw(r);
    const int every = std::max(1, record_every);
    path.grid.push_back(0.0);
    path.lambdas.push_back(lambda);
    for (long k = 1; k <= steps; ++k) {
        for (int i = 0; i < r; ++i) dw(i) = sqrt_h * rng.normal();
        advance(lambda, h, dw, 0, p, eps, rng, path.collision_events);
        if (k % every == 0 || k == steps) {
            path.grid.push_back(k * h);
            path.lambdas.push_back(lambda);
        }
    }
    return path;
}

void DriftRegressionData::add(double theoretical, double observed) {
    x_.push_back(theoretical);
    y_.push_back(observed);
}

void DriftRegressionData::merge(const DriftRegressionData& other) {
    x_.insert(x_.end(), other.x_.begin(), other.x_.end());
    y_.insert(y_.end(), other.y_.begin(), other.y_.end());
    skipped_ += other.skipped_;
}

DriftRegression DriftRegressionData::fit() const {
    const std::size_t n = x_.size();
    require(n >= 10, ErrorCode::InsufficientData, "too few non-degenerate samples for the drift regression");
    double mx = 0.0, my = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        mx += x_[k];
        my += y_[k];
    }
    mx /= n;
    my /= n;
    double sxx = 0.0, sxy = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        sxx += (x_[k] - mx) * (x_[k] - mx);
        sxy += (x_[k] - mx) * (y_[k] - my);
    }
    require(sxx > 0.0, ErrorCode::InsufficientData, "theoretical drift has no spread");
    DriftRegression out;
    out.slope = sxy / sxx;
    out.intercept = my - out.slope * mx;
    double meat_slope = 0.0, meat_mean = 0.0;
    for (std::size_t k = 0; k < n; ++k) {
        const double e = y_[k] - out.intercept - out.slope * x_[k];
        meat_slope += (x_[k] - mx) * (x_[k] - mx) * e * e;
        meat_mean += e * e;
    }
    out.slope_se = std::sqrt(meat_slope) / sxx;
    out.intercept_se = std::sqrt(meat_mean / (static_cast<double>(n) * n) + mx * mx * out.slope_se * out.slope_se);
    out.samples = static_cast<long>(n);
    out.skipped = skipped_;
    return out;
}

Vector dyson_drift(const Matrix& q, const ModelParams& params, const SpectralDecomp& decomp) {
    const int r = params.dim();
    Matrix theta, sigma;
    drift_theta(q, params, theta);
    sigma_map(q, params, sigma);
    const Vector& l = decomp.eigenvalues;
    Vector sig_proj(r), out(r);
    for (int i = 0; i < r; ++i) {
        const auto v = decomp.eigenvectors.col(i);
        sig_proj(i) = v.dot(sigma * v);
        out(i) = v.dot(theta * v);
    }
    const double e2 = params.eps() * params.eps();
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < r; ++j) {
            if (j == i) continue;
            out(i) += 0.25 * e2 * (l(i) * sig_proj(j) + l(j) * sig_proj(i)) / (l(i) - l(j));
        }
    return out;
}

void accumulate_eigen_drift(const RiccatiPath& path, const ModelParams& params, DriftRegressionData& data, double gap_tol) {
    const std::size_t n = path.Q.size();
    if (n < 2) return;
    SymEigen eig;
    Matrix prev_vectors;
    Vector prev_values;
    eig.compute(path.Q[0].dense());
    prev_values = eig.values();
    prev_vectors = eig.vectors();
    for (std::size_t k = 0; k + 1 < n; ++k) {
        const Matrix q = path.Q[k].dense();
        SpectralDecomp d{prev_values, prev_vectors};
        eig.compute(path.Q[k + 1].dense());
        Vector next_values = eig.values();
        Matrix next_vectors = eig.vectors();
        for (Eigen::Index c = 0; c < next_vectors.cols(); ++c)
            if (next_vectors.col(c).dot(prev_vectors.col(c)) < 0.0) next_vectors.col(c) *= -1.0;
        const double h = path.grid[k + 1] - path.grid[k];
        double gap = std::numeric_limits<double>::infinity();
        for (Eigen::Index i = 0; i + 1 < d.eigenvalues.size(); ++i)
            gap = std::min(gap, d.eigenvalues(i) - d.eigenvalues(i + 1));
        if (gap < gap_tol || h <= 0.0) {
            data.skip();
        } else {
            const Vector theory = dyson_drift(q, params, d);
            for (Eigen::Index i = 0; i < theory.size(); ++i) data.add(theory(i), (next_values(i) - d.eigenvalues(i)) / h);
        }
        prev_values = std::move(next_values);
        prev_vectors = std::move(next_vectors);
    }
}

DriftRegression eigen_drift_diagnostic(const RiccatiPath& path, const ModelParams& params) {
    const double e0 = threshold_eps0(params);
    require(params.eps() <= e0, ErrorCode::PreconditionViolated, "eps exceeds eps0");
    DriftRegressionData data;
    accumulate_eigen_drift(path, params, data);
    return data.fit();
}

double ks_distance(std::vector<double> a, std::vector<double> b) {
    require(!a.empty() && !b.empty(), ErrorCode::InsufficientData, "KS distance needs non-empty samples");
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    std::size_t i = 0, j = 0;
    double best = 0.0;
    const double na = static_cast<double>(a.size()), nb = static_cast<double>(b.size());
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        best = std::max(best, std::abs(i / na - j / nb));
    }
    return best;
}

IsotropicParams isotropic_from(const ModelParams& params) {
    const int r = params.dim();
    auto scalar_of = [&](const Matrix& m, const char* name) {
        const double c = m(0, 0);
        require((m - c * Matrix::Identity(r, r)).cwiseAbs().maxCoeff() <= 1e-12 * (1.0 + std::abs(c)),
                ErrorCode::InvalidArgument, std::string(name) + " must be a multiple of the identity");
        return c;
    };
    IsotropicParams p;
    p.a = scalar_of(params.A(), "A");
    p.rr = scalar_of(params.R_dense(), "R");
    p.ss = scalar_of(params.S_dense(), "S");
    p.uu = scalar_of(params.U().dense(), "U");
    p.vv = scalar_of(params.V().dense(), "V");
    return p;
}

DysonComparison dyson_compare(const ModelParams& params, const SymMat& q0, double t, double dt, long samples,
                              std::uint64_t seed, int threads) {
    require(samples >= 2, ErrorCode::InvalidArgument, "need at least two samples");
    const IsotropicParams iso = isotropic_from(params);
    const int r = params.dim();
    const Vector initial = eigen_sym(q0).eigenvalues;
    const std::size_t n = static_cast<std::size_t>(samples);
    const auto matrix_side = parallel_map(n, threads, [&](std::size_t i) {
        const SnapshotPath p = simulate_snapshots(q0, {t}, dt, params, seed, i, SimOptions{1, false});
        return p.diverged ? Vector() : eigen_sym(p.at[0].Q).eigenvalues;
    });
    const auto eigen_side = parallel_map(n, threads, [&](std::size_t i) {
        const EigenPath p = simulate_isotropic_eigenvalues(iso, r, params.eps(), t, dt, seed, initial, i, 1 << 30);
        return std::make_pair(p.lambdas.back(), p.collision_events);
    });
    DysonComparison out;
    std::vector<std::vector<double>> a(r), b(r);
    for (std::size_t i = 0; i < n; ++i) {
        if (matrix_side[i].size() == 0) {
            ++out.diverged;
        } else {
            for (int j = 0; j < r; ++j) a[j].push_back(matrix_side[i](j));
        }
        for (int j = 0; j < r; ++j) b[j].push_back(eigen_side[i].first(j));
        out.collision_events += eigen_side[i].second;
    }
    out.matrix_samples = static_cast<long>(a[0].size());
    out.eigen_samples = static_cast<long>(b[0].size());
    for (int j = 0; j < r; ++j) {
        out.ks.push_back(ks_distance(a[j], b[j]));
        out.max_ks = std::max(out.max_ks, out.ks.back());
    }
    return out;
}

}  // namespace riccdiff
