#pragma once

#include <varlex/dataset.hpp>
#include <varlex/error.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <optional>
#include <string>
#include <vector>

namespace varlex {

/// Sparsity weight 1/sqrt(max(m, n)) for an m x n matrix.
inline double default_lambda(Index m, Index n) {
    if (m < 1 || n < 1)
        throw std::invalid_argument("default_lambda: dimensions must be positive");
    return 1.0 / std::sqrt(static_cast<double>(std::max(m, n)));
}

/// Entrywise shrinkage sign(a) * max(|a| - tau, 0).
template <class Derived>
Matrix soft_threshold(const Eigen::MatrixBase<Derived> &A, double tau) {
    return A.unaryExpr([tau](double a) {
        const double mag = std::abs(a) - tau;
        return mag > 0 ? std::copysign(mag, a) : 0.0;
    });
}

/// Singular value thresholding result: the shrunk matrix and its shrunk spectrum.
struct SvtResult {
    Matrix value;
    Vector singular_values; ///< max(sigma_i - tau, 0), descending
};

/// Proximal operator of tau * nuclear norm: U * max(Sigma - tau, 0) * V^T.
template <class Derived>
SvtResult svt_with_spectrum(const Eigen::MatrixBase<Derived> &A, double tau) {
    SvtResult out;
    if (A.size() == 0) {
        out.value = A;
        return out;
    }
    Eigen::BDCSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    if (svd.info() != Eigen::Success)
        throw NumericError("svt: SVD failed");
    const Vector &sigma = svd.singularValues();
    out.singular_values = (sigma.array() - tau).cwiseMax(0.0).matrix();
    Index keep = 0;
    while (keep < out.singular_values.size() && out.singular_values(keep) > 0)
        ++keep;
    out.value = svd.matrixU().leftCols(keep) *
                out.singular_values.head(keep).asDiagonal() *
                svd.matrixV().leftCols(keep).transpose();
    return out;
}

template <class Derived>
Matrix svt(const Eigen::MatrixBase<Derived> &A, double tau) {
    return svt_with_spectrum(A, tau).value;
}

inline double spectral_norm(const Matrix &A) {
    if (A.size() == 0)
        return 0;
    Eigen::BDCSVD<Matrix> svd(A);
    return svd.singularValues()(0);
}

/// Inexact ALM settings. Unset optional fields resolve from the input:
/// lambda = default_lambda(m, n), mu0 = 1.25 / sigma_max(X).
struct RpcaOptions {
    std::optional<double> lambda;
    std::optional<double> mu0;
    double rho        = 1.5;
    double mu_max_factor = 1e7; ///< mu is capped at mu_max_factor * mu0
    double tol        = 1e-7;
    int max_iter      = 1000;

    void validate() const {
        if (lambda && !(*lambda > 0))
            throw std::invalid_argument("rpca: lambda must be positive");
        if (mu0 && !(*mu0 > 0))
            throw std::invalid_argument("rpca: mu0 must be positive");
        if (!(rho > 1))
            throw std::invalid_argument("rpca: rho must exceed 1");
        if (!(mu_max_factor >= 1))
            throw std::invalid_argument("rpca: mu_max_factor must be >= 1");
        if (!(tol > 0))
            throw std::invalid_argument("rpca: tol must be positive");
        if (max_iter < 1)
            throw std::invalid_argument("rpca: max_iter must be positive");
    }
};

struct RpcaTraceRecord {
    int iter;
    double residual; ///< ||X - L - S||_F / ||X||_F
    Index rank;      ///< singular values of L above 1e-8 * sigma_max(L)
    Index nnz;       ///< |s| > 1e-12
};

struct RpcaResult {
    Matrix low_rank;
    Matrix sparse;
    int iterations = 0;
    bool converged = false;
    double lambda  = 0;
    double mu0     = 0;
    std::vector<RpcaTraceRecord> trace;

    double final_residual() const {
        return trace.empty() ? 0.0 : trace.back().residual;
    }
};

inline Index count_nonzero(const Matrix &S, double eps = 1e-12) {
    return (S.array().abs() > eps).count();
}

/// Robust PCA, X = L + S, by the inexact augmented Lagrange multiplier method.
///
/// Each sweep:
///   L <- svt(X - S + Y/mu, 1/mu)
///   S <- soft_threshold(X - L + Y/mu, lambda/mu)
///   Y <- Y + mu (X - L - S)
///   mu <- min(rho mu, mu_max)
/// The multiplier starts at X / max(||X||_2, ||X||_inf / lambda), the usual
/// dual-feasible scaling. On hitting max_iter the lowest-residual iterate is
/// returned with `converged = false`.
inline RpcaResult rpca_decompose(const Matrix &X, const RpcaOptions &opts = {}) {
    opts.validate();
    if (!X.allFinite())
        throw NumericError("rpca: input contains non-finite values");
    RpcaResult out;
    const Index m = X.rows(), n = X.cols();
    out.low_rank = Matrix::Zero(m, n);
    out.sparse   = Matrix::Zero(m, n);
    if (X.size() == 0)
        throw std::invalid_argument("rpca: empty matrix");
    out.lambda = opts.lambda.value_or(default_lambda(m, n));

    const double x_norm = X.norm();
    if (x_norm == 0) {
        out.iterations = 1;
        out.converged  = true;
        out.trace.push_back({1, 0.0, 0, 0});
        return out;
    }

    const double sigma_max = spectral_norm(X);
    const double inf_norm  = X.cwiseAbs().maxCoeff() / out.lambda;
    out.mu0 = opts.mu0.value_or(1.25 / sigma_max);
    const double mu_max = opts.mu_max_factor * out.mu0;

    Matrix Y = X / std::max(sigma_max, inf_norm);
    Matrix L = Matrix::Zero(m, n), S = Matrix::Zero(m, n);
    double mu = out.mu0;
    double best = std::numeric_limits<double>::infinity();

    for (int it = 1; it <= opts.max_iter; ++it) {
        auto shrunk = svt_with_spectrum(X - S + Y / mu, 1.0 / mu);
        L = std::move(shrunk.value);
        S = soft_threshold(X - L + Y / mu, out.lambda / mu);
        Matrix R = X - L - S;
        Y += mu * R;
        mu = std::min(opts.rho * mu, mu_max);

        const double residual = R.norm() / x_norm;
        const Vector &sv = shrunk.singular_values;
        const double cut = sv.size() ? 1e-8 * sv(0) : 0.0;
        const Index rank = (sv.array() > cut).count();
        out.trace.push_back({it, residual, rank, count_nonzero(S)});
        out.iterations = it;

        if (!std::isfinite(residual))
            throw NumericError("rpca: iteration diverged");
        if (residual < best) {
            best         = residual;
            out.low_rank = L;
            out.sparse   = S;
        }
        if (residual <= opts.tol) {
            out.converged = true;
            break;
        }
    }
    return out;
}

} // namespace varlex
