#pragma once

// Independent reference implementations used to check the library.

#include <varlex/dictionary.hpp>
#include <varlex/solver.hpp>

#include <Eigen/SVD>

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <random>
#include <vector>

namespace oracle {

using varlex::Index;
using varlex::Matrix;
using varlex::Vector;

/// Minimizes a unimodal function on [lo, hi].
template <class F>
double golden_section(F f, double lo, double hi, int iters = 300) {
    const double r = (std::sqrt(5.0) - 1) / 2;
    double a = lo, b = hi;
    double c = b - r * (b - a), d = a + r * (b - a);
    double fc = f(c), fd = f(d);
    for (int i = 0; i < iters; ++i) {
        if (fc < fd) {
            b  = d;
            d  = c;
            fd = fc;
            c  = b - r * (b - a);
            fc = f(c);
        } else {
            a  = c;
            c  = d;
            fc = fd;
            d  = a + r * (b - a);
            fd = f(d);
        }
    }
    return (a + b) / 2;
}

/// argmin_z tau |z| + (z - a)^2 / 2 by golden-section search.
inline double scalar_prox_l1(double a, double tau) {
    const double span = std::abs(a) + tau + 1;
    return golden_section([&](double z) { return tau * std::abs(z) + 0.5 * (z - a) * (z - a); },
                          -span, span);
}

/// Group prox by searching the radial scale s in [0, 1] per block:
/// minimizes tau s ||g|| + (1 - s)^2 ||g||^2 / 2.
inline Matrix group_prox(const Matrix &Gamma, const std::vector<std::vector<Index>> &blocks,
                         const Vector &tau, varlex::GroupAxis axis) {
    Matrix out = Gamma;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        double sq = 0;
        for (Index i : blocks[j])
            sq += axis == varlex::GroupAxis::rows ? Gamma.row(i).squaredNorm()
                                                  : Gamma.col(i).squaredNorm();
        const double g = std::sqrt(sq);
        const double t = tau(static_cast<Index>(j));
        const double s = golden_section(
            [&](double s) { return t * s * g + 0.5 * (1 - s) * (1 - s) * g * g; }, 0.0, 1.0);
        for (Index i : blocks[j]) {
            if (axis == varlex::GroupAxis::rows)
                out.row(i) *= s;
            else
                out.col(i) *= s;
        }
    }
    return out;
}

/// Objective sum_j w_j ||A_{G_j}||_F written out directly.
inline double group_norm_sum(const Matrix &A, const std::vector<std::vector<Index>> &blocks,
                             const Vector &w, varlex::GroupAxis axis) {
    double total = 0;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        double sq = 0;
        for (Index i : blocks[j])
            for (Index q = 0; q < (axis == varlex::GroupAxis::rows ? A.cols() : A.rows()); ++q) {
                const double v = axis == varlex::GroupAxis::rows ? A(i, q) : A(q, i);
                sq += v * v;
            }
        total += w(static_cast<Index>(j)) * std::sqrt(sq);
    }
    return total;
}

/// Orthonormal null-space basis and minimum-norm particular solution of D M = T.
struct AffineSet {
    Matrix particular; ///< d x t
    Matrix null_basis; ///< d x r
};

inline AffineSet affine_set(const Matrix &D, const Matrix &T) {
    Eigen::JacobiSVD<Matrix> svd(D, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Vector &s  = svd.singularValues();
    const double cut = 1e-12 * (s.size() ? s(0) : 0.0) * static_cast<double>(std::max(D.rows(), D.cols()));
    Index rank = 0;
    while (rank < s.size() && s(rank) > cut)
        ++rank;
    AffineSet out;
    Matrix Ut = svd.matrixU().leftCols(rank).transpose() * T;
    for (Index i = 0; i < rank; ++i)
        Ut.row(i) /= s(i);
    out.particular = svd.matrixV().leftCols(rank) * Ut;
    out.null_basis = svd.matrixV().rightCols(D.cols() - rank);
    return out;
}

/// Global minimum of the group objective over {M : D M = T} for tiny problems.
///
/// The feasible set is parameterized by null-space coordinates; a regular grid
/// over a box that provably contains the optimum is searched, then the box is
/// shrunk around the best point and the search repeated.
inline double feasible_set_minimum(const varlex::GroupSparseProblem &p, Matrix *argmin = nullptr) {
    const auto set = affine_set(p.dictionary, p.targets);
    const Index r = set.null_basis.cols(), t = p.targets.cols();
    const Index dim = r * t;
    auto at = [&](const Vector &c) {
        Matrix M = set.particular;
        for (Index q = 0; q < t; ++q)
            M.col(q) += set.null_basis * c.segment(q * r, r);
        return M;
    };
    auto f = [&](const Vector &c) { return group_norm_sum(at(c), p.blocks, p.weights, p.axis); };
    if (dim == 0) {
        if (argmin)
            *argmin = set.particular;
        return f(Vector());
    }
    if (dim > 3)
        throw std::invalid_argument("feasible_set_minimum: search dimension too large");

    // any M with objective <= f(particular) satisfies |c| <= ||M|| + ||M0||
    const double f0    = f(Vector::Zero(dim));
    const double w_min = p.weights.minCoeff();
    double radius      = f0 / w_min + set.particular.norm();
    Vector center      = Vector::Zero(dim);
    double best        = f0;
    const int per_dim  = dim == 1 ? 2001 : dim == 2 ? 201 : 41;
    for (int level = 0; level < 10; ++level) {
        const double step = 2 * radius / (per_dim - 1);
        Vector best_c     = center;
        std::vector<int> idx(static_cast<std::size_t>(dim), 0);
        while (true) {
            Vector c(dim);
            for (Index k = 0; k < dim; ++k)
                c(k) = center(k) - radius + step * idx[static_cast<std::size_t>(k)];
            const double v = f(c);
            if (v < best) {
                best   = v;
                best_c = c;
            }
            Index k = 0;
            while (k < dim && ++idx[static_cast<std::size_t>(k)] == per_dim)
                idx[static_cast<std::size_t>(k++)] = 0;
            if (k == dim)
                break;
        }
        center = best_c;
        radius = 3 * step;
    }
    if (argmin)
        *argmin = at(center);
    return best;
}

/// min ||x||_1 s.t. A x = b by Douglas-Rachford splitting with an
/// SVD-based projection onto the affine constraint set.
inline Vector basis_pursuit(const Matrix &A, const Vector &b, int max_iter = 200000,
                            double tol = 1e-13) {
    Eigen::JacobiSVD<Matrix> svd(A, Eigen::ComputeThinU | Eigen::ComputeThinV);
    svd.setThreshold(1e-12);
    auto project = [&](const Vector &z) -> Vector { return z - svd.solve(A * z - b); };
    Vector z = Vector::Zero(A.cols());
    Vector x = project(z);
    for (int it = 0; it < max_iter; ++it) {
        x = project(z);
        Vector v = 2 * x - z;
        Vector y = v.unaryExpr([](double a) {
            const double m = std::abs(a) - 1.0;
            return m > 0 ? std::copysign(m, a) : 0.0;
        });
        z += y - x;
        if ((y - x).norm() <= tol * std::max(1.0, x.norm()))
            break;
    }
    return project(z);
}

/// Category contribution rates by a direct double loop.
inline Matrix ccr_loop(const Matrix &M, const std::vector<int> &class_of, int classes) {
    const Index k = M.rows(), n = M.cols();
    Matrix C = Matrix::Zero(classes, k);
    for (Index r = 0; r < k; ++r) {
        double total = 0;
        for (Index i = 0; i < n; ++i)
            total += std::abs(M(r, i));
        std::vector<double> part(static_cast<std::size_t>(classes), 0.0);
        std::vector<double> size(static_cast<std::size_t>(classes), 0.0);
        for (Index i = 0; i < n; ++i) {
            part[static_cast<std::size_t>(class_of[static_cast<std::size_t>(i)])] += std::abs(M(r, i));
            size[static_cast<std::size_t>(class_of[static_cast<std::size_t>(i)])] += 1;
        }
        for (int j = 0; j < classes; ++j)
            C(j, r) = part[static_cast<std::size_t>(j)] / size[static_cast<std::size_t>(j)] / total;
    }
    return C;
}

/// Probability that a random positive outscores a random negative, ties 1/2.
inline double mann_whitney(const std::vector<double> &scores, const std::vector<bool> &positive) {
    double wins = 0, pairs = 0;
    for (std::size_t i = 0; i < scores.size(); ++i)
        for (std::size_t j = 0; j < scores.size(); ++j)
            if (positive[i] && !positive[j]) {
                pairs += 1;
                if (scores[i] > scores[j])
                    wins += 1;
                else if (scores[i] == scores[j])
                    wins += 0.5;
            }
    return wins / pairs;
}

/// Random problem with d atoms, m < d rows, t targets and a random block partition.
inline varlex::GroupSparseProblem random_tiny_problem(std::mt19937_64 &rng, Index d, Index m,
                                                     Index t, varlex::GroupAxis axis) {
    std::normal_distribution<double> n01(0, 1);
    varlex::GroupSparseProblem p;
    p.dictionary.resize(m, d);
    for (Index i = 0; i < p.dictionary.size(); ++i)
        p.dictionary.data()[i] = n01(rng);
    for (Index j = 0; j < d; ++j)
        p.dictionary.col(j).normalize();
    p.targets.resize(m, t);
    for (Index i = 0; i < p.targets.size(); ++i)
        p.targets.data()[i] = n01(rng);
    p.axis = axis;
    const Index extent = axis == varlex::GroupAxis::rows ? d : t;
    std::vector<Index> order(static_cast<std::size_t>(extent));
    for (Index i = 0; i < extent; ++i)
        order[static_cast<std::size_t>(i)] = i;
    std::shuffle(order.begin(), order.end(), rng);
    const Index count = 1 + static_cast<Index>(rng() % static_cast<std::uint64_t>(extent));
    p.blocks.assign(static_cast<std::size_t>(count), {});
    for (Index i = 0; i < extent; ++i)
        p.blocks[static_cast<std::size_t>(i < count ? i : static_cast<Index>(rng() % static_cast<std::uint64_t>(count)))]
            .push_back(order[static_cast<std::size_t>(i)]);
    for (auto &b : p.blocks)
        std::sort(b.begin(), b.end());
    p.weights = varlex::block_weights(p.blocks, varlex::BlockWeighting::sqrt_size);
    return p;
}

} // namespace oracle
