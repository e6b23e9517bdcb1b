#pragma once

#include <varlex/dictionary.hpp>
#include <varlex/error.hpp>

#include <Eigen/Cholesky>

#include <cmath>
#include <string>
#include <vector>

namespace varlex {

/// Which axis of the coefficient matrix the group blocks index.
///
/// Forward representations (a test sample over training atoms) group the
/// ROWS of the d x t coefficient matrix; inverse representations (each
/// training sample over the test samples) group its COLUMNS, one block per
/// training class.
enum class GroupAxis { rows, cols };

/// min sum_j w_j ||Z_{G_j}||_F  s.t.  D M = T,  Z = M.
struct GroupSparseProblem {
    Matrix dictionary; ///< D, m x d
    Matrix targets;    ///< T, m x t
    std::vector<std::vector<Index>> blocks;
    Vector weights;
    GroupAxis axis = GroupAxis::rows;

    Index atoms() const { return dictionary.cols(); }
    Index target_count() const { return targets.cols(); }
    Index grouped_extent() const { return axis == GroupAxis::rows ? atoms() : target_count(); }

    void validate() const {
        if (dictionary.rows() != targets.rows())
            throw std::invalid_argument("problem: dictionary and targets differ in row count");
        if (atoms() < 1 || target_count() < 1)
            throw std::invalid_argument("problem: need at least one atom and one target");
        if (static_cast<Index>(blocks.size()) != weights.size())
            throw std::invalid_argument("problem: one weight per block required");
        if ((weights.array() < 0).any())
            throw std::invalid_argument("problem: weights must be nonnegative");
        std::vector<int> hits(static_cast<std::size_t>(grouped_extent()), 0);
        for (auto &b : blocks)
            for (Index i : b) {
                if (i < 0 || i >= grouped_extent())
                    throw std::invalid_argument("problem: block index out of range");
                ++hits[static_cast<std::size_t>(i)];
            }
        for (int h : hits)
            if (h != 1)
                throw std::invalid_argument("problem: blocks must partition the grouped axis");
        if (!dictionary.allFinite() || !targets.allFinite())
            throw NumericError("problem: non-finite dictionary or targets");
    }
};

struct SolverOptions {
    double beta1  = 1.0;
    double beta2  = 1.0;
    double gamma1 = 1.618;
    double gamma2 = 1.618;
    double tol    = 1e-6;
    int max_iter  = 2000;
    /// Relaxes D M = T to ||D M - T||_F <= noise_eps when positive.
    double noise_eps = 0;

    void validate() const {
        constexpr double golden = 1.6180339887498949;
        if (!(beta1 > 0) || !(beta2 > 0))
            throw std::invalid_argument("solver: beta1 and beta2 must be positive");
        if (!(gamma1 > 0 && gamma1 < golden) || !(gamma2 > 0 && gamma2 < golden))
            throw std::invalid_argument("solver: step lengths must lie in (0, (1+sqrt 5)/2)");
        if (!(tol > 0))
            throw std::invalid_argument("solver: tol must be positive");
        if (max_iter < 1)
            throw std::invalid_argument("solver: max_iter must be positive");
        if (!(noise_eps >= 0))
            throw std::invalid_argument("solver: noise_eps must be nonnegative");
    }
};

enum class SolveStatus {
    converged,      ///< both primal residuals within tolerance
    inconsistent,   ///< D M = T has no solution; stopped at a least-squares stationary point
    max_iterations,
};

inline const char *to_string(SolveStatus s) {
    switch (s) {
    case SolveStatus::converged: return "converged";
    case SolveStatus::inconsistent: return "inconsistent";
    case SolveStatus::max_iterations: return "max_iterations";
    }
    return "?";
}

struct SolverHistoryRecord {
    int iter;
    double r_z;    ///< ||Z - M||_F
    double r_feas; ///< ||D M - T - E||_F (E = 0 unless noise_eps > 0)
    double objective;
};

struct IpgsrSolution {
    Matrix M;
    Matrix Z;
    Matrix lambda1; ///< conformal with M
    Matrix lambda2; ///< conformal with T
    std::vector<SolverHistoryRecord> history;
    int iterations     = 0;
    SolveStatus status = SolveStatus::max_iterations;

    bool converged() const { return status == SolveStatus::converged; }
};

/// Frobenius norm of the block of `A` selected along `axis`.
template <class Derived>
double block_norm(const Eigen::MatrixBase<Derived> &A, const std::vector<Index> &block,
                  GroupAxis axis) {
    double sq = 0;
    for (Index i : block)
        sq += axis == GroupAxis::rows ? A.row(i).squaredNorm() : A.col(i).squaredNorm();
    return std::sqrt(sq);
}

/// Block soft thresholding: each block is scaled by max(1 - tau_j/||block||_F, 0),
/// with a zero block mapped to zero.
inline Matrix group_shrink(const Matrix &Gamma, const std::vector<std::vector<Index>> &blocks,
                           const Vector &thresholds, GroupAxis axis) {
    Matrix out = Gamma;
    for (std::size_t j = 0; j < blocks.size(); ++j) {
        const double nrm   = block_norm(Gamma, blocks[j], axis);
        const double scale = nrm > thresholds(static_cast<Index>(j))
                                 ? 1.0 - thresholds(static_cast<Index>(j)) / nrm
                                 : 0.0;
        for (Index i : blocks[j]) {
            if (axis == GroupAxis::rows)
                out.row(i) *= scale;
            else
                out.col(i) *= scale;
        }
    }
    return out;
}

/// sum_j w_j ||A_{G_j}||_F
inline double group_objective(const Matrix &A, const std::vector<std::vector<Index>> &blocks,
                              const Vector &weights, GroupAxis axis) {
    double total = 0;
    for (std::size_t j = 0; j < blocks.size(); ++j)
        total += weights(static_cast<Index>(j)) * block_norm(A, blocks[j], axis);
    return total;
}

/// Two-block ADMM state for the group-sparse representation problem.
///
/// The individual steps are public so that callers can observe intermediate
/// states; ipgsr_solve() drives them to convergence.
class AdmmSolver {
  public:
    AdmmSolver(const GroupSparseProblem &problem, const SolverOptions &opts)
        : p_(problem), opts_(opts) {
        p_.validate();
        opts_.validate();
        const Index d = p_.atoms(), t = p_.target_count(), m = p_.dictionary.rows();
        const Matrix &D = p_.dictionary;
        Matrix system = opts_.beta2 * (D.transpose() * D);
        system.diagonal().array() += opts_.beta1;
        chol_.compute(system);
        if (chol_.info() != Eigen::Success)
            throw NumericError("solver: system matrix is not positive definite");
        dt_targets_ = D.transpose() * p_.targets;
        M  = Matrix::Zero(d, t);
        Z  = Matrix::Zero(d, t);
        L1 = Matrix::Zero(d, t);
        L2 = Matrix::Zero(m, t);
        E  = Matrix::Zero(m, t);
        thresholds_ = p_.weights / opts_.beta1;
    }

    /// M <- (b1 I + b2 D'D)^{-1} (-L1 + b1 Z + D'L2 + b2 D'(T + E))
    void update_m() {
        const Matrix &D = p_.dictionary;
        Matrix rhs = -L1 + opts_.beta1 * Z + D.transpose() * L2 +
                     opts_.beta2 * dt_targets_;
        if (opts_.noise_eps > 0)
            rhs.noalias() += opts_.beta2 * (D.transpose() * E);
        M = chol_.solve(rhs);
        DM_ = D * M;
    }

    /// Z <- shrink(M + L1/b1, w/b1); E <- projection onto the noise ball.
    void update_z() {
        Z = group_shrink(M + L1 / opts_.beta1, p_.blocks, thresholds_, p_.axis);
        if (opts_.noise_eps > 0) {
            E = DM_ - p_.targets - L2 / opts_.beta2;
            const double nrm = E.norm();
            if (nrm > opts_.noise_eps)
                E *= opts_.noise_eps / nrm;
        }
    }

    void update_multipliers() {
        L1 -= opts_.gamma1 * opts_.beta1 * (Z - M);
        L2 -= opts_.gamma2 * opts_.beta2 * feasibility_residual();
    }

    /// D M - T - E at the current M.
    Matrix feasibility_residual() const { return DM_ - p_.targets - E; }

    /// Gradient of the augmented Lagrangian with respect to M.
    Matrix lagrangian_gradient_m() const {
        const Matrix &D = p_.dictionary;
        return L1 - opts_.beta1 * (Z - M) - D.transpose() * L2 +
               opts_.beta2 * (D.transpose() * feasibility_residual());
    }

    double objective() const { return group_objective(Z, p_.blocks, p_.weights, p_.axis); }

    const GroupSparseProblem &problem() const { return p_; }

    Matrix M, Z, L1, L2, E;

  private:
    GroupSparseProblem p_;
    SolverOptions opts_;
    Eigen::LLT<Matrix> chol_;
    Matrix dt_targets_;
    Matrix DM_;
    Vector thresholds_;
};

/// ADMM for the (weighted) group-sparse representation problem.
///
/// Stops when ||Z - M||_F <= tol max(1, ||M||_F) and
/// ||D M - T||_F <= tol max(1, ||T||_F). When D M = T is unsolvable (a tall
/// dictionary whose range misses T) the iterates settle on the normal
/// equations instead; that fixed point is detected and reported as
/// SolveStatus::inconsistent.
inline IpgsrSolution ipgsr_solve(const GroupSparseProblem &problem,
                                 const SolverOptions &opts = {}) {
    AdmmSolver s(problem, opts);
    const Matrix &D       = problem.dictionary;
    const double t_scale  = std::max(1.0, problem.targets.norm());
    const double dt_scale = std::max(1.0, (D.transpose() * problem.targets).norm());

    IpgsrSolution out;
    Matrix previous = s.M;
    for (int it = 1; it <= opts.max_iter; ++it) {
        s.update_m();
        s.update_z();
        const Matrix R      = s.feasibility_residual();
        const double r_z    = (s.Z - s.M).norm();
        const double r_feas = R.norm();
        s.update_multipliers();
        out.history.push_back({it, r_z, r_feas, s.objective()});
        out.iterations = it;
        if (!std::isfinite(r_z) || !std::isfinite(r_feas))
            throw NumericError("solver: iteration diverged");

        const double m_scale = std::max(1.0, s.M.norm());
        if (r_z <= opts.tol * m_scale) {
            if (r_feas <= opts.tol * t_scale) {
                out.status = SolveStatus::converged;
                break;
            }
            const bool stalled = (s.M - previous).norm() <= opts.tol * m_scale;
            if (stalled && r_feas > 10 * opts.tol * t_scale &&
                (D.transpose() * R).norm() <= opts.tol * dt_scale) {
                out.status = SolveStatus::inconsistent;
                break;
            }
        }
        previous = s.M;
    }
    out.M       = std::move(s.M);
    out.Z       = std::move(s.Z);
    out.lambda1 = std::move(s.L1);
    out.lambda2 = std::move(s.L2);
    return out;
}

enum class ClassifierKind { src, gsrc, iprc, ipgsrc };

inline const char *to_string(ClassifierKind k) {
    switch (k) {
    case ClassifierKind::src: return "SRC";
    case ClassifierKind::gsrc: return "GSRC";
    case ClassifierKind::iprc: return "IPRC";
    case ClassifierKind::ipgsrc: return "IPGSRC";
    }
    return "?";
}

inline ClassifierKind parse_classifier_kind(std::string_view s) {
    std::string lower(s);
    for (auto &ch : lower)
        ch = static_cast<char>(std::tolower(static_cast<unsigned char>(ch)));
    if (lower == "src") return ClassifierKind::src;
    if (lower == "gsrc") return ClassifierKind::gsrc;
    if (lower == "iprc") return ClassifierKind::iprc;
    if (lower == "ipgsrc") return ClassifierKind::ipgsrc;
    throw std::invalid_argument("unknown classifier kind '" + std::string(s) + "'");
}

/// Inverse kinds represent training samples over the test samples.
inline bool is_inverse(ClassifierKind k) {
    return k == ClassifierKind::iprc || k == ClassifierKind::ipgsrc;
}

inline bool is_grouped(ClassifierKind k) {
    return k == ClassifierKind::gsrc || k == ClassifierKind::ipgsrc;
}

enum class BlockWeighting { sqrt_size, unit };

inline Vector block_weights(const std::vector<std::vector<Index>> &blocks, BlockWeighting w) {
    Vector out(static_cast<Index>(blocks.size()));
    for (std::size_t j = 0; j < blocks.size(); ++j)
        out(static_cast<Index>(j)) =
            w == BlockWeighting::unit ? 1.0 : std::sqrt(static_cast<double>(blocks[j].size()));
    return out;
}

/// Instantiates the representation problem behind each classifier:
///   IPGSRC: D = S_Y, T = S_X, class blocks over columns of M (k x n)
///   IPRC:   D = S_Y, T = S_X, singleton blocks
///   GSRC:   D = S_X, T = S_Y, class blocks over rows of M (n x k)
///   SRC:    D = S_X, T = S_Y, singleton blocks
inline GroupSparseProblem make_problem(ClassifierKind kind, const VariationDictionary &dict,
                                       BlockWeighting weighting = BlockWeighting::sqrt_size) {
    GroupSparseProblem p;
    const Index n = dict.train_samples();
    if (is_inverse(kind)) {
        p.dictionary = dict.test_sparse;
        p.targets    = dict.train_sparse;
        p.axis       = GroupAxis::cols;
    } else {
        p.dictionary = dict.train_sparse;
        p.targets    = dict.test_sparse;
        p.axis       = GroupAxis::rows;
    }
    p.blocks  = is_grouped(kind) ? dict.groups.blocks : GroupStructure::singletons(n).blocks;
    p.weights = block_weights(p.blocks, weighting);
    return p;
}

} // namespace varlex
