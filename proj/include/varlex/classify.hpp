#pragma once

#include <varlex/dictionary.hpp>
#include <varlex/solver.hpp>

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace varlex {

enum class Criterion { ccr, reconstruction_error };

inline const char *to_string(Criterion c) {
    return c == Criterion::ccr ? "ccr" : "reconstruction_error";
}

enum class CcrMode { absolute, signed_mass };

/// Category contribution rates, classes x test samples.
struct CcrMatrix {
    Matrix values;
    std::vector<bool> degenerate; ///< test columns whose coefficients are all zero
    bool normalized = false;      ///< columns rescaled to sum to one
};

/// C(j, r) = (1/s_j) * sum_{i in G_j} |M(r, i)| / sum_i |M(r, i)|
///
/// `M` is the k x n inverse-projection coefficient matrix: row r belongs to
/// test sample r, column i to training sample i. A row with no coefficient
/// mass yields a uniform column and is flagged degenerate.
inline CcrMatrix compute_ccr(const Matrix &M, const GroupStructure &groups,
                             CcrMode mode = CcrMode::absolute) {
    const Index k = M.rows(), n = M.cols();
    if (static_cast<Index>(groups.class_of.size()) != n)
        throw std::invalid_argument("compute_ccr: coefficient columns must match training samples");
    const int c = groups.classes();
    CcrMatrix out;
    out.values.resize(c, k);
    out.degenerate.assign(static_cast<std::size_t>(k), false);
    for (Index r = 0; r < k; ++r) {
        auto mass = [&](Index i) {
            return mode == CcrMode::absolute ? std::abs(M(r, i)) : M(r, i);
        };
        double total = 0;
        for (Index i = 0; i < n; ++i)
            total += mass(i);
        if (total == 0) {
            out.values.col(r).setConstant(1.0 / static_cast<double>(n));
            out.degenerate[static_cast<std::size_t>(r)] = true;
            continue;
        }
        for (int j = 0; j < c; ++j) {
            double part = 0;
            for (Index i : groups.blocks[static_cast<std::size_t>(j)])
                part += mass(i);
            out.values(j, r) = part / (static_cast<double>(groups.sizes[static_cast<std::size_t>(j)]) * total);
        }
    }
    return out;
}

/// Rescales every column to unit sum; argmax and CSI are unchanged.
inline CcrMatrix normalize_ccr(CcrMatrix ccr) {
    for (Index r = 0; r < ccr.values.cols(); ++r) {
        const double s = ccr.values.col(r).sum();
        if (s != 0)
            ccr.values.col(r) /= s;
    }
    ccr.normalized = true;
    return ccr;
}

struct Prediction {
    int label = 0;
    std::vector<double> scores;
    double csi = 1;
    Criterion criterion = Criterion::ccr;
    bool tie        = false;
    bool degenerate = false;
};

namespace detail {

inline bool nearly_equal(double a, double b) {
    return std::abs(a - b) <= 1e-12 * std::max(std::abs(a), std::abs(b));
}

} // namespace detail

/// Ratio of the runner-up criterion value to the best one, in [0, 1].
///
/// For CCR (larger is better) this is second-max / max; for reconstruction
/// error (smaller is better) it is min / second-min. 0/0 counts as 1.
inline double compute_csi(const std::vector<double> &scores, Criterion criterion) {
    if (scores.size() < 2)
        throw std::invalid_argument("compute_csi: need at least two classes");
    std::vector<double> s = scores;
    std::sort(s.begin(), s.end());
    double num, den;
    if (criterion == Criterion::ccr) {
        num = s[s.size() - 2];
        den = s[s.size() - 1];
    } else {
        num = s[0];
        den = s[1];
    }
    if (den == 0)
        return 1.0;
    if (detail::nearly_equal(num, den))
        return 1.0;
    return std::clamp(num / den, 0.0, 1.0);
}

namespace detail {

inline Prediction decide(std::vector<double> scores, Criterion criterion) {
    Prediction p;
    p.criterion = criterion;
    int best    = 0;
    for (int j = 1; j < static_cast<int>(scores.size()); ++j) {
        const bool better = criterion == Criterion::ccr ? scores[static_cast<std::size_t>(j)] > scores[static_cast<std::size_t>(best)]
                                                        : scores[static_cast<std::size_t>(j)] < scores[static_cast<std::size_t>(best)];
        if (better && !nearly_equal(scores[static_cast<std::size_t>(j)], scores[static_cast<std::size_t>(best)]))
            best = j;
    }
    for (int j = 0; j < static_cast<int>(scores.size()); ++j)
        if (j != best && nearly_equal(scores[static_cast<std::size_t>(j)], scores[static_cast<std::size_t>(best)]))
            p.tie = true;
    p.label  = best;
    p.csi    = p.tie ? 1.0 : compute_csi(scores, criterion);
    p.scores = std::move(scores);
    return p;
}

} // namespace detail

/// Argmax of each CCR column; ties go to the lowest class index and are flagged.
inline std::vector<Prediction> classify_ccr(const CcrMatrix &ccr) {
    if (!ccr.values.allFinite())
        throw NumericError("classify_ccr: non-finite contribution rates");
    std::vector<Prediction> out;
    for (Index r = 0; r < ccr.values.cols(); ++r) {
        std::vector<double> scores(ccr.values.col(r).data(),
                                   ccr.values.col(r).data() + ccr.values.rows());
        auto p = detail::decide(std::move(scores), Criterion::ccr);
        if (r < static_cast<Index>(ccr.degenerate.size()))
            p.degenerate = ccr.degenerate[static_cast<std::size_t>(r)];
        out.push_back(std::move(p));
    }
    return out;
}

/// Per-class residuals ||y - D delta_j(alpha)||_2, where delta_j keeps the
/// coefficients of the atoms in class j.
inline Vector reconstruction_error(const Matrix &D, const Vector &alpha, const Vector &y,
                                   const GroupStructure &groups) {
    if (D.cols() != alpha.size() || D.rows() != y.size())
        throw std::invalid_argument("reconstruction_error: shape mismatch");
    Vector out(groups.classes());
    for (int j = 0; j < groups.classes(); ++j) {
        Vector fit = Vector::Zero(y.size());
        for (Index i : groups.blocks[static_cast<std::size_t>(j)])
            fit += alpha(i) * D.col(i);
        out(j) = (y - fit).norm();
    }
    return out;
}

/// Argmin of class residuals for each test column of a forward solution.
inline std::vector<Prediction> classify_reconstruction(const Matrix &D, const Matrix &coeffs,
                                                       const Matrix &Y,
                                                       const GroupStructure &groups) {
    std::vector<Prediction> out;
    for (Index r = 0; r < Y.cols(); ++r) {
        Vector res = reconstruction_error(D, coeffs.col(r), Y.col(r), groups);
        auto p = detail::decide(std::vector<double>(res.data(), res.data() + res.size()),
                                Criterion::reconstruction_error);
        p.degenerate = coeffs.col(r).isZero(0.0);
        out.push_back(std::move(p));
    }
    return out;
}

struct ClassifierOptions {
    DictionaryOptions dictionary;
    SolverOptions solver;
    BlockWeighting weighting = BlockWeighting::sqrt_size;
    CcrMode ccr              = CcrMode::absolute;
};

struct ClassificationResult {
    std::vector<Prediction> predictions;
    IpgsrSolution solution;
};

/// Solves the kind's representation problem on a built dictionary and turns
/// the coefficients into decisions. Inverse kinds classify every test sample
/// from one solve.
inline ClassificationResult classify_dictionary(ClassifierKind kind,
                                                const VariationDictionary &dict,
                                                const ClassifierOptions &opts = {}) {
    ClassificationResult out;
    auto problem = make_problem(kind, dict, opts.weighting);
    out.solution = ipgsr_solve(problem, opts.solver);
    if (is_inverse(kind)) {
        out.predictions = classify_ccr(compute_ccr(out.solution.M, dict.groups, opts.ccr));
    } else {
        out.predictions = classify_reconstruction(dict.train_sparse, out.solution.M,
                                                  dict.test_sparse, dict.groups);
    }
    return out;
}

/// Dictionary construction, representation and decision in one call.
inline ClassificationResult run_classifier(ClassifierKind kind, const ExpressionDataset &train,
                                           const ExpressionDataset &test, DictionaryMode mode,
                                           const ClassifierOptions &opts = {}) {
    auto dict = build_dictionary(mode, train, test, opts.dictionary);
    return classify_dictionary(kind, dict, opts);
}

/// Signed binary score for ROC analysis: C_pos - C_neg for CCR, r_neg - r_pos
/// for reconstruction error. Larger means more positive.
inline double binary_score(const Prediction &p, int positive_class) {
    const int negative = positive_class == 0 ? 1 : 0;
    const double pos = p.scores.at(static_cast<std::size_t>(positive_class));
    const double neg = p.scores.at(static_cast<std::size_t>(negative));
    return p.criterion == Criterion::ccr ? pos - neg : neg - pos;
}

} // namespace varlex
