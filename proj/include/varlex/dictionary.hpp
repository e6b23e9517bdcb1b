#pragma once

#include <varlex/dataset.hpp>
#include <varlex/rpca.hpp>

#include <json.hpp>

#include <string>
#include <vector>

namespace varlex {

/// Class blocks over the training columns.
struct GroupStructure {
    std::vector<int> class_of;             ///< class per training column
    std::vector<std::vector<Index>> blocks; ///< column indices of each class, ascending
    std::vector<Index> sizes;              ///< |blocks[j]|

    int classes() const { return static_cast<int>(blocks.size()); }

    static GroupStructure from_labels(const std::vector<int> &labels, int classes) {
        GroupStructure g;
        g.class_of = labels;
        g.blocks.resize(static_cast<std::size_t>(classes));
        for (std::size_t i = 0; i < labels.size(); ++i)
            g.blocks.at(static_cast<std::size_t>(labels[i])).push_back(static_cast<Index>(i));
        for (auto &b : g.blocks) {
            if (b.empty())
                throw DataError("group structure: a class has no training samples");
            g.sizes.push_back(static_cast<Index>(b.size()));
        }
        return g;
    }

    /// Every column in exactly one block, one block per class.
    static GroupStructure singletons(Index count) {
        GroupStructure g;
        for (Index i = 0; i < count; ++i) {
            g.class_of.push_back(static_cast<int>(i));
            g.blocks.push_back({i});
            g.sizes.push_back(1);
        }
        return g;
    }
};

inline void to_json(nlohmann::json &j, const GroupStructure &g) {
    j = nlohmann::json{{"class_of", g.class_of}, {"blocks", g.blocks}, {"sizes", g.sizes}};
}

inline void from_json(const nlohmann::json &j, GroupStructure &g) {
    j.at("class_of").get_to(g.class_of);
    j.at("blocks").get_to(g.blocks);
    j.at("sizes").get_to(g.sizes);
}

enum class DictionaryMode { fixed, changing };

inline const char *to_string(DictionaryMode m) {
    return m == DictionaryMode::fixed ? "fixed" : "changing";
}

inline DictionaryMode parse_dictionary_mode(std::string_view s) {
    if (s == "fixed")
        return DictionaryMode::fixed;
    if (s == "changing")
        return DictionaryMode::changing;
    throw std::invalid_argument("unknown dictionary mode '" + std::string(s) + "'");
}

struct DictionaryOptions {
    RpcaOptions rpca;
    /// Changing mode only: decompose [train | y] once per test sample instead
    /// of appending the whole test batch in one joint decomposition.
    bool per_sample = false;
    /// A sparse column whose norm is at most this fraction of its raw sample
    /// norm is treated as empty.
    double degenerate_ratio = 1e-8;
};

/// Sparse parts of the training and test samples, column-normalized.
struct VariationDictionary {
    Matrix train_sparse; ///< S_X, m x n, unit columns (zero if degenerate)
    Matrix test_sparse;  ///< S_Y, m x k, unit columns (zero if degenerate)
    GroupStructure groups;
    DictionaryMode mode = DictionaryMode::fixed;
    Vector train_norms;  ///< column norms before normalization
    Vector test_norms;
    std::vector<bool> train_degenerate;
    std::vector<bool> test_degenerate;
    int rpca_runs          = 0;
    int rpca_nonconverged  = 0;

    Index genes() const { return train_sparse.rows(); }
    Index train_samples() const { return train_sparse.cols(); }
    Index test_samples() const { return test_sparse.cols(); }

    /// Sparse parts at their original scale.
    Matrix raw_train() const { return train_sparse * train_norms.asDiagonal(); }
    Matrix raw_test() const { return test_sparse * test_norms.asDiagonal(); }
};

namespace detail {

/// Normalizes columns of `S` in place; returns original norms and
/// degeneracy flags (degenerate columns are zeroed).
inline std::pair<Vector, std::vector<bool>>
normalize_columns(Matrix &S, const Matrix &raw, double ratio) {
    Vector norms(S.cols());
    std::vector<bool> degenerate(static_cast<std::size_t>(S.cols()), false);
    for (Index j = 0; j < S.cols(); ++j) {
        const double nrm = S.col(j).norm();
        norms(j) = nrm;
        if (nrm == 0 || nrm <= ratio * raw.col(j).norm()) {
            S.col(j).setZero();
            norms(j) = 0;
            degenerate[static_cast<std::size_t>(j)] = true;
        } else {
            S.col(j) /= nrm;
        }
    }
    return {norms, degenerate};
}

inline void check_compatible(const ExpressionDataset &train, const ExpressionDataset &test) {
    if (!train.labeled())
        throw DataError("dictionary: training data must be labeled");
    if (train.gene_ids != test.gene_ids)
        throw DataError("dictionary: train and test gene order differ");
    if (train.has_missing() || test.has_missing())
        throw DataError("dictionary: impute missing values first");
    if (test.samples() < 1)
        throw DataError("dictionary: no test samples");
}

inline void finish(VariationDictionary &dict, const ExpressionDataset &train,
                   const ExpressionDataset &test, const DictionaryOptions &opts) {
    auto [tn, td] = normalize_columns(dict.train_sparse, train.values, opts.degenerate_ratio);
    auto [sn, sd] = normalize_columns(dict.test_sparse, test.values, opts.degenerate_ratio);
    dict.train_norms      = std::move(tn);
    dict.train_degenerate = std::move(td);
    dict.test_norms       = std::move(sn);
    dict.test_degenerate  = std::move(sd);
    dict.groups = GroupStructure::from_labels(train.labels, train.classes());
    const auto bad = std::count(dict.train_degenerate.begin(), dict.train_degenerate.end(), true) +
                     std::count(dict.test_degenerate.begin(), dict.test_degenerate.end(), true);
    if (bad > 0)
        warn("dictionary: " + std::to_string(bad) +
             " column(s) have an empty sparse part; kept as zero atoms");
}

inline Matrix decompose_sparse(const Matrix &X, const DictionaryOptions &opts,
                               VariationDictionary &dict) {
    auto r = rpca_decompose(X, opts.rpca);
    ++dict.rpca_runs;
    if (!r.converged)
        ++dict.rpca_nonconverged;
    return std::move(r.sparse);
}

} // namespace detail

/// Training and test batches are each decomposed as one block.
inline VariationDictionary build_fixed_dictionary(const ExpressionDataset &train,
                                                  const ExpressionDataset &test,
                                                  const DictionaryOptions &opts = {}) {
    detail::check_compatible(train, test);
    VariationDictionary dict;
    dict.mode         = DictionaryMode::fixed;
    dict.train_sparse = detail::decompose_sparse(train.values, opts, dict);
    dict.test_sparse  = detail::decompose_sparse(test.values, opts, dict);
    detail::finish(dict, train, test, opts);
    return dict;
}

/// Training columns are decomposed class by class; test samples are
/// decomposed jointly with the full training matrix and their columns of the
/// joint sparse part are kept.
inline VariationDictionary build_changing_dictionary(const ExpressionDataset &train,
                                                     const ExpressionDataset &test,
                                                     const DictionaryOptions &opts = {}) {
    detail::check_compatible(train, test);
    VariationDictionary dict;
    dict.mode = DictionaryMode::changing;
    const Index m = train.genes(), n = train.samples(), k = test.samples();
    auto groups = GroupStructure::from_labels(train.labels, train.classes());

    dict.train_sparse.resize(m, n);
    for (int c = 0; c < groups.classes(); ++c) {
        const auto &cols = groups.blocks[static_cast<std::size_t>(c)];
        if (cols.size() < 2)
            throw DataError("changing dictionary: class '" +
                            train.class_names[static_cast<std::size_t>(c)] +
                            "' has a single training sample");
        Matrix block(m, static_cast<Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i)
            block.col(static_cast<Index>(i)) = train.values.col(cols[i]);
        Matrix S = detail::decompose_sparse(block, opts, dict);
        for (std::size_t i = 0; i < cols.size(); ++i)
            dict.train_sparse.col(cols[i]) = S.col(static_cast<Index>(i));
    }

    dict.test_sparse.resize(m, k);
    if (opts.per_sample) {
        Matrix joint(m, n + 1);
        joint.leftCols(n) = train.values;
        for (Index r = 0; r < k; ++r) {
            joint.col(n) = test.values.col(r);
            dict.test_sparse.col(r) = detail::decompose_sparse(joint, opts, dict).col(n);
        }
    } else {
        Matrix joint(m, n + k);
        joint << train.values, test.values;
        dict.test_sparse = detail::decompose_sparse(joint, opts, dict).rightCols(k);
    }
    detail::finish(dict, train, test, opts);
    return dict;
}

inline VariationDictionary build_dictionary(DictionaryMode mode,
                                            const ExpressionDataset &train,
                                            const ExpressionDataset &test,
                                            const DictionaryOptions &opts = {}) {
    return mode == DictionaryMode::fixed ? build_fixed_dictionary(train, test, opts)
                                         : build_changing_dictionary(train, test, opts);
}

} // namespace varlex
