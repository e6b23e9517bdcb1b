#pragma once

#include <varlex/error.hpp>

#include <Eigen/Dense>
#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <limits>
#include <map>
#include <numeric>
#include <random>
#include <set>
#include <sstream>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

namespace varlex {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index  = Eigen::Index;

inline constexpr double missing_value = std::numeric_limits<double>::quiet_NaN();

/// Genes x samples expression matrix with identifiers and class labels.
///
/// Missing cells are stored as NaN until imputed. Class labels are 0-based
/// indices into `class_names`, assigned in order of first appearance. A
/// dataset with empty `labels` is unlabeled (e.g. a test batch to classify).
struct ExpressionDataset {
    std::vector<std::string> gene_ids;
    std::vector<std::string> sample_ids;
    Matrix values;
    std::vector<int> labels;
    std::vector<std::string> class_names;

    Index genes() const { return values.rows(); }
    Index samples() const { return values.cols(); }
    int classes() const { return static_cast<int>(class_names.size()); }
    bool labeled() const { return !labels.empty(); }
    bool has_missing() const { return values.hasNaN(); }

    /// Samples per class, indexed by class.
    std::vector<Index> class_sizes() const {
        std::vector<Index> sizes(class_names.size(), 0);
        for (int l : labels)
            ++sizes[static_cast<std::size_t>(l)];
        return sizes;
    }

    /// Throws DataError if any structural invariant is broken.
    void validate() const {
        const auto m = static_cast<std::size_t>(values.rows());
        const auto n = static_cast<std::size_t>(values.cols());
        if (gene_ids.size() != m)
            throw DataError("dataset: " + std::to_string(gene_ids.size()) +
                            " gene ids for " + std::to_string(m) + " rows");
        if (sample_ids.size() != n)
            throw DataError("dataset: " + std::to_string(sample_ids.size()) +
                            " sample ids for " + std::to_string(n) +
                            " columns");
        if (!labeled())
            return;
        if (labels.size() != n)
            throw DataError("dataset: label count does not match samples");
        for (int l : labels)
            if (l < 0 || l >= classes())
                throw DataError("dataset: label index out of range");
        auto sizes = class_sizes();
        for (std::size_t j = 0; j < sizes.size(); ++j)
            if (sizes[j] == 0)
                throw DataError("dataset: class '" + class_names[j] +
                                "' has no samples");
    }

    /// Column subset, preserving gene order and class naming.
    ExpressionDataset select_samples(const std::vector<Index> &cols) const {
        ExpressionDataset out;
        out.gene_ids    = gene_ids;
        out.class_names = class_names;
        out.values.resize(values.rows(), static_cast<Index>(cols.size()));
        for (std::size_t i = 0; i < cols.size(); ++i) {
            out.values.col(static_cast<Index>(i)) = values.col(cols[i]);
            out.sample_ids.push_back(sample_ids[static_cast<std::size_t>(cols[i])]);
            if (labeled())
                out.labels.push_back(labels[static_cast<std::size_t>(cols[i])]);
        }
        return out;
    }

    /// Row subset in the given order.
    ExpressionDataset select_genes(const std::vector<Index> &rows) const {
        ExpressionDataset out;
        out.sample_ids  = sample_ids;
        out.labels      = labels;
        out.class_names = class_names;
        out.values.resize(static_cast<Index>(rows.size()), values.cols());
        for (std::size_t i = 0; i < rows.size(); ++i) {
            out.values.row(static_cast<Index>(i)) = values.row(rows[i]);
            out.gene_ids.push_back(gene_ids[static_cast<std::size_t>(rows[i])]);
        }
        return out;
    }
};

namespace detail {

inline std::string_view trim(std::string_view s) {
    while (!s.empty() && (s.front() == ' ' || s.front() == '\t'))
        s.remove_prefix(1);
    while (!s.empty() && (s.back() == ' ' || s.back() == '\t' ||
                          s.back() == '\r' || s.back() == '\n'))
        s.remove_suffix(1);
    if (s.size() >= 2 && s.front() == '"' && s.back() == '"')
        s = s.substr(1, s.size() - 2);
    return s;
}

inline std::vector<std::string> split_csv_line(std::string_view line) {
    std::vector<std::string> cells;
    std::size_t start = 0;
    while (true) {
        auto pos = line.find(',', start);
        auto cell = line.substr(start, pos == std::string_view::npos
                                            ? std::string_view::npos
                                            : pos - start);
        cells.emplace_back(trim(cell));
        if (pos == std::string_view::npos)
            break;
        start = pos + 1;
    }
    return cells;
}

/// Reads non-empty, non-comment lines of a CSV file as cell vectors.
inline std::vector<std::vector<std::string>>
read_csv_rows(const std::filesystem::path &path) {
    std::ifstream in(path);
    if (!in)
        throw DataError("cannot open '" + path.string() + "'");
    std::vector<std::vector<std::string>> rows;
    std::string line;
    while (std::getline(in, line)) {
        auto t = trim(line);
        if (t.empty() || t.front() == '#')
            continue;
        rows.push_back(split_csv_line(line));
    }
    return rows;
}

inline bool is_missing_token(std::string_view s) {
    return s.empty() || s == "NA" || s == "NaN" || s == "nan";
}

inline double parse_cell(std::string_view s, const std::string &where) {
    if (is_missing_token(s))
        return missing_value;
    double v = 0;
    auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
    if (ec != std::errc() || ptr != s.data() + s.size())
        throw DataError("non-numeric cell '" + std::string(s) + "' at " + where);
    return v;
}

inline std::string format_double(double v) {
    if (std::isnan(v))
        return "NA";
    char buf[32];
    auto [ptr, ec] = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, ptr);
}

inline int class_index(std::vector<std::string> &names, const std::string &name) {
    auto it = std::find(names.begin(), names.end(), name);
    if (it != names.end())
        return static_cast<int>(it - names.begin());
    names.push_back(name);
    return static_cast<int>(names.size() - 1);
}

inline void check_unique(const std::vector<std::string> &ids, const char *what) {
    std::set<std::string_view> seen;
    for (auto &id : ids)
        if (!seen.insert(id).second)
            throw DataError(std::string("duplicate ") + what + " id '" + id + "'");
}

/// Parses a matrix CSV. Returns the dataset (unlabeled) and the LABEL row
/// cells, if present.
inline std::pair<ExpressionDataset, std::vector<std::string>>
parse_matrix(const std::filesystem::path &path) {
    auto rows = read_csv_rows(path);
    if (rows.empty())
        throw DataError("'" + path.string() + "': empty matrix file");
    const auto &header = rows.front();
    if (header.size() < 2)
        throw DataError("'" + path.string() + "': header has no sample columns");
    ExpressionDataset ds;
    ds.sample_ids.assign(header.begin() + 1, header.end());
    const std::size_t n = ds.sample_ids.size();

    std::vector<std::string> label_row;
    std::vector<const std::vector<std::string> *> gene_rows;
    for (std::size_t r = 1; r < rows.size(); ++r) {
        const auto &row = rows[r];
        if (row.size() != n + 1)
            throw DataError("'" + path.string() + "': dimension mismatch, row " +
                            std::to_string(r + 1) + " has " +
                            std::to_string(row.size() - 1) + " cells, header has " +
                            std::to_string(n));
        if (row.front() == "LABEL") {
            label_row.assign(row.begin() + 1, row.end());
            continue;
        }
        gene_rows.push_back(&row);
    }
    ds.values.resize(static_cast<Index>(gene_rows.size()), static_cast<Index>(n));
    for (std::size_t g = 0; g < gene_rows.size(); ++g) {
        const auto &row = *gene_rows[g];
        ds.gene_ids.push_back(row.front());
        for (std::size_t j = 0; j < n; ++j)
            ds.values(static_cast<Index>(g), static_cast<Index>(j)) =
                parse_cell(row[j + 1], path.string() + ":" + row.front());
    }
    check_unique(ds.gene_ids, "gene");
    check_unique(ds.sample_ids, "sample");
    return {std::move(ds), std::move(label_row)};
}

} // namespace detail

/// Loads a matrix CSV and its labels.
///
/// `labels_path` is a two-column `sample_id,label` CSV. If it is empty, the
/// matrix must carry a final `LABEL` row instead.
inline ExpressionDataset
load_expression_csv(const std::filesystem::path &matrix_path,
                    const std::filesystem::path &labels_path = {}) {
    auto [ds, label_row] = detail::parse_matrix(matrix_path);
    const auto n = ds.sample_ids.size();
    if (labels_path.empty()) {
        if (label_row.empty())
            throw DataError("'" + matrix_path.string() +
                            "': no labels file and no LABEL row");
        for (auto &name : label_row)
            ds.labels.push_back(detail::class_index(ds.class_names, name));
    } else {
        auto rows = detail::read_csv_rows(labels_path);
        std::unordered_map<std::string, std::size_t> column;
        for (std::size_t j = 0; j < n; ++j)
            column.emplace(ds.sample_ids[j], j);
        std::vector<std::string> label_of(n);
        for (std::size_t r = 0; r < rows.size(); ++r) {
            const auto &row = rows[r];
            if (r == 0 && row.size() >= 2 && row[0] == "sample_id")
                continue;
            if (row.size() != 2)
                throw DataError("'" + labels_path.string() +
                                "': expected 2 columns on line " +
                                std::to_string(r + 1));
            auto it = column.find(row[0]);
            if (it == column.end())
                continue;
            label_of[it->second] = row[1];
        }
        // class order = first appearance in the labels file
        std::vector<std::string> order;
        for (auto &row : rows)
            if (row.size() == 2 && column.count(row[0]) &&
                std::find(order.begin(), order.end(), row[1]) == order.end())
                order.push_back(row[1]);
        ds.class_names = order;
        for (std::size_t j = 0; j < n; ++j) {
            if (label_of[j].empty())
                throw DataError("label coverage: sample '" + ds.sample_ids[j] +
                                "' has no label in '" + labels_path.string() + "'");
            ds.labels.push_back(detail::class_index(ds.class_names, label_of[j]));
        }
    }
    if (ds.classes() < 2)
        throw DataError("'" + matrix_path.string() + "': fewer than 2 classes");
    ds.validate();
    return ds;
}

/// Loads a matrix CSV that may lack labels. A LABEL row is honoured if present.
inline ExpressionDataset
load_unlabeled_csv(const std::filesystem::path &matrix_path) {
    auto [ds, label_row] = detail::parse_matrix(matrix_path);
    for (auto &name : label_row)
        ds.labels.push_back(detail::class_index(ds.class_names, name));
    ds.validate();
    return ds;
}

/// Writes the matrix in the loader's format, at round-trip precision.
/// `comment` lines are emitted first, each prefixed with '#'.
inline void write_expression_csv(const ExpressionDataset &ds,
                                 const std::filesystem::path &path,
                                 const std::vector<std::string> &comment = {},
                                 bool with_label_row = false) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    for (auto &c : comment)
        out << "# " << c << '\n';
    out << "gene_id";
    for (auto &s : ds.sample_ids)
        out << ',' << s;
    out << '\n';
    for (Index g = 0; g < ds.genes(); ++g) {
        out << ds.gene_ids[static_cast<std::size_t>(g)];
        for (Index j = 0; j < ds.samples(); ++j)
            out << ',' << detail::format_double(ds.values(g, j));
        out << '\n';
    }
    if (with_label_row && ds.labeled()) {
        out << "LABEL";
        for (int l : ds.labels)
            out << ',' << ds.class_names[static_cast<std::size_t>(l)];
        out << '\n';
    }
}

/// Writes a `sample_id,label` file.
inline void write_labels_csv(const ExpressionDataset &ds,
                             const std::filesystem::path &path) {
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    out << "sample_id,label\n";
    for (std::size_t j = 0; j < ds.sample_ids.size(); ++j)
        out << ds.sample_ids[j] << ','
            << ds.class_names[static_cast<std::size_t>(ds.labels[j])] << '\n';
}

enum class ImputeStrategy { zero, gene_mean, sample_mean };

inline ImputeStrategy parse_impute_strategy(std::string_view s) {
    if (s == "zero")
        return ImputeStrategy::zero;
    if (s == "gene_mean")
        return ImputeStrategy::gene_mean;
    if (s == "sample_mean")
        return ImputeStrategy::sample_mean;
    throw std::invalid_argument("unknown imputation strategy '" + std::string(s) + "'");
}

/// Replaces missing cells; observed cells are left untouched.
inline ExpressionDataset impute_missing(ExpressionDataset ds, ImputeStrategy strategy) {
    auto &X = ds.values;
    auto fill_line = [&](auto line, const std::string &what) {
        double sum = 0;
        Index count = 0;
        for (Index i = 0; i < line.size(); ++i)
            if (!std::isnan(line(i))) {
                sum += line(i);
                ++count;
            }
        if (count == line.size())
            return;
        if (count == 0)
            throw DataError(what + " has no observed values; drop it before imputing");
        const double mean = sum / static_cast<double>(count);
        for (Index i = 0; i < line.size(); ++i)
            if (std::isnan(line(i)))
                line(i) = mean;
    };
    switch (strategy) {
    case ImputeStrategy::zero:
        X = X.unaryExpr([](double v) { return std::isnan(v) ? 0.0 : v; });
        break;
    case ImputeStrategy::gene_mean:
        for (Index g = 0; g < X.rows(); ++g)
            fill_line(X.row(g), "gene '" + ds.gene_ids[static_cast<std::size_t>(g)] + "'");
        break;
    case ImputeStrategy::sample_mean:
        for (Index j = 0; j < X.cols(); ++j)
            fill_line(X.col(j), "sample '" + ds.sample_ids[static_cast<std::size_t>(j)] + "'");
        break;
    }
    return ds;
}

/// Signal-to-noise ranking of genes for a two-class dataset.
struct SnrRanking {
    std::vector<Index> order;  ///< gene indices, descending |snr|
    Vector snr;                ///< signed (mu_1 - mu_2) / (sd_1 + sd_2) per gene, original order
    std::vector<Index> zero_spread; ///< genes with sd_1 + sd_2 = 0 (snr set to 0)
    ExpressionDataset reduced; ///< top_k genes in ranked order
};

/// Per-gene signed SNR with population standard deviations.
inline Vector snr_scores(const ExpressionDataset &ds, std::vector<Index> *zero_spread = nullptr) {
    if (ds.classes() != 2)
        throw DataError("SNR prescreen is binary-only (dataset has " +
                        std::to_string(ds.classes()) + " classes)");
    if (ds.has_missing())
        throw DataError("SNR prescreen requires an imputed dataset");
    const Index m = ds.genes();
    Vector snr(m);
    for (Index g = 0; g < m; ++g) {
        double sum[2] = {0, 0}, sq[2] = {0, 0};
        double count[2] = {0, 0};
        for (Index j = 0; j < ds.samples(); ++j) {
            const int c = ds.labels[static_cast<std::size_t>(j)];
            sum[c] += ds.values(g, j);
            count[c] += 1;
        }
        const double mu0 = sum[0] / count[0], mu1 = sum[1] / count[1];
        for (Index j = 0; j < ds.samples(); ++j) {
            const int c = ds.labels[static_cast<std::size_t>(j)];
            const double d = ds.values(g, j) - (c == 0 ? mu0 : mu1);
            sq[c] += d * d;
        }
        const double spread = std::sqrt(sq[0] / count[0]) + std::sqrt(sq[1] / count[1]);
        if (spread == 0) {
            snr(g) = 0;
            if (zero_spread)
                zero_spread->push_back(g);
        } else {
            snr(g) = (mu0 - mu1) / spread;
        }
    }
    return snr;
}

inline SnrRanking snr_rank(const ExpressionDataset &ds, Index top_k) {
    if (top_k < 1 || top_k > ds.genes())
        throw std::invalid_argument("snr_rank: top_k must be in [1, " +
                                    std::to_string(ds.genes()) + "]");
    SnrRanking out;
    out.snr = snr_scores(ds, &out.zero_spread);
    if (!out.zero_spread.empty())
        warn(std::to_string(out.zero_spread.size()) +
             " gene(s) have zero within-class spread; SNR set to 0");
    out.order.resize(static_cast<std::size_t>(ds.genes()));
    std::iota(out.order.begin(), out.order.end(), Index{0});
    std::stable_sort(out.order.begin(), out.order.end(), [&](Index a, Index b) {
        return std::abs(out.snr(a)) > std::abs(out.snr(b));
    });
    out.reduced = ds.select_genes(
        std::vector<Index>(out.order.begin(), out.order.begin() + top_k));
    return out;
}

/// Repeated stratified k-fold partition of sample indices.
struct FoldPlan {
    int k       = 0;
    int repeats = 0;
    std::uint64_t seed = 0;
    /// assignments[repeat][fold] = ascending sample indices of that fold
    std::vector<std::vector<std::vector<Index>>> assignments;

    /// Complement of a fold within the repeat, ascending.
    std::vector<Index> training_indices(int repeat, int fold) const {
        std::vector<Index> out;
        const auto &folds = assignments.at(static_cast<std::size_t>(repeat));
        for (int f = 0; f < k; ++f)
            if (f != fold)
                out.insert(out.end(), folds[static_cast<std::size_t>(f)].begin(),
                           folds[static_cast<std::size_t>(f)].end());
        std::sort(out.begin(), out.end());
        return out;
    }
};

inline void to_json(nlohmann::json &j, const FoldPlan &p) {
    j = nlohmann::json{{"k", p.k},
                       {"repeats", p.repeats},
                       {"seed", p.seed},
                       {"assignments", p.assignments}};
}

inline void from_json(const nlohmann::json &j, FoldPlan &p) {
    j.at("k").get_to(p.k);
    j.at("repeats").get_to(p.repeats);
    j.at("seed").get_to(p.seed);
    j.at("assignments").get_to(p.assignments);
}

namespace detail {

/// Fisher-Yates driven only by raw mt19937_64 output, so the permutation does
/// not depend on the standard library's distribution implementation.
template <class T>
void portable_shuffle(std::vector<T> &v, std::mt19937_64 &rng) {
    for (std::size_t i = v.size(); i > 1; --i) {
        auto j = static_cast<std::size_t>(rng() % i);
        std::swap(v[i - 1], v[j]);
    }
}

} // namespace detail

/// Stratified fold plan. Within each repeat every class is shuffled, the
/// shuffled classes are concatenated and positions are dealt round-robin, so
/// per-fold class counts differ by at most one across folds.
inline FoldPlan stratified_kfold(const ExpressionDataset &ds, int k, int repeats,
                                 std::uint64_t seed) {
    if (!ds.labeled())
        throw DataError("stratified_kfold requires labels");
    if (k < 2)
        throw std::invalid_argument("stratified_kfold: k must be >= 2");
    if (repeats < 1)
        throw std::invalid_argument("stratified_kfold: repeats must be >= 1");
    const Index n = ds.samples();
    if (k > n)
        throw DataError("stratified_kfold: k=" + std::to_string(k) + " exceeds " +
                        std::to_string(n) + " samples");
    auto sizes = ds.class_sizes();
    const Index smallest = *std::min_element(sizes.begin(), sizes.end());
    // k = n is leave-one-out and needs no per-class strata
    if (smallest < k && k < n) {
        if (smallest < 2)
            throw DataError("stratified_kfold: a class has fewer than 2 samples");
        warn("k=" + std::to_string(k) + " exceeds the smallest class size; using k=" +
             std::to_string(smallest));
        k = static_cast<int>(smallest);
    }

    FoldPlan plan;
    plan.k       = k;
    plan.repeats = repeats;
    plan.seed    = seed;
    for (int r = 0; r < repeats; ++r) {
        std::seed_seq seq{static_cast<std::uint32_t>(seed),
                          static_cast<std::uint32_t>(seed >> 32),
                          static_cast<std::uint32_t>(r)};
        std::mt19937_64 rng(seq);
        std::vector<Index> dealt;
        for (int c = 0; c < ds.classes(); ++c) {
            std::vector<Index> members;
            for (Index j = 0; j < n; ++j)
                if (ds.labels[static_cast<std::size_t>(j)] == c)
                    members.push_back(j);
            detail::portable_shuffle(members, rng);
            dealt.insert(dealt.end(), members.begin(), members.end());
        }
        std::vector<std::vector<Index>> folds(static_cast<std::size_t>(k));
        for (std::size_t p = 0; p < dealt.size(); ++p)
            folds[p % static_cast<std::size_t>(k)].push_back(dealt[p]);
        for (auto &f : folds)
            std::sort(f.begin(), f.end());
        plan.assignments.push_back(std::move(folds));
    }
    return plan;
}

} // namespace varlex
