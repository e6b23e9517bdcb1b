#pragma once

#include <varlex/classify.hpp>
#include <varlex/dataset.hpp>
#include <varlex/version.hpp>

#include <json.hpp>

#include <algorithm>
#include <atomic>
#include <cmath>
#include <exception>
#include <fstream>
#include <limits>
#include <numeric>
#include <thread>
#include <vector>

namespace varlex {

inline constexpr double not_a_number = std::numeric_limits<double>::quiet_NaN();

struct ConfusionMetrics {
    double accuracy    = 0;
    double sensitivity = not_a_number; ///< TP / (TP + FN); NaN without positives
    double specificity = not_a_number; ///< TN / (TN + FP); NaN without negatives
    Index tp = 0, fn = 0, tn = 0, fp = 0;

    bool sensitivity_defined() const { return tp + fn > 0; }
    bool specificity_defined() const { return tn + fp > 0; }
};

/// Accuracy over all classes; sensitivity and specificity treat
/// `positive_class` against everything else.
inline ConfusionMetrics confusion_metrics(const std::vector<int> &predicted,
                                          const std::vector<int> &truth, int positive_class) {
    if (predicted.size() != truth.size())
        throw std::invalid_argument("confusion_metrics: length mismatch");
    if (truth.empty())
        throw std::invalid_argument("confusion_metrics: no samples");
    ConfusionMetrics cm;
    Index correct = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
        correct += predicted[i] == truth[i];
        const bool actual = truth[i] == positive_class;
        const bool called = predicted[i] == positive_class;
        if (actual)
            (called ? cm.tp : cm.fn)++;
        else
            (called ? cm.fp : cm.tn)++;
    }
    cm.accuracy = static_cast<double>(correct) / static_cast<double>(truth.size());
    if (cm.sensitivity_defined())
        cm.sensitivity = static_cast<double>(cm.tp) / static_cast<double>(cm.tp + cm.fn);
    if (cm.specificity_defined())
        cm.specificity = static_cast<double>(cm.tn) / static_cast<double>(cm.tn + cm.fp);
    return cm;
}

struct RocPoint {
    double fpr;
    double tpr;
};

struct RocResult {
    std::vector<RocPoint> curve; ///< from (0,0) to (1,1), nondecreasing in both
    double auc = 0;
};

/// ROC by sweeping the threshold down through every distinct score; AUC by
/// the trapezoidal rule, so tied scores contribute half credit.
inline RocResult roc_auc(const std::vector<double> &scores, const std::vector<bool> &positive) {
    if (scores.size() != positive.size())
        throw std::invalid_argument("roc_auc: length mismatch");
    const auto n_pos = std::count(positive.begin(), positive.end(), true);
    const auto n_neg = static_cast<std::ptrdiff_t>(positive.size()) - n_pos;
    if (n_pos == 0 || n_neg == 0)
        throw DataError("roc_auc: truth contains a single class");
    for (double s : scores)
        if (!std::isfinite(s))
            throw NumericError("roc_auc: non-finite score");

    std::vector<std::size_t> order(scores.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return scores[a] > scores[b]; });

    RocResult out;
    out.curve.push_back({0, 0});
    double tp = 0, fp = 0, area = 0;
    for (std::size_t i = 0; i < order.size();) {
        const double threshold = scores[order[i]];
        double dtp = 0, dfp = 0;
        for (; i < order.size() && scores[order[i]] == threshold; ++i)
            (positive[order[i]] ? dtp : dfp) += 1;
        area += dfp * (tp + dtp / 2);
        tp += dtp;
        fp += dfp;
        out.curve.push_back({fp / static_cast<double>(n_neg), tp / static_cast<double>(n_pos)});
    }
    out.auc = area / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
    return out;
}

/// Error reduction rate in percent: (er1 - er2) / er1 * 100.
inline double err(double er1, double er2) {
    if (!(er1 > 0))
        throw std::invalid_argument("err: baseline error rate must be positive");
    return (er1 - er2) / er1 * 100.0;
}

struct Quartiles {
    double min = not_a_number, q1 = not_a_number, median = not_a_number,
           q3 = not_a_number, max = not_a_number, mean = not_a_number;
    double iqr() const { return q3 - q1; }
};

/// Linear-interpolation quantiles (the common "type 7" definition).
inline Quartiles quartiles(std::vector<double> v) {
    Quartiles q;
    if (v.empty())
        return q;
    std::sort(v.begin(), v.end());
    auto at = [&](double p) {
        const double h  = p * static_cast<double>(v.size() - 1);
        const auto lo   = static_cast<std::size_t>(std::floor(h));
        const auto hi   = std::min(lo + 1, v.size() - 1);
        return v[lo] + (h - static_cast<double>(lo)) * (v[hi] - v[lo]);
    };
    q.min    = v.front();
    q.q1     = at(0.25);
    q.median = at(0.5);
    q.q3     = at(0.75);
    q.max    = v.back();
    double s = 0;
    for (double x : v)
        s += x;
    q.mean = s / static_cast<double>(v.size());
    return q;
}

enum class PrescreenScope { per_fold, global };

struct CvConfig {
    /// The first kind is the reference method for error reduction rates.
    std::vector<ClassifierKind> kinds{ClassifierKind::ipgsrc};
    DictionaryMode mode = DictionaryMode::fixed;
    ClassifierOptions classifier;
    Index top_k           = 0; ///< 0 disables SNR prescreening
    PrescreenScope prescreen = PrescreenScope::per_fold;
    int positive_class    = 1;
    int jobs              = 1;
};

struct FoldRecord {
    int repeat = 0;
    int fold   = 0;
    std::vector<Index> test_indices;
    std::vector<Prediction> predictions;
    double accuracy = 0;
    SolveStatus solver_status = SolveStatus::converged;
    int solver_iterations     = 0;
};

struct MeanStd {
    double mean = not_a_number;
    double std  = not_a_number;
};

struct ClassifierReport {
    ClassifierKind kind = ClassifierKind::ipgsrc;
    std::vector<FoldRecord> folds;
    MeanStd accuracy, sensitivity, specificity, auc;
    std::vector<RocPoint> roc;
    Quartiles csi;
    Quartiles error_rates; ///< per-fold error rates (box plot)
    int solver_max_iterations = 0;

    double error_rate_percent() const { return 100.0 * (1.0 - accuracy.mean); }
};

struct EvaluationReport {
    Index genes   = 0;
    Index samples = 0;
    std::vector<std::string> class_names;
    int positive_class = 1;
    int k = 0, repeats = 0;
    std::uint64_t seed = 0;
    std::string mode;
    Index top_k = 0;
    std::string prescreen;
    std::vector<ClassifierReport> classifiers;
    /// baseline name -> ERR (%) of switching from the baseline to the first kind
    std::vector<std::pair<std::string, double>> err_vs;
};

namespace detail {

inline MeanStd mean_std(const std::vector<double> &v) {
    MeanStd out;
    if (v.empty())
        return out;
    double s = 0;
    for (double x : v)
        s += x;
    out.mean = s / static_cast<double>(v.size());
    if (v.size() < 2) {
        out.std = 0;
        return out;
    }
    double sq = 0;
    for (double x : v)
        sq += (x - out.mean) * (x - out.mean);
    out.std = std::sqrt(sq / static_cast<double>(v.size() - 1));
    return out;
}

struct CellResult {
    std::vector<FoldRecord> per_kind;
};

inline CellResult run_cell(const ExpressionDataset &ds, const CvConfig &cfg, const FoldPlan &plan,
                           int repeat, int fold, const std::vector<Index> *global_genes) {
    const auto &test_idx = plan.assignments[static_cast<std::size_t>(repeat)][static_cast<std::size_t>(fold)];
    auto train = ds.select_samples(plan.training_indices(repeat, fold));
    auto test  = ds.select_samples(test_idx);
    if (global_genes) {
        train = train.select_genes(*global_genes);
        test  = test.select_genes(*global_genes);
    } else if (cfg.top_k > 0) {
        auto ranking = snr_rank(train, cfg.top_k);
        std::vector<Index> genes(ranking.order.begin(), ranking.order.begin() + cfg.top_k);
        train = std::move(ranking.reduced);
        test  = test.select_genes(genes);
    }
    auto dict = build_dictionary(cfg.mode, train, test, cfg.classifier.dictionary);

    CellResult cell;
    for (auto kind : cfg.kinds) {
        auto result = classify_dictionary(kind, dict, cfg.classifier);
        FoldRecord rec;
        rec.repeat            = repeat;
        rec.fold              = fold;
        rec.test_indices      = test_idx;
        rec.solver_status     = result.solution.status;
        rec.solver_iterations = result.solution.iterations;
        Index correct = 0;
        for (std::size_t i = 0; i < test_idx.size(); ++i)
            correct += result.predictions[i].label == test.labels[i];
        rec.accuracy    = static_cast<double>(correct) / static_cast<double>(test_idx.size());
        rec.predictions = std::move(result.predictions);
        cell.per_kind.push_back(std::move(rec));
    }
    return cell;
}

inline void aggregate(ClassifierReport &rep, const ExpressionDataset &ds, const FoldPlan &plan,
                      int positive_class) {
    const bool binary = ds.classes() == 2;
    Index correct = 0, total = 0;
    std::vector<double> fold_acc, fold_err, csi;
    for (auto &f : rep.folds) {
        fold_acc.push_back(f.accuracy);
        fold_err.push_back(1.0 - f.accuracy);
        total += static_cast<Index>(f.predictions.size());
        correct += static_cast<Index>(std::llround(f.accuracy * static_cast<double>(f.predictions.size())));
        for (auto &p : f.predictions)
            csi.push_back(p.csi);
        if (f.solver_status == SolveStatus::max_iterations)
            ++rep.solver_max_iterations;
    }
    rep.accuracy      = mean_std(fold_acc);
    rep.accuracy.mean = static_cast<double>(correct) / static_cast<double>(total);
    rep.csi           = quartiles(csi);
    rep.error_rates   = quartiles(fold_err);
    if (!binary)
        return;

    std::vector<double> sens, spec, auc;
    std::vector<double> all_scores;
    std::vector<bool> all_truth;
    for (int r = 0; r < plan.repeats; ++r) {
        std::vector<int> pred, truth;
        std::vector<double> scores;
        std::vector<bool> is_pos;
        for (auto &f : rep.folds) {
            if (f.repeat != r)
                continue;
            for (std::size_t i = 0; i < f.test_indices.size(); ++i) {
                const int t = ds.labels[static_cast<std::size_t>(f.test_indices[i])];
                pred.push_back(f.predictions[i].label);
                truth.push_back(t);
                scores.push_back(binary_score(f.predictions[i], positive_class));
                is_pos.push_back(t == positive_class);
            }
        }
        auto cm = confusion_metrics(pred, truth, positive_class);
        sens.push_back(cm.sensitivity);
        spec.push_back(cm.specificity);
        auc.push_back(roc_auc(scores, is_pos).auc);
        all_scores.insert(all_scores.end(), scores.begin(), scores.end());
        all_truth.insert(all_truth.end(), is_pos.begin(), is_pos.end());
    }
    rep.sensitivity = mean_std(sens);
    rep.specificity = mean_std(spec);
    rep.auc         = mean_std(auc);
    rep.roc         = roc_auc(all_scores, all_truth).curve;
}

} // namespace detail

/// Repeated k-fold evaluation of one or more classifiers.
///
/// Each (repeat, fold) cell prescreens genes on its training split (unless
/// global), builds one variation dictionary and runs every configured kind on
/// it. Cells may run on `cfg.jobs` threads; results are assembled in
/// (repeat, fold) order. Any failing cell aborts the whole evaluation.
inline EvaluationReport cross_validate(const ExpressionDataset &ds, const CvConfig &cfg,
                                       const FoldPlan &plan) {
    if (!ds.labeled())
        throw DataError("cross_validate: dataset must be labeled");
    if (ds.has_missing())
        throw DataError("cross_validate: impute missing values first");
    if (cfg.kinds.empty())
        throw std::invalid_argument("cross_validate: no classifier kinds");
    if (plan.assignments.size() != static_cast<std::size_t>(plan.repeats))
        throw std::invalid_argument("cross_validate: malformed fold plan");
    if (ds.classes() == 2 && (cfg.positive_class < 0 || cfg.positive_class > 1))
        throw std::invalid_argument("cross_validate: positive class out of range");

    std::vector<Index> global_genes;
    const bool use_global = cfg.top_k > 0 && cfg.prescreen == PrescreenScope::global;
    if (use_global) {
        auto ranking = snr_rank(ds, cfg.top_k);
        global_genes.assign(ranking.order.begin(), ranking.order.begin() + cfg.top_k);
    }

    const int cells = plan.repeats * plan.k;
    std::vector<detail::CellResult> results(static_cast<std::size_t>(cells));
    std::vector<std::exception_ptr> errors(static_cast<std::size_t>(cells));
    std::atomic<int> next{0};
    auto worker = [&] {
        for (int c = next++; c < cells; c = next++) {
            try {
                results[static_cast<std::size_t>(c)] = detail::run_cell(
                    ds, cfg, plan, c / plan.k, c % plan.k, use_global ? &global_genes : nullptr);
            } catch (...) {
                errors[static_cast<std::size_t>(c)] = std::current_exception();
            }
        }
    };
    const int jobs = std::clamp(cfg.jobs, 1, cells);
    if (jobs == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (int j = 0; j < jobs; ++j)
            pool.emplace_back(worker);
        for (auto &t : pool)
            t.join();
    }
    for (auto &e : errors)
        if (e)
            std::rethrow_exception(e);

    EvaluationReport report;
    report.genes          = cfg.top_k > 0 ? cfg.top_k : ds.genes();
    report.samples        = ds.samples();
    report.class_names    = ds.class_names;
    report.positive_class = cfg.positive_class;
    report.k              = plan.k;
    report.repeats        = plan.repeats;
    report.seed           = plan.seed;
    report.mode           = to_string(cfg.mode);
    report.top_k          = cfg.top_k;
    report.prescreen      = cfg.prescreen == PrescreenScope::global ? "global" : "per_fold";
    for (std::size_t q = 0; q < cfg.kinds.size(); ++q) {
        ClassifierReport rep;
        rep.kind = cfg.kinds[q];
        for (auto &cell : results)
            rep.folds.push_back(std::move(cell.per_kind[q]));
        detail::aggregate(rep, ds, plan, cfg.positive_class);
        report.classifiers.push_back(std::move(rep));
    }
    const double reference = report.classifiers.front().error_rate_percent();
    for (std::size_t q = 1; q < report.classifiers.size(); ++q) {
        const auto &b = report.classifiers[q];
        const double er1 = b.error_rate_percent();
        report.err_vs.emplace_back(to_string(b.kind), er1 > 0 ? err(er1, reference) : not_a_number);
    }
    return report;
}

namespace detail {

inline nlohmann::json number_or_null(double v) {
    return std::isfinite(v) ? nlohmann::json(v) : nlohmann::json(nullptr);
}

inline nlohmann::json to_json(const MeanStd &v) {
    return {{"mean", number_or_null(v.mean)}, {"std", number_or_null(v.std)}};
}

inline nlohmann::json to_json(const Quartiles &q) {
    return {{"min", number_or_null(q.min)},       {"q1", number_or_null(q.q1)},
            {"median", number_or_null(q.median)}, {"q3", number_or_null(q.q3)},
            {"max", number_or_null(q.max)},       {"mean", number_or_null(q.mean)},
            {"iqr", number_or_null(q.iqr())}};
}

} // namespace detail

/// Serializes a report as schema "report_v1".
inline nlohmann::json report_to_json(const EvaluationReport &r) {
    nlohmann::json j;
    j["schema"]         = "report_v1";
    j["tool_version"]   = version_string;
    j["seed"]           = r.seed;
    j["dataset"]        = {{"genes", r.genes}, {"samples", r.samples}, {"classes", r.class_names}};
    j["positive_class"] = r.class_names.at(static_cast<std::size_t>(r.positive_class));
    j["cv"]             = {{"k", r.k}, {"repeats", r.repeats}};
    j["dictionary_mode"] = r.mode;
    j["prescreen"]      = {{"top_k", r.top_k}, {"scope", r.prescreen}};
    nlohmann::json classifiers = nlohmann::json::array();
    for (auto &c : r.classifiers) {
        nlohmann::json roc = nlohmann::json::array();
        for (auto &p : c.roc)
            roc.push_back({p.fpr, p.tpr});
        classifiers.push_back({
            {"kind", to_string(c.kind)},
            {"accuracy", detail::to_json(c.accuracy)},
            {"sensitivity", detail::to_json(c.sensitivity)},
            {"specificity", detail::to_json(c.specificity)},
            {"auc", detail::to_json(c.auc)},
            {"error_rate_percent", c.error_rate_percent()},
            {"box_stats", detail::to_json(c.error_rates)},
            {"csi_summary", detail::to_json(c.csi)},
            {"solver_max_iterations", c.solver_max_iterations},
            {"roc_points", roc.size()},
        });
    }
    j["classifiers"] = classifiers;
    nlohmann::json errs = nlohmann::json::object();
    for (auto &[name, v] : r.err_vs)
        errs[name] = detail::number_or_null(v);
    j["err_vs"] = errs;
    return j;
}

} // namespace varlex
