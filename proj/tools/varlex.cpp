// varlex: command line front end for the variation-dictionary classifiers.

#include <varlex/config.hpp>
#include <varlex/eval.hpp>
#include <varlex/rpca.hpp>
#include <varlex/version.hpp>

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <optional>
#include <string>
#include <vector>

namespace fs = std::filesystem;
using namespace varlex;

namespace {

constexpr int exit_ok           = 0;
constexpr int exit_usage        = 1;
constexpr int exit_data         = 2;
constexpr int exit_nonconverged = 3;

std::string provenance(std::uint64_t seed) {
    return std::string("varlex ") + version_string + " seed=" + std::to_string(seed);
}

std::ofstream open_output(const fs::path &path, std::uint64_t seed) {
    if (path.has_parent_path())
        fs::create_directories(path.parent_path());
    std::ofstream out(path);
    if (!out)
        throw DataError("cannot write '" + path.string() + "'");
    out << "# " << provenance(seed) << '\n';
    return out;
}

void write_labelled_matrix(const fs::path &path, std::uint64_t seed, const std::string &corner,
                           const std::vector<std::string> &row_ids,
                           const std::vector<std::string> &col_ids, const Matrix &M) {
    auto out = open_output(path, seed);
    out << corner;
    for (auto &c : col_ids)
        out << ',' << c;
    out << '\n';
    for (Index r = 0; r < M.rows(); ++r) {
        out << row_ids[static_cast<std::size_t>(r)];
        for (Index c = 0; c < M.cols(); ++c)
            out << ',' << detail::format_double(M(r, c));
        out << '\n';
    }
}

std::string fmt(double v) { return detail::format_double(v); }

ExpressionDataset prepare(ExpressionDataset ds, const std::string &impute) {
    if (impute != "none")
        return impute_missing(std::move(ds), parse_impute_strategy(impute));
    if (ds.has_missing())
        throw DataError("matrix has missing values; choose an impute strategy "
                        "(zero, gene_mean, sample_mean)");
    return ds;
}

ExpressionDataset load_labeled(const std::string &matrix, const std::string &labels,
                               const std::string &impute) {
    return prepare(load_expression_csv(matrix, labels), impute);
}

ExpressionDataset load_any(const std::string &matrix, const std::string &labels,
                           const std::string &impute) {
    if (!labels.empty())
        return load_labeled(matrix, labels, impute);
    return prepare(load_unlabeled_csv(matrix), impute);
}

RpcaOptions rpca_options(const std::string &lambda, double tol, int max_iter, double rho,
                         std::optional<double> mu0) {
    RpcaOptions o;
    if (lambda != "auto") {
        try {
            o.lambda = std::stod(lambda);
        } catch (const std::exception &) {
            throw std::invalid_argument("lambda must be 'auto' or a positive number");
        }
    }
    o.tol      = tol;
    o.max_iter = max_iter;
    o.rho      = rho;
    o.mu0      = mu0;
    o.validate();
    return o;
}

// ---------------------------------------------------------------- decompose

struct DecomposeArgs {
    std::string input, impute = "none", lambda = "auto", out = ".", trace;
    double tol = 1e-7, rho = 1.5;
    std::optional<double> mu0;
    int max_iter = 1000;
};

int run_decompose(const DecomposeArgs &a, std::uint64_t seed, bool strict) {
    auto ds   = load_any(a.input, {}, a.impute);
    auto opts = rpca_options(a.lambda, a.tol, a.max_iter, a.rho, a.mu0);
    auto res  = rpca_decompose(ds.values, opts);

    const fs::path dir = a.out;
    fs::create_directories(dir);
    write_labelled_matrix(dir / "L.csv", seed, "gene_id", ds.gene_ids, ds.sample_ids, res.low_rank);
    write_labelled_matrix(dir / "S.csv", seed, "gene_id", ds.gene_ids, ds.sample_ids, res.sparse);
    const fs::path trace_path = a.trace.empty() ? dir / "trace.csv" : fs::path(a.trace);
    auto trace = open_output(trace_path, seed);
    trace << "iter,residual,rank,nnz\n";
    for (auto &t : res.trace)
        trace << t.iter << ',' << fmt(t.residual) << ',' << t.rank << ',' << t.nnz << '\n';

    std::cout << "rpca: " << res.iterations << " iterations, residual "
              << fmt(res.final_residual()) << ", lambda " << fmt(res.lambda)
              << (res.converged ? "" : " (not converged)") << '\n';
    return strict && !res.converged ? exit_nonconverged : exit_ok;
}

// ---------------------------------------------------------------- dict

struct RpcaArgs {
    std::string lambda = "auto";
    double tol = 1e-7, rho = 1.5;
    int max_iter = 1000;
};

void add_rpca_flags(CLI::App *app, RpcaArgs &r) {
    app->add_option("--rpca-lambda", r.lambda, "RPCA sparsity weight: auto or a positive number");
    app->add_option("--rpca-tol", r.tol, "RPCA relative residual tolerance");
    app->add_option("--rpca-max-iter", r.max_iter, "RPCA iteration cap");
    app->add_option("--rpca-rho", r.rho, "RPCA penalty growth factor");
}

struct DictArgs {
    std::string mode = "fixed", train, train_labels, test, impute = "none", out = "dict";
    bool per_sample = false;
    RpcaArgs rpca;
};

nlohmann::json dictionary_meta(const VariationDictionary &d, const ExpressionDataset &train,
                               const ExpressionDataset &test, std::uint64_t seed) {
    nlohmann::json j;
    j["schema"]           = "dict_v1";
    j["tool_version"]     = version_string;
    j["seed"]             = seed;
    j["mode"]             = to_string(d.mode);
    j["class_names"]      = train.class_names;
    j["groups"]           = d.groups;
    j["train_ids"]        = train.sample_ids;
    j["test_ids"]         = test.sample_ids;
    j["train_norms"]      = std::vector<double>(d.train_norms.data(), d.train_norms.data() + d.train_norms.size());
    j["test_norms"]       = std::vector<double>(d.test_norms.data(), d.test_norms.data() + d.test_norms.size());
    j["train_degenerate"] = d.train_degenerate;
    j["test_degenerate"]  = d.test_degenerate;
    j["rpca_runs"]        = d.rpca_runs;
    j["rpca_nonconverged"] = d.rpca_nonconverged;
    return j;
}

int run_dict(const DictArgs &a, std::uint64_t seed, bool strict) {
    auto train = load_labeled(a.train, a.train_labels, a.impute);
    auto test  = load_any(a.test, {}, a.impute);
    DictionaryOptions opts;
    opts.rpca       = rpca_options(a.rpca.lambda, a.rpca.tol, a.rpca.max_iter, a.rpca.rho, {});
    opts.per_sample = a.per_sample;
    auto dict = build_dictionary(parse_dictionary_mode(a.mode), train, test, opts);

    const fs::path dir = a.out;
    fs::create_directories(dir);
    write_labelled_matrix(dir / "S_X.csv", seed, "gene_id", train.gene_ids, train.sample_ids,
                          dict.train_sparse);
    write_labelled_matrix(dir / "S_Y.csv", seed, "gene_id", test.gene_ids, test.sample_ids,
                          dict.test_sparse);
    std::ofstream meta(dir / "groups.json");
    if (!meta)
        throw DataError("cannot write '" + (dir / "groups.json").string() + "'");
    meta << dictionary_meta(dict, train, test, seed).dump(2) << '\n';

    std::cout << "dictionary: " << dict.genes() << " genes, " << dict.train_samples()
              << " training atoms, " << dict.test_samples() << " test columns, "
              << dict.rpca_runs << " RPCA runs\n";
    return strict && dict.rpca_nonconverged > 0 ? exit_nonconverged : exit_ok;
}

struct LoadedDictionary {
    VariationDictionary dict;
    std::vector<std::string> train_ids, test_ids, class_names;
};

LoadedDictionary load_dictionary(const fs::path &dir) {
    std::ifstream in(dir / "groups.json");
    if (!in)
        throw DataError("cannot open '" + (dir / "groups.json").string() + "'");
    nlohmann::json j;
    try {
        in >> j;
    } catch (const nlohmann::json::exception &e) {
        throw DataError("'" + (dir / "groups.json").string() + "': " + e.what());
    }
    LoadedDictionary out;
    auto sx = load_unlabeled_csv(dir / "S_X.csv");
    auto sy = load_unlabeled_csv(dir / "S_Y.csv");
    if (sx.gene_ids != sy.gene_ids)
        throw DataError("dictionary: S_X and S_Y gene ids differ");
    try {
        out.dict.groups = j.at("groups").get<GroupStructure>();
        out.dict.mode   = parse_dictionary_mode(j.at("mode").get<std::string>());
        out.class_names = j.at("class_names").get<std::vector<std::string>>();
    } catch (const nlohmann::json::exception &e) {
        throw DataError("'" + (dir / "groups.json").string() + "': " + e.what());
    }
    if (out.dict.groups.class_of.size() != sx.sample_ids.size())
        throw DataError("dictionary: groups.json does not match S_X columns");
    out.dict.train_sparse = sx.values;
    out.dict.test_sparse  = sy.values;
    out.train_ids         = sx.sample_ids;
    out.test_ids          = sy.sample_ids;
    return out;
}

// ---------------------------------------------------------------- solve

struct SolverArgs {
    double beta1 = 1, beta2 = 1, gamma = 1.618, tol = 1e-6, noise_eps = 0;
    int max_iter = 2000;
    std::string weights = "sqrt";
};

void add_solver_flags(CLI::App *app, SolverArgs &s) {
    app->add_option("--beta1", s.beta1, "ADMM penalty on Z = M");
    app->add_option("--beta2", s.beta2, "ADMM penalty on D M = T");
    app->add_option("--gamma", s.gamma, "multiplier step length, 0 < gamma < 1.618...");
    app->add_option("--tol", s.tol, "ADMM primal tolerance");
    app->add_option("--max-iter", s.max_iter, "ADMM iteration cap");
    app->add_option("--noise-eps", s.noise_eps, "relax D M = T to ||D M - T||_F <= eps");
    app->add_option("--weights", s.weights, "group weights: sqrt or unit");
}

SolverOptions solver_options(const SolverArgs &s) {
    SolverOptions o;
    o.beta1 = s.beta1;
    o.beta2 = s.beta2;
    o.gamma1 = o.gamma2 = s.gamma;
    o.tol       = s.tol;
    o.max_iter  = s.max_iter;
    o.noise_eps = s.noise_eps;
    o.validate();
    return o;
}

BlockWeighting weighting(const std::string &w) {
    if (w == "sqrt")
        return BlockWeighting::sqrt_size;
    if (w == "unit")
        return BlockWeighting::unit;
    throw std::invalid_argument("weights must be sqrt or unit");
}

struct SolveArgs {
    std::string problem = "ipgsrc", dict = "dict", out = ".", history;
    SolverArgs solver;
};

int run_solve(const SolveArgs &a, std::uint64_t seed, bool strict) {
    const auto kind = parse_classifier_kind(a.problem);
    auto opts       = solver_options(a.solver);
    auto loaded     = load_dictionary(a.dict);
    auto problem    = make_problem(kind, loaded.dict, weighting(a.solver.weights));
    auto sol        = ipgsr_solve(problem, opts);

    const fs::path dir = a.out;
    fs::create_directories(dir);
    if (is_inverse(kind))
        write_labelled_matrix(dir / "M.csv", seed, "test_id", loaded.test_ids, loaded.train_ids, sol.M);
    else
        write_labelled_matrix(dir / "M.csv", seed, "train_id", loaded.train_ids, loaded.test_ids, sol.M);
    const fs::path hist_path = a.history.empty() ? dir / "history.csv" : fs::path(a.history);
    auto hist = open_output(hist_path, seed);
    hist << "iter,r_z,r_feas,objective\n";
    for (auto &h : sol.history)
        hist << h.iter << ',' << fmt(h.r_z) << ',' << fmt(h.r_feas) << ',' << fmt(h.objective) << '\n';

    std::cout << to_string(kind) << ": " << sol.iterations << " iterations, status "
              << to_string(sol.status) << '\n';
    return strict && sol.status == SolveStatus::max_iterations ? exit_nonconverged : exit_ok;
}

// ---------------------------------------------------------------- classify

struct ClassifyArgs {
    std::string kind = "ipgsrc", mode = "fixed", train, train_labels, test, test_labels,
                impute = "none", ccr = "absolute", out = "predictions.csv";
    bool per_sample = false;
    Index top_k     = 0;
    SolverArgs solver;
    RpcaArgs rpca;
};

int run_classify(const ClassifyArgs &a, std::uint64_t seed, bool strict) {
    const auto kind = parse_classifier_kind(a.kind);
    const auto mode = parse_dictionary_mode(a.mode);
    ClassifierOptions opts;
    opts.solver    = solver_options(a.solver);
    opts.weighting = weighting(a.solver.weights);
    if (a.ccr == "absolute")
        opts.ccr = CcrMode::absolute;
    else if (a.ccr == "signed")
        opts.ccr = CcrMode::signed_mass;
    else
        throw std::invalid_argument("ccr must be absolute or signed");
    opts.dictionary.rpca = rpca_options(a.rpca.lambda, a.rpca.tol, a.rpca.max_iter, a.rpca.rho, {});
    opts.dictionary.per_sample = a.per_sample;

    auto train = load_labeled(a.train, a.train_labels, a.impute);
    auto test  = load_any(a.test, a.test_labels, a.impute);
    if (a.top_k < 0)
        throw std::invalid_argument("top-k must be >= 0");
    if (a.top_k > 0) {
        auto ranking = snr_rank(train, a.top_k);
        std::vector<Index> genes(ranking.order.begin(), ranking.order.begin() + a.top_k);
        if (test.gene_ids != train.gene_ids)
            throw DataError("training and test matrices list different genes");
        train = std::move(ranking.reduced);
        test  = test.select_genes(genes);
    }
    auto result = run_classifier(kind, train, test, mode, opts);

    const int c = train.classes();
    auto out = open_output(a.out, seed);
    out << "# scores are " << (is_inverse(kind) ? "category contribution rates" : "class residuals")
        << "; class order:";
    for (int j = 0; j < c; ++j)
        out << ' ' << j + 1 << '=' << train.class_names[static_cast<std::size_t>(j)];
    out << '\n';
    out << "sample_id,predicted";
    for (int j = 0; j < c; ++j)
        out << ",score_" << j + 1;
    out << ",csi,flags\n";
    Index correct = 0;
    for (std::size_t r = 0; r < result.predictions.size(); ++r) {
        const auto &p = result.predictions[r];
        const auto &predicted = train.class_names[static_cast<std::size_t>(p.label)];
        out << test.sample_ids[r] << ',' << predicted;
        for (double s : p.scores)
            out << ',' << fmt(s);
        std::string flags;
        if (p.tie)
            flags = "tie";
        if (p.degenerate)
            flags += flags.empty() ? "degenerate" : ";degenerate";
        out << ',' << fmt(p.csi) << ',' << flags << '\n';
        if (test.labeled())
            correct += test.class_names[static_cast<std::size_t>(test.labels[r])] == predicted;
    }

    std::cout << to_string(kind) << ": " << result.predictions.size() << " test samples, solver "
              << to_string(result.solution.status);
    if (test.labeled())
        std::cout << ", accuracy "
                  << fmt(static_cast<double>(correct) / static_cast<double>(test.samples()));
    std::cout << '\n';
    return strict && result.solution.status == SolveStatus::max_iterations ? exit_nonconverged
                                                                           : exit_ok;
}

// ---------------------------------------------------------------- eval

void write_eval_outputs(const EvaluationReport &report, const ExpressionDataset &ds,
                        const fs::path &dir) {
    fs::create_directories(dir);
    {
        std::ofstream out(dir / "report.json");
        if (!out)
            throw DataError("cannot write '" + (dir / "report.json").string() + "'");
        out << report_to_json(report).dump(2) << '\n';
    }
    const bool binary = ds.classes() == 2;
    {
        auto out = open_output(dir / "roc.csv", report.seed);
        out << "classifier,fpr,tpr\n";
        for (auto &c : report.classifiers)
            for (auto &p : c.roc)
                out << to_string(c.kind) << ',' << fmt(p.fpr) << ',' << fmt(p.tpr) << '\n';
    }
    {
        auto out = open_output(dir / "folds.csv", report.seed);
        out << "repeat,fold,classifier,test_size,accuracy,solver_status,solver_iterations\n";
        for (auto &c : report.classifiers)
            for (auto &f : c.folds)
                out << f.repeat << ',' << f.fold << ',' << to_string(c.kind) << ','
                    << f.test_indices.size() << ',' << fmt(f.accuracy) << ','
                    << to_string(f.solver_status) << ',' << f.solver_iterations << '\n';
    }
    {
        auto out = open_output(dir / "csi.csv", report.seed);
        out << "repeat,fold,classifier,sample_id,truth,predicted,csi,score\n";
        for (auto &c : report.classifiers)
            for (auto &f : c.folds)
                for (std::size_t i = 0; i < f.test_indices.size(); ++i) {
                    const auto s = static_cast<std::size_t>(f.test_indices[i]);
                    const auto &p = f.predictions[i];
                    out << f.repeat << ',' << f.fold << ',' << to_string(c.kind) << ','
                        << ds.sample_ids[s] << ','
                        << ds.class_names[static_cast<std::size_t>(ds.labels[s])] << ','
                        << ds.class_names[static_cast<std::size_t>(p.label)] << ',' << fmt(p.csi)
                        << ',' << (binary ? fmt(binary_score(p, report.positive_class)) : "")
                        << '\n';
                }
    }
}

int run_eval(RunConfig cfg, bool dry_run, bool strict) {
    cfg.check_paths();
    const auto labels = cfg.has("labels") ? cfg.path("labels").string() : std::string{};
    auto ds = load_labeled(cfg.path("matrix").string(), labels, cfg.get("impute"));
    auto cv = cfg.cv_config(ds);
    const int k        = static_cast<int>(cfg.integer("k"));
    const int repeats  = static_cast<int>(cfg.integer("repeats"));
    const auto seed_ll = cfg.integer("seed");
    if (repeats < 1)
        throw std::invalid_argument("config: repeats must be >= 1");
    if (seed_ll < 0)
        throw std::invalid_argument("config: seed must be >= 0");
    const auto seed = static_cast<std::uint64_t>(seed_ll);

    if (dry_run) {
        for (auto &[key, _] : RunConfig::known_keys()) {
            std::string value = cfg.has(key) ? cfg.get(key) : "";
            if ((key == "matrix" || key == "labels" || key == "out") && cfg.has(key))
                value = cfg.path(key).string();
            std::cout << key << '=' << value << '\n';
        }
        return exit_ok;
    }

    auto plan   = stratified_kfold(ds, k, repeats, seed);
    auto report = cross_validate(ds, cv, plan);
    write_eval_outputs(report, ds, cfg.path("out"));

    int capped = 0;
    for (auto &c : report.classifiers) {
        std::cout << to_string(c.kind) << ": accuracy " << fmt(c.accuracy.mean) << " +- "
                  << fmt(c.accuracy.std);
        if (ds.classes() == 2)
            std::cout << ", auc " << fmt(c.auc.mean);
        std::cout << ", median csi " << fmt(c.csi.median) << '\n';
        capped += c.solver_max_iterations;
    }
    return strict && capped > 0 ? exit_nonconverged : exit_ok;
}

// ---------------------------------------------------------------- rank-genes

struct RankArgs {
    std::string input, labels, impute = "none", out = "ranked.csv", reduced;
    Index top_k = 0;
};

int run_rank(const RankArgs &a, std::uint64_t seed) {
    auto ds = load_labeled(a.input, a.labels, a.impute);
    if (a.top_k < 0)
        throw std::invalid_argument("top-k must be >= 0");
    const Index keep = a.top_k > 0 ? a.top_k : ds.genes();
    auto ranking = snr_rank(ds, keep);
    auto out = open_output(a.out, seed);
    out << "rank,gene_id,snr\n";
    for (Index r = 0; r < keep; ++r) {
        const auto g = ranking.order[static_cast<std::size_t>(r)];
        out << r + 1 << ',' << ds.gene_ids[static_cast<std::size_t>(g)] << ','
            << fmt(ranking.snr(g)) << '\n';
    }
    if (!a.reduced.empty())
        write_expression_csv(ranking.reduced, a.reduced, {provenance(seed)}, true);
    std::cout << "ranked " << ds.genes() << " genes";
    if (!ranking.zero_spread.empty())
        std::cout << " (" << ranking.zero_spread.size() << " with zero spread)";
    std::cout << '\n';
    return exit_ok;
}

} // namespace

int main(int argc, char **argv) {
    CLI::App app{"Variation-dictionary gene expression classifiers"};
    app.require_subcommand(1);
    std::uint64_t seed = 0;
    bool strict        = false;

    auto common = [&](CLI::App *sub) {
        sub->add_option("--seed", seed, "seed recorded in output headers");
        sub->add_flag("--strict", strict, "exit 3 when an iterative solver hits its cap");
    };

    auto *version_cmd = app.add_subcommand("version", "print the version");

    DecomposeArgs dec;
    auto *decompose = app.add_subcommand("decompose", "low-rank plus sparse decomposition");
    decompose->add_option("--input", dec.input, "matrix CSV")->required();
    decompose->add_option("--lambda", dec.lambda, "sparsity weight: auto or a positive number");
    decompose->add_option("--tol", dec.tol, "relative residual tolerance");
    decompose->add_option("--max-iter", dec.max_iter, "iteration cap");
    decompose->add_option("--rho", dec.rho, "penalty growth factor");
    decompose->add_option("--mu0", dec.mu0, "initial penalty (default 1.25 / ||X||_2)");
    decompose->add_option("--trace", dec.trace, "trace CSV path (default <out>/trace.csv)");
    decompose->add_option("--out", dec.out, "output directory for L.csv and S.csv");
    decompose->add_option("--impute", dec.impute, "none, zero, gene_mean or sample_mean");
    common(decompose);

    DictArgs dic;
    auto *dict = app.add_subcommand("dict", "build a variation dictionary");
    dict->add_option("--mode", dic.mode, "fixed or changing");
    dict->add_option("--train", dic.train, "training matrix CSV")->required();
    dict->add_option("--train-labels", dic.train_labels, "sample_id,label CSV for the training matrix");
    dict->add_option("--test", dic.test, "test matrix CSV")->required();
    dict->add_option("--out", dic.out, "output directory (S_X.csv, S_Y.csv, groups.json)");
    dict->add_option("--impute", dic.impute, "none, zero, gene_mean or sample_mean");
    dict->add_flag("--per-sample", dic.per_sample, "changing mode: one decomposition per test sample");
    add_rpca_flags(dict, dic.rpca);
    common(dict);

    SolveArgs sol;
    auto *solve = app.add_subcommand("solve", "group-sparse representation on a saved dictionary");
    solve->add_option("--problem", sol.problem, "ipgsrc, iprc, gsrc or src");
    solve->add_option("--dict", sol.dict, "directory written by 'varlex dict'");
    solve->add_option("--out", sol.out, "output directory for M.csv");
    solve->add_option("--history", sol.history, "history CSV path (default <out>/history.csv)");
    add_solver_flags(solve, sol.solver);
    common(solve);

    ClassifyArgs cls;
    auto *classify = app.add_subcommand("classify", "train on one matrix and label another");
    classify->add_option("--kind", cls.kind, "ipgsrc, iprc, gsrc or src");
    classify->add_option("--mode", cls.mode, "fixed or changing");
    classify->add_option("--train", cls.train, "training matrix CSV")->required();
    classify->add_option("--train-labels", cls.train_labels, "sample_id,label CSV for the training matrix");
    classify->add_option("--test", cls.test, "test matrix CSV")->required();
    classify->add_option("--test-labels", cls.test_labels, "optional labels to score predictions");
    classify->add_option("--out", cls.out, "predictions CSV path");
    classify->add_option("--impute", cls.impute, "none, zero, gene_mean or sample_mean");
    classify->add_option("--ccr", cls.ccr, "absolute or signed coefficient mass");
    classify->add_option("--top-k", cls.top_k, "SNR prescreen on the training matrix, 0 = off");
    classify->add_flag("--per-sample", cls.per_sample, "changing mode: one decomposition per test sample");
    add_solver_flags(classify, cls.solver);
    add_rpca_flags(classify, cls.rpca);
    common(classify);

    std::string config_path;
    bool dry_run = false, global_prescreen = false, per_sample = false;
    std::map<std::string, std::string> overrides;
    auto *eval = app.add_subcommand("eval", "repeated stratified cross-validation");
    eval->add_option("--config", config_path, "flat key=value run configuration");
    for (auto &[key, help] : RunConfig::known_keys()) {
        const std::string names = key == "kinds" ? "--kinds,--kind" : "--" + key;
        eval->add_option(names, overrides[key], help);
    }
    eval->add_flag("--global-prescreen", global_prescreen, "shorthand for --prescreen global");
    eval->add_flag("--per-sample", per_sample, "shorthand for --per_sample true");
    eval->add_flag("--dry-run", dry_run, "validate and print the resolved options");
    eval->add_flag("--strict", strict, "exit 3 when an iterative solver hits its cap");

    RankArgs rk;
    auto *rank = app.add_subcommand("rank-genes", "signal-to-noise gene ranking");
    rank->add_option("--input", rk.input, "matrix CSV")->required();
    rank->add_option("--labels", rk.labels, "sample_id,label CSV (omit for a LABEL row)");
    rank->add_option("--top-k", rk.top_k, "genes to keep, 0 = all");
    rank->add_option("--out", rk.out, "ranking CSV path");
    rank->add_option("--reduced", rk.reduced, "optional reduced matrix CSV path");
    rank->add_option("--impute", rk.impute, "none, zero, gene_mean or sample_mean");
    common(rank);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp &e) {
        return app.exit(e);
    } catch (const CLI::CallForAllHelp &e) {
        return app.exit(e);
    } catch (const CLI::ParseError &e) {
        app.exit(e);
        return exit_usage;
    }

    try {
        if (version_cmd->parsed()) {
            std::cout << version_string << '\n';
            return exit_ok;
        }
        if (decompose->parsed())
            return run_decompose(dec, seed, strict);
        if (dict->parsed())
            return run_dict(dic, seed, strict);
        if (solve->parsed())
            return run_solve(sol, seed, strict);
        if (classify->parsed())
            return run_classify(cls, seed, strict);
        if (rank->parsed())
            return run_rank(rk, seed);
        if (eval->parsed()) {
            RunConfig cfg = config_path.empty() ? RunConfig::defaults() : RunConfig::load(config_path);
            for (auto &[key, value] : overrides) {
                const std::string flag = key == "kinds" ? "--kinds" : "--" + key;
                if (eval->count(flag) > 0) {
                    cfg.values[key] = value;
                    if (key == "matrix" || key == "labels" || key == "out")
                        cfg.values[key] = fs::absolute(value).string();
                }
            }
            if (global_prescreen)
                cfg.values["prescreen"] = "global";
            if (per_sample)
                cfg.values["per_sample"] = "true";
            return run_eval(std::move(cfg), dry_run, strict);
        }
    } catch (const DataError &e) {
        std::cerr << "varlex: data error: " << e.what() << '\n';
        return exit_data;
    } catch (const NumericError &e) {
        std::cerr << "varlex: numerical error: " << e.what() << '\n';
        return exit_data;
    } catch (const std::invalid_argument &e) {
        std::cerr << "varlex: " << e.what() << '\n';
        return exit_usage;
    } catch (const std::exception &e) {
        std::cerr << "varlex: error: " << e.what() << '\n';
        return exit_data;
    }
    return exit_usage;
}
