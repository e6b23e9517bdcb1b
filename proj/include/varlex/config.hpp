#pragma once

#include <varlex/eval.hpp>

#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace varlex {

/// Flat key=value run configuration. Every key can also be given as a
/// same-named command line flag; flags win over file values.
struct RunConfig {
    std::map<std::string, std::string> values;
    std::filesystem::path base_dir; ///< relative paths in the file resolve here

    static const std::vector<std::pair<std::string, std::string>> &known_keys() {
        static const std::vector<std::pair<std::string, std::string>> keys = {
            {"matrix", "expression matrix CSV"},
            {"labels", "sample_id,label CSV (omit if the matrix has a LABEL row)"},
            {"impute", "none | zero | gene_mean | sample_mean"},
            {"kinds", "comma-separated classifiers; the first is the reference for ERR"},
            {"mode", "fixed | changing"},
            {"per_sample", "changing mode: decompose each test sample separately (true|false)"},
            {"k", "folds per repeat"},
            {"repeats", "cross-validation repeats"},
            {"seed", "fold shuffling seed"},
            {"top_k", "SNR prescreen gene count, 0 = off"},
            {"prescreen", "per_fold | global"},
            {"positive_class", "class name treated as positive (default: second class)"},
            {"beta1", "ADMM penalty on Z = M"},
            {"beta2", "ADMM penalty on D M = T"},
            {"gamma1", "multiplier step length for Z = M"},
            {"gamma2", "multiplier step length for D M = T"},
            {"solver_tol", "ADMM primal tolerance"},
            {"solver_max_iter", "ADMM iteration cap"},
            {"noise_eps", "relax D M = T to ||D M - T||_F <= eps"},
            {"weights", "sqrt | unit group weights"},
            {"ccr", "absolute | signed coefficient mass"},
            {"rpca_lambda", "auto | positive real"},
            {"rpca_tol", "RPCA relative residual tolerance"},
            {"rpca_max_iter", "RPCA iteration cap"},
            {"rpca_rho", "RPCA penalty growth factor"},
            {"out", "output directory"},
            {"jobs", "parallel fold jobs"},
        };
        return keys;
    }

    static bool is_known(const std::string &key) {
        for (auto &[k, _] : known_keys())
            if (k == key)
                return true;
        return false;
    }

    static RunConfig defaults() {
        RunConfig c;
        c.values = {{"impute", "none"},      {"kinds", "ipgsrc"},       {"mode", "fixed"},
                    {"per_sample", "false"}, {"k", "10"},               {"repeats", "10"},
                    {"seed", "1"},           {"top_k", "0"},            {"prescreen", "per_fold"},
                    {"beta1", "1"},          {"beta2", "1"},            {"gamma1", "1.618"},
                    {"gamma2", "1.618"},     {"solver_tol", "1e-6"},    {"solver_max_iter", "2000"},
                    {"noise_eps", "0"},      {"weights", "sqrt"},       {"ccr", "absolute"},
                    {"rpca_lambda", "auto"}, {"rpca_tol", "1e-7"},      {"rpca_max_iter", "1000"},
                    {"rpca_rho", "1.5"},     {"out", "."},              {"jobs", "1"}};
        return c;
    }

    /// Parses `key = value` lines; '#' starts a comment. Unknown keys are errors.
    static RunConfig parse(std::istream &in, const std::string &origin) {
        RunConfig c = defaults();
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (auto hash = line.find('#'); hash != std::string::npos)
                line.erase(hash);
            auto t = std::string(detail::trim(line));
            if (t.empty())
                continue;
            auto eq = t.find('=');
            if (eq == std::string::npos)
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                            ": expected key=value");
            auto key   = std::string(detail::trim(std::string_view(t).substr(0, eq)));
            auto value = std::string(detail::trim(std::string_view(t).substr(eq + 1)));
            if (key == "kind")
                key = "kinds";
            if (!is_known(key))
                throw std::invalid_argument(origin + ":" + std::to_string(lineno) +
                                            ": unknown key '" + key + "'");
            c.values[key] = value;
        }
        return c;
    }

    static RunConfig load(const std::filesystem::path &path) {
        std::ifstream in(path);
        if (!in)
            throw std::invalid_argument("cannot open config '" + path.string() + "'");
        auto c     = parse(in, path.string());
        c.base_dir = path.parent_path();
        return c;
    }

    bool has(const std::string &key) const {
        auto it = values.find(key);
        return it != values.end() && !it->second.empty();
    }

    const std::string &get(const std::string &key) const {
        auto it = values.find(key);
        if (it == values.end() || it->second.empty())
            throw std::invalid_argument("config: missing required key '" + key + "'");
        return it->second;
    }

    std::filesystem::path path(const std::string &key) const {
        std::filesystem::path p = get(key);
        return p.is_absolute() || base_dir.empty() ? p : base_dir / p;
    }

    double real(const std::string &key) const {
        const auto &s = get(key);
        try {
            std::size_t used = 0;
            double v = std::stod(s, &used);
            if (used != s.size())
                throw std::invalid_argument(s);
            return v;
        } catch (const std::exception &) {
            throw std::invalid_argument("config: '" + key + "' is not a number: " + s);
        }
    }

    long long integer(const std::string &key) const {
        const auto &s = get(key);
        try {
            std::size_t used = 0;
            long long v = std::stoll(s, &used);
            if (used != s.size())
                throw std::invalid_argument(s);
            return v;
        } catch (const std::exception &) {
            throw std::invalid_argument("config: '" + key + "' is not an integer: " + s);
        }
    }

    bool boolean(const std::string &key) const {
        const auto &s = get(key);
        if (s == "true" || s == "1" || s == "yes")
            return true;
        if (s == "false" || s == "0" || s == "no")
            return false;
        throw std::invalid_argument("config: '" + key + "' is not a boolean: " + s);
    }

    /// Option bundle for the classifiers; throws std::invalid_argument on
    /// malformed or out-of-range values.
    ClassifierOptions classifier_options() const {
        ClassifierOptions o;
        o.solver.beta1     = real("beta1");
        o.solver.beta2     = real("beta2");
        o.solver.gamma1    = real("gamma1");
        o.solver.gamma2    = real("gamma2");
        o.solver.tol       = real("solver_tol");
        o.solver.max_iter  = static_cast<int>(integer("solver_max_iter"));
        o.solver.noise_eps = real("noise_eps");
        o.solver.validate();
        const auto &w = get("weights");
        if (w == "sqrt")
            o.weighting = BlockWeighting::sqrt_size;
        else if (w == "unit")
            o.weighting = BlockWeighting::unit;
        else
            throw std::invalid_argument("config: weights must be sqrt or unit");
        const auto &ccr = get("ccr");
        if (ccr == "absolute")
            o.ccr = CcrMode::absolute;
        else if (ccr == "signed")
            o.ccr = CcrMode::signed_mass;
        else
            throw std::invalid_argument("config: ccr must be absolute or signed");
        if (get("rpca_lambda") != "auto")
            o.dictionary.rpca.lambda = real("rpca_lambda");
        o.dictionary.rpca.tol      = real("rpca_tol");
        o.dictionary.rpca.max_iter = static_cast<int>(integer("rpca_max_iter"));
        o.dictionary.rpca.rho      = real("rpca_rho");
        o.dictionary.rpca.validate();
        o.dictionary.per_sample = boolean("per_sample");
        return o;
    }

    std::vector<ClassifierKind> kinds() const {
        std::vector<ClassifierKind> out;
        std::stringstream ss(get("kinds"));
        std::string item;
        while (std::getline(ss, item, ','))
            if (auto t = detail::trim(item); !t.empty())
                out.push_back(parse_classifier_kind(t));
        if (out.empty())
            throw std::invalid_argument("config: no classifier kinds");
        return out;
    }

    /// Cross-validation settings; `ds` resolves the positive class name.
    CvConfig cv_config(const ExpressionDataset &ds) const {
        CvConfig cv;
        cv.kinds      = kinds();
        cv.mode       = parse_dictionary_mode(get("mode"));
        cv.classifier = classifier_options();
        cv.top_k      = static_cast<Index>(integer("top_k"));
        if (cv.top_k < 0)
            throw std::invalid_argument("config: top_k must be >= 0");
        const auto &scope = get("prescreen");
        if (scope == "per_fold")
            cv.prescreen = PrescreenScope::per_fold;
        else if (scope == "global")
            cv.prescreen = PrescreenScope::global;
        else
            throw std::invalid_argument("config: prescreen must be per_fold or global");
        cv.positive_class = ds.classes() > 1 ? 1 : 0;
        if (has("positive_class")) {
            const auto &name = get("positive_class");
            auto it = std::find(ds.class_names.begin(), ds.class_names.end(), name);
            if (it == ds.class_names.end())
                throw std::invalid_argument("config: positive_class '" + name + "' not in dataset");
            cv.positive_class = static_cast<int>(it - ds.class_names.begin());
        }
        cv.jobs = static_cast<int>(integer("jobs"));
        if (cv.jobs < 1)
            throw std::invalid_argument("config: jobs must be >= 1");
        return cv;
    }

    /// Throws if referenced input paths are missing.
    void check_paths() const {
        for (const char *key : {"matrix", "labels"}) {
            if (!has(key))
                continue;
            if (!std::filesystem::exists(path(key)))
                throw std::invalid_argument("config: " + std::string(key) + " path '" +
                                            path(key).string() + "' does not exist");
        }
        if (!has("matrix"))
            throw std::invalid_argument("config: missing required key 'matrix'");
    }
};

} // namespace varlex
