#include "test_util.hpp"

#include <varlex/dataset.hpp>

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <set>

using namespace varlex;
using testutil::TempDir;
using testutil::write_text;

namespace {

const char *small_matrix = "gene_id,s1,s2,s3,s4\n"
                           "g1,1.0,2.0,3.0,4.0\n"
                           "g2,0.5,NA,1.5,\n"
                           "g3,-1,-2,-3,-4\n";

const char *small_labels = "sample_id,label\ns1,norm\ns2,norm\ns3,tum\ns4,tum\n";

} // namespace

TEST(Load, SmallMatrixReadsBack) {
    TempDir dir;
    write_text(dir / "m.csv", small_matrix);
    write_text(dir / "l.csv", small_labels);
    auto ds = load_expression_csv(dir / "m.csv", dir / "l.csv");
    EXPECT_EQ(ds.genes(), 3);
    EXPECT_EQ(ds.samples(), 4);
    EXPECT_EQ(ds.classes(), 2);
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"norm", "tum"}));
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 0, 1, 1}));
    EXPECT_DOUBLE_EQ(ds.values(0, 3), 4.0);
    EXPECT_TRUE(std::isnan(ds.values(1, 1)));
    EXPECT_TRUE(std::isnan(ds.values(1, 3)));
    EXPECT_TRUE(ds.has_missing());
}

TEST(Load, ClassOrderFollowsLabelsFile) {
    TempDir dir;
    write_text(dir / "m.csv", small_matrix);
    write_text(dir / "l.csv", "s3,tum\ns1,norm\ns2,norm\ns4,tum\n");
    auto ds = load_expression_csv(dir / "m.csv", dir / "l.csv");
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"tum", "norm"}));
    EXPECT_EQ(ds.labels, (std::vector<int>{1, 1, 0, 0}));
}

TEST(Load, MissingLabelIsCoverageError) {
    TempDir dir;
    write_text(dir / "m.csv", "gene_id,s1,s2,s3,s4,s5\ng1,1,2,3,4,5\n");
    write_text(dir / "l.csv", small_labels);
    try {
        load_expression_csv(dir / "m.csv", dir / "l.csv");
        FAIL() << "expected DataError";
    } catch (const DataError &e) {
        EXPECT_NE(std::string(e.what()).find("label coverage"), std::string::npos);
    }
}

TEST(Load, RowLengthMismatchIsDimensionError) {
    TempDir dir;
    write_text(dir / "m.csv", "gene_id,s1,s2\ng1,1,2\ng2,1\n");
    write_text(dir / "l.csv", "s1,a\ns2,b\n");
    try {
        load_expression_csv(dir / "m.csv", dir / "l.csv");
        FAIL() << "expected DataError";
    } catch (const DataError &e) {
        EXPECT_NE(std::string(e.what()).find("dimension mismatch"), std::string::npos);
    }
}

TEST(Load, DuplicateIdsRejected) {
    TempDir dir;
    write_text(dir / "l.csv", "s1,a\ns2,b\n");
    write_text(dir / "genes.csv", "gene_id,s1,s2\ng1,1,2\ng1,3,4\n");
    EXPECT_THROW(load_expression_csv(dir / "genes.csv", dir / "l.csv"), DataError);
    write_text(dir / "samples.csv", "gene_id,s1,s1\ng1,1,2\n");
    EXPECT_THROW(load_expression_csv(dir / "samples.csv", dir / "l.csv"), DataError);
}

TEST(Load, SingleClassRejected) {
    TempDir dir;
    write_text(dir / "m.csv", "gene_id,s1,s2\ng1,1,2\n");
    write_text(dir / "l.csv", "s1,a\ns2,a\n");
    EXPECT_THROW(load_expression_csv(dir / "m.csv", dir / "l.csv"), DataError);
}

TEST(Load, NonNumericCellRejected) {
    TempDir dir;
    write_text(dir / "m.csv", "gene_id,s1,s2\ng1,1,abc\n");
    write_text(dir / "l.csv", "s1,a\ns2,b\n");
    EXPECT_THROW(load_expression_csv(dir / "m.csv", dir / "l.csv"), DataError);
}

TEST(Load, LabelRowVariant) {
    TempDir dir;
    write_text(dir / "m.csv", "# comment\ngene_id,s1,s2,s3\ng1,1,2,3\ng2,4,5,6\nLABEL,x,y,x\n");
    auto ds = load_expression_csv(dir / "m.csv");
    EXPECT_EQ(ds.genes(), 2);
    EXPECT_EQ(ds.class_names, (std::vector<std::string>{"x", "y"}));
    EXPECT_EQ(ds.labels, (std::vector<int>{0, 1, 0}));
}

TEST(Load, NoLabelsAnywhereRejected) {
    TempDir dir;
    write_text(dir / "m.csv", "gene_id,s1,s2\ng1,1,2\n");
    EXPECT_THROW(load_expression_csv(dir / "m.csv"), DataError);
    auto ds = load_unlabeled_csv(dir / "m.csv");
    EXPECT_FALSE(ds.labeled());
}

TEST(Load, BreastOneShapedFile) {
    // 4869 genes x 78 samples, 33 + 45 per class
    TempDir dir;
    Matrix X = Matrix::Constant(4869, 78, 0.25);
    std::vector<int> labels(78);
    for (int j = 0; j < 78; ++j)
        labels[static_cast<std::size_t>(j)] = j < 33 ? 0 : 1;
    auto ds = testutil::make_dataset(X, labels, {"relapse", "free"});
    write_expression_csv(ds, dir / "m.csv");
    write_labels_csv(ds, dir / "l.csv");
    auto back = load_expression_csv(dir / "m.csv", dir / "l.csv");
    EXPECT_EQ(back.genes(), 4869);
    EXPECT_EQ(back.samples(), 78);
    EXPECT_EQ(back.class_sizes(), (std::vector<Index>{33, 45}));
}

TEST(Load, RoundTripIsExact) {
    TempDir dir;
    std::mt19937_64 rng(11);
    Matrix X = testutil::gaussian(17, 9, rng) * 1e3;
    X(3, 4) = 1e-300;
    X(5, 1) = -0.1;
    X(2, 2) = missing_value;
    std::vector<int> labels{0, 1, 0, 1, 0, 1, 0, 1, 1};
    auto ds = testutil::make_dataset(X, labels);
    write_expression_csv(ds, dir / "m.csv", {"header"});
    write_labels_csv(ds, dir / "l.csv");
    auto back = load_expression_csv(dir / "m.csv", dir / "l.csv");
    ASSERT_EQ(back.values.rows(), X.rows());
    for (Index i = 0; i < X.size(); ++i) {
        const double a = X.data()[i], b = back.values.data()[i];
        if (std::isnan(a))
            EXPECT_TRUE(std::isnan(b));
        else
            EXPECT_EQ(a, b);
    }
    EXPECT_EQ(back.gene_ids, ds.gene_ids);
    EXPECT_EQ(back.sample_ids, ds.sample_ids);
}

TEST(Impute, GeneMeanOfRow) {
    Matrix X(1, 3);
    X << 1, missing_value, 3;
    auto ds = impute_missing(testutil::make_dataset(X, {0, 1, 0}), ImputeStrategy::gene_mean);
    EXPECT_DOUBLE_EQ(ds.values(0, 1), 2.0);
    EXPECT_DOUBLE_EQ(ds.values(0, 0), 1.0);
}

TEST(Impute, ZeroStrategy) {
    Matrix X(2, 3);
    X << 1, missing_value, 3, missing_value, 5, 6;
    auto ds = impute_missing(testutil::make_dataset(X, {0, 1, 0}), ImputeStrategy::zero);
    EXPECT_EQ(ds.values(0, 1), 0.0);
    EXPECT_EQ(ds.values(1, 0), 0.0);
    EXPECT_EQ(ds.values(1, 2), 6.0);
}

TEST(Impute, SampleMean) {
    Matrix X(3, 2);
    X << 1, 4, missing_value, 8, 5, missing_value;
    auto ds = impute_missing(testutil::make_dataset(X, {0, 1}), ImputeStrategy::sample_mean);
    EXPECT_DOUBLE_EQ(ds.values(1, 0), 3.0);
    EXPECT_DOUBLE_EQ(ds.values(2, 1), 6.0);
}

TEST(Impute, RandomHolesAgainstRecomputedMeans) {
    std::mt19937_64 rng(5);
    Matrix X = testutil::gaussian(10, 10, rng);
    std::set<std::pair<Index, Index>> holes;
    while (holes.size() < 7)
        holes.insert({static_cast<Index>(rng() % 10), static_cast<Index>(rng() % 10)});
    Matrix Xh = X;
    for (auto [i, j] : holes)
        Xh(i, j) = missing_value;
    std::vector<int> labels{0, 1, 0, 1, 0, 1, 0, 1, 0, 1};
    auto ds = impute_missing(testutil::make_dataset(Xh, labels), ImputeStrategy::gene_mean);
    EXPECT_FALSE(ds.has_missing());
    for (Index i = 0; i < 10; ++i) {
        double sum = 0;
        int count  = 0;
        for (Index j = 0; j < 10; ++j)
            if (!holes.count({i, j})) {
                sum += X(i, j);
                ++count;
            }
        for (Index j = 0; j < 10; ++j) {
            if (holes.count({i, j}))
                EXPECT_NEAR(ds.values(i, j), sum / count, 1e-14);
            else
                EXPECT_EQ(ds.values(i, j), X(i, j));
        }
        EXPECT_NEAR(ds.values.row(i).mean(), sum / count, 1e-14);
    }
}

TEST(Impute, Idempotent) {
    std::mt19937_64 rng(8);
    Matrix X = testutil::gaussian(6, 5, rng);
    X(1, 1) = X(2, 4) = X(5, 0) = missing_value;
    auto base = testutil::make_dataset(X, {0, 1, 0, 1, 0});
    for (auto s : {ImputeStrategy::zero, ImputeStrategy::gene_mean, ImputeStrategy::sample_mean}) {
        auto once  = impute_missing(base, s);
        auto twice = impute_missing(once, s);
        EXPECT_EQ(once.values, twice.values);
    }
}

TEST(Impute, AllMissingGeneIsError) {
    Matrix X(2, 2);
    X << missing_value, missing_value, 1, 2;
    auto ds = testutil::make_dataset(X, {0, 1});
    EXPECT_THROW(impute_missing(ds, ImputeStrategy::gene_mean), DataError);
    EXPECT_NO_THROW(impute_missing(ds, ImputeStrategy::zero));
    EXPECT_THROW(parse_impute_strategy("median"), std::invalid_argument);
}

TEST(Snr, IdenticalMeansRankLast) {
    Matrix X(2, 4);
    X << 1, 3, 1, 3,  // class means 2 and 2
        5, 6, 0, 1;
    auto r = snr_rank(testutil::make_dataset(X, {0, 0, 1, 1}), 2);
    EXPECT_EQ(r.snr(0), 0.0);
    EXPECT_EQ(r.order, (std::vector<Index>{1, 0}));
}

TEST(Snr, FormulaOrdersGenes) {
    // gene A: means 4/0, population sd 1/1 -> 2; gene B: means 1/0, sd 1/1 -> 0.5
    Matrix X(2, 4);
    X << 1, -1, 3, 5,
        1, -1, 0, 2;
    auto ds = testutil::make_dataset(X, {0, 0, 1, 1});
    auto r  = snr_rank(ds, 2);
    EXPECT_NEAR(std::abs(r.snr(0)), 2.0, 1e-15);
    EXPECT_NEAR(std::abs(r.snr(1)), 0.5, 1e-15);
    EXPECT_EQ(r.order, (std::vector<Index>{0, 1}));
    EXPECT_EQ(r.reduced.gene_ids, (std::vector<std::string>{"g0", "g1"}));
}

TEST(Snr, ZeroSpreadWarnsAndScoresZero) {
    Matrix X(2, 4);
    X << 1, 1, 2, 2,
        0, 1, 5, 6;
    testutil::CaptureWarnings cap;
    auto r = snr_rank(testutil::make_dataset(X, {0, 0, 1, 1}), 1);
    EXPECT_EQ(r.snr(0), 0.0);
    EXPECT_EQ(r.zero_spread, (std::vector<Index>{0}));
    EXPECT_EQ(cap.messages.size(), 1u);
    EXPECT_EQ(r.order.front(), 1);
}

TEST(Snr, BinaryOnlyAndRangeChecked) {
    Matrix X = Matrix::Ones(3, 3);
    X(0, 0) = 2;
    auto three = testutil::make_dataset(X, {0, 1, 2}, {"a", "b", "c"});
    EXPECT_THROW(snr_rank(three, 1), DataError);
    auto two = testutil::make_dataset(X, {0, 1, 1});
    EXPECT_THROW(snr_rank(two, 0), std::invalid_argument);
    EXPECT_THROW(snr_rank(two, 4), std::invalid_argument);
}

TEST(Snr, MatchesBruteForceRanking) {
    std::mt19937_64 rng(21);
    Matrix X = testutil::gaussian(50, 16, rng);
    std::vector<int> labels;
    for (int j = 0; j < 16; ++j)
        labels.push_back(j < 7 ? 0 : 1);
    auto ds = testutil::make_dataset(X, labels);
    auto r  = snr_rank(ds, 10);

    std::vector<std::pair<double, Index>> oracle;
    for (Index g = 0; g < 50; ++g) {
        std::vector<double> a, b;
        for (Index j = 0; j < 16; ++j)
            (labels[static_cast<std::size_t>(j)] == 0 ? a : b).push_back(X(g, j));
        auto mean = [](const std::vector<double> &v) {
            return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
        };
        auto psd = [&](const std::vector<double> &v) {
            const double mu = mean(v);
            double s = 0;
            for (double x : v)
                s += (x - mu) * (x - mu);
            return std::sqrt(s / static_cast<double>(v.size()));
        };
        const double snr = (mean(a) - mean(b)) / (psd(a) + psd(b));
        EXPECT_NEAR(r.snr(g), snr, 1e-12);
        oracle.push_back({std::abs(snr), g});
    }
    std::sort(oracle.begin(), oracle.end(),
              [](auto &x, auto &y) { return x.first > y.first; });
    for (int i = 0; i < 10; ++i)
        EXPECT_EQ(r.order[static_cast<std::size_t>(i)], oracle[static_cast<std::size_t>(i)].second);
    EXPECT_EQ(r.reduced.genes(), 10);
    EXPECT_EQ(r.reduced.values.row(0), X.row(oracle[0].second));
}

TEST(Snr, PermutationEquivariant) {
    std::mt19937_64 rng(4);
    Matrix X = testutil::gaussian(30, 12, rng);
    std::vector<int> labels{0, 1, 0, 1, 1, 0, 0, 1, 0, 1, 1, 0};
    auto ds = testutil::make_dataset(X, labels);
    std::vector<Index> perm(12);
    std::iota(perm.begin(), perm.end(), Index{0});
    std::shuffle(perm.begin(), perm.end(), rng);
    auto shuffled = ds.select_samples(perm);
    EXPECT_EQ(snr_rank(ds, 30).order, snr_rank(shuffled, 30).order);
}

namespace {

ExpressionDataset labels_only(const std::vector<Index> &sizes) {
    std::vector<int> labels;
    for (std::size_t c = 0; c < sizes.size(); ++c)
        for (Index i = 0; i < sizes[c]; ++i)
            labels.push_back(static_cast<int>(c));
    std::vector<std::string> names;
    for (std::size_t c = 0; c < sizes.size(); ++c)
        names.push_back("c" + std::to_string(c));
    return testutil::make_dataset(Matrix::Zero(1, static_cast<Index>(labels.size())), labels, names);
}

void expect_valid_plan(const FoldPlan &plan, const ExpressionDataset &ds) {
    const auto n     = ds.samples();
    const auto sizes = ds.class_sizes();
    ASSERT_EQ(plan.assignments.size(), static_cast<std::size_t>(plan.repeats));
    for (auto &folds : plan.assignments) {
        ASSERT_EQ(folds.size(), static_cast<std::size_t>(plan.k));
        std::vector<int> seen(static_cast<std::size_t>(n), 0);
        for (auto &f : folds) {
            EXPECT_TRUE(std::is_sorted(f.begin(), f.end()));
            std::vector<Index> count(sizes.size(), 0);
            for (Index i : f) {
                ++seen[static_cast<std::size_t>(i)];
                ++count[static_cast<std::size_t>(ds.labels[static_cast<std::size_t>(i)])];
            }
            for (std::size_t c = 0; c < sizes.size(); ++c) {
                const double expected = static_cast<double>(sizes[c]) *
                                        static_cast<double>(f.size()) / static_cast<double>(n);
                EXPECT_LE(std::abs(static_cast<double>(count[c]) - expected), 1.0);
            }
        }
        for (int s : seen)
            EXPECT_EQ(s, 1);
    }
}

} // namespace

TEST(Folds, SeventyNineSamplesTenFolds) {
    auto ds   = labels_only({45, 34});
    auto plan = stratified_kfold(ds, 10, 3, 42);
    expect_valid_plan(plan, ds);
    for (auto &folds : plan.assignments)
        for (auto &f : folds) {
            EXPECT_TRUE(f.size() == 7 || f.size() == 8);
            Index c0 = 0;
            for (Index i : f)
                c0 += ds.labels[static_cast<std::size_t>(i)] == 0;
            const Index c1 = static_cast<Index>(f.size()) - c0;
            EXPECT_TRUE(c0 == 4 || c0 == 5);
            EXPECT_TRUE(c1 == 3 || c1 == 4);
        }
}

TEST(Folds, LeaveOneOut) {
    auto ds   = labels_only({5, 3});
    auto plan = stratified_kfold(ds, 8, 1, 0);
    EXPECT_EQ(plan.k, 8);
    for (auto &f : plan.assignments[0])
        EXPECT_EQ(f.size(), 1u);
    expect_valid_plan(plan, ds);
}

TEST(Folds, SameSeedIdentical) {
    auto ds = labels_only({12, 9});
    nlohmann::json a = stratified_kfold(ds, 5, 4, 99);
    nlohmann::json b = stratified_kfold(ds, 5, 4, 99);
    EXPECT_EQ(a.dump(), b.dump());
    nlohmann::json c = stratified_kfold(ds, 5, 4, 100);
    EXPECT_NE(a.dump(), c.dump());
}

TEST(Folds, RepeatsDiffer) {
    auto ds   = labels_only({20, 20});
    auto plan = stratified_kfold(ds, 4, 2, 1);
    EXPECT_NE(plan.assignments[0], plan.assignments[1]);
}

TEST(Folds, InvariantsOnRandomShapes) {
    std::mt19937_64 rng(77);
    for (int trial = 0; trial < 50; ++trial) {
        const auto c = static_cast<std::size_t>(2 + rng() % 3);
        std::vector<Index> sizes;
        for (std::size_t i = 0; i < c; ++i)
            sizes.push_back(static_cast<Index>(5 + rng() % 30));
        auto ds = labels_only(sizes);
        const int k = static_cast<int>(2 + rng() % 4);
        auto plan   = stratified_kfold(ds, k, 2, rng());
        EXPECT_EQ(plan.k, k);
        expect_valid_plan(plan, ds);
    }
}

TEST(Folds, ErrorsAndReduction) {
    auto ds = labels_only({3, 3});
    EXPECT_THROW(stratified_kfold(ds, 7, 1, 0), DataError);
    EXPECT_THROW(stratified_kfold(ds, 1, 1, 0), std::invalid_argument);
    {
        testutil::CaptureWarnings cap;
        auto small = labels_only({10, 4});
        auto plan  = stratified_kfold(small, 5, 1, 0);
        EXPECT_EQ(plan.k, 4);
        EXPECT_EQ(cap.messages.size(), 1u);
        expect_valid_plan(plan, small);
    }
    EXPECT_THROW(stratified_kfold(labels_only({10, 1}), 5, 1, 0), DataError);
}

TEST(Folds, JsonRoundTripAndTraining) {
    auto ds   = labels_only({6, 6});
    auto plan = stratified_kfold(ds, 3, 2, 5);
    nlohmann::json j = plan;
    auto back        = j.get<FoldPlan>();
    EXPECT_EQ(back.assignments, plan.assignments);
    EXPECT_EQ(back.seed, 5u);
    auto train = plan.training_indices(1, 2);
    EXPECT_EQ(train.size(), 8u);
    for (Index i : plan.assignments[1][2])
        EXPECT_EQ(std::count(train.begin(), train.end(), i), 0);
}
