#include <gtest/gtest.h>

#include <algorithm>

#include "cfrat/eval.hpp"
#include "cfrat/presets.hpp"
#include "cfrat/rng.hpp"

using namespace cfrat;

namespace {

RationaleMask mask_of(std::vector<std::uint8_t> bits) {
    RationaleMask m;
    m.bits = std::move(bits);
    return m;
}

}  // namespace

TEST(RationaleMetrics, PerfectMatchScoresHundred) {
    const auto m = rationale_metrics({mask_of({1, 0, 1, 0})}, {{1, 0, 1, 0}});
    EXPECT_DOUBLE_EQ(m.precision, 100.0);
    EXPECT_DOUBLE_EQ(m.recall, 100.0);
    EXPECT_DOUBLE_EQ(m.f1, 100.0);
}

TEST(RationaleMetrics, DisjointMasksScoreZero) {
    const auto m = rationale_metrics({mask_of({1, 1, 0, 0})}, {{0, 0, 1, 1}});
    EXPECT_DOUBLE_EQ(m.precision, 0.0);
    EXPECT_DOUBLE_EQ(m.recall, 0.0);
    EXPECT_DOUBLE_EQ(m.f1, 0.0);
}

TEST(RationaleMetrics, ConfusionCountArithmetic) {
    const auto m = rationale_metrics({mask_of({1, 1, 0, 0})}, {{1, 0, 1, 0}});
    EXPECT_DOUBLE_EQ(m.precision, 50.0);
    EXPECT_DOUBLE_EQ(m.recall, 50.0);
    EXPECT_DOUBLE_EQ(m.f1, 50.0);
}

TEST(RationaleMetrics, EmptyGoldDocumentsExcluded) {
    const auto m = rationale_metrics({mask_of({1, 0}), mask_of({1, 0})}, {{0, 0}, {1, 0}});
    EXPECT_DOUBLE_EQ(m.precision, 100.0);  // only the second document counts
}

TEST(RationaleMetrics, ErrorsOnLengthMismatch) {
    EXPECT_THROW(rationale_metrics({mask_of({1, 0})}, {{1, 0, 0}}), std::invalid_argument);
    EXPECT_THROW(rationale_metrics({mask_of({1})}, {{1}, {1}}), std::invalid_argument);
}

TEST(RationaleMetrics, PermutationInvariantAcrossDocuments) {
    std::vector<RationaleMask> pred = {mask_of({1, 0, 0}), mask_of({0, 1, 1}), mask_of({1, 1, 0})};
    std::vector<std::vector<std::uint8_t>> gold = {{1, 1, 0}, {0, 0, 1}, {1, 0, 1}};
    const auto base = rationale_metrics(pred, gold);
    std::swap(pred[0], pred[2]);
    std::swap(gold[0], gold[2]);
    const auto permuted = rationale_metrics(pred, gold);
    EXPECT_DOUBLE_EQ(base.precision, permuted.precision);
    EXPECT_DOUBLE_EQ(base.recall, permuted.recall);
    EXPECT_DOUBLE_EQ(base.f1, permuted.f1);
}

TEST(RationaleMetrics, RecallEqualsPrecisionTimesKOverG) {
    // Token-count identity per document: R = P * |pred| / |gold|.
    Rng rng(12);
    for (int trial = 0; trial < 50; ++trial) {
        const int T = 8 + static_cast<int>(rng.uniform_int(0, 8));
        std::vector<std::uint8_t> pred_bits(T, 0), gold_bits(T, 0);
        const int k = 1 + static_cast<int>(rng.uniform_int(0, T - 1));
        const int g = 1 + static_cast<int>(rng.uniform_int(0, T - 1));
        for (int i = 0; i < k; ++i) pred_bits[i] = 1;
        for (int i = 0; i < g; ++i) gold_bits[T - 1 - i] = 1;
        const auto m = rationale_metrics({mask_of(pred_bits)}, {gold_bits});
        EXPECT_NEAR(m.recall, m.precision * k / g, 1e-9);
    }
}

TEST(DevAccuracy, ConstantAndPerfectPredictors) {
    const auto corpus = generate_corpus(decorrelated_corpus_config(200, 3), 3);
    EXPECT_NEAR(dev_accuracy([](const Document&) { return 1.0; }, corpus, "smell"), 50.0, 0.5);
    EXPECT_DOUBLE_EQ(
        dev_accuracy([](const Document& d) { return d.label_for("smell") ? 1.0 : 0.0; }, corpus,
                     "smell"),
        100.0);
}

TEST(DevAccuracy, BayesOracleMatchesGeneratorAccuracy) {
    // Reading only the true rationale tokens, majority sentiment recovers the
    // label up to token noise; analytic accuracy marginalizes the binomial
    // over the tokens-per-aspect range.
    auto config = decorrelated_corpus_config(2000, 9);
    const double noise = config.token_noise_rate;
    const auto corpus = generate_corpus(config, 9);

    const auto& spec = config.aspects[0];
    const std::set<std::string> pos(spec.pos_pool.begin(), spec.pos_pool.end());
    const PredictFn bayes = [&](const Document& doc) {
        const auto& mask = doc.mask_for("smell");
        int vote = 0;
        for (std::size_t t = 0; t < mask.size(); ++t) {
            if (!mask[t]) continue;
            vote += pos.count(doc.tokens[t]) ? 1 : -1;
        }
        return vote > 0 ? 1.0 : (vote < 0 ? 0.0 : 0.5);
    };

    // P(correct | n tokens): majority of n Bernoulli(1-noise) votes; ties at
    // even n split half via the 0.5 output, counted as 0.5 below.
    const auto binom = [](int n, int k) {
        double c = 1;
        for (int i = 0; i < k; ++i) c = c * (n - i) / (i + 1);
        return c;
    };
    double expected = 0.0;
    const int n_min = spec.min_aspect_tokens, n_max = spec.max_aspect_tokens;
    for (int n = n_min; n <= n_max; ++n) {
        double correct = 0.0;
        for (int flips = 0; flips <= n; ++flips) {
            const double p =
                binom(n, flips) * std::pow(noise, flips) * std::pow(1 - noise, n - flips);
            if (2 * flips < n)
                correct += p;
            else if (2 * flips == n)
                correct += p * 0.5;
        }
        expected += correct / (n_max - n_min + 1);
    }

    const double measured = dev_accuracy(bayes, corpus, "smell");
    EXPECT_NEAR(measured, 100.0 * expected, 1.0);
}

TEST(MeasureFeatureMi, IndependentFeatureNearZero) {
    const auto config = decorrelated_corpus_config(20000, 4);
    const auto corpus = generate_corpus(config, 4);
    const auto features = std::vector<TokenPredicate>{
        any_of_predicate("filler", {config.filler_pool[0], config.filler_pool[1]}),
        any_of_predicate("smell_pos", config.aspects[0].pos_pool)};
    const auto mi = measure_feature_mi(corpus, features, "smell");
    ASSERT_EQ(mi.size(), 2u);
    EXPECT_EQ(mi[0].feature, "smell_pos");  // sorted descending
    EXPECT_GT(mi[0].mi_bits, 0.3);
    EXPECT_LE(mi[1].mi_bits, 0.005);
}

TEST(MeasureFeatureMi, AgreesWithInfoCoreEnumeration) {
    auto config = decorrelated_corpus_config(500, 5);
    config.token_noise_rate = 0.0;
    const auto corpus = generate_corpus(config, 5);
    const auto pred = any_of_predicate("smell_pos", config.aspects[0].pos_pool);
    const auto via_eval = measure_feature_mi(corpus, {pred}, "smell", 1.0)[0].mi_bits;
    const auto joint = estimate_binary_joint(corpus, pred, pred, "smell", 1.0);
    const auto direct = information_measures(joint, Var::Y1, Var::X1).mutual_information;
    EXPECT_DOUBLE_EQ(via_eval, direct);
}

TEST(DetectDegenerate, ThresholdRules) {
    ExperimentRecord strong{"CDA", "correlated", "smell", 1, 80.0, 70.0, 74.0, 95.0, false};
    ExperimentRecord random_mask{"MMI", "correlated", "smell", 1, 21.0, 20.0, 20.0, 90.0, false};
    ExperimentRecord constant_classifier{"MMI", "correlated", "smell", 1, 80.0, 70.0, 74.0, 50.0, false};
    const double baseline = 20.0;
    EXPECT_FALSE(detect_degenerate(strong, baseline));
    EXPECT_TRUE(detect_degenerate(random_mask, baseline));   // at baseline + <=2
    EXPECT_TRUE(detect_degenerate(constant_classifier, baseline));  // dev acc <= 55
}

TEST(RandomMaskPrecision, MatchesGoldDensity) {
    // Expected precision of a random k-token mask is the gold density g/T.
    Corpus corpus;
    Document d;
    d.id = 0;
    d.tokens = std::vector<std::string>(10, "x");
    d.labels["a"] = 1;
    d.masks["a"] = {1, 1, 1, 0, 0, 0, 0, 0, 0, 0};
    corpus.push_back(d);
    EXPECT_NEAR(random_mask_precision(corpus, "a"), 30.0, 1e-12);

    // Monte-Carlo cross-check with actual random masks.
    Rng rng(77);
    double mean_precision = 0.0;
    const int trials = 20000;
    for (int i = 0; i < trials; ++i) {
        std::vector<double> scores(10);
        for (auto& s : scores) s = rng.uniform();
        const auto mask = select_topk(scores, 4);
        mean_precision +=
            rationale_metrics({mask}, {corpus[0].masks["a"]}).precision;
    }
    EXPECT_NEAR(mean_precision / trials, 30.0, 1.0);
}

TEST(Reporting, ResultsCsvRoundTrips) {
    std::vector<ExperimentRecord> records = {
        {"CDA", "correlated", "smell", 3, 67.789, 43.68, 48.98, 81.82, false},
        {"MMI", "correlated", "smell", 3, 21.0, 18.0, 19.0, 52.0, true},
    };
    const auto text = results_csv(records);
    EXPECT_EQ(text.substr(0, text.find('\n')),
              "method,regime,aspect,seed,rat_prec,rat_rec,rat_f1,dev_acc,degenerate");
    const auto parsed = results_from_csv(text);
    ASSERT_EQ(parsed.size(), 2u);
    EXPECT_EQ(parsed[0].method, "CDA");
    EXPECT_DOUBLE_EQ(parsed[0].rat_prec, 67.789);
    EXPECT_TRUE(parsed[1].degenerate);
}

TEST(Reporting, AggregateMeanAndStd) {
    std::vector<ExperimentRecord> records;
    for (double p : {60.0, 70.0, 80.0}) {
        ExperimentRecord r{"CDA", "correlated", "smell", 1, p, p, p, 80.0, false};
        records.push_back(r);
    }
    ExperimentRecord degenerate{"CDA", "correlated", "smell", 4, 10.0, 10.0, 10.0, 50.0, true};
    records.push_back(degenerate);

    const auto all = aggregate_records(records, true);
    ASSERT_EQ(all.size(), 1u);
    EXPECT_EQ(all[0].n_runs, 4);
    EXPECT_EQ(all[0].n_degenerate, 1);
    EXPECT_NEAR(all[0].prec_mean, (60 + 70 + 80 + 10) / 4.0, 1e-12);

    const auto clean = aggregate_records(records, false);
    ASSERT_EQ(clean.size(), 1u);
    EXPECT_EQ(clean[0].n_runs, 3);
    EXPECT_NEAR(clean[0].prec_mean, 70.0, 1e-12);
    EXPECT_NEAR(clean[0].prec_std, 10.0, 1e-12);  // sample std of {60,70,80}

    const auto csv = aggregate_csv(all);
    EXPECT_EQ(csv.substr(0, csv.find(',')), "method");
}
