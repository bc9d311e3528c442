#include <gtest/gtest.h>

#include <cmath>

#include "cfrat/checkpoint.hpp"
#include "cfrat/presets.hpp"
#include "cfrat/rationale.hpp"

using namespace cfrat;

namespace {

// Random parameters roomy enough that argmax/top-k ties have measure zero.
RationaleModel random_model(Rng& rng, const Vocabulary& vocab, int d = 6) {
    RationaleModel m;
    m.vocab = vocab;
    m.aspect = "smell";
    m.selector.embed = Mat(vocab.size(), d);
    m.selector.w.resize(3 * static_cast<std::size_t>(d));
    m.selector.k_percent = 0.10;
    m.classifier.embed = Mat(vocab.size(), d);
    m.classifier.u.resize(d);
    for (auto& v : m.selector.embed.a) v = rng.normal();
    for (auto& v : m.classifier.embed.a) v = rng.normal();
    for (auto& v : m.selector.w) v = rng.normal();
    for (auto& v : m.classifier.u) v = rng.normal();
    m.selector.b = rng.normal() * 0.1;
    m.classifier.b = rng.normal() * 0.1;
    return m;
}

Vocabulary toy_vocab() {
    return Vocabulary::from_tokens({"alpha", "bravo", "charlie", "delta", "echo", "foxtrot",
                                    "golf", "hotel", "india", "juliet"});
}

std::vector<int> random_ids(Rng& rng, int T, int V) {
    std::vector<int> ids(T);
    for (auto& id : ids) id = static_cast<int>(rng.uniform_int(0, V - 1));
    return ids;
}

double relative_error(double a, double b) {
    const double denom = std::max({std::abs(a), std::abs(b), 1e-8});
    return std::abs(a - b) / denom;
}

constexpr double kFdStep = 1e-6;

}  // namespace

TEST(SelectTopK, PicksLargestScores) {
    const auto mask = select_topk({0.9, 0.1, 0.8, 0.2, 0.7}, 2);
    EXPECT_EQ(mask.bits, (std::vector<std::uint8_t>{1, 0, 1, 0, 0}));
}

TEST(SelectTopK, TiesBreakTowardLowestIndex) {
    const auto mask = select_topk({0.5, 0.5, 0.1}, 1);
    EXPECT_EQ(mask.bits, (std::vector<std::uint8_t>{1, 0, 0}));
}

TEST(SelectTopK, CardinalityFollowsFixedPercentage) {
    EXPECT_EQ(mask_cardinality(0.10, 20), 2);
    EXPECT_EQ(mask_cardinality(0.10, 21), 3);
    EXPECT_EQ(mask_cardinality(0.10, 5), 1);
    EXPECT_EQ(mask_cardinality(0.10, 1), 1);  // k >= 1 always
    EXPECT_THROW(select_topk({0.1, 0.2}, 3), std::invalid_argument);
    EXPECT_THROW(select_topk({0.1, 0.2}, 0), std::invalid_argument);
}

TEST(CoherencyPenalty, CountsTransitions) {
    EXPECT_DOUBLE_EQ(coherency_penalty({{0, 0, 1, 1, 0}}, 1.0), 2.0 / 5.0);
    EXPECT_DOUBLE_EQ(coherency_penalty({{1, 1, 1, 1}}, 3.0), 0.0);
    EXPECT_DOUBLE_EQ(coherency_penalty({{0, 0, 0}}, 3.0), 0.0);
    EXPECT_DOUBLE_EQ(coherency_penalty({{1, 0, 1, 0}}, 2.0), 2.0 * 3.0 / 4.0);
}

TEST(CoherencyPenalty, ContiguousMasksAreTheExactMinimizers) {
    // Exhaustive check for T = 10: for every cardinality, the masks achieving
    // the minimal transition count are exactly the contiguous ones.
    const int T = 10;
    std::vector<int> min_transitions(T + 1, 1 << 20);
    for (int bitsv = 1; bitsv < (1 << T); ++bitsv) {
        RationaleMask mask;
        mask.bits.resize(T);
        for (int t = 0; t < T; ++t) mask.bits[t] = (bitsv >> t) & 1;
        min_transitions[mask.ones()] = std::min(min_transitions[mask.ones()], mask_transitions(mask));
    }
    for (int bitsv = 1; bitsv < (1 << T); ++bitsv) {
        RationaleMask mask;
        mask.bits.resize(T);
        for (int t = 0; t < T; ++t) mask.bits[t] = (bitsv >> t) & 1;
        int blocks = 0;
        for (int t = 0; t < T; ++t)
            if (mask.bits[t] && (t == 0 || !mask.bits[t - 1])) ++blocks;
        if (mask_transitions(mask) == min_transitions[mask.ones()])
            EXPECT_EQ(blocks, 1) << "fragmented mask attains the minimum";
        if (blocks > 1) EXPECT_GT(mask_transitions(mask), min_transitions[mask.ones()]);
    }
}

TEST(Classify, EmptyMaskGivesLogisticBias) {
    Rng rng(42);
    const auto vocab = toy_vocab();
    const auto model = random_model(rng, vocab);
    Document doc;
    doc.tokens = {"alpha", "bravo", "charlie"};
    RationaleMask empty;
    empty.bits = {0, 0, 0};
    EXPECT_DOUBLE_EQ(classify(doc, empty, model.classifier, vocab), sigmoid(model.classifier.b));
}

TEST(Classify, OcclusionUnselectedTokensCannotChangeOutput) {
    Rng rng(43);
    const auto vocab = toy_vocab();
    const auto model = random_model(rng, vocab);
    Document doc;
    doc.tokens = {"alpha", "bravo", "charlie", "delta", "echo"};
    RationaleMask mask;
    mask.bits = {0, 1, 0, 1, 0};
    const double base = classify(doc, mask, model.classifier, vocab);

    Document permuted = doc;
    std::swap(permuted.tokens[0], permuted.tokens[2]);
    permuted.tokens[4] = "juliet";
    EXPECT_DOUBLE_EQ(classify(permuted, mask, model.classifier, vocab), base);
}

TEST(Classify, DuplicatingSelectedTokenKeepsMaxPooledFeatures) {
    Rng rng(44);
    const auto vocab = toy_vocab();
    const auto model = random_model(rng, vocab);
    Document doc;
    doc.tokens = {"alpha", "bravo", "charlie"};
    RationaleMask mask;
    mask.bits = {1, 1, 0};
    const double base = classify(doc, mask, model.classifier, vocab);

    Document doubled;
    doubled.tokens = {"alpha", "bravo", "bravo", "charlie"};
    RationaleMask mask2;
    mask2.bits = {1, 1, 1, 0};
    EXPECT_DOUBLE_EQ(classify(doubled, mask2, model.classifier, vocab), base);
}

TEST(Classify, RejectsLengthMismatch) {
    Rng rng(45);
    const auto vocab = toy_vocab();
    const auto model = random_model(rng, vocab);
    Document doc;
    doc.tokens = {"alpha", "bravo"};
    RationaleMask mask;
    mask.bits = {1};
    EXPECT_THROW(classify(doc, mask, model.classifier, vocab), std::invalid_argument);
}

// ---------------------------------------------------------------------------
// Gradient oracles: central finite differences.
// ---------------------------------------------------------------------------

TEST(Gradients, ClassifierParametersMatchFiniteDifferences) {
    Rng rng(4242);
    const auto vocab = toy_vocab();
    for (int trial = 0; trial < 30; ++trial) {
        auto model = random_model(rng, vocab);
        const auto ids = random_ids(rng, 8, vocab.size());
        const int k = 2;
        const auto mask = select_topk(selector_scores(ids, model.selector), k).as_real();
        const int y = rng.bernoulli(0.5) ? 1 : 0;
        const auto tape = classifier_forward_backward(ids, mask, y, model.classifier);

        auto loss_at = [&](const ClassifierParams& cp) {
            return classifier_forward_backward(ids, mask, y, cp).loss;
        };

        for (int j = 0; j < static_cast<int>(model.classifier.u.size()); ++j) {
            auto cp = model.classifier;
            cp.u[j] += kFdStep;
            const double up = loss_at(cp);
            cp.u[j] -= 2 * kFdStep;
            const double down = loss_at(cp);
            EXPECT_LT(relative_error((up - down) / (2 * kFdStep), tape.d_u[j]), 1e-4);
        }
        {
            auto cp = model.classifier;
            cp.b += kFdStep;
            const double up = loss_at(cp);
            cp.b -= 2 * kFdStep;
            const double down = loss_at(cp);
            EXPECT_LT(relative_error((up - down) / (2 * kFdStep), tape.d_b), 1e-4);
        }
        for (int probe = 0; probe < 10; ++probe) {
            const int r = static_cast<int>(rng.uniform_int(0, model.classifier.embed.rows - 1));
            const int c = static_cast<int>(rng.uniform_int(0, model.classifier.embed.cols - 1));
            auto cp = model.classifier;
            cp.embed.at(r, c) += kFdStep;
            const double up = loss_at(cp);
            cp.embed.at(r, c) -= 2 * kFdStep;
            const double down = loss_at(cp);
            EXPECT_LT(relative_error((up - down) / (2 * kFdStep), tape.d_embed.at(r, c)), 1e-4);
        }
    }
}

TEST(Gradients, MaskGradientMatchesFiniteDifferencesAtInteriorPoints) {
    // The straight-through rule forwards dL/dm to the scores, so dL/dm must
    // be right. Probe at generic real-valued masks where the max-pool is smooth.
    Rng rng(777);
    const auto vocab = toy_vocab();
    for (int trial = 0; trial < 30; ++trial) {
        auto model = random_model(rng, vocab);
        const auto ids = random_ids(rng, 7, vocab.size());
        std::vector<double> mask(ids.size());
        for (auto& m : mask) m = rng.uniform(0.2, 1.0);
        const int y = rng.bernoulli(0.5) ? 1 : 0;
        const auto tape = classifier_forward_backward(ids, mask, y, model.classifier);
        for (std::size_t t = 0; t < mask.size(); ++t) {
            auto up_mask = mask, down_mask = mask;
            up_mask[t] += kFdStep;
            down_mask[t] -= kFdStep;
            const double up = classifier_forward_backward(ids, up_mask, y, model.classifier).loss;
            const double down = classifier_forward_backward(ids, down_mask, y, model.classifier).loss;
            EXPECT_LT(relative_error((up - down) / (2 * kFdStep), tape.d_mask[t]), 1e-4);
        }
    }
}

TEST(Gradients, CoherencyRelaxationMatchesFiniteDifferences) {
    Rng rng(555);
    for (int trial = 0; trial < 20; ++trial) {
        const int T = 6 + static_cast<int>(rng.uniform_int(0, 6));
        std::vector<double> mask(T);
        for (auto& m : mask) m = rng.uniform();
        const double lambda = rng.uniform(0.1, 5.0);
        const auto grad = coherency_mask_grad_relaxed(mask, lambda);
        for (int t = 0; t < T; ++t) {
            auto up = mask, down = mask;
            up[t] += kFdStep;
            down[t] -= kFdStep;
            const double fd = (coherency_penalty_relaxed(up, lambda) -
                               coherency_penalty_relaxed(down, lambda)) /
                              (2 * kFdStep);
            EXPECT_LT(relative_error(fd, grad[t]), 1e-4);
        }
        // Exact agreement with the hard-count penalty on binary masks.
        RationaleMask hard;
        hard.bits.resize(T);
        for (auto& b : hard.bits) b = rng.bernoulli(0.4);
        EXPECT_NEAR(coherency_penalty_relaxed(hard.as_real(), lambda),
                    coherency_penalty(hard, lambda), 1e-12);
    }
}

TEST(Gradients, SelectorParametersMatchFiniteDifferences) {
    // The surrogate actually trained is F(theta) = sum_t c_t * s_t(theta) with
    // the straight-through coefficients c frozen; its exact gradient must
    // match the backprop through the context-window scorer.
    Rng rng(888);
    const auto vocab = toy_vocab();
    for (int trial = 0; trial < 30; ++trial) {
        auto model = random_model(rng, vocab);
        const auto ids = random_ids(rng, 9, vocab.size());
        std::vector<double> coeffs(ids.size());
        for (auto& c : coeffs) c = rng.normal();

        auto surrogate = [&](const SelectorParams& sp) {
            const auto scores = selector_scores(ids, sp);
            double f = 0.0;
            for (std::size_t t = 0; t < scores.size(); ++t) f += coeffs[t] * scores[t];
            return f;
        };
        const auto tape = selector_backward(ids, coeffs, model.selector);

        for (int probe = 0; probe < 10; ++probe) {
            const int r = static_cast<int>(rng.uniform_int(0, model.selector.embed.rows - 1));
            const int c = static_cast<int>(rng.uniform_int(0, model.selector.embed.cols - 1));
            auto sp = model.selector;
            sp.embed.at(r, c) += kFdStep;
            const double up = surrogate(sp);
            sp.embed.at(r, c) -= 2 * kFdStep;
            const double down = surrogate(sp);
            EXPECT_LT(relative_error((up - down) / (2 * kFdStep), tape.d_embed.at(r, c)), 1e-4);
        }
        for (int probe = 0; probe < 6; ++probe) {
            const auto k = static_cast<std::size_t>(
                rng.uniform_int(0, static_cast<std::int64_t>(model.selector.w.size()) - 1));
            auto sp = model.selector;
            sp.w[k] += kFdStep;
            const double up = surrogate(sp);
            sp.w[k] -= 2 * kFdStep;
            const double down = surrogate(sp);
            EXPECT_LT(relative_error((up - down) / (2 * kFdStep), tape.d_w[k]), 1e-4);
        }
        {
            auto sp = model.selector;
            sp.b += kFdStep;
            const double up = surrogate(sp);
            sp.b -= 2 * kFdStep;
            const double down = surrogate(sp);
            EXPECT_LT(relative_error((up - down) / (2 * kFdStep), tape.d_b), 1e-4);
        }
    }
}

// ---------------------------------------------------------------------------
// Training behavior
// ---------------------------------------------------------------------------

namespace {

struct TrainFixture {
    Corpus train, dev;

    explicit TrainFixture(double noise, int ndocs = 700, std::uint64_t seed = 31) {
        auto config = decorrelated_corpus_config(ndocs, seed);
        config.token_noise_rate = noise;
        const auto corpus = generate_corpus(config, seed);
        const auto split = split_corpus(corpus, 0.75, 0.25, 0.0, seed);
        train = split.train;
        dev = split.dev;
    }
};

}  // namespace

TEST(TrainJoint, LearnsSeparableCorpus) {
    TrainFixture fix(0.0);
    TrainConfig config;
    config.lambda_r = 0.0;
    config.learning_rate = 5e-3;
    const auto result = train_joint(fix.train, fix.dev, "smell", config, 1234);
    ASSERT_FALSE(result.log.empty());
    double acc = 0.0;
    for (const auto& doc : fix.dev)
        acc += (result.model.predict(doc) >= 0.5 ? 1 : 0) == doc.label_for("smell");
    acc /= static_cast<double>(fix.dev.size());
    EXPECT_GE(acc, 0.99);
}

TEST(TrainJoint, LargeCoherencyWeightForcesContiguousMasks) {
    // lambda_r = 1 is already coherency-dominant for this model family: the
    // coherency mask gradient scales with lambda_r/T while the classifier
    // signal is an order of magnitude smaller.
    TrainFixture fix(0.05);
    TrainConfig coherent;
    coherent.lambda_r = 1.0;
    coherent.learning_rate = 2e-3;
    coherent.epochs = 30;
    coherent.patience = 30;
    const auto with_lr = train_joint(fix.train, fix.dev, "smell", coherent, 99);

    TrainConfig free = coherent;
    free.lambda_r = 0.0;
    const auto without_lr = train_joint(fix.train, fix.dev, "smell", free, 99);

    int contiguous = 0;
    double mean_with = 0.0, mean_without = 0.0;
    for (const auto& doc : fix.dev) {
        const int tr = mask_transitions(with_lr.model.mask_for(doc));
        contiguous += tr <= 2;
        mean_with += tr;
        mean_without += mask_transitions(without_lr.model.mask_for(doc));
    }
    const double n = static_cast<double>(fix.dev.size());
    EXPECT_GE(static_cast<double>(contiguous) / n, 0.8);
    EXPECT_LT(mean_with / n, mean_without / n - 0.5);
}

TEST(TrainJoint, DeterministicGivenSeed) {
    TrainFixture fix(0.05, 240, 7);
    TrainConfig config;
    config.epochs = 4;
    const auto a = train_joint(fix.train, fix.dev, "smell", config, 555);
    const auto b = train_joint(fix.train, fix.dev, "smell", config, 555);
    EXPECT_EQ(model_to_json(a.model).dump(), model_to_json(b.model).dump());
    EXPECT_EQ(a.log.size(), b.log.size());
    const auto c = train_joint(fix.train, fix.dev, "smell", config, 556);
    EXPECT_NE(model_to_json(a.model).dump(), model_to_json(c.model).dump());
}

TEST(TrainJoint, MaskCardinalityExactAtInference) {
    TrainFixture fix(0.05, 240, 8);
    TrainConfig config;
    config.epochs = 3;
    const auto result = train_joint(fix.train, fix.dev, "smell", config, 1);
    for (const auto& doc : fix.dev) {
        const auto mask = result.model.mask_for(doc);
        EXPECT_EQ(mask.ones(), mask_cardinality(0.10, static_cast<int>(doc.tokens.size())));
    }
}

TEST(FinetuneClassifier, SelectorFrozenBitIdentical) {
    TrainFixture fix(0.05, 300, 9);
    TrainConfig config;
    config.epochs = 4;
    const auto phase1 = train_joint(fix.train, fix.dev, "smell", config, 2);
    const auto phase2 = finetune_classifier(phase1.model, fix.train, fix.dev, 3);
    EXPECT_EQ(phase1.model.selector.embed.a, phase2.selector.embed.a);
    EXPECT_EQ(phase1.model.selector.w, phase2.selector.w);
    EXPECT_EQ(phase1.model.selector.b, phase2.selector.b);
}

TEST(FinetuneClassifier, ZeroEpochsIsIdentity) {
    TrainFixture fix(0.05, 240, 10);
    TrainConfig config;
    config.epochs = 3;
    const auto phase1 = train_joint(fix.train, fix.dev, "smell", config, 3);
    const auto same = finetune_classifier(phase1.model, fix.train, fix.dev, 0);
    EXPECT_EQ(model_to_json(phase1.model).dump(), model_to_json(same).dump());
}

TEST(FinetuneClassifier, MeanDevAccuracyDoesNotDecreaseAcrossSeeds) {
    TrainFixture fix(0.05, 500, 12);
    TrainConfig config;
    config.epochs = 8;
    double before = 0.0, after = 0.0;
    const int n_seeds = 5;
    for (int s = 0; s < n_seeds; ++s) {
        const auto phase1 = train_joint(fix.train, fix.dev, "smell", config, 100 + s);
        const auto phase2 = finetune_classifier(phase1.model, fix.train, fix.dev, 5);
        for (const auto& doc : fix.dev) {
            before += (phase1.model.predict(doc) >= 0.5 ? 1 : 0) == doc.label_for("smell");
            after += (phase2.predict(doc) >= 0.5 ? 1 : 0) == doc.label_for("smell");
        }
    }
    EXPECT_GE(after, before - 1e-9);
}

TEST(ModelSelect, SingleCandidateWins) {
    EXPECT_EQ(model_select({{5.0, 0.3, 0.7}}), 0u);
    EXPECT_THROW(model_select({}), std::invalid_argument);
}

TEST(ModelSelect, LowerCoherencyWinsAtEqualClassification) {
    EXPECT_EQ(model_select({{1.0, 0.9, 0.5}, {2.0, 0.4, 0.5}}), 1u);
}

TEST(ModelSelect, InverseMeanWeighting) {
    // L_c = [2,4] -> w_c = 1/3; L_y = [1,3] -> w_y = 1/2.
    // Scores: 2/3 + 1/2 = 7/6 vs 4/3 + 3/2 = 17/6 -> first wins.
    EXPECT_EQ(model_select({{0.0, 2.0, 1.0}, {1.0, 4.0, 3.0}}), 0u);
}

TEST(ModelSelect, RefineGridAroundBestSkipsStageOneValues) {
    const auto refined = refine_grid(4.0, {1.0, 2.0, 4.0, 8.0});
    EXPECT_EQ(refined, (std::vector<double>{3.0, 5.0, 6.0}));
}

TEST(Checkpoint, ModelRoundTripsThroughJson) {
    TrainFixture fix(0.05, 200, 14);
    TrainConfig config;
    config.epochs = 2;
    const auto result = train_joint(fix.train, fix.dev, "smell", config, 4);
    const auto restored = model_from_json(model_to_json(result.model));
    EXPECT_EQ(model_to_json(restored).dump(), model_to_json(result.model).dump());
    for (const auto& doc : fix.dev) EXPECT_DOUBLE_EQ(restored.predict(doc), result.model.predict(doc));
}

TEST(TrainLog, CsvHasSpecifiedHeader) {
    const std::string csv = train_log_csv({{1, 0.5, 0.25, 0.75, 0.8}});
    EXPECT_EQ(csv.substr(0, csv.find('\n')), "epoch,L_y,L_r,L_s,dev_acc");
}
