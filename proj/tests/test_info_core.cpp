#include <gtest/gtest.h>

#include <cmath>
#include <vector>

#include "cfrat/empirical.hpp"
#include "cfrat/info_core.hpp"
#include "cfrat/rng.hpp"
#include "cfrat/serialize.hpp"

using namespace cfrat;

namespace {

// ---------------------------------------------------------------------------
// Brute-force oracle: independent routes over the full table.
// ---------------------------------------------------------------------------

double oracle_entropy(const std::vector<double>& p) {
    double h = 0.0;
    for (double v : p)
        if (v > 0.0) h -= v * std::log2(v);
    return h;
}

// H(T|C) = sum_c p(c) * H(T | C=c), by per-slice enumeration.
double oracle_cond_entropy(const std::vector<double>& pair, int nt, int nc) {
    std::vector<double> pc(nc, 0.0);
    for (int t = 0; t < nt; ++t)
        for (int c = 0; c < nc; ++c) pc[c] += pair[static_cast<std::size_t>(t) * nc + c];
    double h = 0.0;
    for (int c = 0; c < nc; ++c) {
        if (pc[c] <= 0.0) continue;
        double slice = 0.0;
        for (int t = 0; t < nt; ++t) {
            const double q = pair[static_cast<std::size_t>(t) * nc + c] / pc[c];
            if (q > 0.0) slice -= q * std::log2(q);
        }
        h += pc[c] * slice;
    }
    return h;
}

// I(T;C) = sum p(t,c) log2( p(t,c) / (p(t)p(c)) ), the direct double sum.
double oracle_mi(const std::vector<double>& pair, int nt, int nc) {
    std::vector<double> pt(nt, 0.0), pc(nc, 0.0);
    for (int t = 0; t < nt; ++t)
        for (int c = 0; c < nc; ++c) {
            pt[t] += pair[static_cast<std::size_t>(t) * nc + c];
            pc[c] += pair[static_cast<std::size_t>(t) * nc + c];
        }
    double i = 0.0;
    for (int t = 0; t < nt; ++t)
        for (int c = 0; c < nc; ++c) {
            const double ptc = pair[static_cast<std::size_t>(t) * nc + c];
            if (ptc > 0.0) i += ptc * std::log2(ptc / (pt[t] * pc[c]));
        }
    return i;
}

JointDistribution random_joint(Rng& rng, int n1, int n2, int ny) {
    std::vector<double> cells(static_cast<std::size_t>(n1) * n2 * ny);
    double total = 0.0;
    for (auto& c : cells) {
        c = rng.uniform();
        total += c;
    }
    for (auto& c : cells) c /= total;
    // Push rounding residue into the largest cell so the mass check passes exactly.
    double sum = 0.0;
    for (double c : cells) sum += c;
    auto it = std::max_element(cells.begin(), cells.end());
    *it += 1.0 - sum;
    return JointDistribution(n1, n2, ny, std::move(cells));
}

JointDistribution figure2_joint(double c = 0.0) {
    return BinaryScenario(0.5, 0.5, 0.5, 0.75, 0.75 + c).to_joint();
}

constexpr double kMiQuarters = 0.18872187554086717;  // I for p(Y|X)=3/4, p(X)=p(Y)=1/2

}  // namespace

TEST(JointDistribution, RejectsInvalidTables) {
    EXPECT_THROW(JointDistribution(2, 2, 2, std::vector<double>(7, 0.125)), std::invalid_argument);
    EXPECT_THROW(JointDistribution(2, 2, 2, {0.5, 0.5, 0.5, -0.5, 0, 0, 0, 0}), std::invalid_argument);
    std::vector<double> off(8, 0.125);
    off[0] += 1e-6;  // mass off by more than 1e-12
    EXPECT_THROW(JointDistribution(2, 2, 2, off), std::invalid_argument);
}

TEST(JointDistribution, ConditioningOnZeroMassEventThrows) {
    // X1 = 1 never happens.
    JointDistribution j(2, 2, 2, {0.25, 0.25, 0.25, 0.25, 0, 0, 0, 0});
    EXPECT_THROW(j.conditional(Var::Y1, Var::X1, 1), std::domain_error);
    EXPECT_NO_THROW(j.conditional(Var::Y1, Var::X1, 0));
}

TEST(InformationMeasures, IndependentFairCoinsHaveZeroMi) {
    JointDistribution j(2, 2, 2, std::vector<double>(8, 0.125));
    const auto m = information_measures(j, Var::Y1, Var::X1);
    EXPECT_NEAR(m.entropy, 1.0, 1e-15);
    EXPECT_NEAR(m.conditional_entropy, 1.0, 1e-15);
    EXPECT_NEAR(m.mutual_information, 0.0, 1e-15);
}

TEST(InformationMeasures, DeterministicCopyHasOneBit) {
    // Y1 = X1, p = 1/2 each; X2 independent fair coin.
    std::vector<double> cells(8, 0.0);
    auto at = [](int x1, int x2, int y) { return (x1 * 2 + x2) * 2 + y; };
    cells[at(0, 0, 0)] = cells[at(0, 1, 0)] = cells[at(1, 0, 1)] = cells[at(1, 1, 1)] = 0.25;
    JointDistribution j(2, 2, 2, cells);
    const auto m = information_measures(j, Var::Y1, Var::X1);
    EXPECT_NEAR(m.mutual_information, 1.0, 1e-15);
    EXPECT_NEAR(m.conditional_entropy, 0.0, 1e-15);
}

TEST(InformationMeasures, ThreeQuartersConditionalMatchesOracle) {
    const auto j = figure2_joint();
    const auto m = information_measures(j, Var::Y1, Var::X2);
    const auto pair = j.pair_marginal(Var::Y1, Var::X2);
    EXPECT_NEAR(m.mutual_information, oracle_mi(pair, 2, 2), 1e-14);
    EXPECT_NEAR(m.mutual_information, kMiQuarters, 1e-14);
    EXPECT_NEAR(m.mutual_information, 0.18872, 5e-6);
    EXPECT_DOUBLE_EQ(m.mutual_information, m.entropy - m.conditional_entropy);
}

TEST(InformationMeasures, RejectsEqualVariables) {
    JointDistribution j(2, 2, 2, std::vector<double>(8, 0.125));
    EXPECT_THROW(information_measures(j, Var::Y1, Var::Y1), std::invalid_argument);
}

// Acceptance-4 style property at unit-test scale: impl vs brute force on
// random joints with supports up to 4x4x2.
TEST(InformationMeasures, MatchesBruteForceOnRandomJoints) {
    Rng rng(20240901);
    for (int trial = 0; trial < 400; ++trial) {
        const int n1 = 2 + static_cast<int>(rng.uniform_int(0, 2));
        const int n2 = 2 + static_cast<int>(rng.uniform_int(0, 2));
        const auto j = random_joint(rng, n1, n2, 2);
        for (Var target : {Var::Y1, Var::X1}) {
            for (Var cond : {Var::X1, Var::X2, Var::Y1}) {
                if (target == cond) continue;
                const auto m = information_measures(j, target, cond);
                const auto pair = j.pair_marginal(target, cond);
                const int nt = j.size(target), nc = j.size(cond);
                EXPECT_NEAR(m.entropy, oracle_entropy(j.marginal(target)), 1e-12);
                EXPECT_NEAR(m.conditional_entropy, oracle_cond_entropy(pair, nt, nc), 1e-12);
                EXPECT_NEAR(m.mutual_information, oracle_mi(pair, nt, nc), 1e-12);
                EXPECT_GE(m.mutual_information, -1e-12);
            }
        }
    }
}

TEST(InformationMeasures, ZeroMiExactlyWhenFactorized) {
    Rng rng(7);
    for (int trial = 0; trial < 50; ++trial) {
        // Product joint: independent by construction.
        double px = rng.uniform(0.05, 0.95), py = rng.uniform(0.05, 0.95);
        std::vector<double> cells(8);
        std::size_t i = 0;
        for (int x1 = 0; x1 < 2; ++x1)
            for (int x2 = 0; x2 < 2; ++x2)
                for (int y = 0; y < 2; ++y)
                    cells[i++] = (x1 ? px : 1 - px) * 0.5 * (y ? py : 1 - py);
        double sum = 0.0;
        for (double c : cells) sum += c;
        cells[0] += 1.0 - sum;
        JointDistribution j(2, 2, 2, cells);
        EXPECT_NEAR(information_measures(j, Var::Y1, Var::X1).mutual_information, 0.0, 1e-12);
        EXPECT_NEAR(information_measures(j, Var::Y1, Var::X2).mutual_information, 0.0, 1e-12);
    }
    // And strictly positive when not factorized.
    EXPECT_GT(information_measures(figure2_joint(), Var::Y1, Var::X1).mutual_information, 0.1);
}

TEST(CdaMix, EndpointsMatchEquationFiveAndSix) {
    const auto j = figure2_joint(0.1);  // p(Y|X2=1) = 0.85 to break symmetry

    // alpha = 0: X1 conditional unchanged, X2 conditional collapses to marginal.
    const auto a0 = cda_mix_conditionals(j, 0.0);
    EXPECT_NEAR(a0.conditional(Var::Y1, Var::X1, 1)[1], 0.75, 1e-12);
    EXPECT_NEAR(a0.conditional(Var::Y1, Var::X2, 1)[1], 0.5, 1e-12);

    // alpha = 1: X1 conditional collapses to marginal, X2 unchanged.
    const auto a1 = cda_mix_conditionals(j, 1.0);
    EXPECT_NEAR(a1.conditional(Var::Y1, Var::X1, 1)[1], 0.5, 1e-12);
    EXPECT_NEAR(a1.conditional(Var::Y1, Var::X2, 1)[1], 0.85, 1e-12);

    // alpha = 0.5 with p(Y|X1)=0.75, p(Y)=0.5 mixes to 0.625.
    const auto ah = cda_mix_conditionals(j, 0.5);
    EXPECT_NEAR(ah.conditional(Var::Y1, Var::X1, 1)[1], 0.625, 1e-12);

    EXPECT_THROW(cda_mix_conditionals(j, -0.01), std::invalid_argument);
    EXPECT_THROW(cda_mix_conditionals(j, 1.01), std::invalid_argument);
}

TEST(CdaMix, PreservesAllSingleVariableMarginals) {
    Rng rng(99);
    for (int trial = 0; trial < 60; ++trial) {
        const auto j = random_joint(rng, 2, 3, 2);
        const double alpha = rng.uniform();
        const auto aug = cda_mix_conditionals(j, alpha);
        for (Var v : {Var::X1, Var::X2, Var::Y1}) {
            const auto orig = j.marginal(v);
            const auto got = aug.marginal(v);
            for (std::size_t i = 0; i < orig.size(); ++i) EXPECT_NEAR(got[i], orig[i], 1e-12);
        }
    }
}

TEST(CdaBenefit, FigureTwoScenarioValues) {
    const auto j = figure2_joint();
    EXPECT_DOUBLE_EQ(cda_benefit(j, 0.5), 0.0);                 // symmetric crossover
    EXPECT_NEAR(cda_benefit(j, 0.0), kMiQuarters, 1e-12);       // = I(X2, Y1)
    EXPECT_NEAR(cda_benefit(j, 1.0), -kMiQuarters, 1e-12);
}

TEST(CdaBenefit, AntisymmetricAboutOneHalfForSymmetricScenario) {
    const auto j = figure2_joint();
    for (double a : {0.05, 0.2, 0.35, 0.45}) {
        EXPECT_NEAR(cda_benefit(j, a), -cda_benefit(j, 1.0 - a), 1e-12);
    }
}

TEST(CdaBenefit, ContinuousInAlpha) {
    const auto j = figure2_joint(0.07);
    double prev = cda_benefit(j, 0.0);
    for (int i = 1; i <= 200; ++i) {
        const double cur = cda_benefit(j, i / 200.0);
        EXPECT_LT(std::abs(cur - prev), 0.01);
        prev = cur;
    }
}

TEST(BinaryScenario, RejectsInfeasibleParameters) {
    // p(Y1)=0.5, p(X1)=0.9, p(Y1|X1)=0.7 implies p(Y1|X1=0) < 0.
    EXPECT_THROW(BinaryScenario(0.5, 0.9, 0.5, 0.7, 0.5), std::invalid_argument);
    EXPECT_THROW(BinaryScenario(1.5, 0.5, 0.5, 0.5, 0.5), std::invalid_argument);
    EXPECT_NO_THROW(BinaryScenario(0.5, 0.5, 0.5, 0.75, 0.6));
}

TEST(BenefitCurve, ZeroCrossingsTrackInformativeness) {
    const auto grid = default_alpha_grid();

    // c = 0: single sign change, at alpha = 0.5 exactly (the grid point itself is 0).
    const auto c0 = benefit_curve(BinaryScenario(0.5, 0.5, 0.5, 0.75, 0.75), grid);
    int sign_changes = 0;
    int last_sign = 0;
    for (const auto& pt : c0.points) {
        const int sign = pt.benefit_bits > 0 ? 1 : (pt.benefit_bits < 0 ? -1 : 0);
        if (sign != 0) {
            if (last_sign != 0 && sign != last_sign) ++sign_changes;
            last_sign = sign;
        }
    }
    EXPECT_EQ(sign_changes, 1);
    EXPECT_NEAR(error_budget(figure2_joint()), 0.5, 1e-9);

    // X2 more informative -> budget above 0.5; less informative -> below.
    EXPECT_GT(error_budget(figure2_joint(0.125)), 0.5 + 1e-6);
    EXPECT_LT(error_budget(figure2_joint(-0.125)), 0.5 - 1e-6);
}

TEST(BenefitCurve, RejectsBadGrids) {
    const BinaryScenario s(0.5, 0.5, 0.5, 0.75, 0.75);
    EXPECT_THROW(benefit_curve(s, {0.0, 0.0, 0.5}), std::invalid_argument);
    EXPECT_THROW(benefit_curve(s, {0.5, 1.5}), std::invalid_argument);
}

TEST(EstimateBinaryJoint, DeterministicCoOccurrenceCounts) {
    // Balanced 4-doc corpus: feature "hot" fires exactly on label-1 docs.
    Corpus corpus;
    for (int i = 0; i < 4; ++i) {
        Document d;
        d.id = i;
        const int y = i % 2;
        d.tokens = {y ? std::string("hot") : std::string("cold"), i < 2 ? "bland" : "plain"};
        d.labels["taste"] = y;
        d.masks["taste"] = {1, 0};
        corpus.push_back(d);
    }
    const auto feat = any_of_predicate("hot", {"hot"});
    const auto other = any_of_predicate("bland", {"bland"});
    const auto j = estimate_binary_joint(corpus, feat, other, "taste", 0.0);
    EXPECT_NEAR(j.conditional(Var::Y1, Var::X1, 1)[1], 1.0, 1e-12);
    EXPECT_NEAR(j.conditional(Var::Y1, Var::X1, 0)[1], 0.0, 1e-12);
}

TEST(EstimateBinaryJoint, CountArithmetic) {
    // Counts n_{a b y} over 20 docs, in the order 111,110,101,100,011,010,001,000.
    const int counts[2][2][2] = {{{1, 4}, {4, 1}}, {{4, 1}, {1, 4}}};  // counts[a][b][y]
    Corpus corpus;
    int id = 0;
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int y = 0; y < 2; ++y)
                for (int r = 0; r < counts[a][b][y]; ++r) {
                    Document d;
                    d.id = id++;
                    if (a) d.tokens.push_back("alpha");
                    if (b) d.tokens.push_back("beta");
                    d.tokens.push_back("pad");
                    d.labels["x"] = y;
                    d.masks["x"] = std::vector<std::uint8_t>(d.tokens.size(), 0);
                    corpus.push_back(d);
                }
    ASSERT_EQ(corpus.size(), 20u);
    const auto j = estimate_binary_joint(corpus, any_of_predicate("a", {"alpha"}),
                                         any_of_predicate("b", {"beta"}), "x", 0.0);
    for (int a = 0; a < 2; ++a)
        for (int b = 0; b < 2; ++b)
            for (int y = 0; y < 2; ++y) EXPECT_NEAR(j.cell(a, b, y), counts[a][b][y] / 20.0, 1e-15);
}

TEST(EstimateBinaryJoint, DegenerateFeatureNeedsSmoothing) {
    Corpus corpus;
    Document d;
    d.id = 0;
    d.tokens = {"plain"};
    d.labels["x"] = 1;
    d.masks["x"] = {0};
    corpus.push_back(d);
    const auto never = any_of_predicate("never", {"missing-token"});
    const auto always = any_of_predicate("always", {"plain"});
    EXPECT_THROW(estimate_binary_joint(corpus, never, always, "x", 0.0), std::runtime_error);
    EXPECT_NO_THROW(estimate_binary_joint(corpus, never, always, "x", 1.0));
    EXPECT_THROW(estimate_binary_joint(Corpus{}, never, always, "x"), std::invalid_argument);
}

TEST(EstimateBinaryJoint, BigramPredicateMatchesConsecutivePairs) {
    Document d;
    d.tokens = {"no", "lacing", "at", "all"};
    d.labels["x"] = 0;
    EXPECT_TRUE(bigram_predicate("no", "lacing")(d));
    EXPECT_FALSE(bigram_predicate("lacing", "no")(d));
    EXPECT_FALSE(bigram_predicate("no", "at")(d));
}

TEST(Serialization, JointRoundTripsThroughJson) {
    Rng rng(3);
    const auto j = random_joint(rng, 2, 2, 2);
    const auto restored = joint_from_json(joint_to_json(j));
    for (std::size_t i = 0; i < j.cells().size(); ++i)
        EXPECT_DOUBLE_EQ(restored.cells()[i], j.cells()[i]);
}
