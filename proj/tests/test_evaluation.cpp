#include <cmath>
#include <random>
#include <sstream>
#include <vector>

#include <gtest/gtest.h>

#include "logitwitness/evaluation.hpp"
#include "logitwitness/synthetic.hpp"

using namespace lw;

namespace {

double pairwise_auc(const std::vector<double>& m, const std::vector<double>& h) {
    double wins = 0.0;
    for (double a : m)
        for (double b : h) wins += a > b ? 1.0 : (a == b ? 0.5 : 0.0);
    return wins / (static_cast<double>(m.size()) * static_cast<double>(h.size()));
}

std::vector<double> tied_scores(std::mt19937_64& gen, std::size_t n) {
    std::uniform_int_distribution<int> u(-6, 6);
    std::vector<double> out(n);
    for (auto& x : out) x = 0.5 * u(gen);
    return out;
}

DetectionReport report(const std::string& id, Method m, double s, Label label) {
    DetectionReport r;
    r.id = id;
    r.method = m;
    r.statistic = s;
    r.decision = Verdict::machine;
    r.label = label;
    r.length = 10;
    return r;
}

} // namespace

TEST(Auc, HandExample) {
    EXPECT_DOUBLE_EQ(auc(std::vector<double>{2, 3}, std::vector<double>{1, 2.5}), 0.75);
}

TEST(Auc, PerfectSeparationAndTies) {
    EXPECT_EQ(auc(std::vector<double>{5, 6, 7}, std::vector<double>{1, 2}), 1.0);
    const std::vector<double> same{0.3, -1.0, 2.0, 2.0};
    EXPECT_EQ(auc(same, same), 0.5);
}

TEST(Auc, EmptyListError) {
    EXPECT_THROW(auc(std::vector<double>{}, std::vector<double>{1.0}), Error);
    EXPECT_THROW(auc(std::vector<double>{1.0}, std::vector<double>{}), Error);
}

TEST(Auc, MatchesPairwiseCountingExactly) {
    std::mt19937_64 gen(77);
    std::uniform_int_distribution<std::size_t> size(1, 40);
    for (int rep = 0; rep < 200; ++rep) {
        const auto m = tied_scores(gen, size(gen));
        const auto h = tied_scores(gen, size(gen));
        EXPECT_EQ(auc(m, h), pairwise_auc(m, h));
    }
}

TEST(Auc, Antisymmetry) {
    std::mt19937_64 gen(5);
    for (int rep = 0; rep < 50; ++rep) {
        const auto m = tied_scores(gen, 17);
        const auto h = tied_scores(gen, 23);
        EXPECT_EQ(auc(m, h) + auc(h, m), 1.0);
    }
}

TEST(Auc, InvariantUnderIncreasingTransform) {
    std::mt19937_64 gen(6);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> m(30), h(25);
    for (auto& x : m) x = n(gen) + 0.5;
    for (auto& x : h) x = n(gen);
    auto tm = m;
    auto th = h;
    for (auto& x : tm) x = std::exp(2.0 * x) + 3.0;
    for (auto& x : th) x = std::exp(2.0 * x) + 3.0;
    EXPECT_EQ(auc(m, h), auc(tm, th));
}

TEST(Rates, DirectCountWithTies) {
    const auto r = rates(std::vector<double>{-2, -1, 0, 1}, std::vector<double>{-10, -10}, 0.5);
    EXPECT_DOUBLE_EQ(r.fnr, 0.75);
    EXPECT_DOUBLE_EQ(r.tpr, 0.25);
    EXPECT_DOUBLE_EQ(r.tnr, 1.0);
    EXPECT_DOUBLE_EQ(r.fpr, 0.0);
}

TEST(Rates, ExtremeHumanScores) {
    for (double a : {0.01, 0.3, 0.9}) {
        EXPECT_EQ(rates(std::vector<double>{1.0}, std::vector<double>{-10, -10, -10}, a).tnr, 1.0);
    }
}

TEST(Rates, MonotoneAndComplementary) {
    std::mt19937_64 gen(9);
    std::normal_distribution<double> n(0.0, 1.0);
    std::vector<double> m(200), h(150);
    for (auto& x : m) x = n(gen);
    for (auto& x : h) x = n(gen) - 1.0;
    double prev_fnr = 0.0;
    double prev_tnr = 0.0;
    for (double a = 0.01; a < 1.0; a += 0.01) {
        const auto r = rates(m, h, a);
        EXPECT_GE(r.fnr, prev_fnr);
        EXPECT_GE(r.tnr, prev_tnr);
        EXPECT_EQ(r.tpr + r.fnr, 1.0);
        EXPECT_EQ(r.fpr + r.tnr, 1.0);
        prev_fnr = r.fnr;
        prev_tnr = r.tnr;
    }
}

TEST(Rates, AlphaOutOfRange) {
    EXPECT_THROW(rates(std::vector<double>{1.0}, std::vector<double>{0.0}, 0.0), Error);
    EXPECT_THROW(rates(std::vector<double>{1.0}, std::vector<double>{0.0}, 1.0), Error);
}

TEST(Rates, SyntheticMachinePassagesHitAlpha) {
    const auto q = make_peaked_language(50, 1.1, 0.2, 7);
    GenerateOptions go;
    go.seed = 2024;
    const auto corpus = generate_corpus(q, 200, 400, Label::machine, go);
    std::vector<double> scores;
    for (const auto& p : corpus.passages) scores.push_back(statistic_fast(p));
    const auto r = rates(scores, std::vector<double>{0.0}, 0.1);
    EXPECT_NEAR(r.fnr, 0.1, 0.07);
}

TEST(RelativeImprovement, TableEntry) {
    // AUCs as printed are rounded to 4 places; the printed percentage was
    // computed from unrounded AUCs, so agreement is to 4 decimals.
    EXPECT_NEAR(relative_improvement(0.9265, 0.9042), 0.232696, 1e-4);
    EXPECT_NEAR(100.0 * relative_improvement(0.9265, 0.9042), 23.27, 0.01);
}

TEST(RelativeImprovement, NoGainAndGuard) {
    EXPECT_EQ(relative_improvement(0.8, 0.8), 0.0);
    EXPECT_LT(relative_improvement(0.7, 0.8), 0.0);
    EXPECT_THROW(relative_improvement(1.0, 1.0), Error);
}

TEST(EvaluateReports, GroupsByMethodAndFillsImprovement) {
    std::vector<DetectionReport> reports{
        report("a", Method::ada, 3.0, Label::machine), report("b", Method::ada, 1.0, Label::human),
        report("c", Method::ada, 2.0, Label::machine), report("d", Method::ada, 2.5, Label::human),
        report("a", Method::fast, 1.0, Label::machine), report("b", Method::fast, 2.0, Label::human),
        report("c", Method::fast, 3.0, Label::machine), report("d", Method::fast, 0.0, Label::human),
    };
    const auto out = evaluate_reports(reports, 0.05);
    ASSERT_EQ(out.size(), 2u);
    EXPECT_EQ(out[0].method, Method::ada);
    EXPECT_DOUBLE_EQ(out[0].auc, 0.75);
    EXPECT_DOUBLE_EQ(out[1].auc, 0.75);
    ASSERT_TRUE(out[0].relative_improvement.has_value());
    EXPECT_DOUBLE_EQ(*out[0].relative_improvement, 0.0);
    EXPECT_FALSE(out[1].relative_improvement.has_value());
    std::ostringstream json;
    write_summary_json(out, 0.05, json);
    EXPECT_NE(json.str().find("\"relative_improvement\": 0.0"), std::string::npos) << json.str();
    std::ostringstream table;
    write_summary_table(out, table);
    EXPECT_NE(table.str().find("ada"), std::string::npos);
}

TEST(EvaluateReports, FailedReportsCountedNotScored) {
    auto failed = report("x", Method::fast, 0.0, Label::machine);
    failed.statistic.reset();
    failed.decision.reset();
    failed.error = "degenerate";
    std::vector<DetectionReport> reports{report("a", Method::fast, 1.0, Label::machine),
                                         report("b", Method::fast, 0.0, Label::human), failed};
    const auto out = evaluate_reports(reports, 0.05);
    EXPECT_EQ(out[0].n_failed, 1u);
    EXPECT_EQ(out[0].n_machine, 1u);
}

TEST(EvaluateReports, EntropyOrientation) {
    std::vector<DetectionReport> reports{report("a", Method::entropy, 0.1, Label::machine),
                                         report("b", Method::entropy, 0.9, Label::human)};
    const auto out = evaluate_reports(reports, 0.05);
    EXPECT_EQ(out[0].auc, 0.0);
    EXPECT_EQ(out[0].auc_oriented, 1.0);
}

TEST(EvaluateReports, UnlabeledIsAnError) {
    std::vector<DetectionReport> reports{report("a", Method::fast, 1.0, Label::unknown)};
    EXPECT_THROW(evaluate_reports(reports, 0.05), Error);
}

TEST(EvaluateReports, NeedsBothLabels) {
    std::vector<DetectionReport> reports{report("a", Method::fast, 1.0, Label::machine)};
    EXPECT_THROW(evaluate_reports(reports, 0.05), Error);
}

TEST(TnrBound, ConstantWitnessIsDegenerate) {
    const auto q = make_peaked_language(10, 1.0, 0.2, 3);
    const auto corpus = generate_corpus(q, 5, 10, Label::human);
    EXPECT_THROW(tnr_bound_estimate(corpus, [](double) { return 1.0; }), Error);
    EXPECT_THROW(tnr_bound_estimate(TraceCorpus{}, IdentityWitness{}), Error);
}

TEST(TnrBound, NullWhenObservedTokensComeFromQ) {
    const auto q = make_peaked_language(50, 1.1, 0.2, 7);
    GenerateOptions go;
    go.seed = 99;
    const auto corpus = generate_corpus(q, 500, 300, Label::human, go);
    const auto est = tnr_bound_estimate(corpus, IdentityWitness{}, 0.05);
    EXPECT_LE(std::fabs(est.value), 0.1);
    ASSERT_TRUE(est.bound.has_value());
}

TEST(TnrBound, BitKingdomIndicatorMatchesClosedForm) {
    // q(1) = 0.6 and human p_t(1) = 0.5: the per-token numerator of the
    // indicator witness averages q1 - mean p = 0.1.
    const BitKingdom bit{0.6, {0.5}};
    const auto q = bit.machine_language();
    GenerateOptions go;
    go.seed = 17;
    const std::size_t len = 200;
    const auto corpus = generate_corpus(bit.human_author(), q, 2000, len, Label::human, go);
    const auto indicator = bit_indicator_witness(bit);
    const auto est = tnr_bound_estimate(corpus, indicator, 0.05);
    const double per_token = est.numerator / static_cast<double>(len);
    // Monte Carlo SE of a mean of 400k Bernoulli(0.5) draws is < 1e-3
    EXPECT_NEAR(per_token, bit_example_value(bit, BitWitness::indicator), 5e-3);
    // denominator: sqrt(L * q1 (1 - q1))
    EXPECT_NEAR(est.denominator, std::sqrt(len * 0.6 * 0.4), 1e-9);
    EXPECT_LE(*est.bound, 1.0 - 0.05);
}

TEST(TnrBound, BoundFormula) {
    const auto q = make_peaked_language(10, 1.0, 0.2, 3);
    const auto corpus = generate_corpus(temper(q, 2.0), q, 50, 40, Label::human);
    const auto est = tnr_bound_estimate(corpus, IdentityWitness{}, 0.1);
    const double z = normal_quantile(0.1);
    EXPECT_DOUBLE_EQ(*est.bound, std::min(0.1 + normal_pdf(z) * est.value, 0.9));
    EXPECT_GT(est.value, 0.0);
}
