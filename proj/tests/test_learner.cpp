#include <algorithm>
#include <numeric>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tom2/learner.hpp"

using namespace tom2;

namespace {

CardPlay play(int card_id, int pile, int round) { return {Card::from_id(card_id), pile_from_index(pile - 1), round}; }

JointBelief fresh() { return init_learner(default_teacher_grid()); }

constexpr std::size_t kSystematic = 6;

/// Plays a random prefix of a random deck permutation under `rule`.
History random_history(std::mt19937_64& gen, const Rule& rule, int length)
{
    std::vector<int> ids(kNumCards);
    std::iota(ids.begin(), ids.end(), 0);
    std::shuffle(ids.begin(), ids.end(), gen);
    History h;
    for (int i = 0; i < length; ++i) {
        const Card c = Card::from_id(ids[i]);
        h.push_back({c, sort_card(rule, c), i + 1});
    }
    return h;
}

std::vector<oracle::Play> plain(const History& h)
{
    std::vector<oracle::Play> out;
    for (const auto& p : h) out.push_back({p.card.id(), index(p.pile)});
    return out;
}

} // namespace

TEST(InitLearner, UniformJoint)
{
    const auto b = fresh();
    EXPECT_EQ(b.posterior.size(), 126u);
    for (double p : b.posterior) EXPECT_NEAR(p, 1.0 / 126.0, 1e-15);
    for (double p : b.rule_marginal()) EXPECT_NEAR(p, 1.0 / 18.0, 1e-15);
    for (double p : b.hypothesis_marginal()) EXPECT_NEAR(p, 1.0 / 7.0, 1e-15);
    EXPECT_EQ(b.replayed_teachers.size(), 7u);
}

TEST(ObserveCard, FirstPlayGivesUniformOverConsistentRules)
{
    const auto b = observe_card(fresh(), play(2, 1, 1));
    const auto expected = oracle::level0_posterior({{2, 0}});
    const auto m = b.rule_marginal();
    for (int r = 0; r < kNumRules; ++r) EXPECT_NEAR(m[r], expected[r], 1e-15);
    // Card 2 is not the first Systematic card.
    EXPECT_EQ(b.hypothesis_marginal()[kSystematic], 0.0);
}

TEST(ObserveCard, CardZeroFavorsSystematic)
{
    const auto b = observe_card(fresh(), play(0, 1, 1));
    // Hand Bayes: likelihood 1 for Systematic vs 1/27 per attentive hypothesis.
    const double sys = 1.0 / (6.0 / 27.0 + 1.0);
    EXPECT_NEAR(b.hypothesis_marginal()[kSystematic], sys, 1e-15);
    EXPECT_GT(b.hypothesis_marginal()[kSystematic], 1.0 / 7.0);
    EXPECT_EQ(map_teacher_hypothesis(b), 6);
}

TEST(ObserveCard, ImpossibleForSystematicExcludesIt)
{
    const auto b = observe_card(fresh(), play(5, 1, 1));
    EXPECT_EQ(b.hypothesis_marginal()[kSystematic], 0.0);
    EXPECT_NE(map_teacher_hypothesis(b), 6);
    EXPECT_EQ(map_teacher_hypothesis(fresh()), 0);
}

TEST(ObserveCard, ContradictionIsZeroEvidence)
{
    // Card 0 in pile 1 and card 1 (same color and shape) in pile 2 leave only the
    // count rule One->1, Two->2, Three->3.
    const auto b = observe_card(observe_card(fresh(), play(0, 1, 1)), play(1, 2, 2));
    EXPECT_EQ(b.rule_marginal()[12], 1.0);
    try {
        observe_card(b, play(2, 1, 3));
        FAIL() << "expected ZeroEvidence";
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::ZeroEvidence);
    }
    EXPECT_THROW(observe_card(fresh(), play(0, 1, 2)), std::invalid_argument);
}

TEST(Confidence, Examples)
{
    const auto b = observe_card(fresh(), play(2, 1, 1));
    const Assertion red1{FeatureValue{Dimension::Color, 0}, Pile::Pile1};
    const Assertion red2{FeatureValue{Dimension::Color, 0}, Pile::Pile2};
    EXPECT_NEAR(confidence(b, red1), 1.0 / 3.0, 1e-15);
    EXPECT_EQ(confidence(b, red2), 0.0);
    for (int a = 0; a < kNumAssertions; ++a) EXPECT_NEAR(confidence(fresh(), Assertion::from_id(a)), 1.0 / 9.0, 1e-15);
}

TEST(SelectCe, Thresholds)
{
    const LearnerConfig c;
    EXPECT_EQ(select_ce(1.0 / 3.0, c), ConfidenceLevel::Unsure);
    EXPECT_EQ(select_ce(0.95, c), ConfidenceLevel::Know);
    EXPECT_EQ(select_ce(0.5, c), ConfidenceLevel::Think);
    EXPECT_EQ(select_ce(0.9, c), ConfidenceLevel::Know);
    EXPECT_EQ(select_ce(0.0, c), ConfidenceLevel::Unsure);
    for (int i = 0; i < 1000; ++i) {
        const double a = i / 1000.0, b = (i + 1) / 1000.0;
        EXPECT_LE(static_cast<int>(select_ce(a, c)), static_cast<int>(select_ce(b, c)));
    }
}

TEST(SelectFeedback, BaselineStatesMostConfidentAssertionBare)
{
    LearnerConfig cfg;
    cfg.mode = LearnerMode::Baseline;
    const auto b = observe_card(fresh(), play(2, 1, 1));
    const auto u = select_feedback(b, unplayed_cards(b.history), cfg);
    EXPECT_FALSE(u.ce.has_value());
    EXPECT_EQ(u.rendered(), "Reds belong in Pile 1.");
    // Same state, same words: the baseline repeats itself when nothing changes.
    EXPECT_EQ(select_feedback(b, unplayed_cards(b.history), cfg), u);
}

TEST(SelectFeedback, PointMassBeliefSaysIKnow)
{
    auto b = fresh();
    int round = 1;
    for (const auto& p : {play(0, 1, 0), play(1, 1, 0), play(3, 1, 0), play(9, 2, 0)}) {
        b = observe_card(b, CardPlay{p.card, p.pile, round++});
        b = record_utterance(b, select_feedback(b, unplayed_cards(b.history), LearnerConfig{}));
    }
    ASSERT_EQ(b.rule_marginal()[0], 1.0);
    const auto u = select_feedback(b, unplayed_cards(b.history), LearnerConfig{});
    ASSERT_TRUE(u.ce.has_value());
    EXPECT_EQ(*u.ce, ConfidenceLevel::Know);
    EXPECT_EQ(u.rendered(), "I know Reds belong in Pile 1.");
    EXPECT_TRUE(Rule::from_id(0).asserts(u.assertion));
}

TEST(SelectFeedback, FirstPlayToM2CEIsUnsure)
{
    const auto b = observe_card(fresh(), play(2, 1, 1));
    const auto u = select_feedback(b, unplayed_cards(b.history), LearnerConfig{});
    ASSERT_TRUE(u.ce.has_value());
    EXPECT_EQ(*u.ce, ConfidenceLevel::Unsure);
    EXPECT_LE(confidence(b, u.assertion), 1.0 / 3.0 + 1e-15);
}

TEST(SelectFeedback, LookaheadDoesNotDependOnUtterance)
{
    std::mt19937_64 gen(17);
    for (int trial = 0; trial < 10; ++trial) {
        const Rule rule = Rule::from_id(static_cast<int>(gen() % kNumRules));
        auto b = fresh();
        for (const auto& p : random_history(gen, rule, 1 + static_cast<int>(gen() % 3))) {
            b = observe_card(b, p);
            b = record_utterance(b, select_feedback(b, unplayed_cards(b.history), LearnerConfig{}));
        }
        const auto un = unplayed_cards(b.history);
        for (std::size_t h = 0; h < b.num_hypotheses(); ++h) {
            const double reference = lookahead_gain(b, h, Utterance::from_index(0), un);
            for (int i = 1; i < kNumUtterances; ++i) EXPECT_EQ(lookahead_gain(b, h, Utterance::from_index(i), un), reference);
            for (int i = 0; i < kNumUtterances; i += 10) {
                const auto after = interpret_feedback(b.replayed_teachers[h], Utterance::from_index(i));
                EXPECT_EQ(after.simulated_learner_posterior, b.replayed_teachers[h].simulated_learner_posterior);
            }
        }
    }
}

TEST(SelectFeedback, NoCalibrationSingleHypothesisIsPureLookahead)
{
    const std::vector<TeacherHypothesis> grid{TeacherHypothesis::attentive(1.0, 0.2, 0)};
    auto b = observe_card(init_learner(grid), play(4, 2, 1));
    LearnerConfig cfg;
    cfg.lambda = 0.0;
    const auto un = unplayed_cards(b.history);
    const auto eu = feedback_utilities(b, un, cfg);
    for (int i = 0; i < kNumUtterances; ++i)
        EXPECT_EQ(eu[i], lookahead_gain(b, 0, Utterance::from_index(i), un));
    EXPECT_GT(eu[0], 0.0);
    EXPECT_EQ(select_feedback(b, un, cfg), Utterance::from_index(0));
}

TEST(HasConverged, Threshold)
{
    LearnerConfig cfg;
    auto b = observe_card(fresh(), play(2, 1, 1));
    EXPECT_FALSE(has_converged(b, cfg));
    b.posterior = Distribution::point_mass(b.posterior.size(), 3);
    EXPECT_TRUE(has_converged(b, cfg));
    std::vector<double> w(b.posterior.size(), 0.0);
    w[0] = 0.96;
    w[1] = 0.04;
    b.posterior = Distribution::normalize(w);
    EXPECT_TRUE(has_converged(b, cfg));
}

TEST(LearnerProperties, Level0EquivalenceAndSupport)
{
    std::mt19937_64 gen(99);
    for (int trial = 0; trial < 60; ++trial) {
        const Rule rule = Rule::from_id(static_cast<int>(gen() % kNumRules));
        const History h = random_history(gen, rule, 1 + static_cast<int>(gen() % 10));
        auto b = fresh();
        std::vector<bool> alive(b.posterior.size(), true);
        for (std::size_t k = 0; k < h.size(); ++k) {
            b = observe_card(b, h[k]);
            for (std::size_t i = 0; i < alive.size(); ++i) {
                if (!alive[i]) {
                    EXPECT_EQ(b.posterior[i], 0.0);
                }
                alive[i] = b.posterior[i] > 0.0;
            }
            const auto expected = oracle::level0_posterior(plain(History(h.begin(), h.begin() + k + 1)));
            const auto hyp = b.hypothesis_marginal();
            for (std::size_t hh = 0; hh < b.num_hypotheses(); ++hh) {
                if (hyp[hh] == 0.0) continue;
                const auto given = b.rule_marginal_given(hh);
                for (int r = 0; r < kNumRules; ++r) EXPECT_NEAR(given[r], expected[r], 1e-12);
            }
            const auto m = b.rule_marginal();
            for (int v = 0; v < kNumValues; ++v) {
                const auto fv = FeatureValue::from_id(v);
                double dim_mass = 0.0, sum = 0.0;
                for (int r = 0; r < kNumRules; ++r)
                    if (Rule::from_id(r).dimension == fv.dimension) dim_mass += m[r];
                for (int p = 0; p < 3; ++p) sum += confidence(b, Assertion{fv, pile_from_index(p)});
                EXPECT_NEAR(sum, dim_mass, 1e-12);
            }
            b = record_utterance(b, select_feedback(b, unplayed_cards(b.history), LearnerConfig{}));
            for (const auto& t : b.replayed_teachers) {
                EXPECT_EQ(t.history, b.history);
                EXPECT_EQ(t.heard, b.uttered);
            }
        }
    }
}

TEST(LearnerProperties, Deterministic)
{
    std::mt19937_64 gen(5);
    const History h = random_history(gen, Rule::from_id(7), 5);
    auto run = [&] {
        auto b = fresh();
        std::vector<Utterance> said;
        for (const auto& p : h) {
            b = observe_card(b, p);
            said.push_back(select_feedback(b, unplayed_cards(b.history), LearnerConfig{}));
            b = record_utterance(b, said.back());
        }
        return std::pair(b.posterior, said);
    };
    const auto a = run(), c = run();
    EXPECT_EQ(a.first, c.first);
    EXPECT_EQ(a.second, c.second);
}

TEST(LearnerConfig, Validation)
{
    LearnerConfig c;
    EXPECT_NO_THROW(c.validate());
    c.tau1 = 0.9;
    c.tau2 = 0.5;
    try {
        c.validate();
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InvalidConfig);
        EXPECT_EQ(e.field(), "tau1");
    }
    LearnerConfig d;
    d.lambda = -1;
    EXPECT_THROW(d.validate(), Error);
    EXPECT_EQ(json(LearnerConfig{}).get<LearnerConfig>().tau2, 0.9);
}

TEST(Diagnostics, Shape)
{
    const auto d = diagnostics(observe_card(fresh(), play(2, 1, 1)));
    EXPECT_EQ(d.at("rule_marginal").size(), 18u);
    EXPECT_EQ(d.at("hypothesis_marginal").size(), 7u);
    EXPECT_EQ(d.at("confidences").size(), 27u);
    EXPECT_NEAR(d.at("confidences")[0].at("confidence").get<double>(), 1.0 / 3.0, 1e-15);
}
