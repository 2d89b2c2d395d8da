#include <cmath>
#include <random>

#include <gtest/gtest.h>

#include "oracles.hpp"
#include "tom2/teacher.hpp"

using namespace tom2;

namespace {

const Rule kColorRule = Rule::from_id(0);

CardPlay play(int card_id, int pile, int round) { return {Card::from_id(card_id), pile_from_index(pile - 1), round}; }

TeacherState attentive(double beta_T = 1.0, double beta_L_hat = 0.2)
{
    return init_teacher(TeacherHypothesis::attentive(beta_T, beta_L_hat, 0), kColorRule, Distribution::uniform(2));
}

TeacherState systematic() { return init_teacher(TeacherHypothesis::systematic(6), kColorRule, Distribution::uniform(2)); }

/// Trust after one utterance, computed from scratch: enumerate all 81 (value, pile, ce)
/// triples, score against each learner type's rule belief, softmax, Bayes with a 50/50 prior.
double oracle_trust(const std::vector<oracle::Play>& history, int value_id, int pile, int ce, double beta)
{
    const auto rules = oracle::all_rules();
    const auto rational = oracle::level0_posterior(history);
    const std::vector<double> confused(18, 1.0 / 18.0);
    const double mids[3] = {0.25, 0.70, 0.97};
    auto conf = [&](const std::vector<double>& b, int v, int p) {
        double c = 0;
        for (std::size_t r = 0; r < rules.size(); ++r)
            if (rules[r].dimension == v / 3 && rules[r].pile_of[v % 3] == p) c += b[r];
        return c;
    };
    auto likelihood = [&](const std::vector<double>& b) {
        double z = 0, mine = 0;
        for (int v = 0; v < 9; ++v)
            for (int p = 0; p < 3; ++p)
                for (int k = 0; k < 3; ++k) {
                    const double w = std::exp((1.0 - std::abs(conf(b, v, p) - mids[k])) / beta);
                    z += w;
                    if (v == value_id && p == pile && k == ce) mine = w;
                }
        return mine / z;
    };
    const double lr = likelihood(rational), lc = likelihood(confused);
    return lr / (lr + lc);
}

} // namespace

TEST(Utterance, RenderedTemplates)
{
    const Assertion red1{FeatureValue{Dimension::Color, 0}, Pile::Pile1};
    EXPECT_EQ((Utterance{ConfidenceLevel::Unsure, red1}.rendered()), "I'm unsure if Reds belong in Pile 1.");
    EXPECT_EQ((Utterance{ConfidenceLevel::Think, red1}.rendered()), "I think Reds belong in Pile 1.");
    EXPECT_EQ((Utterance{ConfidenceLevel::Know, red1}.rendered()), "I know Reds belong in Pile 1.");
    EXPECT_EQ((Utterance{std::nullopt, red1}.rendered()), "Reds belong in Pile 1.");
    const Assertion sq3{FeatureValue{Dimension::Shape, 2}, Pile::Pile3};
    EXPECT_EQ((Utterance{ConfidenceLevel::Know, sq3}.rendered()), "I know Squiggles belong in Pile 3.");

    for (int i = 0; i < kNumUtterances; ++i) {
        const auto u = Utterance::from_index(i);
        EXPECT_EQ(u.index(), i);
        EXPECT_EQ(json(u).get<Utterance>(), u);
    }
}

TEST(InitTeacher, Examples)
{
    const auto t = attentive();
    EXPECT_EQ(t.simulated_learner_posterior, Distribution::uniform(kNumRules));
    EXPECT_EQ(t.knowledge_belief, Distribution::uniform(2));
    EXPECT_TRUE(t.history.empty());
    const auto s = systematic();
    EXPECT_EQ(s.simulated_learner_posterior, Distribution::uniform(kNumRules));
    EXPECT_THROW(init_teacher(TeacherHypothesis::systematic(0), kColorRule, Distribution::uniform(3)), Error);
}

TEST(CardPolicy, FirstMoveAttentiveIsUniform)
{
    for (double beta : {0.01, 0.1, 1.0, 10.0}) {
        const auto t = attentive(beta);
        const auto all = unplayed_cards({});
        const auto policy = card_policy(t, all);
        ASSERT_EQ(policy.plays.size(), 27u);
        for (std::size_t i = 0; i < 27; ++i) {
            EXPECT_NEAR(policy.probabilities[i], 1.0 / 27.0, 1e-12);
            EXPECT_EQ(policy.plays[i].pile, sort_card(kColorRule, policy.plays[i].card));
        }
    }
}

TEST(CardPolicy, SystematicPlaysSmallestId)
{
    const auto s = systematic();
    const auto policy = card_policy(s, unplayed_cards({}));
    EXPECT_EQ(policy.probabilities[0], 1.0);
    EXPECT_EQ(policy.plays[0].card.id(), 0);
}

TEST(CardPolicy, LowTemperatureConcentratesOnSeparatingCard)
{
    // After these plays only the two color rules sending Red to Pile 1 survive.
    auto t = attentive(0.01);
    for (const auto& p : {play(0, 1, 1), play(1, 1, 2), play(3, 1, 3)}) t = observe_own_play(t, p);
    ASSERT_EQ(consistent_rules(t.history), (std::vector<int>{0, 1}));

    // Oracle: a card separates the two iff it is not red (EIG 1 bit vs 0).
    const auto unplayed = unplayed_cards(t.history);
    const auto policy = card_policy(t, unplayed);
    double separating = 0.0;
    for (std::size_t i = 0; i < unplayed.size(); ++i) {
        const double gain = oracle::card_gain(oracle::level0_posterior({{0, 0}, {1, 0}, {3, 0}}), unplayed[i].id());
        EXPECT_NEAR(card_information_gain(t.simulated_learner_posterior, unplayed[i]), gain, 1e-12);
        if (gain > 0.5) separating += policy.probabilities[i];
    }
    EXPECT_GT(separating, 0.99);

    // Only one separating card on offer: it gets nearly all the mass.
    std::vector<Card> offer;
    for (const auto& c : unplayed)
        if (c.color == Color::Red) offer.push_back(c);
    offer.push_back(Card{Color::Blue, Shape::Oval, Count::Two});
    const auto narrowed = card_policy(t, offer);
    EXPECT_GT(narrowed.probabilities[offer.size() - 1], 0.99);
}

TEST(CardPolicy, LowerTemperatureRaisesMaxGainCard)
{
    std::mt19937 gen(5);
    for (int trial = 0; trial < 50; ++trial) {
        const Rule rule = Rule::from_id(static_cast<int>(gen() % kNumRules));
        TeacherState lo = init_teacher(TeacherHypothesis::attentive(0.2, 1.0, 0), rule, Distribution::uniform(2));
        TeacherState hi = init_teacher(TeacherHypothesis::attentive(2.0, 1.0, 1), rule, Distribution::uniform(2));
        for (int k = 0; k < 1 + static_cast<int>(gen() % 3); ++k) {
            const auto un = unplayed_cards(lo.history);
            const Card c = un[gen() % un.size()];
            const CardPlay p{c, sort_card(rule, c), k + 1};
            lo = observe_own_play(lo, p);
            hi = observe_own_play(hi, p);
        }
        const auto un = unplayed_cards(lo.history);
        const auto plo = card_choice(lo, un), phi = card_choice(hi, un);
        std::size_t best = 0;
        for (std::size_t i = 1; i < un.size(); ++i)
            if (card_information_gain(lo.simulated_learner_posterior, un[i]) >
                card_information_gain(lo.simulated_learner_posterior, un[best]))
                best = i;
        EXPECT_GE(plo.probabilities[best], phi.probabilities[best] - 1e-15);
    }
}

TEST(InterpretFeedback, SystematicIgnoresFeedback)
{
    auto s = observe_own_play(systematic(), play(0, 1, 1));
    const Utterance u{ConfidenceLevel::Know, Assertion::from_id(0)};
    const auto after = interpret_feedback(s, u);
    EXPECT_EQ(after.knowledge_belief, s.knowledge_belief);
    EXPECT_EQ(after.simulated_learner_posterior, s.simulated_learner_posterior);
    EXPECT_EQ(after.history, s.history);
}

TEST(InterpretFeedback, EqualScoresLeaveBeliefUnchanged)
{
    // Before any play the rational replay is uniform, exactly like the confused type.
    const auto t = attentive();
    for (int i = 0; i < kNumUtterances; i += 7) {
        const auto after = interpret_feedback(t, Utterance::from_index(i));
        EXPECT_NEAR(after.trust(), 0.5, 1e-15);
    }
}

TEST(InterpretFeedback, CalibratedUnsureRaisesTrust)
{
    auto t = observe_own_play(attentive(1.0, 0.2), play(2, 1, 1));
    const Utterance u{ConfidenceLevel::Unsure, Assertion{FeatureValue{Dimension::Color, 0}, Pile::Pile1}};
    const auto after = interpret_feedback(t, u);
    EXPECT_GT(after.trust(), 0.5);
    EXPECT_NEAR(after.trust(), oracle_trust({{2, 0}}, 0, 0, 0, 0.2), 1e-12);
    EXPECT_EQ(after.simulated_learner_posterior, t.simulated_learner_posterior);
    EXPECT_EQ(after.heard.size(), 1u);
}

TEST(InterpretFeedback, BareStatementReadsAsKnow)
{
    auto t = observe_own_play(attentive(1.0, 5.0), play(2, 1, 1));
    const Assertion a{FeatureValue{Dimension::Shape, 0}, Pile::Pile1};
    EXPECT_EQ(interpret_feedback(t, Utterance{std::nullopt, a}).knowledge_belief,
              interpret_feedback(t, Utterance{ConfidenceLevel::Know, a}).knowledge_belief);
    EXPECT_NEAR(interpret_feedback(t, Utterance{std::nullopt, a}).trust(), oracle_trust({{2, 0}}, 3, 0, 2, 5.0), 1e-12);
}

TEST(InterpretFeedback, LikelihoodsNormalized)
{
    std::mt19937_64 gen(9);
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> w(kNumRules);
        for (auto& x : w) x = (gen() % 4 == 0) ? 0.0 : static_cast<double>(gen() % 100) + 1.0;
        const auto b = Distribution::normalize(w);
        for (double beta : {0.2, 1.0, 5.0}) {
            const auto lik = utterance_likelihoods(b, beta);
            double s = 0;
            for (double p : lik) s += p;
            EXPECT_NEAR(s, 1.0, 1e-9);
        }
    }
}

TEST(ObserveOwnPlay, Examples)
{
    auto t = observe_own_play(attentive(), play(2, 1, 1));
    const auto expected = oracle::level0_posterior({{2, 0}});
    for (int r = 0; r < kNumRules; ++r) EXPECT_NEAR(t.simulated_learner_posterior[r], expected[r], 1e-15);

    const auto again = observe_own_play(t, play(2, 1, 2));
    for (int r = 0; r < kNumRules; ++r)
        EXPECT_NEAR(again.simulated_learner_posterior[r], t.simulated_learner_posterior[r], 1e-15);

    try {
        observe_own_play(t, play(2, 2, 2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.code(), ErrorCode::InconsistentPlay);
    }
}

TEST(BelievesLearnerKnows, Examples)
{
    auto t = observe_own_play(attentive(), play(2, 1, 1));
    EXPECT_FALSE(believes_learner_knows(t, 0.95, 0.0));

    t.simulated_learner_posterior = Distribution::point_mass(kNumRules, 0);
    t.knowledge_belief = Distribution::normalize({0.9, 0.1});
    EXPECT_TRUE(believes_learner_knows(t, 0.95, 0.8));
    EXPECT_FALSE(believes_learner_knows(t, 0.95, 0.95));

    auto s = systematic();
    s.simulated_learner_posterior = Distribution::point_mass(kNumRules, 0);
    s.knowledge_belief = Distribution::normalize({0.01, 0.99});
    EXPECT_TRUE(believes_learner_knows(s, 0.95, 0.8));
}

TEST(SystematicTeacher, FollowsDeckOrderRegardlessOfFeedback)
{
    auto s = systematic();
    for (int round = 1; round <= kNumCards; ++round) {
        const auto policy = card_policy(s, unplayed_cards(s.history));
        const auto& chosen = policy.plays[policy.probabilities.argmax()];
        EXPECT_EQ(chosen.card.id(), round - 1);
        s = observe_own_play(s, {chosen.card, chosen.pile, round});
        s = interpret_feedback(s, Utterance::from_index((round * 13) % kNumUtterances));
    }
}

TEST(TeacherGrid, DefaultGrid)
{
    const auto grid = default_teacher_grid();
    ASSERT_EQ(grid.size(), 7u);
    EXPECT_EQ(grid[0], TeacherHypothesis::attentive(0.1, 0.2, 0));
    EXPECT_EQ(grid[5], TeacherHypothesis::attentive(10.0, 5.0, 5));
    EXPECT_EQ(grid[6].kind, TeacherKind::Systematic);
    EXPECT_NO_THROW(validate_grid(grid));

    auto dup = grid;
    dup[1].id = 0;
    EXPECT_THROW(validate_grid(dup), Error);
    auto bad = grid;
    bad[2].beta_T = 0.0;
    EXPECT_THROW(validate_grid(bad), Error);
    for (const auto& h : grid) EXPECT_EQ(json(h).get<TeacherHypothesis>(), h);
}
