// teacher.hpp -- the level-1 teacher.
//
// A teacher knows the rule, replays a plain Bayesian learner on the public card
// history, and keeps a two-point belief over whether the learner it faces
// actually reasons like that replay (RationalLearner) or knows nothing
// (ConfusedLearner). The same state machine drives simulated teachers and the
// per-hypothesis teacher replays inside the level-2 learner.

#pragma once

#include <array>
#include <cmath>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "tom2/beliefs.hpp"
#include "tom2/game.hpp"

namespace tom2 {

// ----------------------------------------------------------------------------
// Hypotheses
// ----------------------------------------------------------------------------

enum class TeacherKind { Attentive, Systematic };

/// One cell of the teacher-model grid. `beta_T` is the card-selection
/// temperature, `beta_L_hat` the temperature the teacher assumes when reading
/// learner feedback. Both are ignored for Systematic teachers.
struct TeacherHypothesis {
    TeacherKind kind = TeacherKind::Attentive;
    double beta_T = 1.0;
    double beta_L_hat = 1.0;
    int id = 0;

    static TeacherHypothesis attentive(double beta_T, double beta_L_hat, int id)
    {
        return {TeacherKind::Attentive, beta_T, beta_L_hat, id};
    }
    static TeacherHypothesis systematic(int id) { return {TeacherKind::Systematic, 0.0, 0.0, id}; }

    friend bool operator==(const TeacherHypothesis&, const TeacherHypothesis&) = default;
};

/// Attentive x beta_T {0.1, 1, 10} x beta_L_hat {0.2, 5}, then Systematic: ids 0..6.
inline std::vector<TeacherHypothesis> default_teacher_grid()
{
    std::vector<TeacherHypothesis> grid;
    for (double bt : {0.1, 1.0, 10.0})
        for (double bl : {0.2, 5.0}) grid.push_back(TeacherHypothesis::attentive(bt, bl, static_cast<int>(grid.size())));
    grid.push_back(TeacherHypothesis::systematic(static_cast<int>(grid.size())));
    return grid;
}

inline void validate_grid(std::span<const TeacherHypothesis> grid)
{
    if (grid.empty()) throw Error(ErrorCode::InvalidConfig, "teacher grid is empty", "teacher_grid");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const auto& h = grid[i];
        for (std::size_t j = 0; j < i; ++j)
            if (grid[j].id == h.id)
                throw Error(ErrorCode::InvalidConfig, "duplicate teacher hypothesis id " + std::to_string(h.id),
                            "teacher_grid");
        if (h.kind == TeacherKind::Attentive) {
            const bool ok = h.beta_T > 0.0 && std::isfinite(h.beta_T) && h.beta_L_hat > 0.0 && std::isfinite(h.beta_L_hat);
            if (!ok)
                throw Error(ErrorCode::InvalidConfig,
                            "attentive hypothesis " + std::to_string(h.id) + " needs finite positive temperatures",
                            "teacher_grid");
        }
    }
}

// ----------------------------------------------------------------------------
// Utterances
// ----------------------------------------------------------------------------

enum class ConfidenceLevel { Unsure, Think, Know };

inline constexpr int kNumUtterances = 81; // 27 assertions x 3 confidence levels

/// Confidence each expression is taken to mean. Interior points of the default
/// CE bands [0, 0.5), [0.5, 0.9), [0.9, 1].
struct CeAnchors {
    double unsure = 0.25;
    double think = 0.70;
    double know = 0.97;

    double mid(ConfidenceLevel ce) const
    {
        switch (ce) {
        case ConfidenceLevel::Unsure: return unsure;
        case ConfidenceLevel::Think: return think;
        case ConfidenceLevel::Know: return know;
        }
        return know;
    }
};

inline std::string_view ce_name(ConfidenceLevel ce)
{
    switch (ce) {
    case ConfidenceLevel::Unsure: return "Unsure";
    case ConfidenceLevel::Think: return "Think";
    case ConfidenceLevel::Know: return "Know";
    }
    return "";
}

inline std::string_view ce_prefix(ConfidenceLevel ce)
{
    switch (ce) {
    case ConfidenceLevel::Unsure: return "I'm unsure if";
    case ConfidenceLevel::Think: return "I think";
    case ConfidenceLevel::Know: return "I know";
    }
    return "";
}

/// Learner feedback. `ce` is empty for the bare statements the baseline learner makes.
struct Utterance {
    std::optional<ConfidenceLevel> ce;
    Assertion assertion;

    /// Position among the 81 CE-bearing utterances: assertion-major, then Unsure < Think < Know.
    /// A bare statement reads as "I know" to a listener and indexes accordingly.
    int index() const { return 3 * assertion.id() + static_cast<int>(ce.value_or(ConfidenceLevel::Know)); }

    static Utterance from_index(int i)
    {
        return {static_cast<ConfidenceLevel>(i % 3), Assertion::from_id(i / 3)};
    }

    std::string rendered() const
    {
        std::string statement = std::string(assertion.value.name()) + "s belong in Pile " +
                                std::to_string(pile_number(assertion.pile)) + ".";
        if (!ce) return statement;
        return std::string(ce_prefix(*ce)) + " " + statement;
    }

    friend bool operator==(const Utterance&, const Utterance&) = default;
};

/// Mass of `rule_belief` (over the 18 rules) on rules that send the assertion's value to its pile.
inline double assertion_confidence(const Distribution& rule_belief, const Assertion& a)
{
    double c = 0.0;
    for (int r = 0; r < kNumRules; ++r)
        if (Rule::from_id(r).asserts(a)) c += rule_belief[r];
    return c;
}

inline std::array<double, kNumAssertions> all_confidences(const Distribution& rule_belief)
{
    std::array<double, kNumAssertions> out{};
    for (int a = 0; a < kNumAssertions; ++a) out[a] = assertion_confidence(rule_belief, Assertion::from_id(a));
    return out;
}

/// 1 - |confidence - anchor(ce)|: how well the expression matches a speaker holding `rule_belief`.
inline double utterance_score(const Utterance& u, double confidence, const CeAnchors& anchors = {})
{
    return 1.0 - std::abs(confidence - anchors.mid(u.ce.value_or(ConfidenceLevel::Know)));
}

/// P(u | speaker with `rule_belief`) over all 81 CE-bearing utterances at temperature `beta`.
inline Distribution utterance_likelihoods(const Distribution& rule_belief, double beta, const CeAnchors& anchors = {})
{
    const auto conf = all_confidences(rule_belief);
    std::vector<double> scores(kNumUtterances);
    for (int i = 0; i < kNumUtterances; ++i) {
        const Utterance u = Utterance::from_index(i);
        scores[i] = utterance_score(u, conf[u.assertion.id()], anchors);
    }
    return softmax_policy(scores, SoftmaxParams(beta));
}

// ----------------------------------------------------------------------------
// Teacher state
// ----------------------------------------------------------------------------

enum class LearnerType { RationalLearner = 0, ConfusedLearner = 1 };

struct TeacherState {
    TeacherHypothesis hypothesis;
    /// Empty for replays run inside a learner, which never learn the rule.
    std::optional<Rule> true_rule;
    Distribution simulated_learner_posterior;
    Distribution knowledge_belief;
    History history;
    std::vector<Utterance> heard;

    double trust() const { return knowledge_belief[static_cast<int>(LearnerType::RationalLearner)]; }
};

inline TeacherState init_teacher(const TeacherHypothesis& hypothesis, std::optional<Rule> true_rule,
                                 const Distribution& knowledge_prior)
{
    if (knowledge_prior.size() != 2)
        throw Error(ErrorCode::InvalidConfig, "knowledge prior must cover exactly two learner types", "knowledge_prior");
    return TeacherState{hypothesis, true_rule, Distribution::uniform(kNumRules), knowledge_prior, {}, {}};
}

/// Information a level-0 learner holding `posterior` gains from seeing `card` sorted.
inline double card_information_gain(const Distribution& posterior, const Card& card)
{
    LikelihoodMatrix lik(kNumPiles, kNumRules);
    for (int r = 0; r < kNumRules; ++r) lik.at(index(sort_card(Rule::from_id(r), card)), r) = 1.0;
    return expected_info_gain(posterior, lik);
}

/// Which card the teacher plays next, without the pile.
struct CardChoice {
    std::vector<Card> cards;
    Distribution probabilities;

    double probability_of(const Card& card) const
    {
        for (std::size_t i = 0; i < cards.size(); ++i)
            if (cards[i] == card) return probabilities[i];
        return 0.0;
    }
};

/// Card-selection distribution over `unplayed`. Depends only on the hypothesis and the
/// simulated learner posterior, never on the rule or on feedback heard.
inline CardChoice card_choice(const TeacherState& state, std::span<const Card> unplayed)
{
    if (unplayed.empty()) throw std::invalid_argument("no unplayed cards left");
    std::vector<Card> cards(unplayed.begin(), unplayed.end());
    if (state.hypothesis.kind == TeacherKind::Systematic) {
        std::size_t first = 0;
        for (std::size_t i = 1; i < cards.size(); ++i)
            if (cards[i].id() < cards[first].id()) first = i;
        return {std::move(cards), Distribution::point_mass(unplayed.size(), first)};
    }
    std::vector<double> scores(cards.size());
    for (std::size_t i = 0; i < cards.size(); ++i)
        scores[i] = card_information_gain(state.simulated_learner_posterior, cards[i]);
    return {std::move(cards), softmax_policy(scores, SoftmaxParams(state.hypothesis.beta_T))};
}

struct PlayOption {
    Card card;
    Pile pile;
};

struct PlayPolicy {
    std::vector<PlayOption> plays;
    Distribution probabilities;
};

/// Distribution over (card, pile) plays; the pile is always the true rule's.
inline PlayPolicy card_policy(const TeacherState& state, std::span<const Card> unplayed)
{
    if (!state.true_rule) throw std::logic_error("card_policy needs a teacher that knows the rule");
    CardChoice choice = card_choice(state, unplayed);
    PlayPolicy policy{{}, std::move(choice.probabilities)};
    policy.plays.reserve(choice.cards.size());
    for (const auto& card : choice.cards) policy.plays.push_back({card, sort_card(*state.true_rule, card)});
    return policy;
}

/// Systematic teachers ignore feedback entirely; attentive ones weigh how a
/// RationalLearner and a ConfusedLearner would each have produced `u`.
inline TeacherState interpret_feedback(TeacherState state, const Utterance& u, const CeAnchors& anchors = {})
{
    state.heard.push_back(u);
    if (state.hypothesis.kind == TeacherKind::Systematic) return state;
    const double beta = state.hypothesis.beta_L_hat;
    const Distribution rational = utterance_likelihoods(state.simulated_learner_posterior, beta, anchors);
    const Distribution confused = utterance_likelihoods(Distribution::uniform(kNumRules), beta, anchors);
    const std::array<double, 2> lik{rational[u.index()], confused[u.index()]};
    state.knowledge_belief = bayes_update(state.knowledge_belief, lik);
    return state;
}

inline std::array<double, kNumRules> consistency_indicator(const CardPlay& play)
{
    std::array<double, kNumRules> ind{};
    for (int r = 0; r < kNumRules; ++r) ind[r] = sort_card(Rule::from_id(r), play.card) == play.pile ? 1.0 : 0.0;
    return ind;
}

inline TeacherState observe_own_play(TeacherState state, const CardPlay& play)
{
    if (state.true_rule && sort_card(*state.true_rule, play.card) != play.pile)
        throw Error(ErrorCode::InconsistentPlay, card_label(play.card) + " does not belong in Pile " +
                                                     std::to_string(pile_number(play.pile)) + " under the teacher's rule");
    const auto ind = consistency_indicator(play);
    state.simulated_learner_posterior = bayes_update(state.simulated_learner_posterior, ind);
    state.history.push_back(play);
    return state;
}

/// Systematic teachers only check that the replayed learner has pinned the rule down.
inline bool believes_learner_knows(const TeacherState& state, double tau_know, double tau_trust)
{
    const bool pinned = state.simulated_learner_posterior.max() >= tau_know;
    if (state.hypothesis.kind == TeacherKind::Systematic) return pinned;
    return pinned && state.trust() >= tau_trust;
}

// ----------------------------------------------------------------------------
// JSON
// ----------------------------------------------------------------------------

inline void to_json(json& j, const TeacherHypothesis& h)
{
    if (h.kind == TeacherKind::Systematic) {
        j = json{{"kind", "Systematic"}, {"id", h.id}};
        return;
    }
    j = json{{"kind", "Attentive"}, {"beta_T", h.beta_T}, {"beta_L_hat", h.beta_L_hat}, {"id", h.id}};
}

inline void from_json(const json& j, TeacherHypothesis& h)
{
    const std::string kind = j.value("kind", std::string("Attentive"));
    const int id = j.value("id", 0);
    if (kind == "Systematic") {
        h = TeacherHypothesis::systematic(id);
    } else if (kind == "Attentive") {
        if (!j.contains("beta_T") || !j.contains("beta_L_hat"))
            throw Error(ErrorCode::InvalidConfig, "attentive hypothesis needs beta_T and beta_L_hat", "teacher_grid");
        h = TeacherHypothesis::attentive(j.at("beta_T").get<double>(), j.at("beta_L_hat").get<double>(), id);
    } else {
        throw Error(ErrorCode::InvalidConfig, "unknown teacher kind '" + kind + "'", "teacher_grid");
    }
}

inline void to_json(json& j, const Utterance& u)
{
    j = json{{"ce", u.ce ? json(ce_name(*u.ce)) : json(nullptr)},
             {"value", u.assertion.value.name()},
             {"pile", pile_number(u.assertion.pile)},
             {"text", u.rendered()}};
}

inline void from_json(const json& j, Utterance& u)
{
    u.ce.reset();
    if (j.contains("ce") && !j.at("ce").is_null()) {
        const auto name = j.at("ce").get<std::string>();
        bool found = false;
        for (auto ce : {ConfidenceLevel::Unsure, ConfidenceLevel::Think, ConfidenceLevel::Know})
            if (ce_name(ce) == name) {
                u.ce = ce;
                found = true;
            }
        if (!found) throw Error(ErrorCode::InvalidConfig, "unknown confidence expression '" + name + "'", "ce");
    }
    const auto value = parse_feature_value(j.at("value").get<std::string>());
    if (!value) throw Error(ErrorCode::InvalidConfig, "unknown feature value", "value");
    u.assertion = Assertion{*value, detail::pile_from_json(j.at("pile"))};
}

} // namespace tom2
