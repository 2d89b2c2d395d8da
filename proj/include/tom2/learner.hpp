// learner.hpp -- the level-2 learner.
//
// The learner's interactive state is a joint posterior over (rule x teacher
// hypothesis). Each hypothesis carries a replayed TeacherState, which itself
// holds the teacher's model of the learner, so the learner reasons about what
// the teacher believes about it. Feedback is chosen by one-step lookahead
// through the modeled teacher plus a confidence-calibration bonus.

#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

#include "tom2/beliefs.hpp"
#include "tom2/game.hpp"
#include "tom2/teacher.hpp"

namespace tom2 {

enum class LearnerMode { Baseline, ToM2CE };

inline std::string_view mode_name(LearnerMode m) { return m == LearnerMode::Baseline ? "Baseline" : "ToM2CE"; }

inline LearnerMode parse_mode(const std::string& name)
{
    if (name == "Baseline") return LearnerMode::Baseline;
    if (name == "ToM2CE") return LearnerMode::ToM2CE;
    throw Error(ErrorCode::InvalidConfig, "mode must be Baseline or ToM2CE", "mode");
}

struct LearnerConfig {
    double tau1 = 0.5; // Think from here
    double tau2 = 0.9; // Know from here
    double lambda = 1.0;
    double convergence_threshold = 0.95;
    LearnerMode mode = LearnerMode::ToM2CE;
    CeAnchors anchors;

    void validate() const
    {
        auto in_open_unit = [](double x) { return x > 0.0 && x < 1.0; };
        if (!in_open_unit(tau1)) throw Error(ErrorCode::InvalidConfig, "tau1 must lie in (0, 1)", "tau1");
        if (!in_open_unit(tau2)) throw Error(ErrorCode::InvalidConfig, "tau2 must lie in (0, 1)", "tau2");
        if (!(tau1 < tau2)) throw Error(ErrorCode::InvalidConfig, "tau1 must be below tau2", "tau1");
        if (!(lambda >= 0.0) || !std::isfinite(lambda))
            throw Error(ErrorCode::InvalidConfig, "lambda must be finite and non-negative", "lambda");
        if (!(convergence_threshold > 0.0 && convergence_threshold <= 1.0))
            throw Error(ErrorCode::InvalidConfig, "convergence_threshold must lie in (0, 1]", "convergence_threshold");
    }
};

struct JointBelief {
    std::vector<TeacherHypothesis> grid;
    /// Cell (h, r) lives at h * kNumRules + r, h indexing `grid`.
    Distribution posterior;
    /// One replay per hypothesis: the replayed state depends only on the observed plays
    /// and utterances, not on which rule is true.
    std::vector<TeacherState> replayed_teachers;
    History history;
    std::vector<Utterance> uttered;

    std::size_t num_hypotheses() const { return grid.size(); }

    double joint(std::size_t h, int r) const { return posterior[h * kNumRules + static_cast<std::size_t>(r)]; }

    Distribution rule_marginal() const
    {
        std::vector<double> m(kNumRules, 0.0);
        for (std::size_t h = 0; h < grid.size(); ++h)
            for (int r = 0; r < kNumRules; ++r) m[r] += joint(h, r);
        return Distribution::normalize(std::move(m));
    }

    Distribution hypothesis_marginal() const
    {
        std::vector<double> m(grid.size(), 0.0);
        for (std::size_t h = 0; h < grid.size(); ++h)
            for (int r = 0; r < kNumRules; ++r) m[h] += joint(h, r);
        return Distribution::normalize(std::move(m));
    }

    /// P(rule | hypothesis h). Only meaningful when h has positive mass.
    Distribution rule_marginal_given(std::size_t h) const
    {
        std::vector<double> m(kNumRules);
        for (int r = 0; r < kNumRules; ++r) m[r] = joint(h, r);
        return Distribution::normalize(std::move(m));
    }

    /// Grid position of the hypothesis with this id, or grid.size() when absent.
    std::size_t position_of(int hypothesis_id) const
    {
        for (std::size_t h = 0; h < grid.size(); ++h)
            if (grid[h].id == hypothesis_id) return h;
        return grid.size();
    }
};

inline JointBelief init_learner(std::span<const TeacherHypothesis> grid,
                                const Distribution& knowledge_prior = Distribution::uniform(2))
{
    validate_grid(grid);
    JointBelief b;
    b.grid.assign(grid.begin(), grid.end());
    b.posterior = Distribution::uniform(grid.size() * kNumRules);
    for (const auto& h : grid) b.replayed_teachers.push_back(init_teacher(h, std::nullopt, knowledge_prior));
    return b;
}

/// Joint update on one teacher play: rule consistency times the replayed teacher's
/// probability of choosing that card. Throws ZeroEvidence when no cell survives.
inline JointBelief observe_card(JointBelief belief, const CardPlay& play)
{
    if (play.round != static_cast<int>(belief.history.size()) + 1)
        throw std::invalid_argument("play round " + std::to_string(play.round) + " does not follow history of length " +
                                    std::to_string(belief.history.size()));
    const auto unplayed = unplayed_cards(belief.history);
    const auto consistent = consistency_indicator(play);
    std::vector<double> likelihood(belief.posterior.size(), 0.0);
    for (std::size_t h = 0; h < belief.grid.size(); ++h) {
        const double p_card = card_choice(belief.replayed_teachers[h], unplayed).probability_of(play.card);
        for (int r = 0; r < kNumRules; ++r) likelihood[h * kNumRules + r] = consistent[r] * p_card;
    }
    belief.posterior = bayes_update(belief.posterior, likelihood);
    for (auto& teacher : belief.replayed_teachers) teacher = observe_own_play(std::move(teacher), play);
    belief.history.push_back(play);
    return belief;
}

/// Keeps every replayed teacher in step with what the learner said.
inline JointBelief record_utterance(JointBelief belief, const Utterance& u, const CeAnchors& anchors = {})
{
    for (auto& teacher : belief.replayed_teachers) teacher = interpret_feedback(std::move(teacher), u, anchors);
    belief.uttered.push_back(u);
    return belief;
}

inline double confidence(const JointBelief& belief, const Assertion& a)
{
    return assertion_confidence(belief.rule_marginal(), a);
}

inline ConfidenceLevel select_ce(double c, const LearnerConfig& config)
{
    if (c >= config.tau2) return ConfidenceLevel::Know;
    if (c >= config.tau1) return ConfidenceLevel::Think;
    return ConfidenceLevel::Unsure;
}

inline bool has_converged(const JointBelief& belief, const LearnerConfig& config)
{
    return belief.rule_marginal().max() >= config.convergence_threshold;
}

/// MAP rule, lowest id on ties.
inline Rule map_rule(const JointBelief& belief) { return Rule::from_id(static_cast<int>(belief.rule_marginal().argmax())); }

/// Id of the MAP teacher hypothesis, first grid entry on ties.
inline int map_teacher_hypothesis(const JointBelief& belief)
{
    return belief.grid[belief.hypothesis_marginal().argmax()].id;
}

/// Expected information the learner's rule marginal gains from the next card, if the
/// teacher is hypothesis `h` and has just heard `u`.
inline double lookahead_gain(const JointBelief& belief, std::size_t h, const Utterance& u,
                             std::span<const Card> unplayed, const CeAnchors& anchors = {})
{
    if (unplayed.empty()) return 0.0;
    const TeacherState after = interpret_feedback(belief.replayed_teachers[h], u, anchors);
    const CardChoice choice = card_choice(after, unplayed);
    LikelihoodMatrix outcomes(choice.cards.size() * kNumPiles, kNumRules);
    for (std::size_t i = 0; i < choice.cards.size(); ++i) {
        const double p_card = choice.probabilities[i];
        if (p_card == 0.0) continue;
        for (int r = 0; r < kNumRules; ++r)
            outcomes.at(i * kNumPiles + index(sort_card(Rule::from_id(r), choice.cards[i])), r) = p_card;
    }
    return expected_info_gain(belief.rule_marginal(), outcomes);
}

/// Expected utility of each of the 81 CE-bearing utterances under the ToM2CE objective.
inline std::vector<double> feedback_utilities(const JointBelief& belief, std::span<const Card> unplayed,
                                              const LearnerConfig& config)
{
    const Distribution hyp = belief.hypothesis_marginal();
    const auto conf = all_confidences(belief.rule_marginal());

    // card_choice reads only the simulated learner posterior, which interpret_feedback never
    // touches, so the teaching term is the same for every utterance; evaluate it once per hypothesis.
    const Utterance probe = Utterance::from_index(0);
    double teaching = 0.0;
    for (std::size_t h = 0; h < belief.grid.size(); ++h)
        if (hyp[h] > 0.0) teaching += hyp[h] * lookahead_gain(belief, h, probe, unplayed, config.anchors);

    std::vector<double> eu(kNumUtterances);
    for (int i = 0; i < kNumUtterances; ++i) {
        const Utterance u = Utterance::from_index(i);
        eu[i] = teaching + config.lambda * utterance_score(u, conf[u.assertion.id()], config.anchors);
    }
    return eu;
}

/// Baseline: the single most confident assertion, stated bare. ToM2CE: argmax of
/// feedback_utilities. Ties go to the lowest utterance index in both modes.
inline Utterance select_feedback(const JointBelief& belief, std::span<const Card> unplayed, const LearnerConfig& config)
{
    if (config.mode == LearnerMode::Baseline) {
        const auto conf = all_confidences(belief.rule_marginal());
        int best = 0;
        for (int a = 1; a < kNumAssertions; ++a)
            if (conf[a] > conf[best]) best = a;
        return Utterance{std::nullopt, Assertion::from_id(best)};
    }
    const auto eu = feedback_utilities(belief, unplayed, config);
    int best = 0;
    for (int i = 1; i < kNumUtterances; ++i)
        if (eu[i] > eu[best]) best = i;
    return Utterance::from_index(best);
}

/// The learner's estimate of the teacher's trust in it: sum over h of P(h) * P_h(RationalLearner).
inline double perceived_trust(const JointBelief& belief)
{
    const Distribution hyp = belief.hypothesis_marginal();
    double t = 0.0;
    for (std::size_t h = 0; h < belief.grid.size(); ++h) t += hyp[h] * belief.replayed_teachers[h].trust();
    return t;
}

inline json diagnostics(const JointBelief& belief)
{
    const Distribution rules = belief.rule_marginal();
    const Distribution hyp = belief.hypothesis_marginal();
    json confidences = json::array();
    const auto conf = all_confidences(rules);
    for (int a = 0; a < kNumAssertions; ++a) {
        const auto as = Assertion::from_id(a);
        confidences.push_back({{"value", as.value.name()}, {"pile", pile_number(as.pile)}, {"confidence", conf[a]}});
    }
    json hypotheses = json::array();
    for (std::size_t h = 0; h < belief.grid.size(); ++h)
        hypotheses.push_back({{"hypothesis", belief.grid[h]},
                              {"posterior", hyp[h]},
                              {"teacher_trust", belief.replayed_teachers[h].trust()}});
    return json{{"rule_marginal", rules.weights()},
                {"hypothesis_marginal", hyp.weights()},
                {"hypotheses", hypotheses},
                {"confidences", confidences},
                {"perceived_trust", perceived_trust(belief)},
                {"map_rule", map_rule(belief)},
                {"map_teacher_hypothesis", map_teacher_hypothesis(belief)}};
}

inline void to_json(json& j, const LearnerConfig& c)
{
    j = json{{"mode", mode_name(c.mode)},
             {"tau1", c.tau1},
             {"tau2", c.tau2},
             {"lambda", c.lambda},
             {"convergence_threshold", c.convergence_threshold},
             {"ce_anchors", {c.anchors.unsure, c.anchors.think, c.anchors.know}}};
}

/// Missing fields keep their defaults.
inline void from_json(const json& j, LearnerConfig& c)
{
    if (j.contains("mode")) c.mode = parse_mode(j.at("mode").get<std::string>());
    c.tau1 = j.value("tau1", c.tau1);
    c.tau2 = j.value("tau2", c.tau2);
    c.lambda = j.value("lambda", c.lambda);
    c.convergence_threshold = j.value("convergence_threshold", c.convergence_threshold);
    if (j.contains("ce_anchors")) {
        const auto a = j.at("ce_anchors").get<std::vector<double>>();
        if (a.size() != 3) throw Error(ErrorCode::InvalidConfig, "ce_anchors needs three values", "ce_anchors");
        c.anchors = CeAnchors{a[0], a[1], a[2]};
    }
}

} // namespace tom2
