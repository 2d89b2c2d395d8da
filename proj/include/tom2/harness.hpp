// harness.hpp -- seeded teaching episodes, batch runs, metrics and trace replay.

#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <istream>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "tom2/beliefs.hpp"
#include "tom2/game.hpp"
#include "tom2/learner.hpp"
#include "tom2/rng.hpp"
#include "tom2/teacher.hpp"

namespace tom2 {

enum class Termination { LearnerConverges, TeacherBelievesKnown };

inline std::string_view termination_name(Termination t)
{
    return t == Termination::LearnerConverges ? "LearnerConverges" : "TeacherBelievesKnown";
}

/// Everything needed to run one episode. The seed fixes the rest.
struct EpisodeConfig {
    std::string name = "episode";
    std::uint64_t seed = 0;
    std::optional<Rule> true_rule; // empty: drawn from the rule stream
    TeacherHypothesis true_teacher = TeacherHypothesis::attentive(0.1, 0.2, 0);
    std::vector<TeacherHypothesis> learner_grid = default_teacher_grid();
    LearnerConfig learner;
    Termination termination = Termination::TeacherBelievesKnown;
    double tau_know = 0.95;
    double tau_trust = 0.8;
    std::vector<double> knowledge_prior{0.5, 0.5};

    void validate() const
    {
        learner.validate();
        validate_grid(learner_grid);
        if (true_teacher.kind == TeacherKind::Attentive &&
            !(true_teacher.beta_T > 0.0 && std::isfinite(true_teacher.beta_T) && true_teacher.beta_L_hat > 0.0 &&
              std::isfinite(true_teacher.beta_L_hat)))
            throw Error(ErrorCode::InvalidConfig, "true teacher needs finite positive temperatures", "true_teacher");
        if (!(tau_know >= 0.0 && tau_know <= 1.0)) throw Error(ErrorCode::InvalidConfig, "tau_know must be a probability", "tau_know");
        if (!(tau_trust >= 0.0 && tau_trust <= 1.0)) throw Error(ErrorCode::InvalidConfig, "tau_trust must be a probability", "tau_trust");
        if (knowledge_prior.size() != 2) throw Error(ErrorCode::InvalidConfig, "knowledge_prior needs two entries", "knowledge_prior");
        try {
            (void)Distribution::from_probabilities(knowledge_prior);
        } catch (const std::invalid_argument& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("knowledge_prior: ") + e.what(), "knowledge_prior");
        }
    }

    Distribution knowledge_distribution() const { return Distribution::from_probabilities(knowledge_prior); }

    Rule resolve_rule() const
    {
        if (true_rule) return *true_rule;
        CounterRng rng(seed, RngStream::Rule);
        return Rule::from_id(static_cast<int>(rng.below(kNumRules)));
    }
};

struct EpisodeResult {
    std::string config_name;
    std::uint64_t seed = 0;
    LearnerMode mode = LearnerMode::ToM2CE;
    int rule_id = -1;
    int true_teacher_id = -1;
    int rounds = 0;
    /// The termination condition fired before the deck ran out.
    bool converged = false;
    /// has_converged at the end of the episode.
    bool learner_converged = false;
    bool learner_map_rule_correct = false;
    int map_teacher_id = -1;
    bool teacher_map_correct = false;
    /// Prior mass the learner put on the true hypothesis before any play.
    double true_hypothesis_prior = 0.0;
    /// Posterior of the true hypothesis after each round.
    std::vector<double> true_hypothesis_posterior_trace;
    int misunderstanding_events = 0;
    bool false_stop = false;
    bool failed = false;
    std::string error;
};

// ----------------------------------------------------------------------------
// JSON
// ----------------------------------------------------------------------------

inline void to_json(json& j, const EpisodeConfig& c)
{
    j = json{{"name", c.name},
             {"seed", c.seed},
             {"true_rule", c.true_rule ? json(*c.true_rule) : json("random")},
             {"true_teacher", c.true_teacher},
             {"learner_grid", c.learner_grid},
             {"learner", c.learner},
             {"termination", termination_name(c.termination)},
             {"tau_know", c.tau_know},
             {"tau_trust", c.tau_trust},
             {"knowledge_prior", c.knowledge_prior}};
}

inline void to_json(json& j, const EpisodeResult& r)
{
    j = json{{"config", r.config_name}, {"seed", r.seed}, {"mode", mode_name(r.mode)}};
    if (r.failed) {
        j["failed"] = true;
        j["error"] = r.error;
        return;
    }
    j.update(json{{"rule_id", r.rule_id},
                  {"true_teacher", r.true_teacher_id},
                  {"rounds", r.rounds},
                  {"converged", r.converged},
                  {"learner_converged", r.learner_converged},
                  {"learner_map_rule_correct", r.learner_map_rule_correct},
                  {"map_teacher", r.map_teacher_id},
                  {"teacher_map_correct", r.teacher_map_correct},
                  {"true_hypothesis_prior", r.true_hypothesis_prior},
                  {"true_hypothesis_posterior_trace", r.true_hypothesis_posterior_trace},
                  {"misunderstanding_events", r.misunderstanding_events},
                  {"false_stop", r.false_stop},
                  {"failed", false}});
}

inline void from_json(const json& j, EpisodeResult& r)
{
    r = EpisodeResult{};
    r.config_name = j.at("config").get<std::string>();
    r.seed = j.at("seed").get<std::uint64_t>();
    r.mode = parse_mode(j.at("mode").get<std::string>());
    r.failed = j.value("failed", false);
    if (r.failed) {
        r.error = j.value("error", std::string());
        return;
    }
    r.rule_id = j.at("rule_id").get<int>();
    r.true_teacher_id = j.at("true_teacher").get<int>();
    r.rounds = j.at("rounds").get<int>();
    r.converged = j.at("converged").get<bool>();
    r.learner_converged = j.at("learner_converged").get<bool>();
    r.learner_map_rule_correct = j.at("learner_map_rule_correct").get<bool>();
    r.map_teacher_id = j.at("map_teacher").get<int>();
    r.teacher_map_correct = j.at("teacher_map_correct").get<bool>();
    r.true_hypothesis_prior = j.at("true_hypothesis_prior").get<double>();
    r.true_hypothesis_posterior_trace = j.at("true_hypothesis_posterior_trace").get<std::vector<double>>();
    r.misunderstanding_events = j.at("misunderstanding_events").get<int>();
    r.false_stop = j.at("false_stop").get<bool>();
}

namespace detail {

inline Termination parse_termination(const std::string& s)
{
    if (s == "LearnerConverges") return Termination::LearnerConverges;
    if (s == "TeacherBelievesKnown") return Termination::TeacherBelievesKnown;
    throw Error(ErrorCode::InvalidConfig, "termination must be LearnerConverges or TeacherBelievesKnown", "termination");
}

inline const TeacherHypothesis& grid_entry(const std::vector<TeacherHypothesis>& grid, int id, const char* field)
{
    for (const auto& h : grid)
        if (h.id == id) return h;
    throw Error(ErrorCode::InvalidConfig, "no teacher hypothesis with id " + std::to_string(id), field);
}

inline std::vector<TeacherHypothesis> parse_grid(const json& j)
{
    std::vector<TeacherHypothesis> grid;
    if (!j.is_array()) throw Error(ErrorCode::InvalidConfig, "teacher_grid must be an array", "teacher_grid");
    for (std::size_t i = 0; i < j.size(); ++i) {
        json entry = j[i];
        if (!entry.contains("id")) entry["id"] = static_cast<int>(i);
        grid.push_back(entry.get<TeacherHypothesis>());
    }
    validate_grid(grid);
    return grid;
}

} // namespace detail

/// Reads one entry of an experiment's "configs" array. Hypotheses are referenced by grid id.
inline EpisodeConfig parse_episode_config(const json& j, const std::vector<TeacherHypothesis>& grid)
{
    try {
        EpisodeConfig c;
        c.name = j.value("name", std::string("config"));
        if (j.contains("true_rule")) {
            const json& r = j.at("true_rule");
            if (r.is_string()) {
                if (r.get<std::string>() != "random")
                    throw Error(ErrorCode::InvalidConfig, "true_rule must be \"random\", a rule id or a rule object", "true_rule");
            } else if (r.is_number_integer()) {
                c.true_rule = json{{"id", r}}.get<Rule>();
            } else {
                c.true_rule = r.get<Rule>();
            }
        }
        const int teacher_id = j.at("true_teacher").get<int>();
        c.true_teacher = detail::grid_entry(grid, teacher_id, "true_teacher");
        if (j.contains("learner_grid")) {
            c.learner_grid.clear();
            for (int id : j.at("learner_grid").get<std::vector<int>>())
                c.learner_grid.push_back(detail::grid_entry(grid, id, "learner_grid"));
        } else {
            c.learner_grid = grid;
        }
        if (j.contains("learner")) c.learner = j.at("learner").get<LearnerConfig>();
        if (j.contains("termination")) c.termination = detail::parse_termination(j.at("termination").get<std::string>());
        c.tau_know = j.value("tau_know", c.tau_know);
        c.tau_trust = j.value("tau_trust", c.tau_trust);
        if (j.contains("knowledge_prior")) c.knowledge_prior = j.at("knowledge_prior").get<std::vector<double>>();
        c.validate();
        return c;
    } catch (const json::exception& e) {
        throw Error(ErrorCode::InvalidConfig, std::string("malformed episode config: ") + e.what());
    }
}

struct Experiment {
    std::vector<TeacherHypothesis> teacher_grid;
    std::vector<EpisodeConfig> configs;
};

/// {"teacher_grid": [...], "configs": [...]}. The grid defaults to default_teacher_grid().
inline Experiment parse_experiment(const json& j)
{
    try {
        Experiment e;
        e.teacher_grid = j.contains("teacher_grid") ? detail::parse_grid(j.at("teacher_grid")) : default_teacher_grid();
        if (!j.contains("configs") || !j.at("configs").is_array() || j.at("configs").empty())
            throw Error(ErrorCode::InvalidConfig, "experiment needs a non-empty configs array", "configs");
        std::set<std::string> names;
        for (const auto& c : j.at("configs")) {
            e.configs.push_back(parse_episode_config(c, e.teacher_grid));
            if (!names.insert(e.configs.back().name).second)
                throw Error(ErrorCode::InvalidConfig, "duplicate config name " + e.configs.back().name, "configs");
        }
        return e;
    } catch (const json::exception& ex) {
        throw Error(ErrorCode::InvalidConfig, std::string("malformed experiment: ") + ex.what());
    }
}

// ----------------------------------------------------------------------------
// Episodes
// ----------------------------------------------------------------------------

namespace detail {

inline void emit(std::ostream* trace, const json& record)
{
    if (trace) *trace << record.dump() << '\n';
}

inline double true_hypothesis_mass(const JointBelief& belief, int teacher_id)
{
    const std::size_t pos = belief.position_of(teacher_id);
    return pos < belief.num_hypotheses() ? belief.hypothesis_marginal()[pos] : 0.0;
}

inline std::vector<double> replay_trust(const JointBelief& belief)
{
    std::vector<double> t;
    for (const auto& teacher : belief.replayed_teachers) t.push_back(teacher.trust());
    return t;
}

} // namespace detail

/// Plays one seeded episode. Each round: the teacher samples a play, the learner
/// updates and speaks, the teacher reads the feedback. Model errors (ZeroEvidence,
/// InconsistentPlay) become a failed result instead of propagating.
inline EpisodeResult run_episode(const EpisodeConfig& config, std::ostream* trace = nullptr)
{
    EpisodeResult result;
    result.config_name = config.name;
    result.seed = config.seed;
    result.mode = config.learner.mode;
    result.true_teacher_id = config.true_teacher.id;
    try {
        config.validate();
        const Rule rule = config.resolve_rule();
        result.rule_id = rule.id();
        const Distribution knowledge_prior = config.knowledge_distribution();
        TeacherState teacher = init_teacher(config.true_teacher, rule, knowledge_prior);
        JointBelief learner = init_learner(config.learner_grid, knowledge_prior);
        result.true_hypothesis_prior = detail::true_hypothesis_mass(learner, config.true_teacher.id);
        CounterRng cards(config.seed, RngStream::TeacherCards);

        detail::emit(trace, json{{"event", "episode_start"}, {"config", config}, {"rule", rule}});

        for (int round = 1; round <= kNumCards; ++round) {
            const auto unplayed = unplayed_cards(teacher.history);
            const PlayPolicy policy = card_policy(teacher, unplayed);
            const std::size_t pick = cards.sample(policy.probabilities);
            const CardPlay play{policy.plays[pick].card, policy.plays[pick].pile, round};

            teacher = observe_own_play(std::move(teacher), play);
            learner = observe_card(std::move(learner), play);
            result.true_hypothesis_posterior_trace.push_back(detail::true_hypothesis_mass(learner, config.true_teacher.id));
            detail::emit(trace, json{{"event", "play"},
                                     {"round", round},
                                     {"play", play},
                                     {"teacher_card_probability", policy.probabilities[pick]},
                                     {"joint_posterior", learner.posterior.weights()},
                                     {"rule_marginal", learner.rule_marginal().weights()},
                                     {"hypothesis_marginal", learner.hypothesis_marginal().weights()},
                                     {"teacher_simulated_posterior", teacher.simulated_learner_posterior.weights()}});

            const auto remaining = unplayed_cards(learner.history);
            const Utterance u = select_feedback(learner, remaining, config.learner);
            learner = record_utterance(std::move(learner), u, config.learner.anchors);
            teacher = interpret_feedback(std::move(teacher), u, config.learner.anchors);

            const bool learner_knows = has_converged(learner, config.learner);
            const bool teacher_thinks = believes_learner_knows(teacher, config.tau_know, config.tau_trust);
            const bool misunderstanding = learner_knows != teacher_thinks;
            if (misunderstanding) ++result.misunderstanding_events;
            detail::emit(trace, json{{"event", "utterance"},
                                     {"round", round},
                                     {"utterance", u},
                                     {"teacher_knowledge_belief", teacher.knowledge_belief.weights()},
                                     {"replay_trust", detail::replay_trust(learner)},
                                     {"learner_converged", learner_knows},
                                     {"teacher_believes_known", teacher_thinks},
                                     {"misunderstanding", misunderstanding}});

            result.rounds = round;
            const bool stop = config.termination == Termination::LearnerConverges ? learner_knows : teacher_thinks;
            if (stop) {
                result.converged = true;
                break;
            }
        }

        result.learner_converged = has_converged(learner, config.learner);
        result.learner_map_rule_correct = map_rule(learner) == rule;
        result.map_teacher_id = map_teacher_hypothesis(learner);
        result.teacher_map_correct = result.map_teacher_id == config.true_teacher.id;
        result.false_stop = config.termination == Termination::TeacherBelievesKnown && result.converged &&
                            !(result.learner_converged && result.learner_map_rule_correct);
        detail::emit(trace, json{{"event", "episode_end"}, {"result", result}});
    } catch (const Error& e) {
        result.failed = true;
        result.error = std::string(to_string(e.code())) + ": " + e.what();
        detail::emit(trace, json{{"event", "episode_failed"}, {"error", result.error}});
    }
    return result;
}

// ----------------------------------------------------------------------------
// Batches
// ----------------------------------------------------------------------------

struct ConfigMetrics {
    std::string config;
    LearnerMode mode = LearnerMode::ToM2CE;
    int true_teacher = 0;
    int episodes = 0;
    int completed = 0;
    double mean_rounds = 0.0;
    double median_rounds = 0.0;
    double convergence_rate = 0.0;
    double rule_accuracy = 0.0;
    double map_hypothesis_accuracy = 0.0;
    double mean_misunderstanding_events = 0.0;
    double false_stop_rate = 0.0;
};

struct BatchResult {
    /// Config-major, then episode index.
    std::vector<EpisodeResult> episodes;
    std::vector<ConfigMetrics> metrics;
};

inline ConfigMetrics aggregate(const EpisodeConfig& config, std::span<const EpisodeResult> results)
{
    ConfigMetrics m;
    m.config = config.name;
    m.mode = config.learner.mode;
    m.true_teacher = config.true_teacher.id;
    m.episodes = static_cast<int>(results.size());
    std::vector<int> rounds;
    for (const auto& r : results) {
        if (r.failed) continue;
        ++m.completed;
        rounds.push_back(r.rounds);
        m.mean_rounds += r.rounds;
        m.convergence_rate += r.converged;
        m.rule_accuracy += r.learner_map_rule_correct;
        m.map_hypothesis_accuracy += r.teacher_map_correct;
        m.mean_misunderstanding_events += r.misunderstanding_events;
        m.false_stop_rate += r.false_stop;
    }
    if (m.completed == 0) return m;
    const double n = m.completed;
    m.mean_rounds /= n;
    m.convergence_rate /= n;
    m.rule_accuracy /= n;
    m.map_hypothesis_accuracy /= n;
    m.mean_misunderstanding_events /= n;
    m.false_stop_rate /= n;
    std::sort(rounds.begin(), rounds.end());
    const std::size_t mid = rounds.size() / 2;
    m.median_rounds = rounds.size() % 2 ? rounds[mid] : 0.5 * (rounds[mid - 1] + rounds[mid]);
    return m;
}

inline std::string trace_file_name(const EpisodeConfig& config, int episode_index)
{
    return config.name + "_" + std::to_string(episode_index) + ".jsonl";
}

/// Runs `episodes_per_config` episodes of every config with seeds base_seed + index,
/// so configs share seeds and can be paired. Output order does not depend on `threads`.
/// Per-episode traces go to `trace_dir` when it is set.
inline BatchResult run_batch(std::span<const EpisodeConfig> configs, int episodes_per_config, std::uint64_t base_seed,
                             unsigned threads = 1, const std::optional<std::filesystem::path>& trace_dir = std::nullopt)
{
    const std::size_t per = static_cast<std::size_t>(std::max(episodes_per_config, 0));
    const std::size_t total = configs.size() * per;
    BatchResult batch;
    batch.episodes.resize(total);
    if (trace_dir) std::filesystem::create_directories(*trace_dir);

    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t job = next++; job < total; job = next++) {
            const std::size_t c = job / per;
            const int index = static_cast<int>(job % per);
            EpisodeConfig config = configs[c];
            config.seed = base_seed + static_cast<std::uint64_t>(index);
            if (trace_dir) {
                std::ofstream out(*trace_dir / trace_file_name(config, index));
                batch.episodes[job] = run_episode(config, &out);
            } else {
                batch.episodes[job] = run_episode(config);
            }
        }
    };
    threads = std::max(1u, threads);
    if (threads == 1) {
        worker();
    } else {
        std::vector<std::jthread> pool;
        for (unsigned t = 0; t < threads; ++t) pool.emplace_back(worker);
    }

    for (std::size_t c = 0; c < configs.size(); ++c)
        batch.metrics.push_back(aggregate(configs[c], std::span(batch.episodes).subspan(c * per, per)));
    return batch;
}

inline void write_metrics_csv(std::ostream& out, std::span<const ConfigMetrics> metrics)
{
    out << "config,mode,true_teacher,episodes,completed,mean_rounds,median_rounds,convergence_rate,"
           "rule_accuracy,map_hypothesis_accuracy,mean_misunderstanding_events,false_stop_rate\n";
    out << std::fixed << std::setprecision(6);
    for (const auto& m : metrics) {
        out << m.config << ',' << mode_name(m.mode) << ',' << m.true_teacher << ',' << m.episodes << ','
            << m.completed << ',' << m.mean_rounds << ',' << m.median_rounds << ',' << m.convergence_rate << ','
            << m.rule_accuracy << ',' << m.map_hypothesis_accuracy << ',' << m.mean_misunderstanding_events << ','
            << m.false_stop_rate << '\n';
    }
}

inline void write_episodes_jsonl(std::ostream& out, std::span<const EpisodeResult> episodes)
{
    for (const auto& e : episodes) out << json(e).dump() << '\n';
}

inline std::vector<EpisodeResult> read_episodes_jsonl(std::istream& in)
{
    std::vector<EpisodeResult> out;
    std::string line;
    while (std::getline(in, line))
        if (!line.empty()) out.push_back(json::parse(line).get<EpisodeResult>());
    return out;
}

// ----------------------------------------------------------------------------
// Analysis
// ----------------------------------------------------------------------------

/// Mean true-hypothesis posterior per round. Entry 0 is the prior; entry k is after
/// round k. Finished episodes carry their final value forward.
inline std::vector<double> recovery_curve(std::span<const EpisodeResult> results)
{
    std::vector<const EpisodeResult*> done;
    std::size_t longest = 0;
    for (const auto& r : results) {
        if (r.failed) continue;
        if (!done.empty() && r.true_teacher_id != done.front()->true_teacher_id)
            throw std::invalid_argument("recovery_curve needs results that share the true teacher");
        done.push_back(&r);
        longest = std::max(longest, r.true_hypothesis_posterior_trace.size());
    }
    std::vector<double> curve(longest + 1, 0.0);
    if (done.empty()) return curve;
    for (const auto* r : done) {
        curve[0] += r->true_hypothesis_prior;
        const auto& t = r->true_hypothesis_posterior_trace;
        for (std::size_t k = 1; k <= longest; ++k)
            curve[k] += t.empty() ? r->true_hypothesis_prior : t[std::min(k, t.size()) - 1];
    }
    for (double& v : curve) v /= static_cast<double>(done.size());
    return curve;
}

struct PairedDelta {
    std::string metric;
    std::size_t pairs = 0;
    double baseline_mean = 0.0;
    double treatment_mean = 0.0;
    double mean_delta = 0.0; // treatment - baseline
    double ci_low = 0.0;
    double ci_high = 0.0;
};

inline constexpr int kBootstrapResamples = 10'000;

/// Paired comparison of two configs over matched seeds, with 95% percentile
/// bootstrap intervals. Pairs where either episode failed are dropped.
/// Throws UnmatchedSeeds when the two seed sets differ.
inline std::vector<PairedDelta> compare_modes(std::span<const EpisodeResult> episodes, const std::string& baseline,
                                              const std::string& treatment, std::uint64_t bootstrap_seed = 0,
                                              int resamples = kBootstrapResamples)
{
    std::map<std::uint64_t, const EpisodeResult*> base, treat;
    for (const auto& e : episodes) {
        if (e.config_name == baseline) base[e.seed] = &e;
        else if (e.config_name == treatment) treat[e.seed] = &e;
    }
    if (base.empty() || base.size() != treat.size() ||
        !std::equal(base.begin(), base.end(), treat.begin(), [](const auto& a, const auto& b) { return a.first == b.first; }))
        throw Error(ErrorCode::UnmatchedSeeds, "configs '" + baseline + "' and '" + treatment + "' do not share a seed set");

    using Getter = double (*)(const EpisodeResult&);
    const std::vector<std::pair<std::string, Getter>> metrics{
        {"rounds", [](const EpisodeResult& r) { return static_cast<double>(r.rounds); }},
        {"misunderstanding_events", [](const EpisodeResult& r) { return static_cast<double>(r.misunderstanding_events); }},
        {"false_stop", [](const EpisodeResult& r) { return r.false_stop ? 1.0 : 0.0; }},
        {"teacher_map_correct", [](const EpisodeResult& r) { return r.teacher_map_correct ? 1.0 : 0.0; }},
        {"learner_map_rule_correct", [](const EpisodeResult& r) { return r.learner_map_rule_correct ? 1.0 : 0.0; }},
    };

    std::vector<std::pair<const EpisodeResult*, const EpisodeResult*>> pairs;
    for (const auto& [seed, b] : base) {
        const EpisodeResult* t = treat.at(seed);
        if (!b->failed && !t->failed) pairs.emplace_back(b, t);
    }

    std::vector<PairedDelta> out;
    for (const auto& [name, get] : metrics) {
        PairedDelta d;
        d.metric = name;
        d.pairs = pairs.size();
        if (pairs.empty()) {
            out.push_back(d);
            continue;
        }
        std::vector<double> deltas;
        for (const auto& [b, t] : pairs) {
            d.baseline_mean += get(*b);
            d.treatment_mean += get(*t);
            deltas.push_back(get(*t) - get(*b));
        }
        const double n = static_cast<double>(pairs.size());
        d.baseline_mean /= n;
        d.treatment_mean /= n;
        for (double x : deltas) d.mean_delta += x;
        d.mean_delta /= n;

        CounterRng rng(bootstrap_seed, RngStream::Bootstrap);
        std::vector<double> means(static_cast<std::size_t>(resamples));
        for (auto& m : means) {
            double s = 0.0;
            for (std::size_t i = 0; i < deltas.size(); ++i) s += deltas[rng.below(deltas.size())];
            m = s / n;
        }
        std::sort(means.begin(), means.end());
        const double last = static_cast<double>(means.size() - 1);
        d.ci_low = means[static_cast<std::size_t>(std::floor(0.025 * last))];
        d.ci_high = means[static_cast<std::size_t>(std::ceil(0.975 * last))];
        out.push_back(d);
    }
    return out;
}

inline void write_comparison_csv(std::ostream& out, std::span<const PairedDelta> deltas)
{
    out << "metric,pairs,baseline_mean,treatment_mean,mean_delta,ci_low,ci_high\n";
    out << std::fixed << std::setprecision(6);
    for (const auto& d : deltas)
        out << d.metric << ',' << d.pairs << ',' << d.baseline_mean << ',' << d.treatment_mean << ',' << d.mean_delta
            << ',' << d.ci_low << ',' << d.ci_high << '\n';
}

// ----------------------------------------------------------------------------
// Replay
// ----------------------------------------------------------------------------

struct ReplayReport {
    int rounds = 0;
    int checks = 0;
    std::vector<std::string> mismatches;

    bool ok() const { return mismatches.empty() && checks > 0; }
};

inline constexpr double kReplayTolerance = 1e-12;

/// Re-runs the state machines of a logged episode from its start record and the
/// logged plays, and checks every logged posterior, utterance and flag.
inline ReplayReport replay_trace(std::istream& in)
{
    ReplayReport report;
    auto check_vec = [&](const std::string& what, const std::vector<double>& logged, const std::vector<double>& actual) {
        ++report.checks;
        if (logged.size() != actual.size()) {
            report.mismatches.push_back(what + ": length " + std::to_string(logged.size()) + " vs " +
                                        std::to_string(actual.size()));
            return;
        }
        for (std::size_t i = 0; i < logged.size(); ++i)
            if (!(std::abs(logged[i] - actual[i]) <= kReplayTolerance)) {
                report.mismatches.push_back(what + "[" + std::to_string(i) + "] differs");
                return;
            }
    };
    auto check_eq = [&](const std::string& what, const json& logged, const json& actual) {
        ++report.checks;
        if (logged != actual) report.mismatches.push_back(what + ": logged " + logged.dump() + ", replayed " + actual.dump());
    };

    std::optional<EpisodeConfig> config;
    std::optional<TeacherState> teacher;
    std::optional<JointBelief> learner;
    int misunderstandings = 0;
    std::string line;
    try {
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const json rec = json::parse(line);
            const std::string event = rec.at("event").get<std::string>();
            if (event == "episode_start") {
                const json& c = rec.at("config");
                std::vector<TeacherHypothesis> grid = c.at("learner_grid").get<std::vector<TeacherHypothesis>>();
                EpisodeConfig cfg;
                cfg.name = c.at("name").get<std::string>();
                cfg.seed = c.at("seed").get<std::uint64_t>();
                cfg.true_teacher = c.at("true_teacher").get<TeacherHypothesis>();
                cfg.learner_grid = grid;
                cfg.learner = c.at("learner").get<LearnerConfig>();
                cfg.termination = detail::parse_termination(c.at("termination").get<std::string>());
                cfg.tau_know = c.at("tau_know").get<double>();
                cfg.tau_trust = c.at("tau_trust").get<double>();
                cfg.knowledge_prior = c.at("knowledge_prior").get<std::vector<double>>();
                const Rule rule = rec.at("rule").get<Rule>();
                cfg.true_rule = rule;
                config = cfg;
                teacher = init_teacher(cfg.true_teacher, rule, cfg.knowledge_distribution());
                learner = init_learner(cfg.learner_grid, cfg.knowledge_distribution());
            } else if (!config) {
                report.mismatches.push_back("trace does not begin with episode_start");
                return report;
            } else if (event == "play") {
                const CardPlay play = rec.at("play").get<CardPlay>();
                const std::string tag = "round " + std::to_string(play.round) + " ";
                const auto unplayed = unplayed_cards(teacher->history);
                const PlayPolicy policy = card_policy(*teacher, unplayed);
                double p = 0.0;
                for (std::size_t i = 0; i < policy.plays.size(); ++i)
                    if (policy.plays[i].card == play.card) p = policy.probabilities[i];
                check_vec(tag + "teacher_card_probability", {rec.at("teacher_card_probability").get<double>()}, {p});
                teacher = observe_own_play(std::move(*teacher), play);
                learner = observe_card(std::move(*learner), play);
                report.rounds = play.round;
                check_vec(tag + "joint_posterior", rec.at("joint_posterior").get<std::vector<double>>(), learner->posterior.weights());
                check_vec(tag + "rule_marginal", rec.at("rule_marginal").get<std::vector<double>>(), learner->rule_marginal().weights());
                check_vec(tag + "hypothesis_marginal", rec.at("hypothesis_marginal").get<std::vector<double>>(),
                          learner->hypothesis_marginal().weights());
                check_vec(tag + "teacher_simulated_posterior", rec.at("teacher_simulated_posterior").get<std::vector<double>>(),
                          teacher->simulated_learner_posterior.weights());
            } else if (event == "utterance") {
                const std::string tag = "round " + std::to_string(rec.at("round").get<int>()) + " ";
                const Utterance logged = rec.at("utterance").get<Utterance>();
                const Utterance chosen = select_feedback(*learner, unplayed_cards(learner->history), config->learner);
                check_eq(tag + "utterance", json(logged), json(chosen));
                learner = record_utterance(std::move(*learner), logged, config->learner.anchors);
                teacher = interpret_feedback(std::move(*teacher), logged, config->learner.anchors);
                check_vec(tag + "teacher_knowledge_belief", rec.at("teacher_knowledge_belief").get<std::vector<double>>(),
                          teacher->knowledge_belief.weights());
                check_vec(tag + "replay_trust", rec.at("replay_trust").get<std::vector<double>>(), detail::replay_trust(*learner));
                const bool knows = has_converged(*learner, config->learner);
                const bool thinks = believes_learner_knows(*teacher, config->tau_know, config->tau_trust);
                misunderstandings += knows != thinks;
                check_eq(tag + "learner_converged", rec.at("learner_converged"), json(knows));
                check_eq(tag + "teacher_believes_known", rec.at("teacher_believes_known"), json(thinks));
            } else if (event == "episode_end") {
                const json& r = rec.at("result");
                check_eq("rounds", r.at("rounds"), json(report.rounds));
                check_eq("misunderstanding_events", r.at("misunderstanding_events"), json(misunderstandings));
                check_eq("learner_map_rule_correct", r.at("learner_map_rule_correct"),
                         json(map_rule(*learner) == *config->true_rule));
                check_eq("teacher_map_correct", r.at("teacher_map_correct"),
                         json(map_teacher_hypothesis(*learner) == config->true_teacher.id));
            } else if (event == "episode_failed") {
                report.mismatches.push_back("episode failed: " + rec.value("error", std::string()));
            } else {
                report.mismatches.push_back("unknown event '" + event + "'");
            }
        }
    } catch (const json::exception& e) {
        report.mismatches.push_back(std::string("malformed trace: ") + e.what());
    } catch (const std::exception& e) {
        report.mismatches.push_back(std::string("replay failed: ") + e.what());
    }
    return report;
}

} // namespace tom2
