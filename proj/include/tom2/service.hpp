// service.hpp -- live teaching sessions over HTTP.
//
// A session is an append-only event log (CardPlayed, UtteranceEmitted, ...,
// SessionEnded); the learner state is a fold over that log. Each session is
// persisted as one JSONL file: a settings header line followed by one line per
// event, written before the event becomes visible to readers.

#pragma once

#include <chrono>
#include <condition_variable>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <random>
#include <shared_mutex>
#include <sstream>
#include <string>
#include <vector>

#include "httplib.h"
#include "tom2/game.hpp"
#include "tom2/learner.hpp"
#include "tom2/rng.hpp"

namespace tom2 {

struct SessionEvent {
    int index = 0; // 1-based, gapless
    std::string kind;
    json payload;
    int round = 0;
};

inline void to_json(json& j, const SessionEvent& e)
{
    j = json{{"index", e.index}, {"kind", e.kind}, {"payload", e.payload}, {"round", e.round}};
}

inline void from_json(const json& j, SessionEvent& e)
{
    e.index = j.at("index").get<int>();
    e.kind = j.at("kind").get<std::string>();
    e.payload = j.at("payload");
    e.round = j.at("round").get<int>();
}

struct SessionSettings {
    std::string id;
    Rule rule;
    LearnerConfig learner;
    std::vector<TeacherHypothesis> grid = default_teacher_grid();
    std::uint64_t seed = 0;
    bool debug = false;
    std::string created_at;
};

inline void to_json(json& j, const SessionSettings& s)
{
    j = json{{"id", s.id},     {"rule", s.rule},   {"learner", s.learner},        {"teacher_grid", s.grid},
             {"seed", s.seed}, {"debug", s.debug}, {"created_at", s.created_at}};
}

inline void from_json(const json& j, SessionSettings& s)
{
    s.id = j.at("id").get<std::string>();
    s.rule = j.at("rule").get<Rule>();
    s.learner = j.at("learner").get<LearnerConfig>();
    s.grid = j.at("teacher_grid").get<std::vector<TeacherHypothesis>>();
    s.seed = j.at("seed").get<std::uint64_t>();
    s.debug = j.at("debug").get<bool>();
    s.created_at = j.at("created_at").get<std::string>();
}

/// One live game. All members are guarded by `mutex`.
class Session {
public:
    explicit Session(SessionSettings settings)
        : settings_(std::move(settings)), learner_(init_learner(settings_.grid))
    {
    }

    const SessionSettings& settings() const { return settings_; }
    const JointBelief& learner() const { return learner_; }
    const std::vector<SessionEvent>& events() const { return events_; }
    bool ended() const { return ended_; }
    int round() const { return static_cast<int>(learner_.history.size()); }

    /// Folds one event into the state. Events must arrive in index order.
    void apply(const SessionEvent& e)
    {
        if (e.index != static_cast<int>(events_.size()) + 1)
            throw std::runtime_error("session " + settings_.id + ": event index gap at " + std::to_string(e.index));
        if (ended_) throw std::runtime_error("session " + settings_.id + ": event after SessionEnded");
        const std::string expected = events_.empty() || events_.back().kind == "UtteranceEmitted" ? "CardPlayed" : "UtteranceEmitted";
        if (e.kind == "CardPlayed" && expected == "CardPlayed") {
            learner_ = observe_card(std::move(learner_), e.payload.at("play").get<CardPlay>());
        } else if (e.kind == "UtteranceEmitted" && expected == "UtteranceEmitted") {
            learner_ = record_utterance(std::move(learner_), e.payload.at("utterance").get<Utterance>(), settings_.learner.anchors);
        } else if (e.kind == "SessionEnded" && expected == "CardPlayed") {
            ended_ = true;
        } else {
            throw std::runtime_error("session " + settings_.id + ": unexpected " + e.kind + " event");
        }
        events_.push_back(e);
    }

    mutable std::mutex mutex;
    std::condition_variable appended;

private:
    SessionSettings settings_;
    JointBelief learner_;
    std::vector<SessionEvent> events_;
    bool ended_ = false;
};

class SessionManager {
public:
    /// Without a data directory sessions live in memory only.
    explicit SessionManager(std::optional<std::filesystem::path> data_dir = std::nullopt, bool debug_default = false)
        : data_dir_(std::move(data_dir)), debug_default_(debug_default)
    {
        if (data_dir_) {
            std::filesystem::create_directories(*data_dir_);
            load_all();
        }
    }

    /// request: {"rule": "random" | id | rule object, "mode", "config": {...}, "seed", "debug"}.
    json create_session(const json& request)
    {
        SessionSettings s;
        try {
            if (!request.is_object()) throw Error(ErrorCode::InvalidConfig, "request body must be a JSON object");
            s.seed = request.value("seed", std::uint64_t{0});
            s.debug = request.value("debug", debug_default_);
            if (request.contains("config")) s.learner = request.at("config").get<LearnerConfig>();
            if (request.contains("mode")) s.learner.mode = parse_mode(request.at("mode").get<std::string>());
            s.learner.validate();
            if (request.contains("teacher_grid")) {
                s.grid = request.at("teacher_grid").get<std::vector<TeacherHypothesis>>();
                validate_grid(s.grid);
            }
            const json rule = request.value("rule", json("random"));
            if (rule.is_string()) {
                if (rule.get<std::string>() != "random")
                    throw Error(ErrorCode::InvalidConfig, "rule must be \"random\", a rule id or a rule object", "rule");
                s.rule = Rule::from_id(static_cast<int>(CounterRng(s.seed, RngStream::Rule).below(kNumRules)));
            } else if (rule.is_number_integer()) {
                s.rule = json{{"id", rule}}.get<Rule>();
            } else {
                s.rule = rule.get<Rule>();
            }
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("malformed request: ") + e.what());
        }
        s.created_at = now_iso8601();

        std::unique_lock lock(sessions_mutex_);
        s.id = fresh_id();
        auto session = std::make_shared<Session>(s);
        if (data_dir_) {
            std::ofstream out(path_for(s.id), std::ios::trunc);
            out << json{{"session", s}}.dump() << '\n';
            out.flush();
            if (!out) throw std::runtime_error("cannot write session log for " + s.id);
        }
        sessions_[s.id] = session;
        lock.unlock();

        json summary = summarize(*session);
        return json{{"session_id", s.id}, {"state", summary}};
    }

    /// body: {"card_id", "pile"}. The pile must be the one the session rule dictates.
    json submit_play(const std::string& id, const json& body)
    {
        auto session = find(id);
        int card_id = 0;
        Pile pile{};
        try {
            card_id = detail::card_id_from_json(body.at("card_id"));
            pile = detail::pile_from_json(body.at("pile"));
        } catch (const json::exception& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("play needs card_id and pile: ") + e.what());
        }
        const Card card = Card::from_id(card_id);

        std::unique_lock lock(session->mutex);
        if (session->ended()) throw Error(ErrorCode::SessionClosed, "session " + id + " has ended");
        if (played_cards(session->learner().history).test(card_id))
            throw Error(ErrorCode::CardAlreadyPlayed, card_label(card) + " has already been played");
        const Rule& rule = session->settings().rule;
        if (sort_card(rule, card) != pile)
            throw Error(ErrorCode::WrongPile, card_label(card) + " does not belong in Pile " + std::to_string(pile_number(pile)) +
                                                  " under your rule: " + describe_rule(rule), "pile");

        const int round = session->round() + 1;
        const CardPlay play{card, pile, round};
        const JointBelief after = observe_card(session->learner(), play);
        const Utterance u = select_feedback(after, unplayed_cards(after.history), session->settings().learner);
        const bool converged = has_converged(record_utterance(after, u, session->settings().learner.anchors),
                                             session->settings().learner);

        append(*session, "CardPlayed", json{{"play", play}, {"card", card}}, round);
        append(*session, "UtteranceEmitted", json{{"utterance", u}, {"converged", converged}}, round);
        lock.unlock();
        session->appended.notify_all();

        return json{{"utterance", u.rendered()}, {"detail", u}, {"round", round}, {"converged", converged}};
    }

    json get_session(const std::string& id) const
    {
        auto session = find(id);
        std::lock_guard lock(session->mutex);
        return summarize(*session);
    }

    json end_session(const std::string& id)
    {
        auto session = find(id);
        std::unique_lock lock(session->mutex);
        if (session->ended()) throw Error(ErrorCode::SessionClosed, "session " + id + " has already ended");
        const json summary = end_summary(*session);
        append(*session, "SessionEnded", summary, session->round());
        lock.unlock();
        session->appended.notify_all();
        return summary;
    }

    /// Events with index > after. Waits up to `wait` when none are available yet.
    std::vector<SessionEvent> events_since(const std::string& id, int after,
                                           std::chrono::milliseconds wait = std::chrono::milliseconds(0)) const
    {
        auto session = find(id);
        std::unique_lock lock(session->mutex);
        session->appended.wait_for(lock, wait, [&] {
            return static_cast<int>(session->events().size()) > after || session->ended();
        });
        const auto& ev = session->events();
        std::vector<SessionEvent> out;
        for (std::size_t i = static_cast<std::size_t>(std::max(after, 0)); i < ev.size(); ++i) out.push_back(ev[i]);
        return out;
    }

    bool ended(const std::string& id) const
    {
        auto session = find(id);
        std::lock_guard lock(session->mutex);
        return session->ended();
    }

    /// Copy of the learner state, for diagnostics and tests.
    JointBelief learner_snapshot(const std::string& id) const
    {
        auto session = find(id);
        std::lock_guard lock(session->mutex);
        return session->learner();
    }

    std::vector<std::string> session_ids() const
    {
        std::shared_lock lock(sessions_mutex_);
        std::vector<std::string> ids;
        for (const auto& [id, s] : sessions_) ids.push_back(id);
        return ids;
    }

    std::optional<std::filesystem::path> log_path(const std::string& id) const
    {
        (void)find(id);
        if (!data_dir_) return std::nullopt;
        return path_for(id);
    }

    /// Rebuilds a session by folding a persisted log.
    static std::shared_ptr<Session> load_session(std::istream& in)
    {
        std::string line;
        if (!std::getline(in, line)) throw std::runtime_error("empty session log");
        auto session = std::make_shared<Session>(json::parse(line).at("session").get<SessionSettings>());
        while (std::getline(in, line))
            if (!line.empty()) session->apply(json::parse(line).get<SessionEvent>());
        return session;
    }

private:
    static std::string now_iso8601()
    {
        const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
        std::tm tm{};
        gmtime_r(&t, &tm);
        char buf[32];
        std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
        return buf;
    }

    std::string fresh_id()
    {
        static constexpr char kHex[] = "0123456789abcdef";
        for (;;) {
            std::uint64_t bits = (static_cast<std::uint64_t>(entropy_()) << 32) ^ entropy_();
            std::string id = "s";
            for (int i = 0; i < 12; ++i, bits >>= 4) id += kHex[bits & 0xF];
            if (!sessions_.contains(id) && !(data_dir_ && std::filesystem::exists(path_for(id)))) return id;
        }
    }

    std::filesystem::path path_for(const std::string& id) const { return *data_dir_ / (id + ".jsonl"); }

    std::shared_ptr<Session> find(const std::string& id) const
    {
        std::shared_lock lock(sessions_mutex_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw Error(ErrorCode::UnknownSession, "no session with id '" + id + "'");
        return it->second;
    }

    /// Caller holds session.mutex. The log line is durable before the event is visible.
    void append(Session& session, std::string kind, json payload, int round)
    {
        SessionEvent e{static_cast<int>(session.events().size()) + 1, std::move(kind), std::move(payload), round};
        if (data_dir_) {
            std::ofstream out(path_for(session.settings().id), std::ios::app);
            out << json(e).dump() << '\n';
            out.flush();
            if (!out) throw std::runtime_error("cannot append to session log " + session.settings().id);
        }
        session.apply(e);
    }

    static json end_summary(const Session& session)
    {
        const JointBelief& b = session.learner();
        const Rule guess = map_rule(b);
        const bool correct = guess == session.settings().rule;
        const bool converged = has_converged(b, session.settings().learner);
        return json{{"learner_map_rule", guess},
                    {"correct", correct},
                    {"rounds", session.round()},
                    {"misunderstanding",
                     {{"teacher_believed_known", true},
                      {"learner_converged", converged},
                      {"false_stop", !(converged && correct)}}}};
    }

    static json summarize(const Session& session)
    {
        const JointBelief& b = session.learner();
        const auto& s = session.settings();
        json utterances = json::array();
        for (const auto& u : b.uttered) utterances.push_back(u);
        json out{{"session_id", s.id},
                 {"rule", s.rule},
                 {"mode", mode_name(s.learner.mode)},
                 {"config", s.learner},
                 {"created_at", s.created_at},
                 {"history", b.history},
                 {"utterances", utterances},
                 {"events", session.events().size()},
                 {"round", session.round()},
                 {"converged", has_converged(b, s.learner)},
                 {"ended", session.ended()}};
        if (session.ended()) out["learner_guess"] = session.events().back().payload;
        if (s.debug) out["diagnostics"] = diagnostics(b);
        return out;
    }

    void load_all()
    {
        for (const auto& entry : std::filesystem::directory_iterator(*data_dir_)) {
            if (entry.path().extension() != ".jsonl") continue;
            std::ifstream in(entry.path());
            auto session = load_session(in);
            sessions_[session->settings().id] = std::move(session);
        }
    }

    std::optional<std::filesystem::path> data_dir_;
    bool debug_default_ = false;
    mutable std::shared_mutex sessions_mutex_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    std::random_device entropy_;
};

// ----------------------------------------------------------------------------
// HTTP
// ----------------------------------------------------------------------------

inline int http_status(ErrorCode code)
{
    switch (code) {
    case ErrorCode::InvalidConfig: return 400;
    case ErrorCode::UnknownSession: return 404;
    case ErrorCode::CardAlreadyPlayed:
    case ErrorCode::SessionClosed: return 409;
    case ErrorCode::WrongPile: return 422;
    default: return 500;
    }
}

inline json error_body(const Error& e)
{
    json j{{"code", to_string(e.code())}, {"message", e.what()}};
    if (!e.field().empty()) j["field"] = e.field();
    return j;
}

/// Server-sent-event framing of one session event.
inline std::string sse_frame(const SessionEvent& e)
{
    return "id: " + std::to_string(e.index) + "\nevent: " + e.kind + "\ndata: " + json(e).dump() + "\n\n";
}

/// Wires a SessionManager to the HTTP routes:
///   POST /api/sessions, POST /api/sessions/{id}/plays, GET /api/sessions/{id},
///   POST /api/sessions/{id}/end, GET /api/sessions/{id}/events (text/event-stream).
/// The event stream resumes after `?last=k` or a Last-Event-ID header.
class SessionServer {
public:
    explicit SessionServer(SessionManager& manager, std::optional<std::filesystem::path> ui_dir = std::nullopt)
        : manager_(manager)
    {
        routes();
        if (ui_dir && std::filesystem::is_directory(*ui_dir)) server_.set_mount_point("/", ui_dir->string());
    }

    bool listen(const std::string& host, int port) { return server_.listen(host, port); }
    int bind_to_any_port(const std::string& host) { return server_.bind_to_any_port(host); }
    bool listen_after_bind() { return server_.listen_after_bind(); }
    void stop() { server_.stop(); }
    void wait_until_ready() { server_.wait_until_ready(); }

private:
    template <typename F>
    static void guarded(httplib::Response& res, F&& body)
    {
        try {
            res.set_content(body().dump(), "application/json");
        } catch (const Error& e) {
            res.status = http_status(e.code());
            res.set_content(error_body(e).dump(), "application/json");
        } catch (const json::exception& e) {
            res.status = 400;
            res.set_content(json{{"code", "InvalidConfig"}, {"message", e.what()}}.dump(), "application/json");
        }
    }

    static json parse_body(const httplib::Request& req)
    {
        if (req.body.empty()) return json::object();
        try {
            return json::parse(req.body);
        } catch (const json::parse_error& e) {
            throw Error(ErrorCode::InvalidConfig, std::string("request body is not JSON: ") + e.what());
        }
    }

    void routes()
    {
        server_.Post("/api/sessions", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] {
                res.status = 201;
                return manager_.create_session(parse_body(req));
            });
        });
        server_.Post(R"(/api/sessions/([^/]+)/plays)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return manager_.submit_play(req.matches[1], parse_body(req)); });
        });
        server_.Post(R"(/api/sessions/([^/]+)/end)", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return manager_.end_session(req.matches[1]); });
        });
        server_.Get(R"(/api/sessions/([^/]+)/events)", [this](const httplib::Request& req, httplib::Response& res) {
            const std::string id = req.matches[1];
            int last = 0;
            try {
                if (req.has_param("last")) last = std::stoi(req.get_param_value("last"));
                else if (req.has_header("Last-Event-ID")) last = std::stoi(req.get_header_value("Last-Event-ID"));
                (void)manager_.ended(id);
            } catch (const Error& e) {
                res.status = http_status(e.code());
                res.set_content(error_body(e).dump(), "application/json");
                return;
            } catch (const std::exception&) {
                res.status = 400;
                res.set_content(json{{"code", "InvalidConfig"}, {"message", "bad resume index"}}.dump(), "application/json");
                return;
            }
            auto cursor = std::make_shared<int>(last);
            res.set_header("Cache-Control", "no-cache");
            res.set_chunked_content_provider("text/event-stream", [this, id, cursor](std::size_t, httplib::DataSink& sink) {
                const auto events = manager_.events_since(id, *cursor, std::chrono::milliseconds(500));
                for (const auto& e : events) {
                    const std::string frame = sse_frame(e);
                    if (!sink.write(frame.data(), frame.size())) return false;
                    *cursor = e.index;
                }
                if (events.empty() && !sink.is_writable()) return false;
                if (manager_.ended(id) && manager_.events_since(id, *cursor).empty()) sink.done();
                return true;
            });
        });
        server_.Get(R"(/api/sessions/([^/]+))", [this](const httplib::Request& req, httplib::Response& res) {
            guarded(res, [&] { return manager_.get_session(req.matches[1]); });
        });
    }

    SessionManager& manager_;
    httplib::Server server_;
};

} // namespace tom2
