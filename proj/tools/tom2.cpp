// tom2 -- command line front end.
//
//   tom2 simulate --config exp.json --episodes N --seed S --out DIR [--threads T]
//   tom2 replay   --trace DIR/traces/name_0.jsonl
//   tom2 compare  --episodes DIR/episodes.jsonl --baseline NAME --treatment NAME
//   tom2 serve    --port P --data-dir D [--debug] [--ui DIR]

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <thread>

#include "CLI11.hpp"
#include "tom2/harness.hpp"
#include "tom2/service.hpp"

namespace fs = std::filesystem;

namespace {

int simulate(const std::string& config_path, int episodes, std::uint64_t seed, const fs::path& out_dir, unsigned threads)
{
    std::ifstream in(config_path);
    if (!in) {
        std::cerr << "cannot open " << config_path << "\n";
        return 2;
    }
    const tom2::Experiment experiment = tom2::parse_experiment(tom2::json::parse(in));
    fs::create_directories(out_dir);
    const auto batch = tom2::run_batch(experiment.configs, episodes, seed, threads, out_dir / "traces");

    std::ofstream metrics(out_dir / "metrics.csv");
    tom2::write_metrics_csv(metrics, batch.metrics);
    std::ofstream records(out_dir / "episodes.jsonl");
    tom2::write_episodes_jsonl(records, batch.episodes);

    int failed = 0;
    for (const auto& e : batch.episodes) failed += e.failed;
    tom2::write_metrics_csv(std::cout, batch.metrics);
    if (failed) std::cerr << failed << " episode(s) failed; see episodes.jsonl\n";
    return 0;
}

int replay(const std::string& trace_path)
{
    std::ifstream in(trace_path);
    if (!in) {
        std::cerr << "cannot open " << trace_path << "\n";
        return 2;
    }
    const auto report = tom2::replay_trace(in);
    for (const auto& m : report.mismatches) std::cout << "MISMATCH " << m << "\n";
    std::cout << (report.ok() ? "OK" : "FAILED") << ": " << report.rounds << " rounds, " << report.checks << " checks, "
              << report.mismatches.size() << " mismatches\n";
    return report.ok() ? 0 : 1;
}

int compare(const std::string& episodes_path, const std::string& baseline, const std::string& treatment,
            std::uint64_t seed)
{
    std::ifstream in(episodes_path);
    if (!in) {
        std::cerr << "cannot open " << episodes_path << "\n";
        return 2;
    }
    const auto episodes = tom2::read_episodes_jsonl(in);
    tom2::write_comparison_csv(std::cout, tom2::compare_modes(episodes, baseline, treatment, seed));
    return 0;
}

int serve(int port, const fs::path& data_dir, bool debug, const std::string& ui_dir)
{
    tom2::SessionManager manager(data_dir, debug);
    std::optional<fs::path> ui;
    if (!ui_dir.empty()) ui = ui_dir;
    tom2::SessionServer server(manager, ui);
    std::cerr << "serving " << manager.session_ids().size() << " restored session(s) on port " << port << "\n";
    return server.listen("0.0.0.0", port) ? 0 : 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Second-order theory-of-mind card-sorting learner"};
    app.require_subcommand(1);

    std::string config_path, out_dir;
    int episodes = 100;
    std::uint64_t seed = 0;
    unsigned threads = std::max(1u, std::thread::hardware_concurrency());
    auto* sim = app.add_subcommand("simulate", "Run a batch of seeded teaching episodes");
    sim->add_option("--config", config_path, "Experiment JSON")->required()->check(CLI::ExistingFile);
    sim->add_option("--episodes", episodes, "Episodes per config")->check(CLI::PositiveNumber);
    sim->add_option("--seed", seed, "Base seed; episode i uses seed + i");
    sim->add_option("--out", out_dir, "Output directory")->required();
    sim->add_option("--threads", threads, "Worker threads");

    std::string trace_path;
    auto* rep = app.add_subcommand("replay", "Verify that an episode trace replays exactly");
    rep->add_option("--trace", trace_path, "Trace JSONL")->required()->check(CLI::ExistingFile);

    std::string episodes_path, baseline, treatment;
    std::uint64_t bootstrap_seed = 0;
    auto* cmp = app.add_subcommand("compare", "Paired bootstrap comparison of two configs");
    cmp->add_option("--episodes", episodes_path, "episodes.jsonl from simulate")->required()->check(CLI::ExistingFile);
    cmp->add_option("--baseline", baseline, "Baseline config name")->required();
    cmp->add_option("--treatment", treatment, "Treatment config name")->required();
    cmp->add_option("--seed", bootstrap_seed, "Bootstrap seed");

    int port = 8080;
    std::string data_dir = "sessions", ui_dir;
    bool debug = false;
    auto* srv = app.add_subcommand("serve", "Serve live teaching sessions over HTTP");
    srv->add_option("--port", port, "TCP port");
    srv->add_option("--data-dir", data_dir, "Session log directory");
    srv->add_flag("--debug", debug, "Expose learner diagnostics on session reads");
    srv->add_option("--ui", ui_dir, "Directory of the built UI bundle, served under /");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*sim) return simulate(config_path, episodes, seed, out_dir, threads);
        if (*rep) return replay(trace_path);
        if (*cmp) return compare(episodes_path, baseline, treatment, bootstrap_seed);
        if (*srv) return serve(port, data_dir, debug, ui_dir);
    } catch (const tom2::Error& e) {
        std::cerr << tom2::to_string(e.code()) << ": " << e.what();
        if (!e.field().empty()) std::cerr << " (field: " << e.field() << ")";
        std::cerr << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 0;
}
