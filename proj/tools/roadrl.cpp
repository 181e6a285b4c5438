#include <chrono>
#include <csignal>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <thread>

#include "CLI11.hpp"

#include "roadrl/config.hpp"
#include "roadrl/harness.hpp"
#include "roadrl/live_service.hpp"
#include "roadrl/planner.hpp"

using namespace roadrl;

namespace {

struct TrainArgs {
    std::string config;
    std::string resume;
    std::optional<std::uint64_t> seed;
    std::string mode;
    std::string out;
    std::string map;
    std::optional<std::size_t> episodes;
    std::size_t report_every{50};
};

RunConfig load_run_config(const std::string& path) {
    return path.empty() ? RunConfig{} : RunConfig::load(path);
}

int cmd_train(const TrainArgs& a) {
    std::optional<Trainer> trainer;
    if (!a.resume.empty()) {
        trainer.emplace(Trainer::resume(a.resume));
        std::cerr << "resumed at episode " << trainer->episodes_done() << " of " << trainer->config().episodes
                  << '\n';
    } else {
        RunConfig cfg = load_run_config(a.config);
        if (a.seed) {
            cfg.seed = *a.seed;
        }
        if (!a.mode.empty()) {
            cfg.mode = agent_mode_from_string(a.mode);
        }
        if (!a.out.empty()) {
            cfg.output_dir = a.out;
        }
        if (!a.map.empty()) {
            cfg.map = a.map;
        }
        if (a.episodes) {
            cfg.episodes = *a.episodes;
        }
        cfg.validate();
        trainer.emplace(std::move(cfg));
    }
    const auto start = std::chrono::steady_clock::now();
    double window_sum = 0.0;
    std::size_t window_n = 0;
    trainer->run([&](const EpisodeResult& r) {
        window_sum += r.cumulative_reward;
        ++window_n;
        if (a.report_every > 0 && (r.episode + 1) % a.report_every == 0) {
            const double secs =
                std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
            std::fprintf(stderr, "episode %zu  mean reward %.3f  epsilon %.3f  %.1fs\n", r.episode + 1,
                         window_sum / static_cast<double>(window_n), r.exploration_rate, secs);
            window_sum = 0.0;
            window_n = 0;
        }
    });
    std::cerr << "metrics: " << (trainer->output_dir() / "metrics.jsonl").string() << '\n';
    return 0;
}

int cmd_eval(const std::string& config_path, const std::string& params_path, const std::string& map,
             std::size_t runs, const std::string& out, bool with_human, const std::string& leaderboard) {
    RunConfig cfg = load_run_config(config_path);
    if (!map.empty()) {
        cfg.map = map;
    }
    const QNetworkParams params = load_params(params_path);
    const auto road_map = std::make_shared<const RoadMap>(load_map_file(cfg.map));
    const ScoreTable table = evaluate_routes(params, road_map, cfg, {}, runs);
    std::map<std::string, double> human;
    if (with_human) {
        for (const RouteScore& s : Leaderboard(leaderboard).aggregates()) {
            human[s.route_id] = s.mean;
        }
    }
    if (out.empty()) {
        write_score_table(std::cout, table, human);
    } else {
        std::ofstream f(out);
        write_score_table(f, table, human);
        if (!f) {
            throw std::runtime_error("cannot write " + out);
        }
    }
    return 0;
}

int cmd_plan(const std::string& map, const std::string& from, const std::string& to, double spacing) {
    const RoadMap m = load_map_file(map);
    const PlannedPath path = plan(m.graph, m.graph.node_index(from), m.graph.node_index(to), spacing);
    write_path(std::cout, path);
    return 0;
}

int cmd_curve(const std::string& metrics, std::size_t window) {
    std::vector<double> rewards;
    for (const EpisodeResult& r : read_metrics(metrics)) {
        rewards.push_back(r.cumulative_reward);
    }
    const std::vector<double> curve = learning_curve(rewards, window);
    std::cout.precision(17);
    for (std::size_t i = 0; i < curve.size(); ++i) {
        std::cout << i + window - 1 << ' ' << curve[i] << '\n';
    }
    return 0;
}

volatile std::sig_atomic_t g_stop = 0;

struct ServeArgs {
    std::string config;
    std::string map;
    std::string policy;
    std::string leaderboard{"leaderboard.jsonl"};
    std::size_t max_sessions{64};
    std::vector<std::string> runs;
    ServerOptions options;
};

int cmd_serve(const ServeArgs& a) {
    RunConfig cfg = load_run_config(a.config);
    if (!a.map.empty()) {
        cfg.map = a.map;
    }
    ServiceConfig sc;
    sc.run = cfg;
    sc.leaderboard_path = a.leaderboard;
    sc.max_sessions = a.max_sessions;
    if (!a.policy.empty()) {
        sc.policy = std::make_shared<const QNetworkParams>(load_params(a.policy));
    }
    sc.metrics_runs = a.runs;
    LiveServer server(std::make_shared<SessionManager>(std::make_shared<const RoadMap>(load_map_file(cfg.map)), sc),
                      a.options);
    std::signal(SIGINT, [](int) { g_stop = 1; });
    std::signal(SIGTERM, [](int) { g_stop = 1; });
    const int port = server.start();
    std::cerr << "listening on " << a.options.host << ':' << port << '\n';
    while (!g_stop && server.running()) {
        std::this_thread::sleep_for(std::chrono::milliseconds(100));
    }
    server.stop();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Waypoint-guided DQN driving simulator"};
    app.require_subcommand(1);

    TrainArgs train;
    auto* t = app.add_subcommand("train", "Train an agent");
    t->add_option("-c,--config", train.config, "Run configuration (JSON)");
    t->add_option("--resume", train.resume, "Continue from a training checkpoint");
    t->add_option("-s,--seed", train.seed, "Run seed");
    t->add_option("-m,--mode", train.mode, "hybrid or end-to-end");
    t->add_option("-o,--out", train.out, "Output directory");
    t->add_option("--map", train.map, "Map file");
    t->add_option("-n,--episodes", train.episodes, "Episode budget");
    t->add_option("--report-every", train.report_every, "Progress line interval (0 = quiet)");

    std::string eval_config, eval_params, eval_map, eval_out, leaderboard = "leaderboard.jsonl";
    std::size_t eval_runs = kEvalRunsPerRoute;
    bool eval_human = false;
    auto* e = app.add_subcommand("eval", "Score a trained policy on the predefined routes");
    e->add_option("-c,--config", eval_config, "Run configuration (JSON)");
    e->add_option("-p,--checkpoint", eval_params, "Policy parameters (policy.params)")->required();
    e->add_option("--map", eval_map, "Map file");
    e->add_option("--runs", eval_runs, "Seeded runs per route");
    e->add_option("-o,--out", eval_out, "Write the table here instead of stdout");
    e->add_flag("--human", eval_human, "Add the human-average column from the leaderboard");
    e->add_option("--leaderboard", leaderboard, "Leaderboard file");

    std::string plan_map, plan_from, plan_to;
    double spacing = kDefaultWaypointSpacing;
    auto* p = app.add_subcommand("plan", "Print the waypoints between two map nodes");
    p->add_option("--map", plan_map, "Map file")->required();
    p->add_option("--from", plan_from, "Origin node id")->required();
    p->add_option("--to", plan_to, "Destination node id")->required();
    p->add_option("--spacing", spacing, "Waypoint spacing in meters");

    std::string curve_metrics;
    std::size_t window = kCurveWindow;
    auto* c = app.add_subcommand("curve", "Normalized moving-average reward curve");
    c->add_option("metrics", curve_metrics, "metrics.jsonl")->required();
    c->add_option("-w,--window", window, "Moving-average window");

    ServeArgs serve;
    auto* s = app.add_subcommand("serve", "Run the live driving service");
    s->add_option("-c,--config", serve.config, "Run configuration (JSON)");
    s->add_option("--map", serve.map, "Map file");
    s->add_option("-p,--checkpoint", serve.policy, "Policy parameters for agent-drive sessions");
    s->add_option("--host", serve.options.host, "Bind address");
    s->add_option("--port", serve.options.port, "Port (0 picks a free one)");
    s->add_option("--tick-hz", serve.options.tick_hz, "Simulation ticks per second");
    s->add_option("--leaderboard", serve.leaderboard, "Leaderboard file");
    s->add_option("--max-sessions", serve.max_sessions, "Concurrent session limit");
    s->add_option("--runs", serve.runs, "Training output directories exposed under /v1/curves");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*t) {
            return cmd_train(train);
        }
        if (*e) {
            return cmd_eval(eval_config, eval_params, eval_map, eval_runs, eval_out, eval_human, leaderboard);
        }
        if (*p) {
            return cmd_plan(plan_map, plan_from, plan_to, spacing);
        }
        if (*c) {
            return cmd_curve(curve_metrics, window);
        }
        if (*s) {
            return cmd_serve(serve);
        }
    } catch (const std::exception& ex) {
        std::cerr << "error: " << ex.what() << '\n';
        return 1;
    }
    return 0;
}
