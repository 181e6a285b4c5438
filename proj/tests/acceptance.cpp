// Acceptance checks: one PASS/FAIL line per criterion, exit status 1 if any fail.

#include <cmath>
#include <cstring>
#include <algorithm>
#include <functional>
#include <iomanip>
#include <iostream>
#include <map>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "CLI11.hpp"

#include "roadrl/config.hpp"
#include "roadrl/dqn.hpp"
#include "roadrl/harness.hpp"
#include "roadrl/planner.hpp"
#include "roadrl/reward.hpp"
#include "support.hpp"

using namespace roadrl;
using namespace roadrl::testing;

namespace {

struct Verdict {
    bool pass{false};
    std::string detail;
};

struct Settings {
    std::size_t fig4_episodes{200};
    std::size_t fig4_seeds{5};
    std::size_t determinism_episodes{30};
};

RunConfig desk_config() { return RunConfig::load(source_dir() / "configs" / "desk.json"); }

Verdict reward_exactness() {
    const RewardConfig cfg;
    struct Case {
        const char* name;
        RewardContext ctx;
        double expected;
        Termination termination;
    };
    const Case cases[] = {
        {"collision", {true, 30.0, 2.0, 2.5, 50.0}, -1.0, Termination::collision},
        {"goal", {false, 10.0, 3.0, 4.0, 1.0}, 100.0, Termination::goal},
        {"reference", {false, cfg.desired_speed, 40.0, 40.0, 0.0}, 1.0, Termination::none},
        {"composite", {false, kmh_to_mps(25.0), 40.0, 40.0, 4.0}, 0.0, Termination::none},
    };
    Verdict v{true, ""};
    std::ostringstream detail;
    for (const Case& c : cases) {
        const RewardOutcome out = compute_reward(c.ctx, cfg);
        const double err = std::abs(out.reward - c.expected);
        detail << c.name << " err=" << err << " ";
        if (err > 1e-9 || out.termination != c.termination) {
            v.pass = false;
        }
    }
    v.detail = detail.str();
    return v;
}

Verdict planner_optimality() {
    std::mt19937_64 rng(2024);
    std::size_t mismatches = 0;
    std::size_t bad_gaps = 0;
    std::size_t gaps = 0;
    double max_gap = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const RoadGraph g = random_connected_graph(rng, 50);
        const std::size_t n = g.nodes().size();
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        const std::size_t o = pick(rng);
        std::size_t d = pick(rng);
        if (n > 1) {
            while (d == o) {
                d = pick(rng);
            }
        }
        if (astar(g, o, d).cost != dijkstra_cost(g, o, d)) {
            ++mismatches;
        }
        if (d == o) {
            continue;
        }
        const PlannedPath p = plan(g, o, d, 8.0);
        for (std::size_t i = 0; i + 1 < p.waypoints.size(); ++i) {
            const double gap = distance(p.waypoints[i].position, p.waypoints[i + 1].position);
            ++gaps;
            max_gap = std::max(max_gap, gap);
            if (!(gap > 0.0 && gap <= 8.0)) {
                ++bad_gaps;
            }
        }
    }
    std::ostringstream detail;
    detail << "200 graphs, cost mismatches=" << mismatches << ", gaps=" << gaps << " (max " << max_gap
           << " m, out of range " << bad_gaps << ")";
    return {mismatches == 0 && bad_gaps == 0 && gaps > 0, detail.str()};
}

Verdict gradient_correctness() {
    const QNetworkParams p = QNetworkParams::initialized(tiny_full_spec(), 11);
    std::mt19937_64 rng(12);
    const Tensor img = random_tensor({2, 22, 22}, rng, 0.0, 1.0);
    std::vector<double> coeffs(9);
    for (double& c : coeffs) {
        c = std::uniform_real_distribution<double>(-1.0, 1.0)(rng);
    }
    const GradCheckResult r = gradient_check(p, img, {0.4, 0.9}, coeffs);
    std::ostringstream detail;
    detail << r.parameters << " parameters, max relative error " << r.max_relative_error;
    return {r.parameters == p.parameter_count() && r.max_relative_error < 1e-4, detail.str()};
}

// Dense-only net over a 1x1 two-channel image plus speed.
NetworkSpec small_linear_spec() {
    NetworkSpec s;
    s.in_channels = 2;
    s.in_height = 1;
    s.in_width = 1;
    s.scalar_inputs = 1;
    s.speed_scale = 1.0;
    s.outputs = ActionTable::kSize;
    return s;
}

AgentState pixel_state(double c0, double c1, double speed) {
    auto img = std::make_shared<ObservationImage>(1, 1);
    img->set(0, 0, 0, c0);
    img->set(1, 0, 0, c1);
    return {img, speed, std::nullopt};
}

Verdict dqn_mechanics() {
    std::mt19937_64 rng(7);
    std::uniform_real_distribution<double> u(-3.0, 3.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    // Terminal targets equal the reward whatever the target network says.
    bool terminal_ok = true;
    for (int i = 0; i < 1000; ++i) {
        const QNetworkParams target = QNetworkParams::initialized(small_linear_spec(), 100 + i);
        const double r = u(rng);
        const std::vector<Transition> batch{
            {pixel_state(unit(rng), unit(rng), 1.0), 0, r, pixel_state(unit(rng), unit(rng), 2.0), true}};
        terminal_ok = terminal_ok && td_targets(batch, target, 0.95)[0] == r;
    }

    // Target frozen between syncs, bit-equal to the online network right after one.
    AgentConfig cfg;
    cfg.target_sync_steps = 7;
    cfg.batch_size = 4;
    cfg.buffer_capacity = 200;
    cfg.max_updates_per_episode = 2;
    cfg.learning_rate = 0.05;
    DqnAgent agent(cfg, small_linear_spec());
    bool frozen_ok = true;
    bool synced_ok = true;
    bool moved = false;
    for (int step = 1; step <= 50; ++step) {
        const QNetworkParams before = agent.target();
        agent.observe({pixel_state(unit(rng), unit(rng), 1.0), static_cast<std::size_t>(step % ActionTable::kSize), u(rng),
                       pixel_state(unit(rng), unit(rng), 1.5), step % 4 == 0});
        if (step % 7 == 0) {
            synced_ok = synced_ok && bitwise_equal(agent.target(), agent.online());
        } else {
            frozen_ok = frozen_ok && bitwise_equal(agent.target(), before);
        }
        agent.learn(1);
        moved = moved || !bitwise_equal(agent.target(), agent.online());
    }

    // Full exploration is uniform over the nine actions.
    const QNetworkParams greedy_bait = QNetworkParams::initialized(small_linear_spec(), 3);
    Rng draw_rng(31);
    std::vector<std::size_t> counts(ActionTable::kSize, 0);
    const AgentState s = pixel_state(0.3, 0.7, 2.0);
    for (int i = 0; i < 10000; ++i) {
        ++counts[select_action(greedy_bait, s, 1.0, draw_rng)];
    }
    const double p_value = chi_square_survival(chi_square_uniform(counts), static_cast<double>(ActionTable::kSize - 1));

    std::ostringstream detail;
    detail << "terminal=" << (terminal_ok ? "ok" : "bad") << " frozen=" << (frozen_ok ? "ok" : "bad")
           << " synced=" << (synced_ok ? "ok" : "bad") << " chi-square p=" << p_value;
    return {terminal_ok && frozen_ok && synced_ok && moved && p_value > 0.01, detail.str()};
}

double final_window_mean(const std::vector<EpisodeResult>& results, std::size_t window) {
    const std::size_t n = std::min(window, results.size());
    double sum = 0.0;
    for (std::size_t i = results.size() - n; i < results.size(); ++i) {
        sum += results[i].cumulative_reward;
    }
    return sum / static_cast<double>(n);
}

std::vector<EpisodeResult> train_run(RunConfig cfg, AgentMode mode, std::uint64_t seed, std::size_t episodes,
                                     const std::filesystem::path& out) {
    cfg.mode = mode;
    cfg.seed = seed;
    cfg.episodes = episodes;
    cfg.output_dir = out.string();
    cfg.checkpoint_every = episodes;
    Trainer(cfg).run();
    return read_metrics(out / "metrics.jsonl");
}

Verdict hybrid_beats_end_to_end(const Settings& s) {
    const RunConfig base = desk_config();
    TempDir dir;
    std::size_t wins = 0;
    std::ostringstream detail;
    detail << std::fixed << std::setprecision(2) << s.fig4_episodes << " episodes/run;";
    for (std::uint64_t seed = 1; seed <= s.fig4_seeds; ++seed) {
        const std::string tag = std::to_string(seed);
        const double hybrid = final_window_mean(
            train_run(base, AgentMode::hybrid, seed, s.fig4_episodes, dir / ("hybrid-" + tag)), kCurveWindow);
        const double e2e = final_window_mean(
            train_run(base, AgentMode::end_to_end, seed, s.fig4_episodes, dir / ("e2e-" + tag)), kCurveWindow);
        if (hybrid > e2e) {
            ++wins;
        }
        detail << " seed " << seed << ": " << hybrid << " vs " << e2e << ";";
    }
    detail << " hybrid ahead in " << wins << "/" << s.fig4_seeds;
    const std::size_t needed = (s.fig4_seeds * 4 + 4) / 5;  // 4 of 5
    return {wins >= needed, detail.str()};
}

Verdict determinism(const Settings& s) {
    const RunConfig base = desk_config();
    TempDir dir;
    train_run(base, AgentMode::hybrid, 9, s.determinism_episodes, dir / "a");
    train_run(base, AgentMode::hybrid, 9, s.determinism_episodes, dir / "b");
    const std::string a = read_file(dir / "a" / "metrics.jsonl");
    const std::string b = read_file(dir / "b" / "metrics.jsonl");
    const bool params_equal = read_file(dir / "a" / "policy.params") == read_file(dir / "b" / "policy.params");
    std::ostringstream detail;
    detail << s.determinism_episodes << " episodes, metrics " << a.size() << " bytes, "
           << (a == b ? "identical" : "different") << ", policy " << (params_equal ? "identical" : "different");
    return {!a.empty() && a == b && params_equal, detail.str()};
}

Verdict route_table() {
    RunConfig cfg = desk_config();
    auto map = std::make_shared<const RoadMap>(load_map_file(cfg.map));
    const QNetworkParams params = QNetworkParams::initialized(cfg.network_spec(), 5);
    const ScoreTable a = evaluate_routes(params, map, cfg);
    const ScoreTable b = evaluate_routes(params, map, cfg);
    std::ostringstream ta, tb;
    write_score_table(ta, a);
    write_score_table(tb, b);
    bool ok = a.rows.size() == kRouteTypes.size() && a.episodes() == kRouteTypes.size() * kEvalRunsPerRoute;
    for (std::size_t i = 0; ok && i < a.rows.size(); ++i) {
        ok = a.rows[i].route_id == kRouteTypes[i].id && a.rows[i].name == kRouteTypes[i].name &&
             a.rows[i].runs.size() == kEvalRunsPerRoute;
        for (std::size_t k = 0; ok && k < a.rows[i].runs.size(); ++k) {
            ok = a.rows[i].runs[k].cumulative_reward == b.rows[i].runs[k].cumulative_reward &&
                 a.rows[i].runs[k].actions == b.rows[i].runs[k].actions;
        }
    }
    ok = ok && ta.str() == tb.str();
    std::ostringstream detail;
    detail << a.rows.size() << " routes x " << (a.rows.empty() ? 0 : a.rows[0].runs.size()) << " runs, "
           << (ta.str() == tb.str() ? "identical" : "different") << " tables";
    return {ok, detail.str()};
}

}  // namespace

int main(int argc, char** argv) {
    Settings settings;
    std::vector<std::string> only;
    CLI::App app{"Acceptance checks"};
    app.add_option("--criterion", only, "Run only these criteria (repeatable)");
    app.add_option("--fig4-episodes", settings.fig4_episodes, "Episodes per training run in the learning-curve check");
    app.add_option("--fig4-seeds", settings.fig4_seeds, "Paired seeds in the learning-curve check");
    app.add_option("--determinism-episodes", settings.determinism_episodes, "Episodes per determinism run");
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::pair<std::string, std::function<Verdict()>>> criteria{
        {"reward-exactness", reward_exactness},
        {"planner-optimality", planner_optimality},
        {"gradient-correctness", gradient_correctness},
        {"dqn-mechanics", dqn_mechanics},
        {"hybrid-vs-end-to-end", [&] { return hybrid_beats_end_to_end(settings); }},
        {"determinism", [&] { return determinism(settings); }},
        {"route-table", route_table},
    };
    for (const std::string& name : only) {
        if (std::none_of(criteria.begin(), criteria.end(), [&](const auto& c) { return c.first == name; })) {
            std::cerr << "unknown criterion: " << name << "\n";
            return 2;
        }
    }

    bool all = true;
    for (const auto& [name, check] : criteria) {
        if (!only.empty() && std::find(only.begin(), only.end(), name) == only.end()) {
            continue;
        }
        Verdict v;
        try {
            v = check();
        } catch (const std::exception& e) {
            v = {false, std::string("exception: ") + e.what()};
        }
        all = all && v.pass;
        std::cout << (v.pass ? "PASS " : "FAIL ") << name << ": " << v.detail << std::endl;
    }
    return all ? 0 : 1;
}
