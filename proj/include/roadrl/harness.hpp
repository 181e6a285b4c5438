#pragma once

#include <cstdint>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iosfwd>
#include <map>
#include <memory>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "roadrl/config.hpp"
#include "roadrl/dqn.hpp"
#include "roadrl/planner.hpp"
#include "roadrl/reward.hpp"
#include "roadrl/road_map.hpp"
#include "roadrl/world.hpp"

namespace roadrl {

/// Independent stream for episode `index` of a run seeded with `seed`.
Rng episode_rng(std::uint64_t seed, std::uint64_t index);

/// One origin-destination drive: world, planned path, reward bookkeeping and the
/// agent-facing state. Shared by training, evaluation and live sessions so that the
/// same actions from the same start always score the same.
class DriveEpisode {
public:
    DriveEpisode(std::shared_ptr<const Simulator> sim, PlannedPath path, std::string route_id, VehicleState start,
                 std::vector<Obstacle> obstacles, RewardConfig reward, AgentMode mode, std::size_t timeout_steps,
                 double dt);

    struct Step {
        std::size_t action{0};
        double reward{0.0};
        Termination termination{Termination::none};
        // True only for collision and goal; a timeout still bootstraps.
        bool terminal{false};
    };
    /// Throws ContractViolation once the episode is over.
    Step step(std::size_t action);

    const WorldState& world() const { return world_; }
    const PlannedPath& path() const { return path_; }
    const std::string& route_id() const { return route_id_; }
    const AgentState& state() const { return state_; }
    AgentMode mode() const { return mode_; }
    const Simulator& simulator() const { return *sim_; }

    bool done() const { return termination_ != Termination::none; }
    Termination termination() const { return termination_; }
    std::size_t steps() const { return steps_; }
    double cumulative_reward() const { return cumulative_; }
    double goal_distance() const;
    double waypoint_distance() const;

private:
    AgentState make_state() const;

    std::shared_ptr<const Simulator> sim_;
    PlannedPath path_;
    std::string route_id_;
    WorldState world_;
    RewardConfig reward_;
    AgentMode mode_;
    std::size_t timeout_steps_;
    double dt_;
    AgentState state_;
    Termination termination_{Termination::none};
    std::size_t steps_{0};
    double cumulative_{0.0};
};

/// Episode factory over one map: random origin-destination pairs for training and the
/// predefined routes for evaluation and live sessions.
class Scenario {
public:
    Scenario(std::shared_ptr<const RoadMap> map, RunConfig config);

    const RoadMap& map() const { return *map_; }
    const RunConfig& config() const { return config_; }
    const std::shared_ptr<const Simulator>& simulator() const { return sim_; }
    /// Origin-destination pairs eligible for training (path length >= min_route_length).
    std::size_t candidate_pairs() const { return pairs_.size(); }

    DriveEpisode random_episode(Rng& rng) const;
    DriveEpisode random_episode(Rng& rng, AgentMode mode) const;
    /// Throws MapError for an unknown route id.
    DriveEpisode route_episode(std::string_view route_id, Rng& rng) const;
    /// Same as route_episode with an explicit mode (evaluation follows the network, not the config).
    DriveEpisode route_episode(std::string_view route_id, Rng& rng, AgentMode mode) const;

private:
    struct Pair {
        std::size_t origin;
        std::size_t destination;
    };
    DriveEpisode make_episode(std::size_t origin, std::size_t destination, std::string route_id, Rng& rng,
                              AgentMode mode) const;

    std::shared_ptr<const RoadMap> map_;
    RunConfig config_;
    std::shared_ptr<const Simulator> sim_;
    std::vector<Pair> pairs_;
};

struct EpisodeResult {
    std::size_t episode{0};
    double cumulative_reward{0.0};
    std::size_t steps{0};
    Termination termination{Termination::none};
    std::string route_id;
    std::uint64_t seed{0};
    double exploration_rate{0.0};
    std::optional<double> loss_mean;
    std::size_t updates{0};
    std::vector<std::uint8_t> actions;
};

using Policy = std::function<std::size_t(const DriveEpisode&)>;
using TransitionSink = std::function<void(const Transition&)>;

/// Drives `episode` to termination with `policy`, handing every transition to `sink`.
EpisodeResult run_episode(DriveEpisode& episode, const Policy& policy, const TransitionSink& sink = {});

/// Metrics record for one episode (a single JSON object, no trailing newline).
std::string metrics_line(const EpisodeResult& r);
/// Parses a metrics file back into results (actions are not logged).
std::vector<EpisodeResult> read_metrics(const std::filesystem::path& path);

/// Sequential, seeded training loop with checkpointing and exact resume.
///
/// Output directory layout: run.json, metrics.jsonl, optional transitions.jsonl,
/// checkpoints/episode_NNNNNN.ckpt, final.ckpt and policy.params.
class Trainer {
public:
    /// Starts a fresh run, replacing any metrics in the output directory.
    explicit Trainer(RunConfig config);
    /// Continues a run from a checkpoint written by save_checkpoint.
    static Trainer resume(const std::filesystem::path& checkpoint);

    const RunConfig& config() const { return config_; }
    const DqnAgent& agent() const { return agent_; }
    const Scenario& scenario() const { return scenario_; }
    std::size_t episodes_done() const { return episodes_done_; }
    bool finished() const { return episodes_done_ >= config_.episodes; }

    EpisodeResult run_next_episode();
    /// Runs the remaining budget, then writes final.ckpt and policy.params.
    void run(const std::function<void(const EpisodeResult&)>& on_episode = {});

    void save_checkpoint(const std::filesystem::path& path) const;
    std::filesystem::path output_dir() const { return config_.output_dir; }

private:
    Trainer(RunConfig config, DqnAgent agent, std::size_t episodes_done);
    void open_logs(bool fresh);

    RunConfig config_;
    Scenario scenario_;
    DqnAgent agent_;
    std::size_t episodes_done_{0};
    std::ofstream metrics_;
    std::ofstream transitions_;
};

inline constexpr std::size_t kEvalRunsPerRoute = 5;

struct ScoreRow {
    std::string route_id;
    std::string name;
    std::vector<EpisodeResult> runs;
    double mean{0.0};
};

struct ScoreTable {
    AgentMode mode{AgentMode::hybrid};
    std::vector<ScoreRow> rows;
    std::size_t episodes() const;
};

/// Greedy (exploration 0) rollouts of `params` on each route, `runs` seeded episodes per
/// route. The mode follows the network's inputs. Throws MapError when the map lacks one
/// of the routes.
ScoreTable evaluate_routes(const QNetworkParams& params, std::shared_ptr<const RoadMap> map, const RunConfig& config,
                           const std::vector<std::string>& route_ids = {}, std::size_t runs = kEvalRunsPerRoute);

/// Tab-separated table, one row per route type, with an optional human-average column.
void write_score_table(std::ostream& out, const ScoreTable& table,
                       const std::map<std::string, double>& human_average = {});

inline constexpr std::size_t kCurveWindow = 100;

/// Trailing moving average of `rewards` (one point per complete window), min-max
/// normalized to [0, 1]; a constant series maps to 0.5. Throws std::invalid_argument
/// when empty or shorter than the window.
std::vector<double> learning_curve(const std::vector<double>& rewards, std::size_t window = kCurveWindow);

}  // namespace roadrl
