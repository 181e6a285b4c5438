#include "roadrl/harness.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <iomanip>
#include <numbers>
#include <numeric>
#include <sstream>

#include "roadrl/binary_io.hpp"

namespace roadrl {

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace {

std::uint32_t lo32(std::uint64_t v) { return static_cast<std::uint32_t>(v & 0xffffffffu); }
std::uint32_t hi32(std::uint64_t v) { return static_cast<std::uint32_t>(v >> 32); }

constexpr std::uint32_t kEvalStream = 0x6576616c;  // "eval"

Rng eval_rng(std::uint64_t seed, std::size_t route_type, std::size_t run) {
    std::seed_seq seq{lo32(seed), hi32(seed), kEvalStream, static_cast<std::uint32_t>(route_type),
                      static_cast<std::uint32_t>(run)};
    return Rng(seq);
}

RewardConfig reward_for_mode(const RunConfig& config, AgentMode mode) {
    RunConfig c = config;
    c.mode = mode;
    return c.effective_reward();
}

}  // namespace

Rng episode_rng(std::uint64_t seed, std::uint64_t index) {
    std::seed_seq seq{lo32(seed), hi32(seed), lo32(index), hi32(index)};
    return Rng(seq);
}

// ---------------------------------------------------------------- DriveEpisode

DriveEpisode::DriveEpisode(std::shared_ptr<const Simulator> sim, PlannedPath path, std::string route_id,
                           VehicleState start, std::vector<Obstacle> obstacles, RewardConfig reward, AgentMode mode,
                           std::size_t timeout_steps, double dt)
    : sim_(std::move(sim)),
      path_(std::move(path)),
      route_id_(std::move(route_id)),
      reward_(reward),
      mode_(mode),
      timeout_steps_(timeout_steps),
      dt_(dt) {
    if (!sim_ || path_.waypoints.empty()) {
        throw ContractViolation("episode needs a simulator and a non-empty path");
    }
    if (timeout_steps_ == 0) {
        throw ContractViolation("episode timeout must be at least one step");
    }
    reward_.validate();
    world_ = sim_->spawn(start, std::move(obstacles));
    if (world_.collision) {
        throw ContractViolation("episode start pose collides on route '" + route_id_ + "'");
    }
    if (!(goal_distance() > reward_.goal_threshold)) {
        throw ContractViolation("episode starts inside the goal radius on route '" + route_id_ + "'");
    }
    state_ = make_state();
}

double DriveEpisode::goal_distance() const { return roadrl::goal_distance(world_, path_.end()); }

double DriveEpisode::waypoint_distance() const { return nearest_waypoint(path_, world_.ego.position).distance; }

AgentState DriveEpisode::make_state() const {
    AgentState s;
    s.image = std::make_shared<const ObservationImage>(sim_->render_observation(world_));
    s.speed = world_.ego.speed;
    if (mode_ == AgentMode::hybrid) {
        s.waypoint_distance = waypoint_distance();
    }
    return s;
}

DriveEpisode::Step DriveEpisode::step(std::size_t action) {
    if (done()) {
        throw ContractViolation("step on an episode that already ended (" + std::string(to_string(termination_)) +
                                ")");
    }
    const DriveAction a = ActionTable::resolve(action);
    const double previous = goal_distance();
    world_ = sim_->step(world_, a, dt_);

    RewardContext ctx;
    ctx.collision = world_.collision;
    ctx.speed = world_.ego.speed;
    ctx.goal_distance = goal_distance();
    ctx.previous_goal_distance = previous;
    ctx.waypoint_distance = waypoint_distance();
    const RewardOutcome outcome = compute_reward(ctx, reward_);

    ++steps_;
    cumulative_ += outcome.reward;
    Step result{action, outcome.reward, outcome.termination, outcome.termination != Termination::none};
    if (outcome.termination == Termination::none && steps_ >= timeout_steps_) {
        result.termination = Termination::timeout;
    }
    termination_ = result.termination;
    state_ = make_state();
    return result;
}

// ---------------------------------------------------------------- Scenario

Scenario::Scenario(std::shared_ptr<const RoadMap> map, RunConfig config)
    : map_(std::move(map)), config_(std::move(config)) {
    if (!map_) {
        throw ContractViolation("scenario needs a map");
    }
    sim_ = std::make_shared<const Simulator>(std::shared_ptr<const RoadGraph>(map_, &map_->graph), config_.vehicle);
    const RoadGraph& graph = map_->graph;
    for (std::size_t o : map_->spawn_candidates) {
        for (std::size_t d : map_->spawn_candidates) {
            if (o == d ||
                !(distance(graph.nodes()[o].position, graph.nodes()[d].position) > config_.reward.goal_threshold)) {
                continue;
            }
            try {
                if (astar(graph, o, d).cost >= config_.min_route_length) {
                    pairs_.push_back({o, d});
                }
            } catch (const NoPathError&) {
            }
        }
    }
}

DriveEpisode Scenario::make_episode(std::size_t origin, std::size_t destination, std::string route_id, Rng& rng,
                                    AgentMode mode) const {
    const RoadGraph& graph = map_->graph;
    const GraphRoute route = astar(graph, origin, destination);
    const std::vector<Vec2> polyline = route_polyline(graph, route, origin);
    PlannedPath path = resample(polyline, config_.waypoint_spacing);
    path.origin = origin;
    path.destination = destination;

    double heading = 0.0;
    for (std::size_t i = 1; i < polyline.size(); ++i) {
        const Vec2 d = polyline[i] - polyline[0];
        if (norm(d) > 1e-9) {
            heading = std::atan2(d.y, d.x);
            break;
        }
    }
    std::uniform_real_distribution<double> lateral(-config_.start_jitter.lateral, config_.start_jitter.lateral);
    std::uniform_real_distribution<double> yaw(-config_.start_jitter.heading, config_.start_jitter.heading);
    const double offset = lateral(rng);
    const double dyaw = yaw(rng);

    VehicleState start;
    start.position = polyline.front() + unit_from_angle(heading + std::numbers::pi / 2) * offset;
    start.heading = heading + dyaw;
    if (sim_->spawn(start, map_->obstacles).collision) {
        start.position = polyline.front();
        start.heading = heading;
    }
    return DriveEpisode(sim_, std::move(path), std::move(route_id), start, map_->obstacles,
                        reward_for_mode(config_, mode), mode, config_.timeout_steps, config_.dt);
}

DriveEpisode Scenario::random_episode(Rng& rng) const { return random_episode(rng, config_.mode); }

DriveEpisode Scenario::random_episode(Rng& rng, AgentMode mode) const {
    if (pairs_.empty()) {
        throw MapError("map has no origin-destination pair at least " + std::to_string(config_.min_route_length) +
                       " m apart");
    }
    std::uniform_int_distribution<std::size_t> pick(0, pairs_.size() - 1);
    const Pair p = pairs_[pick(rng)];
    const auto& nodes = map_->graph.nodes();
    return make_episode(p.origin, p.destination, nodes[p.origin].id + "->" + nodes[p.destination].id, rng, mode);
}

DriveEpisode Scenario::route_episode(std::string_view route_id, Rng& rng) const {
    return route_episode(route_id, rng, config_.mode);
}

DriveEpisode Scenario::route_episode(std::string_view route_id, Rng& rng, AgentMode mode) const {
    const Route& r = map_->route(route_id);
    return make_episode(r.origin, r.destination, r.id, rng, mode);
}

// ---------------------------------------------------------------- episodes and metrics

EpisodeResult run_episode(DriveEpisode& episode, const Policy& policy, const TransitionSink& sink) {
    EpisodeResult result;
    result.route_id = episode.route_id();
    while (!episode.done()) {
        const std::size_t action = policy(episode);
        AgentState before = episode.state();
        const DriveEpisode::Step step = episode.step(action);
        result.actions.push_back(static_cast<std::uint8_t>(action));
        if (sink) {
            sink(Transition{std::move(before), action, step.reward, episode.state(), step.terminal});
        }
    }
    result.cumulative_reward = episode.cumulative_reward();
    result.steps = episode.steps();
    result.termination = episode.termination();
    return result;
}

std::string metrics_line(const EpisodeResult& r) {
    ordered_json j;
    j["episode"] = r.episode;
    j["reward"] = r.cumulative_reward;
    j["steps"] = r.steps;
    j["termination"] = std::string(to_string(r.termination));
    j["epsilon"] = r.exploration_rate;
    j["loss_mean"] = r.loss_mean ? json(*r.loss_mean) : json(nullptr);
    j["updates"] = r.updates;
    j["route"] = r.route_id;
    j["seed"] = r.seed;
    return j.dump();
}

std::vector<EpisodeResult> read_metrics(const fs::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::runtime_error("cannot open metrics file " + path.string());
    }
    std::vector<EpisodeResult> out;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) {
            continue;
        }
        try {
            const json j = json::parse(line);
            EpisodeResult r;
            r.episode = j.at("episode").get<std::size_t>();
            r.cumulative_reward = j.at("reward").get<double>();
            r.steps = j.at("steps").get<std::size_t>();
            r.termination = termination_from_string(j.at("termination").get<std::string>());
            r.exploration_rate = j.at("epsilon").get<double>();
            if (!j.at("loss_mean").is_null()) {
                r.loss_mean = j.at("loss_mean").get<double>();
            }
            r.updates = j.value("updates", std::size_t{0});
            r.route_id = j.value("route", std::string{});
            r.seed = j.value("seed", std::uint64_t{0});
            out.push_back(std::move(r));
        } catch (const std::exception& e) {
            throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
        }
    }
    return out;
}

// ---------------------------------------------------------------- Trainer

namespace {

constexpr std::array<char, 8> kRunMagic{'R', 'L', 'R', 'U', 'N', '\0', '\0', '\1'};
constexpr std::uint32_t kRunFormatVersion = 1;

std::shared_ptr<const RoadMap> load_shared_map(const std::string& path) {
    return std::make_shared<const RoadMap>(load_map_file(path));
}

json state_json(const AgentState& s) {
    json j{{"speed", s.speed}};
    if (s.waypoint_distance) {
        j["d"] = *s.waypoint_distance;
    }
    return j;
}

// Keeps the first `keep` lines of a text file.
void truncate_lines(const fs::path& path, std::size_t keep, bool require_all) {
    std::vector<std::string> lines;
    {
        std::ifstream in(path);
        std::string line;
        while (lines.size() < keep && std::getline(in, line)) {
            lines.push_back(line);
        }
    }
    if (require_all && lines.size() < keep) {
        throw std::runtime_error(path.string() + " has " + std::to_string(lines.size()) +
                                 " records, checkpoint expects " + std::to_string(keep));
    }
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) {
        out << l << '\n';
    }
}

// Drops transition records of episodes at or after `first_dropped`.
void truncate_transitions(const fs::path& path, std::size_t first_dropped) {
    std::vector<std::string> lines;
    {
        std::ifstream in(path);
        std::string line;
        while (std::getline(in, line)) {
            if (!line.empty() && json::parse(line).at("episode").get<std::size_t>() < first_dropped) {
                lines.push_back(line);
            }
        }
    }
    std::ofstream out(path, std::ios::trunc);
    for (const auto& l : lines) {
        out << l << '\n';
    }
}

}  // namespace

Trainer::Trainer(RunConfig config) : Trainer(config, DqnAgent(config.effective_agent(), config.network_spec()), 0) {
    open_logs(true);
}

Trainer::Trainer(RunConfig config, DqnAgent agent, std::size_t episodes_done)
    : config_(std::move(config)),
      scenario_(load_shared_map(config_.map), config_),
      agent_(std::move(agent)),
      episodes_done_(episodes_done) {
    config_.validate();
    if (!(agent_.online().spec() == config_.network_spec())) {
        throw ContractViolation("agent network does not match the run configuration");
    }
}

void Trainer::open_logs(bool fresh) {
    const fs::path dir(config_.output_dir);
    fs::create_directories(dir / "checkpoints");
    const fs::path metrics = dir / "metrics.jsonl";
    const fs::path transitions = dir / "transitions.jsonl";
    if (fresh) {
        std::ofstream run(dir / "run.json", std::ios::trunc);
        run << config_.to_json().dump(2) << '\n';
        if (!run) {
            throw std::runtime_error("cannot write " + (dir / "run.json").string());
        }
        metrics_.open(metrics, std::ios::trunc);
        if (config_.log_transitions) {
            transitions_.open(transitions, std::ios::trunc);
        } else {
            fs::remove(transitions);
        }
    } else {
        truncate_lines(metrics, episodes_done_, true);
        metrics_.open(metrics, std::ios::app);
        if (config_.log_transitions) {
            if (fs::exists(transitions)) {
                truncate_transitions(transitions, episodes_done_);
            }
            transitions_.open(transitions, std::ios::app);
        }
    }
    if (!metrics_) {
        throw std::runtime_error("cannot open " + metrics.string());
    }
}

Trainer Trainer::resume(const fs::path& checkpoint) {
    std::ifstream in(checkpoint, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open checkpoint " + checkpoint.string());
    }
    BinaryReader r(in);
    std::array<char, 8> magic{};
    r.read_exact(magic.data(), magic.size());
    if (magic != kRunMagic) {
        throw FormatError(checkpoint.string() + ": not a training checkpoint");
    }
    if (const auto v = r.get<std::uint32_t>(); v != kRunFormatVersion) {
        throw FormatError(checkpoint.string() + ": unsupported checkpoint version " + std::to_string(v));
    }
    RunConfig config = RunConfig::from_json(json::parse(r.get_string(1u << 24)));
    const auto done = r.get<std::uint64_t>();
    DqnAgent agent = DqnAgent::read(in);
    Trainer t(std::move(config), std::move(agent), static_cast<std::size_t>(done));
    t.open_logs(false);
    return t;
}

void Trainer::save_checkpoint(const fs::path& path) const {
    if (path.has_parent_path()) {
        fs::create_directories(path.parent_path());
    }
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) {
            throw std::runtime_error("cannot write checkpoint " + tmp.string());
        }
        BinaryWriter w(out);
        w.put_bytes(kRunMagic);
        w.put<std::uint32_t>(kRunFormatVersion);
        w.put_string(config_.to_json().dump());
        w.put<std::uint64_t>(episodes_done_);
        agent_.write(out);
        out.flush();
        w.check();
    }
    fs::rename(tmp, path);
}

EpisodeResult Trainer::run_next_episode() {
    if (finished()) {
        throw ContractViolation("training budget of " + std::to_string(config_.episodes) + " episodes is spent");
    }
    const std::size_t index = episodes_done_;
    Rng rng = episode_rng(config_.seed, index);
    DriveEpisode episode = scenario_.random_episode(rng);
    const double eps = agent_.exploration_rate(index, config_.episodes);

    std::size_t step = 0;
    const Policy policy = [&](const DriveEpisode& e) { return agent_.act(e.state(), eps); };
    const TransitionSink sink = [&](const Transition& t) {
        if (transitions_.is_open()) {
            ordered_json j;
            j["episode"] = index;
            j["step"] = step;
            j["action"] = t.action;
            j["reward"] = t.reward;
            j["terminal"] = t.terminal;
            j["state"] = state_json(t.state);
            j["next"] = state_json(t.next);
            transitions_ << j.dump() << '\n';
        }
        ++step;
        agent_.observe(t);
    };
    EpisodeResult result = run_episode(episode, policy, sink);
    const DqnAgent::LearnStats stats = agent_.learn(result.steps);

    result.episode = index;
    result.seed = config_.seed;
    result.exploration_rate = eps;
    result.updates = stats.updates;
    if (stats.updates > 0) {
        result.loss_mean = stats.mean_loss;
    }
    metrics_ << metrics_line(result) << '\n';
    metrics_.flush();
    if (transitions_.is_open()) {
        transitions_.flush();
    }
    if (!metrics_) {
        throw std::runtime_error("failed writing metrics to " + config_.output_dir);
    }
    ++episodes_done_;

    if (config_.checkpoint_every > 0 && episodes_done_ % config_.checkpoint_every == 0) {
        char name[32];
        std::snprintf(name, sizeof name, "episode_%06zu.ckpt", episodes_done_);
        save_checkpoint(fs::path(config_.output_dir) / "checkpoints" / name);
    }
    return result;
}

void Trainer::run(const std::function<void(const EpisodeResult&)>& on_episode) {
    while (!finished()) {
        const EpisodeResult r = run_next_episode();
        if (on_episode) {
            on_episode(r);
        }
    }
    const fs::path dir(config_.output_dir);
    save_checkpoint(dir / "final.ckpt");
    save_params(agent_.online(), dir / "policy.params");
}

// ---------------------------------------------------------------- evaluation

std::size_t ScoreTable::episodes() const {
    std::size_t n = 0;
    for (const auto& row : rows) {
        n += row.runs.size();
    }
    return n;
}

ScoreTable evaluate_routes(const QNetworkParams& params, std::shared_ptr<const RoadMap> map, const RunConfig& config,
                           const std::vector<std::string>& route_ids, std::size_t runs) {
    if (runs == 0) {
        throw std::invalid_argument("evaluate_routes needs at least one run per route");
    }
    std::vector<std::string> ids = route_ids;
    if (ids.empty()) {
        for (const RouteType& t : kRouteTypes) {
            ids.emplace_back(t.id);
        }
    }
    const AgentMode mode = params.spec().scalar_inputs == 2 ? AgentMode::hybrid : AgentMode::end_to_end;
    RunConfig cfg = config;
    cfg.mode = mode;
    const Scenario scenario(std::move(map), cfg);

    ScoreTable table;
    table.mode = mode;
    for (std::size_t i = 0; i < ids.size(); ++i) {
        const Route& route = scenario.map().route(ids[i]);
        ScoreRow row;
        row.route_id = route.id;
        row.name = route.name;
        for (std::size_t k = 0; k < runs; ++k) {
            Rng rng = eval_rng(config.seed, i, k);
            DriveEpisode episode = scenario.route_episode(route.id, rng, mode);
            EpisodeResult r = run_episode(episode, [&](const DriveEpisode& e) {
                const std::vector<double> q = q_values(params, e.state());
                return greedy_action(q);
            });
            r.episode = k;
            r.seed = config.seed;
            row.mean += r.cumulative_reward;
            row.runs.push_back(std::move(r));
        }
        row.mean /= static_cast<double>(runs);
        table.rows.push_back(std::move(row));
    }
    return table;
}

void write_score_table(std::ostream& out, const ScoreTable& table, const std::map<std::string, double>& human_average) {
    const bool human = !human_average.empty();
    out << "Route type\tAgent (" << to_string(table.mode) << ")";
    if (human) {
        out << "\tHuman average";
    }
    out << '\n';
    const auto flags = out.flags();
    const auto precision = out.precision();
    out << std::fixed << std::setprecision(2);
    for (const ScoreRow& row : table.rows) {
        out << row.name << '\t' << row.mean;
        if (human) {
            out << '\t';
            if (const auto it = human_average.find(row.route_id); it != human_average.end()) {
                out << it->second;
            } else {
                out << '-';
            }
        }
        out << '\n';
    }
    out.flags(flags);
    out.precision(precision);
}

// ---------------------------------------------------------------- learning curve

std::vector<double> learning_curve(const std::vector<double>& rewards, std::size_t window) {
    if (rewards.empty()) {
        throw std::invalid_argument("learning curve of an empty metrics series");
    }
    if (window == 0 || rewards.size() < window) {
        throw std::invalid_argument("learning curve needs at least " + std::to_string(window) + " episodes, got " +
                                    std::to_string(rewards.size()));
    }
    std::vector<double> avg;
    avg.reserve(rewards.size() - window + 1);
    for (std::size_t end = window; end <= rewards.size(); ++end) {
        const double sum = std::accumulate(rewards.begin() + static_cast<std::ptrdiff_t>(end - window),
                                           rewards.begin() + static_cast<std::ptrdiff_t>(end), 0.0);
        avg.push_back(sum / static_cast<double>(window));
    }
    const auto [lo, hi] = std::minmax_element(avg.begin(), avg.end());
    const double min = *lo;
    const double range = *hi - *lo;
    for (double& v : avg) {
        v = range > 0.0 ? (v - min) / range : 0.5;
    }
    return avg;
}

}  // namespace roadrl
