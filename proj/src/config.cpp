#include "roadrl/config.hpp"

#include <cmath>
#include <fstream>
#include <set>

namespace roadrl {

using nlohmann::json;

std::string_view to_string(AgentMode mode) {
    return mode == AgentMode::hybrid ? "hybrid" : "end-to-end";
}

AgentMode agent_mode_from_string(std::string_view s) {
    if (s == "hybrid") {
        return AgentMode::hybrid;
    }
    if (s == "end-to-end" || s == "end_to_end") {
        return AgentMode::end_to_end;
    }
    throw std::invalid_argument("unknown mode '" + std::string(s) + "' (expected hybrid or end-to-end)");
}

void RunConfig::validate() const {
    if (map.empty()) {
        throw std::invalid_argument("config: map path is empty");
    }
    if (timeout_steps == 0) {
        throw std::invalid_argument("config: timeout_steps must be positive");
    }
    if (!(dt > 0.0) || !std::isfinite(dt)) {
        throw std::invalid_argument("config: dt must be positive");
    }
    if (!(min_route_length >= 0.0) || !(waypoint_spacing > 0.0)) {
        throw std::invalid_argument("config: bad route length or waypoint spacing");
    }
    if (!(start_jitter.lateral >= 0.0) || !(start_jitter.heading >= 0.0)) {
        throw std::invalid_argument("config: start jitter must be non-negative");
    }
    if (!(vehicle.wheelbase > 0.0 && vehicle.length > 0.0 && vehicle.width > 0.0 && vehicle.max_speed > 0.0)) {
        throw std::invalid_argument("config: vehicle dimensions and max speed must be positive");
    }
    reward.validate();
    effective_agent().validate();
    network_spec().validate();
}

RewardConfig RunConfig::effective_reward() const {
    RewardConfig r = reward;
    if (mode == AgentMode::end_to_end && end_to_end_drops_waypoint_reward) {
        r.beta_waypoint = 0.0;
    }
    return r;
}

NetworkSpec RunConfig::network_spec() const {
    NetworkSpec spec = NetworkSpec::from_preset(network_preset, mode == AgentMode::hybrid ? 2 : 1);
    spec.speed_scale = vehicle.max_speed;
    spec.distance_scale = reward.waypoint_scale;
    return spec;
}

AgentConfig RunConfig::effective_agent() const {
    AgentConfig a = agent;
    a.seed = seed;
    return a;
}

namespace {

// Reads known keys from one JSON object and rejects anything left over.
class Section {
public:
    Section(const json& j, std::string name) : j_(j), name_(std::move(name)) {
        if (!j_.is_object()) {
            throw std::invalid_argument("config: '" + name_ + "' must be an object");
        }
    }

    template <typename T>
    void read(const char* key, T& out) {
        seen_.insert(key);
        if (const auto it = j_.find(key); it != j_.end()) {
            try {
                out = it->template get<T>();
            } catch (const json::exception&) {
                throw std::invalid_argument("config: bad value for '" + name_ + "." + key + "'");
            }
        }
    }

    const json* child(const char* key) {
        seen_.insert(key);
        const auto it = j_.find(key);
        return it == j_.end() ? nullptr : &*it;
    }

    void finish() const {
        for (const auto& [key, value] : j_.items()) {
            if (!seen_.contains(key)) {
                throw std::invalid_argument("config: unknown key '" + name_ + "." + key + "'");
            }
        }
    }

private:
    const json& j_;
    std::string name_;
    std::set<std::string> seen_;
};

}  // namespace

json RunConfig::to_json() const {
    const RewardConfig eff = effective_reward();
    return json{
        {"mode", std::string(to_string(mode))},
        {"map", map},
        {"episodes", episodes},
        {"timeout_steps", timeout_steps},
        {"dt", dt},
        {"seed", seed},
        {"output_dir", output_dir},
        {"checkpoint_every", checkpoint_every},
        {"min_route_length", min_route_length},
        {"waypoint_spacing", waypoint_spacing},
        {"start_jitter", {{"lateral", start_jitter.lateral}, {"heading", start_jitter.heading}}},
        {"network", {{"preset", network_preset}}},
        {"reward",
         {{"beta_collision", reward.beta_collision},
          {"beta_speed", reward.beta_speed},
          {"beta_progress", reward.beta_progress},
          {"beta_waypoint", reward.beta_waypoint},
          {"goal_threshold", reward.goal_threshold},
          {"desired_speed_mps", reward.desired_speed},
          {"waypoint_scale", reward.waypoint_scale},
          {"goal_bonus", reward.goal_bonus},
          {"collision_penalty", reward.collision_penalty},
          {"end_to_end_drops_waypoint_reward", end_to_end_drops_waypoint_reward},
          {"effective_beta_waypoint", eff.beta_waypoint}}},
        {"agent",
         {{"gamma", agent.gamma},
          {"epsilon_start", agent.epsilon_start},
          {"epsilon_end", agent.epsilon_end},
          {"epsilon_decay_fraction", agent.epsilon_decay_fraction},
          {"batch_size", agent.batch_size},
          {"target_sync_steps", agent.target_sync_steps},
          {"learning_rate", agent.learning_rate},
          {"momentum", agent.momentum},
          {"buffer_capacity", agent.buffer_capacity},
          {"max_updates_per_episode", agent.max_updates_per_episode}}},
        {"vehicle",
         {{"wheelbase", vehicle.wheelbase},
          {"length", vehicle.length},
          {"width", vehicle.width},
          {"max_speed", vehicle.max_speed}}},
        {"log_transitions", log_transitions},
    };
}

RunConfig RunConfig::from_json(const json& j) {
    RunConfig c;
    Section top(j, "config");
    std::string mode = std::string(to_string(c.mode));
    top.read("mode", mode);
    c.mode = agent_mode_from_string(mode);
    top.read("map", c.map);
    top.read("episodes", c.episodes);
    top.read("timeout_steps", c.timeout_steps);
    top.read("dt", c.dt);
    top.read("seed", c.seed);
    top.read("output_dir", c.output_dir);
    top.read("checkpoint_every", c.checkpoint_every);
    top.read("min_route_length", c.min_route_length);
    top.read("waypoint_spacing", c.waypoint_spacing);
    top.read("log_transitions", c.log_transitions);

    if (const json* s = top.child("start_jitter")) {
        Section sj(*s, "start_jitter");
        sj.read("lateral", c.start_jitter.lateral);
        sj.read("heading", c.start_jitter.heading);
        sj.finish();
    }
    if (const json* s = top.child("network")) {
        Section net(*s, "network");
        net.read("preset", c.network_preset);
        net.finish();
    }
    if (const json* s = top.child("reward")) {
        Section r(*s, "reward");
        r.read("beta_collision", c.reward.beta_collision);
        r.read("beta_speed", c.reward.beta_speed);
        r.read("beta_progress", c.reward.beta_progress);
        r.read("beta_waypoint", c.reward.beta_waypoint);
        r.read("goal_threshold", c.reward.goal_threshold);
        r.read("waypoint_scale", c.reward.waypoint_scale);
        r.read("goal_bonus", c.reward.goal_bonus);
        r.read("collision_penalty", c.reward.collision_penalty);
        r.read("end_to_end_drops_waypoint_reward", c.end_to_end_drops_waypoint_reward);
        double ignored = 0.0;
        r.read("effective_beta_waypoint", ignored);  // informational, written by to_json
        std::optional<double> kmh;
        std::optional<double> mps;
        if (const json* v = r.child("desired_speed_kmh")) {
            kmh = v->get<double>();
        }
        if (const json* v = r.child("desired_speed_mps")) {
            mps = v->get<double>();
        }
        if (kmh && mps) {
            throw std::invalid_argument("config: give desired speed in km/h or m/s, not both");
        }
        if (kmh) {
            c.reward.desired_speed = kmh_to_mps(*kmh);
        } else if (mps) {
            c.reward.desired_speed = *mps;
        }
        r.finish();
    }
    if (const json* s = top.child("agent")) {
        Section a(*s, "agent");
        a.read("gamma", c.agent.gamma);
        a.read("epsilon_start", c.agent.epsilon_start);
        a.read("epsilon_end", c.agent.epsilon_end);
        a.read("epsilon_decay_fraction", c.agent.epsilon_decay_fraction);
        a.read("batch_size", c.agent.batch_size);
        a.read("target_sync_steps", c.agent.target_sync_steps);
        a.read("learning_rate", c.agent.learning_rate);
        a.read("momentum", c.agent.momentum);
        a.read("buffer_capacity", c.agent.buffer_capacity);
        a.read("max_updates_per_episode", c.agent.max_updates_per_episode);
        a.finish();
    }
    if (const json* s = top.child("vehicle")) {
        Section v(*s, "vehicle");
        v.read("wheelbase", c.vehicle.wheelbase);
        v.read("length", c.vehicle.length);
        v.read("width", c.vehicle.width);
        v.read("max_speed", c.vehicle.max_speed);
        v.finish();
    }
    top.finish();
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw std::invalid_argument("cannot open config " + path.string());
    }
    json j;
    try {
        j = json::parse(in);
    } catch (const json::parse_error& e) {
        throw std::invalid_argument("config " + path.string() + ": " + e.what());
    }
    RunConfig c = from_json(j);
    const std::filesystem::path map_path(c.map);
    if (map_path.is_relative()) {
        c.map = (path.parent_path() / map_path).lexically_normal().string();
    }
    return c;
}

}  // namespace roadrl
