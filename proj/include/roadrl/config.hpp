#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <string_view>

#include "json.hpp"

#include "roadrl/dqn.hpp"
#include "roadrl/qnetwork.hpp"
#include "roadrl/reward.hpp"
#include "roadrl/world.hpp"

namespace roadrl {

/// hybrid: waypoint distance in the state and the waypoint term in the reward.
/// end_to_end: neither.
enum class AgentMode { hybrid, end_to_end };

std::string_view to_string(AgentMode mode);
AgentMode agent_mode_from_string(std::string_view s);

struct StartJitter {
    double lateral{0.5};   // meters, uniform in [-lateral, lateral]
    double heading{0.05};  // radians, uniform in [-heading, heading]
};

struct RunConfig {
    AgentMode mode{AgentMode::hybrid};
    std::string map{"maps/small.map"};
    std::size_t episodes{2000};
    std::size_t timeout_steps{1000};
    double dt{0.1};
    std::uint64_t seed{1};
    std::string output_dir{"runs/default"};
    std::size_t checkpoint_every{500};
    double min_route_length{50.0};
    double waypoint_spacing{8.0};
    StartJitter start_jitter;
    std::string network_preset{"desk"};
    RewardConfig reward;
    // The end-to-end baseline trains without the waypoint term unless this is false.
    bool end_to_end_drops_waypoint_reward{true};
    AgentConfig agent;
    VehicleParams vehicle;
    bool log_transitions{false};

    /// Throws std::invalid_argument describing the first bad field.
    void validate() const;

    /// Reward weights actually used for training in this mode.
    RewardConfig effective_reward() const;
    NetworkSpec network_spec() const;
    /// Agent settings with the run seed applied.
    AgentConfig effective_agent() const;

    nlohmann::json to_json() const;
    /// Missing keys keep their defaults; unknown keys are rejected.
    static RunConfig from_json(const nlohmann::json& j);
    /// Relative map paths are resolved against the config file's directory.
    static RunConfig load(const std::filesystem::path& path);
};

}  // namespace roadrl
