#pragma once

#include <stdexcept>
#include <string_view>

namespace roadrl {

enum class Termination { none, collision, goal, timeout };

std::string_view to_string(Termination t);
Termination termination_from_string(std::string_view s);

inline constexpr double kmh_to_mps(double kmh) { return kmh / 3.6; }

/// Weights and reference values of the hybrid driving reward.
struct RewardConfig {
    double beta_collision{1.0};
    double beta_speed{1.0};
    double beta_progress{1.0};
    double beta_waypoint{1.0};
    double goal_threshold{5.0};               // meters
    double desired_speed{kmh_to_mps(50.0)};   // m/s
    double waypoint_scale{8.0};               // meters
    double goal_bonus{100.0};
    double collision_penalty{-1.0};

    /// Throws std::invalid_argument on a non-positive threshold, speed or scale.
    void validate() const;
};

struct RewardContext {
    bool collision{false};
    double speed{0.0};                   // m/s
    double goal_distance{0.0};           // l, meters
    double previous_goal_distance{0.0};  // l at the previous step
    double waypoint_distance{0.0};       // d, meters
};

struct RewardTerms {
    double speed{0.0};     // v / v0 - 1
    double progress{0.0};  // 1 - l / l_previous
    double waypoint{0.0};  // 1 - d / d0
};

struct RewardOutcome {
    double reward{0.0};
    Termination termination{Termination::none};
};

RewardTerms reward_terms(const RewardContext& ctx, const RewardConfig& cfg);

/// Collision takes precedence over reaching the goal; otherwise the weighted sum of
/// the speed, progress and waypoint terms. Never returns Termination::timeout.
RewardOutcome compute_reward(const RewardContext& ctx, const RewardConfig& cfg);

}  // namespace roadrl
