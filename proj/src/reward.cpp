#include "roadrl/reward.hpp"

#include <cmath>
#include <string>

namespace roadrl {

std::string_view to_string(Termination t) {
    switch (t) {
        case Termination::none:
            return "none";
        case Termination::collision:
            return "collision";
        case Termination::goal:
            return "goal";
        case Termination::timeout:
            return "timeout";
    }
    return "none";
}

Termination termination_from_string(std::string_view s) {
    for (Termination t : {Termination::none, Termination::collision, Termination::goal, Termination::timeout}) {
        if (to_string(t) == s) {
            return t;
        }
    }
    throw std::invalid_argument("unknown termination kind '" + std::string(s) + "'");
}

void RewardConfig::validate() const {
    if (!(goal_threshold > 0.0) || !(desired_speed > 0.0) || !(waypoint_scale > 0.0)) {
        throw std::invalid_argument("reward config: goal threshold, desired speed and waypoint scale must be > 0");
    }
    for (double v : {beta_collision, beta_speed, beta_progress, beta_waypoint, goal_bonus, collision_penalty}) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("reward config: weights must be finite");
        }
    }
}

RewardTerms reward_terms(const RewardContext& ctx, const RewardConfig& cfg) {
    if (ctx.previous_goal_distance == 0.0) {
        throw std::invalid_argument("reward: previous goal distance is zero");
    }
    return {ctx.speed / cfg.desired_speed - 1.0, 1.0 - ctx.goal_distance / ctx.previous_goal_distance,
            1.0 - ctx.waypoint_distance / cfg.waypoint_scale};
}

RewardOutcome compute_reward(const RewardContext& ctx, const RewardConfig& cfg) {
    for (double v : {ctx.speed, ctx.goal_distance, ctx.previous_goal_distance, ctx.waypoint_distance}) {
        if (!std::isfinite(v)) {
            throw std::invalid_argument("reward: non-finite input");
        }
        if (v < 0.0) {
            throw std::invalid_argument("reward: negative speed or distance");
        }
    }
    if (ctx.collision) {
        return {cfg.beta_collision * cfg.collision_penalty, Termination::collision};
    }
    if (ctx.goal_distance < cfg.goal_threshold) {
        return {cfg.goal_bonus, Termination::goal};
    }
    const RewardTerms t = reward_terms(ctx, cfg);
    return {cfg.beta_speed * t.speed + cfg.beta_progress * t.progress + cfg.beta_waypoint * t.waypoint,
            Termination::none};
}

}  // namespace roadrl
