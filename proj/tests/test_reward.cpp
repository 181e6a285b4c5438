#include <cmath>
#include <random>

#include "doctest.h"

#include "roadrl/reward.hpp"

using namespace roadrl;

TEST_SUITE("reward") {

TEST_CASE("collision yields the penalty and ends the episode") {
    const RewardConfig cfg;
    RewardContext ctx{true, 30.0, 2.0, 2.5, 50.0};
    const RewardOutcome out = compute_reward(ctx, cfg);
    CHECK(std::abs(out.reward - (-1.0)) <= 1e-9);
    CHECK(out.termination == Termination::collision);
}

TEST_CASE("reaching within the goal radius pays the bonus") {
    const RewardConfig cfg;
    RewardContext ctx{false, 10.0, 3.0, 4.0, 1.0};
    const RewardOutcome out = compute_reward(ctx, cfg);
    CHECK(std::abs(out.reward - 100.0) <= 1e-9);
    CHECK(out.termination == Termination::goal);
}

TEST_CASE("half the desired speed on the path boundary scores zero") {
    const RewardConfig cfg;
    RewardContext ctx{false, kmh_to_mps(25.0), 40.0, 40.0, 4.0};
    const RewardTerms t = reward_terms(ctx, cfg);
    CHECK(std::abs(t.speed - (-0.5)) <= 1e-9);
    CHECK(std::abs(t.progress) <= 1e-9);
    CHECK(std::abs(t.waypoint - 0.5) <= 1e-9);
    const RewardOutcome out = compute_reward(ctx, cfg);
    CHECK(std::abs(out.reward) <= 1e-9);
    CHECK(out.termination == Termination::none);
}

TEST_CASE("every term at its reference point gives one") {
    const RewardConfig cfg;
    RewardContext ctx{false, cfg.desired_speed, 40.0, 40.0, 0.0};
    CHECK(std::abs(compute_reward(ctx, cfg).reward - 1.0) <= 1e-9);
}

TEST_CASE("weights scale their terms and the collision penalty") {
    RewardConfig cfg;
    cfg.beta_speed = 2.0;
    cfg.beta_progress = 3.0;
    cfg.beta_waypoint = 0.0;
    cfg.beta_collision = 4.0;
    RewardContext ctx{false, cfg.desired_speed * 1.5, 30.0, 40.0, 6.0};
    CHECK(compute_reward(ctx, cfg).reward == doctest::Approx(2.0 * 0.5 + 3.0 * 0.25));
    ctx.collision = true;
    CHECK(compute_reward(ctx, cfg).reward == doctest::Approx(-4.0));
}

TEST_CASE("collision takes precedence for every context") {
    const RewardConfig cfg;
    std::mt19937_64 rng(1);
    std::uniform_real_distribution<double> u(0.0, 50.0);
    for (int i = 0; i < 10000; ++i) {
        RewardContext ctx{true, u(rng), u(rng), u(rng) + 1e-3, u(rng)};
        const RewardOutcome out = compute_reward(ctx, cfg);
        CHECK(out.reward == -1.0);
        CHECK(out.termination == Termination::collision);
    }
}

TEST_CASE("monotone in speed, waypoint distance and goal distance") {
    const RewardConfig cfg;
    std::mt19937_64 rng(2);
    std::uniform_real_distribution<double> u(0.0, 40.0);
    std::uniform_real_distribution<double> delta(0.0, 5.0);
    for (int i = 0; i < 5000; ++i) {
        const RewardContext base{false, u(rng), cfg.goal_threshold + u(rng), cfg.goal_threshold + u(rng) + 1e-3,
                                 u(rng)};
        const double r = compute_reward(base, cfg).reward;
        RewardContext faster = base;
        faster.speed += delta(rng);
        CHECK(compute_reward(faster, cfg).reward >= r);
        RewardContext farther_from_path = base;
        farther_from_path.waypoint_distance += delta(rng);
        CHECK(compute_reward(farther_from_path, cfg).reward <= r);
        RewardContext farther_from_goal = base;
        farther_from_goal.goal_distance += delta(rng);
        CHECK(compute_reward(farther_from_goal, cfg).reward <= r);
    }
}

TEST_CASE("terms cross zero exactly at their reference values") {
    const RewardConfig cfg;
    const RewardTerms at_ref = reward_terms({false, cfg.desired_speed, 17.0, 17.0, cfg.waypoint_scale}, cfg);
    CHECK(at_ref.speed == 0.0);
    CHECK(at_ref.progress == 0.0);
    CHECK(at_ref.waypoint == 0.0);
    const RewardTerms off = reward_terms({false, cfg.desired_speed * 0.9, 16.0, 17.0, cfg.waypoint_scale * 1.1}, cfg);
    CHECK(off.speed != 0.0);
    CHECK(off.progress != 0.0);
    CHECK(off.waypoint != 0.0);
}

TEST_CASE("waypoint term is not clipped far from the path") {
    const RewardConfig cfg;
    const RewardTerms t = reward_terms({false, 0.0, 10.0, 10.0, 80.0}, cfg);
    CHECK(t.waypoint == doctest::Approx(-9.0));
}

TEST_CASE("invalid inputs") {
    RewardConfig cfg;
    CHECK_THROWS_AS(compute_reward({false, NAN, 10.0, 10.0, 1.0}, cfg), std::invalid_argument);
    CHECK_THROWS_AS(compute_reward({false, 1.0, 10.0, 0.0, 1.0}, cfg), std::invalid_argument);
    cfg.waypoint_scale = 0.0;
    CHECK_THROWS_AS(cfg.validate(), std::invalid_argument);
}

}  // TEST_SUITE
