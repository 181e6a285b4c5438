#include "roadrl/world.hpp"

#include <algorithm>
#include <cmath>
#include <string>

namespace roadrl {

DriveAction ActionTable::resolve(std::size_t index) {
    if (index >= kSize) {
        throw ContractViolation("action index " + std::to_string(index) + " out of range");
    }
    DriveAction a;
    a.steer_index = index / kAccel.size();
    a.accel_index = index % kAccel.size();
    a.steer = kSteer[a.steer_index];
    a.accel = kAccel[a.accel_index];
    return a;
}

std::size_t ActionTable::from_keys(int steer, int accel) {
    if (steer < -1 || steer > 1 || accel < -1 || accel > 1) {
        throw ContractViolation("key state must be -1, 0 or 1");
    }
    return index_of(static_cast<std::size_t>(steer + 1), static_cast<std::size_t>(accel + 1));
}

void ObservationImage::set(std::size_t channel, std::size_t row, std::size_t col, double v) {
    levels_[(channel * height_ + row) * width_ + col] =
        static_cast<std::uint8_t>(std::lround(std::clamp(v, 0.0, 1.0) * 255.0));
}

Simulator::Simulator(std::shared_ptr<const RoadGraph> graph, VehicleParams vehicle, ObservationSpec obs)
    : graph_(std::move(graph)), vehicle_(vehicle), obs_(obs) {
    if (!graph_) {
        throw ContractViolation("simulator needs a road graph");
    }
}

WorldState Simulator::spawn(const VehicleState& ego, std::vector<Obstacle> obstacles) const {
    WorldState w;
    w.ego = ego;
    w.ego.heading = normalize_angle(ego.heading);
    w.ego.speed = std::clamp(ego.speed, 0.0, vehicle_.max_speed);
    w.obstacles = std::move(obstacles);
    w.collision = check_collision(w);
    return w;
}

WorldState Simulator::step(const WorldState& world, const DriveAction& action, double dt) const {
    if (!(dt > 0.0)) {
        throw ContractViolation("step requires dt > 0");
    }
    if (world.collision) {
        throw ContractViolation("step called on a collided world (tick " + std::to_string(world.tick) + ")");
    }
    WorldState next = world;
    VehicleState& ego = next.ego;
    const double v0 = world.ego.speed;
    const double v1 = std::clamp(v0 + action.accel * dt, 0.0, vehicle_.max_speed);
    const double v = 0.5 * (v0 + v1);
    ego.position = ego.position + unit_from_angle(world.ego.heading) * (v * dt);
    ego.heading = normalize_angle(world.ego.heading - v / vehicle_.wheelbase * std::tan(action.steer) * dt);
    ego.speed = v1;

    for (Obstacle& ob : next.obstacles) {
        ob.footprint.center = ob.footprint.center + ob.velocity * dt;
    }
    next.tick = world.tick + 1;
    next.collision = check_collision(next);
    return next;
}

bool Simulator::off_road(const VehicleState& ego) const {
    const auto corners = ego.footprint(vehicle_).corners();
    for (std::size_t i = 0; i < corners.size(); ++i) {
        const Vec2 mid = (corners[i] + corners[(i + 1) % corners.size()]) * 0.5;
        if (!graph_->drivable(corners[i]) || !graph_->drivable(mid)) {
            return true;
        }
    }
    return false;
}

bool Simulator::check_collision(const WorldState& world) const {
    const OrientedRect ego = world.ego.footprint(vehicle_);
    for (const Obstacle& ob : world.obstacles) {
        if (intersects(ego, ob.footprint)) {
            return true;
        }
    }
    return off_road(world.ego);
}

ObservationImage Simulator::render_observation(const WorldState& world) const {
    ObservationImage image(obs_.height, obs_.width);
    const double mpp = obs_.meters_per_pixel;
    const Vec2 origin = world.ego.position;
    const double c = std::cos(world.ego.heading);
    const double s = std::sin(world.ego.heading);
    // World -> ego frame (x forward, y left).
    auto to_ego = [&](Vec2 p) {
        const Vec2 d = p - origin;
        return Vec2{d.x * c + d.y * s, -d.x * s + d.y * c};
    };

    const double fwd_max = obs_.anchor_row * mpp;
    const double back_max = (static_cast<double>(obs_.height) - obs_.anchor_row) * mpp;
    const double side = std::max(obs_.anchor_col, static_cast<double>(obs_.width) - obs_.anchor_col) * mpp;
    const double view_radius = std::hypot(std::max(fwd_max, back_max), side);

    std::vector<std::size_t> near;
    graph_->segments_near(origin, view_radius, near);
    std::vector<RoadGraph::Segment> local;
    local.reserve(near.size());
    for (std::size_t i : near) {
        const auto& seg = graph_->segment(i);
        local.push_back({to_ego(seg.a), to_ego(seg.b), seg.half_width});
    }
    std::vector<OrientedRect> boxes;
    for (const Obstacle& ob : world.obstacles) {
        const OrientedRect& f = ob.footprint;
        if (distance(f.center, origin) <= view_radius + 0.5 * std::hypot(f.length, f.width)) {
            boxes.push_back({to_ego(f.center), f.heading - world.ego.heading, f.length, f.width});
        }
    }

    for (std::size_t r = 0; r < obs_.height; ++r) {
        const double forward = (obs_.anchor_row - (static_cast<double>(r) + 0.5)) * mpp;
        for (std::size_t col = 0; col < obs_.width; ++col) {
            const double left = (obs_.anchor_col - (static_cast<double>(col) + 0.5)) * mpp;
            const Vec2 p{forward, left};
            for (const auto& seg : local) {
                if (point_segment_distance(p, seg.a, seg.b) <= seg.half_width) {
                    image.set(0, r, col, 1.0);
                    break;
                }
            }
            for (const OrientedRect& box : boxes) {
                if (box.contains(p)) {
                    image.set(1, r, col, 1.0);
                    break;
                }
            }
        }
    }
    return image;
}

double goal_distance(const WorldState& world, Vec2 destination) {
    return distance(world.ego.position, destination);
}

}  // namespace roadrl
