#pragma once

#include <array>
#include <cstdint>
#include <memory>
#include <stdexcept>
#include <vector>

#include "roadrl/geometry.hpp"
#include "roadrl/road_map.hpp"

namespace roadrl {

/// Raised when a caller breaks an operation precondition (e.g. stepping a crashed world).
class ContractViolation : public std::logic_error {
public:
    using std::logic_error::logic_error;
};

struct VehicleParams {
    double wheelbase{2.5};
    double length{4.5};
    double width{2.0};
    double max_speed{20.0};
};

/// `position` is the footprint center. Speed is never negative (no reverse gear).
struct VehicleState {
    Vec2 position;
    double heading{0.0};
    double speed{0.0};

    OrientedRect footprint(const VehicleParams& params) const {
        return {position, heading, params.length, params.width};
    }
    bool operator==(const VehicleState&) const = default;
};

struct DriveAction {
    std::size_t steer_index{1};
    std::size_t accel_index{1};
    double steer{0.0};
    double accel{0.0};
};

/// Fixed 3x3 steering/acceleration table shared by the agent and human drivers.
/// Positive steer turns clockwise (to the right); index = steer_index * 3 + accel_index.
struct ActionTable {
    static constexpr std::array<double, 3> kSteer{-0.5, 0.0, 0.5};
    static constexpr std::array<double, 3> kAccel{-3.0, 0.0, 2.0};
    static constexpr std::size_t kSize = kSteer.size() * kAccel.size();

    static constexpr std::size_t size() { return kSize; }
    static constexpr std::size_t index_of(std::size_t steer_index, std::size_t accel_index) {
        return steer_index * kAccel.size() + accel_index;
    }
    static DriveAction resolve(std::size_t index);
    /// Keyboard-style mapping: steer/accel in {-1, 0, 1}.
    static std::size_t from_keys(int steer, int accel);
};

struct WorldState {
    VehicleState ego;
    std::vector<Obstacle> obstacles;
    std::uint64_t tick{0};
    bool collision{false};
};

struct ObservationSpec {
    std::size_t height{64};
    std::size_t width{64};
    double meters_per_pixel{0.5};
    // Ego sits on this pixel-grid point (row, col measured from the top-left corner).
    double anchor_row{48.0};
    double anchor_col{32.0};
};

/// Two-channel ego-centric top-down image: channel 0 drivable area, channel 1 obstacles.
/// Intensities are stored as 8-bit levels and read back in [0, 1].
class ObservationImage {
public:
    static constexpr std::size_t kChannels = 2;

    ObservationImage() = default;
    ObservationImage(std::size_t height, std::size_t width)
        : height_(height), width_(width), levels_(kChannels * height * width, 0) {}

    std::size_t height() const { return height_; }
    std::size_t width() const { return width_; }
    double value(std::size_t channel, std::size_t row, std::size_t col) const {
        return levels_[(channel * height_ + row) * width_ + col] / 255.0;
    }
    void set(std::size_t channel, std::size_t row, std::size_t col, double v);

    const std::vector<std::uint8_t>& levels() const { return levels_; }
    std::vector<std::uint8_t>& levels() { return levels_; }

    bool operator==(const ObservationImage&) const = default;

private:
    std::size_t height_{0};
    std::size_t width_{0};
    std::vector<std::uint8_t> levels_;
};

/// Deterministic 2D world over a road graph. Holds no mutable state; world snapshots
/// are plain values.
class Simulator {
public:
    explicit Simulator(std::shared_ptr<const RoadGraph> graph, VehicleParams vehicle = {}, ObservationSpec obs = {});

    const RoadGraph& graph() const { return *graph_; }
    const VehicleParams& vehicle() const { return vehicle_; }
    const ObservationSpec& observation_spec() const { return obs_; }

    /// Builds an initial world and computes its collision flag.
    WorldState spawn(const VehicleState& ego, std::vector<Obstacle> obstacles) const;

    /// One kinematic bicycle step. Throws ContractViolation on a collided world or dt <= 0.
    WorldState step(const WorldState& world, const DriveAction& action, double dt) const;

    bool check_collision(const WorldState& world) const;
    bool off_road(const VehicleState& ego) const;

    ObservationImage render_observation(const WorldState& world) const;

private:
    std::shared_ptr<const RoadGraph> graph_;
    VehicleParams vehicle_;
    ObservationSpec obs_;
};

double goal_distance(const WorldState& world, Vec2 destination);

}  // namespace roadrl
