#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "roadrl/geometry.hpp"

namespace roadrl {

class MapError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct RoadNode {
    std::string id;
    Vec2 position;
};

/// Directed lane segment. `cost` is the arc length of `polyline`.
struct RoadEdge {
    std::size_t from{0};
    std::size_t to{0};
    std::vector<Vec2> polyline;
    double lane_width{0.0};
    double cost{0.0};
};

/// Road topology plus the drivable corridor it implies: a point is drivable when
/// it lies within half a lane width of some edge polyline.
class RoadGraph {
public:
    std::size_t add_node(std::string id, Vec2 position);
    /// `via` holds interior polyline points; endpoints come from the nodes.
    std::size_t add_edge(std::size_t from, std::size_t to, double lane_width, std::span<const Vec2> via = {});

    std::span<const RoadNode> nodes() const { return nodes_; }
    std::span<const RoadEdge> edges() const { return edges_; }
    std::span<const std::size_t> outgoing(std::size_t node) const { return outgoing_.at(node); }

    std::optional<std::size_t> find_node(std::string_view id) const;
    std::size_t node_index(std::string_view id) const;

    bool drivable(Vec2 p) const;

    /// Edge segments whose corridor may reach within `radius` of `center`.
    void segments_near(Vec2 center, double radius, std::vector<std::size_t>& out) const;
    struct Segment {
        Vec2 a;
        Vec2 b;
        double half_width;
    };
    const Segment& segment(std::size_t i) const { return segments_[i]; }

private:
    static constexpr double kCellSize = 16.0;
    static std::int64_t cell_key(std::int64_t cx, std::int64_t cy) { return (cx << 32) ^ (cy & 0xffffffff); }

    std::vector<RoadNode> nodes_;
    std::vector<RoadEdge> edges_;
    std::vector<std::vector<std::size_t>> outgoing_;
    std::unordered_map<std::string, std::size_t> node_ids_;
    std::vector<Segment> segments_;
    std::unordered_map<std::int64_t, std::vector<std::size_t>> grid_;
};

/// An evaluation route category.
struct RouteType {
    std::string_view id;
    std::string_view name;
};

inline constexpr std::array<RouteType, 7> kRouteTypes{{
    {"straight-highway", "Straight (highway)"},
    {"straight-urban", "Straight (urban)"},
    {"straight-under-bridge", "Straight (under bridge)"},
    {"slight-curve", "Slight curve"},
    {"sharp-curve", "Sharp curve"},
    {"right-turn", "Right turn in intersection"},
    {"left-turn", "Left turn in intersection"},
}};

std::optional<RouteType> find_route_type(std::string_view id);

struct Route {
    std::string id;
    std::string name;
    std::size_t origin{0};
    std::size_t destination{0};
};

/// Scripted traffic: a rectangle moving at constant velocity (zero for parked cars).
struct Obstacle {
    OrientedRect footprint;
    Vec2 velocity;
};

struct RoadMap {
    RoadGraph graph;
    std::vector<Route> routes;
    std::vector<std::size_t> spawn_candidates;
    std::vector<Obstacle> obstacles;

    const Route& route(std::string_view id) const;
};

inline constexpr int kMapFormatVersion = 1;

RoadMap load_map(std::istream& in, const std::string& source = "<stream>");
RoadMap load_map_file(const std::filesystem::path& path);

}  // namespace roadrl
