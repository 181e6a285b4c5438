#pragma once

#include <iosfwd>
#include <span>
#include <stdexcept>
#include <vector>

#include "roadrl/geometry.hpp"
#include "roadrl/road_map.hpp"

namespace roadrl {

class NoPathError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline constexpr double kDefaultWaypointSpacing = 8.0;

struct Waypoint {
    Vec2 position;
    std::size_t index{0};
};

/// Waypoints every `spacing` meters of arc length along the planned route; the last
/// waypoint sits exactly on the route end.
struct PlannedPath {
    std::vector<Waypoint> waypoints;
    double length{0.0};  // sum of gaps between consecutive waypoints
    std::size_t origin{0};
    std::size_t destination{0};

    Vec2 end() const { return waypoints.back().position; }
};

struct GraphRoute {
    std::vector<std::size_t> nodes;
    std::vector<std::size_t> edges;
    double cost{0.0};
};

/// A* over edge costs with a straight-line heuristic. Throws NoPathError when
/// `destination` is unreachable.
GraphRoute astar(const RoadGraph& graph, std::size_t origin, std::size_t destination);

/// Concatenated edge polylines of a route (just the origin when the route is empty).
std::vector<Vec2> route_polyline(const RoadGraph& graph, const GraphRoute& route, std::size_t origin);

PlannedPath resample(std::span<const Vec2> polyline, double spacing = kDefaultWaypointSpacing);

PlannedPath plan(const RoadGraph& graph, std::size_t origin, std::size_t destination,
                 double spacing = kDefaultWaypointSpacing);

struct NearestWaypoint {
    Waypoint waypoint;
    double distance{0.0};
};

/// Closest waypoint by Euclidean distance; ties go to the lowest index.
NearestWaypoint nearest_waypoint(const PlannedPath& path, Vec2 position);

/// One "index x y" line per waypoint.
void write_path(std::ostream& out, const PlannedPath& path);

}  // namespace roadrl
