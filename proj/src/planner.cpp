#include "roadrl/planner.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <ostream>
#include <queue>
#include <string>

namespace roadrl {

namespace {

// Straight-line distance shrunk by a hair so rounding can never make it overestimate
// a polyline arc length.
constexpr double kHeuristicScale = 1.0 - 1e-12;

}  // namespace

GraphRoute astar(const RoadGraph& graph, std::size_t origin, std::size_t destination) {
    const auto nodes = graph.nodes();
    if (origin >= nodes.size() || destination >= nodes.size()) {
        throw MapError("plan: origin or destination is not a node of the graph");
    }
    const Vec2 goal = nodes[destination].position;
    constexpr double inf = std::numeric_limits<double>::infinity();
    constexpr std::size_t none = std::numeric_limits<std::size_t>::max();

    std::vector<double> g(nodes.size(), inf);
    std::vector<std::size_t> via_edge(nodes.size(), none);

    using Entry = std::pair<double, std::size_t>;  // (f, node)
    std::priority_queue<Entry, std::vector<Entry>, std::greater<>> open;
    g[origin] = 0.0;
    open.push({kHeuristicScale * distance(nodes[origin].position, goal), origin});

    while (!open.empty()) {
        const auto [f, node] = open.top();
        open.pop();
        const double h = kHeuristicScale * distance(nodes[node].position, goal);
        if (f > g[node] + h) {
            continue;  // stale entry
        }
        if (node == destination) {
            break;
        }
        for (std::size_t e : graph.outgoing(node)) {
            const RoadEdge& edge = graph.edges()[e];
            const double candidate = g[node] + edge.cost;
            if (candidate < g[edge.to]) {
                g[edge.to] = candidate;
                via_edge[edge.to] = e;
                open.push({candidate + kHeuristicScale * distance(nodes[edge.to].position, goal), edge.to});
            }
        }
    }

    if (g[destination] == inf) {
        throw NoPathError("no path from '" + nodes[origin].id + "' to '" + nodes[destination].id + "'");
    }

    GraphRoute route;
    route.cost = g[destination];
    for (std::size_t n = destination; n != origin;) {
        const std::size_t e = via_edge[n];
        route.edges.push_back(e);
        n = graph.edges()[e].from;
    }
    std::reverse(route.edges.begin(), route.edges.end());
    route.nodes.push_back(origin);
    for (std::size_t e : route.edges) {
        route.nodes.push_back(graph.edges()[e].to);
    }
    return route;
}

std::vector<Vec2> route_polyline(const RoadGraph& graph, const GraphRoute& route, std::size_t origin) {
    std::vector<Vec2> line{graph.nodes()[origin].position};
    for (std::size_t e : route.edges) {
        const auto& pts = graph.edges()[e].polyline;
        line.insert(line.end(), pts.begin() + 1, pts.end());
    }
    return line;
}

PlannedPath resample(std::span<const Vec2> polyline, double spacing) {
    if (polyline.empty()) {
        throw std::invalid_argument("resample: empty polyline");
    }
    if (!(spacing > 0.0)) {
        throw std::invalid_argument("resample: spacing must be positive");
    }
    // Arc-length closeness below which a spaced sample would duplicate the end point.
    constexpr double kEndTolerance = 1e-9;

    PlannedPath path;
    auto emit = [&](Vec2 p) { path.waypoints.push_back({p, path.waypoints.size()}); };
    emit(polyline.front());

    double next_mark = spacing;
    double walked = 0.0;
    for (std::size_t i = 1; i < polyline.size(); ++i) {
        const Vec2 a = polyline[i - 1];
        const Vec2 b = polyline[i];
        const double seg = distance(a, b);
        while (seg > 0.0 && next_mark <= walked + seg) {
            const double t = (next_mark - walked) / seg;
            emit(a + (b - a) * t);
            next_mark += spacing;
        }
        walked += seg;
    }
    // The last waypoint is the polyline end itself; a spaced sample that landed on it is snapped.
    if (walked > kEndTolerance) {
        if (path.waypoints.size() > 1 && distance(path.waypoints.back().position, polyline.back()) <= kEndTolerance) {
            path.waypoints.back().position = polyline.back();
        } else {
            emit(polyline.back());
        }
    }
    // Rounding can leave a chord an ulp above the spacing: pull interior samples back
    // toward their predecessor, and split a final gap that still overshoots.
    auto& wps = path.waypoints;
    for (std::size_t i = 1; i + 1 < wps.size(); ++i) {
        const Vec2 prev = wps[i - 1].position;
        const Vec2 delta = wps[i].position - prev;
        double k = 1.0;
        while (distance(prev, prev + delta * k) > spacing) {
            k = std::nextafter(k, 0.0);
        }
        wps[i].position = prev + delta * k;
    }
    if (wps.size() >= 2 && distance(wps[wps.size() - 2].position, wps.back().position) > spacing) {
        const Vec2 mid = (wps[wps.size() - 2].position + wps.back().position) * 0.5;
        wps.insert(wps.end() - 1, Waypoint{mid, 0});
    }
    for (std::size_t i = 0; i < wps.size(); ++i) {
        wps[i].index = i;
        if (i > 0) {
            path.length += distance(wps[i - 1].position, wps[i].position);
        }
    }
    return path;
}

PlannedPath plan(const RoadGraph& graph, std::size_t origin, std::size_t destination, double spacing) {
    const GraphRoute route = astar(graph, origin, destination);
    const auto line = route_polyline(graph, route, origin);
    PlannedPath path = resample(line, spacing);
    path.origin = origin;
    path.destination = destination;
    return path;
}

NearestWaypoint nearest_waypoint(const PlannedPath& path, Vec2 position) {
    if (path.waypoints.empty()) {
        throw std::invalid_argument("nearest_waypoint: empty path");
    }
    std::size_t best = 0;
    double best_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < path.waypoints.size(); ++i) {
        const Vec2 d = path.waypoints[i].position - position;
        const double d2 = dot(d, d);
        if (d2 < best_d2) {
            best_d2 = d2;
            best = i;
        }
    }
    return {path.waypoints[best], distance(path.waypoints[best].position, position)};
}

void write_path(std::ostream& out, const PlannedPath& path) {
    const auto old_precision = out.precision(17);
    for (const Waypoint& w : path.waypoints) {
        out << w.index << ' ' << w.position.x << ' ' << w.position.y << '\n';
    }
    out.precision(old_precision);
}

}  // namespace roadrl
