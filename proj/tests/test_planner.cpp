#include <random>
#include <sstream>

#include "doctest.h"

#include "roadrl/planner.hpp"
#include "roadrl/road_map.hpp"
#include "support.hpp"

using namespace roadrl;
using namespace roadrl::testing;

namespace {

// Arc-length walker: position at distance s along a polyline, by linear search.
Vec2 point_at(const std::vector<Vec2>& line, double s) {
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        const double seg = distance(line[i], line[i + 1]);
        if (s <= seg) {
            return line[i] + (line[i + 1] - line[i]) * (s / seg);
        }
        s -= seg;
    }
    return line.back();
}

double polyline_length(const std::vector<Vec2>& line) {
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < line.size(); ++i) {
        total += distance(line[i], line[i + 1]);
    }
    return total;
}

}  // namespace

TEST_SUITE("map") {

TEST_CASE("single-edge map has one edge costing its length") {
    std::istringstream in("ROADMAP 1\n[nodes]\na 0 0\nb 30 40\n[edges]\na b 6\n");
    const RoadMap m = load_map(in);
    REQUIRE(m.graph.edges().size() == 1);
    CHECK(m.graph.edges()[0].cost == doctest::Approx(50.0).epsilon(1e-12));
}

TEST_CASE("bundled map carries all seven route categories") {
    const RoadMap m = load_map_file(small_map_path());
    REQUIRE(m.routes.size() == kRouteTypes.size());
    for (const RouteType& t : kRouteTypes) {
        const Route& r = m.route(t.id);
        CHECK(r.name == std::string(t.name));
        CHECK_NOTHROW(astar(m.graph, r.origin, r.destination));
    }
    const std::vector<std::string> names{"Straight (highway)",         "Straight (urban)", "Straight (under bridge)",
                                         "Slight curve",               "Sharp curve",      "Right turn in intersection",
                                         "Left turn in intersection"};
    for (std::size_t i = 0; i < names.size(); ++i) {
        CHECK(std::string(kRouteTypes[i].name) == names[i]);
    }
}

TEST_CASE("edge naming an undeclared node is reported by name") {
    std::istringstream in("ROADMAP 1\n[nodes]\na 0 0\n[edges]\na ghost 6\n");
    try {
        load_map(in);
        FAIL("expected a map error");
    } catch (const MapError& e) {
        CHECK(std::string(e.what()).find("ghost") != std::string::npos);
    }
}

TEST_CASE("malformed map files are rejected") {
    for (const char* text : {"", "ROADMAP 2\n[nodes]\na 0 0\n", "ROADMAP 1\n[bogus]\n",
                             "ROADMAP 1\n[nodes]\na 0 0\na 1 1\n", "ROADMAP 1\n[nodes]\na 0 0\nb 1 0\n[edges]\na b 0\n",
                             "ROADMAP 1\n[nodes]\na 0 0\nb 1 0\n[routes]\nr a nowhere\n"}) {
        std::istringstream in(text);
        CHECK_THROWS_AS(load_map(in), MapError);
    }
}

}  // TEST_SUITE

TEST_SUITE("planner") {

TEST_CASE("two-node graph plans along its edge") {
    RoadGraph g;
    g.add_node("a", {0, 0});
    g.add_node("b", {24, 0});
    g.add_edge(0, 1, 6.0);
    const PlannedPath p = plan(g, 0, 1);
    REQUIRE(p.waypoints.size() == 4);
    CHECK(p.waypoints.front().position == Vec2{0, 0});
    CHECK(p.end() == Vec2{24, 0});
    CHECK(p.length == doctest::Approx(24.0));
}

TEST_CASE("A* cost equals a Dijkstra oracle on random connected graphs") {
    std::mt19937_64 rng(99);
    for (int trial = 0; trial < 200; ++trial) {
        const RoadGraph g = random_connected_graph(rng);
        const std::size_t n = g.nodes().size();
        std::uniform_int_distribution<std::size_t> pick(0, n - 1);
        const std::size_t o = pick(rng);
        const std::size_t d = pick(rng);
        const GraphRoute r = astar(g, o, d);
        CHECK(r.cost == dijkstra_cost(g, o, d));
        // The returned edge chain is contiguous and sums to the reported cost.
        double sum = 0.0;
        std::size_t at = o;
        for (std::size_t e : r.edges) {
            CHECK(g.edges()[e].from == at);
            at = g.edges()[e].to;
            sum += g.edges()[e].cost;
        }
        CHECK(at == d);
        CHECK(sum == doctest::Approx(r.cost).epsilon(1e-12));
    }
}

TEST_CASE("unreachable destination raises NoPathError") {
    RoadGraph g;
    g.add_node("a", {0, 0});
    g.add_node("b", {10, 0});
    g.add_node("island", {50, 50});
    g.add_edge(0, 1, 6.0);
    CHECK_THROWS_AS(astar(g, 0, 2), NoPathError);
    CHECK_THROWS_AS(astar(g, 1, 0), NoPathError);  // one-way edge
}

TEST_CASE("resampling a straight segment") {
    const std::vector<Vec2> exact{{0, 0}, {24, 0}};
    PlannedPath p = resample(exact, 8.0);
    REQUIRE(p.waypoints.size() == 4);
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(p.waypoints[i].position.x == doctest::Approx(8.0 * i));
        CHECK(p.waypoints[i].index == i);
    }
    const std::vector<Vec2> remainder{{0, 0}, {20, 0}};
    p = resample(remainder, 8.0);
    REQUIRE(p.waypoints.size() == 4);
    const double expected[] = {0, 8, 16, 20};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(p.waypoints[i].position.x == doctest::Approx(expected[i]));
    }
}

TEST_CASE("resampled random polylines match an arc-length walker") {
    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> step(0.05, 30.0);
    std::uniform_real_distribution<double> turn(-2.0, 2.0);
    std::uniform_int_distribution<int> count(2, 12);
    for (int trial = 0; trial < 300; ++trial) {
        std::vector<Vec2> line{{0, 0}};
        double heading = 0.0;
        const int n = count(rng);
        for (int i = 1; i < n; ++i) {
            heading += turn(rng);
            line.push_back(line.back() + unit_from_angle(heading) * step(rng));
        }
        const PlannedPath p = resample(line, 8.0);
        const double total = polyline_length(line);
        REQUIRE(p.waypoints.size() >= 2);
        CHECK(p.end() == line.back());
        double resampled = 0.0;
        for (std::size_t i = 0; i < p.waypoints.size(); ++i) {
            if (i + 1 < p.waypoints.size()) {
                const double s = 8.0 * static_cast<double>(i);
                const Vec2 q = point_at(line, s);
                CHECK(distance(q, p.waypoints[i].position) <= 1e-9);
                const double gap = distance(p.waypoints[i].position, p.waypoints[i + 1].position);
                CHECK(gap > 0.0);
                CHECK(gap <= 8.0);
                resampled += gap;
            }
        }
        CHECK(resampled <= total + 1e-6);
    }
}

TEST_CASE("nearest waypoint: exact hits, ties and a linear-scan oracle") {
    const std::vector<Vec2> line{{0, 0}, {40, 0}, {40, 40}};
    const PlannedPath p = resample(line, 8.0);
    for (const Waypoint& w : p.waypoints) {
        const NearestWaypoint n = nearest_waypoint(p, w.position);
        CHECK(n.waypoint.index == w.index);
        CHECK(n.distance == 0.0);
    }
    // Equidistant from waypoints 2 (16, 0) and 3 (24, 0).
    CHECK(nearest_waypoint(p, {20.0, 5.0}).waypoint.index == 2);

    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> u(-20.0, 60.0);
    for (int i = 0; i < 1000; ++i) {
        const Vec2 q{u(rng), u(rng)};
        std::size_t best = 0;
        double best_d = distance(q, p.waypoints[0].position);
        for (std::size_t k = 1; k < p.waypoints.size(); ++k) {
            const double d = distance(q, p.waypoints[k].position);
            if (d < best_d) {
                best = k;
                best_d = d;
            }
        }
        const NearestWaypoint n = nearest_waypoint(p, q);
        CHECK(n.waypoint.index == best);
        CHECK(n.distance == best_d);
    }
}

TEST_CASE("planned route through the bundled intersection") {
    const RoadMap m = load_map_file(small_map_path());
    const Route& r = m.route("right-turn");
    const PlannedPath p = plan(m.graph, r.origin, r.destination);
    CHECK(p.waypoints.front().position == m.graph.nodes()[r.origin].position);
    CHECK(p.end() == m.graph.nodes()[r.destination].position);
    // 120 m of road; the waypoint chain cuts the corner between (0, -4) and (4, 0).
    CHECK(p.length == doctest::Approx(112.0 + std::sqrt(32.0)).epsilon(1e-12));
    std::ostringstream out;
    write_path(out, p);
    CHECK(out.str().rfind("0 0 -60", 0) == 0);
}

}  // TEST_SUITE
