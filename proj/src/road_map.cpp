#include "roadrl/road_map.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

namespace roadrl {

std::size_t RoadGraph::add_node(std::string id, Vec2 position) {
    if (node_ids_.contains(id)) {
        throw MapError("duplicate node '" + id + "'");
    }
    const std::size_t index = nodes_.size();
    node_ids_.emplace(id, index);
    nodes_.push_back({std::move(id), position});
    outgoing_.emplace_back();
    return index;
}

std::size_t RoadGraph::add_edge(std::size_t from, std::size_t to, double lane_width, std::span<const Vec2> via) {
    if (from >= nodes_.size() || to >= nodes_.size()) {
        throw MapError("edge references an undeclared node");
    }
    if (!(lane_width > 0.0) || !std::isfinite(lane_width)) {
        throw MapError("edge " + nodes_[from].id + " -> " + nodes_[to].id + " has non-positive lane width");
    }
    RoadEdge edge;
    edge.from = from;
    edge.to = to;
    edge.lane_width = lane_width;
    edge.polyline.push_back(nodes_[from].position);
    edge.polyline.insert(edge.polyline.end(), via.begin(), via.end());
    edge.polyline.push_back(nodes_[to].position);
    for (std::size_t i = 1; i < edge.polyline.size(); ++i) {
        edge.cost += distance(edge.polyline[i - 1], edge.polyline[i]);
    }
    if (edge.cost <= 1e-9) {
        throw MapError("zero-length edge " + nodes_[from].id + " -> " + nodes_[to].id);
    }

    const double half = 0.5 * lane_width;
    for (std::size_t i = 1; i < edge.polyline.size(); ++i) {
        const Segment seg{edge.polyline[i - 1], edge.polyline[i], half};
        const std::size_t seg_index = segments_.size();
        segments_.push_back(seg);
        const auto lo_x = static_cast<std::int64_t>(std::floor((std::min(seg.a.x, seg.b.x) - half) / kCellSize));
        const auto hi_x = static_cast<std::int64_t>(std::floor((std::max(seg.a.x, seg.b.x) + half) / kCellSize));
        const auto lo_y = static_cast<std::int64_t>(std::floor((std::min(seg.a.y, seg.b.y) - half) / kCellSize));
        const auto hi_y = static_cast<std::int64_t>(std::floor((std::max(seg.a.y, seg.b.y) + half) / kCellSize));
        for (auto cx = lo_x; cx <= hi_x; ++cx) {
            for (auto cy = lo_y; cy <= hi_y; ++cy) {
                grid_[cell_key(cx, cy)].push_back(seg_index);
            }
        }
    }

    const std::size_t index = edges_.size();
    edges_.push_back(std::move(edge));
    outgoing_[from].push_back(index);
    return index;
}

std::optional<std::size_t> RoadGraph::find_node(std::string_view id) const {
    const auto it = node_ids_.find(std::string(id));
    if (it == node_ids_.end()) {
        return std::nullopt;
    }
    return it->second;
}

std::size_t RoadGraph::node_index(std::string_view id) const {
    if (auto found = find_node(id)) {
        return *found;
    }
    throw MapError("unknown node '" + std::string(id) + "'");
}

bool RoadGraph::drivable(Vec2 p) const {
    const auto cx = static_cast<std::int64_t>(std::floor(p.x / kCellSize));
    const auto cy = static_cast<std::int64_t>(std::floor(p.y / kCellSize));
    const auto it = grid_.find(cell_key(cx, cy));
    if (it == grid_.end()) {
        return false;
    }
    for (std::size_t s : it->second) {
        const Segment& seg = segments_[s];
        if (point_segment_distance(p, seg.a, seg.b) <= seg.half_width) {
            return true;
        }
    }
    return false;
}

void RoadGraph::segments_near(Vec2 center, double radius, std::vector<std::size_t>& out) const {
    out.clear();
    for (std::size_t i = 0; i < segments_.size(); ++i) {
        const Segment& seg = segments_[i];
        if (point_segment_distance(center, seg.a, seg.b) <= radius + seg.half_width) {
            out.push_back(i);
        }
    }
}

std::optional<RouteType> find_route_type(std::string_view id) {
    for (const RouteType& type : kRouteTypes) {
        if (type.id == id) {
            return type;
        }
    }
    return std::nullopt;
}

const Route& RoadMap::route(std::string_view id) const {
    for (const Route& r : routes) {
        if (r.id == id) {
            return r;
        }
    }
    throw MapError("unknown route '" + std::string(id) + "'");
}

namespace {

enum class Section { none, nodes, edges, routes, obstacles, spawn };

class LineError {
public:
    LineError(const std::string& source, int line) : prefix_(source + ":" + std::to_string(line) + ": ") {}
    [[noreturn]] void fail(const std::string& what) const { throw MapError(prefix_ + what); }

private:
    std::string prefix_;
};

double parse_number(const std::string& token, const LineError& err) {
    std::size_t used = 0;
    double value = 0.0;
    try {
        value = std::stod(token, &used);
    } catch (const std::exception&) {
        err.fail("expected a number, got '" + token + "'");
    }
    if (used != token.size() || !std::isfinite(value)) {
        err.fail("expected a number, got '" + token + "'");
    }
    return value;
}

std::size_t lookup(const RoadGraph& graph, const std::string& id, const LineError& err) {
    if (auto found = graph.find_node(id)) {
        return *found;
    }
    err.fail("reference to missing node '" + id + "'");
}

}  // namespace

RoadMap load_map(std::istream& in, const std::string& source) {
    RoadMap map;
    Section section = Section::none;
    bool saw_header = false;
    std::string raw;
    int line_no = 0;

    while (std::getline(in, raw)) {
        ++line_no;
        const LineError err(source, line_no);
        if (const auto hash = raw.find('#'); hash != std::string::npos) {
            raw.erase(hash);
        }
        std::istringstream line(raw);
        std::vector<std::string> tok;
        for (std::string t; line >> t;) {
            tok.push_back(std::move(t));
        }
        if (tok.empty()) {
            continue;
        }

        if (!saw_header) {
            if (tok.size() != 2 || tok[0] != "ROADMAP") {
                err.fail("missing 'ROADMAP <version>' header");
            }
            if (tok[1] != std::to_string(kMapFormatVersion)) {
                err.fail("unsupported map format version " + tok[1]);
            }
            saw_header = true;
            continue;
        }

        if (tok[0].front() == '[') {
            if (tok.size() != 1) {
                err.fail("junk after section header");
            }
            const std::string& name = tok[0];
            if (name == "[nodes]") {
                section = Section::nodes;
            } else if (name == "[edges]") {
                section = Section::edges;
            } else if (name == "[routes]") {
                section = Section::routes;
            } else if (name == "[obstacles]") {
                section = Section::obstacles;
            } else if (name == "[spawn]") {
                section = Section::spawn;
            } else {
                err.fail("unknown section " + name);
            }
            continue;
        }

        switch (section) {
            case Section::none:
                err.fail("data outside of a section");
            case Section::nodes: {
                if (tok.size() != 3) {
                    err.fail("node line needs: <id> <x> <y>");
                }
                try {
                    map.graph.add_node(tok[0], {parse_number(tok[1], err), parse_number(tok[2], err)});
                } catch (const MapError& e) {
                    err.fail(e.what());
                }
                break;
            }
            case Section::edges: {
                if (tok.size() < 3) {
                    err.fail("edge line needs: <from> <to> <width> [both] [via x y ...]");
                }
                const std::size_t from = lookup(map.graph, tok[0], err);
                const std::size_t to = lookup(map.graph, tok[1], err);
                const double width = parse_number(tok[2], err);
                bool both = false;
                std::vector<Vec2> via;
                std::size_t i = 3;
                if (i < tok.size() && tok[i] == "both") {
                    both = true;
                    ++i;
                }
                if (i < tok.size()) {
                    if (tok[i] != "via") {
                        err.fail("unexpected token '" + tok[i] + "'");
                    }
                    ++i;
                    if ((tok.size() - i) % 2 != 0 || i == tok.size()) {
                        err.fail("'via' needs x y pairs");
                    }
                    for (; i < tok.size(); i += 2) {
                        via.push_back({parse_number(tok[i], err), parse_number(tok[i + 1], err)});
                    }
                }
                try {
                    map.graph.add_edge(from, to, width, via);
                    if (both) {
                        std::vector<Vec2> reversed(via.rbegin(), via.rend());
                        map.graph.add_edge(to, from, width, reversed);
                    }
                } catch (const MapError& e) {
                    err.fail(e.what());
                }
                break;
            }
            case Section::routes: {
                if (tok.size() < 3) {
                    err.fail("route line needs: <route-id> <origin> <destination> [name...]");
                }
                Route route;
                route.id = tok[0];
                route.origin = lookup(map.graph, tok[1], err);
                route.destination = lookup(map.graph, tok[2], err);
                if (tok.size() > 3) {
                    for (std::size_t i = 3; i < tok.size(); ++i) {
                        route.name += (i > 3 ? " " : "") + tok[i];
                    }
                } else if (auto type = find_route_type(route.id)) {
                    route.name = std::string(type->name);
                } else {
                    route.name = route.id;
                }
                map.routes.push_back(std::move(route));
                break;
            }
            case Section::obstacles: {
                if (tok.size() != 5 && tok.size() != 7) {
                    err.fail("obstacle line needs: <cx> <cy> <heading> <length> <width> [<vx> <vy>]");
                }
                Obstacle ob;
                ob.footprint = {{parse_number(tok[0], err), parse_number(tok[1], err)},
                                parse_number(tok[2], err),
                                parse_number(tok[3], err),
                                parse_number(tok[4], err)};
                if (ob.footprint.length <= 0.0 || ob.footprint.width <= 0.0) {
                    err.fail("obstacle dimensions must be positive");
                }
                if (tok.size() == 7) {
                    ob.velocity = {parse_number(tok[5], err), parse_number(tok[6], err)};
                }
                map.obstacles.push_back(ob);
                break;
            }
            case Section::spawn: {
                for (const std::string& id : tok) {
                    map.spawn_candidates.push_back(lookup(map.graph, id, err));
                }
                break;
            }
        }
    }

    if (!saw_header) {
        throw MapError(source + ": empty map file");
    }
    if (map.graph.nodes().empty()) {
        throw MapError(source + ": map declares no nodes");
    }
    if (map.spawn_candidates.empty()) {
        for (std::size_t i = 0; i < map.graph.nodes().size(); ++i) {
            map.spawn_candidates.push_back(i);
        }
    }
    return map;
}

RoadMap load_map_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw MapError("cannot open map file " + path.string());
    }
    return load_map(in, path.string());
}

}  // namespace roadrl
