#include <memory>
#include <optional>
#include <string>

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include "roadrl/config.hpp"
#include "roadrl/harness.hpp"
#include "roadrl/planner.hpp"
#include "roadrl/reward.hpp"
#include "roadrl/road_map.hpp"

namespace py = pybind11;
using namespace py::literals;
using namespace roadrl;

namespace {

RunConfig config_from(const std::string& path, const std::optional<std::string>& map) {
    RunConfig cfg = path.empty() ? RunConfig{} : RunConfig::load(path);
    if (map) {
        cfg.map = *map;
    }
    return cfg;
}

// Observation image as a float array of shape (channels, height, width) in [0, 1].
py::array_t<float> image_array(const ObservationImage& img) {
    py::array_t<float> out({ObservationImage::kChannels, img.height(), img.width()});
    auto view = out.mutable_unchecked<3>();
    for (std::size_t c = 0; c < ObservationImage::kChannels; ++c) {
        for (std::size_t r = 0; r < img.height(); ++r) {
            for (std::size_t k = 0; k < img.width(); ++k) {
                view(c, r, k) = static_cast<float>(img.value(c, r, k));
            }
        }
    }
    return out;
}

py::dict observation(const DriveEpisode& ep) {
    const AgentState& s = ep.state();
    py::dict d;
    d["image"] = image_array(*s.image);
    d["speed"] = s.speed;
    d["waypoint_distance"] = s.waypoint_distance ? py::cast(*s.waypoint_distance) : py::none();
    return d;
}

py::dict result_dict(const EpisodeResult& r) {
    py::dict d;
    d["episode"] = r.episode;
    d["cumulative_reward"] = r.cumulative_reward;
    d["steps"] = r.steps;
    d["termination"] = std::string(to_string(r.termination));
    d["route"] = r.route_id;
    d["exploration_rate"] = r.exploration_rate;
    d["updates"] = r.updates;
    return d;
}

// Gym-style driving environment over one run configuration.
class Env {
public:
    Env(const std::string& config, std::uint64_t seed, const std::optional<std::string>& map)
        : cfg_(config_from(config, map)),
          scenario_(std::make_shared<const RoadMap>(load_map_file(cfg_.map)), cfg_),
          seed_(seed) {}

    py::dict reset(const std::optional<std::string>& route) {
        Rng rng = episode_rng(seed_, resets_++);
        episode_.emplace(route ? scenario_.route_episode(*route, rng) : scenario_.random_episode(rng));
        return observation(*episode_);
    }

    py::tuple step(std::size_t action) {
        if (!episode_) {
            throw std::logic_error("call reset() before step()");
        }
        const DriveEpisode::Step s = episode_->step(action);
        py::dict info;
        info["termination"] = std::string(to_string(s.termination));
        info["terminal"] = s.terminal;
        info["goal_distance"] = episode_->goal_distance();
        info["cumulative_reward"] = episode_->cumulative_reward();
        return py::make_tuple(observation(*episode_), s.reward, episode_->done(), info);
    }

    std::vector<std::string> routes() const {
        std::vector<std::string> ids;
        for (const auto& r : scenario_.map().routes) {
            ids.push_back(r.id);
        }
        return ids;
    }

    std::string mode() const { return std::string(to_string(cfg_.mode)); }

private:
    RunConfig cfg_;
    Scenario scenario_;
    std::uint64_t seed_;
    std::uint64_t resets_{0};
    std::optional<DriveEpisode> episode_;
};

}  // namespace

PYBIND11_MODULE(_core, m) {
    m.doc() = "Hybrid waypoint-following DQN driving simulator";
    m.attr("ACTION_COUNT") = ActionTable::kSize;

    m.def("action_index", &ActionTable::from_keys, "steer"_a, "accel"_a,
          "Action index for steer and accel keys, each in {-1, 0, 1}.");

    m.def(
        "compute_reward",
        [](bool collision, double speed, double goal_distance, double previous_goal_distance,
           double waypoint_distance) {
            const RewardOutcome out = compute_reward(
                {collision, speed, goal_distance, previous_goal_distance, waypoint_distance}, RewardConfig{});
            return py::make_tuple(out.reward, std::string(to_string(out.termination)));
        },
        "collision"_a, "speed"_a, "goal_distance"_a, "previous_goal_distance"_a, "waypoint_distance"_a,
        "Reward with default weights; returns (reward, termination).");

    m.def(
        "plan_route",
        [](const std::string& map_path, const std::string& route_id, double spacing) {
            const RoadMap map = load_map_file(map_path);
            const Route& r = map.route(route_id);
            const PlannedPath p = plan(map.graph, r.origin, r.destination, spacing);
            py::array_t<double> pts({p.waypoints.size(), std::size_t{2}});
            auto v = pts.mutable_unchecked<2>();
            for (std::size_t i = 0; i < p.waypoints.size(); ++i) {
                v(i, 0) = p.waypoints[i].position.x;
                v(i, 1) = p.waypoints[i].position.y;
            }
            return py::make_tuple(pts, astar(map.graph, r.origin, r.destination).cost);
        },
        "map_path"_a, "route_id"_a, "spacing"_a = 8.0,
        "Waypoints (N x 2 array) and graph cost of a named route.");

    m.def(
        "train",
        [](const std::string& config, const std::string& output_dir, std::optional<std::size_t> episodes,
           std::optional<std::uint64_t> seed, std::optional<std::string> mode, std::optional<std::string> map) {
            RunConfig cfg = config_from(config, map);
            cfg.output_dir = output_dir;
            if (episodes) {
                cfg.episodes = *episodes;
            }
            if (seed) {
                cfg.seed = *seed;
            }
            if (mode) {
                cfg.mode = agent_mode_from_string(*mode);
            }
            cfg.validate();
            py::list results;
            {
                py::gil_scoped_release release;
                Trainer(cfg).run();
            }
            for (const EpisodeResult& r : read_metrics(std::filesystem::path(output_dir) / "metrics.jsonl")) {
                results.append(result_dict(r));
            }
            return results;
        },
        "config"_a, "output_dir"_a, "episodes"_a = py::none(), "seed"_a = py::none(), "mode"_a = py::none(),
        "map"_a = py::none(), "Trains an agent and returns one dict per episode.");

    m.def(
        "learning_curve",
        [](const std::vector<double>& rewards, std::size_t window) { return learning_curve(rewards, window); },
        "rewards"_a, "window"_a = kCurveWindow);

    py::class_<Env>(m, "Env")
        .def(py::init<const std::string&, std::uint64_t, const std::optional<std::string>&>(), "config"_a = "",
             "seed"_a = 1, "map"_a = py::none())
        .def("reset", &Env::reset, "route"_a = py::none())
        .def("step", &Env::step, "action"_a)
        .def_property_readonly("routes", &Env::routes)
        .def_property_readonly("mode", &Env::mode);

    py::register_exception<MapError>(m, "MapError", PyExc_ValueError);
}
