#include "roadrl/live_service.hpp"

#include <chrono>
#include <fstream>

#include "httplib.h"

namespace roadrl {

using json = nlohmann::ordered_json;

std::string_view to_string(SessionMode mode) { return mode == SessionMode::human ? "human" : "agent"; }

SessionMode session_mode_from_string(std::string_view s) {
    if (s == "human" || s == "human-drive") {
        return SessionMode::human;
    }
    if (s == "agent" || s == "agent-drive") {
        return SessionMode::agent;
    }
    throw ServiceError(400, "unknown session mode '" + std::string(s) + "'");
}

// ---------------------------------------------------------------- Leaderboard

namespace {

json entry_json(const ScoreEntry& e) {
    return json{{"participant", e.participant}, {"route", e.route_id},
                        {"score", e.score},             {"timestamp_ms", e.timestamp_ms},
                        {"session", e.session_id},      {"mode", std::string(to_string(e.mode))}};
}

std::int64_t now_ms() {
    return std::chrono::duration_cast<std::chrono::milliseconds>(std::chrono::system_clock::now().time_since_epoch())
        .count();
}

}  // namespace

Leaderboard::Leaderboard(std::filesystem::path path) : path_(std::move(path)) {
    if (path_.empty() || !std::filesystem::exists(path_)) {
        return;
    }
    std::ifstream in(path_);
    std::string line;
    while (std::getline(in, line)) {
        if (line.empty()) {
            continue;
        }
        const json j = json::parse(line);
        ScoreEntry e;
        e.participant = j.value("participant", std::string{});
        e.route_id = j.at("route").get<std::string>();
        e.score = j.at("score").get<double>();
        e.timestamp_ms = j.value("timestamp_ms", std::int64_t{0});
        e.session_id = j.value("session", std::string{});
        e.mode = session_mode_from_string(j.value("mode", std::string{"human"}));
        entries_.push_back(std::move(e));
    }
}

void Leaderboard::append(const ScoreEntry& entry) {
    if (!path_.empty()) {
        if (path_.has_parent_path()) {
            std::filesystem::create_directories(path_.parent_path());
        }
        std::ofstream out(path_, std::ios::app);
        out << entry_json(entry).dump() << '\n';
        if (!out) {
            throw std::runtime_error("cannot append to leaderboard " + path_.string());
        }
    }
    entries_.push_back(entry);
}

std::vector<RouteScore> Leaderboard::aggregates(std::optional<SessionMode> mode) const {
    std::map<std::string, RouteScore> by_route;
    for (const ScoreEntry& e : entries_) {
        if (mode && e.mode != *mode) {
            continue;
        }
        RouteScore& r = by_route[e.route_id];
        r.route_id = e.route_id;
        ++r.count;
        r.mean += e.score;
    }
    std::vector<RouteScore> out;
    for (auto& [id, r] : by_route) {
        r.mean /= static_cast<double>(r.count);
        out.push_back(r);
    }
    return out;
}

// ---------------------------------------------------------------- frames

json make_frame(const DriveEpisode& episode, std::uint64_t seq, const std::string& session_id) {
    const WorldState& w = episode.world();
    json f;
    f["version"] = kMessageVersion;
    f["session"] = session_id;
    f["seq"] = seq;
    f["tick"] = w.tick;
    f["ego"] = {{"x", w.ego.position.x}, {"y", w.ego.position.y}, {"heading", w.ego.heading}, {"speed", w.ego.speed}};
    json obstacles = json::array();
    for (const Obstacle& ob : w.obstacles) {
        const OrientedRect& r = ob.footprint;
        obstacles.push_back(json{{"x", r.center.x},
                                         {"y", r.center.y},
                                         {"heading", r.heading},
                                         {"length", r.length},
                                         {"width", r.width}});
    }
    f["obstacles"] = std::move(obstacles);
    json waypoints = json::array();
    for (const Waypoint& wp : episode.path().waypoints) {
        waypoints.push_back(json{{"x", wp.position.x}, {"y", wp.position.y}});
    }
    f["waypoints"] = std::move(waypoints);
    f["destination"] = {{"x", episode.path().end().x}, {"y", episode.path().end().y}};
    f["route"] = episode.route_id();
    if (episode.done()) {
        f["status"] = "ended";
        f["termination"] = std::string(to_string(episode.termination()));
        f["score"] = episode.cumulative_reward();
    } else {
        f["status"] = "running";
    }
    return f;
}

// ---------------------------------------------------------------- SessionManager

SessionManager::SessionManager(std::shared_ptr<const RoadMap> map, ServiceConfig config)
    : map_(std::move(map)),
      config_(std::move(config)),
      scenario_(map_, config_.run),
      leaderboard_(config_.leaderboard_path) {
    if (config_.max_sessions == 0) {
        throw std::invalid_argument("max_sessions must be positive");
    }
}

SessionManager::Session& SessionManager::find(const std::string& id) {
    const auto it = sessions_.find(id);
    if (it == sessions_.end()) {
        throw ServiceError(404, "unknown session '" + id + "'");
    }
    return *it->second;
}

const SessionManager::Session& SessionManager::find(const std::string& id) const {
    return const_cast<SessionManager*>(this)->find(id);
}

std::size_t SessionManager::running_sessions() const {
    std::lock_guard lock(mutex_);
    std::size_t n = 0;
    for (const auto& [id, s] : sessions_) {
        n += s->episode.done() ? 0 : 1;
    }
    return n;
}

std::string SessionManager::create_session(const SessionRequest& request) {
    if (request.route != "random") {
        try {
            map_->route(request.route);
        } catch (const MapError&) {
            throw ServiceError(404, "unknown route '" + request.route + "'");
        }
    }
    if (request.mode == SessionMode::agent && !config_.policy) {
        throw ServiceError(400, "agent-drive sessions need a policy checkpoint");
    }
    AgentMode mode = config_.run.mode;
    if (request.mode == SessionMode::agent) {
        mode = config_.policy->spec().scalar_inputs == 2 ? AgentMode::hybrid : AgentMode::end_to_end;
    }

    // Session seed s reproduces episode 0 of a training run seeded with s.
    Rng rng = episode_rng(request.seed, 0);
    std::optional<DriveEpisode> episode;
    if (request.route == "random") {
        episode.emplace(scenario_.random_episode(rng, mode));
    } else {
        episode.emplace(scenario_.route_episode(request.route, rng, mode));
    }

    std::lock_guard lock(mutex_);
    std::size_t running = 0;
    for (const auto& [id, s] : sessions_) {
        running += s->episode.done() ? 0 : 1;
    }
    if (running >= config_.max_sessions) {
        throw ServiceError(503, "session limit of " + std::to_string(config_.max_sessions) + " reached");
    }
    std::string id = "s" + std::to_string(next_id_++);
    auto session = std::unique_ptr<Session>(new Session{id, request.mode,
                                                        request.participant.empty() ? "anonymous" : request.participant,
                                                        std::move(*episode), ActionTable::index_of(1, 1), std::nullopt, {}, 0, false});
    push_frame(*session);
    sessions_.emplace(id, std::move(session));
    order_.push_back(id);
    evict_ended();
    return id;
}

void SessionManager::evict_ended() {
    const std::size_t keep = 4 * config_.max_sessions;
    for (auto it = order_.begin(); sessions_.size() > keep && it != order_.end();) {
        const auto s = sessions_.find(*it);
        if (s != sessions_.end() && s->second->episode.done()) {
            sessions_.erase(s);
            it = order_.erase(it);
        } else {
            ++it;
        }
    }
}

void SessionManager::submit_control(const std::string& id, int steer, int accel) {
    std::size_t action = 0;
    try {
        action = ActionTable::from_keys(steer, accel);
    } catch (const ContractViolation& e) {
        throw ServiceError(400, e.what());
    }
    std::lock_guard lock(mutex_);
    Session& s = find(id);
    if (s.mode == SessionMode::agent) {
        throw ServiceError(409, "session '" + id + "' is driven by the agent");
    }
    if (s.episode.done()) {
        throw ServiceError(409, "session '" + id + "' has ended");
    }
    s.pending = action;
}

void SessionManager::push_frame(Session& s) {
    s.history.push_back(make_frame(s.episode, s.next_seq++, s.id));
    while (s.history.size() > config_.frame_history) {
        s.history.pop_front();
    }
}

void SessionManager::advance(Session& s) {
    if (s.episode.done()) {
        return;
    }
    std::size_t action = s.held_action;
    if (s.mode == SessionMode::agent) {
        action = greedy_action(q_values(*config_.policy, s.episode.state()));
    } else if (s.pending) {
        action = *s.pending;
        s.pending.reset();
    }
    s.held_action = action;
    s.episode.step(action);
    push_frame(s);
}

void SessionManager::tick(const std::string& id) {
    {
        std::lock_guard lock(mutex_);
        advance(find(id));
    }
    frames_cv_.notify_all();
}

void SessionManager::tick_all() {
    {
        std::lock_guard lock(mutex_);
        for (auto& [id, s] : sessions_) {
            advance(*s);
        }
    }
    frames_cv_.notify_all();
}

std::vector<json> SessionManager::frames(const std::string& id, std::int64_t after) const {
    std::lock_guard lock(mutex_);
    std::vector<json> out;
    for (const json& f : find(id).history) {
        if (static_cast<std::int64_t>(f["seq"].get<std::uint64_t>()) > after) {
            out.push_back(f);
        }
    }
    return out;
}

std::vector<json> SessionManager::wait_frames(const std::string& id, std::int64_t after,
                                              std::chrono::milliseconds timeout) const {
    std::unique_lock lock(mutex_);
    const auto ready = [&] {
        const Session& s = find(id);
        return static_cast<std::int64_t>(s.next_seq) - 1 > after || s.episode.done();
    };
    frames_cv_.wait_for(lock, timeout, ready);
    std::vector<json> out;
    for (const json& f : find(id).history) {
        if (static_cast<std::int64_t>(f["seq"].get<std::uint64_t>()) > after) {
            out.push_back(f);
        }
    }
    return out;
}

bool SessionManager::ended(const std::string& id) const {
    std::lock_guard lock(mutex_);
    return find(id).episode.done();
}

double SessionManager::score(const std::string& id) const {
    std::lock_guard lock(mutex_);
    const Session& s = find(id);
    if (!s.episode.done()) {
        throw ServiceError(409, "score of session '" + id + "' is hidden until it ends");
    }
    return s.episode.cumulative_reward();
}

ScoreEntry SessionManager::record_score(const std::string& id) {
    std::lock_guard lock(mutex_);
    Session& s = find(id);
    if (!s.episode.done()) {
        throw ServiceError(409, "session '" + id + "' is still running");
    }
    if (s.recorded) {
        throw ServiceError(409, "score of session '" + id + "' was already recorded");
    }
    ScoreEntry e;
    e.participant = s.participant;
    e.route_id = s.episode.route_id();
    e.score = s.episode.cumulative_reward();
    e.timestamp_ms = now_ms();
    e.session_id = s.id;
    e.mode = s.mode;
    leaderboard_.append(e);
    s.recorded = true;
    return e;
}

std::vector<RouteScore> SessionManager::scores() const {
    std::lock_guard lock(mutex_);
    return leaderboard_.aggregates();
}

json SessionManager::routes_json() const {
    json routes = json::array();
    const auto& nodes = map_->graph.nodes();
    for (const Route& r : map_->routes) {
        const Vec2 o = nodes[r.origin].position;
        const Vec2 d = nodes[r.destination].position;
        routes.push_back(json{{"id", r.id},
                                      {"name", r.name},
                                      {"origin", {{"x", o.x}, {"y", o.y}}},
                                      {"destination", {{"x", d.x}, {"y", d.y}}}});
    }
    return json{{"version", kMessageVersion}, {"routes", std::move(routes)}};
}

json SessionManager::scores_json() const {
    std::lock_guard lock(mutex_);
    json rows = json::array();
    for (const RouteScore& r : leaderboard_.aggregates()) {
        std::string name = r.route_id;
        for (const Route& route : map_->routes) {
            if (route.id == r.route_id) {
                name = route.name;
            }
        }
        rows.push_back(json{{"route", r.route_id}, {"name", name}, {"count", r.count}, {"mean", r.mean}});
    }
    return json{
        {"version", kMessageVersion}, {"routes", std::move(rows)}, {"entries", leaderboard_.entries().size()}};
}

json SessionManager::curves_json() const {
    json runs = json::array();
    for (const std::string& dir : config_.metrics_runs) {
        json run{{"name", std::filesystem::path(dir).filename().string()}};
        try {
            std::ifstream cfg(std::filesystem::path(dir) / "run.json");
            if (cfg) {
                run["mode"] = json::parse(cfg).value("mode", std::string{});
            }
            std::vector<double> rewards;
            for (const EpisodeResult& r : read_metrics(std::filesystem::path(dir) / "metrics.jsonl")) {
                rewards.push_back(r.cumulative_reward);
            }
            const std::size_t window = std::min(kCurveWindow, rewards.size());
            run["episodes"] = rewards.size();
            run["window"] = window;
            run["curve"] = rewards.empty() ? std::vector<double>{} : learning_curve(rewards, window);
        } catch (const std::exception& e) {
            run["error"] = e.what();
        }
        runs.push_back(std::move(run));
    }
    return json{{"version", kMessageVersion}, {"runs", std::move(runs)}};
}

// ---------------------------------------------------------------- HTTP

namespace {

void reply(httplib::Response& res, int status, const json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
}

void reply_error(httplib::Response& res, int status, const std::string& message) {
    reply(res, status, json{{"version", kMessageVersion}, {"error", message}});
}

json parse_body(const httplib::Request& req) {
    if (req.body.empty()) {
        return json::object();
    }
    json j = json::parse(req.body, nullptr, false);
    if (j.is_discarded() || !j.is_object()) {
        throw ServiceError(400, "request body must be a JSON object");
    }
    return j;
}

template <typename Handler>
httplib::Server::Handler guarded(Handler h) {
    return [h](const httplib::Request& req, httplib::Response& res) {
        try {
            h(req, res);
        } catch (const ServiceError& e) {
            reply_error(res, e.status(), e.what());
        } catch (const json::exception& e) {
            reply_error(res, 400, e.what());
        } catch (const std::exception& e) {
            reply_error(res, 500, e.what());
        }
    };
}

int key_state(const json& body, const char* key) {
    const auto it = body.find(key);
    if (it == body.end()) {
        return 0;
    }
    if (!it->is_number_integer()) {
        throw ServiceError(400, std::string("'") + key + "' must be -1, 0 or 1");
    }
    return it->get<int>();
}

}  // namespace

LiveServer::LiveServer(std::shared_ptr<SessionManager> manager, ServerOptions options)
    : manager_(std::move(manager)), options_(std::move(options)), server_(std::make_unique<httplib::Server>()) {
    if (!manager_) {
        throw std::invalid_argument("live server needs a session manager");
    }
    if (!(options_.tick_hz > 0.0)) {
        throw std::invalid_argument("tick rate must be positive");
    }
    install_routes();
}

LiveServer::~LiveServer() { stop(); }

void LiveServer::install_routes() {
    httplib::Server& srv = *server_;
    SessionManager& m = *manager_;

    srv.Get("/v1/routes", guarded([&m](const httplib::Request&, httplib::Response& res) {
                reply(res, 200, m.routes_json());
            }));

    srv.Post("/v1/sessions", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                 const json body = parse_body(req);
                 SessionRequest r;
                 r.mode = session_mode_from_string(body.value("mode", std::string{"human"}));
                 r.route = body.value("route", std::string{"random"});
                 r.seed = body.value("seed", std::uint64_t{0});
                 r.participant = body.value("participant", std::string{});
                 const std::string id = m.create_session(r);
                 reply(res, 201,
                       json{{"version", kMessageVersion},
                                    {"session", id},
                                    {"mode", std::string(to_string(r.mode))},
                                    {"route", r.route},
                                    {"seed", r.seed}});
             }));

    srv.Post(R"(/v1/sessions/([^/]+)/control)",
             guarded([&m](const httplib::Request& req, httplib::Response& res) {
                 const json body = parse_body(req);
                 m.submit_control(req.matches[1], key_state(body, "steer"), key_state(body, "accel"));
                 reply(res, 200, json{{"version", kMessageVersion}, {"accepted", true}});
             }));

    srv.Get(R"(/v1/sessions/([^/]+)/frames)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                std::int64_t after = -1;
                if (req.has_param("after")) {
                    after = std::stoll(req.get_param_value("after"));
                }
                json frames = json::array();
                for (json& f : m.frames(req.matches[1], after)) {
                    frames.push_back(std::move(f));
                }
                reply(res, 200, json{{"version", kMessageVersion}, {"frames", std::move(frames)}});
            }));

    srv.Get(R"(/v1/sessions/([^/]+)/stream)", guarded([this, &m](const httplib::Request& req, httplib::Response& res) {
                const std::string id = req.matches[1];
                m.frames(id, 0);  // 404 before streaming starts
                auto last = std::make_shared<std::int64_t>(-1);
                res.set_chunked_content_provider(
                    "application/x-ndjson", [this, &m, id, last](std::size_t, httplib::DataSink& sink) {
                        if (!running_) {
                            sink.done();
                            return true;
                        }
                        const auto frames = m.wait_frames(id, *last, std::chrono::milliseconds(500));
                        for (const json& f : frames) {
                            const std::string line = f.dump() + "\n";
                            if (!sink.write(line.data(), line.size())) {
                                return false;
                            }
                            *last = f["seq"].get<std::int64_t>();
                        }
                        if (m.ended(id) && m.frames(id, *last).empty()) {
                            sink.done();
                        }
                        return true;
                    });
            }));

    srv.Post(R"(/v1/sessions/([^/]+)/score)", guarded([&m](const httplib::Request& req, httplib::Response& res) {
                 const ScoreEntry e = m.record_score(req.matches[1]);
                 reply(res, 201, json{{"version", kMessageVersion}, {"entry", entry_json(e)}});
             }));

    srv.Get("/v1/scores", guarded([&m](const httplib::Request&, httplib::Response& res) {
                reply(res, 200, m.scores_json());
            }));

    srv.Get("/v1/curves", guarded([&m](const httplib::Request&, httplib::Response& res) {
                reply(res, 200, m.curves_json());
            }));
}

int LiveServer::start() {
    if (running_) {
        throw std::logic_error("server already started");
    }
    int port = options_.port;
    if (port == 0) {
        port = server_->bind_to_any_port(options_.host);
    } else if (!server_->bind_to_port(options_.host, port)) {
        port = -1;
    }
    if (port < 0) {
        throw std::runtime_error("cannot bind " + options_.host + ":" + std::to_string(options_.port));
    }
    running_ = true;
    listen_thread_ = std::thread([this] { server_->listen_after_bind(); });
    if (options_.autotick) {
        tick_thread_ = std::thread([this] { ticker(); });
    }
    server_->wait_until_ready();
    return port;
}

void LiveServer::ticker() {
    const auto period = std::chrono::duration_cast<std::chrono::steady_clock::duration>(
        std::chrono::duration<double>(1.0 / options_.tick_hz));
    auto next = std::chrono::steady_clock::now() + period;
    while (running_) {
        std::this_thread::sleep_until(next);
        if (!running_) {
            break;
        }
        manager_->tick_all();
        next += period;
    }
}

void LiveServer::stop() {
    if (!running_.exchange(false)) {
        return;
    }
    server_->stop();
    if (listen_thread_.joinable()) {
        listen_thread_.join();
    }
    if (tick_thread_.joinable()) {
        tick_thread_.join();
    }
}

}  // namespace roadrl
