#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <filesystem>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <stdexcept>
#include <string>
#include <thread>
#include <vector>

#include "json.hpp"

#include "roadrl/config.hpp"
#include "roadrl/harness.hpp"
#include "roadrl/qnetwork.hpp"

namespace httplib {
class Server;
}

namespace roadrl {

inline constexpr int kMessageVersion = 1;

enum class SessionMode { human, agent };

std::string_view to_string(SessionMode mode);
/// Accepts "human", "human-drive", "agent" and "agent-drive".
SessionMode session_mode_from_string(std::string_view s);

/// Failure reported to an endpoint client; `status` is the HTTP status to answer with.
class ServiceError : public std::runtime_error {
public:
    ServiceError(int status, const std::string& what) : std::runtime_error(what), status_(status) {}
    int status() const { return status_; }

private:
    int status_;
};

struct SessionRequest {
    SessionMode mode{SessionMode::human};
    std::string route{"random"};  // a route id or "random"
    std::uint64_t seed{0};
    std::string participant;
};

struct ScoreEntry {
    std::string participant;
    std::string route_id;
    double score{0.0};
    std::int64_t timestamp_ms{0};  // Unix time
    std::string session_id;
    SessionMode mode{SessionMode::human};
};

struct RouteScore {
    std::string route_id;
    std::size_t count{0};
    double mean{0.0};
};

/// Append-only score log, one JSON record per line. An empty path keeps it in memory.
class Leaderboard {
public:
    explicit Leaderboard(std::filesystem::path path = {});

    void append(const ScoreEntry& entry);
    const std::vector<ScoreEntry>& entries() const { return entries_; }
    /// Per-route arithmetic means, ordered by route id.
    std::vector<RouteScore> aggregates(std::optional<SessionMode> mode = SessionMode::human) const;

private:
    std::filesystem::path path_;
    std::vector<ScoreEntry> entries_;
};

struct ServiceConfig {
    RunConfig run;
    std::filesystem::path leaderboard_path;
    std::size_t max_sessions{64};      // concurrently running sessions
    std::size_t frame_history{1024};   // frames kept per session for polling clients
    std::shared_ptr<const QNetworkParams> policy;  // required for agent-drive sessions
    std::vector<std::string> metrics_runs;         // training output dirs served as curves
};

/// Owns every live session. Each session has its own episode (world, path, reward
/// accumulator); controls are latched and consumed at tick boundaries. Thread-safe.
class SessionManager {
public:
    SessionManager(std::shared_ptr<const RoadMap> map, ServiceConfig config);

    const ServiceConfig& config() const { return config_; }

    /// Throws ServiceError 404 for an unknown route, 400 for an agent session without a
    /// policy, 503 when the running-session limit is reached.
    std::string create_session(const SessionRequest& request);
    /// Key states in {-1, 0, 1}. Throws ServiceError 409 on ended or agent-drive sessions.
    void submit_control(const std::string& id, int steer, int accel);
    /// Advances one session by one simulation tick (no-op once ended).
    void tick(const std::string& id);
    void tick_all();

    /// Frames with seq > after, oldest first. Throws ServiceError 404 for unknown sessions.
    std::vector<nlohmann::ordered_json> frames(const std::string& id, std::int64_t after = -1) const;
    /// Blocks until a frame newer than `after` exists, the session ends, or the timeout passes.
    std::vector<nlohmann::ordered_json> wait_frames(const std::string& id, std::int64_t after,
                                            std::chrono::milliseconds timeout) const;
    bool ended(const std::string& id) const;
    double score(const std::string& id) const;  // ServiceError 409 while running

    /// Throws ServiceError 409 while running or when already recorded.
    ScoreEntry record_score(const std::string& id);
    std::vector<RouteScore> scores() const;

    nlohmann::ordered_json routes_json() const;
    nlohmann::ordered_json scores_json() const;
    nlohmann::ordered_json curves_json() const;

    std::size_t running_sessions() const;

private:
    struct Session {
        std::string id;
        SessionMode mode;
        std::string participant;
        DriveEpisode episode;
        std::size_t held_action{ActionTable::index_of(1, 1)};
        std::optional<std::size_t> pending;
        std::deque<nlohmann::ordered_json> history;
        std::uint64_t next_seq{0};
        bool recorded{false};
    };

    Session& find(const std::string& id);
    const Session& find(const std::string& id) const;
    void advance(Session& s);
    void push_frame(Session& s);
    void evict_ended();

    std::shared_ptr<const RoadMap> map_;
    ServiceConfig config_;
    Scenario scenario_;
    mutable std::mutex mutex_;
    mutable std::condition_variable frames_cv_;
    std::map<std::string, std::unique_ptr<Session>> sessions_;
    std::deque<std::string> order_;
    std::uint64_t next_id_{1};
    Leaderboard leaderboard_;
};

/// Frame record for a session snapshot. The score appears only once the episode ended.
nlohmann::ordered_json make_frame(const DriveEpisode& episode, std::uint64_t seq, const std::string& session_id);

struct ServerOptions {
    std::string host{"127.0.0.1"};
    int port{8080};
    double tick_hz{10.0};
    bool autotick{true};
};

/// JSON-over-HTTP endpoint in front of a SessionManager, plus the fixed-rate ticker.
///
///   GET  /v1/routes
///   POST /v1/sessions                 {mode, route, seed, participant}
///   POST /v1/sessions/{id}/control    {steer, accel}
///   GET  /v1/sessions/{id}/frames?after=N
///   GET  /v1/sessions/{id}/stream     newline-delimited frames until the session ends
///   POST /v1/sessions/{id}/score
///   GET  /v1/scores
///   GET  /v1/curves
class LiveServer {
public:
    LiveServer(std::shared_ptr<SessionManager> manager, ServerOptions options);
    ~LiveServer();
    LiveServer(const LiveServer&) = delete;
    LiveServer& operator=(const LiveServer&) = delete;

    /// Binds and starts serving in background threads; returns the bound port.
    int start();
    void stop();
    bool running() const { return running_; }
    SessionManager& manager() { return *manager_; }

private:
    void install_routes();
    void ticker();

    std::shared_ptr<SessionManager> manager_;
    ServerOptions options_;
    std::unique_ptr<httplib::Server> server_;
    std::thread listen_thread_;
    std::thread tick_thread_;
    std::atomic<bool> running_{false};
};

}  // namespace roadrl
