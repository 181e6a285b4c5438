#pragma once

#include <cstdint>
#include <iosfwd>
#include <memory>
#include <optional>
#include <random>
#include <span>
#include <stdexcept>
#include <vector>

#include "roadrl/qnetwork.hpp"
#include "roadrl/world.hpp"

namespace roadrl {

using Rng = std::mt19937_64;

class DivergenceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// What the Q-network sees at one step. End-to-end agents carry no waypoint distance.
struct AgentState {
    std::shared_ptr<const ObservationImage> image;
    double speed{0.0};
    std::optional<double> waypoint_distance;
};

struct Transition {
    AgentState state;
    std::size_t action{0};
    double reward{0.0};
    AgentState next;
    bool terminal{false};
};

/// Bounded FIFO of transitions; the oldest entry is evicted first.
class ReplayBuffer {
public:
    explicit ReplayBuffer(std::size_t capacity);

    void store(Transition t);
    /// `n` uniform draws with replacement. Throws std::length_error if size() < n.
    std::vector<Transition> sample_batch(std::size_t n, Rng& rng) const;

    std::size_t size() const { return items_.size(); }
    std::size_t capacity() const { return capacity_; }
    /// i = 0 is the oldest transition.
    const Transition& at(std::size_t i) const { return items_[(head_ + i) % items_.size()]; }

private:
    std::size_t capacity_;
    std::size_t head_{0};
    std::vector<Transition> items_;
};

struct AgentConfig {
    double gamma{0.95};
    double epsilon_start{1.0};
    double epsilon_end{0.05};
    double epsilon_decay_fraction{0.2};  // of the episode budget
    std::size_t batch_size{32};
    std::size_t target_sync_steps{1000};
    double learning_rate{1e-3};
    double momentum{0.0};
    std::size_t buffer_capacity{20000};
    std::size_t max_updates_per_episode{64};
    std::uint64_t seed{1};

    void validate() const;
};

/// Index of the largest value; the lowest index wins ties.
std::size_t greedy_action(std::span<const double> q);

std::vector<double> q_values(const QNetworkParams& params, const AgentState& state, ForwardTrace* trace = nullptr);

/// Epsilon-greedy. Always consumes exactly one uniform draw from `rng`, plus one more
/// when exploring.
std::size_t select_action(const QNetworkParams& params, const AgentState& state, double exploration_rate, Rng& rng);

/// y = r for terminal transitions, otherwise r + gamma * max_a' Q_target(s', a').
std::vector<double> td_targets(std::span<const Transition> batch, const QNetworkParams& target_params, double gamma);

/// One optimizer step on the mean squared TD error of the taken actions. Returns the
/// loss before the update; throws DivergenceError when it is not finite.
double train_step(QNetworkParams& params, const QNetworkParams& target_params, std::span<const Transition> batch,
                  double gamma, SgdOptimizer& optimizer);
double train_step(QNetworkParams& params, const QNetworkParams& target_params, std::span<const Transition> batch,
                  double gamma, double learning_rate);

void sync_target(const QNetworkParams& params, QNetworkParams& target_params);

/// Online/target networks, replay memory and the exploration schedule.
class DqnAgent {
public:
    DqnAgent(AgentConfig config, NetworkSpec spec);

    const AgentConfig& config() const { return config_; }
    const QNetworkParams& online() const { return online_; }
    QNetworkParams& online() { return online_; }
    const QNetworkParams& target() const { return target_; }
    const ReplayBuffer& buffer() const { return buffer_; }
    Rng& rng() { return rng_; }

    std::uint64_t env_steps() const { return env_steps_; }
    std::uint64_t updates() const { return updates_; }

    /// Linear decay from epsilon_start to epsilon_end over the first
    /// epsilon_decay_fraction * total_episodes episodes.
    double exploration_rate(std::size_t episode, std::size_t total_episodes) const;

    std::size_t act(const AgentState& state, double exploration_rate);
    /// Stores the transition, counts an environment step and syncs the target every
    /// target_sync_steps steps.
    void observe(Transition t);

    struct LearnStats {
        std::size_t updates{0};
        double mean_loss{0.0};
    };
    /// Episode-end learning: min(episode_steps, max_updates_per_episode) gradient steps,
    /// skipped while the buffer holds fewer than batch_size transitions.
    LearnStats learn(std::size_t episode_steps);

    void write(std::ostream& out) const;
    static DqnAgent read(std::istream& in);

private:
    AgentConfig config_;
    QNetworkParams online_;
    QNetworkParams target_;
    SgdOptimizer optimizer_;
    ReplayBuffer buffer_;
    Rng rng_;
    std::uint64_t env_steps_{0};
    std::uint64_t updates_{0};
};

}  // namespace roadrl
