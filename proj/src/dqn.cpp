#include "roadrl/dqn.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <sstream>
#include <string>

#include "roadrl/binary_io.hpp"

namespace roadrl {

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
    if (capacity == 0) {
        throw std::invalid_argument("replay buffer capacity must be positive");
    }
}

void ReplayBuffer::store(Transition t) {
    if (!std::isfinite(t.reward)) {
        throw std::invalid_argument("replay buffer: non-finite reward");
    }
    if (items_.size() < capacity_) {
        items_.push_back(std::move(t));
        return;
    }
    items_[head_] = std::move(t);
    head_ = (head_ + 1) % capacity_;
}

std::vector<Transition> ReplayBuffer::sample_batch(std::size_t n, Rng& rng) const {
    if (items_.size() < n || items_.empty()) {
        throw std::length_error("replay buffer holds " + std::to_string(items_.size()) + " transitions, " +
                                std::to_string(n) + " requested");
    }
    std::uniform_int_distribution<std::size_t> pick(0, items_.size() - 1);
    std::vector<Transition> batch;
    batch.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        batch.push_back(at(pick(rng)));
    }
    return batch;
}

void AgentConfig::validate() const {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("agent config: gamma must lie in [0, 1]");
    }
    if (!(epsilon_start >= 0.0 && epsilon_start <= 1.0 && epsilon_end >= 0.0 && epsilon_end <= 1.0)) {
        throw std::invalid_argument("agent config: exploration rates must lie in [0, 1]");
    }
    if (!(epsilon_decay_fraction >= 0.0 && epsilon_decay_fraction <= 1.0)) {
        throw std::invalid_argument("agent config: epsilon_decay_fraction must lie in [0, 1]");
    }
    if (batch_size == 0 || batch_size > buffer_capacity) {
        throw std::invalid_argument("agent config: batch size must be in [1, buffer capacity]");
    }
    if (target_sync_steps == 0) {
        throw std::invalid_argument("agent config: target_sync_steps must be positive");
    }
    if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate) || !(momentum >= 0.0 && momentum < 1.0)) {
        throw std::invalid_argument("agent config: bad learning rate or momentum");
    }
}

std::size_t greedy_action(std::span<const double> q) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < q.size(); ++i) {
        if (q[i] > q[best]) {
            best = i;
        }
    }
    return best;
}

std::vector<double> q_values(const QNetworkParams& params, const AgentState& state, ForwardTrace* trace) {
    if (!state.image) {
        throw std::invalid_argument("agent state has no image");
    }
    return forward_q(params, *state.image, state.speed, state.waypoint_distance, trace);
}

std::size_t select_action(const QNetworkParams& params, const AgentState& state, double exploration_rate, Rng& rng) {
    if (!(exploration_rate >= 0.0 && exploration_rate <= 1.0)) {
        throw std::invalid_argument("exploration rate must lie in [0, 1]");
    }
    std::uniform_real_distribution<double> coin(0.0, 1.0);
    if (coin(rng) < exploration_rate) {
        std::uniform_int_distribution<std::size_t> pick(0, params.spec().outputs - 1);
        return pick(rng);
    }
    return greedy_action(q_values(params, state));
}

std::vector<double> td_targets(std::span<const Transition> batch, const QNetworkParams& target_params, double gamma) {
    if (!(gamma >= 0.0 && gamma <= 1.0)) {
        throw std::invalid_argument("td_targets: gamma must lie in [0, 1]");
    }
    std::vector<double> y;
    y.reserve(batch.size());
    for (const Transition& t : batch) {
        if (t.terminal || gamma == 0.0) {
            y.push_back(t.reward);
            continue;
        }
        const auto q_next = q_values(target_params, t.next);
        y.push_back(t.reward + gamma * *std::max_element(q_next.begin(), q_next.end()));
    }
    return y;
}

double train_step(QNetworkParams& params, const QNetworkParams& target_params, std::span<const Transition> batch,
                  double gamma, SgdOptimizer& optimizer) {
    if (batch.empty()) {
        throw std::invalid_argument("train_step: empty batch");
    }
    const std::vector<double> y = td_targets(batch, target_params, gamma);
    Gradients grads = zero_gradients(params);
    ForwardTrace trace;
    std::vector<double> grad_q(params.spec().outputs, 0.0);
    const double n = static_cast<double>(batch.size());
    double loss = 0.0;
    for (std::size_t i = 0; i < batch.size(); ++i) {
        const Transition& t = batch[i];
        if (t.action >= grad_q.size()) {
            throw std::invalid_argument("train_step: action index out of range");
        }
        const auto q = q_values(params, t.state, &trace);
        const double err = q[t.action] - y[i];
        loss += err * err;
        std::fill(grad_q.begin(), grad_q.end(), 0.0);
        grad_q[t.action] = 2.0 * err / n;
        backward(params, trace, grad_q, grads);
    }
    loss /= n;
    if (!std::isfinite(loss)) {
        throw DivergenceError("TD loss is not finite; training diverged");
    }
    optimizer.step(params, grads);
    return loss;
}

double train_step(QNetworkParams& params, const QNetworkParams& target_params, std::span<const Transition> batch,
                  double gamma, double learning_rate) {
    SgdOptimizer sgd(learning_rate, 0.0);
    return train_step(params, target_params, batch, gamma, sgd);
}

void sync_target(const QNetworkParams& params, QNetworkParams& target_params) {
    if (!target_params.tensors().empty() && !(params.spec() == target_params.spec())) {
        throw ShapeError("sync_target: network shapes differ");
    }
    target_params = params;
}

DqnAgent::DqnAgent(AgentConfig config, NetworkSpec spec)
    : config_(config),
      online_(QNetworkParams::initialized(std::move(spec), config.seed)),
      target_(online_),
      optimizer_(config.learning_rate, config.momentum),
      buffer_(config.buffer_capacity),
      rng_(config.seed ^ 0x9e3779b97f4a7c15ULL) {
    config_.validate();
}

double DqnAgent::exploration_rate(std::size_t episode, std::size_t total_episodes) const {
    const double horizon = config_.epsilon_decay_fraction * static_cast<double>(total_episodes);
    if (horizon <= 0.0 || static_cast<double>(episode) >= horizon) {
        return config_.epsilon_end;
    }
    const double frac = static_cast<double>(episode) / horizon;
    return config_.epsilon_start + (config_.epsilon_end - config_.epsilon_start) * frac;
}

std::size_t DqnAgent::act(const AgentState& state, double exploration_rate) {
    return select_action(online_, state, exploration_rate, rng_);
}

void DqnAgent::observe(Transition t) {
    buffer_.store(std::move(t));
    ++env_steps_;
    if (env_steps_ % config_.target_sync_steps == 0) {
        sync_target(online_, target_);
    }
}

DqnAgent::LearnStats DqnAgent::learn(std::size_t episode_steps) {
    LearnStats stats;
    if (buffer_.size() < config_.batch_size) {
        return stats;
    }
    const std::size_t k = std::min(episode_steps, config_.max_updates_per_episode);
    double total = 0.0;
    for (std::size_t i = 0; i < k; ++i) {
        const auto batch = buffer_.sample_batch(config_.batch_size, rng_);
        total += train_step(online_, target_, batch, config_.gamma, optimizer_);
        ++updates_;
    }
    stats.updates = k;
    stats.mean_loss = k > 0 ? total / static_cast<double>(k) : 0.0;
    return stats;
}

namespace {

constexpr std::array<char, 8> kAgentMagic{'R', 'L', 'A', 'G', 'E', 'N', 'T', '\1'};
constexpr std::uint32_t kAgentFormatVersion = 1;

void write_state(BinaryWriter& w, const AgentState& s, const std::map<const ObservationImage*, std::uint64_t>& ids) {
    w.put<std::uint64_t>(ids.at(s.image.get()));
    w.put<double>(s.speed);
    w.put<std::uint8_t>(s.waypoint_distance ? 1 : 0);
    w.put<double>(s.waypoint_distance.value_or(0.0));
}

AgentState read_state(BinaryReader& r, const std::vector<std::shared_ptr<const ObservationImage>>& images) {
    AgentState s;
    const auto id = r.get<std::uint64_t>();
    if (id >= images.size()) {
        throw FormatError("transition references a missing image");
    }
    s.image = images[id];
    s.speed = r.get<double>();
    const bool has_d = r.get<std::uint8_t>() != 0;
    const double d = r.get<double>();
    if (has_d) {
        s.waypoint_distance = d;
    }
    return s;
}

}  // namespace

void DqnAgent::write(std::ostream& out) const {
    BinaryWriter w(out);
    w.put_bytes(kAgentMagic);
    w.put<std::uint32_t>(kAgentFormatVersion);
    const AgentConfig& c = config_;
    w.put<double>(c.gamma);
    w.put<double>(c.epsilon_start);
    w.put<double>(c.epsilon_end);
    w.put<double>(c.epsilon_decay_fraction);
    w.put<std::uint64_t>(c.batch_size);
    w.put<std::uint64_t>(c.target_sync_steps);
    w.put<double>(c.learning_rate);
    w.put<double>(c.momentum);
    w.put<std::uint64_t>(c.buffer_capacity);
    w.put<std::uint64_t>(c.max_updates_per_episode);
    w.put<std::uint64_t>(c.seed);
    w.put<std::uint64_t>(env_steps_);
    w.put<std::uint64_t>(updates_);
    std::ostringstream rng_text;
    rng_text << rng_;
    w.put_string(rng_text.str());

    write_params(out, online_);
    write_params(out, target_);
    w.put<std::uint64_t>(optimizer_.velocity().size());
    for (const Tensor& v : optimizer_.velocity()) {
        w.put_doubles(v.values());
    }

    // Replay memory, oldest first, with images shared between consecutive states stored once.
    std::map<const ObservationImage*, std::uint64_t> ids;
    std::vector<const ObservationImage*> order;
    auto note = [&](const AgentState& s) {
        if (!s.image) {
            throw std::logic_error("cannot checkpoint a transition without an image");
        }
        if (ids.emplace(s.image.get(), order.size()).second) {
            order.push_back(s.image.get());
        }
    };
    for (std::size_t i = 0; i < buffer_.size(); ++i) {
        note(buffer_.at(i).state);
        note(buffer_.at(i).next);
    }
    w.put<std::uint64_t>(order.size());
    for (const ObservationImage* img : order) {
        w.put<std::uint64_t>(img->height());
        w.put<std::uint64_t>(img->width());
        w.put_bytes({reinterpret_cast<const char*>(img->levels().data()), img->levels().size()});
    }
    w.put<std::uint64_t>(buffer_.size());
    for (std::size_t i = 0; i < buffer_.size(); ++i) {
        const Transition& t = buffer_.at(i);
        write_state(w, t.state, ids);
        w.put<std::uint64_t>(t.action);
        w.put<double>(t.reward);
        write_state(w, t.next, ids);
        w.put<std::uint8_t>(t.terminal ? 1 : 0);
    }
    w.check();
}

DqnAgent DqnAgent::read(std::istream& in) {
    BinaryReader r(in);
    std::array<char, 8> magic{};
    r.read_exact(magic.data(), magic.size());
    if (magic != kAgentMagic) {
        throw FormatError("not an agent checkpoint (bad magic)");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kAgentFormatVersion) {
        throw FormatError("unsupported agent checkpoint version " + std::to_string(version));
    }
    AgentConfig c;
    c.gamma = r.get<double>();
    c.epsilon_start = r.get<double>();
    c.epsilon_end = r.get<double>();
    c.epsilon_decay_fraction = r.get<double>();
    c.batch_size = r.get<std::uint64_t>();
    c.target_sync_steps = r.get<std::uint64_t>();
    c.learning_rate = r.get<double>();
    c.momentum = r.get<double>();
    c.buffer_capacity = r.get<std::uint64_t>();
    c.max_updates_per_episode = r.get<std::uint64_t>();
    c.seed = r.get<std::uint64_t>();
    try {
        c.validate();
    } catch (const std::invalid_argument& e) {
        throw FormatError(std::string("agent checkpoint holds an invalid config: ") + e.what());
    }
    const auto env_steps = r.get<std::uint64_t>();
    const auto updates = r.get<std::uint64_t>();
    const std::string rng_text = r.get_string(1u << 20);

    QNetworkParams online = read_params(in);
    QNetworkParams target = read_params(in);
    DqnAgent agent(c, online.spec());
    agent.online_ = std::move(online);
    agent.target_ = std::move(target);
    agent.env_steps_ = env_steps;
    agent.updates_ = updates;
    std::istringstream rng_in(rng_text);
    rng_in >> agent.rng_;
    if (!rng_in) {
        throw FormatError("corrupt generator state in agent checkpoint");
    }

    const auto velocity_count = r.get<std::uint64_t>();
    if (velocity_count != 0) {
        if (velocity_count != agent.online_.tensors().size()) {
            throw FormatError("optimizer state does not match the network");
        }
        agent.optimizer_.velocity() = zero_gradients(agent.online_);
        for (Tensor& v : agent.optimizer_.velocity()) {
            r.get_doubles(v.values());
        }
    }

    const auto image_count = r.get<std::uint64_t>();
    std::vector<std::shared_ptr<const ObservationImage>> images;
    images.reserve(image_count);
    for (std::uint64_t i = 0; i < image_count; ++i) {
        const auto h = r.get<std::uint64_t>();
        const auto w = r.get<std::uint64_t>();
        if (h > 4096 || w > 4096) {
            throw FormatError("implausible image size in agent checkpoint");
        }
        auto img = std::make_shared<ObservationImage>(h, w);
        r.read_exact(reinterpret_cast<char*>(img->levels().data()), img->levels().size());
        images.push_back(std::move(img));
    }
    const auto count = r.get<std::uint64_t>();
    if (count > c.buffer_capacity) {
        throw FormatError("replay memory larger than its capacity");
    }
    for (std::uint64_t i = 0; i < count; ++i) {
        Transition t;
        t.state = read_state(r, images);
        t.action = r.get<std::uint64_t>();
        t.reward = r.get<double>();
        t.next = read_state(r, images);
        t.terminal = r.get<std::uint8_t>() != 0;
        agent.buffer_.store(std::move(t));
    }
    return agent;
}

}  // namespace roadrl
