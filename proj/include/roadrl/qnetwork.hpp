#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "roadrl/tensor.hpp"
#include "roadrl/world.hpp"

namespace roadrl {

struct ConvLayerSpec {
    std::size_t filters{64};
    std::size_t kernel{3};
    std::size_t stride{1};
    std::size_t pool{2};

    bool operator==(const ConvLayerSpec&) const = default;
};

/// Architecture of the Q-network: conv(+ReLU, avg-pool) stack over the image, then the
/// flattened features concatenated with normalized scalars feed ReLU dense layers and a
/// linear head with one output per action.
struct NetworkSpec {
    std::size_t in_channels{ObservationImage::kChannels};
    std::size_t in_height{64};
    std::size_t in_width{64};
    std::vector<ConvLayerSpec> conv;
    // 2 = (speed, waypoint distance); 1 = speed only.
    std::size_t scalar_inputs{2};
    std::vector<std::size_t> hidden;
    std::size_t outputs{ActionTable::size()};
    double speed_scale{20.0};
    double distance_scale{8.0};

    /// Three 64-filter 3x3 conv layers, two 256-unit dense layers.
    static NetworkSpec full(std::size_t scalar_inputs);
    /// CPU-budget variant: one 8-filter conv layer with stride 2, two 64-unit dense layers.
    static NetworkSpec desk(std::size_t scalar_inputs);
    static NetworkSpec from_preset(const std::string& name, std::size_t scalar_inputs);

    /// Shape after each conv+pool stage, as [C, H, W].
    std::vector<std::vector<std::size_t>> conv_output_shapes() const;
    std::size_t flat_features() const;
    void validate() const;

    bool operator==(const NetworkSpec&) const = default;
};

/// All weights of one Q-network. Tensor order: per conv layer (weights [F,C,K,K], bias [F]),
/// then per dense layer (weights [out,in], bias [out]).
class QNetworkParams {
public:
    QNetworkParams() = default;
    /// All-zero parameters.
    explicit QNetworkParams(NetworkSpec spec);
    /// Uniform fan-in init: weights ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), biases 0.
    static QNetworkParams initialized(NetworkSpec spec, std::uint64_t seed);

    const NetworkSpec& spec() const { return spec_; }
    std::vector<Tensor>& tensors() { return tensors_; }
    const std::vector<Tensor>& tensors() const { return tensors_; }

    std::size_t dense_layers() const { return spec_.hidden.size() + 1; }
    const Tensor& conv_weights(std::size_t i) const { return tensors_[2 * i]; }
    const Tensor& conv_bias(std::size_t i) const { return tensors_[2 * i + 1]; }
    const Tensor& dense_weights(std::size_t i) const { return tensors_[2 * (spec_.conv.size() + i)]; }
    const Tensor& dense_bias(std::size_t i) const { return tensors_[2 * (spec_.conv.size() + i) + 1]; }

    std::size_t parameter_count() const;

private:
    NetworkSpec spec_;
    std::vector<Tensor> tensors_;
};

bool bitwise_equal(const QNetworkParams& a, const QNetworkParams& b);

/// Gradient set, one tensor per parameter tensor.
using Gradients = std::vector<Tensor>;
Gradients zero_gradients(const QNetworkParams& params);

/// Intermediates recorded by a forward pass and consumed by backward().
struct ForwardTrace {
    std::vector<Tensor> conv_inputs;
    std::vector<Tensor> conv_activations;  // post-ReLU, pre-pool
    std::vector<std::vector<double>> dense_inputs;
    std::vector<std::vector<double>> dense_outputs;  // post-activation
    bool recorded{false};
};

Tensor image_tensor(const ObservationImage& image);

/// Raw forward pass; `scalars` must already be normalized.
std::vector<double> forward(const QNetworkParams& params, const Tensor& image, std::span<const double> scalars,
                            ForwardTrace* trace = nullptr);

/// Q-values for an observation. Speed is divided by spec.speed_scale and the waypoint
/// distance by spec.distance_scale; the distance must be present iff the network takes
/// two scalar inputs. Throws std::invalid_argument on non-finite inputs.
std::vector<double> forward_q(const QNetworkParams& params, const ObservationImage& image, double speed,
                              std::optional<double> waypoint_distance, ForwardTrace* trace = nullptr);
std::vector<double> forward_q(const QNetworkParams& params, const Tensor& image, double speed,
                              std::optional<double> waypoint_distance, ForwardTrace* trace = nullptr);

/// Backpropagates dLoss/dQ through a recorded trace, accumulating into `grads`.
/// Throws std::logic_error when the trace was never recorded.
void backward(const QNetworkParams& params, const ForwardTrace& trace, std::span<const double> grad_q,
              Gradients& grads);

/// theta <- theta - lr * grad.
void sgd_step(QNetworkParams& params, const Gradients& grads, double lr);

/// SGD with optional classical momentum: v <- mu v + g; theta <- theta - lr v.
class SgdOptimizer {
public:
    SgdOptimizer() = default;
    SgdOptimizer(double learning_rate, double momentum) : lr_(learning_rate), momentum_(momentum) {}

    void step(QNetworkParams& params, const Gradients& grads);

    double learning_rate() const { return lr_; }
    double momentum() const { return momentum_; }
    const std::vector<Tensor>& velocity() const { return velocity_; }
    std::vector<Tensor>& velocity() { return velocity_; }

private:
    double lr_{1e-3};
    double momentum_{0.0};
    std::vector<Tensor> velocity_;
};

inline constexpr std::uint32_t kParamsFormatVersion = 1;

void write_params(std::ostream& out, const QNetworkParams& params);
QNetworkParams read_params(std::istream& in);
void save_params(const QNetworkParams& params, const std::filesystem::path& path);
QNetworkParams load_params(const std::filesystem::path& path);

}  // namespace roadrl
