#include "roadrl/qnetwork.hpp"

#include <cmath>
#include <fstream>
#include <random>

#include "roadrl/binary_io.hpp"
#include "roadrl/layers.hpp"

namespace roadrl {

namespace {

// Four independent partial sums keep the adds pipelined.
double dot(const double* a, const double* b, std::size_t n) {
    double s0 = 0.0, s1 = 0.0, s2 = 0.0, s3 = 0.0;
    std::size_t k = 0;
    for (; k + 4 <= n; k += 4) {
        s0 += a[k] * b[k];
        s1 += a[k + 1] * b[k + 1];
        s2 += a[k + 2] * b[k + 2];
        s3 += a[k + 3] * b[k + 3];
    }
    for (; k < n; ++k) {
        s0 += a[k] * b[k];
    }
    return (s0 + s1) + (s2 + s3);
}

}  // namespace

NetworkSpec NetworkSpec::full(std::size_t scalar_inputs) {
    NetworkSpec s;
    s.conv = {{64, 3, 1, 2}, {64, 3, 1, 2}, {64, 3, 1, 2}};
    s.hidden = {256, 256};
    s.scalar_inputs = scalar_inputs;
    return s;
}

NetworkSpec NetworkSpec::desk(std::size_t scalar_inputs) {
    NetworkSpec s;
    s.conv = {{8, 3, 2, 2}};
    s.hidden = {64, 64};
    s.scalar_inputs = scalar_inputs;
    return s;
}

NetworkSpec NetworkSpec::from_preset(const std::string& name, std::size_t scalar_inputs) {
    if (name == "full") {
        return full(scalar_inputs);
    }
    if (name == "desk") {
        return desk(scalar_inputs);
    }
    throw std::invalid_argument("unknown network preset '" + name + "' (expected full or desk)");
}

std::vector<std::vector<std::size_t>> NetworkSpec::conv_output_shapes() const {
    std::vector<std::vector<std::size_t>> shapes;
    std::size_t c = in_channels;
    std::size_t h = in_height;
    std::size_t w = in_width;
    for (const ConvLayerSpec& layer : conv) {
        if (layer.kernel == 0 || layer.stride == 0 || layer.pool == 0 || layer.filters == 0 || h < layer.kernel ||
            w < layer.kernel) {
            throw ShapeError("conv stack does not fit the input image");
        }
        h = ((h - layer.kernel) / layer.stride + 1) / layer.pool;
        w = ((w - layer.kernel) / layer.stride + 1) / layer.pool;
        c = layer.filters;
        if (h == 0 || w == 0) {
            throw ShapeError("conv stack reduces the image to nothing");
        }
        shapes.push_back({c, h, w});
    }
    return shapes;
}

std::size_t NetworkSpec::flat_features() const {
    const auto shapes = conv_output_shapes();
    if (shapes.empty()) {
        return in_channels * in_height * in_width;
    }
    const auto& last = shapes.back();
    return last[0] * last[1] * last[2];
}

void NetworkSpec::validate() const {
    if (in_channels == 0 || in_height == 0 || in_width == 0 || outputs == 0) {
        throw ShapeError("network input and output sizes must be positive");
    }
    if (scalar_inputs > 2) {
        throw ShapeError("network takes at most two scalar inputs (speed, waypoint distance)");
    }
    for (std::size_t units : hidden) {
        if (units == 0) {
            throw ShapeError("dense layers need at least one unit");
        }
    }
    if (!(speed_scale > 0.0) || !(distance_scale > 0.0)) {
        throw ShapeError("input scales must be positive");
    }
    (void)flat_features();
}

QNetworkParams::QNetworkParams(NetworkSpec spec) : spec_(std::move(spec)) {
    spec_.validate();
    std::size_t channels = spec_.in_channels;
    for (const ConvLayerSpec& layer : spec_.conv) {
        tensors_.emplace_back(std::vector<std::size_t>{layer.filters, channels, layer.kernel, layer.kernel});
        tensors_.emplace_back(std::vector<std::size_t>{layer.filters});
        channels = layer.filters;
    }
    std::size_t in = spec_.flat_features() + spec_.scalar_inputs;
    std::vector<std::size_t> widths = spec_.hidden;
    widths.push_back(spec_.outputs);
    for (std::size_t out : widths) {
        tensors_.emplace_back(std::vector<std::size_t>{out, in});
        tensors_.emplace_back(std::vector<std::size_t>{out});
        in = out;
    }
}

QNetworkParams QNetworkParams::initialized(NetworkSpec spec, std::uint64_t seed) {
    QNetworkParams p(std::move(spec));
    std::mt19937_64 rng(seed);
    for (std::size_t i = 0; i < p.tensors_.size(); i += 2) {
        Tensor& w = p.tensors_[i];
        const std::size_t fan_in = w.size() / w.dim(0);
        const double bound = 1.0 / std::sqrt(static_cast<double>(fan_in));
        std::uniform_real_distribution<double> dist(-bound, bound);
        for (double& v : w.values()) {
            v = dist(rng);
        }
    }
    return p;
}

std::size_t QNetworkParams::parameter_count() const {
    std::size_t n = 0;
    for (const Tensor& t : tensors_) {
        n += t.size();
    }
    return n;
}

bool bitwise_equal(const QNetworkParams& a, const QNetworkParams& b) {
    if (!(a.spec() == b.spec()) || a.tensors().size() != b.tensors().size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.tensors().size(); ++i) {
        if (!bitwise_equal(a.tensors()[i], b.tensors()[i])) {
            return false;
        }
    }
    return true;
}

Gradients zero_gradients(const QNetworkParams& params) {
    Gradients g;
    g.reserve(params.tensors().size());
    for (const Tensor& t : params.tensors()) {
        g.emplace_back(t.shape());
    }
    return g;
}

Tensor image_tensor(const ObservationImage& image) {
    Tensor t({ObservationImage::kChannels, image.height(), image.width()});
    const auto& levels = image.levels();
    for (std::size_t i = 0; i < levels.size(); ++i) {
        t[i] = levels[i] / 255.0;
    }
    return t;
}

std::vector<double> forward(const QNetworkParams& params, const Tensor& image, std::span<const double> scalars,
                            ForwardTrace* trace) {
    const NetworkSpec& spec = params.spec();
    if (image.shape() != std::vector<std::size_t>{spec.in_channels, spec.in_height, spec.in_width}) {
        throw ShapeError("network expects image " +
                         shape_string({spec.in_channels, spec.in_height, spec.in_width}) + ", got " +
                         shape_string(image.shape()));
    }
    if (scalars.size() != spec.scalar_inputs) {
        throw ShapeError("network expects " + std::to_string(spec.scalar_inputs) + " scalar inputs, got " +
                         std::to_string(scalars.size()));
    }
    if (trace != nullptr) {
        *trace = ForwardTrace{};
    }

    Tensor x = image;
    for (std::size_t i = 0; i < spec.conv.size(); ++i) {
        const ConvLayerSpec& layer = spec.conv[i];
        Tensor act = conv2d(x, params.conv_weights(i), params.conv_bias(i), layer.stride);
        for (double& v : act.values()) {
            v = v > 0.0 ? v : 0.0;
        }
        Tensor pooled = avgpool2d(act, layer.pool);
        if (trace != nullptr) {
            trace->conv_inputs.push_back(std::move(x));
            trace->conv_activations.push_back(std::move(act));
        }
        x = std::move(pooled);
    }

    std::vector<double> h(x.values().begin(), x.values().end());
    h.insert(h.end(), scalars.begin(), scalars.end());
    const std::size_t layers = params.dense_layers();
    for (std::size_t i = 0; i < layers; ++i) {
        const Tensor& w = params.dense_weights(i);
        const Tensor& b = params.dense_bias(i);
        const std::size_t out = w.dim(0);
        const std::size_t in = w.dim(1);
        std::vector<double> y(out);
        for (std::size_t j = 0; j < out; ++j) {
            const double acc = b[j] + dot(w.data() + j * in, h.data(), in);
            y[j] = (i + 1 < layers && acc < 0.0) ? 0.0 : acc;
        }
        if (trace != nullptr) {
            trace->dense_inputs.push_back(std::move(h));
            trace->dense_outputs.push_back(y);
        }
        h = std::move(y);
    }
    if (trace != nullptr) {
        trace->recorded = true;
    }
    return h;
}

std::vector<double> forward_q(const QNetworkParams& params, const Tensor& image, double speed,
                              std::optional<double> waypoint_distance, ForwardTrace* trace) {
    const NetworkSpec& spec = params.spec();
    if (!std::isfinite(speed) || (waypoint_distance && !std::isfinite(*waypoint_distance))) {
        throw std::invalid_argument("forward_q: non-finite scalar input");
    }
    const bool wants_distance = spec.scalar_inputs == 2;
    if (wants_distance != waypoint_distance.has_value()) {
        throw std::invalid_argument(wants_distance ? "forward_q: network needs a waypoint distance"
                                                   : "forward_q: network takes no waypoint distance");
    }
    std::vector<double> scalars;
    if (spec.scalar_inputs >= 1) {
        scalars.push_back(speed / spec.speed_scale);
    }
    if (waypoint_distance) {
        scalars.push_back(*waypoint_distance / spec.distance_scale);
    }
    return forward(params, image, scalars, trace);
}

std::vector<double> forward_q(const QNetworkParams& params, const ObservationImage& image, double speed,
                              std::optional<double> waypoint_distance, ForwardTrace* trace) {
    return forward_q(params, image_tensor(image), speed, waypoint_distance, trace);
}

void backward(const QNetworkParams& params, const ForwardTrace& trace, std::span<const double> grad_q,
              Gradients& grads) {
    if (!trace.recorded) {
        throw std::logic_error("backward called without a recorded forward pass");
    }
    const NetworkSpec& spec = params.spec();
    if (grad_q.size() != spec.outputs || grads.size() != params.tensors().size()) {
        throw ShapeError("backward: gradient sizes do not match the network");
    }
    const std::size_t conv_layers = spec.conv.size();
    const std::size_t layers = params.dense_layers();

    std::vector<double> g(grad_q.begin(), grad_q.end());
    for (std::size_t li = layers; li-- > 0;) {
        const Tensor& w = params.dense_weights(li);
        Tensor& gw = grads[2 * (conv_layers + li)];
        Tensor& gb = grads[2 * (conv_layers + li) + 1];
        const std::vector<double>& x = trace.dense_inputs[li];
        const std::size_t out = w.dim(0);
        const std::size_t in = w.dim(1);
        std::vector<double> gx(in, 0.0);
        for (std::size_t j = 0; j < out; ++j) {
            const double gj = g[j];
            gb[j] += gj;
            if (gj == 0.0) {
                continue;
            }
            double* gw_row = gw.data() + j * in;
            const double* w_row = w.data() + j * in;
            for (std::size_t k = 0; k < in; ++k) {
                gw_row[k] += gj * x[k];
                gx[k] += w_row[k] * gj;
            }
        }
        if (li > 0) {
            // x is the ReLU output of the previous dense layer.
            for (std::size_t k = 0; k < in; ++k) {
                if (!(x[k] > 0.0)) {
                    gx[k] = 0.0;
                }
            }
        }
        g = std::move(gx);
    }

    if (conv_layers == 0) {
        return;
    }
    const auto shapes = spec.conv_output_shapes();
    g.resize(spec.flat_features());  // drop the scalar-input part
    Tensor grad_pooled(shapes.back(), std::move(g));
    for (std::size_t ci = conv_layers; ci-- > 0;) {
        const ConvLayerSpec& layer = spec.conv[ci];
        const Tensor& act = trace.conv_activations[ci];
        Tensor grad_act = avgpool2d_backward(grad_pooled, act.shape(), layer.pool);
        for (std::size_t k = 0; k < grad_act.size(); ++k) {
            if (!(act[k] > 0.0)) {
                grad_act[k] = 0.0;
            }
        }
        const Tensor& input = trace.conv_inputs[ci];
        if (ci > 0) {
            Tensor grad_in(input.shape());
            conv2d_backward(input, params.conv_weights(ci), layer.stride, grad_act, grads[2 * ci], grads[2 * ci + 1],
                            &grad_in);
            grad_pooled = std::move(grad_in);
        } else {
            conv2d_backward(input, params.conv_weights(ci), layer.stride, grad_act, grads[2 * ci], grads[2 * ci + 1],
                            nullptr);
        }
    }
}

namespace {

void check_matching(const QNetworkParams& params, const std::vector<Tensor>& grads) {
    if (grads.size() != params.tensors().size()) {
        throw ShapeError("gradient set does not match parameter set");
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        if (grads[i].shape() != params.tensors()[i].shape()) {
            throw ShapeError("gradient " + std::to_string(i) + " has shape " + shape_string(grads[i].shape()) +
                             ", parameter has " + shape_string(params.tensors()[i].shape()));
        }
    }
}

}  // namespace

void sgd_step(QNetworkParams& params, const Gradients& grads, double lr) {
    check_matching(params, grads);
    for (std::size_t i = 0; i < grads.size(); ++i) {
        double* p = params.tensors()[i].data();
        const double* g = grads[i].data();
        for (std::size_t k = 0; k < grads[i].size(); ++k) {
            p[k] -= lr * g[k];
        }
    }
}

void SgdOptimizer::step(QNetworkParams& params, const Gradients& grads) {
    if (momentum_ == 0.0) {
        sgd_step(params, grads, lr_);
        return;
    }
    check_matching(params, grads);
    if (velocity_.empty()) {
        velocity_ = zero_gradients(params);
    }
    for (std::size_t i = 0; i < grads.size(); ++i) {
        double* p = params.tensors()[i].data();
        double* v = velocity_[i].data();
        const double* g = grads[i].data();
        for (std::size_t k = 0; k < grads[i].size(); ++k) {
            v[k] = momentum_ * v[k] + g[k];
            p[k] -= lr_ * v[k];
        }
    }
}

namespace {

constexpr std::array<char, 8> kParamsMagic{'R', 'L', 'Q', 'N', 'E', 'T', '\0', '\1'};

}  // namespace

void write_params(std::ostream& out, const QNetworkParams& params) {
    BinaryWriter w(out);
    const NetworkSpec& s = params.spec();
    w.put_bytes(kParamsMagic);
    w.put<std::uint32_t>(kParamsFormatVersion);
    w.put<std::uint64_t>(s.in_channels);
    w.put<std::uint64_t>(s.in_height);
    w.put<std::uint64_t>(s.in_width);
    w.put<std::uint64_t>(s.conv.size());
    for (const ConvLayerSpec& c : s.conv) {
        w.put<std::uint64_t>(c.filters);
        w.put<std::uint64_t>(c.kernel);
        w.put<std::uint64_t>(c.stride);
        w.put<std::uint64_t>(c.pool);
    }
    w.put<std::uint64_t>(s.scalar_inputs);
    w.put<std::uint64_t>(s.hidden.size());
    for (std::size_t h : s.hidden) {
        w.put<std::uint64_t>(h);
    }
    w.put<std::uint64_t>(s.outputs);
    w.put<double>(s.speed_scale);
    w.put<double>(s.distance_scale);
    // Layer table.
    w.put<std::uint32_t>(static_cast<std::uint32_t>(params.tensors().size()));
    for (const Tensor& t : params.tensors()) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(t.rank()));
        for (std::size_t d : t.shape()) {
            w.put<std::uint64_t>(d);
        }
    }
    for (const Tensor& t : params.tensors()) {
        w.put_doubles(t.values());
    }
    w.check();
}

QNetworkParams read_params(std::istream& in) {
    BinaryReader r(in);
    std::array<char, 8> magic{};
    r.read_exact(magic.data(), magic.size());
    if (magic != kParamsMagic) {
        throw FormatError("not a network parameter file (bad magic)");
    }
    const auto version = r.get<std::uint32_t>();
    if (version != kParamsFormatVersion) {
        throw FormatError("unsupported parameter file version " + std::to_string(version));
    }
    constexpr std::uint64_t kSane = 1u << 20;
    auto get_size = [&r] {
        const auto v = r.get<std::uint64_t>();
        if (v > kSane) {
            throw FormatError("implausible dimension in parameter file");
        }
        return static_cast<std::size_t>(v);
    };
    NetworkSpec s;
    s.in_channels = get_size();
    s.in_height = get_size();
    s.in_width = get_size();
    s.conv.resize(get_size());
    for (ConvLayerSpec& c : s.conv) {
        c.filters = get_size();
        c.kernel = get_size();
        c.stride = get_size();
        c.pool = get_size();
    }
    s.scalar_inputs = get_size();
    s.hidden.resize(get_size());
    for (std::size_t& h : s.hidden) {
        h = get_size();
    }
    s.outputs = get_size();
    s.speed_scale = r.get<double>();
    s.distance_scale = r.get<double>();

    QNetworkParams params;
    try {
        params = QNetworkParams(s);
    } catch (const ShapeError& e) {
        throw FormatError(std::string("inconsistent network spec in parameter file: ") + e.what());
    }
    const auto count = r.get<std::uint32_t>();
    if (count != params.tensors().size()) {
        throw FormatError("layer table size does not match the network spec");
    }
    for (const Tensor& t : params.tensors()) {
        const auto rank = r.get<std::uint32_t>();
        std::vector<std::size_t> shape(rank);
        if (rank != t.rank()) {
            throw FormatError("layer table rank mismatch");
        }
        for (std::size_t& d : shape) {
            d = get_size();
        }
        if (shape != t.shape()) {
            throw FormatError("layer table shape " + shape_string(shape) + " does not match " +
                              shape_string(t.shape()));
        }
    }
    for (Tensor& t : params.tensors()) {
        r.get_doubles(t.values());
    }
    return params;
}

void save_params(const QNetworkParams& params, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw std::runtime_error("cannot open " + path.string() + " for writing");
    }
    write_params(out, params);
}

QNetworkParams load_params(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw std::runtime_error("cannot open " + path.string());
    }
    return read_params(in);
}

}  // namespace roadrl
