#include "roadrl/layers.hpp"

#include <vector>

namespace roadrl {

namespace {

struct ConvDims {
    std::size_t channels, height, width, filters, kernel, out_h, out_w;
};

ConvDims conv_dims(const Tensor& input, const Tensor& weights, std::size_t stride) {
    if (input.rank() != 3 || weights.rank() != 4) {
        throw ShapeError("conv2d expects input [C,H,W] and weights [F,C,K,K], got " + shape_string(input.shape()) +
                         " and " + shape_string(weights.shape()));
    }
    if (stride == 0) {
        throw ShapeError("conv2d stride must be positive");
    }
    const std::size_t k = weights.dim(2);
    if (weights.dim(1) != input.dim(0) || weights.dim(3) != k) {
        throw ShapeError("conv2d channel/kernel mismatch: input " + shape_string(input.shape()) + ", weights " +
                         shape_string(weights.shape()));
    }
    if (input.dim(1) < k || input.dim(2) < k) {
        throw ShapeError("conv2d input " + shape_string(input.shape()) + " smaller than kernel");
    }
    return {input.dim(0), input.dim(1), input.dim(2), weights.dim(0), k,
            (input.dim(1) - k) / stride + 1,
            (input.dim(2) - k) / stride + 1};
}

// Row t = (c, ky, kx) holds the input samples that tap t sees at every output position.
std::vector<double> im2col(const Tensor& input, const ConvDims& d, std::size_t stride) {
    const std::size_t plane_size = d.out_h * d.out_w;
    std::vector<double> cols(d.channels * d.kernel * d.kernel * plane_size);
    double* dst = cols.data();
    for (std::size_t c = 0; c < d.channels; ++c) {
        const double* in_c = input.data() + c * d.height * d.width;
        for (std::size_t ky = 0; ky < d.kernel; ++ky) {
            for (std::size_t kx = 0; kx < d.kernel; ++kx) {
                for (std::size_t y = 0; y < d.out_h; ++y) {
                    const double* row = in_c + (y * stride + ky) * d.width + kx;
                    for (std::size_t x = 0; x < d.out_w; ++x) {
                        *dst++ = row[x * stride];
                    }
                }
            }
        }
    }
    return cols;
}

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

Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride) {
    const ConvDims d = conv_dims(input, weights, stride);
    if (bias.size() != d.filters) {
        throw ShapeError("conv2d bias has " + std::to_string(bias.size()) + " entries for " +
                         std::to_string(d.filters) + " filters");
    }
    const std::vector<double> cols = im2col(input, d, stride);
    const std::size_t taps = d.channels * d.kernel * d.kernel;
    const std::size_t plane_size = d.out_h * d.out_w;
    Tensor out({d.filters, d.out_h, d.out_w});
    const double* w = weights.data();
    for (std::size_t f = 0; f < d.filters; ++f) {
        double* plane = out.data() + f * plane_size;
        for (std::size_t i = 0; i < plane_size; ++i) {
            plane[i] = bias[f];
        }
        for (std::size_t t = 0; t < taps; ++t) {
            const double wv = w[f * taps + t];
            const double* col = cols.data() + t * plane_size;
            for (std::size_t i = 0; i < plane_size; ++i) {
                plane[i] += wv * col[i];
            }
        }
    }
    return out;
}

void conv2d_backward(const Tensor& input, const Tensor& weights, std::size_t stride, const Tensor& grad_output,
                     Tensor& grad_weights, Tensor& grad_bias, Tensor* grad_input) {
    const ConvDims d = conv_dims(input, weights, stride);
    if (grad_output.shape() != std::vector<std::size_t>{d.filters, d.out_h, d.out_w} ||
        grad_weights.shape() != weights.shape() || grad_bias.size() != d.filters) {
        throw ShapeError("conv2d_backward gradient shapes do not match the layer");
    }
    if (grad_input != nullptr && grad_input->shape() != input.shape()) {
        throw ShapeError("conv2d_backward grad_input shape mismatch");
    }
    const std::vector<double> cols = im2col(input, d, stride);
    const std::size_t taps = d.channels * d.kernel * d.kernel;
    const std::size_t plane_size = d.out_h * d.out_w;
    const double* w = weights.data();
    const double* g = grad_output.data();
    double* gw = grad_weights.data();
    std::vector<double> grad_cols(grad_input != nullptr ? taps * plane_size : 0, 0.0);

    for (std::size_t f = 0; f < d.filters; ++f) {
        const double* g_plane = g + f * plane_size;
        double bias_acc = 0.0;
        for (std::size_t i = 0; i < plane_size; ++i) {
            bias_acc += g_plane[i];
        }
        grad_bias[f] += bias_acc;
        for (std::size_t t = 0; t < taps; ++t) {
            gw[f * taps + t] += dot(g_plane, cols.data() + t * plane_size, plane_size);
            if (grad_input != nullptr) {
                const double wv = w[f * taps + t];
                double* gc = grad_cols.data() + t * plane_size;
                for (std::size_t i = 0; i < plane_size; ++i) {
                    gc[i] += wv * g_plane[i];
                }
            }
        }
    }
    if (grad_input == nullptr) {
        return;
    }
    // col2im: scatter the column gradients back onto the input grid.
    double* gin = grad_input->data();
    for (std::size_t c = 0; c < d.channels; ++c) {
        for (std::size_t ky = 0; ky < d.kernel; ++ky) {
            for (std::size_t kx = 0; kx < d.kernel; ++kx) {
                const double* gc = grad_cols.data() + ((c * d.kernel + ky) * d.kernel + kx) * plane_size;
                for (std::size_t y = 0; y < d.out_h; ++y) {
                    double* row = gin + (c * d.height + y * stride + ky) * d.width + kx;
                    for (std::size_t x = 0; x < d.out_w; ++x) {
                        row[x * stride] += gc[y * d.out_w + x];
                    }
                }
            }
        }
    }
}

Tensor avgpool2d(const Tensor& input, std::size_t window) {
    if (input.rank() != 3 || window == 0) {
        throw ShapeError("avgpool2d expects [C,H,W] and a positive window, got " + shape_string(input.shape()));
    }
    const std::size_t channels = input.dim(0);
    const std::size_t h = input.dim(1);
    const std::size_t w = input.dim(2);
    const std::size_t oh = h / window;
    const std::size_t ow = w / window;
    if (oh == 0 || ow == 0) {
        throw ShapeError("avgpool2d input " + shape_string(input.shape()) + " smaller than window");
    }
    Tensor out({channels, oh, ow});
    const double scale = 1.0 / static_cast<double>(window * window);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                double acc = 0.0;
                for (std::size_t dy = 0; dy < window; ++dy) {
                    const double* row = input.data() + (c * h + y * window + dy) * w + x * window;
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        acc += row[dx];
                    }
                }
                out[(c * oh + y) * ow + x] = acc * scale;
            }
        }
    }
    return out;
}

Tensor avgpool2d_backward(const Tensor& grad_output, const std::vector<std::size_t>& input_shape,
                          std::size_t window) {
    if (input_shape.size() != 3 || window == 0) {
        throw ShapeError("avgpool2d_backward expects a [C,H,W] input shape");
    }
    const std::size_t channels = input_shape[0];
    const std::size_t h = input_shape[1];
    const std::size_t w = input_shape[2];
    const std::size_t oh = h / window;
    const std::size_t ow = w / window;
    if (grad_output.shape() != std::vector<std::size_t>{channels, oh, ow}) {
        throw ShapeError("avgpool2d_backward gradient shape " + shape_string(grad_output.shape()) +
                         " does not match input " + shape_string(input_shape));
    }
    Tensor grad_in(input_shape);
    const double scale = 1.0 / static_cast<double>(window * window);
    for (std::size_t c = 0; c < channels; ++c) {
        for (std::size_t y = 0; y < oh; ++y) {
            for (std::size_t x = 0; x < ow; ++x) {
                const double g = grad_output[(c * oh + y) * ow + x] * scale;
                for (std::size_t dy = 0; dy < window; ++dy) {
                    double* row = grad_in.data() + (c * h + y * window + dy) * w + x * window;
                    for (std::size_t dx = 0; dx < window; ++dx) {
                        row[dx] = g;
                    }
                }
            }
        }
    }
    return grad_in;
}

}  // namespace roadrl
