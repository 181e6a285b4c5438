#pragma once

#include <cstddef>
#include <vector>

#include "roadrl/tensor.hpp"

namespace roadrl {

/// Valid (unpadded) cross-correlation.
/// input [C, H, W], weights [F, C, K, K], bias [F] -> [F, (H-K)/stride+1, (W-K)/stride+1].
Tensor conv2d(const Tensor& input, const Tensor& weights, const Tensor& bias, std::size_t stride = 1);

/// Accumulates into grad_weights / grad_bias; writes grad_input when it is non-null.
void conv2d_backward(const Tensor& input, const Tensor& weights, std::size_t stride, const Tensor& grad_output,
                     Tensor& grad_weights, Tensor& grad_bias, Tensor* grad_input);

/// Non-overlapping window mean over [C, H, W]; trailing rows/cols that do not fill a
/// window are dropped.
Tensor avgpool2d(const Tensor& input, std::size_t window = 2);

Tensor avgpool2d_backward(const Tensor& grad_output, const std::vector<std::size_t>& input_shape,
                          std::size_t window = 2);

}  // namespace roadrl
