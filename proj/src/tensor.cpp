#include "roadrl/tensor.hpp"

#include <algorithm>
#include <cstring>
#include <functional>
#include <numeric>

namespace roadrl {

namespace {

std::size_t element_count(const std::vector<std::size_t>& shape) {
    if (shape.empty() || shape.size() > Tensor::kMaxRank) {
        throw ShapeError("tensor rank must be 1.." + std::to_string(Tensor::kMaxRank) + ", got " +
                         std::to_string(shape.size()));
    }
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill)
    : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> values)
    : shape_(std::move(shape)), data_(std::move(values)) {
    if (data_.size() != element_count(shape_)) {
        throw ShapeError("tensor data size " + std::to_string(data_.size()) + " does not match shape " +
                         shape_string(shape_));
    }
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

std::string shape_string(const std::vector<std::size_t>& shape) {
    std::string s = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        s += (i ? "," : "") + std::to_string(shape[i]);
    }
    return s + "]";
}

bool bitwise_equal(const Tensor& a, const Tensor& b) {
    return a.shape() == b.shape() && std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace roadrl
