#pragma once

#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace roadrl {

class ShapeError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

/// Dense row-major tensor of doubles, rank 1 to 4. The shape is fixed at construction.
class Tensor {
public:
    static constexpr std::size_t kMaxRank = 4;

    Tensor() = default;
    explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
    Tensor(std::vector<std::size_t> shape, std::vector<double> values);

    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t rank() const { return shape_.size(); }
    std::size_t dim(std::size_t i) const { return shape_.at(i); }
    std::size_t size() const { return data_.size(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> values() { return data_; }
    std::span<const double> values() const { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    void fill(double v);

    bool operator==(const Tensor&) const = default;

private:
    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

std::string shape_string(const std::vector<std::size_t>& shape);

/// Exact bit-pattern comparison (distinguishes -0.0 and NaN payloads).
bool bitwise_equal(const Tensor& a, const Tensor& b);

}  // namespace roadrl
