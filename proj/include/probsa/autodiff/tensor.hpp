#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "probsa/error.hpp"

namespace probsa::ad {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_str(const Shape& shape) {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) os << 'x';
        os << shape[i];
    }
    os << ']';
    return os.str();
}

/// Dense row-major float64 array with an optional gradient buffer.
///
/// Rank 0 is a scalar, rank 1 a vector and rank 2 a matrix; nothing in the
/// library needs more. The gradient buffer exists only when
/// `requires_grad` is set and is shaped like the data.
class Tensor {
public:
    Tensor() : shape_{0} {}

    Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
        if (shape_size(shape_) != data_.size()) {
            throw ShapeError("tensor data length " + std::to_string(data_.size()) +
                             " does not match shape " + shape_str(shape_));
        }
    }

    static Tensor zeros(Shape shape) {
        const auto n = shape_size(shape);
        return {std::move(shape), std::vector<double>(n, 0.0)};
    }
    static Tensor filled(Shape shape, double value) {
        const auto n = shape_size(shape);
        return {std::move(shape), std::vector<double>(n, value)};
    }
    static Tensor scalar(double v) { return {Shape{}, {v}}; }
    static Tensor vector(std::vector<double> v) {
        const auto n = v.size();
        return {Shape{n}, std::move(v)};
    }
    static Tensor matrix(std::size_t rows, std::size_t cols, std::vector<double> v) {
        return {Shape{rows, cols}, std::move(v)};
    }

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    std::size_t rows() const { return rank() == 2 ? shape_[0] : throw ShapeError("rows() on non-matrix " + shape_str(shape_)); }
    std::size_t cols() const { return rank() == 2 ? shape_[1] : throw ShapeError("cols() on non-matrix " + shape_str(shape_)); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }
    double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
    double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
    double item() const {
        if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
        return data_[0];
    }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    std::span<const double> row(std::size_t r) const { return std::span<const double>(data_).subspan(r * shape_[1], shape_[1]); }
    std::span<double> row(std::size_t r) { return std::span<double>(data_).subspan(r * shape_[1], shape_[1]); }
    const std::vector<double>& data() const noexcept { return data_; }
    std::vector<double>& data() noexcept { return data_; }

    bool requires_grad() const noexcept { return requires_grad_; }
    void set_requires_grad(bool on) {
        requires_grad_ = on;
        if (on && !grad_) grad_.emplace(data_.size(), 0.0);
        if (!on) grad_.reset();
    }
    bool has_grad() const noexcept { return grad_.has_value(); }
    std::span<double> grad() { return grad_ ? std::span<double>(*grad_) : std::span<double>(); }
    std::span<const double> grad() const { return grad_ ? std::span<const double>(*grad_) : std::span<const double>(); }
    void zero_grad() {
        if (grad_) std::fill(grad_->begin(), grad_->end(), 0.0);
    }

    bool all_finite() const noexcept {
        for (double v : data_) {
            if (!std::isfinite(v)) return false;
        }
        return true;
    }

    bool same_values(const Tensor& other) const { return shape_ == other.shape_ && data_ == other.data_; }

private:
    Shape shape_;
    std::vector<double> data_;
    bool requires_grad_ = false;
    std::optional<std::vector<double>> grad_;
};

}  // namespace probsa::ad
