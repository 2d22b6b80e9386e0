#pragma once
// Dense row-major tensor of 64-bit reals, rank <= 3.

#include <cmath>
#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "dreamlab/common.hpp"

namespace dreamlab {

class Tensor {
public:
    Tensor() = default;

    Tensor(std::vector<std::size_t> shape, std::vector<double> data)
        : shape_(std::move(shape)), data_(std::move(data)) {
        validate_shape();
        if (data_.size() != element_count(shape_)) {
            throw std::invalid_argument("Tensor: data length does not match shape");
        }
        if (checked_mode()) validate_finite();
    }

    static Tensor zeros(std::vector<std::size_t> shape) {
        const std::size_t n = element_count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, 0.0));
    }

    static Tensor full(std::vector<std::size_t> shape, double v) {
        const std::size_t n = element_count(shape);
        return Tensor(std::move(shape), std::vector<double>(n, v));
    }

    static Tensor scalar(double v) { return Tensor({1}, {v}); }

    std::size_t rank() const { return shape_.size(); }
    const std::vector<std::size_t>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    std::size_t dim(std::size_t i) const { return shape_.at(i); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }
    std::span<double> span() { return {data_.data(), data_.size()}; }
    std::span<const double> span() const { return {data_.data(), data_.size()}; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // matrix accessor, row-major
    double& at(std::size_t i, std::size_t j) { return data_[i * shape_[1] + j]; }
    double at(std::size_t i, std::size_t j) const { return data_[i * shape_[1] + j]; }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

    void validate_finite() const {
        for (double v : data_) {
            if (!std::isfinite(v)) {
                throw std::invalid_argument("Tensor: non-finite entry");
            }
        }
    }

    static std::size_t element_count(const std::vector<std::size_t>& shape) {
        if (shape.empty()) return 0;
        std::size_t n = 1;
        for (std::size_t d : shape) n *= d;
        return n;
    }

private:
    void validate_shape() const {
        if (shape_.empty() || shape_.size() > 3) {
            throw std::invalid_argument("Tensor: rank must be in [1,3]");
        }
        for (std::size_t d : shape_) {
            if (d == 0) throw std::invalid_argument("Tensor: zero dimension");
        }
    }

    std::vector<std::size_t> shape_;
    std::vector<double> data_;
};

}  // namespace dreamlab
