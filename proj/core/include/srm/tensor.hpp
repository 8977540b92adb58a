#pragma once

#include <cstddef>
#include <string>
#include <vector>

#include "srm/errors.hpp"

namespace srm {

// Dense row-major array of doubles, rank 1 or 2. This is deliberately minimal:
// the model code owns its own loops, it only needs storage with shape checks.
class Tensor {
public:
    Tensor() = default;

    explicit Tensor(int n) : shape_{n}, data_(static_cast<std::size_t>(n), 0.0) {}
    Tensor(int rows, int cols)
        : shape_{rows, cols},
          data_(static_cast<std::size_t>(rows) * static_cast<std::size_t>(cols), 0.0) {}

    int rank() const { return static_cast<int>(shape_.size()); }
    int rows() const { return shape_.empty() ? 0 : shape_[0]; }
    int cols() const { return rank() == 2 ? shape_[1] : 1; }
    const std::vector<int>& shape() const { return shape_; }
    std::size_t size() const { return data_.size(); }
    bool empty() const { return data_.empty(); }

    double* data() { return data_.data(); }
    const double* data() const { return data_.data(); }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    double& operator()(int i) { return data_[static_cast<std::size_t>(i)]; }
    double operator()(int i) const { return data_[static_cast<std::size_t>(i)]; }

    double& operator()(int i, int j) {
        return data_[static_cast<std::size_t>(i) * cols() + j];
    }
    double operator()(int i, int j) const {
        return data_[static_cast<std::size_t>(i) * cols() + j];
    }

    double* row(int i) { return data_.data() + static_cast<std::size_t>(i) * cols(); }
    const double* row(int i) const { return data_.data() + static_cast<std::size_t>(i) * cols(); }

    void fill(double v) { std::fill(data_.begin(), data_.end(), v); }

    bool same_shape(const Tensor& other) const { return shape_ == other.shape_; }

    bool all_finite() const;

private:
    std::vector<int> shape_;
    std::vector<double> data_;
};

// Named parameter (or gradient) arrays with stable iteration order.
class ParamStore {
public:
    struct Entry {
        std::string name;
        Tensor tensor;
    };

    Tensor& add(const std::string& name, int n);
    Tensor& add(const std::string& name, int rows, int cols);

    Tensor& at(const std::string& name);
    const Tensor& at(const std::string& name) const;
    bool has(const std::string& name) const;

    std::vector<Entry>& entries() { return entries_; }
    const std::vector<Entry>& entries() const { return entries_; }

    std::size_t total_size() const;
    void zero();

    // Same names and shapes, all values zero.
    static ParamStore zeros_like(const ParamStore& other);

private:
    Tensor& add_entry(const std::string& name, Tensor tensor);

    std::vector<Entry> entries_;
};

}  // namespace srm
