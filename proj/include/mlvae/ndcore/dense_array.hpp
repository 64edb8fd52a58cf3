#pragma once

#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "mlvae/errors.hpp"

namespace mlvae::nd {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape);

// Row-major dense storage. Rank 1 is a vector, rank 2 a [rows x cols] matrix.
template <typename T>
class DenseArray {
 public:
  DenseArray() = default;
  explicit DenseArray(Shape shape, T fill = T{0}) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {
    for (auto d : shape_) {
      if (d == 0) throw DimensionError("DenseArray: zero-sized dimension in " + shape_string(shape_));
    }
  }
  DenseArray(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    if (shape_size(shape_) != data_.size()) {
      throw DimensionError("DenseArray: shape " + shape_string(shape_) + " does not match " +
                           std::to_string(data_.size()) + " values");
    }
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_.size(); }
  std::size_t rows() const { return shape_.empty() ? 1 : shape_.front(); }
  std::size_t cols() const { return shape_.size() < 2 ? 1 : shape_[1]; }

  std::span<T> span() { return data_; }
  std::span<const T> span() const { return data_; }
  std::vector<T>& data() { return data_; }
  const std::vector<T>& data() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }
  T& at(std::size_t r, std::size_t c) { return data_[r * cols() + c]; }
  const T& at(std::size_t r, std::size_t c) const { return data_[r * cols() + c]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  bool operator==(const DenseArray&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

}  // namespace mlvae::nd
