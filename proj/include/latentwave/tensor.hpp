#pragma once

#include <algorithm>
#include <cstddef>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "latentwave/errors.hpp"

namespace latentwave {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>{});
}

inline std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

/// Dense row-major tensor with at most five dimensions, laid out as
/// (batch, channels, depth, height, width) when used for volumes.
template <class T>
class Tensor {
 public:
  Tensor() = default;

  explicit Tensor(Shape shape, T fill = T{0}) : shape_(std::move(shape)) {
    check_rank();
    data_.assign(shape_numel(shape_), fill);
  }

  Tensor(Shape shape, std::vector<T> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check_rank();
    if (data_.size() != shape_numel(shape_)) {
      throw ShapeError("buffer of " + std::to_string(data_.size()) + " elements for shape " +
                       shape_str(shape_));
    }
  }

  static Tensor scalar(T v) { return Tensor(Shape{1}, std::vector<T>{v}); }

  const Shape& shape() const { return shape_; }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }

  std::span<T> data() { return data_; }
  std::span<const T> data() const { return data_; }
  std::vector<T>& vec() { return data_; }
  const std::vector<T>& vec() const { return data_; }

  T& operator[](std::size_t i) { return data_[i]; }
  const T& operator[](std::size_t i) const { return data_[i]; }

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  /// Same buffer, new shape of equal element count.
  Tensor reshaped(Shape shape) const {
    if (shape_numel(shape) != numel()) {
      throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
    }
    return Tensor(std::move(shape), data_);
  }

  template <class U>
  Tensor<U> cast() const {
    std::vector<U> out(data_.begin(), data_.end());
    return Tensor<U>(shape_, std::move(out));
  }

  bool operator==(const Tensor& other) const = default;

 private:
  void check_rank() const {
    if (shape_.empty() || shape_.size() > 5) {
      throw ShapeError("tensor rank must be 1..5, got " + std::to_string(shape_.size()));
    }
  }

  Shape shape_;
  std::vector<T> data_;
};

}  // namespace latentwave
