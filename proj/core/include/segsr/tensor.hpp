#pragma once

#include <algorithm>
#include <array>
#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

#include "segsr/errors.hpp"

namespace segsr {

// Extents of a dense tensor of rank 1..4. Rank-4 tensors are laid out as
// (batch, channel, height, width), row-major.
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;

  Shape() : rank_(1), dims_{1, 1, 1, 1} {}
  Shape(std::initializer_list<std::size_t> dims);
  explicit Shape(std::span<const std::size_t> dims);

  std::size_t rank() const noexcept { return rank_; }
  std::size_t operator[](std::size_t axis) const;
  std::size_t numel() const noexcept;
  std::span<const std::size_t> dims() const noexcept { return {dims_.data(), rank_}; }

  std::string str() const;

  friend bool operator==(const Shape& a, const Shape& b) noexcept {
    return a.rank_ == b.rank_ && std::equal(a.dims_.begin(), a.dims_.begin() + a.rank_, b.dims_.begin());
  }

 private:
  std::size_t rank_;
  std::array<std::size_t, kMaxRank> dims_;
};

template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() : data_(1, T{}) {}
  explicit Tensor(Shape shape, T fill = T{}) : shape_(shape), data_(shape.numel(), fill) {}
  Tensor(Shape shape, std::vector<T> data);

  static Tensor scalar(T v) { return Tensor(Shape{1}, v); }

  const Shape& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.rank(); }
  std::size_t size() const noexcept { return data_.size(); }
  std::size_t dim(std::size_t axis) const { return shape_[axis]; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }
  T* ptr() noexcept { return data_.data(); }
  const T* ptr() const noexcept { return data_.data(); }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  // Rank-4 element access.
  T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  const T& at(std::size_t n, std::size_t c, std::size_t h, std::size_t w) const noexcept {
    return data_[((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // Same data, new extents. Element count must agree.
  Tensor reshaped(Shape shape) const;

  void fill(T v) { std::fill(data_.begin(), data_.end(), v); }

  template <typename U>
  Tensor<U> cast() const {
    Tensor<U> out(shape_);
    std::transform(data_.begin(), data_.end(), out.data().begin(), [](T v) { return static_cast<U>(v); });
    return out;
  }

  bool all_finite() const noexcept;

 private:
  Shape shape_;
  std::vector<T> data_;
};

extern template class Tensor<float>;
extern template class Tensor<double>;

// Throws ShapeError with a message naming `what` unless a == b.
void require_same_shape(const Shape& a, const Shape& b, const char* what);

}  // namespace segsr
