#include "segsr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace segsr {

namespace {

void validate(std::span<const std::size_t> dims) {
  if (dims.empty() || dims.size() > Shape::kMaxRank) {
    throw ShapeError("tensor rank must be in [1, 4], got " + std::to_string(dims.size()));
  }
  for (std::size_t d : dims) {
    if (d == 0) throw ShapeError("tensor extents must be >= 1");
  }
}

}  // namespace

Shape::Shape(std::initializer_list<std::size_t> dims) : Shape(std::span<const std::size_t>(dims.begin(), dims.size())) {}

Shape::Shape(std::span<const std::size_t> dims) : rank_(dims.size()), dims_{1, 1, 1, 1} {
  validate(dims);
  std::copy(dims.begin(), dims.end(), dims_.begin());
}

std::size_t Shape::operator[](std::size_t axis) const {
  if (axis >= rank_) throw ShapeError("axis " + std::to_string(axis) + " out of range for shape " + str());
  return dims_[axis];
}

std::size_t Shape::numel() const noexcept {
  std::size_t n = 1;
  for (std::size_t i = 0; i < rank_; ++i) n *= dims_[i];
  return n;
}

std::string Shape::str() const {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < rank_; ++i) {
    if (i) os << ", ";
    os << dims_[i];
  }
  os << ')';
  return os.str();
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
  if (data_.size() != shape_.numel()) {
    throw ShapeError("data length " + std::to_string(data_.size()) + " does not match shape " + shape_.str());
  }
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape shape) const {
  if (shape.numel() != shape_.numel()) {
    throw ShapeError("cannot reshape " + shape_.str() + " to " + shape.str());
  }
  Tensor out = *this;
  out.shape_ = shape;
  return out;
}

template <typename T>
bool Tensor<T>::all_finite() const noexcept {
  return std::all_of(data_.begin(), data_.end(), [](T v) { return std::isfinite(v); });
}

template class Tensor<float>;
template class Tensor<double>;

void require_same_shape(const Shape& a, const Shape& b, const char* what) {
  if (!(a == b)) throw ShapeError(std::string(what) + ": shape mismatch " + a.str() + " vs " + b.str());
}

}  // namespace segsr
