#include "gazeattn/tensor.hpp"

#include <algorithm>
#include <sstream>

#include "gazeattn/error.hpp"

namespace gazeattn {

std::size_t shape_size(const Shape& shape) {
  std::size_t n = 1;
  for (int d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_string(shape));
    n *= static_cast<std::size_t>(d);
  }
  return n;
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "," : "") << shape[i];
  os << ')';
  return os.str();
}

void require_shape(const Shape& actual, const Shape& expected, const std::string& what) {
  if (actual != expected) {
    throw ShapeError(what + ": expected shape " + shape_string(expected) + ", got " +
                     shape_string(actual));
  }
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)), data_(shape_size(shape_), fill) {}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (data_.size() != shape_size(shape_)) {
    throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                     shape_string(shape_));
  }
}

template <typename T>
void Tensor<T>::fill(T v) {
  std::fill(data_.begin(), data_.end(), v);
}

template <typename T>
void Tensor<T>::reshape(Shape shape) {
  if (shape_size(shape) != data_.size()) {
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  }
  shape_ = std::move(shape);
}

template <typename T>
void Tensor<T>::resize(Shape shape) {
  data_.assign(shape_size(shape), T{0});
  shape_ = std::move(shape);
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace gazeattn
