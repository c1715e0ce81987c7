#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace gazeattn {

using Shape = std::vector<int>;

std::size_t shape_size(const Shape& shape);
std::string shape_string(const Shape& shape);

/// Dense row-major array. Video batches use the N,C,T,H,W layout.
template <typename T>
class Tensor {
 public:
  using value_type = T;

  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  const Shape& shape() const noexcept { return shape_; }
  int dim(std::size_t axis) const { return shape_.at(axis); }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T* data() noexcept { return data_.data(); }
  const T* data() const noexcept { return data_.data(); }
  std::span<T> values() noexcept { return data_; }
  std::span<const T> values() const noexcept { return data_; }
  std::vector<T>& storage() noexcept { return data_; }
  const std::vector<T>& storage() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  /// Element count of one slice along axis 0.
  std::size_t stride0() const noexcept { return shape_.empty() || shape_[0] == 0 ? 0 : data_.size() / shape_[0]; }

  void fill(T v);
  void reshape(Shape shape);
  void resize(Shape shape);

  bool operator==(const Tensor&) const = default;

 private:
  Shape shape_;
  std::vector<T> data_;
};

/// Throws ShapeError naming `what` when the shapes differ.
void require_shape(const Shape& actual, const Shape& expected, const std::string& what);

extern template class Tensor<float>;
extern template class Tensor<double>;

}  // namespace gazeattn
