#ifndef LANGTIME_AUTODIFF_TENSOR_HPP_
#define LANGTIME_AUTODIFF_TENSOR_HPP_

#include <cstdint>
#include <initializer_list>
#include <span>
#include <string>
#include <vector>

namespace langtime::ad {

using Shape = std::vector<std::int64_t>;

std::int64_t NumElements(const Shape& shape);
std::string ShapeToString(const Shape& shape);

// Dense row-major tensor of doubles. product(shape) == size() always holds.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape);
  Tensor(Shape shape, std::vector<double> data);
  Tensor(Shape shape, double fill);

  static Tensor Scalar(double value);
  static Tensor Vector(std::vector<double> data);
  static Tensor Matrix(std::initializer_list<std::initializer_list<double>> rows);

  const Shape& shape() const { return shape_; }
  std::int64_t rank() const { return static_cast<std::int64_t>(shape_.size()); }
  std::int64_t dim(std::int64_t axis) const;
  std::size_t size() const { return data_.size(); }

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }

  // Value of a single-element tensor.
  double item() const;

  Tensor Reshaped(Shape shape) const;
  bool AllFinite() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  Shape shape_;
  std::vector<double> data_;
};

}  // namespace langtime::ad

#endif  // LANGTIME_AUTODIFF_TENSOR_HPP_
