#include "langtime/autodiff/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace langtime::ad {

std::int64_t NumElements(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string ShapeToString(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

namespace {

void CheckShape(const Shape& shape) {
  for (auto d : shape) {
    if (d <= 0) {
      throw std::invalid_argument("tensor dimensions must be positive, got " +
                                  ShapeToString(shape));
    }
  }
}

}  // namespace

Tensor::Tensor(Shape shape) : Tensor(std::move(shape), 0.0) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  CheckShape(shape_);
  data_.assign(static_cast<std::size_t>(NumElements(shape_)), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  CheckShape(shape_);
  if (static_cast<std::int64_t>(data_.size()) != NumElements(shape_)) {
    throw std::invalid_argument("tensor data size " +
                                std::to_string(data_.size()) +
                                " does not match shape " + ShapeToString(shape_));
  }
}

Tensor Tensor::Scalar(double value) { return Tensor({1}, {value}); }

Tensor Tensor::Vector(std::vector<double> data) {
  const auto n = static_cast<std::int64_t>(data.size());
  return Tensor({n}, std::move(data));
}

Tensor Tensor::Matrix(
    std::initializer_list<std::initializer_list<double>> rows) {
  const auto r = static_cast<std::int64_t>(rows.size());
  const auto c = r ? static_cast<std::int64_t>(rows.begin()->size()) : 0;
  std::vector<double> data;
  data.reserve(static_cast<std::size_t>(r * c));
  for (const auto& row : rows) {
    if (static_cast<std::int64_t>(row.size()) != c) {
      throw std::invalid_argument("ragged matrix literal");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

std::int64_t Tensor::dim(std::int64_t axis) const {
  if (axis < 0) axis += rank();
  if (axis < 0 || axis >= rank()) {
    throw std::out_of_range("axis out of range for shape " +
                            ShapeToString(shape_));
  }
  return shape_[static_cast<std::size_t>(axis)];
}

double Tensor::item() const {
  if (data_.size() != 1) {
    throw std::logic_error("item() on tensor of shape " + ShapeToString(shape_));
  }
  return data_[0];
}

Tensor Tensor::Reshaped(Shape shape) const { return Tensor(std::move(shape), data_); }

bool Tensor::AllFinite() const {
  for (double v : data_) {
    if (!std::isfinite(v)) return false;
  }
  return true;
}

}  // namespace langtime::ad
