#include "hypermeta/tensor.hpp"

#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

namespace hypermeta {

std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_string(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << 'x';
    os << shape[i];
  }
  os << ']';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)) {
  for (std::size_t d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
  data_.assign(shape_size(shape_), fill);
}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(data.begin(), data.end()) {
  for (std::size_t d : shape_)
    if (d == 0) throw ShapeError("tensor dimensions must be positive, got " + shape_string(shape_));
  if (shape_size(shape_) != data_.size())
    throw ShapeError("shape " + shape_string(shape_) + " does not match " + std::to_string(data_.size()) +
                     " values");
}

Tensor Tensor::scalar(double value) { return Tensor(Shape{1}, std::vector<double>{value}); }

Tensor Tensor::vector(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor(Shape{n}, std::move(values));
}

Tensor Tensor::matrix(std::size_t rows, std::size_t cols, std::vector<double> values) {
  return Tensor(Shape{rows, cols}, std::move(values));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_string(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  for (double v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_size(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_string(shape_) + " to " + shape_string(shape));
  Tensor t = *this;
  t.shape_ = std::move(shape);
  return t;
}

void Tensor::fill(double value) { std::fill(data_.begin(), data_.end(), value); }

void Tensor::add_(const Tensor& other, double alpha) {
  if (other.size() != size()) throw ShapeError("add_: size mismatch");
  for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += alpha * other.data_[i];
}

void require_finite(const Tensor& t, const std::string& what) {
  const auto d = t.data();
  for (std::size_t i = 0; i < d.size(); ++i)
    if (!std::isfinite(d[i]))
      throw NonFiniteError(what + ": non-finite value " + std::to_string(d[i]) + " at index " + std::to_string(i));
}

}  // namespace hypermeta
