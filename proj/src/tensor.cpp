#include "intrinsic/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <sstream>

#include "intrinsic/errors.hpp"

namespace intrinsic {

std::int64_t shape_numel(const Shape& shape) {
  std::int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeError("negative dimension in " + shape_str(shape));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) os << ',';
    os << shape[i];
  }
  os << ')';
  return os.str();
}

Tensor::Tensor(Shape shape, double fill)
    : shape_(std::move(shape)), data_(static_cast<std::size_t>(shape_numel(shape_)), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : Tensor(std::move(shape), Buffer(values.begin(), values.end())) {}

Tensor::Tensor(Shape shape, Buffer values) : shape_(std::move(shape)), data_(std::move(values)) {
  if (static_cast<std::int64_t>(data_.size()) != shape_numel(shape_)) {
    throw ShapeError("value count " + std::to_string(data_.size()) + " does not match shape " +
                     shape_str(shape_));
  }
}

double& Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) {
  return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

double Tensor::at(std::int64_t n, std::int64_t c, std::int64_t h, std::int64_t w) const {
  return data_[static_cast<std::size_t>(((n * shape_[1] + c) * shape_[2] + h) * shape_[3] + w)];
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor of shape " + shape_str(shape_));
  return data_[0];
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != static_cast<std::int64_t>(data_.size())) {
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  }
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::batch_slice(std::int64_t index) const {
  if (shape_.empty() || index < 0 || index >= shape_[0]) {
    throw ShapeError("batch index " + std::to_string(index) + " out of range for " + shape_str(shape_));
  }
  Shape s = shape_;
  s[0] = 1;
  const auto stride = static_cast<std::size_t>(shape_numel(s));
  Buffer v(data_.begin() + static_cast<std::ptrdiff_t>(stride * index),
                        data_.begin() + static_cast<std::ptrdiff_t>(stride * (index + 1)));
  return Tensor(std::move(s), std::move(v));
}

Tensor stack_batch(std::span<const Tensor> items) {
  if (items.empty()) throw ShapeError("stack_batch of zero tensors");
  Shape s = items.front().shape();
  if (s.size() != 4) throw ShapeError("stack_batch expects rank-4 tensors, got " + shape_str(s));
  std::int64_t batch = 0;
  for (const auto& t : items) {
    Shape ts = t.shape();
    if (ts.size() != 4 || ts[1] != s[1] || ts[2] != s[2] || ts[3] != s[3]) {
      throw ShapeError("stack_batch shape mismatch: " + shape_str(s) + " vs " + shape_str(ts));
    }
    batch += ts[0];
  }
  Buffer v;
  v.reserve(static_cast<std::size_t>(batch * s[1] * s[2] * s[3]));
  for (const auto& t : items) v.insert(v.end(), t.values().begin(), t.values().end());
  s[0] = batch;
  return Tensor(std::move(s), std::move(v));
}

bool bit_identical(const Tensor& a, const Tensor& b) {
  return a.shape() == b.shape() &&
         (a.size() == 0 || std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) {
    throw ShapeError("max_abs_diff shape mismatch: " + shape_str(a.shape()) + " vs " +
                     shape_str(b.shape()));
  }
  double m = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace intrinsic
