#include "blurcast/tensor.hpp"

#include <bit>
#include <cmath>
#include <cstdint>
#include <sstream>

namespace blurcast {

std::size_t shape_numel(const Shape& shape) {
  std::size_t n = 1;
  for (auto d : shape) n *= d;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

NotPositiveDefinite::NotPositiveDefinite(std::size_t pivot_index, double pivot_value)
    : std::runtime_error("not positive definite: pivot " + std::to_string(pivot_index) +
                         " = " + std::to_string(pivot_value)),
      pivot(pivot_index),
      value(pivot_value) {}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(shape_numel(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_numel(shape_) != data_.size())
    throw ShapeError("tensor shape " + shape_str(shape_) + " does not match " +
                     std::to_string(data_.size()) + " values");
}

Tensor Tensor::vector(std::vector<double> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) throw ShapeError("ragged matrix literal");
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) t.at(i, i) = 1.0;
  return t;
}

void Tensor::not_a_matrix(const char* what) const {
  throw ShapeError(std::string(what) + "() on non-matrix " + shape_str(shape_));
}

double Tensor::item() const {
  if (data_.size() != 1) throw ShapeError("item() on tensor " + shape_str(shape_));
  return data_[0];
}

bool Tensor::all_finite() const {
  // exponent bits all set: inf or nan
  constexpr std::uint64_t kExp = 0x7ff0000000000000ULL;
  std::size_t bad = 0;
  for (double v : data_) bad += (std::bit_cast<std::uint64_t>(v) & kExp) == kExp;
  return bad == 0;
}

Tensor Tensor::reshaped(Shape shape) const {
  if (shape_numel(shape) != data_.size())
    throw ShapeError("cannot reshape " + shape_str(shape_) + " to " + shape_str(shape));
  return Tensor(std::move(shape), data_);
}

Tensor Tensor::transposed() const {
  const std::size_t r = rows(), c = cols();
  Tensor t({c, r});
  for (std::size_t i = 0; i < r; ++i)
    for (std::size_t j = 0; j < c; ++j) t.at(j, i) = at(i, j);
  return t;
}

double max_abs_diff(const Tensor& a, const Tensor& b) {
  if (a.shape() != b.shape()) throw ShapeError("max_abs_diff shape mismatch");
  double m = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

}  // namespace blurcast
