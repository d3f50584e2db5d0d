#pragma once

#include <cstddef>
#include <initializer_list>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace blurcast {

/// Tensor dimensions with inline storage (rank <= 4).
class Shape {
 public:
  static constexpr std::size_t kMaxRank = 4;
  using value_type = std::size_t;
  using iterator = std::size_t*;
  using const_iterator = const std::size_t*;

  Shape() = default;
  Shape(std::initializer_list<std::size_t> dims) : Shape(dims.begin(), dims.end()) {}
  template <class It>
  Shape(It first, It last) {
    for (; first != last; ++first) push_back(static_cast<std::size_t>(*first));
  }

  std::size_t size() const { return rank_; }
  bool empty() const { return rank_ == 0; }
  std::size_t& operator[](std::size_t i) { return dims_[i]; }
  std::size_t operator[](std::size_t i) const { return dims_[i]; }
  std::size_t* begin() { return dims_; }
  std::size_t* end() { return dims_ + rank_; }
  const std::size_t* begin() const { return dims_; }
  const std::size_t* end() const { return dims_ + rank_; }
  std::size_t at(std::size_t i) const {
    if (i >= rank_) throw std::out_of_range("shape index");
    return dims_[i];
  }
  std::size_t front() const { return dims_[0]; }
  std::size_t back() const { return dims_[rank_ - 1]; }
  void push_back(std::size_t d) {
    if (rank_ == kMaxRank) throw std::length_error("tensor rank above 4");
    dims_[rank_++] = d;
  }

  friend bool operator==(const Shape& a, const Shape& b) {
    if (a.rank_ != b.rank_) return false;
    for (std::size_t i = 0; i < a.rank_; ++i)
      if (a.dims_[i] != b.dims_[i]) return false;
    return true;
  }

 private:
  std::size_t dims_[kMaxRank] = {};
  std::size_t rank_ = 0;
};

std::size_t shape_numel(const Shape& shape);
std::string shape_str(const Shape& shape);

struct ShapeError : std::invalid_argument {
  using std::invalid_argument::invalid_argument;
};

struct DomainError : std::domain_error {
  using std::domain_error::domain_error;
};

/// Raised when a forward value leaves the finite range. The training loop
/// treats this as a rejected step rather than letting NaN reach the optimizer.
struct NonFiniteError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct NotPositiveDefinite : std::runtime_error {
  NotPositiveDefinite(std::size_t pivot_index, double pivot_value);
  std::size_t pivot;
  double value;
};

/// Dense row-major tensor of doubles.
class Tensor {
 public:
  Tensor() : shape_{0} {}
  explicit Tensor(Shape shape, double fill = 0.0);
  Tensor(Shape shape, std::vector<double> data);

  static Tensor scalar(double v) { return Tensor(Shape{}, std::vector<double>{v}); }
  static Tensor vector(std::vector<double> v);
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor identity(std::size_t n);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t numel() const { return data_.size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }
  std::size_t rows() const {
    if (rank() != 2) not_a_matrix("rows");
    return shape_[0];
  }
  std::size_t cols() const {
    if (rank() != 2) not_a_matrix("cols");
    return shape_[1];
  }

  double operator[](std::size_t i) const { return data_[i]; }
  double& operator[](std::size_t i) { return data_[i]; }
  // Unchecked; the tensor must be a matrix.
  double at(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }
  double& at(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double item() const;

  std::span<const double> data() const { return data_; }
  std::span<double> data() { return data_; }
  const std::vector<double>& values() const { return data_; }

  bool all_finite() const;
  Tensor reshaped(Shape shape) const;
  Tensor transposed() const;

  friend bool operator==(const Tensor&, const Tensor&) = default;

 private:
  [[noreturn]] void not_a_matrix(const char* what) const;

  Shape shape_;
  std::vector<double> data_;
};

double max_abs_diff(const Tensor& a, const Tensor& b);

}  // namespace blurcast
