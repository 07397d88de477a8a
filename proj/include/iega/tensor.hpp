#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace iega {

using Shape = std::vector<std::size_t>;

std::size_t numel_of(const Shape& shape);
std::string shape_to_string(const Shape& shape);

// Dense row-major tensor of 64-bit reals. Construction rejects non-finite
// values and shape/size mismatches, so every live Tensor is finite.
class Tensor {
 public:
  // Rank-0 scalar holding 0.
  Tensor();
  Tensor(Shape shape, std::vector<double> values);

  static Tensor zeros(Shape shape);
  static Tensor full(Shape shape, double value);
  static Tensor scalar(double value);
  static Tensor row(std::vector<double> values);

  const Shape& shape() const { return shape_; }
  std::span<const double> values() const { return values_; }
  std::size_t numel() const { return values_.size(); }
  std::size_t rank() const { return shape_.size(); }

  // Rank-2 accessors.
  std::size_t rows() const;
  std::size_t cols() const;
  double at(std::size_t r, std::size_t c) const;

  double operator[](std::size_t i) const { return values_[i]; }
  // Value of a single-element tensor.
  double item() const;

  bool operator==(const Tensor& other) const = default;

 private:
  Shape shape_;
  std::vector<double> values_;
};

// Numeric kernels. Binary elementwise ops accept equal shapes or a
// single-element operand, which is broadcast.
Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor mul(const Tensor& a, const Tensor& b);
Tensor div(const Tensor& a, const Tensor& b);
Tensor matmul(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);
Tensor gather(const Tensor& table, std::span<const std::size_t> rows);
Tensor scatter_rows(const Tensor& src, std::span<const std::size_t> rows,
                    std::size_t total_rows);
Tensor sum(const Tensor& a);
Tensor mean(const Tensor& a);
Tensor tanh(const Tensor& a);
Tensor relu(const Tensor& a);
Tensor exp(const Tensor& a);
Tensor log(const Tensor& a);
Tensor softmax(const Tensor& a);
Tensor dot(const Tensor& a, const Tensor& b);
Tensor abs(const Tensor& a);
Tensor scale(const Tensor& a, double factor);
Tensor concat(std::span<const Tensor> parts);
Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count);
Tensor expand(const Tensor& a, const Shape& shape);
Tensor reshape(const Tensor& a, const Shape& shape);

// Elementwise sign (0 at 0) and step (1 where x > 0); used as constant
// masks in backward rules.
Tensor sign(const Tensor& a);
Tensor step(const Tensor& a);

// Shape of an elementwise binary op result, or ShapeError.
Shape broadcast_shape(const Shape& a, const Shape& b, const char* op);

double l2_norm(const Tensor& a);

}  // namespace iega
