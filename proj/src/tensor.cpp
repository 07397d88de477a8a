#include "iega/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <numeric>
#include <sstream>

#include "iega/error.hpp"

namespace iega {

std::size_t numel_of(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

std::string shape_to_string(const Shape& shape) {
  std::ostringstream out;
  out << "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i > 0) out << "x";
    out << shape[i];
  }
  out << "]";
  return out.str();
}

Tensor::Tensor() : values_{0.0} {}

Tensor::Tensor(Shape shape, std::vector<double> values)
    : shape_(std::move(shape)), values_(std::move(values)) {
  if (numel_of(shape_) != values_.size()) {
    throw ShapeError("tensor shape " + shape_to_string(shape_) + " needs " +
                     std::to_string(numel_of(shape_)) + " values, got " +
                     std::to_string(values_.size()));
  }
  for (double v : values_) {
    if (!std::isfinite(v)) throw NumericError("non-finite tensor value");
  }
}

Tensor Tensor::zeros(Shape shape) { return full(std::move(shape), 0.0); }

Tensor Tensor::full(Shape shape, double value) {
  const std::size_t n = numel_of(shape);
  return Tensor(std::move(shape), std::vector<double>(n, value));
}

Tensor Tensor::scalar(double value) { return Tensor({}, {value}); }

Tensor Tensor::row(std::vector<double> values) {
  const std::size_t n = values.size();
  return Tensor({1, n}, std::move(values));
}

std::size_t Tensor::rows() const {
  if (rank() != 2) throw ShapeError("rows() on non-matrix " + shape_to_string(shape_));
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (rank() != 2) throw ShapeError("cols() on non-matrix " + shape_to_string(shape_));
  return shape_[1];
}

double Tensor::at(std::size_t r, std::size_t c) const {
  return values_[r * cols() + c];
}

double Tensor::item() const {
  if (numel() != 1) {
    throw ShapeError("item() on tensor of shape " + shape_to_string(shape_));
  }
  return values_[0];
}

Shape broadcast_shape(const Shape& a, const Shape& b, const char* op) {
  if (a == b) return a;
  if (numel_of(b) == 1) return a;
  if (numel_of(a) == 1) return b;
  throw ShapeError(std::string(op) + ": incompatible shapes " +
                   shape_to_string(a) + " and " + shape_to_string(b));
}

namespace {

template <class F>
Tensor binary(const Tensor& a, const Tensor& b, const char* name, F f) {
  Shape out_shape = broadcast_shape(a.shape(), b.shape(), name);
  const std::size_t n = numel_of(out_shape);
  const bool a_bcast = a.numel() != n;
  const bool b_bcast = b.numel() != n;
  std::vector<double> out(n);
  for (std::size_t i = 0; i < n; ++i) {
    out[i] = f(a[a_bcast ? 0 : i], b[b_bcast ? 0 : i]);
  }
  return Tensor(std::move(out_shape), std::move(out));
}

template <class F>
Tensor unary(const Tensor& a, F f) {
  std::vector<double> out(a.numel());
  for (std::size_t i = 0; i < out.size(); ++i) out[i] = f(a[i]);
  return Tensor(a.shape(), std::move(out));
}

void require_matrix(const Tensor& a, const char* op) {
  if (a.rank() != 2) {
    throw ShapeError(std::string(op) + ": expected a matrix, got " +
                     shape_to_string(a.shape()));
  }
}

}  // namespace

Tensor add(const Tensor& a, const Tensor& b) {
  return binary(a, b, "add", [](double x, double y) { return x + y; });
}

Tensor sub(const Tensor& a, const Tensor& b) {
  return binary(a, b, "sub", [](double x, double y) { return x - y; });
}

Tensor mul(const Tensor& a, const Tensor& b) {
  return binary(a, b, "mul", [](double x, double y) { return x * y; });
}

Tensor div(const Tensor& a, const Tensor& b) {
  return binary(a, b, "div", [](double x, double y) { return x / y; });
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t n = a.rows(), k = a.cols(), m = b.cols();
  if (b.rows() != k) {
    throw ShapeError("matmul: inner dimensions differ " +
                     shape_to_string(a.shape()) + " x " +
                     shape_to_string(b.shape()));
  }
  std::vector<double> out(n * m, 0.0);
  const auto av = a.values();
  const auto bv = b.values();
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = av[i * k + p];
      const double* brow = bv.data() + p * m;
      double* orow = out.data() + i * m;
      for (std::size_t j = 0; j < m; ++j) orow[j] += aip * brow[j];
    }
  }
  return Tensor({n, m}, std::move(out));
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t r = a.rows(), c = a.cols();
  std::vector<double> out(r * c);
  for (std::size_t i = 0; i < r; ++i) {
    for (std::size_t j = 0; j < c; ++j) out[j * r + i] = a[i * c + j];
  }
  return Tensor({c, r}, std::move(out));
}

Tensor gather(const Tensor& table, std::span<const std::size_t> rows) {
  require_matrix(table, "gather");
  const std::size_t c = table.cols();
  std::vector<double> out;
  out.reserve(rows.size() * c);
  for (std::size_t r : rows) {
    if (r >= table.rows()) {
      throw ShapeError("gather: row " + std::to_string(r) + " out of range " +
                       std::to_string(table.rows()));
    }
    const auto v = table.values().subspan(r * c, c);
    out.insert(out.end(), v.begin(), v.end());
  }
  return Tensor({rows.size(), c}, std::move(out));
}

Tensor scatter_rows(const Tensor& src, std::span<const std::size_t> rows,
                    std::size_t total_rows) {
  require_matrix(src, "scatter_rows");
  if (src.rows() != rows.size()) {
    throw ShapeError("scatter_rows: " + std::to_string(src.rows()) +
                     " rows for " + std::to_string(rows.size()) + " indices");
  }
  const std::size_t c = src.cols();
  std::vector<double> out(total_rows * c, 0.0);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (rows[i] >= total_rows) throw ShapeError("scatter_rows: index out of range");
    for (std::size_t j = 0; j < c; ++j) out[rows[i] * c + j] += src[i * c + j];
  }
  return Tensor({total_rows, c}, std::move(out));
}

Tensor sum(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v;
  return Tensor::scalar(s);
}

Tensor mean(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("mean of empty tensor");
  return Tensor::scalar(sum(a).item() / static_cast<double>(a.numel()));
}

Tensor tanh(const Tensor& a) {
  return unary(a, [](double x) { return std::tanh(x); });
}

Tensor relu(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? x : 0.0; });
}

Tensor exp(const Tensor& a) {
  return unary(a, [](double x) { return std::exp(x); });
}

Tensor log(const Tensor& a) {
  return unary(a, [](double x) { return std::log(x); });
}

Tensor softmax(const Tensor& a) {
  if (a.numel() == 0) throw ShapeError("softmax of empty tensor");
  const double m = *std::max_element(a.values().begin(), a.values().end());
  std::vector<double> out(a.numel());
  double z = 0.0;
  for (std::size_t i = 0; i < out.size(); ++i) {
    out[i] = std::exp(a[i] - m);
    z += out[i];
  }
  for (double& v : out) v /= z;
  return Tensor(a.shape(), std::move(out));
}

Tensor dot(const Tensor& a, const Tensor& b) {
  if (a.numel() != b.numel()) {
    throw ShapeError("dot: sizes differ " + shape_to_string(a.shape()) +
                     " and " + shape_to_string(b.shape()));
  }
  double s = 0.0;
  for (std::size_t i = 0; i < a.numel(); ++i) s += a[i] * b[i];
  return Tensor::scalar(s);
}

Tensor abs(const Tensor& a) {
  return unary(a, [](double x) { return std::fabs(x); });
}

Tensor scale(const Tensor& a, double factor) {
  return unary(a, [factor](double x) { return x * factor; });
}

Tensor concat(std::span<const Tensor> parts) {
  if (parts.empty()) throw ShapeError("concat of zero tensors");
  const std::size_t c = parts.front().cols();
  std::size_t r = 0;
  std::vector<double> out;
  for (const Tensor& p : parts) {
    require_matrix(p, "concat");
    if (p.cols() != c) {
      throw ShapeError("concat: column counts differ " +
                       shape_to_string(parts.front().shape()) + " and " +
                       shape_to_string(p.shape()));
    }
    r += p.rows();
    out.insert(out.end(), p.values().begin(), p.values().end());
  }
  return Tensor({r, c}, std::move(out));
}

Tensor slice_rows(const Tensor& a, std::size_t start, std::size_t count) {
  require_matrix(a, "slice_rows");
  if (start + count > a.rows()) throw ShapeError("slice_rows: range out of bounds");
  const std::size_t c = a.cols();
  const auto v = a.values().subspan(start * c, count * c);
  return Tensor({count, c}, std::vector<double>(v.begin(), v.end()));
}

Tensor expand(const Tensor& a, const Shape& shape) {
  if (a.numel() != 1) {
    throw ShapeError("expand: source must hold one element, got " +
                     shape_to_string(a.shape()));
  }
  return Tensor::full(shape, a[0]);
}

Tensor reshape(const Tensor& a, const Shape& shape) {
  if (numel_of(shape) != a.numel()) {
    throw ShapeError("reshape: " + shape_to_string(a.shape()) + " to " +
                     shape_to_string(shape));
  }
  return Tensor(shape, std::vector<double>(a.values().begin(), a.values().end()));
}

Tensor sign(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? 1.0 : (x < 0.0 ? -1.0 : 0.0); });
}

Tensor step(const Tensor& a) {
  return unary(a, [](double x) { return x > 0.0 ? 1.0 : 0.0; });
}

double l2_norm(const Tensor& a) {
  double s = 0.0;
  for (double v : a.values()) s += v * v;
  return std::sqrt(s);
}

}  // namespace iega
