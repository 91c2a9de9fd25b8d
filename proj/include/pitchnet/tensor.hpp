#ifndef PITCHNET_TENSOR_HPP
#define PITCHNET_TENSOR_HPP

#include <cmath>
#include <cstddef>
#include <functional>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "pitchnet/error.hpp"

namespace pitchnet {

using Shape = std::vector<std::size_t>;

inline std::size_t shape_size(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) out += (i ? "x" : "") + std::to_string(shape[i]);
  return out + "]";
}

/// Dense row-major array of doubles.
struct Tensor {
  Shape shape;
  std::vector<double> data;

  Tensor() = default;
  explicit Tensor(Shape s, double fill = 0.0) : shape(std::move(s)), data(shape_size(shape), fill) {}
  Tensor(Shape s, std::vector<double> values) : shape(std::move(s)), data(std::move(values)) {
    if (data.size() != shape_size(shape)) fail(ErrorCode::ShapeMismatch, "tensor data does not match shape " + shape_string(shape));
  }

  std::size_t size() const { return data.size(); }
  std::size_t rows() const { return shape.empty() ? 0 : shape[0]; }
  std::size_t cols() const { return shape.size() < 2 ? 1 : data.size() / shape[0]; }

  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }
  double& at(std::size_t r, std::size_t c) { return data[r * cols() + c]; }
  double at(std::size_t r, std::size_t c) const { return data[r * cols() + c]; }

  std::span<double> row(std::size_t r) { return {data.data() + r * cols(), cols()}; }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols(), cols()}; }

  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Tensor&) const = default;
};

inline bool all_finite(std::span<const double> v) {
  for (double x : v)
    if (!std::isfinite(x)) return false;
  return true;
}

// Kernels over row-major [rows x cols] matrices.

/// out = m * x + out
inline void matvec_acc(const Tensor& m, std::span<const double> x, std::span<double> out) {
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double* w = m.data.data() + r * cols;
    double s = 0.0;
    for (std::size_t c = 0; c < cols; ++c) s += w[c] * x[c];
    out[r] += s;
  }
}

/// out += m^T * v
inline void matvec_t_acc(const Tensor& m, std::span<const double> v, std::span<double> out) {
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double a = v[r];
    if (a == 0.0) continue;
    const double* w = m.data.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) out[c] += a * w[c];
  }
}

/// m += u * v^T
inline void outer_acc(Tensor& m, std::span<const double> u, std::span<const double> v) {
  const std::size_t cols = m.cols();
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const double a = u[r];
    if (a == 0.0) continue;
    double* w = m.data.data() + r * cols;
    for (std::size_t c = 0; c < cols; ++c) w[c] += a * v[c];
  }
}

}  // namespace pitchnet

#endif  // PITCHNET_TENSOR_HPP
