#pragma once

#include <cstddef>
#include <initializer_list>
#include <numeric>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace styletx {

/// Base class for every error the library raises.
class Error : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Operand shapes do not conform to an op or a declared parameter layout.
class ShapeError : public Error {
 public:
  using Error::Error;
};

/// An index (token id, row id) lies outside its table.
class IndexError : public Error {
 public:
  using Error::Error;
};

/// NaN or infinity where a finite value is required.
class NumericError : public Error {
 public:
  using Error::Error;
};

/// Bad or missing input data (files, records, corpora).
class DataError : public Error {
 public:
  using Error::Error;
};

/// Invalid configuration or usage.
class ConfigError : public Error {
 public:
  using Error::Error;
};

/// Misuse of the differentiation tape (stale handles, double backward).
class TapeError : public Error {
 public:
  using Error::Error;
};

using Shape = std::vector<std::size_t>;

/// Index into a vocabulary or embedding table.
using TokenId = std::size_t;

inline std::size_t element_count(const Shape& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         std::multiplies<>());
}

inline std::string to_string(const Shape& shape) {
  std::string out = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) out += ", ";
    out += std::to_string(shape[i]);
  }
  return out + "]";
}

/// Dense row-major array of doubles.
///
/// Rank 0 is a scalar, rank 1 a vector, rank 2 a matrix. Ops treat a vector
/// as a single row, which is how a bias broadcasts over a leading batch
/// dimension.
struct Tensor {
  Shape shape{0};
  std::vector<double> values;
  bool requires_grad = false;

  Tensor() = default;

  Tensor(Shape s, std::vector<double> v, bool grad = false)
      : shape(std::move(s)), values(std::move(v)), requires_grad(grad) {
    if (element_count(shape) != values.size()) {
      throw ShapeError("tensor shape " + to_string(shape) + " holds " +
                       std::to_string(element_count(shape)) +
                       " values, got " + std::to_string(values.size()));
    }
  }

  static Tensor zeros(Shape s) { return full(std::move(s), 0.0); }

  static Tensor full(Shape s, double value) {
    const auto n = element_count(s);
    return Tensor(std::move(s), std::vector<double>(n, value));
  }

  static Tensor scalar(double value) { return Tensor(Shape{}, {value}); }

  static Tensor vector(std::vector<double> v) {
    const auto n = v.size();
    return Tensor(Shape{n}, std::move(v));
  }

  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows) {
    const std::size_t r = rows.size();
    const std::size_t c = r ? rows.begin()->size() : 0;
    std::vector<double> v;
    v.reserve(r * c);
    for (const auto& row : rows) {
      if (row.size() != c) throw ShapeError("ragged matrix literal");
      v.insert(v.end(), row.begin(), row.end());
    }
    return Tensor(Shape{r, c}, std::move(v));
  }

  std::size_t size() const { return values.size(); }
  std::size_t rank() const { return shape.size(); }

  /// Row count when viewed as a matrix (vectors and scalars are one row).
  std::size_t rows() const { return rank() == 2 ? shape[0] : 1; }
  /// Column count when viewed as a matrix.
  std::size_t cols() const {
    if (rank() == 2) return shape[1];
    if (rank() == 1) return shape[0];
    return 1;
  }

  double& operator()(std::size_t r, std::size_t c) { return values[r * cols() + c]; }
  double operator()(std::size_t r, std::size_t c) const { return values[r * cols() + c]; }
  double& operator[](std::size_t i) { return values[i]; }
  double operator[](std::size_t i) const { return values[i]; }

  double item() const {
    if (values.size() != 1) {
      throw ShapeError("item() on tensor of shape " + to_string(shape));
    }
    return values[0];
  }
};

}  // namespace styletx
