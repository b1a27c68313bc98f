#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace cpsnn {

using Vector = std::vector<double>;

// Error taxonomy. The CLI maps these onto exit codes (config -> 1, data -> 2,
// invariant -> 3); library callers can catch std::runtime_error.
struct ConfigError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct NumericError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct ContractError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct DataError : std::runtime_error {
  using std::runtime_error::runtime_error;
};
struct InvariantError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

/// Dense row-major 2-D array. Vectors are stored as rows x 1.
struct Tensor {
  std::size_t rows = 0;
  std::size_t cols = 0;
  Vector data;

  Tensor() = default;
  Tensor(std::size_t r, std::size_t c, double fill = 0.0)
      : rows(r), cols(c), data(r * c, fill) {}

  static Tensor vector(std::size_t n, double fill = 0.0) { return {n, 1, fill}; }

  double& operator()(std::size_t r, std::size_t c) { return data[r * cols + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data[r * cols + c]; }
  double& operator[](std::size_t i) { return data[i]; }
  double operator[](std::size_t i) const { return data[i]; }

  std::size_t size() const { return data.size(); }
  std::span<const double> row(std::size_t r) const { return {data.data() + r * cols, cols}; }
  std::span<double> row(std::size_t r) { return {data.data() + r * cols, cols}; }

  bool operator==(const Tensor&) const = default;
};

inline double sigmoid(double x) {
  if (x >= 0.0) {
    return 1.0 / (1.0 + std::exp(-x));
  }
  const double e = std::exp(x);
  return e / (1.0 + e);
}

inline double logit(double p) { return std::log(p / (1.0 - p)); }

// out = m * x
inline void matvec(const Tensor& m, std::span<const double> x, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double* w = m.data.data() + r * m.cols;
    double acc = 0.0;
    for (std::size_t c = 0; c < m.cols; ++c) {
      acc += w[c] * x[c];
    }
    out[r] = acc;
  }
}

// out += m^T * y
inline void matvec_transposed_add(const Tensor& m, std::span<const double> y, std::span<double> out) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    const double* w = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) {
      out[c] += w[c] * yr;
    }
  }
}

// m += y x^T
inline void outer_add(Tensor& m, std::span<const double> y, std::span<const double> x) {
  for (std::size_t r = 0; r < m.rows; ++r) {
    const double yr = y[r];
    if (yr == 0.0) continue;
    double* w = m.data.data() + r * m.cols;
    for (std::size_t c = 0; c < m.cols; ++c) {
      w[c] += yr * x[c];
    }
  }
}

inline bool all_finite(std::span<const double> v) {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

inline void require_shape(const Tensor& t, std::size_t rows, std::size_t cols, const char* name) {
  if (t.rows != rows || t.cols != cols) {
    throw ConfigError(std::string(name) + ": expected shape " + std::to_string(rows) + "x" +
                      std::to_string(cols) + ", got " + std::to_string(t.rows) + "x" +
                      std::to_string(t.cols));
  }
}

}  // namespace cpsnn
