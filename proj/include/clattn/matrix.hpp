#pragma once

// Dense row-major matrix and the handful of reference operations every kernel
// builds on. Storage is T (float by default); reductions accumulate in double.

#include <clattn/error.hpp>
#include <clattn/memory.hpp>

#include <algorithm>
#include <cmath>
#include <concepts>
#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace clattn {

template <std::floating_point T>
class BasicMatrix {
 public:
  using value_type = T;

  BasicMatrix() = default;

  BasicMatrix(std::size_t rows, std::size_t cols) : rows_(rows), cols_(cols), data_(rows * cols, T{0}) {}

  template <typename Alloc>
  BasicMatrix(std::size_t rows, std::size_t cols, const std::vector<T, Alloc>& values)
      : rows_(rows), cols_(cols), data_(values.begin(), values.end()) {
    detail::require(data_.size() == rows * cols, "matrix data length does not match rows * cols");
    detail::require(all_finite(), "matrix data contains non-finite values");
  }

  BasicMatrix(std::initializer_list<std::initializer_list<T>> rows) : rows_(rows.size()) {
    cols_ = rows.size() ? rows.begin()->size() : 0;
    data_.reserve(rows_ * cols_);
    for (const auto& r : rows) {
      detail::require(r.size() == cols_, "ragged matrix literal");
      data_.insert(data_.end(), r.begin(), r.end());
    }
    detail::require(all_finite(), "matrix data contains non-finite values");
  }

  static BasicMatrix identity(std::size_t n) {
    BasicMatrix m(n, n);
    for (std::size_t i = 0; i < n; ++i) m(i, i) = T{1};
    return m;
  }

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  T& operator()(std::size_t r, std::size_t c) noexcept { return data_[r * cols_ + c]; }
  const T& operator()(std::size_t r, std::size_t c) const noexcept { return data_[r * cols_ + c]; }

  std::span<T> row(std::size_t r) noexcept { return {data_.data() + r * cols_, cols_}; }
  std::span<const T> row(std::size_t r) const noexcept { return {data_.data() + r * cols_, cols_}; }

  std::span<T> data() noexcept { return data_; }
  std::span<const T> data() const noexcept { return data_; }

  bool all_finite() const noexcept {
    return std::all_of(data_.begin(), data_.end(), [](T x) { return std::isfinite(x); });
  }

  friend bool operator==(const BasicMatrix& a, const BasicMatrix& b) {
    return a.rows_ == b.rows_ && a.cols_ == b.cols_ && std::equal(a.data_.begin(), a.data_.end(), b.data_.begin());
  }

 private:
  std::size_t rows_ = 0;
  std::size_t cols_ = 0;
  TrackedVector<T> data_;
};

using Matrix = BasicMatrix<float>;

template <std::floating_point T>
BasicMatrix<T> transpose(const BasicMatrix<T>& m) {
  BasicMatrix<T> out(m.cols(), m.rows());
  for (std::size_t r = 0; r < m.rows(); ++r)
    for (std::size_t c = 0; c < m.cols(); ++c) out(c, r) = m(r, c);
  return out;
}

// Inner product of two equal-length spans, accumulated in double.
template <typename A, typename B>
double dot(const A& a, const B& b) noexcept {
  double acc = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += static_cast<double>(a[i]) * static_cast<double>(b[i]);
  return acc;
}

template <std::floating_point T>
BasicMatrix<T> matmul(const BasicMatrix<T>& a, const BasicMatrix<T>& b) {
  detail::require(a.cols() == b.rows(), "matmul: a.cols must equal b.rows");
  BasicMatrix<T> out(a.rows(), b.cols());
  std::vector<double> acc(b.cols());
  for (std::size_t i = 0; i < a.rows(); ++i) {
    std::fill(acc.begin(), acc.end(), 0.0);
    for (std::size_t p = 0; p < a.cols(); ++p) {
      const double aip = a(i, p);
      const auto brow = b.row(p);
      for (std::size_t j = 0; j < b.cols(); ++j) acc[j] += aip * static_cast<double>(brow[j]);
    }
    for (std::size_t j = 0; j < b.cols(); ++j) out(i, j) = static_cast<T>(acc[j]);
  }
  return out;
}

// In-place stable softmax over a double buffer; returns the denominator.
inline double softmax_inplace(std::span<double> x) noexcept {
  if (x.empty()) return 0.0;
  const double mx = *std::max_element(x.begin(), x.end());
  double sum = 0.0;
  for (double& v : x) {
    v = std::exp(v - mx);
    sum += v;
  }
  for (double& v : x) v /= sum;
  return sum;
}

template <std::floating_point T>
BasicMatrix<T> softmax_rows(const BasicMatrix<T>& m) {
  detail::require(!m.empty(), "softmax_rows: empty matrix");
  BasicMatrix<T> out(m.rows(), m.cols());
  std::vector<double> buf(m.cols());
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto in = m.row(r);
    std::copy(in.begin(), in.end(), buf.begin());
    softmax_inplace(buf);
    auto dst = out.row(r);
    for (std::size_t c = 0; c < m.cols(); ++c) dst[c] = static_cast<T>(buf[c]);
  }
  return out;
}

struct SpectralNorm {
  double value = 0.0;
  bool converged = false;
  int iterations = 0;
};

// Largest singular value by power iteration on m^T m. The estimate is the
// square root of a Rayleigh quotient, hence never above the true norm.
template <std::floating_point T>
SpectralNorm spectral_norm(const BasicMatrix<T>& m, double rel_tol = 1e-6, int max_iters = 1000) {
  detail::require(!m.empty(), "spectral_norm: empty matrix");
  const std::size_t n = m.cols();

  std::vector<double> gram(n * n, 0.0);
  for (std::size_t r = 0; r < m.rows(); ++r) {
    const auto row = m.row(r);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < n; ++j) gram[i * n + j] += static_cast<double>(row[i]) * row[j];
  }

  // Fixed pseudo-random start; an all-ones start can be orthogonal to the
  // dominant singular vector.
  std::mt19937_64 rng(0x5eed5eedULL);
  std::uniform_real_distribution<double> unif(0.5, 1.5);
  std::vector<double> x(n), y(n);
  for (double& v : x) v = unif(rng);

  auto normalize = [](std::vector<double>& v) {
    double s = 0.0;
    for (double e : v) s += e * e;
    s = std::sqrt(s);
    if (s > 0.0)
      for (double& e : v) e /= s;
    return s;
  };
  normalize(x);

  SpectralNorm result;
  double lambda = 0.0;
  for (int it = 1; it <= max_iters; ++it) {
    for (std::size_t i = 0; i < n; ++i) {
      double acc = 0.0;
      for (std::size_t j = 0; j < n; ++j) acc += gram[i * n + j] * x[j];
      y[i] = acc;
    }
    double next = 0.0;  // Rayleigh quotient x^T G x with |x| = 1
    for (std::size_t i = 0; i < n; ++i) next += x[i] * y[i];
    result.iterations = it;
    if (normalize(y) == 0.0) {
      lambda = 0.0;
      result.converged = true;
      break;
    }
    x.swap(y);
    const bool settled = std::abs(next - lambda) <= rel_tol * std::max(next, 1e-300);
    lambda = std::max(lambda, next);
    if (settled) {
      result.converged = true;
      break;
    }
  }
  result.value = std::sqrt(std::max(lambda, 0.0));
  return result;
}

namespace detail {
template <std::floating_point T>
void check_row_pair(const BasicMatrix<T>& a, const BasicMatrix<T>& b, std::size_t ra, std::size_t rb) {
  require(a.cols() == b.cols(), "row distance: column counts differ");
  require(ra < a.rows() && rb < b.rows(), "row distance: row index out of range");
}
}  // namespace detail

template <std::floating_point T>
double row_l1_distance(const BasicMatrix<T>& a, const BasicMatrix<T>& b, std::size_t row_a, std::size_t row_b) {
  detail::check_row_pair(a, b, row_a, row_b);
  double acc = 0.0;
  const auto x = a.row(row_a);
  const auto y = b.row(row_b);
  for (std::size_t c = 0; c < x.size(); ++c) acc += std::abs(static_cast<double>(x[c]) - y[c]);
  return acc;
}

template <std::floating_point T>
double row_l2_distance(const BasicMatrix<T>& a, const BasicMatrix<T>& b, std::size_t row_a, std::size_t row_b) {
  detail::check_row_pair(a, b, row_a, row_b);
  double acc = 0.0;
  const auto x = a.row(row_a);
  const auto y = b.row(row_b);
  for (std::size_t c = 0; c < x.size(); ++c) {
    const double d = static_cast<double>(x[c]) - y[c];
    acc += d * d;
  }
  return std::sqrt(acc);
}

}  // namespace clattn
