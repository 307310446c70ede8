// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/numerics.hpp"

#include <cmath>
#include <numeric>
#include <string>

#include "bhyt/error.hpp"
#include "bhyt/rng.hpp"

namespace bhyt {

namespace {

thread_local std::uint64_t g_moment_reductions = 0;

std::size_t product(const std::vector<std::size_t>& shape) {
  return std::accumulate(shape.begin(), shape.end(), std::size_t{1},
                         [](std::size_t a, std::size_t b) { return a * b; });
}

void check_rank(const std::vector<std::size_t>& shape) {
  if (shape.empty() || shape.size() > 3) {
    throw DimensionError("tensor rank must be 1..3, got " + std::to_string(shape.size()));
  }
}

void require_matrix(const Tensor& t, const char* op) {
  if (t.rank() != 2) {
    throw DimensionError(std::string(op) + ": expected a rank-2 tensor");
  }
}

void require_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (!a.same_shape(b)) {
    throw DimensionError(std::string(op) + ": shape mismatch");
  }
}

}  // namespace

Tensor::Tensor(std::vector<std::size_t> shape, double fill) : shape_(std::move(shape)) {
  check_rank(shape_);
  data_.assign(product(shape_), fill);
}

Tensor::Tensor(std::vector<std::size_t> shape, std::vector<double> data)
    : shape_(std::move(shape)), data_(std::move(data)) {
  check_rank(shape_);
  if (product(shape_) != data_.size()) {
    throw DimensionError("tensor data length does not match shape");
  }
}

Tensor Tensor::matrix(std::initializer_list<std::initializer_list<double>> rows) {
  const std::size_t r = rows.size();
  const std::size_t c = r ? rows.begin()->size() : 0;
  std::vector<double> data;
  data.reserve(r * c);
  for (const auto& row : rows) {
    if (row.size() != c) {
      throw DimensionError("ragged matrix literal");
    }
    data.insert(data.end(), row.begin(), row.end());
  }
  return Tensor({r, c}, std::move(data));
}

Tensor Tensor::vector(std::initializer_list<double> values) {
  return Tensor({values.size()}, std::vector<double>(values));
}

Tensor Tensor::identity(std::size_t n) {
  Tensor t({n, n});
  for (std::size_t i = 0; i < n; ++i) {
    t(i, i) = 1.0;
  }
  return t;
}

std::size_t Tensor::rows() const {
  if (shape_.empty()) {
    throw DimensionError("rows() on an empty tensor");
  }
  return shape_[0];
}

std::size_t Tensor::cols() const {
  if (shape_.size() != 2) {
    throw DimensionError("cols() requires a rank-2 tensor");
  }
  return shape_[1];
}

std::span<double> Tensor::row(std::size_t r) {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

std::span<const double> Tensor::row(std::size_t r) const {
  const std::size_t c = cols();
  return {data_.data() + r * c, c};
}

void Tensor::fill(double v) { std::fill(data_.begin(), data_.end(), v); }

bool all_finite(std::span<const double> values) noexcept {
  for (double v : values) {
    if (!std::isfinite(v)) {
      return false;
    }
  }
  return true;
}

void ensure_finite(const Tensor& t, std::string_view site) {
  if (!all_finite(t.data())) {
    throw NumericError(std::string(site));
  }
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul");
  require_matrix(b, "matmul");
  const std::size_t m = a.rows(), k = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul: inner dimensions " + std::to_string(k) + " and " +
                         std::to_string(b.rows()) + " differ");
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  // i-k-j order: each c[i][j] accumulates over k in ascending order.
  for (std::size_t i = 0; i < m; ++i) {
    double* crow = pc + i * n;
    for (std::size_t p = 0; p < k; ++p) {
      const double aip = pa[i * k + p];
      const double* brow = pb + p * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += aip * brow[j];
      }
    }
  }
  ensure_finite(c, "matmul");
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_matrix(a, "matmul_tn");
  require_matrix(b, "matmul_tn");
  const std::size_t k = a.rows(), m = a.cols(), n = b.cols();
  if (b.rows() != k) {
    throw DimensionError("matmul_tn: leading dimensions differ");
  }
  Tensor c({m, n});
  const double* pa = a.data().data();
  const double* pb = b.data().data();
  double* pc = c.data().data();
  for (std::size_t p = 0; p < k; ++p) {
    const double* brow = pb + p * n;
    for (std::size_t i = 0; i < m; ++i) {
      const double api = pa[p * m + i];
      double* crow = pc + i * n;
      for (std::size_t j = 0; j < n; ++j) {
        crow[j] += api * brow[j];
      }
    }
  }
  ensure_finite(c, "matmul_tn");
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_matrix(b, "matmul_nt");
  return matmul(a, transpose(b));
}

Tensor transpose(const Tensor& a) {
  require_matrix(a, "transpose");
  const std::size_t m = a.rows(), n = a.cols();
  Tensor t({n, m});
  for (std::size_t i = 0; i < m; ++i) {
    for (std::size_t j = 0; j < n; ++j) {
      t(j, i) = a(i, j);
    }
  }
  return t;
}

Tensor add(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "add");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] += b[i];
  }
  ensure_finite(c, "add");
  return c;
}

Tensor sub(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "sub");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] -= b[i];
  }
  ensure_finite(c, "sub");
  return c;
}

Tensor hadamard(const Tensor& a, const Tensor& b) {
  require_same_shape(a, b, "hadamard");
  Tensor c = a;
  for (std::size_t i = 0; i < c.size(); ++i) {
    c[i] *= b[i];
  }
  ensure_finite(c, "hadamard");
  return c;
}

Tensor scale(const Tensor& a, double s) {
  Tensor c = a;
  for (double& v : c.data()) {
    v *= s;
  }
  ensure_finite(c, "scale");
  return c;
}

void axpy(double alpha, const Tensor& x, Tensor& y) {
  require_same_shape(x, y, "axpy");
  for (std::size_t i = 0; i < y.size(); ++i) {
    y[i] += alpha * x[i];
  }
  ensure_finite(y, "axpy");
}

RowMoments rowwise_moments(const Tensor& x, bool centered) {
  require_matrix(x, "rowwise_moments");
  const std::size_t t = x.rows(), d = x.cols();
  if (d == 0) {
    throw DimensionError("rowwise_moments: feature dimension is zero");
  }
  ++g_moment_reductions;
  RowMoments out{Tensor({t}), Tensor({t})};
  const double inv_d = 1.0 / static_cast<double>(d);
  for (std::size_t r = 0; r < t; ++r) {
    const auto row = x.row(r);
    if (centered) {
      double sum = 0.0;
      for (double v : row) {
        sum += v;
      }
      const double mean = sum * inv_d;
      double ss = 0.0;
      for (double v : row) {
        ss += (v - mean) * (v - mean);
      }
      out.mean[r] = mean;
      out.var[r] = ss * inv_d;
    } else {
      double ss = 0.0;
      for (double v : row) {
        ss += v * v;
      }
      out.var[r] = ss * inv_d;
    }
  }
  ensure_finite(out.var, "rowwise_moments");
  return out;
}

std::uint64_t moment_reduction_count() noexcept { return g_moment_reductions; }
void reset_moment_reduction_count() noexcept { g_moment_reductions = 0; }

double frobenius_norm_sq(const Tensor& w) {
  require_matrix(w, "frobenius_norm_sq");
  double s = 0.0;
  for (double v : w.data()) {
    s += v * v;
  }
  if (!std::isfinite(s)) {
    throw NumericError("frobenius_norm_sq");
  }
  return s;
}

double mean_square(const Tensor& x) {
  if (x.empty()) {
    throw DimensionError("mean_square of an empty tensor");
  }
  double s = 0.0;
  for (double v : x.data()) {
    s += v * v;
  }
  return s / static_cast<double>(x.size());
}

double mean_abs(const Tensor& x) {
  if (x.empty()) {
    throw DimensionError("mean_abs of an empty tensor");
  }
  double s = 0.0;
  for (double v : x.data()) {
    s += std::abs(v);
  }
  return s / static_cast<double>(x.size());
}

Tensor gaussian(std::vector<std::size_t> shape, RngStream& rng, double stddev) {
  if (!(stddev >= 0.0) || !std::isfinite(stddev)) {
    throw ParameterError("gaussian: stddev must be finite and non-negative");
  }
  Tensor t(std::move(shape));
  for (double& v : t.data()) {
    v = stddev * rng.normal();
  }
  return t;
}

}  // namespace bhyt
