// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0
//
// Dense f64 tensors and the deterministic kernels everything else is built on.
// Every kernel uses a fixed loop order and rejects non-finite results.

#pragma once

#include <cstddef>
#include <cstdint>
#include <initializer_list>
#include <optional>
#include <span>
#include <string_view>
#include <vector>

namespace bhyt {

/// Row-major array of doubles with rank 1 to 3.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<std::size_t> shape, double fill = 0.0);
  Tensor(std::vector<std::size_t> shape, std::vector<double> data);

  /// Rank-2 tensor from nested rows, e.g. `Tensor::matrix({{1, 2}, {3, 4}})`.
  static Tensor matrix(std::initializer_list<std::initializer_list<double>> rows);
  static Tensor vector(std::initializer_list<double> values);
  static Tensor identity(std::size_t n);

  const std::vector<std::size_t>& shape() const noexcept { return shape_; }
  std::size_t rank() const noexcept { return shape_.size(); }
  std::size_t size() const noexcept { return data_.size(); }
  bool empty() const noexcept { return data_.empty(); }

  /// Leading dimension; for rank 1 this is the length.
  std::size_t rows() const;
  /// Trailing dimension of a rank-2 tensor.
  std::size_t cols() const;

  double& operator[](std::size_t i) { return data_[i]; }
  double operator[](std::size_t i) const { return data_[i]; }
  double& operator()(std::size_t r, std::size_t c) { return data_[r * shape_[1] + c]; }
  double operator()(std::size_t r, std::size_t c) const { return data_[r * shape_[1] + c]; }

  std::span<double> data() noexcept { return data_; }
  std::span<const double> data() const noexcept { return data_; }
  std::span<double> row(std::size_t r);
  std::span<const double> row(std::size_t r) const;

  std::vector<double>& storage() noexcept { return data_; }
  const std::vector<double>& storage() const noexcept { return data_; }

  void fill(double v);
  bool same_shape(const Tensor& other) const noexcept { return shape_ == other.shape_; }
  bool operator==(const Tensor& other) const = default;

 private:
  std::vector<std::size_t> shape_;
  std::vector<double> data_;
};

/// Throws NumericError naming `site` if any element is NaN or Inf.
void ensure_finite(const Tensor& t, std::string_view site);
bool all_finite(std::span<const double> values) noexcept;

Tensor matmul(const Tensor& a, const Tensor& b);
/// aᵀ·b without materializing the transpose.
Tensor matmul_tn(const Tensor& a, const Tensor& b);
/// a·bᵀ without materializing the transpose.
Tensor matmul_nt(const Tensor& a, const Tensor& b);
Tensor transpose(const Tensor& a);

Tensor add(const Tensor& a, const Tensor& b);
Tensor sub(const Tensor& a, const Tensor& b);
Tensor hadamard(const Tensor& a, const Tensor& b);
Tensor scale(const Tensor& a, double s);
/// y += alpha * x, shapes must match.
void axpy(double alpha, const Tensor& x, Tensor& y);

struct RowMoments {
  Tensor mean;  // [T]; zero when uncentered
  Tensor var;   // [T]; population variance (centered) or mean square
};

/// Per-row statistics over the feature dimension with divisor d.
/// Each call counts as one exact moment reduction (see moment_reduction_count).
RowMoments rowwise_moments(const Tensor& x, bool centered);

/// Number of rowwise_moments calls made by the current thread.
std::uint64_t moment_reduction_count() noexcept;
void reset_moment_reduction_count() noexcept;

double frobenius_norm_sq(const Tensor& w);

/// Mean of x² over all elements; not counted as a moment reduction.
double mean_square(const Tensor& x);
double mean_abs(const Tensor& x);

class RngStream;

/// i.i.d. N(0, stddev²) samples.
Tensor gaussian(std::vector<std::size_t> shape, RngStream& rng, double stddev);

}  // namespace bhyt
