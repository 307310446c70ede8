// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <limits>

#include "bhyt/error.hpp"
#include "bhyt/numerics.hpp"
#include "bhyt/rng.hpp"
#include "doctest.h"

using namespace bhyt;

namespace {

Tensor naive_matmul(const Tensor& a, const Tensor& b) {
  Tensor c({a.rows(), b.cols()});
  for (std::size_t i = 0; i < a.rows(); ++i) {
    for (std::size_t j = 0; j < b.cols(); ++j) {
      double acc = 0.0;
      for (std::size_t k = 0; k < a.cols(); ++k) {
        acc += a(i, k) * b(k, j);
      }
      c(i, j) = acc;
    }
  }
  return c;
}

}  // namespace

TEST_CASE("tensor construction checks shape against data") {
  CHECK_THROWS_AS(Tensor({2, 2}, std::vector<double>{1, 2, 3}), DimensionError);
  CHECK_THROWS_AS(Tensor({1, 1, 1, 1}), DimensionError);
  const Tensor t({2, 3}, 1.5);
  CHECK(t.size() == 6);
  CHECK(t.rows() == 2);
  CHECK(t.cols() == 3);
}

TEST_CASE("matmul: identity and closed form") {
  const Tensor a = Tensor::matrix({{1, 2}, {3, 4}});
  CHECK(matmul(Tensor::identity(2), a) == a);
  CHECK(matmul(a, Tensor::identity(2)) == a);
  CHECK(matmul(a, Tensor::matrix({{0}, {1}})) == Tensor::matrix({{2}, {4}}));
}

TEST_CASE("matmul matches the naive triple loop exactly") {
  RngStream rng(7);
  for (int trial = 0; trial < 5; ++trial) {
    const Tensor a = gaussian({8, 8}, rng, 1.0);
    const Tensor b = gaussian({8, 8}, rng, 1.0);
    CHECK(matmul(a, b) == naive_matmul(a, b));
  }
  const Tensor a = gaussian({5, 7}, rng, 1.0);
  const Tensor b = gaussian({7, 3}, rng, 1.0);
  CHECK(matmul(a, b) == naive_matmul(a, b));
  CHECK(matmul_tn(transpose(a), b) == naive_matmul(a, b));
  const Tensor nt = matmul_nt(a, transpose(b));
  const Tensor ref = naive_matmul(a, b);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    CHECK(nt[i] == doctest::Approx(ref[i]).epsilon(1e-14));
  }
}

TEST_CASE("matmul rejects mismatched inner dimensions") {
  CHECK_THROWS_AS(matmul(Tensor({2, 3}), Tensor({2, 3})), DimensionError);
  CHECK_THROWS_AS(add(Tensor({2, 3}), Tensor({3, 2})), DimensionError);
}

TEST_CASE("operations reject non-finite results") {
  const Tensor big = Tensor::matrix({{1e200}});
  CHECK_THROWS_AS(matmul(big, big), NumericError);
  Tensor nan_input = Tensor::matrix({{std::numeric_limits<double>::quiet_NaN()}});
  CHECK_THROWS_AS(ensure_finite(nan_input, "probe"), NumericError);
  try {
    ensure_finite(nan_input, "probe");
  } catch (const NumericError& e) {
    CHECK(e.site() == "probe");
  }
}

TEST_CASE("rowwise_moments examples") {
  const RowMoments ones = rowwise_moments(Tensor::matrix({{1, 1, 1, 1}}), false);
  CHECK(ones.var[0] == 1.0);
  const RowMoments sym = rowwise_moments(Tensor::matrix({{1, -1}}), true);
  CHECK(sym.mean[0] == 0.0);
  CHECK(sym.var[0] == 1.0);
  const RowMoments seq = rowwise_moments(Tensor::matrix({{1, 2, 3, 4}}), false);
  CHECK(seq.var[0] == 7.5);
  CHECK_THROWS_AS(rowwise_moments(Tensor({3, 0}), false), DimensionError);
}

TEST_CASE("rowwise_moments counts reductions on the calling thread") {
  reset_moment_reduction_count();
  (void)rowwise_moments(Tensor({2, 2}, 1.0), false);
  (void)rowwise_moments(Tensor({2, 2}, 1.0), true);
  (void)mean_square(Tensor({2, 2}, 1.0));
  CHECK(moment_reduction_count() == 2);
}

TEST_CASE("centered variance equals uncentered moment of the centered input") {
  RngStream rng(11);
  Tensor x = gaussian({6, 17}, rng, 2.0);
  for (double& v : x.data()) v += 0.7;
  const RowMoments c = rowwise_moments(x, true);
  Tensor centered = x;
  for (std::size_t r = 0; r < x.rows(); ++r) {
    for (double& v : centered.row(r)) v -= c.mean[r];
  }
  const RowMoments u = rowwise_moments(centered, false);
  for (std::size_t r = 0; r < x.rows(); ++r) {
    CHECK(std::abs(c.var[r] - u.var[r]) <= 1e-12 * u.var[r]);
  }
}

TEST_CASE("frobenius_norm_sq") {
  CHECK(frobenius_norm_sq(Tensor::identity(5)) == 5.0);
  CHECK(frobenius_norm_sq(Tensor::matrix({{3, 4}})) == 25.0);
  RngStream rng(3);
  const Tensor w = gaussian({16, 16}, rng, 1.0);
  double oracle = 0.0;
  for (std::size_t r = 0; r < 16; ++r) {
    for (std::size_t c = 0; c < 16; ++c) oracle += w(r, c) * w(r, c);
  }
  CHECK(frobenius_norm_sq(w) == oracle);
  const Tensor wtw = matmul_tn(w, w);
  double trace = 0.0;
  for (std::size_t i = 0; i < 16; ++i) trace += wtw(i, i);
  CHECK(std::abs(trace - oracle) <= 1e-10 * oracle);
}

TEST_CASE("gaussian sampling") {
  RngStream zero_rng(1);
  const Tensor z = gaussian({10}, zero_rng, 0.0);
  for (double v : z.data()) CHECK(v == 0.0);
  RngStream a(42), b(42);
  CHECK(gaussian({4}, a, 1.0) == gaussian({4}, b, 1.0));
  CHECK_THROWS_AS(gaussian({4}, a, -1.0), ParameterError);

  RngStream big(2024);
  const Tensor s = gaussian({1000000}, big, 1.0);
  double mean = 0.0;
  for (double v : s.data()) mean += v;
  mean /= static_cast<double>(s.size());
  double var = 0.0;
  for (double v : s.data()) var += (v - mean) * (v - mean);
  var /= static_cast<double>(s.size() - 1);
  CHECK(std::abs(var - 1.0) < 0.01);
}

TEST_CASE("rng stream is reproducible and splits are distinct") {
  RngStream a(5), b(5);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  RngStream root(5);
  RngStream c1 = root.split(1), c2 = root.split(2);
  int equal = 0;
  for (int i = 0; i < 100; ++i) equal += c1.next_u64() == c2.next_u64();
  CHECK(equal == 0);
  RngStream u(9);
  for (int i = 0; i < 1000; ++i) {
    CHECK(u.below(7) < 7);
    const double x = u.uniform();
    CHECK(x >= 0.0);
    CHECK(x < 1.0);
  }
}
