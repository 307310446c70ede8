// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <vector>

#include "bhyt/bounds.hpp"
#include "bhyt/error.hpp"
#include "bhyt/rng.hpp"
#include "bhyt/stats.hpp"
#include "bhyt/var_accuracy.hpp"
#include "doctest.h"

using namespace bhyt;

namespace {

long double naive_mean(const std::vector<double>& v) {
  long double s = 0;
  for (double x : v) s += x;
  return s / static_cast<long double>(v.size());
}

double naive_pearson(const std::vector<double>& x, const std::vector<double>& y) {
  const long double mx = naive_mean(x), my = naive_mean(y);
  long double sxy = 0, sxx = 0, syy = 0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  return static_cast<double>(sxy / std::sqrt(sxx * syy));
}

// Rank by counting: rank = (#less) + (#equal + 1) / 2.
std::vector<double> naive_ranks(const std::vector<double>& v) {
  std::vector<double> r(v.size());
  for (std::size_t i = 0; i < v.size(); ++i) {
    double less = 0, equal = 0;
    for (double w : v) {
      less += w < v[i];
      equal += w == v[i];
    }
    r[i] = less + (equal + 1.0) / 2.0;
  }
  return r;
}

double naive_r2(const std::vector<double>& pred, const std::vector<double>& truth) {
  const long double m = naive_mean(truth);
  long double res = 0, tot = 0;
  for (std::size_t i = 0; i < truth.size(); ++i) {
    res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
    tot += (truth[i] - m) * (truth[i] - m);
  }
  return static_cast<double>(1.0L - res / tot);
}

}  // namespace

TEST_CASE("metric examples") {
  const std::vector<double> truth = {1, 2, 3, 4};
  CHECK(rmse(truth, truth) == 0.0);
  CHECK(r_squared(truth, truth) == 1.0);
  CHECK(pearson(truth, truth) == doctest::Approx(1.0));
  CHECK(spearman(truth, truth) == doctest::Approx(1.0));
  const std::vector<double> shifted = {2, 3, 4, 5};
  CHECK(rmse(shifted, truth) == doctest::Approx(1.0));
  CHECK(r_squared(shifted, truth) == doctest::Approx(1.0 - 4.0 / 5.0));
  CHECK(pearson(shifted, truth) == doctest::Approx(1.0));
  const std::vector<double> reversed = {4, 3, 2, 1};
  CHECK(pearson(reversed, truth) == doctest::Approx(-1.0));
  CHECK(spearman(reversed, truth) == doctest::Approx(-1.0));
  const std::vector<double> cubic = {1, 8, 27, 64};
  CHECK(spearman(cubic, truth) == doctest::Approx(1.0));
  CHECK(pearson(cubic, truth) < 1.0);
}

TEST_CASE("tied values share average ranks") {
  const std::vector<double> v = {3, 1, 3, 2, 3};
  const std::vector<double> r = average_ranks(v);
  CHECK(r == std::vector<double>{4, 1, 4, 2, 4});
}

TEST_CASE("metric errors") {
  const std::vector<double> a = {1, 2, 3};
  const std::vector<double> b = {1, 2};
  const std::vector<double> flat = {2, 2, 2};
  CHECK_THROWS_AS(rmse(a, b), DimensionError);
  CHECK_THROWS_AS(pearson(std::vector<double>{1}, std::vector<double>{1}), DimensionError);
  CHECK_THROWS_AS(r_squared(a, flat), DegenerateInputError);
  CHECK_THROWS_AS(pearson(a, flat), DegenerateInputError);
  const std::vector<double> bad = {1, NAN, 3};
  CHECK_THROWS_AS(rmse(a, bad), NumericError);
}

TEST_CASE("metrics agree with naive reference implementations") {
  RngStream rng(77);
  for (int trial = 0; trial < 50; ++trial) {
    const std::size_t n = 3 + rng.below(200);
    std::vector<double> x(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
      // Coarse rounding forces ties in some trials.
      x[i] = trial % 3 == 0 ? std::round(rng.normal() * 3.0) : rng.normal();
      y[i] = 0.7 * x[i] + 0.5 * rng.normal();
    }
    const AgreementMetrics m = agreement(x, y);
    long double se = 0;
    for (std::size_t i = 0; i < n; ++i) se += (x[i] - y[i]) * (x[i] - y[i]);
    CHECK(m.rmse == doctest::Approx(std::sqrt(static_cast<double>(se / n))).epsilon(1e-12));
    CHECK(m.r_squared == doctest::Approx(naive_r2(x, y)).epsilon(1e-10));
    CHECK(m.pearson == doctest::Approx(naive_pearson(x, y)).epsilon(1e-10));
    CHECK(average_ranks(x) == naive_ranks(x));
    CHECK(m.spearman == doctest::Approx(naive_pearson(naive_ranks(x), naive_ranks(y))).epsilon(1e-10));
  }
}

TEST_CASE("sampled distributions have the requested moments") {
  for (Distribution d : kAllDistributions) {
    RngStream rng(5);
    const std::size_t n = 400000;
    long double s1 = 0, s2 = 0;
    for (std::size_t i = 0; i < n; ++i) {
      const double x = sample(d, 0.5, 1.3, rng);
      s1 += x;
      s2 += x * x;
    }
    const double mean = static_cast<double>(s1 / n);
    const double var = static_cast<double>(s2 / n) - mean * mean;
    CAPTURE(to_string(d));
    CHECK(mean == doctest::Approx(0.5).epsilon(0.02));
    CHECK(var == doctest::Approx(1.69).epsilon(0.03));
  }
}

TEST_CASE("chebyshev coverage reaches p for every distribution") {
  RngStream rng(8);
  for (Distribution d : kAllDistributions) {
    for (double p : {0.75, 0.9, 0.99}) {
      CHECK(chebyshev_coverage(d, -1.0, 0.7, 2.0, p, 50000, rng) >= p);
    }
  }
  CHECK_THROWS_AS(chebyshev_coverage(Distribution::Gaussian, 0, 1, 1, 0.9, 0, rng), ParameterError);
}

TEST_CASE("tanh variance lies in its bracket") {
  RngStream rng(9);
  for (double lambda : {0.5, 1.0, 2.0, 3.0}) {
    const TanhVarianceCheck c = tanh_variance_mc(lambda, 10.0, 200000, rng);
    CAPTURE(lambda);
    const double r = std::tanh(lambda) / lambda;
    CHECK(c.upper == doctest::Approx(lambda * lambda / 100.0));
    CHECK(c.lower == doctest::Approx(r * r * lambda * lambda / 100.0));
    CHECK(c.std_error > 0.0);
    CHECK(c.within(3.0));
  }
  CHECK_THROWS_AS(tanh_variance_mc(1.0, 1.0, 100, rng), ParameterError);
  CHECK_THROWS_AS(tanh_variance_mc(0.0, 10.0, 100, rng), ParameterError);
}

TEST_CASE("identity weights in the linear tanh regime make injection exact") {
  VarAccuracyConfig c;
  c.d = c.d_v = c.d_m = 32;
  c.seq_len = 32;
  c.n_layers = 4;
  c.n_inputs = 20;
  c.identity_weights = true;
  c.hyper.lambda_attn = 1e-3;
  c.hyper.lambda_mlp = 5e-4;
  const VarAccuracyResult r = variance_accuracy(c);
  REQUIRE(r.points.size() == 80);
  for (const VarPoint& p : r.points) CHECK(p.injected == doctest::Approx(p.exact).epsilon(1e-4));
  CHECK(r.metrics.r_squared == doctest::Approx(1.0).epsilon(1e-5));
  CHECK(r.metrics.pearson == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("variance accuracy is deterministic and validates its config") {
  VarAccuracyConfig c;
  c.d = c.d_v = 16;
  c.d_m = 32;
  c.seq_len = 16;
  c.n_layers = 3;
  c.n_inputs = 5;
  const VarAccuracyResult a = variance_accuracy(c);
  const VarAccuracyResult b = variance_accuracy(c);
  REQUIRE(a.points.size() == 15);
  for (std::size_t i = 0; i < a.points.size(); ++i) {
    CHECK(a.points[i].injected == b.points[i].injected);
    CHECK(a.points[i].exact == b.points[i].exact);
    CHECK(a.points[i].layer == 1 + i % 3);
    CHECK(a.points[i].input == i / 3);
  }
  c.placement = Placement::RMSNormApprox;
  CHECK(variance_accuracy(c).metrics.pearson > 0.9);
  c.placement = Placement::PreLN;
  CHECK_THROWS_AS(variance_accuracy(c), ParameterError);
  c.placement = Placement::BHyT;
  c.identity_weights = true;
  CHECK_THROWS_AS(variance_accuracy(c), DimensionError);
}
