// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include <cmath>
#include <cstring>

#include "bhyt/error.hpp"
#include "bhyt/norm_layers.hpp"
#include "bhyt/rng.hpp"
#include "bhyt/variance_estimator.hpp"
#include "doctest.h"

using namespace bhyt;

TEST_CASE("attn_output_variance with identity weights") {
  const Tensor eye = Tensor::identity(100);
  const VarianceEstimate e = attn_output_variance(eye, eye, 100, 100, 2.0, 10.0, 7);
  CHECK(e.value == doctest::Approx(4e-4).epsilon(1e-14));
  CHECK(e.computed_at_step == 7);
  CHECK(e.source == EstimateSource::AttnClosedForm);
}

TEST_CASE("attn_output_variance decreases monotonically in T") {
  RngStream rng(1);
  const Tensor wv = gaussian({16, 8}, rng, 0.25);
  const Tensor wo = gaussian({8, 16}, rng, 0.35);
  double prev = attn_output_variance(wv, wo, 1, 16, 2.0, 10.0).value;
  for (std::size_t t : {2, 4, 16, 256, 4096, 1 << 20}) {
    const double v = attn_output_variance(wv, wo, t, 16, 2.0, 10.0).value;
    CHECK(v < prev);
    CHECK(v >= 0.0);
    prev = v;
  }
}

TEST_CASE("attn_output_variance rejects inconsistent shapes") {
  CHECK_THROWS_AS(attn_output_variance(Tensor({4, 3}), Tensor({2, 4}), 8, 4, 1.0, 10.0),
                  DimensionError);
  CHECK_THROWS_AS(attn_output_variance(Tensor({4, 3}), Tensor({3, 5}), 8, 4, 1.0, 10.0),
                  DimensionError);
  CHECK_THROWS_AS(attn_output_variance(Tensor({4, 3}), Tensor({3, 4}), 0, 4, 1.0, 10.0),
                  DimensionError);
}

TEST_CASE("attn_output_variance is scale-equivariant in W_V") {
  RngStream rng(2);
  const Tensor wv = gaussian({12, 12}, rng, 0.3);
  const Tensor wo = gaussian({12, 12}, rng, 0.3);
  const double base = attn_output_variance(wv, wo, 32, 12, 2.0, 10.0).value;
  CHECK(attn_output_variance(scale(wv, 2.0), wo, 32, 12, 2.0, 10.0).value == 4.0 * base);
  CHECK(attn_output_variance(scale(wv, 3.0), wo, 32, 12, 2.0, 10.0).value ==
        doctest::Approx(9.0 * base).epsilon(1e-14));
}

TEST_CASE("attn closed form matches a uniform-attention Monte Carlo") {
  const std::size_t d = 128, t = 256, trials = 200;
  const double lambda = 2.0, kappa = 10.0;
  RngStream rng(77);
  const Tensor wv = gaussian({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor wo = gaussian({d, d}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor w = matmul(wv, wo);
  NormConfig cfg = NormConfig::make(NormKind::BHyT, d);
  cfg.lambda = lambda;
  cfg.kappa = kappa;

  double acc = 0.0;
  for (std::size_t k = 0; k < trials; ++k) {
    const Tensor z = norm_forward(gaussian({t, d}, rng, 1.0), cfg);
    Tensor avg({1, d});
    for (std::size_t r = 0; r < t; ++r) {
      for (std::size_t i = 0; i < d; ++i) avg(0, i) += z(r, i) / static_cast<double>(t);
    }
    acc += mean_square(matmul(avg, w));
  }
  const double mc = acc / static_cast<double>(trials);
  const double closed = attn_output_variance(wv, wo, t, d, lambda, kappa).value;
  CHECK(std::abs(closed - mc) / mc < 0.15);
}

TEST_CASE("mlp_output_variance examples") {
  const Tensor eye = Tensor::identity(8);
  CHECK(mlp_output_variance(eye, eye, 1.0, 2.5, 8).value == doctest::Approx(2.5).epsilon(1e-15));
  RngStream rng(3);
  const Tensor w1 = gaussian({8, 16}, rng, 1.0);
  const Tensor w2 = gaussian({16, 8}, rng, 1.0);
  CHECK(mlp_output_variance(w1, w2, 0.0, 2.5, 8).value == 0.0);
  CHECK_THROWS_AS(mlp_output_variance(w1, w2, -1.0, 1.0, 8), ParameterError);
  CHECK_THROWS_AS(mlp_output_variance(w1, w2, 1.0, -1.0, 8), ParameterError);
  CHECK_THROWS_AS(mlp_output_variance(w1, w1, 1.0, 1.0, 8), DimensionError);
}

TEST_CASE("mlp closed form matches a linear Monte Carlo") {
  const std::size_t d = 64, dm = 256, n = 10000;
  const double s_z2 = 0.7;
  RngStream rng(55);
  const Tensor w1 = gaussian({d, dm}, rng, 1.0 / std::sqrt(static_cast<double>(d)));
  const Tensor w2 = gaussian({dm, d}, rng, 1.0 / std::sqrt(static_cast<double>(dm)));
  const Tensor z = gaussian({n, d}, rng, std::sqrt(s_z2));
  const double mc = mean_square(matmul(matmul(z, w1), w2));
  const double closed = mlp_output_variance(w1, w2, 1.0, s_z2, d).value;
  CHECK(std::abs(closed - mc) / mc < 0.10);
}

TEST_CASE("residual_variance_sum") {
  CHECK(residual_variance_sum(0.0, 0.25).value == 0.25);
  CHECK(residual_variance_sum(1.0, 4e-4).value == doctest::Approx(1.0004).epsilon(1e-15));
  CHECK(residual_variance_sum(1.0, 4e-4).source == EstimateSource::ResidualSum);
}

TEST_CASE("calibrate_tau") {
  RngStream rng(9);
  CHECK(calibrate_tau(Activation::Identity, 1.0, 100000, rng) == doctest::Approx(1.0).epsilon(1e-9));
  const double relu = calibrate_tau("relu", 1.0, 1000000, rng);
  const double relu_oracle = 0.5 - 1.0 / (2.0 * M_PI);
  CHECK(std::abs(relu - relu_oracle) < 0.005);
  const double small_tanh = calibrate_tau(Activation::Tanh, 0.01, 100000, rng);
  CHECK(std::abs(small_tanh - 1.0) < 0.03);
  CHECK(calibrate_tau(Activation::SiLU, 1.0, 10000, rng) >= 0.0);
  CHECK_THROWS_AS(calibrate_tau("gelu", 1.0, 10000, rng), ParameterError);
  CHECK_THROWS_AS(calibrate_tau(Activation::Tanh, 1.0, 999, rng), ParameterError);
}

TEST_CASE("maybe_refresh follows the policy") {
  int calls = 0;
  double weight = 1.0;
  const auto recompute = [&](std::int64_t step) {
    ++calls;
    return VarianceEstimate{weight * 0.125, step, EstimateSource::AttnClosedForm, false};
  };

  SUBCASE("interval 1 recomputes every step") {
    VarianceEstimate e{0.0, 0, EstimateSource::AttnClosedForm, false};
    for (std::int64_t s = 1; s <= 10; ++s) {
      e = maybe_refresh(e, s, RefreshPolicy{1}, recompute);
      CHECK(e.computed_at_step == s);
    }
    CHECK(calls == 10);
  }

  SUBCASE("interval 100 caches between firings") {
    VarianceEstimate e = recompute(0);
    calls = 0;
    const VarianceEstimate cached = e;
    for (std::int64_t s = 1; s <= 99; ++s) {
      weight = 1.0 + static_cast<double>(s);
      e = maybe_refresh(e, s, RefreshPolicy{100}, recompute);
      CHECK(e.computed_at_step == 0);
      CHECK(std::memcmp(&e.value, &cached.value, sizeof(double)) == 0);
    }
    CHECK(calls == 0);
    e = maybe_refresh(e, 100, RefreshPolicy{100}, recompute);
    CHECK(calls == 1);
    CHECK(e.computed_at_step == 100);
    CHECK(e.value != cached.value);
  }

  SUBCASE("explicit invalidation forces a recompute") {
    VarianceEstimate e = recompute(0);
    e.invalidated = true;
    weight = 3.0;
    e = maybe_refresh(e, 5, RefreshPolicy{100}, recompute);
    CHECK(e.computed_at_step == 5);
    CHECK(e.value == 0.375);
    CHECK_FALSE(e.invalidated);
  }

  SUBCASE("stepping backwards is rejected") {
    VarianceEstimate e = recompute(50);
    CHECK_THROWS_AS(maybe_refresh(e, 49, RefreshPolicy{100}, recompute), ParameterError);
  }
}
