// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include <algorithm>
#include <cmath>
#include <functional>
#include <vector>

#include "bhyt/error.hpp"
#include "bhyt/norm_layers.hpp"
#include "bhyt/rng.hpp"
#include "doctest.h"

using namespace bhyt;

namespace {

constexpr NormKind kAllKinds[] = {NormKind::RMSNorm, NormKind::RMSNormApprox, NormKind::LNS,
                                  NormKind::DyT,     NormKind::BHyTStar,      NormKind::BHyT};

double weighted_sum(const Tensor& y, const Tensor& w) {
  double acc = 0.0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += y[i] * w[i];
  return acc;
}

double rel_error(std::span<const double> a, std::span<const double> n) {
  double diff = 0.0, scale = 1e-12;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff = std::max(diff, std::abs(a[i] - n[i]));
    scale = std::max({scale, std::abs(a[i]), std::abs(n[i])});
  }
  return diff / scale;
}

/// Central differences of L = Σ w ⊙ f(x) through the scalar-valued closure.
std::vector<double> central_diff(std::vector<double> params,
                                 const std::function<double(const std::vector<double>&)>& loss,
                                 double h = 1e-6) {
  std::vector<double> g(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const double keep = params[i];
    params[i] = keep + h;
    const double up = loss(params);
    params[i] = keep - h;
    const double down = loss(params);
    params[i] = keep;
    g[i] = (up - down) / (2.0 * h);
  }
  return g;
}

NormConfig random_config(NormKind kind, std::size_t d, RngStream& rng) {
  NormConfig cfg = NormConfig::make(kind, d);
  for (double& g : cfg.gamma.data()) g = 0.5 + rng.uniform();
  cfg.lambda = 1.5;
  cfg.kappa = 3.0;
  cfg.alpha_dyt = 0.7;
  cfg.layer_index = 3;
  return cfg;
}

double student_t5(RngStream& rng) {
  double chi2 = 0.0;
  for (int k = 0; k < 5; ++k) {
    const double z = rng.normal();
    chi2 += z * z;
  }
  return rng.normal() / std::sqrt(chi2 / 5.0);
}

}  // namespace

TEST_CASE("chebyshev_scale examples") {
  CHECK(kappa_from_probability(0.99) == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(chebyshev_scale(0.0, 1.0, 1.0, 0.99) == doctest::Approx(0.1).epsilon(1e-12));
  CHECK(chebyshev_scale(2.0, 0.0, 1.0, 0.99) == doctest::Approx(0.5).epsilon(1e-12));
  CHECK(chebyshev_scale(1.0, 2.0, 2.0, 0.96) == doctest::Approx(2.0 / 11.0).epsilon(1e-12));
  CHECK_THROWS_AS(chebyshev_scale(0.0, 0.0, 1.0, 0.99), DegenerateInputError);
  CHECK_THROWS_AS(chebyshev_scale(0.0, 1.0, 0.0, 0.99), ParameterError);
  CHECK_THROWS_AS(kappa_from_probability(1.0), ParameterError);
}

TEST_CASE("chebyshev coverage holds for several distributions") {
  const double mu = 0.5, s = 1.3, lambda = 1.0;
  const std::size_t n = 100000;
  for (double p : {0.75, 0.9, 0.99}) {
    const double alpha = chebyshev_scale(mu, s, lambda, p);
    RngStream rng(100 + static_cast<std::uint64_t>(p * 100));
    const std::function<double()> samplers[] = {
        [&] { return mu + s * rng.normal(); },
        [&] {
          const double u = rng.uniform() - 0.5;
          const double b = s / std::sqrt(2.0);
          return mu - b * (u < 0 ? -1.0 : 1.0) * std::log(1.0 - 2.0 * std::abs(u));
        },
        [&] { return mu + s * std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0); },
        [&] { return mu + s * student_t5(rng) / std::sqrt(5.0 / 3.0); },
    };
    for (const auto& draw : samplers) {
      std::size_t inside = 0;
      for (std::size_t i = 0; i < n; ++i) inside += std::abs(alpha * draw()) <= lambda;
      CHECK(static_cast<double>(inside) / static_cast<double>(n) >= p);
    }
  }
}

TEST_CASE("bhyt_star_forward examples") {
  NormConfig cfg = NormConfig::make(NormKind::BHyTStar, 2);
  cfg.lambda = 1.0;
  cfg.kappa = 10.0;
  cfg.eps = 0.0;
  const Tensor y = bhyt_star_forward(Tensor::matrix({{1, -1}}), cfg);
  CHECK(y[0] == doctest::Approx(std::tanh(0.1)).epsilon(1e-14));
  CHECK(y[1] == doctest::Approx(-std::tanh(0.1)).epsilon(1e-14));
  CHECK_THROWS_AS(bhyt_star_forward(Tensor({1, 2}), cfg), DegenerateInputError);

  cfg.eps = 1e-8;
  const Tensor zero = bhyt_star_forward(Tensor({1, 2}), cfg);
  CHECK(zero[0] == 0.0);
  CHECK(zero[1] == 0.0);
  CHECK_THROWS_AS(bhyt_forward(Tensor({1, 2}), cfg), ParameterError);
}

TEST_CASE("bhyt_star tanh argument is invariant to positive rescaling") {
  RngStream rng(5);
  const Tensor x = gaussian({3, 9}, rng, 1.0);
  NormConfig cfg = NormConfig::make(NormKind::BHyTStar, 9);
  cfg.eps = 0.0;
  NormCache base, scaled;
  (void)bhyt_star_forward(x, cfg, &base);
  (void)bhyt_star_forward(scale(x, 37.5), cfg, &scaled);
  for (std::size_t r = 0; r < 3; ++r) {
    for (std::size_t i = 0; i < 9; ++i) {
      const double arg_a = base.scale[r] * x(r, i);
      const double arg_b = scaled.scale[r] * 37.5 * x(r, i);
      CHECK(arg_b == doctest::Approx(arg_a).epsilon(1e-13));
    }
  }
}

TEST_CASE("bhyt_forward examples") {
  NormConfig cfg = NormConfig::make(NormKind::BHyT, 4);
  cfg.lambda = 2.0;
  cfg.kappa = 10.0;
  cfg.eps = 0.0;
  const Tensor x = Tensor::matrix({{1, -1, 1, -1}});
  const Tensor z = bhyt_forward(x, cfg);
  for (std::size_t i = 0; i < 4; ++i) {
    CHECK(z[i] == doctest::Approx(std::tanh(0.2 * x[i])).epsilon(1e-15));
  }

  RngStream rng(8);
  const Tensor xr = gaussian({5, 6}, rng, 1.5);
  NormConfig exact = NormConfig::make(NormKind::BHyT, 6);
  NormConfig injected = exact;
  injected.variance_source = VarianceSource::Injected;
  const RowMoments m = rowwise_moments(xr, false);
  const Tensor a = bhyt_forward(xr, exact);
  const Tensor b = bhyt_forward(xr, injected, m.var.data());
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(std::abs(a[i] - b[i]) <= 1e-15);

  const double neg = -1.0;
  CHECK_THROWS_AS(bhyt_forward(xr, injected, {&neg, 1}), ParameterError);

  const double zero_var = 0.0;
  const Tensor sat = bhyt_forward(Tensor::matrix({{3.0, -2.0}}),
                                  [&] {
                                    NormConfig c = NormConfig::make(NormKind::BHyT, 2);
                                    c.variance_source = VarianceSource::Injected;
                                    return c;
                                  }(),
                                  {&zero_var, 1});
  CHECK(sat[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(sat[1] == doctest::Approx(-1.0).epsilon(1e-12));
}

TEST_CASE("exact mode ignores the injected value") {
  NormConfig cfg = NormConfig::make(NormKind::BHyT, 2);
  const double bogus = 1e6;
  const Tensor x = Tensor::matrix({{0.3, -0.9}});
  CHECK(bhyt_forward(x, cfg, {&bogus, 1}) == bhyt_forward(x, cfg));
}

TEST_CASE("rmsnorm_forward examples") {
  NormConfig cfg = NormConfig::make(NormKind::RMSNorm, 2);
  cfg.eps = 0.0;
  const Tensor y = rmsnorm_forward(Tensor::matrix({{2, -2}}), cfg);
  CHECK(y[0] == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(-1.0).epsilon(1e-15));
  cfg.eps = 1e-6;
  const Tensor z = rmsnorm_forward(Tensor({1, 2}), cfg);
  CHECK(z[0] == 0.0);
  CHECK(z[1] == 0.0);

  RngStream rng(12);
  const Tensor x = gaussian({4, 16}, rng, 3.0);
  NormConfig exact = NormConfig::make(NormKind::RMSNorm, 16);
  const Tensor out = rmsnorm_forward(x, exact);
  const RowMoments ms = rowwise_moments(out, false);
  for (std::size_t r = 0; r < 4; ++r) CHECK(ms.var[r] == doctest::Approx(1.0).epsilon(1e-8));

  NormConfig approx = NormConfig::make(NormKind::RMSNormApprox, 16);
  const RowMoments mx = rowwise_moments(x, false);
  const Tensor ap = rmsnorm_forward(x, approx, mx.var.data());
  for (std::size_t i = 0; i < ap.size(); ++i) CHECK(std::abs(ap[i] - out[i]) <= 1e-15);
  const double neg = -0.5;
  CHECK_THROWS_AS(rmsnorm_forward(x, approx, {&neg, 1}), ParameterError);
}

TEST_CASE("lns_forward examples") {
  RngStream rng(13);
  const Tensor x = gaussian({3, 8}, rng, 1.0);
  NormConfig rms = NormConfig::make(NormKind::RMSNorm, 8);
  NormConfig lns = NormConfig::make(NormKind::LNS, 8);
  lns.layer_index = 1;
  CHECK(lns_forward(x, lns) == rmsnorm_forward(x, rms));

  lns.layer_index = 4;
  lns.eps = 0.0;
  const Tensor y = lns_forward(Tensor::matrix({{2, -2}}), [&] {
    NormConfig c = NormConfig::make(NormKind::LNS, 2);
    c.layer_index = 4;
    c.eps = 0.0;
    return c;
  }());
  CHECK(y[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(y[1] == doctest::Approx(-0.5).epsilon(1e-15));

  lns = NormConfig::make(NormKind::LNS, 8);
  lns.layer_index = 100;
  const Tensor deep = lns_forward(x, lns);
  const Tensor ref = rmsnorm_forward(x, rms);
  for (std::size_t i = 0; i < x.size(); ++i) {
    CHECK(deep[i] == doctest::Approx(ref[i] * 0.1).epsilon(1e-14));
  }
  lns.layer_index = 0;
  CHECK_THROWS_AS(lns_forward(x, lns), ParameterError);
}

TEST_CASE("dyt_forward examples") {
  NormConfig cfg = NormConfig::make(NormKind::DyT, 1);
  cfg.gamma = Tensor::vector({2.0});
  cfg.alpha_dyt = 1.0;
  CHECK(dyt_forward(Tensor::matrix({{1.0}}), cfg)[0] ==
        doctest::Approx(2.0 * std::tanh(1.0)).epsilon(1e-15));
  CHECK(dyt_forward(Tensor::matrix({{1.0}}), cfg)[0] == doctest::Approx(1.5232).epsilon(1e-4));
  cfg.alpha_dyt = 0.0;
  RngStream rng(1);
  const Tensor x = gaussian({2, 1}, rng, 5.0);
  const Tensor y = dyt_forward(x, cfg);
  for (double v : y.data()) CHECK(v == 0.0);
}

TEST_CASE("config validation") {
  NormConfig cfg = NormConfig::make(NormKind::BHyT, 4);
  cfg.kappa = 1.0;
  CHECK_THROWS_AS(cfg.validate(4), ParameterError);
  cfg.kappa = 10.0;
  cfg.lambda = 0.0;
  CHECK_THROWS_AS(cfg.validate(4), ParameterError);
  cfg.lambda = 1.0;
  CHECK_THROWS_AS(cfg.validate(5), DimensionError);
  NormConfig lns = NormConfig::make(NormKind::LNS, 4);
  lns.variance_source = VarianceSource::Injected;
  CHECK_THROWS_AS(lns.validate(4), ParameterError);
  CHECK(NormConfig::make(NormKind::RMSNormApprox, 4).scale_grad == ScaleGrad::StopGradient);
  CHECK(NormConfig::make(NormKind::BHyT, 4).scale_grad == ScaleGrad::Differentiate);
  for (NormKind k : kAllKinds) CHECK(norm_kind_from_string(to_string(k)) == k);
  CHECK_THROWS_AS(norm_kind_from_string("layernorm"), ParameterError);
}

TEST_CASE("boundedness of tanh kinds for arbitrary inputs") {
  RngStream rng(21);
  for (NormKind kind : {NormKind::DyT, NormKind::BHyT, NormKind::BHyTStar}) {
    NormConfig cfg = random_config(kind, 12, rng);
    for (double& g : cfg.gamma.data()) g = (rng.uniform() - 0.5) * 4.0;
    for (int trial = 0; trial < 20; ++trial) {
      Tensor x = gaussian({4, 12}, rng, std::pow(10.0, trial % 7 - 3));
      x[0] = 1e6;
      const Tensor y = norm_forward(x, cfg);
      for (std::size_t r = 0; r < 4; ++r) {
        for (std::size_t i = 0; i < 12; ++i) {
          CHECK(std::abs(y(r, i)) <= std::abs(cfg.gamma[i]) + 1e-12);
        }
      }
    }
  }
}

TEST_CASE("tanh variance lies inside the bracket") {
  const std::size_t n = 1000000;
  struct Case {
    double lambda, kappa;
    bool uniform;
  };
  for (const Case c : {Case{1.0, 10.0, false}, Case{2.0, 10.0, false}, Case{2.0, 2.0, false},
                       Case{1.0, 3.0, true}}) {
    RngStream rng(31);
    const double s = 1.7;
    const double alpha = c.lambda / (c.kappa * s);
    double sum = 0.0, sum_sq = 0.0, sum_4 = 0.0;
    std::size_t kept = 0;
    while (kept < n) {
      const double x = c.uniform ? s * std::sqrt(3.0) * (2.0 * rng.uniform() - 1.0)
                                 : s * rng.normal();
      const double u = alpha * x;
      if (std::abs(u) > c.lambda) continue;
      const double t = std::tanh(u);
      sum += t;
      sum_sq += t * t;
      sum_4 += t * t * t * t;
      ++kept;
    }
    const double nn = static_cast<double>(n);
    const double mean = sum / nn;
    const double var = sum_sq / nn - mean * mean;
    const double se = std::sqrt((sum_4 / nn - (sum_sq / nn) * (sum_sq / nn)) / nn);
    const double upper = c.lambda * c.lambda / (c.kappa * c.kappa);
    const double ratio = std::tanh(c.lambda) / c.lambda;
    const double lower = ratio * ratio * upper;
    CHECK(var >= lower - 3.0 * se);
    CHECK(var <= upper + 3.0 * se);
  }
}

TEST_CASE("norm_backward: zero upstream gradient and missing cache") {
  RngStream rng(3);
  const Tensor x = gaussian({2, 5}, rng, 1.0);
  for (NormKind kind : kAllKinds) {
    NormConfig cfg = random_config(kind, 5, rng);
    NormCache cache;
    const double var = 1.3;
    (void)norm_forward(x, cfg, {&var, 1}, &cache);
    const NormGrads g = norm_backward(cfg, cache, Tensor({2, 5}));
    for (double v : g.d_input.data()) CHECK(v == 0.0);
    for (double v : g.d_gamma.data()) CHECK(v == 0.0);
    CHECK(g.d_alpha_dyt == 0.0);
  }
  CHECK_THROWS_AS(norm_backward(NormConfig::make(NormKind::RMSNorm, 5), NormCache{}, Tensor({2, 5})),
                  StateError);
}

TEST_CASE("dyt backward at x = 0 is gamma * alpha * grad") {
  NormConfig cfg = NormConfig::make(NormKind::DyT, 3);
  cfg.gamma = Tensor::vector({1.0, 2.0, -0.5});
  cfg.alpha_dyt = 0.8;
  NormCache cache;
  (void)dyt_forward(Tensor({1, 3}), cfg, &cache);
  const Tensor grad = Tensor::matrix({{1.0, -3.0, 2.0}});
  const NormGrads g = norm_backward(cfg, cache, grad);
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(g.d_input[i] == doctest::Approx(cfg.gamma[i] * 0.8 * grad[i]).epsilon(1e-15));
  }
}

TEST_CASE("norm_backward matches central differences for every kind and mode") {
  const std::size_t t = 4, d = 8;
  RngStream rng(404);
  for (NormKind kind : kAllKinds) {
    for (ScaleGrad mode : {ScaleGrad::Differentiate, ScaleGrad::StopGradient}) {
      CAPTURE(to_string(kind));
      CAPTURE(to_string(mode));
      NormConfig cfg = random_config(kind, d, rng);
      cfg.scale_grad = mode;
      Tensor x = gaussian({t, d}, rng, 1.0);
      for (double& v : x.data()) v += 0.3;
      const Tensor w = gaussian({t, d}, rng, 1.0);
      const std::vector<double> injected = {0.8, 1.1, 0.5, 2.0};

      NormCache cache;
      (void)norm_forward(x, cfg, injected, &cache);
      const NormGrads g = norm_backward(cfg, cache, w);
      const std::vector<double> frozen =
          cfg.differentiates_scale() || kind == NormKind::DyT ? std::vector<double>{}
                                                              : cache.scale;

      const auto loss_x = [&](const std::vector<double>& p) {
        return weighted_sum(norm_forward(Tensor({t, d}, p), cfg, injected, nullptr, frozen), w);
      };
      CHECK(rel_error(g.d_input.data(), central_diff(x.storage(), loss_x)) < 1e-6);

      const auto loss_gamma = [&](const std::vector<double>& p) {
        NormConfig c = cfg;
        c.gamma = Tensor({d}, p);
        return weighted_sum(norm_forward(x, c, injected, nullptr, frozen), w);
      };
      CHECK(rel_error(g.d_gamma.data(), central_diff(cfg.gamma.storage(), loss_gamma)) < 1e-6);

      if (kind == NormKind::DyT) {
        const auto loss_alpha = [&](const std::vector<double>& p) {
          NormConfig c = cfg;
          c.alpha_dyt = p[0];
          return weighted_sum(norm_forward(x, c), w);
        };
        const std::vector<double> num = central_diff({cfg.alpha_dyt}, loss_alpha);
        const double ana = g.d_alpha_dyt;
        CHECK(rel_error({&ana, 1}, num) < 1e-6);
      } else {
        CHECK(g.d_alpha_dyt == 0.0);
      }
    }
  }
}
