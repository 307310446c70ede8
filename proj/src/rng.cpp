// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/rng.hpp"

#include <cmath>
#include <numbers>

#include "bhyt/error.hpp"

namespace bhyt {

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) {
    throw ParameterError("RngStream::below: n must be positive");
  }
  // Rejection keeps the distribution exactly uniform.
  const std::uint64_t limit = max() - max() % n;
  std::uint64_t v = next_u64();
  while (v >= limit) {
    v = next_u64();
  }
  return v % n;
}

double RngStream::normal() {
  if (spare_) {
    const double v = *spare_;
    spare_.reset();
    return v;
  }
  double u1 = uniform();
  while (u1 <= 0.0) {
    u1 = uniform();
  }
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  return r * std::cos(theta);
}

RngStream RngStream::split(std::uint64_t tag) const {
  return RngStream(mix64(seed_ ^ mix64(tag + kGolden)) + tag);
}

}  // namespace bhyt
