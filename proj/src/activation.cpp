// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#include "bhyt/activation.hpp"

#include <cmath>
#include <string>

#include "bhyt/error.hpp"

namespace bhyt {

std::string_view to_string(Activation act) {
  switch (act) {
    case Activation::Identity: return "identity";
    case Activation::ReLU: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::SiLU: return "silu";
  }
  return "?";
}

Activation activation_from_string(std::string_view name) {
  for (Activation a : {Activation::Identity, Activation::ReLU, Activation::Tanh, Activation::SiLU}) {
    if (to_string(a) == name) {
      return a;
    }
  }
  throw ParameterError("unknown activation '" + std::string(name) + "'");
}

double activate(Activation act, double u) noexcept {
  switch (act) {
    case Activation::Identity: return u;
    case Activation::ReLU: return u > 0.0 ? u : 0.0;
    case Activation::Tanh: return std::tanh(u);
    case Activation::SiLU: return u / (1.0 + std::exp(-u));
  }
  return u;
}

double activate_derivative(Activation act, double u) noexcept {
  switch (act) {
    case Activation::Identity: return 1.0;
    case Activation::ReLU: return u > 0.0 ? 1.0 : 0.0;
    case Activation::Tanh: {
      const double t = std::tanh(u);
      return 1.0 - t * t;
    }
    case Activation::SiLU: {
      const double s = 1.0 / (1.0 + std::exp(-u));
      return s * (1.0 + u * (1.0 - s));
    }
  }
  return 1.0;
}

}  // namespace bhyt
