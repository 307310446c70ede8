// Copyright 2026 The BHyT Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <string_view>

namespace bhyt {

/// Elementwise MLP activations. `SiLU` is the self-gated unit u·σ(u); a
/// separate gate projection is folded into the effective scale τ instead.
enum class Activation { Identity, ReLU, Tanh, SiLU };

std::string_view to_string(Activation act);
Activation activation_from_string(std::string_view name);

double activate(Activation act, double u) noexcept;
double activate_derivative(Activation act, double u) noexcept;

}  // namespace bhyt
