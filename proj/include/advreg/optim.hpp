// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <map>
#include <span>
#include <string>

#include "advreg/autodiff.hpp"

namespace advreg {

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;

  void validate() const;
};

/// First/second moment estimates per parameter name plus the step count.
struct AdamState {
  struct Moments {
    Tensor first;
    Tensor second;
  };
  AdamConfig config;
  std::size_t step = 0;
  std::map<std::string, Moments> moments;

  /// Zero moments shaped like `params`.
  static AdamState for_parameters(std::span<const Parameter> params, AdamConfig config = {});
};

/// One bias-corrected Adam update of every parameter in `params`.
void adam_step(std::span<Parameter> params, const GradientMap& grads, AdamState& state,
               double learning_rate);

}  // namespace advreg
