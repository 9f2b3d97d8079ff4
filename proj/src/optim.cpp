// SPDX-License-Identifier: Apache-2.0
#include "advreg/optim.hpp"

#include <cmath>

#include "advreg/errors.hpp"

namespace advreg {

void AdamConfig::validate() const {
  if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
    throw ConfigError("adam betas must lie in [0, 1)");
  if (!(epsilon > 0.0)) throw ConfigError("adam epsilon must be positive");
}

AdamState AdamState::for_parameters(std::span<const Parameter> params, AdamConfig config) {
  config.validate();
  AdamState state;
  state.config = config;
  for (const auto& p : params)
    state.moments.emplace(p.name, Moments{Tensor::zeros_like(p.value), Tensor::zeros_like(p.value)});
  return state;
}

void adam_step(std::span<Parameter> params, const GradientMap& grads, AdamState& state,
               double learning_rate) {
  if (!(learning_rate > 0.0)) throw ConfigError("learning rate must be positive");
  if (state.moments.size() != params.size())
    throw ContractError("optimizer state tracks " + std::to_string(state.moments.size()) +
                        " parameters, bundle has " + std::to_string(params.size()));
  // Validate everything before touching any parameter.
  for (const auto& p : params) {
    auto it = state.moments.find(p.name);
    if (it == state.moments.end())
      throw ContractError("optimizer state has no entry for '" + p.name + "'");
    if (it->second.first.shape() != p.value.shape())
      throw ContractError("optimizer state shape mismatch for '" + p.name + "'");
    if (!grads.contains(p.name)) throw ContractError("missing gradient for '" + p.name + "'");
    if (grads.at(p.name).shape() != p.value.shape())
      throw ContractError("gradient shape " + shape_string(grads.at(p.name).shape()) +
                          " does not match parameter '" + p.name + "' " +
                          shape_string(p.value.shape()));
  }

  const auto& cfg = state.config;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double correction1 = 1.0 - std::pow(cfg.beta1, t);
  const double correction2 = 1.0 - std::pow(cfg.beta2, t);
  for (auto& p : params) {
    auto& m = state.moments.at(p.name);
    const Tensor& g = grads.at(p.name);
    for (std::size_t i = 0; i < g.size(); ++i) {
      m.first[i] = cfg.beta1 * m.first[i] + (1.0 - cfg.beta1) * g[i];
      m.second[i] = cfg.beta2 * m.second[i] + (1.0 - cfg.beta2) * g[i] * g[i];
      const double m_hat = m.first[i] / correction1;
      const double v_hat = m.second[i] / correction2;
      p.value[i] -= learning_rate * m_hat / (std::sqrt(v_hat) + cfg.epsilon);
    }
  }
}

}  // namespace advreg
