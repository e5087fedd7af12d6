#include "okfe/optim.hpp"

#include <cmath>
#include <string>

#include "okfe/error.hpp"

namespace okfe {

void OptimizerConfig::validate() const {
  if (!(learning_rate >= 0.0) || !std::isfinite(learning_rate)) {
    throw ConfigError("learning_rate must be finite and >= 0");
  }
  if (!(momentum >= 0.0 && momentum < 1.0)) {
    throw ConfigError("momentum must lie in [0, 1)");
  }
  if (!(decay_factor > 0.0 && decay_factor <= 1.0)) {
    throw ConfigError("decay_factor must lie in (0, 1]");
  }
  if (decay_every_epochs < 1) {
    throw ConfigError("decay_every_epochs must be >= 1");
  }
  if (total_epochs < 0) {
    throw ConfigError("total_epochs must be >= 0");
  }
}

double effective_learning_rate(const OptimizerConfig& config, int epoch) {
  const int steps = epoch / config.decay_every_epochs;
  return config.learning_rate * std::pow(config.decay_factor, steps);
}

void sgd_momentum_step(std::span<float> params, std::span<float> velocity,
                       std::span<const float> grads,
                       const OptimizerConfig& config, int epoch) {
  if (params.size() != velocity.size() || params.size() != grads.size()) {
    throw ShapeError("sgd_momentum_step: params/velocity/grads sizes " +
                     std::to_string(params.size()) + "/" +
                     std::to_string(velocity.size()) + "/" +
                     std::to_string(grads.size()) + " differ");
  }
  const auto lr = static_cast<float>(effective_learning_rate(config, epoch));
  const auto mu = static_cast<float>(config.momentum);
  for (std::size_t i = 0; i < params.size(); ++i) {
    velocity[i] = mu * velocity[i] - lr * grads[i];
    params[i] += velocity[i];
  }
}

}  // namespace okfe
