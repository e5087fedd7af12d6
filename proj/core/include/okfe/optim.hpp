#pragma once

#include <span>

namespace okfe {

struct OptimizerConfig {
  double learning_rate = 1e-4;
  double momentum = 0.9;
  double decay_factor = 0.96;
  int decay_every_epochs = 10;
  int total_epochs = 30;

  void validate() const;
};

// learning_rate * decay_factor^floor(epoch / decay_every_epochs)
double effective_learning_rate(const OptimizerConfig& config, int epoch);

// velocity <- momentum * velocity - lr_eff * grads; params <- params + velocity
void sgd_momentum_step(std::span<float> params, std::span<float> velocity,
                       std::span<const float> grads,
                       const OptimizerConfig& config, int epoch);

}  // namespace okfe
