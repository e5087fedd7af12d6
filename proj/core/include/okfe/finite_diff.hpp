#pragma once

#include <cmath>
#include <functional>
#include <string>

#include "okfe/error.hpp"
#include "okfe/tensor.hpp"

namespace okfe {

// Central-difference gradient of a scalar objective. Test-side oracle: it
// never calls into the analytic backward passes it is used to check.
template <typename T>
BasicTensor<T> finite_diff_grad(
    const std::function<double(const BasicTensor<T>&)>& objective,
    const BasicTensor<T>& params, double eps) {
  if (!(eps > 0.0)) throw ConfigError("finite_diff_grad: eps must be > 0");
  BasicTensor<T> probe = params;
  BasicTensor<T> grad(params.shape());
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T original = probe[i];
    probe[i] = static_cast<T>(original + eps);
    const double up = objective(probe);
    probe[i] = static_cast<T>(original - eps);
    const double down = objective(probe);
    probe[i] = original;
    if (!std::isfinite(up) || !std::isfinite(down)) {
      throw NumericalError("finite_diff_grad: objective not finite at index " +
                           std::to_string(i));
    }
    grad[i] = static_cast<T>((up - down) / (2.0 * eps));
  }
  return grad;
}

}  // namespace okfe
