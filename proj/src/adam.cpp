#include "mmpt/adam.hpp"

#include <cmath>

#include "mmpt/errors.hpp"

namespace mmpt {

void adam_step(std::map<std::string, Tensor>& params, AdamState& state, const AdamConfig& config) {
  ++state.step;
  double t = static_cast<double>(state.step);
  double bc1 = 1.0 - std::pow(config.beta1, t);
  double bc2 = 1.0 - std::pow(config.beta2, t);
  for (auto& [name, tensor] : params) {
    auto& mom = state.moments[name];
    size_t n = tensor.numel();
    if (mom.m.size() != n) {
      mom.m.assign(n, 0.0);
      mom.v.assign(n, 0.0);
    }
    const auto& g = tensor.grad();
    auto& w = tensor.mutable_value();
    for (size_t i = 0; i < n; ++i) {
      double gi = g[i];
      if (config.weight_decay != 0.0 && !config.decoupled) gi += config.weight_decay * w[i];
      mom.m[i] = config.beta1 * mom.m[i] + (1.0 - config.beta1) * gi;
      mom.v[i] = config.beta2 * mom.v[i] + (1.0 - config.beta2) * gi * gi;
      double mhat = mom.m[i] / bc1;
      double vhat = mom.v[i] / bc2;
      if (config.weight_decay != 0.0 && config.decoupled)
        w[i] -= config.lr * config.weight_decay * w[i];
      w[i] -= config.lr * mhat / (std::sqrt(vhat) + config.eps);
      if (!std::isfinite(w[i]))
        throw Error(ErrorKind::NumericalError, "non-finite parameter after optimizer step");
    }
  }
}

}  // namespace mmpt
