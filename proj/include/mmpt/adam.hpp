#pragma once

#include <map>
#include <string>
#include <vector>

#include "mmpt/tensor.hpp"

namespace mmpt {

// First/second moment buffers per parameter plus the shared step counter.
struct AdamState {
  struct Moments {
    std::vector<double> m, v;
  };
  std::map<std::string, Moments> moments;
  long step = 0;
};

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;
  bool decoupled = false;  // true: AdamW (decay applied to weights, not grads)
};

// One bias-corrected update over the map; parameters are visited in name
// order so updates are deterministic. Gradients are read from each tensor's
// grad buffer and left untouched.
void adam_step(std::map<std::string, Tensor>& params, AdamState& state, const AdamConfig& config);

}  // namespace mmpt
