#pragma once

#include <unordered_map>
#include <vector>

#include "labelforge/tensor.hpp"

namespace labelforge {

struct SgdConfig {
  float learning_rate = 0.01f;
  float momentum = 0.9f;
  float weight_decay = 0.0f;
};

// Momentum SGD over a fixed parameter set. Velocity buffers are keyed by
// tensor identity, so the same optimizer must be reused across steps for
// momentum to take effect. step() consumes and clears gradients.
class SgdOptimizer {
 public:
  SgdOptimizer(std::vector<Tensor*> params, SgdConfig config);

  // v <- momentum * v + (grad + weight_decay * w); w <- w - lr * v
  void step();

  const SgdConfig& config() const { return config_; }
  void set_learning_rate(float lr);

 private:
  std::vector<Tensor*> params_;
  std::vector<std::vector<float>> velocity_;
  SgdConfig config_;
};

}  // namespace labelforge
