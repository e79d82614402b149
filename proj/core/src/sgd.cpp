#include "labelforge/sgd.hpp"

#include "labelforge/errors.hpp"

namespace labelforge {

SgdOptimizer::SgdOptimizer(std::vector<Tensor*> params, SgdConfig config)
    : params_(std::move(params)), config_(config) {
  if (!(config_.learning_rate > 0.f))
    throw ConfigError("sgd: learning rate must be positive");
  if (config_.momentum < 0.f || config_.momentum >= 1.f)
    throw ConfigError("sgd: momentum must be in [0, 1)");
  if (config_.weight_decay < 0.f)
    throw ConfigError("sgd: weight decay must be >= 0");
  for (Tensor* p : params_) {
    if (!p) throw UsageError("sgd: null parameter");
    velocity_.emplace_back(p->size(), 0.f);
  }
}

void SgdOptimizer::set_learning_rate(float lr) {
  if (!(lr > 0.f)) throw ConfigError("sgd: learning rate must be positive");
  config_.learning_rate = lr;
}

void SgdOptimizer::step() {
  for (std::size_t i = 0; i < params_.size(); ++i) {
    Tensor& w = *params_[i];
    if (!w.has_grad() || w.grad.size() != w.size())
      throw UsageError("sgd: parameter has no gradient, run backward first");
    std::vector<float>& v = velocity_[i];
    for (std::size_t j = 0; j < w.size(); ++j) {
      float g = w.grad[j] + config_.weight_decay * w[j];
      v[j] = config_.momentum * v[j] + g;
      w[j] -= config_.learning_rate * v[j];
    }
    w.grad.clear();  // a fresh backward pass must precede the next step
  }
}

}  // namespace labelforge
