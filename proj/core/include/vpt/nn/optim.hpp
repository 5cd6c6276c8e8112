#pragma once

#include <cstdint>
#include <stdexcept>
#include <vector>

#include "vpt/nn/model.hpp"

namespace vpt::nn {

struct AdamConfig {
  double lr = 3e-3;
  std::int64_t decay_horizon = 0;  // 0 = constant lr; else linear decay to 0
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
  double weight_decay = 0.0;  // decoupled
  double max_grad_norm = 0.0;  // 0 = unclipped
};

struct TrainingError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

class Adam {
 public:
  Adam() = default;
  Adam(AdamConfig cfg, const Model& model);

  // Consumes and zeroes the model's gradients. Throws TrainingError with the
  // offending parameter name on non-finite gradients.
  void step(Model& model);

  double current_lr() const;
  std::int64_t step_count() const { return step_; }
  const AdamConfig& config() const { return cfg_; }

 private:
  AdamConfig cfg_;
  std::int64_t step_ = 0;
  std::vector<std::vector<double>> m_, v_;
};

double global_grad_norm(const Model& model);

}  // namespace vpt::nn
