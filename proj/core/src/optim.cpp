#include "vpt/nn/optim.hpp"

#include <cmath>

namespace vpt::nn {

Adam::Adam(AdamConfig cfg, const Model& model) : cfg_(cfg) {
  m_.reserve(model.params().size());
  v_.reserve(model.params().size());
  for (const auto& p : model.params()) {
    m_.emplace_back(p.size(), 0.0);
    v_.emplace_back(p.size(), 0.0);
  }
}

double Adam::current_lr() const {
  if (cfg_.decay_horizon <= 0) return cfg_.lr;
  const double frac = 1.0 - static_cast<double>(step_) / cfg_.decay_horizon;
  return cfg_.lr * std::max(0.0, frac);
}

void Adam::step(Model& model) {
  auto& params = model.params();
  if (params.size() != m_.size()) throw TrainingError("optimizer/model mismatch");
  for (const auto& p : params)
    for (double g : p.g)
      if (!std::isfinite(g))
        throw TrainingError("non-finite gradient in " + p.name);

  if (cfg_.max_grad_norm > 0) {
    const double norm = global_grad_norm(model);
    if (norm > cfg_.max_grad_norm) {
      const double s = cfg_.max_grad_norm / norm;
      for (auto& p : params)
        for (auto& g : p.g) g *= s;
    }
  }

  const double lr = current_lr();
  ++step_;
  const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_));
  const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_));
  for (std::size_t i = 0; i < params.size(); ++i) {
    auto& p = params[i];
    for (std::size_t j = 0; j < p.size(); ++j) {
      m_[i][j] = cfg_.beta1 * m_[i][j] + (1.0 - cfg_.beta1) * p.g[j];
      v_[i][j] = cfg_.beta2 * v_[i][j] + (1.0 - cfg_.beta2) * p.g[j] * p.g[j];
      const double mhat = m_[i][j] / bc1;
      const double vhat = v_[i][j] / bc2;
      p.v[j] -= lr * (mhat / (std::sqrt(vhat) + cfg_.eps) +
                      cfg_.weight_decay * p.v[j]);
    }
    p.zero_grad();
  }
  model.step_count = step_;
}

double global_grad_norm(const Model& model) {
  double sq = 0;
  for (const auto& p : model.params())
    for (double g : p.g) sq += g * g;
  return std::sqrt(sq);
}

}  // namespace vpt::nn
