#pragma once

#include <array>
#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "vpt/env.hpp"
#include "vpt/nn/model.hpp"
#include "vpt/nn/optim.hpp"
#include "vpt/pipeline.hpp"

namespace vpt::bc {

struct BcTrainConfig {
  nn::ModelSpec spec;  // causal, hierarchical heads for policies
  nn::AdamConfig adam{.lr = 1e-3, .weight_decay = 0.01, .max_grad_norm = 1.0};
  int epochs = 10;
  int batch_windows = 4;  // gradient accumulation before each step
};

struct EpochLosses {
  int epoch = 0;
  double train = 0;                  // mean per-frame NLL over the epoch
  double pseudo_val = 0;             // held-out pseudo-labeled windows
  double contractor_val = 0;         // held-out ground-truth windows
};

// Mean per-frame NLL of a model over every window of a shard.
double mean_nll(const nn::Model& model, const pipeline::ShardReader& shard);

// Trains the causal policy by negative log-likelihood on labeled windows.
// Validation shards are optional; their losses are logged once per epoch.
nn::Model train_foundation(const pipeline::ShardReader& train_shard,
                           const pipeline::ShardReader* pseudo_val,
                           const pipeline::ShardReader* contractor_val,
                           const BcTrainConfig& cfg, std::uint64_t seed,
                           std::vector<EpochLosses>* log = nullptr);

// Warm-started continuation of training on a narrower dataset.
nn::Model finetune_bc(nn::Model base, const pipeline::ShardReader& shard,
                      const nn::AdamConfig& adam, int epochs,
                      std::uint64_t seed,
                      std::vector<EpochLosses>* log = nullptr);

// Runs a trained policy against live observations with a sliding context
// window. Sampling is temperature 1; greedy is a diagnostics option.
class PolicyRunner {
 public:
  PolicyRunner(const nn::Model& model, std::uint64_t seed, bool greedy = false);
  action::FactoredAction act(const env::Observation& obs);
  void reset();
  // Last-frame head distribution access for regularized RL (logits of the
  // joint head for the current window).
  const nn::Model& model() const { return model_; }

 private:
  const nn::Model& model_;
  Rng rng_;
  bool greedy_;
  std::vector<std::uint8_t> window_;  // rolling frame buffer
  int len_ = 0;
};

// Sample an action from the last row of a forward pass. Exposed so the RL
// loop can reuse the exact sampling semantics.
action::FactoredAction sample_action(const nn::HeadLogits& heads, int row,
                                     const action::ActionSpaceConfig& acfg,
                                     Rng& rng, bool greedy);

struct RolloutReport {
  int episodes = 0;
  int episode_len = 0;
  std::array<double, env::kItemCount> collected_mean{};
  std::array<double, env::kItemCount> collected_sem{};
  std::array<double, env::kItemCount> crafted_mean{};
  std::array<double, env::kItemCount> crafted_sem{};
  double null_rate = 0;  // fraction of emitted actions that were null
  std::vector<std::vector<env::Event>> event_logs;  // one per episode
};

// SEM is NaN when episodes < 2 (undefined), matching the report contract.
RolloutReport rollout_eval(const nn::Model& model, const env::EnvConfig& ecfg,
                           int episodes, int episode_len, std::uint64_t seed,
                           bool greedy = false);

// Recomputes the per-item means/SEMs from archived event logs (oracle path).
RolloutReport replay_report(const std::vector<std::vector<env::Event>>& logs,
                            int episode_len);

}  // namespace vpt::bc
