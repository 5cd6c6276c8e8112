#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "vpt/bc.hpp"
#include "vpt/env.hpp"
#include "vpt/nn/model.hpp"
#include "vpt/nn/optim.hpp"

namespace vpt::rl {

// Per-item reward with a rewarded-quantity cap (cap < 0 means unbounded).
struct RewardSpec {
  struct Entry {
    env::Item item;
    double reward = 0;
    int cap = 0;
  };
  std::vector<Entry> entries;

  static RewardSpec standard();  // log 1/8 x8 ... diamond pickaxe 8 uncapped
  std::string serialize() const;            // "item reward cap" lines
  static RewardSpec parse(std::string_view text);  // unknown item -> throws
  double reward_for(env::Item item) const;
  int cap_for(env::Item item) const;
};

// Reward for a step's events given the episode's running per-item counts
// (counts are advanced). Collect and craft events pay; place/death do not.
double compute_reward(const RewardSpec& spec, std::span<const env::Event> events,
                      std::array<int, env::kItemCount>& counts);

struct GaeResult {
  std::vector<double> advantages;
  std::vector<double> targets;  // advantages + values
};
GaeResult gae(const std::vector<double>& rewards,
              const std::vector<double>& values, double gamma, double lambda,
              double bootstrap);

// Exponentially weighted running mean/std used to standardize value targets.
struct EwmaNorm {
  double decay = 0.99;
  double mean = 0, sq = 0, weight = 0;  // debiased by weight

  void update(std::span<const double> targets);
  double normalize(double t) const;    // (t - mean) / max(std, eps)
  double denormalize(double z) const;  // inverse map for value predictions
  double std_dev() const;
};
std::vector<double> normalize_value_targets(std::span<const double> targets,
                                            EwmaNorm& state);

double kl_coefficient(int iteration, double rho0 = 0.2, double decay = 0.9995);

struct RLConfig {
  double gamma = 0.999;
  double lambda = 0.95;
  double clip = 0.2;
  double rho0 = 0.2;
  double rho_decay = 0.9995;
  int sleep_cycles = 2;
  double sleep_value_coef = 0.5;
  double sleep_aux_coef = 0.5;
  double sleep_kl_coef = 1.0;
  int max_sample_reuse = 6;  // sleep; wake always uses each sample once
  double max_grad_norm = 5.0;
  double lr = 2e-5;
  double weight_decay = 0.04;
  double value_coef = 0.5;      // wake value-loss weight
  double entropy_bonus = 0.01;  // used only when use_kl is false
  bool use_kl = true;
  double ewma_decay = 0.99;
  int envs = 4;
  int episode_len = 256;
  int batch_windows = 4;  // windows per optimizer step
};

// One context-length slice of a collected trajectory, ready for updates.
struct SampleWindow {
  std::vector<std::uint8_t> frames;
  std::vector<action::HierarchicalAction> acts;
  std::vector<double> old_logp;        // filled by wake_update before stepping
  std::vector<double> advantages;
  std::vector<double> value_targets;   // normalized
  int reuse = 0;                       // sleep-phase visit counter
};

struct UpdateStats {
  double policy_loss = 0;
  double value_loss = 0;
  double kl_to_prior = 0;   // mean per-frame KL against the frozen prior
  int samples = 0;
};

// PPO clipped surrogate + value loss + rho * KL(prior || policy); every
// window is consumed exactly once. prior == nullptr selects the
// entropy-bonus objective (from-scratch mode).
UpdateStats wake_update(nn::Model& policy, nn::Adam& opt,
                        std::vector<SampleWindow>& batch, const RLConfig& cfg,
                        double rho, const nn::Model* prior);

// Value + aux-value regression with a KL anchor to the pre-sleep policy.
// Each call makes `passes` passes; reuse counters are advanced and must stay
// within cfg.max_sample_reuse.
UpdateStats sleep_update(nn::Model& policy, nn::Adam& opt,
                         std::vector<SampleWindow>& batch, const RLConfig& cfg,
                         const nn::Model& anchor, int passes);

// Copies a trained policy into a value-headed spec: shared parameters are
// carried over by name, the value head starts at exactly zero, and the
// auxiliary value head is randomly initialized.
nn::Model add_value_heads(const nn::Model& base, std::uint64_t seed);

struct IterationStats {
  int iteration = 0;
  double mean_reward = 0;  // per episode
  double rho = 0;
  double policy_loss = 0;
  double value_loss = 0;
  std::array<double, env::kItemCount> item_rate{};  // fraction of episodes
};

// Full wake/sleep loop: collect fixed-length episodes from `cfg.envs`
// parallel worlds, run one wake pass and cfg.sleep_cycles sleep cycles per
// iteration, decay rho per iteration.
std::vector<IterationStats> train_rl(nn::Model& policy, const nn::Model* prior,
                                     const env::EnvConfig& ecfg,
                                     const RewardSpec& reward,
                                     const RLConfig& cfg, int iterations,
                                     std::uint64_t seed);

}  // namespace vpt::rl
