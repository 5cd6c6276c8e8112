#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "vpt/nn/model.hpp"
#include "vpt/nn/optim.hpp"
#include "vpt/pipeline.hpp"

namespace vpt::idm {

struct IdmTrainConfig {
  nn::ModelSpec spec;  // callers set causal=false, temporal_conv=true
  nn::AdamConfig adam{.lr = 1e-3, .max_grad_norm = 1.0};
  int epochs = 4;
  int batch_windows = 4;  // gradient accumulation before each step
};

struct TrainLogEntry {
  std::int64_t step = 0;
  double loss = 0;  // mean per-frame NLL of the accumulated batch
  double lr = 0;
};

// Supervised inverse-dynamics training on labeled factored-action windows.
nn::Model train_idm(const pipeline::ShardReader& shard,
                    const IdmTrainConfig& cfg, std::uint64_t seed,
                    std::vector<TrainLogEntry>* log = nullptr);

struct IdmEval {
  std::map<std::string, double> keypress_accuracy;  // per group + "inventory"
  double keypress_accuracy_mean = 0;
  double r2_cam_x = 0;
  double r2_cam_y = 0;
  int frames = 0;
};

// Argmax predictions against held-out ground truth. R^2 is computed on the
// decoded (companded-bin-center) camera deltas; if the truth has zero
// variance the score is 1 when the residual is also zero, else 0.
IdmEval evaluate_idm(const nn::Model& model,
                     const pipeline::ShardReader& labeled_shard);

// Greedy per-frame action prediction for one frame window.
std::vector<action::FactoredAction> predict_window(const nn::Model& model,
                                                   const std::uint8_t* frames,
                                                   int t);

// Labels every frame of a video by sliding a window of the model's context
// length with 50% overlap and keeping each window's interior predictions;
// the first and last windows also cover their outer quarters. The claimed
// ranges partition [0, n) exactly.
std::vector<action::FactoredAction> pseudo_label(const nn::Model& model,
                                                 const std::uint8_t* frames,
                                                 int n, int obs);

// The [start, end) span of frames window p of n claims (exposed for tests).
std::pair<int, int> window_claim(int p, int n, int context, int claimed);

}  // namespace vpt::idm
