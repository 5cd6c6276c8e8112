#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "vpt/action_space.hpp"
#include "vpt/nn/tensor.hpp"

namespace vpt::nn {

enum class HeadKind { Factored, Hierarchical };

struct ModelSpec {
  int obs_size = 64;
  int patch = 8;
  int d_model = 64;
  int layers = 2;
  int heads = 4;
  int context = 32;      // window length T
  bool causal = true;
  bool temporal_conv = false;  // width-5 non-causal front conv (IDM only)
  HeadKind head_kind = HeadKind::Factored;
  bool value_heads = false;
  double width_mult = 1.0;

  int width() const;  // d_model scaled by width_mult, rounded to heads
  std::string serialize() const;
  static ModelSpec parse(std::string_view text);
  std::uint64_t hash() const;
};

struct HeadLogits {
  std::vector<Node*> groups;  // factored: one per key group
  Node* inventory = nullptr;  // factored: 2-way
  Node* cam_x = nullptr;      // factored: bins_per_axis-way
  Node* cam_y = nullptr;
  Node* joint = nullptr;       // hierarchical
  Node* camera_sub = nullptr;  // hierarchical, 121-way
  Node* value = nullptr;       // [T,1] when spec.value_heads
  Node* aux_value = nullptr;
};

struct NllBreakdown {
  double total = 0;
  std::map<std::string, double> per_head;
};

class Model {
 public:
  Model() = default;
  Model(ModelSpec spec, action::ActionSpaceConfig acfg, std::uint64_t seed);

  const ModelSpec& spec() const { return spec_; }
  const action::ActionSpaceConfig& action_config() const { return acfg_; }
  std::vector<Param>& params() { return params_; }
  const std::vector<Param>& params() const { return params_; }
  Param& param(std::string_view name);
  std::int64_t step_count = 0;

  // frames: T * obs^2 * 3 bytes, row-major RGB. T <= spec.context.
  HeadLogits forward(Graph& g, const std::uint8_t* frames, int t) const;

  // Sum of per-head NLLs over all frames; hierarchical camera-sub rows are
  // masked where the label's camera flag is off.
  Node* nll_factored(Graph& g, const HeadLogits& h,
                     const std::vector<action::FactoredAction>& labels,
                     NllBreakdown* breakdown = nullptr) const;
  Node* nll_hierarchical(Graph& g, const HeadLogits& h,
                         const std::vector<action::HierarchicalAction>& labels,
                         NllBreakdown* breakdown = nullptr) const;

  void zero_grads();
  void zero_value_head();  // RL init: final value layer all-zero

  void save(const std::filesystem::path& p) const;
  static Model load(const std::filesystem::path& p);
  std::uint64_t param_hash() const;

 private:
  ModelSpec spec_;
  action::ActionSpaceConfig acfg_;
  std::vector<Param> params_;
  mutable std::map<std::string, std::size_t> index_;
  void build_params(std::uint64_t seed);
  Param& add(const std::string& name, int r, int c);
};

// Extracts [T*K, patch*patch*3] normalized patch features from raw frames.
std::vector<double> patchify(const std::uint8_t* frames, int t, int obs,
                             int patch);

}  // namespace vpt::nn
