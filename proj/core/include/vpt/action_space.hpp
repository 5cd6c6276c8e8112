#pragma once

#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vpt/util.hpp"

namespace vpt::action {

// One mutually exclusive key group. Option 0 always means "none released".
struct KeyGroup {
  std::string name;
  std::vector<std::string> options;
};

struct ActionSpaceConfig {
  std::vector<KeyGroup> groups;
  int bins_per_axis = 11;
  double max_move = 64.0;    // GUI pixels per step, degrees in world mode
  double foveation_mu = 4.0;

  static ActionSpaceConfig toy();
  static ActionSpaceConfig full_minecraft();

  int group_index(std::string_view name) const;  // -1 if absent
  std::string serialize() const;
  static ActionSpaceConfig parse(std::string_view text);
  std::uint64_t hash() const { return fnv1a64(serialize()); }
};

struct MouseBins {
  int x = 5;
  int y = 5;
  bool operator==(const MouseBins&) const = default;
};

struct FactoredAction {
  std::vector<int> choices;  // one per cfg.groups entry
  bool inventory = false;
  MouseBins mouse;
  bool operator==(const FactoredAction&) const = default;
};

struct HierarchicalAction {
  std::int64_t joint_index = 0;
  std::optional<int> camera_sub;  // present iff camera flag on
  bool operator==(const HierarchicalAction&) const = default;
};

FactoredAction null_action(const ActionSpaceConfig& cfg);
void validate(const FactoredAction& a, const ActionSpaceConfig& cfg);

// Foveated mouse discretization: mu-law companding, 11 uniform bins on the
// companded axis, bin 5 centered at zero. Decoding returns bin centers.
int bin_camera(double delta, const ActionSpaceConfig& cfg);
double unbin_camera(int bin, const ActionSpaceConfig& cfg);

std::int64_t joint_size(const ActionSpaceConfig& cfg);
std::int64_t inventory_index(const ActionSpaceConfig& cfg);  // joint_size - 1

HierarchicalAction encode_hierarchical(const FactoredAction& a,
                                       const ActionSpaceConfig& cfg);
FactoredAction decode_hierarchical(const HierarchicalAction& h,
                                   const ActionSpaceConfig& cfg);

bool is_null(const FactoredAction& a);

// Drops every frame inside a maximal run of >= min_run consecutive null
// actions; returns original indices of the kept frames, in order.
std::vector<std::size_t> filter_null_runs(std::span<const FactoredAction> actions,
                                          int min_run);

// One text record per frame: "g0=i g1=j ... inv=0 mx=5 my=5".
std::string to_record(const FactoredAction& a, const ActionSpaceConfig& cfg);
FactoredAction from_record(std::string_view line, const ActionSpaceConfig& cfg);

}  // namespace vpt::action
