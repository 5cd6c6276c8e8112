#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "vpt/action_space.hpp"
#include "vpt/demonstrator.hpp"
#include "vpt/nn/tensor.hpp"

namespace vpt::pipeline {

using demo::FrameClass;

// 16x16 RGB downsample, values in [0,1]. Input frame is obs*obs*3.
std::vector<double> frame_features(const std::uint8_t* frame, int obs);
constexpr int kFeatureDim = 16 * 16 * 3;

// Three-way frame quality classifier: clean / artifact / not-survival.
class FrameClassifier {
 public:
  explicit FrameClassifier(int hidden = 64, std::uint64_t seed = 0);

  // One Adam pass per epoch over shuffled minibatches.
  void train(const std::vector<std::vector<double>>& features,
             const std::vector<FrameClass>& labels, int epochs,
             std::uint64_t seed);
  FrameClass predict(const std::vector<double>& features) const;
  std::vector<double> logits(const std::vector<double>& features) const;
  double accuracy(const std::vector<std::vector<double>>& features,
                  const std::vector<FrameClass>& labels) const;

  void save(const std::filesystem::path& p) const;
  static FrameClassifier load(const std::filesystem::path& p);

 private:
  int hidden_;
  nn::Param w1_, b1_, w2_, b2_;
};

// Classifies every stride-th frame and propagates the result to the frames
// in between (each frame takes the label of its window's classified frame).
std::vector<FrameClass> classify_frames(const FrameClassifier& clf,
                                        const std::uint8_t* frames, int n,
                                        int obs, int stride);

struct SegmentConfig {
  double min_clean_fraction = 0.8;  // below this the whole video is dropped
  int median_k = 7;                 // smoothing window (truncated at edges)
  int min_len = 100;                // shortest usable segment
};

// Majority vote over a window of k centered on each element; the window is
// truncated (not padded) at the sequence edges.
std::vector<int> median_filter_binary(const std::vector<int>& xs, int k);

// Maximal runs of clean frames after smoothing, as [start, end) pairs.
// Returns nothing when the raw clean fraction is below the acceptance bar.
std::vector<std::pair<int, int>> extract_clean_segments(
    const std::vector<FrameClass>& labels, const SegmentConfig& cfg);

// Keyword screen over video tags for "fresh world, no tools yet" footage.
bool match_earlygame_metadata(const std::vector<std::string>& tags);

// ---- training windows ----

struct WindowingConfig {
  int context = 32;
  int stride = 16;  // typically context / 2
  bool filter_nulls = false;
  int min_null_run = 3;
};

// Frame-index lists (each of length context) covering a trajectory slice
// [begin, end). Null-run filtering drops frames before windowing.
std::vector<std::vector<std::size_t>> window_indices(
    std::span<const action::FactoredAction> actions, int begin, int end,
    const WindowingConfig& cfg);
// For unlabeled footage: plain strided windows over [begin, end).
std::vector<std::vector<std::size_t>> window_indices_unlabeled(
    int begin, int end, const WindowingConfig& cfg);

// ---- shards: fixed-length windows in one binary file plus an index ----

enum class ActionKind : std::uint8_t { None, Factored, Hierarchical };

struct Window {
  std::vector<std::uint8_t> frames;  // context * obs^2 * 3
  std::vector<action::FactoredAction> factored;
  std::vector<action::HierarchicalAction> hierarchical;
};

class ShardWriter {
 public:
  ShardWriter(std::filesystem::path file, int context, int obs,
              const action::ActionSpaceConfig& acfg, ActionKind kind);
  ~ShardWriter();
  // actions must have context entries (ignored when kind == None); the
  // hierarchical encoding happens here so readers never re-derive it.
  void add(const std::uint8_t* frames,
           std::span<const action::FactoredAction> actions);
  void finish();  // writes the .idx offset table
  int count() const { return count_; }

 private:
  std::filesystem::path file_;
  action::ActionSpaceConfig acfg_;
  int context_, obs_;
  ActionKind kind_;
  int count_ = 0;
  std::string buf_;
  bool finished_ = false;
};

class ShardReader {
 public:
  ShardReader(const std::filesystem::path& file,
              const action::ActionSpaceConfig& acfg);
  int size() const { return static_cast<int>(offsets_.size()); }
  int context() const { return context_; }
  int obs() const { return obs_; }
  ActionKind kind() const { return kind_; }
  const action::ActionSpaceConfig& acfg() const { return acfg_; }
  Window get(int i) const;

 private:
  std::string data_;
  action::ActionSpaceConfig acfg_;
  int context_ = 0, obs_ = 0;
  ActionKind kind_ = ActionKind::None;
  std::vector<std::uint64_t> offsets_;
};

}  // namespace vpt::pipeline
