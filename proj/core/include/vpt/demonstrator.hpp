#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "vpt/action_space.hpp"
#include "vpt/env.hpp"

namespace vpt::demo {

enum class Task { Freeplay, Treechop, HouseBuild, Earlygame, ObtainDiamondPickaxe };
const char* task_name(Task t);
std::optional<Task> task_from_name(std::string_view s);

struct DemonstratorProfile {
  Task task = Task::Earlygame;
  double null_rate = 0.35;     // long-run fraction of null actions
  double action_noise = 0.05;  // probability of a random legal action
  double skill = 1.0;          // 1.0 = direct routing, lower inserts wandering
  int length = 1500;           // steps recorded
  std::vector<std::string> tags;
};

enum class FrameClass : std::uint8_t { Clean, Artifact, NotSurvival };

struct TrajectorySegment {
  int obs_size = 0;
  std::vector<std::uint8_t> frames;          // length * obs^2 * 3
  std::vector<action::FactoredAction> actions;
  std::vector<env::Event> events;
  std::vector<std::string> tags;
  std::uint64_t seed = 0;
  std::string profile_name;
  int length() const { return static_cast<int>(actions.size()); }
};

// Scripted play in a fresh world. Deterministic given (seed, profile).
TrajectorySegment generate_trajectory(std::uint64_t seed,
                                      const DemonstratorProfile& profile,
                                      const env::EnvConfig& ecfg,
                                      const action::ActionSpaceConfig& acfg);

// The per-tick expert, exposed so rollouts and tests can reuse the routing.
class ScriptedExpert {
 public:
  ScriptedExpert(env::MiniCrafter& env, DemonstratorProfile profile,
                 std::uint64_t seed);
  action::FactoredAction act();  // reads env state, advances internal plan

 private:
  env::MiniCrafter& env_;
  DemonstratorProfile profile_;
  Rng rng_;
  int pending_nulls_ = 0;
  int wander_steps_ = 0;
  int gui_cooldown_ = 0;
  bool mining_ = false;
  action::FactoredAction optimal();
  action::FactoredAction random_legal();
  action::FactoredAction turn_toward(double target_heading);
  action::FactoredAction cursor_toward(double tx, double ty, bool click);
};

struct ArtifactWindow {
  enum class Kind : std::uint8_t { LogoPatch, PictureInPicture, TextBanner };
  Kind kind = Kind::LogoPatch;
  int start = 0, end = 0;  // frame range, end exclusive
};

struct CorruptionSpec {
  std::vector<ArtifactWindow> windows;
  double mode_swap_prob = 0.0;  // per-frame chance of an overlay-free frame
};

struct CorruptResult {
  std::vector<std::uint8_t> frames;
  std::vector<FrameClass> labels;
};
CorruptResult corrupt(const TrajectorySegment& segment,
                      const CorruptionSpec& spec, std::uint64_t seed);

struct CorpusEntry {
  DemonstratorProfile profile;
  CorruptionSpec corruption;
  int count = 1;  // trajectories with this profile
};

// Writes one directory per trajectory. Web corpora strip action labels from
// the public view; ground truth goes to a sidecar used only by evaluation.
void make_corpus(const std::filesystem::path& root,
                 const std::vector<CorpusEntry>& entries, bool contractor_style,
                 std::uint64_t seed, const env::EnvConfig& ecfg,
                 const action::ActionSpaceConfig& acfg);

// Corpus directory access.
std::vector<std::filesystem::path> list_trajectories(const std::filesystem::path& root);

struct StoredTrajectory {
  int obs_size = 0;
  int length = 0;
  std::vector<std::uint8_t> frames;
  std::vector<action::FactoredAction> actions;  // empty for web public view
  bool pseudo_labels = false;
  std::vector<std::string> tags;
  std::uint64_t seed = 0;
  // Sidecar ground truth (web corpora; evaluation paths only).
  std::vector<action::FactoredAction> truth_actions;
  std::vector<FrameClass> truth_labels;
};
StoredTrajectory load_trajectory(const std::filesystem::path& dir,
                                 const action::ActionSpaceConfig& acfg,
                                 bool include_sidecar_truth = false);

void write_actions_file(const std::filesystem::path& file,
                        const std::vector<action::FactoredAction>& actions,
                        const action::ActionSpaceConfig& acfg, bool pseudo);

}  // namespace vpt::demo
