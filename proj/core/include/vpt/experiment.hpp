#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "vpt/action_space.hpp"
#include "vpt/env.hpp"

namespace vpt::experiment {

// Whole-pipeline configuration, loaded from JSON with profile-scaled
// defaults. The canonical serialization (sorted keys) feeds stage hashing.
struct ExperimentConfig {
  std::string profile = "desk";  // smoke | desk | full
  std::uint64_t seed = 1;
  std::filesystem::path out = "runs/default";
  std::string json;  // canonical full config text

  static ExperimentConfig load(const std::filesystem::path& config_file,
                               const std::string& profile_override,
                               std::optional<std::uint64_t> seed_override,
                               const std::filesystem::path& out_override);
  static ExperimentConfig defaults(const std::string& profile);

  env::EnvConfig env_config() const;
  action::ActionSpaceConfig action_config() const;
  // Raw access to a config subtree as canonical JSON text ("" if absent).
  std::string subtree(const std::string& key) const;
  double number(const std::string& key, const std::string& field,
                double fallback) const;
};

// Append-only metric records, one text file per stage.
class MetricStore {
 public:
  explicit MetricStore(std::filesystem::path root);
  void append(const std::string& stage, const std::string& name,
              std::int64_t step, double value, std::uint64_t config_hash);
  struct Record {
    std::string name;
    std::int64_t step;
    double value;
    std::uint64_t config_hash;
  };
  std::vector<Record> read(const std::string& stage) const;

 private:
  std::filesystem::path root_;
};

extern const std::vector<std::string> kStages;

// Stage-scoped config hash, folding in the hashes of dependency stages so
// upstream edits invalidate downstream artifacts.
std::uint64_t stage_hash(const ExperimentConfig& cfg, const std::string& stage);

struct StageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

// Runs one pipeline stage; writes artifacts + manifest under cfg.out.
// Throws StageError naming the stage to rerun when inputs are missing or
// were produced under a different configuration.
void run_stage(const ExperimentConfig& cfg, const std::string& stage);

// Emits the delimited plot table for one figure analog into
// <out>/report/<figure>.tsv and returns its path. Missing series produce a
// partial table plus warnings on the returned list.
std::filesystem::path report_figure(const ExperimentConfig& cfg,
                                    const std::string& figure,
                                    std::vector<std::string>* warnings);

}  // namespace vpt::experiment
