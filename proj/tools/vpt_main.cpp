#include <cstdint>
#include <iostream>
#include <optional>
#include <string>

#include "CLI11.hpp"

#include "vpt/experiment.hpp"

int main(int argc, char** argv) {
  CLI::App app{"vpt: video-pretraining pipeline on a toy crafting world"};
  app.require_subcommand(1);

  std::string config_file;
  std::string profile;
  std::string out_dir;
  std::optional<std::uint64_t> seed;

  for (const auto& stage : vpt::experiment::kStages) {
    auto* sub = app.add_subcommand(stage, "run the '" + stage + "' stage");
    sub->add_option("--config", config_file, "JSON config file");
    sub->add_option("--seed", seed, "override the experiment seed");
    sub->add_option("--out", out_dir, "output directory");
    sub->add_option("--profile", profile, "smoke | desk | full")
        ->check(CLI::IsMember({"smoke", "desk", "full"}));
  }

  CLI11_PARSE(app, argc, argv);
  const std::string stage = app.get_subcommands().front()->get_name();

  try {
    const auto cfg = vpt::experiment::ExperimentConfig::load(
        config_file, profile, seed, out_dir);
    vpt::experiment::run_stage(cfg, stage);
    std::cout << stage << ": ok (out=" << cfg.out.string() << ")\n";
  } catch (const std::exception& e) {
    std::cerr << stage << ": " << e.what() << "\n";
    return 1;
  }
  return 0;
}
