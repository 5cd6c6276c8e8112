#include "vpt/experiment.hpp"

#include <algorithm>
#include <cmath>
#include <optional>
#include <sstream>

#include "json.hpp"

#include "vpt/bc.hpp"
#include "vpt/demonstrator.hpp"
#include "vpt/idm.hpp"
#include "vpt/pipeline.hpp"
#include "vpt/rl.hpp"
#include "vpt/util.hpp"

namespace vpt::experiment {

using jsn = nlohmann::json;
namespace fs = std::filesystem;

namespace {

jsn profile_defaults(const std::string& profile) {
  // Desk profile: runs the whole pipeline on a laptop in well under an hour.
  jsn j = {
      {"env", {{"grid", 16}, {"obs_size", 32}, {"ticks_to_break", 8},
               {"episode_len", 1200}, {"gui_size", 64}}},
      {"corpus", {{"contractor", 6}, {"web", 10}, {"house", 4},
                  {"filter_train", 3}, {"length", 400}}},
      {"filter", {{"epochs", 16}, {"stride", 4}, {"hidden", 32},
                  {"min_len", 48}, {"median_k", 7},
                  {"min_clean_fraction", 0.8}}},
      {"shards", {{"context", 12}, {"min_null_run", 3}}},
      {"idm", {{"d_model", 32}, {"layers", 2}, {"heads", 2}, {"epochs", 3},
               {"lr", 1e-3}, {"batch_windows", 4}}},
      {"bc", {{"d_model", 32}, {"layers", 2}, {"heads", 2}, {"epochs", 4},
              {"finetune_epochs", 2}, {"lr", 1e-3}, {"batch_windows", 4}}},
      {"rollout", {{"episodes", 3}, {"length", 256}}},
      {"scaling", {{"budgets", {1, 2, 5}}, {"web_sizes", {2, 6, 10}},
                   {"scaling_bc_epochs", 2}}},
      {"rl", {{"iterations", 300}, {"envs", 4}, {"episode_len", 96},
              {"lr", 2e-5}, {"nokl_lr", 2e-5}, {"batch_windows", 4},
              {"treatments", {"random", "earlygame_kl", "earlygame_nokl"}}}},
  };
  if (profile == "smoke") {
    j["corpus"] = {{"contractor", 2}, {"web", 3}, {"house", 1},
                   {"filter_train", 1}, {"length", 120}};
    j["filter"]["epochs"] = 8;
    j["filter"]["min_len"] = 24;
    j["idm"]["epochs"] = 1;
    j["bc"]["epochs"] = 1;
    j["bc"]["finetune_epochs"] = 1;
    j["rollout"] = {{"episodes", 2}, {"length", 64}};
    j["scaling"] = {{"budgets", {1, 2}}, {"web_sizes", {1, 3}},
                    {"scaling_bc_epochs", 1}};
    j["rl"]["iterations"] = 2;
    j["rl"]["episode_len"] = 48;
    j["rl"]["envs"] = 2;
  } else if (profile == "full") {
    j["corpus"] = {{"contractor", 12}, {"web", 24}, {"house", 8},
                   {"filter_train", 4}, {"length", 800}};
    j["idm"]["d_model"] = 64;
    j["idm"]["heads"] = 4;
    j["idm"]["epochs"] = 6;
    j["bc"]["d_model"] = 64;
    j["bc"]["heads"] = 4;
    j["bc"]["epochs"] = 10;
    j["scaling"]["budgets"] = {1, 2, 5, 10, 20};
    j["rollout"] = {{"episodes", 5}, {"length", 400}};
  }
  return j;
}

jsn parse_config(const ExperimentConfig& cfg) { return jsn::parse(cfg.json); }

}  // namespace

ExperimentConfig ExperimentConfig::defaults(const std::string& profile) {
  ExperimentConfig c;
  c.profile = profile;
  c.json = profile_defaults(profile).dump();
  return c;
}

ExperimentConfig ExperimentConfig::load(const fs::path& config_file,
                                        const std::string& profile_override,
                                        std::optional<std::uint64_t> seed_override,
                                        const fs::path& out_override) {
  jsn file = jsn::object();
  std::string profile = profile_override;
  if (!config_file.empty()) file = jsn::parse(read_file(config_file));
  if (profile.empty())
    profile = file.value("profile", std::string("desk"));
  jsn j = profile_defaults(profile);
  j.merge_patch(file);
  j.erase("profile");
  ExperimentConfig c;
  c.profile = profile;
  c.seed = seed_override ? *seed_override
                         : j.value("seed", std::uint64_t{1});
  j.erase("seed");
  if (!out_override.empty()) c.out = out_override;
  else if (j.contains("out")) c.out = j["out"].get<std::string>();
  j.erase("out");
  c.json = j.dump();
  return c;
}

env::EnvConfig ExperimentConfig::env_config() const {
  const jsn j = parse_config(*this)["env"];
  env::EnvConfig e;
  e.grid = j.value("grid", e.grid);
  e.obs_size = j.value("obs_size", e.obs_size);
  e.ticks_to_break = j.value("ticks_to_break", e.ticks_to_break);
  e.episode_len = j.value("episode_len", e.episode_len);
  e.gui_size = j.value("gui_size", e.gui_size);
  return e;
}

action::ActionSpaceConfig ExperimentConfig::action_config() const {
  return action::ActionSpaceConfig::toy();
}

std::string ExperimentConfig::subtree(const std::string& key) const {
  const jsn j = parse_config(*this);
  return j.contains(key) ? j[key].dump() : std::string();
}

double ExperimentConfig::number(const std::string& key,
                                const std::string& field,
                                double fallback) const {
  const jsn j = parse_config(*this);
  if (!j.contains(key) || !j[key].contains(field)) return fallback;
  return j[key][field].get<double>();
}

MetricStore::MetricStore(fs::path root) : root_(std::move(root)) {
  fs::create_directories(root_);
}

void MetricStore::append(const std::string& stage, const std::string& name,
                         std::int64_t step, double value,
                         std::uint64_t config_hash) {
  std::ostringstream os;
  os.precision(17);
  os << name << "\t" << step << "\t" << value << "\t" << config_hash << "\n";
  append_file(root_ / (stage + ".metrics"), os.str());
}

std::vector<MetricStore::Record> MetricStore::read(const std::string& stage) const {
  std::vector<Record> out;
  const fs::path p = root_ / (stage + ".metrics");
  if (!fs::exists(p)) return out;
  std::istringstream is(read_file(p));
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    Record r;
    ls >> r.name >> r.step >> r.value >> r.config_hash;
    if (!ls.fail()) out.push_back(std::move(r));
  }
  return out;
}

const std::vector<std::string> kStages = {
    "gen-data",  "train-filter", "filter",      "build-shards", "train-idm",
    "idm-scaling", "label",      "train-bc",    "finetune-bc",  "rollout-eval",
    "bc-scaling", "train-rl",    "report"};

namespace {

const std::map<std::string, std::vector<std::string>>& stage_deps() {
  static const std::map<std::string, std::vector<std::string>> deps = {
      {"gen-data", {}},
      {"train-filter", {"gen-data"}},
      {"filter", {"gen-data", "train-filter"}},
      {"build-shards", {"gen-data"}},
      {"train-idm", {"build-shards"}},
      {"idm-scaling", {"build-shards", "filter"}},
      {"label", {"filter", "train-idm"}},
      {"train-bc", {"label", "build-shards"}},
      {"finetune-bc", {"train-bc"}},
      {"rollout-eval", {"finetune-bc"}},
      {"bc-scaling", {"label", "build-shards"}},
      {"train-rl", {"finetune-bc"}},
      {"report", {}},
  };
  return deps;
}

const std::map<std::string, std::vector<std::string>>& stage_keys() {
  static const std::map<std::string, std::vector<std::string>> keys = {
      {"gen-data", {"env", "corpus"}},
      {"train-filter", {"filter"}},
      {"filter", {"filter"}},
      {"build-shards", {"shards"}},
      {"train-idm", {"idm", "shards"}},
      {"idm-scaling", {"idm", "scaling", "bc", "rollout", "shards"}},
      {"label", {}},
      {"train-bc", {"bc", "shards"}},
      {"finetune-bc", {"bc"}},
      {"rollout-eval", {"rollout"}},
      {"bc-scaling", {"bc", "scaling", "rollout", "shards"}},
      {"train-rl", {"rl"}},
      {"report", {}},
  };
  return keys;
}

}  // namespace

std::uint64_t stage_hash(const ExperimentConfig& cfg, const std::string& stage) {
  std::string blob = stage + "|" + cfg.profile + "|" +
                     std::to_string(cfg.seed) + "|" + cfg.subtree("env") + "|";
  const auto it = stage_keys().find(stage);
  if (it == stage_keys().end()) throw StageError("unknown stage: " + stage);
  for (const auto& key : it->second) blob += cfg.subtree(key) + "|";
  std::uint64_t h = fnv1a64(blob);
  for (const auto& dep : stage_deps().at(stage))
    h = fnv1a64(&h, sizeof h, stage_hash(cfg, dep));
  return h;
}

namespace {

fs::path manifest_path(const ExperimentConfig& cfg, const std::string& stage) {
  return cfg.out / "manifests" / (stage + ".manifest");
}

void check_deps(const ExperimentConfig& cfg, const std::string& stage) {
  for (const auto& dep : stage_deps().at(stage)) {
    const fs::path mp = manifest_path(cfg, dep);
    std::string found;
    if (fs::exists(mp)) {
      std::istringstream is(read_file(mp));
      std::string key;
      is >> key >> found;
    }
    const std::string want = std::to_string(stage_hash(cfg, dep));
    if (found != want)
      throw StageError("stage '" + stage + "' needs up-to-date '" + dep +
                       "' artifacts; rerun `vpt " + dep + "` first");
  }
}

void write_manifest(const ExperimentConfig& cfg, const std::string& stage) {
  fs::create_directories(cfg.out / "manifests");
  write_file(manifest_path(cfg, stage),
             "hash " + std::to_string(stage_hash(cfg, stage)) + "\n");
}

// ---- stage helpers ----

nn::ModelSpec model_spec_from(const ExperimentConfig& cfg,
                              const std::string& key, bool idm) {
  nn::ModelSpec s;
  s.obs_size = static_cast<int>(cfg.number("env", "obs_size", 32));
  s.patch = 8;
  s.d_model = static_cast<int>(cfg.number(key, "d_model", 32));
  s.layers = static_cast<int>(cfg.number(key, "layers", 2));
  s.heads = static_cast<int>(cfg.number(key, "heads", 2));
  s.context = static_cast<int>(cfg.number("shards", "context", 12));
  s.causal = !idm;
  s.temporal_conv = idm;
  s.head_kind = idm ? nn::HeadKind::Factored : nn::HeadKind::Hierarchical;
  return s;
}

pipeline::SegmentConfig segment_config(const ExperimentConfig& cfg) {
  pipeline::SegmentConfig sc;
  sc.min_clean_fraction = cfg.number("filter", "min_clean_fraction", 0.8);
  sc.median_k = static_cast<int>(cfg.number("filter", "median_k", 7));
  sc.min_len = static_cast<int>(cfg.number("filter", "min_len", 48));
  return sc;
}

std::vector<std::pair<int, int>> read_segments(const fs::path& p) {
  std::vector<std::pair<int, int>> segs;
  if (!fs::exists(p)) return segs;
  std::istringstream is(read_file(p));
  int a, b;
  while (is >> a >> b) segs.emplace_back(a, b);
  return segs;
}

// Gathers (possibly non-contiguous) frame/action windows into a shard.
void add_windows(pipeline::ShardWriter& writer, const demo::StoredTrajectory& t,
                 const std::vector<action::FactoredAction>& actions,
                 const std::vector<std::vector<std::size_t>>& windows) {
  const std::size_t fbytes =
      static_cast<std::size_t>(t.obs_size) * t.obs_size * 3;
  std::vector<std::uint8_t> buf;
  std::vector<action::FactoredAction> acts;
  for (const auto& w : windows) {
    buf.clear();
    acts.clear();
    for (const auto idx : w) {
      buf.insert(buf.end(), t.frames.begin() + static_cast<std::ptrdiff_t>(idx * fbytes),
                 t.frames.begin() + static_cast<std::ptrdiff_t>((idx + 1) * fbytes));
      acts.push_back(actions[idx]);
    }
    writer.add(buf.data(), acts);
  }
}

struct Corpora {
  fs::path contractor, web, house, filter_train;
};
Corpora corpora_paths(const ExperimentConfig& cfg) {
  const fs::path root = cfg.out / "corpus";
  return {root / "contractor", root / "web", root / "house",
          root / "filter_train"};
}

void stage_gen_data(const ExperimentConfig& cfg) {
  const auto ecfg = cfg.env_config();
  const auto acfg = cfg.action_config();
  const auto paths = corpora_paths(cfg);
  const int len = static_cast<int>(cfg.number("corpus", "length", 400));
  const int n_contractor = static_cast<int>(cfg.number("corpus", "contractor", 6));
  const int n_web = static_cast<int>(cfg.number("corpus", "web", 10));
  const int n_house = static_cast<int>(cfg.number("corpus", "house", 4));
  const int n_filter = static_cast<int>(cfg.number("corpus", "filter_train", 3));

  auto profile = [&](demo::Task task) {
    demo::DemonstratorProfile p;
    p.task = task;
    p.length = len;
    return p;
  };
  // Contractor data: clean, action-labeled play across the tech tree.
  {
    std::vector<demo::CorpusEntry> entries;
    const int a = std::max(1, n_contractor / 2);
    const int b = std::max(1, n_contractor / 4);
    entries.push_back({profile(demo::Task::Earlygame), {}, a});
    entries.push_back({profile(demo::Task::Treechop), {}, b});
    if (n_contractor - a - b > 0)
      entries.push_back(
          {profile(demo::Task::ObtainDiamondPickaxe), {}, n_contractor - a - b});
    demo::make_corpus(paths.contractor, entries, true, cfg.seed * 11 + 1, ecfg, acfg);
  }
  // House-building contractor data.
  demo::make_corpus(paths.house, {{profile(demo::Task::HouseBuild), {}, n_house}},
                    true, cfg.seed * 11 + 2, ecfg, acfg);
  // Web corpus: unlabeled, with overlay corruption and off-task footage.
  {
    demo::CorruptionSpec light;
    light.windows = {{demo::ArtifactWindow::Kind::LogoPatch, len / 10, len / 5},
                     {demo::ArtifactWindow::Kind::TextBanner, len / 2,
                      len / 2 + len / 20}};
    light.mode_swap_prob = 0.03;
    std::vector<demo::CorpusEntry> entries;
    const int e = std::max(1, n_web / 2);
    const int f = std::max(1, n_web / 4);
    entries.push_back({profile(demo::Task::Earlygame), light, e});
    entries.push_back({profile(demo::Task::Freeplay), light, f});
    if (n_web - e - f > 0)
      entries.push_back({profile(demo::Task::Treechop), light, n_web - e - f});
    demo::make_corpus(paths.web, entries, false, cfg.seed * 11 + 3, ecfg, acfg);
  }
  // Classifier training set: heavier, more varied corruption.
  {
    demo::CorruptionSpec heavy;
    heavy.windows = {
        {demo::ArtifactWindow::Kind::LogoPatch, 0, len / 3},
        {demo::ArtifactWindow::Kind::PictureInPicture, len / 2, 2 * len / 3},
        {demo::ArtifactWindow::Kind::TextBanner, 3 * len / 4, len}};
    heavy.mode_swap_prob = 0.15;
    demo::make_corpus(paths.filter_train,
                      {{profile(demo::Task::Freeplay), heavy, n_filter}}, false,
                      cfg.seed * 11 + 4, ecfg, acfg);
  }
}

void stage_train_filter(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto acfg = cfg.action_config();
  const auto paths = corpora_paths(cfg);
  std::vector<std::vector<double>> feats;
  std::vector<pipeline::FrameClass> labels;
  for (const auto& dir : demo::list_trajectories(paths.filter_train)) {
    const auto t = demo::load_trajectory(dir, acfg, true);
    const std::size_t fbytes = static_cast<std::size_t>(t.obs_size) * t.obs_size * 3;
    for (int i = 0; i < t.length; i += 2) {
      feats.push_back(pipeline::frame_features(
          t.frames.data() + fbytes * static_cast<std::size_t>(i), t.obs_size));
      labels.push_back(t.truth_labels[static_cast<std::size_t>(i)]);
    }
  }
  // Hold out every fifth example for the accuracy metric.
  std::vector<std::vector<double>> train_f, val_f;
  std::vector<pipeline::FrameClass> train_l, val_l;
  for (std::size_t i = 0; i < feats.size(); ++i) {
    if (i % 5 == 4) {
      val_f.push_back(feats[i]);
      val_l.push_back(labels[i]);
    } else {
      train_f.push_back(feats[i]);
      train_l.push_back(labels[i]);
    }
  }
  pipeline::FrameClassifier clf(static_cast<int>(cfg.number("filter", "hidden", 32)),
                                cfg.seed);
  clf.train(train_f, train_l, static_cast<int>(cfg.number("filter", "epochs", 4)),
            cfg.seed + 17);
  fs::create_directories(cfg.out / "filter");
  clf.save(cfg.out / "filter" / "classifier.bin");
  const auto h = stage_hash(cfg, "train-filter");
  metrics.append("train-filter", "val_accuracy", 0, clf.accuracy(val_f, val_l), h);
  metrics.append("train-filter", "train_examples", 0, double(train_f.size()), h);
}

void stage_filter(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto acfg = cfg.action_config();
  const auto paths = corpora_paths(cfg);
  const auto clf = pipeline::FrameClassifier::load(cfg.out / "filter" / "classifier.bin");
  const auto sc = segment_config(cfg);
  const int stride = static_cast<int>(cfg.number("filter", "stride", 4));
  const auto h = stage_hash(cfg, "filter");
  int total_segments = 0;
  for (const auto& dir : demo::list_trajectories(paths.web)) {
    const auto t = demo::load_trajectory(dir, acfg, false);
    const auto labels = pipeline::classify_frames(clf, t.frames.data(), t.length,
                                                  t.obs_size, stride);
    const auto segs = pipeline::extract_clean_segments(labels, sc);
    std::ostringstream os;
    for (const auto& [a, b] : segs) os << a << " " << b << "\n";
    write_file(dir / "segments.txt", os.str());
    total_segments += static_cast<int>(segs.size());
  }
  metrics.append("filter", "segments", 0, total_segments, h);
}

void stage_build_shards(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto acfg = cfg.action_config();
  const auto paths = corpora_paths(cfg);
  const int context = static_cast<int>(cfg.number("shards", "context", 12));
  const int min_null_run = static_cast<int>(cfg.number("shards", "min_null_run", 3));
  const int obs = static_cast<int>(cfg.number("env", "obs_size", 32));
  fs::create_directories(cfg.out / "shards");
  const auto h = stage_hash(cfg, "build-shards");

  pipeline::WindowingConfig raw{context, context / 2, false, min_null_run};
  pipeline::WindowingConfig filtered{context, context / 2, true, min_null_run};

  const auto contractor = demo::list_trajectories(paths.contractor);
  {
    pipeline::ShardWriter train(cfg.out / "shards" / "idm_train.shard", context,
                                obs, acfg, pipeline::ActionKind::Factored);
    pipeline::ShardWriter val(cfg.out / "shards" / "idm_val.shard", context, obs,
                              acfg, pipeline::ActionKind::Factored);
    pipeline::ShardWriter bc_val(cfg.out / "shards" / "bc_contractor_val.shard",
                                 context, obs, acfg,
                                 pipeline::ActionKind::Hierarchical);
    for (std::size_t i = 0; i < contractor.size(); ++i) {
      const auto t = demo::load_trajectory(contractor[i], acfg, false);
      const bool holdout = contractor.size() > 1 && i + 1 == contractor.size();
      add_windows(holdout ? val : train, t, t.actions,
                  pipeline::window_indices(t.actions, 0, t.length, raw));
      if (holdout)
        add_windows(bc_val, t, t.actions,
                    pipeline::window_indices(t.actions, 0, t.length, filtered));
    }
    train.finish();
    val.finish();
    bc_val.finish();
    metrics.append("build-shards", "idm_train_windows", 0, train.count(), h);
    metrics.append("build-shards", "idm_val_windows", 0, val.count(), h);
  }
  {
    pipeline::ShardWriter house(cfg.out / "shards" / "bc_house.shard", context,
                                obs, acfg, pipeline::ActionKind::Hierarchical);
    for (const auto& dir : demo::list_trajectories(paths.house)) {
      const auto t = demo::load_trajectory(dir, acfg, false);
      add_windows(house, t, t.actions,
                  pipeline::window_indices(t.actions, 0, t.length, filtered));
    }
    house.finish();
    metrics.append("build-shards", "house_windows", 0, house.count(), h);
  }
}

idm::IdmTrainConfig idm_config(const ExperimentConfig& cfg) {
  idm::IdmTrainConfig c;
  c.spec = model_spec_from(cfg, "idm", true);
  c.adam.lr = cfg.number("idm", "lr", 1e-3);
  c.adam.max_grad_norm = 1.0;
  c.epochs = static_cast<int>(cfg.number("idm", "epochs", 3));
  c.batch_windows = static_cast<int>(cfg.number("idm", "batch_windows", 4));
  return c;
}

void stage_train_idm(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto acfg = cfg.action_config();
  pipeline::ShardReader train(cfg.out / "shards" / "idm_train.shard", acfg);
  pipeline::ShardReader val(cfg.out / "shards" / "idm_val.shard", acfg);
  std::vector<idm::TrainLogEntry> log;
  const auto model = idm::train_idm(train, idm_config(cfg), cfg.seed, &log);
  fs::create_directories(cfg.out / "idm");
  model.save(cfg.out / "idm" / "idm.ckpt");
  const auto h = stage_hash(cfg, "train-idm");
  for (const auto& e : log)
    metrics.append("train-idm", "train_loss", e.step, e.loss, h);
  const auto eval = idm::evaluate_idm(model, val);
  metrics.append("train-idm", "keypress_accuracy", 0, eval.keypress_accuracy_mean, h);
  metrics.append("train-idm", "r2_cam_x", 0, eval.r2_cam_x, h);
  metrics.append("train-idm", "r2_cam_y", 0, eval.r2_cam_y, h);
}

void stage_label(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto acfg = cfg.action_config();
  const auto paths = corpora_paths(cfg);
  const auto model = nn::Model::load(cfg.out / "idm" / "idm.ckpt");
  const auto h = stage_hash(cfg, "label");
  std::int64_t labeled = 0;
  for (const auto& dir : demo::list_trajectories(paths.web)) {
    const auto t = demo::load_trajectory(dir, acfg, false);
    const auto actions = idm::pseudo_label(model, t.frames.data(), t.length, t.obs_size);
    demo::write_actions_file(dir / "actions.txt", actions, acfg, true);
    labeled += t.length;
  }
  metrics.append("label", "frames", 0, double(labeled), h);
}

// Builds hierarchical BC shards from the clean segments of pseudo-labeled
// web trajectories [first, last) and returns the window count.
int build_web_shard(const ExperimentConfig& cfg, const fs::path& out_file,
                    std::size_t first, std::size_t last, bool earlygame_only) {
  const auto acfg = cfg.action_config();
  const auto paths = corpora_paths(cfg);
  const int context = static_cast<int>(cfg.number("shards", "context", 12));
  const int min_null_run = static_cast<int>(cfg.number("shards", "min_null_run", 3));
  const int obs = static_cast<int>(cfg.number("env", "obs_size", 32));
  pipeline::WindowingConfig filtered{context, context / 2, true, min_null_run};
  pipeline::ShardWriter writer(out_file, context, obs, acfg,
                               pipeline::ActionKind::Hierarchical);
  const auto dirs = demo::list_trajectories(paths.web);
  for (std::size_t i = first; i < std::min(last, dirs.size()); ++i) {
    const auto t = demo::load_trajectory(dirs[i], acfg, false);
    if (t.actions.empty()) continue;  // not pseudo-labeled yet
    if (earlygame_only && !pipeline::match_earlygame_metadata(t.tags)) continue;
    for (const auto& [a, b] : read_segments(dirs[i] / "segments.txt"))
      add_windows(writer, t, t.actions,
                  pipeline::window_indices(t.actions, a, b, filtered));
  }
  writer.finish();
  return writer.count();
}

bc::BcTrainConfig bc_config(const ExperimentConfig& cfg) {
  bc::BcTrainConfig c;
  c.spec = model_spec_from(cfg, "bc", false);
  c.adam.lr = cfg.number("bc", "lr", 1e-3);
  c.adam.weight_decay = 0.01;
  c.adam.max_grad_norm = 1.0;
  c.epochs = static_cast<int>(cfg.number("bc", "epochs", 4));
  c.batch_windows = static_cast<int>(cfg.number("bc", "batch_windows", 4));
  return c;
}

void stage_train_bc(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto acfg = cfg.action_config();
  const auto paths = corpora_paths(cfg);
  const auto n_web = demo::list_trajectories(paths.web).size();
  const std::size_t val_count = n_web > 1 ? 1 : 0;
  build_web_shard(cfg, cfg.out / "shards" / "bc_web_train.shard", 0,
                  n_web - val_count, false);
  build_web_shard(cfg, cfg.out / "shards" / "bc_web_val.shard",
                  n_web - val_count, n_web, false);
  pipeline::ShardReader train(cfg.out / "shards" / "bc_web_train.shard", acfg);
  pipeline::ShardReader pseudo_val(cfg.out / "shards" / "bc_web_val.shard", acfg);
  pipeline::ShardReader contractor_val(cfg.out / "shards" / "bc_contractor_val.shard", acfg);
  std::vector<bc::EpochLosses> log;
  const auto model = bc::train_foundation(train, &pseudo_val, &contractor_val,
                                          bc_config(cfg), cfg.seed, &log);
  fs::create_directories(cfg.out / "bc");
  model.save(cfg.out / "bc" / "foundation.ckpt");
  const auto h = stage_hash(cfg, "train-bc");
  for (const auto& e : log) {
    metrics.append("train-bc", "train_loss", e.epoch, e.train, h);
    metrics.append("train-bc", "pseudo_val_loss", e.epoch, e.pseudo_val, h);
    metrics.append("train-bc", "contractor_val_loss", e.epoch, e.contractor_val, h);
  }
}

void stage_finetune_bc(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto acfg = cfg.action_config();
  const auto paths = corpora_paths(cfg);
  const auto foundation = nn::Model::load(cfg.out / "bc" / "foundation.ckpt");
  nn::AdamConfig adam;
  adam.lr = cfg.number("bc", "lr", 1e-3);
  adam.weight_decay = 0.01;
  adam.max_grad_norm = 1.0;
  const int epochs = static_cast<int>(cfg.number("bc", "finetune_epochs", 2));
  const auto h = stage_hash(cfg, "finetune-bc");
  {
    pipeline::ShardReader house(cfg.out / "shards" / "bc_house.shard", acfg);
    std::vector<bc::EpochLosses> log;
    const auto m = bc::finetune_bc(foundation, house, adam, epochs, cfg.seed + 5, &log);
    m.save(cfg.out / "bc" / "house.ckpt");
    for (const auto& e : log)
      metrics.append("finetune-bc", "house_train_loss", e.epoch, e.train, h);
  }
  {
    const auto n_web = demo::list_trajectories(paths.web).size();
    const int count = build_web_shard(cfg, cfg.out / "shards" / "bc_earlygame.shard",
                                      0, n_web, true);
    metrics.append("finetune-bc", "earlygame_windows", 0, count, h);
    pipeline::ShardReader early(cfg.out / "shards" / "bc_earlygame.shard", acfg);
    std::vector<bc::EpochLosses> log;
    const auto m = bc::finetune_bc(foundation, early, adam, epochs, cfg.seed + 6, &log);
    m.save(cfg.out / "bc" / "earlygame.ckpt");
    for (const auto& e : log)
      metrics.append("finetune-bc", "earlygame_train_loss", e.epoch, e.train, h);
  }
}

void archive_events(const fs::path& file,
                    const std::vector<std::vector<env::Event>>& logs) {
  std::ostringstream os;
  for (std::size_t e = 0; e < logs.size(); ++e) {
    os << "episode " << e << "\n";
    for (const auto& ev : logs[e]) os << ev.to_record() << "\n";
  }
  write_file(file, os.str());
}

void report_rollout(MetricStore& metrics, const std::string& stage,
                    const std::string& model_name, const bc::RolloutReport& r,
                    std::uint64_t h) {
  for (int i = 0; i < env::kItemCount; ++i) {
    const auto n = std::string(env::item_name(static_cast<env::Item>(i)));
    if (r.collected_mean[static_cast<std::size_t>(i)] > 0)
      metrics.append(stage, model_name + "/collected/" + n, 0,
                     r.collected_mean[static_cast<std::size_t>(i)], h);
    if (r.crafted_mean[static_cast<std::size_t>(i)] > 0)
      metrics.append(stage, model_name + "/crafted/" + n, 0,
                     r.crafted_mean[static_cast<std::size_t>(i)], h);
  }
  metrics.append(stage, model_name + "/null_rate", 0, r.null_rate, h);
}

void stage_rollout_eval(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto ecfg = cfg.env_config();
  const auto acfg = cfg.action_config();
  const int episodes = static_cast<int>(cfg.number("rollout", "episodes", 3));
  const int length = static_cast<int>(cfg.number("rollout", "length", 256));
  const auto h = stage_hash(cfg, "rollout-eval");
  fs::create_directories(cfg.out / "eval");
  const std::vector<std::pair<std::string, fs::path>> models = {
      {"foundation", cfg.out / "bc" / "foundation.ckpt"},
      {"house", cfg.out / "bc" / "house.ckpt"},
      {"earlygame", cfg.out / "bc" / "earlygame.ckpt"},
  };
  for (const auto& [name, path] : models) {
    const auto m = nn::Model::load(path);
    const auto r = bc::rollout_eval(m, ecfg, episodes, length, cfg.seed + 31);
    archive_events(cfg.out / "eval" / (name + "_events.txt"), r.event_logs);
    report_rollout(metrics, "rollout-eval", name, r, h);
  }
  {  // untrained baseline
    nn::Model random_model(model_spec_from(cfg, "bc", false), acfg, cfg.seed + 99);
    const auto r = bc::rollout_eval(random_model, ecfg, episodes, length, cfg.seed + 31);
    archive_events(cfg.out / "eval" / "random_events.txt", r.event_logs);
    report_rollout(metrics, "rollout-eval", "random", r, h);
  }
}

void stage_idm_scaling(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto acfg = cfg.action_config();
  const auto paths = corpora_paths(cfg);
  const auto ecfg = cfg.env_config();
  const int context = static_cast<int>(cfg.number("shards", "context", 12));
  const int obs = static_cast<int>(cfg.number("env", "obs_size", 32));
  const auto h = stage_hash(cfg, "idm-scaling");
  const jsn budgets = jsn::parse(cfg.subtree("scaling"))["budgets"];
  const auto contractor = demo::list_trajectories(paths.contractor);
  pipeline::ShardReader val(cfg.out / "shards" / "idm_val.shard", acfg);
  pipeline::WindowingConfig raw{context, context / 2, false, 3};

  fs::create_directories(cfg.out / "idm");
  for (const auto& bj : budgets) {
    const int budget = bj.get<int>();
    const std::size_t n =
        std::min<std::size_t>(static_cast<std::size_t>(budget),
                              contractor.size() > 1 ? contractor.size() - 1
                                                    : contractor.size());
    const fs::path shard_file =
        cfg.out / "idm" / ("scaling_" + std::to_string(budget) + ".shard");
    {
      pipeline::ShardWriter w(shard_file, context, obs, acfg,
                              pipeline::ActionKind::Factored);
      for (std::size_t i = 0; i < n; ++i) {
        const auto t = demo::load_trajectory(contractor[i], acfg, false);
        add_windows(w, t, t.actions,
                    pipeline::window_indices(t.actions, 0, t.length, raw));
      }
      w.finish();
    }
    pipeline::ShardReader train(shard_file, acfg);

    auto icfg = idm_config(cfg);
    const auto idm_model = idm::train_idm(train, icfg, cfg.seed + budget, nullptr);
    const auto idm_eval = idm::evaluate_idm(idm_model, val);
    metrics.append("idm-scaling", "idm_accuracy/" + std::to_string(budget), 0,
                   idm_eval.keypress_accuracy_mean, h);

    auto ccfg = icfg;
    ccfg.spec.causal = true;  // causal ablation sees only the past
    const auto causal_model = idm::train_idm(train, ccfg, cfg.seed + budget, nullptr);
    const auto causal_eval = idm::evaluate_idm(causal_model, val);
    metrics.append("idm-scaling", "causal_accuracy/" + std::to_string(budget), 0,
                   causal_eval.keypress_accuracy_mean, h);

    // Downstream effect: label the web corpus with this IDM and train a BC
    // policy on the result.
    const auto web = demo::list_trajectories(paths.web);
    const fs::path bc_shard =
        cfg.out / "idm" / ("scaling_bc_" + std::to_string(budget) + ".shard");
    {
      pipeline::WindowingConfig filtered{context, context / 2, true, 3};
      pipeline::ShardWriter w(bc_shard, context, obs, acfg,
                              pipeline::ActionKind::Hierarchical);
      for (const auto& dir : web) {
        const auto t = demo::load_trajectory(dir, acfg, false);
        const auto pseudo =
            idm::pseudo_label(idm_model, t.frames.data(), t.length, t.obs_size);
        for (const auto& [a, b] : read_segments(dir / "segments.txt"))
          add_windows(w, t, pseudo,
                      pipeline::window_indices(pseudo, a, b, filtered));
      }
      w.finish();
    }
    pipeline::ShardReader bc_train(bc_shard, acfg);
    auto bcc = bc_config(cfg);
    bcc.epochs = static_cast<int>(cfg.number("scaling", "scaling_bc_epochs", 2));
    const auto policy =
        bc::train_foundation(bc_train, nullptr, nullptr, bcc, cfg.seed + budget, nullptr);
    const auto r = bc::rollout_eval(
        policy, ecfg, static_cast<int>(cfg.number("rollout", "episodes", 3)),
        static_cast<int>(cfg.number("rollout", "length", 256)), cfg.seed + 77);
    const int table_idx = static_cast<int>(env::Item::CraftingTable);
    metrics.append("idm-scaling", "bc_table_rate/" + std::to_string(budget), 0,
                   r.crafted_mean[static_cast<std::size_t>(table_idx)], h);
  }
}

void stage_bc_scaling(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto acfg = cfg.action_config();
  const auto ecfg = cfg.env_config();
  const auto paths = corpora_paths(cfg);
  const int context = static_cast<int>(cfg.number("shards", "context", 12));
  const int obs = static_cast<int>(cfg.number("env", "obs_size", 32));
  const auto h = stage_hash(cfg, "bc-scaling");
  const jsn sizes = jsn::parse(cfg.subtree("scaling"))["web_sizes"];
  const int episodes = static_cast<int>(cfg.number("rollout", "episodes", 3));
  const int length = static_cast<int>(cfg.number("rollout", "length", 256));
  pipeline::ShardReader house(cfg.out / "shards" / "bc_house.shard", acfg);
  nn::AdamConfig ft_adam;
  ft_adam.lr = cfg.number("bc", "lr", 1e-3);
  ft_adam.max_grad_norm = 1.0;

  auto eval_point = [&](const std::string& label, const pipeline::ShardReader& train) {
    auto bcc = bc_config(cfg);
    bcc.epochs = static_cast<int>(cfg.number("scaling", "scaling_bc_epochs", 2));
    const auto model =
        bc::train_foundation(train, nullptr, nullptr, bcc, cfg.seed + 3, nullptr);
    const auto zero = bc::rollout_eval(model, ecfg, episodes, length, cfg.seed + 41);
    report_rollout(metrics, "bc-scaling", label + "/zero_shot", zero, h);
    const auto tuned = bc::finetune_bc(
        model, house, ft_adam,
        static_cast<int>(cfg.number("bc", "finetune_epochs", 2)), cfg.seed + 4, nullptr);
    const auto ft = bc::rollout_eval(tuned, ecfg, episodes, length, cfg.seed + 42);
    report_rollout(metrics, "bc-scaling", label + "/finetuned", ft, h);
  };

  {  // smallest point: ground-truth contractor data only
    const fs::path f = cfg.out / "shards" / "scaling_contractor.shard";
    pipeline::WindowingConfig filtered{context, context / 2, true, 3};
    pipeline::ShardWriter w(f, context, obs, acfg, pipeline::ActionKind::Hierarchical);
    for (const auto& dir : demo::list_trajectories(paths.contractor)) {
      const auto t = demo::load_trajectory(dir, acfg, false);
      add_windows(w, t, t.actions,
                  pipeline::window_indices(t.actions, 0, t.length, filtered));
    }
    w.finish();
    pipeline::ShardReader r(f, acfg);
    eval_point("contractor", r);
  }
  for (const auto& sj : sizes) {
    const int size = sj.get<int>();
    const fs::path f =
        cfg.out / "shards" / ("scaling_web_" + std::to_string(size) + ".shard");
    build_web_shard(cfg, f, 0, static_cast<std::size_t>(size), false);
    pipeline::ShardReader r(f, acfg);
    eval_point("web_" + std::to_string(size), r);
  }
}

rl::RLConfig rl_config(const ExperimentConfig& cfg) {
  rl::RLConfig c;
  c.lr = cfg.number("rl", "lr", 2e-5);
  c.envs = static_cast<int>(cfg.number("rl", "envs", 4));
  c.episode_len = static_cast<int>(cfg.number("rl", "episode_len", 96));
  c.batch_windows = static_cast<int>(cfg.number("rl", "batch_windows", 4));
  return c;
}

void stage_train_rl(const ExperimentConfig& cfg, MetricStore& metrics) {
  const auto ecfg = cfg.env_config();
  const auto acfg = cfg.action_config();
  const auto h = stage_hash(cfg, "train-rl");
  const int iterations = static_cast<int>(cfg.number("rl", "iterations", 300));
  const auto reward = rl::RewardSpec::standard();
  const jsn treatments = jsn::parse(cfg.subtree("rl"))["treatments"];
  const auto earlygame = nn::Model::load(cfg.out / "bc" / "earlygame.ckpt");
  fs::create_directories(cfg.out / "rl");

  for (const auto& tj : treatments) {
    const std::string treatment = tj.get<std::string>();
    rl::RLConfig rcfg = rl_config(cfg);
    nn::Model policy;
    const nn::Model* prior = nullptr;
    if (treatment == "random") {
      auto spec = earlygame.spec();
      spec.value_heads = true;
      policy = nn::Model(spec, acfg, cfg.seed + 1234);
      policy.zero_value_head();
      rcfg.use_kl = false;  // entropy bonus instead
    } else if (treatment == "earlygame_kl") {
      policy = rl::add_value_heads(earlygame, cfg.seed + 55);
      prior = &earlygame;
    } else if (treatment == "earlygame_nokl") {
      policy = rl::add_value_heads(earlygame, cfg.seed + 55);
      rcfg.use_kl = false;
      rcfg.entropy_bonus = 0.0;
      rcfg.lr = cfg.number("rl", "nokl_lr", rcfg.lr);
    } else {
      throw StageError("unknown rl treatment: " + treatment);
    }
    const auto stats =
        rl::train_rl(policy, prior, ecfg, reward, rcfg, iterations, cfg.seed + 7);
    policy.save(cfg.out / "rl" / (treatment + ".ckpt"));
    for (const auto& s : stats) {
      metrics.append("train-rl", treatment + "/reward", s.iteration, s.mean_reward, h);
      for (int i = 0; i < env::kItemCount; ++i)
        if (s.item_rate[static_cast<std::size_t>(i)] > 0)
          metrics.append("train-rl",
                         treatment + "/item/" +
                             env::item_name(static_cast<env::Item>(i)),
                         s.iteration, s.item_rate[static_cast<std::size_t>(i)], h);
    }
  }
}

}  // namespace

void run_stage(const ExperimentConfig& cfg, const std::string& stage) {
  if (std::find(kStages.begin(), kStages.end(), stage) == kStages.end())
    throw StageError("unknown stage: " + stage);
  check_deps(cfg, stage);
  fs::create_directories(cfg.out);
  MetricStore metrics(cfg.out / "metrics");
  // Re-running a stage replaces its metric records to keep reports exact.
  fs::remove(cfg.out / "metrics" / (stage + ".metrics"));

  if (stage == "gen-data") stage_gen_data(cfg);
  else if (stage == "train-filter") stage_train_filter(cfg, metrics);
  else if (stage == "filter") stage_filter(cfg, metrics);
  else if (stage == "build-shards") stage_build_shards(cfg, metrics);
  else if (stage == "train-idm") stage_train_idm(cfg, metrics);
  else if (stage == "idm-scaling") stage_idm_scaling(cfg, metrics);
  else if (stage == "label") stage_label(cfg, metrics);
  else if (stage == "train-bc") stage_train_bc(cfg, metrics);
  else if (stage == "finetune-bc") stage_finetune_bc(cfg, metrics);
  else if (stage == "rollout-eval") stage_rollout_eval(cfg, metrics);
  else if (stage == "bc-scaling") stage_bc_scaling(cfg, metrics);
  else if (stage == "train-rl") stage_train_rl(cfg, metrics);
  else if (stage == "report") {
    std::vector<std::string> warnings;
    for (const auto& fig : {"fig2", "fig3", "fig4", "fig6", "fig7", "fig8"})
      report_figure(cfg, fig, &warnings);
  }
  write_manifest(cfg, stage);
}

std::filesystem::path report_figure(const ExperimentConfig& cfg,
                                    const std::string& figure,
                                    std::vector<std::string>* warnings) {
  MetricStore metrics(cfg.out / "metrics");
  fs::create_directories(cfg.out / "report");
  const fs::path out_file = cfg.out / "report" / (figure + ".tsv");
  std::ostringstream os;
  os.precision(17);
  auto warn = [&](const std::string& msg) {
    if (warnings) warnings->push_back(figure + ": " + msg);
  };

  auto series_table =
      [&](const std::string& stage, const std::string& header,
          auto&& row_filter) {
        os << header << "\n";
        const auto recs = metrics.read(stage);
        if (recs.empty()) warn("no records for stage " + stage);
        for (const auto& r : recs) row_filter(r);
      };

  if (figure == "fig2" || figure == "fig8") {
    // IDM budget studies: accuracy (fig2) / downstream BC crafting (fig8).
    series_table("idm-scaling", "series\tbudget\tvalue",
                 [&](const MetricStore::Record& r) {
                   const auto slash = r.name.find('/');
                   if (slash == std::string::npos) return;
                   const std::string series = r.name.substr(0, slash);
                   const std::string budget = r.name.substr(slash + 1);
                   const bool fig2_series =
                       series == "idm_accuracy" || series == "causal_accuracy";
                   if ((figure == "fig2") != fig2_series) return;
                   os << series << "\t" << budget << "\t" << r.value << "\n";
                 });
  } else if (figure == "fig3") {
    series_table("train-bc", "series\tepoch\tloss",
                 [&](const MetricStore::Record& r) {
                   os << r.name << "\t" << r.step << "\t" << r.value << "\n";
                 });
  } else if (figure == "fig4") {
    series_table("rollout-eval", "model\tmetric\tvalue",
                 [&](const MetricStore::Record& r) {
                   const auto slash = r.name.find('/');
                   if (slash == std::string::npos) return;
                   os << r.name.substr(0, slash) << "\t"
                      << r.name.substr(slash + 1) << "\t" << r.value << "\n";
                 });
  } else if (figure == "fig6") {
    series_table("train-rl", "treatment\tmetric\titeration\tvalue",
                 [&](const MetricStore::Record& r) {
                   const auto slash = r.name.find('/');
                   if (slash == std::string::npos) return;
                   os << r.name.substr(0, slash) << "\t"
                      << r.name.substr(slash + 1) << "\t" << r.step << "\t"
                      << r.value << "\n";
                 });
  } else if (figure == "fig7") {
    series_table("bc-scaling", "size\tmode\tmetric\tvalue",
                 [&](const MetricStore::Record& r) {
                   const auto s1 = r.name.find('/');
                   const auto s2 = r.name.find('/', s1 + 1);
                   if (s1 == std::string::npos || s2 == std::string::npos) return;
                   os << r.name.substr(0, s1) << "\t"
                      << r.name.substr(s1 + 1, s2 - s1 - 1) << "\t"
                      << r.name.substr(s2 + 1) << "\t" << r.value << "\n";
                 });
  } else {
    throw StageError("unknown figure: " + figure);
  }
  write_file(out_file, os.str());
  return out_file;
}

}  // namespace vpt::experiment
