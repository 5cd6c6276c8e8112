#include "vpt/bc.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "vpt/util.hpp"

namespace vpt::bc {

namespace {

// Temperature-1 categorical sample from one logit row; `banned` (if >= 0)
// gets probability zero.
int sample_row(const nn::Node* logits, int row, Rng& rng, bool greedy,
               int banned = -1) {
  const std::size_t base = static_cast<std::size_t>(row) * logits->cols;
  const int n = logits->cols;
  if (greedy) {
    int best = banned == 0 ? 1 : 0;
    for (int j = 0; j < n; ++j)
      if (j != banned && logits->v[base + static_cast<std::size_t>(j)] >
                             logits->v[base + static_cast<std::size_t>(best)])
        best = j;
    return best;
  }
  double mx = -std::numeric_limits<double>::infinity();
  for (int j = 0; j < n; ++j)
    if (j != banned) mx = std::max(mx, logits->v[base + static_cast<std::size_t>(j)]);
  std::vector<double> cum(static_cast<std::size_t>(n));
  double total = 0;
  for (int j = 0; j < n; ++j) {
    total += j == banned ? 0.0
                         : std::exp(logits->v[base + static_cast<std::size_t>(j)] - mx);
    cum[static_cast<std::size_t>(j)] = total;
  }
  std::uniform_real_distribution<double> u(0.0, total);
  const double r = u(rng);
  for (int j = 0; j < n; ++j)
    if (r < cum[static_cast<std::size_t>(j)]) return j;
  return n - 1;
}

nn::Node* window_nll(const nn::Model& model, nn::Graph& g,
                     const nn::HeadLogits& heads,
                     const pipeline::Window& w) {
  if (!w.hierarchical.empty()) return model.nll_hierarchical(g, heads, w.hierarchical);
  return model.nll_factored(g, heads, w.factored);
}

}  // namespace

double mean_nll(const nn::Model& model, const pipeline::ShardReader& shard) {
  if (shard.size() == 0) return 0.0;
  double total = 0;
  for (int i = 0; i < shard.size(); ++i) {
    const auto w = shard.get(i);
    nn::Graph g;
    const auto heads = model.forward(g, w.frames.data(), shard.context());
    total += window_nll(model, g, heads, w)->scalar();
  }
  return total / (double(shard.size()) * shard.context());
}

namespace {

void train_epochs(nn::Model& model, nn::Adam& opt,
                  const pipeline::ShardReader& shard,
                  const pipeline::ShardReader* pseudo_val,
                  const pipeline::ShardReader* contractor_val, int epochs,
                  int batch_windows, Rng& rng, std::vector<EpochLosses>* log) {
  std::vector<int> order(static_cast<std::size_t>(shard.size()));
  std::iota(order.begin(), order.end(), 0);
  const int t = shard.context();
  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double epoch_loss = 0;
    int acc = 0;
    for (int wi = 0; wi < shard.size(); ++wi) {
      const auto w = shard.get(order[static_cast<std::size_t>(wi)]);
      nn::Graph g;
      const auto heads = model.forward(g, w.frames.data(), t);
      auto* nll = window_nll(model, g, heads, w);
      g.backward(g.scale(nll, 1.0 / (batch_windows * t)));
      epoch_loss += nll->scalar() / t;
      if (++acc == batch_windows || wi + 1 == shard.size()) {
        opt.step(model);
        acc = 0;
      }
    }
    if (log) {
      EpochLosses e;
      e.epoch = epoch;
      e.train = shard.size() ? epoch_loss / shard.size() : 0.0;
      e.pseudo_val = pseudo_val ? mean_nll(model, *pseudo_val) : 0.0;
      e.contractor_val = contractor_val ? mean_nll(model, *contractor_val) : 0.0;
      log->push_back(e);
    }
  }
}

}  // namespace

nn::Model train_foundation(const pipeline::ShardReader& train_shard,
                           const pipeline::ShardReader* pseudo_val,
                           const pipeline::ShardReader* contractor_val,
                           const BcTrainConfig& cfg, std::uint64_t seed,
                           std::vector<EpochLosses>* log) {
  nn::Model model(cfg.spec, train_shard.acfg(), seed);
  nn::Adam opt(cfg.adam, model);
  Rng rng(seed ^ 0xda3e39cb94b95bdbULL);
  train_epochs(model, opt, train_shard, pseudo_val, contractor_val, cfg.epochs,
               cfg.batch_windows, rng, log);
  return model;
}

nn::Model finetune_bc(nn::Model base, const pipeline::ShardReader& shard,
                      const nn::AdamConfig& adam, int epochs,
                      std::uint64_t seed, std::vector<EpochLosses>* log) {
  nn::Adam opt(adam, base);
  Rng rng(seed ^ 0xaf251af3b0f025b5ULL);
  train_epochs(base, opt, shard, nullptr, nullptr, epochs, 4, rng, log);
  return base;
}

action::FactoredAction sample_action(const nn::HeadLogits& heads, int row,
                                     const action::ActionSpaceConfig& acfg,
                                     Rng& rng, bool greedy) {
  if (heads.joint) {
    const int bins = acfg.bins_per_axis;
    const std::int64_t joint = sample_row(heads.joint, row, rng, greedy);
    action::HierarchicalAction h;
    h.joint_index = joint;
    if (joint != action::inventory_index(acfg) && (joint & 1)) {
      const int center = bins * (bins / 2) + bins / 2;
      h.camera_sub = sample_row(heads.camera_sub, row, rng, greedy, center);
    }
    return action::decode_hierarchical(h, acfg);
  }
  action::FactoredAction a = action::null_action(acfg);
  if (sample_row(heads.inventory, row, rng, greedy) == 1) {
    a.inventory = true;
    return a;
  }
  for (std::size_t gi = 0; gi < acfg.groups.size(); ++gi)
    a.choices[gi] = sample_row(heads.groups[gi], row, rng, greedy);
  a.mouse.x = sample_row(heads.cam_x, row, rng, greedy);
  a.mouse.y = sample_row(heads.cam_y, row, rng, greedy);
  return a;
}

PolicyRunner::PolicyRunner(const nn::Model& model, std::uint64_t seed,
                           bool greedy)
    : model_(model), rng_(seed ^ 0xc2b2ae3d27d4eb4fULL), greedy_(greedy) {}

void PolicyRunner::reset() {
  window_.clear();
  len_ = 0;
}

action::FactoredAction PolicyRunner::act(const env::Observation& obs) {
  const int t_max = model_.spec().context;
  const std::size_t fbytes = obs.rgb.size();
  if (len_ == t_max) {
    window_.erase(window_.begin(), window_.begin() + static_cast<std::ptrdiff_t>(fbytes));
    --len_;
  }
  window_.insert(window_.end(), obs.rgb.begin(), obs.rgb.end());
  ++len_;
  nn::Graph g;
  const auto heads = model_.forward(g, window_.data(), len_);
  return sample_action(heads, len_ - 1, model_.action_config(), rng_, greedy_);
}

namespace {

void finalize_stats(RolloutReport& r) {
  const int n = r.episodes;
  std::vector<env::ItemStats> per;
  per.reserve(r.event_logs.size());
  for (const auto& log : r.event_logs) per.push_back(env::stats(log));
  const double nan = std::numeric_limits<double>::quiet_NaN();
  for (int i = 0; i < env::kItemCount; ++i) {
    double mc = 0, mk = 0;
    for (const auto& s : per) {
      mc += s.collected[static_cast<std::size_t>(i)];
      mk += s.crafted[static_cast<std::size_t>(i)];
    }
    mc /= n;
    mk /= n;
    r.collected_mean[static_cast<std::size_t>(i)] = mc;
    r.crafted_mean[static_cast<std::size_t>(i)] = mk;
    if (n < 2) {
      r.collected_sem[static_cast<std::size_t>(i)] = nan;
      r.crafted_sem[static_cast<std::size_t>(i)] = nan;
    } else {
      double vc = 0, vk = 0;
      for (const auto& s : per) {
        vc += (s.collected[static_cast<std::size_t>(i)] - mc) *
              (s.collected[static_cast<std::size_t>(i)] - mc);
        vk += (s.crafted[static_cast<std::size_t>(i)] - mk) *
              (s.crafted[static_cast<std::size_t>(i)] - mk);
      }
      r.collected_sem[static_cast<std::size_t>(i)] = std::sqrt(vc / (n - 1) / n);
      r.crafted_sem[static_cast<std::size_t>(i)] = std::sqrt(vk / (n - 1) / n);
    }
  }
}

}  // namespace

RolloutReport rollout_eval(const nn::Model& model, const env::EnvConfig& ecfg,
                           int episodes, int episode_len, std::uint64_t seed,
                           bool greedy) {
  RolloutReport report;
  report.episodes = episodes;
  report.episode_len = episode_len;
  std::int64_t nulls = 0, total = 0;
  for (int e = 0; e < episodes; ++e) {
    env::MiniCrafter world(ecfg, model.action_config());
    env::Observation obs = world.reset(seed * 7919ULL + static_cast<std::uint64_t>(e));
    PolicyRunner runner(model, seed * 104729ULL + static_cast<std::uint64_t>(e), greedy);
    std::vector<env::Event> events;
    for (int t = 0; t < episode_len; ++t) {
      const auto a = runner.act(obs);
      nulls += action::is_null(a);
      ++total;
      auto res = world.step(a);
      obs = std::move(res.obs);
      for (auto& ev : res.events) events.push_back(ev);
    }
    report.event_logs.push_back(std::move(events));
  }
  report.null_rate = total ? double(nulls) / double(total) : 0.0;
  finalize_stats(report);
  return report;
}

RolloutReport replay_report(const std::vector<std::vector<env::Event>>& logs,
                            int episode_len) {
  RolloutReport report;
  report.episodes = static_cast<int>(logs.size());
  report.episode_len = episode_len;
  report.event_logs = logs;
  finalize_stats(report);
  return report;
}

}  // namespace vpt::bc
