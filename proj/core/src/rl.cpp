#include "vpt/rl.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vpt/util.hpp"

namespace vpt::rl {

using env::Item;

RewardSpec RewardSpec::standard() {
  RewardSpec s;
  s.entries = {
      {Item::Log, 1.0 / 8, 8},
      {Item::Planks, 1.0 / 20, 20},
      {Item::Stick, 1.0 / 16, 16},
      {Item::CraftingTable, 1.0, 1},
      {Item::WoodenPickaxe, 1.0, 1},
      {Item::Cobblestone, 1.0 / 11, 11},
      {Item::StonePickaxe, 1.0, 1},
      {Item::Furnace, 1.0, 1},
      {Item::Coal, 2.0 / 5, 5},
      {Item::Torch, 1.0 / 8, 16},
      {Item::IronOre, 4.0 / 3, 3},
      {Item::IronIngot, 4.0 / 3, 3},
      {Item::IronPickaxe, 4.0, 1},
      {Item::Diamond, 8.0 / 3, -1},
      {Item::DiamondPickaxe, 8.0, -1},
  };
  return s;
}

std::string RewardSpec::serialize() const {
  std::ostringstream os;
  os.precision(17);
  for (const auto& e : entries)
    os << env::item_name(e.item) << " " << e.reward << " " << e.cap << "\n";
  return os.str();
}

RewardSpec RewardSpec::parse(std::string_view text) {
  RewardSpec s;
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty() || line[0] == '#') continue;
    std::istringstream ls(line);
    std::string name;
    Entry e;
    ls >> name >> e.reward >> e.cap;
    const auto item = env::item_from_name(name);
    if (!item || ls.fail())
      throw std::invalid_argument("bad reward spec line: " + line);
    e.item = *item;
    s.entries.push_back(e);
  }
  return s;
}

double RewardSpec::reward_for(env::Item item) const {
  for (const auto& e : entries)
    if (e.item == item) return e.reward;
  return 0.0;
}

int RewardSpec::cap_for(env::Item item) const {
  for (const auto& e : entries)
    if (e.item == item) return e.cap;
  return 0;
}

double compute_reward(const RewardSpec& spec, std::span<const env::Event> events,
                      std::array<int, env::kItemCount>& counts) {
  double total = 0;
  for (const auto& ev : events) {
    if (ev.kind != env::Event::Kind::Collect && ev.kind != env::Event::Kind::Craft)
      continue;
    const int idx = static_cast<int>(ev.item);
    const double r = spec.reward_for(ev.item);
    const int cap = spec.cap_for(ev.item);
    for (int q = 0; q < ev.qty; ++q) {
      if (cap < 0 || counts[static_cast<std::size_t>(idx)] < cap) total += r;
      ++counts[static_cast<std::size_t>(idx)];
    }
  }
  return total;
}

GaeResult gae(const std::vector<double>& rewards,
              const std::vector<double>& values, double gamma, double lambda,
              double bootstrap) {
  const std::size_t n = rewards.size();
  if (values.size() != n) throw std::invalid_argument("gae length mismatch");
  GaeResult out;
  out.advantages.resize(n);
  out.targets.resize(n);
  double running = 0;
  for (std::size_t i = n; i-- > 0;) {
    const double next_v = i + 1 < n ? values[i + 1] : bootstrap;
    const double delta = rewards[i] + gamma * next_v - values[i];
    running = delta + gamma * lambda * running;
    out.advantages[i] = running;
    out.targets[i] = running + values[i];
  }
  return out;
}

void EwmaNorm::update(std::span<const double> targets) {
  for (const double t : targets) {
    weight = decay * weight + (1 - decay);
    mean = decay * mean + (1 - decay) * t;
    sq = decay * sq + (1 - decay) * t * t;
  }
}

double EwmaNorm::std_dev() const {
  if (weight <= 0) return 0.0;
  const double m = mean / weight;
  return std::sqrt(std::max(0.0, sq / weight - m * m));
}

double EwmaNorm::normalize(double t) const {
  if (weight <= 0) return t;
  const double m = mean / weight;
  return (t - m) / std::max(std_dev(), 1e-8);
}

double EwmaNorm::denormalize(double z) const {
  if (weight <= 0) return z;
  return z * std::max(std_dev(), 1e-8) + mean / weight;
}

std::vector<double> normalize_value_targets(std::span<const double> targets,
                                            EwmaNorm& state) {
  state.update(targets);
  std::vector<double> out(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i)
    out[i] = state.normalize(targets[i]);
  return out;
}

double kl_coefficient(int iteration, double rho0, double decay) {
  return rho0 * std::pow(decay, double(iteration));
}

namespace {

// Per-row labels for the hierarchical heads of a window.
void head_labels(const std::vector<action::HierarchicalAction>& acts,
                 std::vector<int>& joint, std::vector<int>& cam,
                 std::vector<double>& cam_w) {
  joint.clear();
  cam.clear();
  cam_w.clear();
  for (const auto& a : acts) {
    joint.push_back(static_cast<int>(a.joint_index));
    cam.push_back(a.camera_sub ? *a.camera_sub : -1);
    cam_w.push_back(a.camera_sub ? 1.0 : 0.0);
  }
}

struct FixedLogits {
  std::vector<double> joint;  // t * joint_size
  std::vector<double> cam;    // t * bins^2
};

FixedLogits snapshot_logits(const nn::Model& model, const SampleWindow& w) {
  nn::Graph g;
  const auto heads = model.forward(g, w.frames.data(), static_cast<int>(w.acts.size()));
  FixedLogits out;
  out.joint = heads.joint->v;
  out.cam = heads.camera_sub->v;
  return out;
}

std::vector<double> window_logp(const nn::Model& model, const SampleWindow& w) {
  nn::Graph g;
  const int t = static_cast<int>(w.acts.size());
  const auto heads = model.forward(g, w.frames.data(), t);
  std::vector<int> jl, cl;
  std::vector<double> cw;
  head_labels(w.acts, jl, cl, cw);
  auto* lp = g.add(g.logp_rows(heads.joint, jl), g.logp_rows(heads.camera_sub, cl));
  return lp->v;
}

}  // namespace

UpdateStats wake_update(nn::Model& policy, nn::Adam& opt,
                        std::vector<SampleWindow>& batch, const RLConfig& cfg,
                        double rho, const nn::Model* prior) {
  UpdateStats stats;
  // Freeze everything computed from pre-update parameters first so that
  // later minibatches still compare against the collection-time policy.
  std::vector<FixedLogits> prior_logits;
  for (auto& w : batch) {
    w.old_logp = window_logp(policy, w);
    if (prior) prior_logits.push_back(snapshot_logits(*prior, w));
  }

  int acc = 0;
  for (std::size_t wi = 0; wi < batch.size(); ++wi) {
    auto& w = batch[wi];
    const int t = static_cast<int>(w.acts.size());
    nn::Graph g;
    const auto heads = policy.forward(g, w.frames.data(), t);
    std::vector<int> jl, cl;
    std::vector<double> cw;
    head_labels(w.acts, jl, cl, cw);
    auto* lp = g.add(g.logp_rows(heads.joint, jl), g.logp_rows(heads.camera_sub, cl));
    auto* surrogate = g.ppo_surrogate(lp, w.old_logp, w.advantages, cfg.clip);
    auto* vloss = g.mse(heads.value, w.value_targets);
    nn::Node* loss = g.add(surrogate, g.scale(vloss, cfg.value_coef));
    if (prior) {
      std::vector<double> ones(static_cast<std::size_t>(t), 1.0);
      auto* klj = g.kl_to_fixed(prior_logits[wi].joint, heads.joint, ones);
      auto* klc = g.kl_to_fixed(prior_logits[wi].cam, heads.camera_sub, cw);
      auto* kl = g.add(klj, klc);
      loss = g.add(loss, g.scale(kl, rho));
      stats.kl_to_prior += kl->scalar() / t;
    } else {
      loss = g.add(loss, g.scale(g.entropy(heads.joint), -cfg.entropy_bonus));
    }
    g.backward(g.scale(loss, 1.0 / (cfg.batch_windows * t)));
    stats.policy_loss += surrogate->scalar() / t;
    stats.value_loss += vloss->scalar() / t;
    ++stats.samples;
    if (++acc == cfg.batch_windows || wi + 1 == batch.size()) {
      opt.step(policy);
      acc = 0;
    }
  }
  if (!batch.empty()) {
    stats.policy_loss /= double(batch.size());
    stats.value_loss /= double(batch.size());
    stats.kl_to_prior /= double(batch.size());
  }
  return stats;
}

UpdateStats sleep_update(nn::Model& policy, nn::Adam& opt,
                         std::vector<SampleWindow>& batch, const RLConfig& cfg,
                         const nn::Model& anchor, int passes) {
  UpdateStats stats;
  std::vector<FixedLogits> anchor_logits;
  anchor_logits.reserve(batch.size());
  for (const auto& w : batch) anchor_logits.push_back(snapshot_logits(anchor, w));

  for (int pass = 0; pass < passes; ++pass) {
    int acc = 0;
    for (std::size_t wi = 0; wi < batch.size(); ++wi) {
      auto& w = batch[wi];
      if (++w.reuse > cfg.max_sample_reuse)
        throw nn::TrainingError("sleep phase exceeded max sample reuse");
      const int t = static_cast<int>(w.acts.size());
      nn::Graph g;
      const auto heads = policy.forward(g, w.frames.data(), t);
      std::vector<int> jl, cl;
      std::vector<double> cw;
      head_labels(w.acts, jl, cl, cw);
      std::vector<double> ones(static_cast<std::size_t>(t), 1.0);
      auto* vloss = g.mse(heads.value, w.value_targets);
      auto* aloss = g.mse(heads.aux_value, w.value_targets);
      auto* klj = g.kl_to_fixed(anchor_logits[wi].joint, heads.joint, ones);
      auto* klc = g.kl_to_fixed(anchor_logits[wi].cam, heads.camera_sub, cw);
      auto* kl = g.add(klj, klc);
      auto* loss = g.add(g.add(g.scale(vloss, cfg.sleep_value_coef),
                               g.scale(aloss, cfg.sleep_aux_coef)),
                         g.scale(kl, cfg.sleep_kl_coef));
      g.backward(g.scale(loss, 1.0 / (cfg.batch_windows * t)));
      stats.value_loss += vloss->scalar() / t;
      stats.kl_to_prior += kl->scalar() / t;
      ++stats.samples;
      if (++acc == cfg.batch_windows || wi + 1 == batch.size()) {
        opt.step(policy);
        acc = 0;
      }
    }
  }
  if (stats.samples) {
    stats.value_loss /= stats.samples;
    stats.kl_to_prior /= stats.samples;
  }
  return stats;
}

nn::Model add_value_heads(const nn::Model& base, std::uint64_t seed) {
  nn::ModelSpec spec = base.spec();
  spec.value_heads = true;
  nn::Model out(spec, base.action_config(), seed);
  for (auto& p : out.params())
    for (const auto& bp : base.params())
      if (bp.name == p.name && bp.rows == p.rows && bp.cols == p.cols) {
        p.v = bp.v;
        break;
      }
  out.zero_value_head();
  out.step_count = 0;
  return out;
}

std::vector<IterationStats> train_rl(nn::Model& policy, const nn::Model* prior,
                                     const env::EnvConfig& ecfg,
                                     const RewardSpec& reward,
                                     const RLConfig& cfg, int iterations,
                                     std::uint64_t seed) {
  if (!policy.spec().value_heads)
    throw nn::TrainingError("rl training needs a value-headed policy");
  const int t = policy.spec().context;
  const int steps = cfg.episode_len - cfg.episode_len % t;
  const auto& acfg = policy.action_config();
  nn::AdamConfig adam_cfg;
  adam_cfg.lr = cfg.lr;
  adam_cfg.weight_decay = cfg.weight_decay;
  adam_cfg.max_grad_norm = cfg.max_grad_norm;
  nn::Adam opt(adam_cfg, policy);
  EwmaNorm ewma{.decay = cfg.ewma_decay};
  std::vector<IterationStats> out;

  const std::size_t fbytes = static_cast<std::size_t>(ecfg.obs_size) * ecfg.obs_size * 3;
  for (int iter = 0; iter < iterations; ++iter) {
    const double rho = cfg.use_kl ? kl_coefficient(iter, cfg.rho0, cfg.rho_decay) : 0.0;
    IterationStats is;
    is.iteration = iter;
    is.rho = rho;

    std::vector<SampleWindow> windows;
    std::vector<double> all_targets;
    std::vector<std::vector<double>> env_advs, env_targets;
    std::vector<std::vector<std::uint8_t>> env_frames;
    std::vector<std::vector<action::HierarchicalAction>> env_acts;

    for (int e = 0; e < cfg.envs; ++e) {
      env::MiniCrafter world(ecfg, acfg);
      const std::uint64_t eseed =
          seed + static_cast<std::uint64_t>(iter) * 6151ULL + static_cast<std::uint64_t>(e);
      env::Observation obs = world.reset(eseed * 2654435761ULL);
      Rng rng(eseed ^ 0x9e3779b97f4a7c15ULL);

      std::vector<std::uint8_t> frames;
      std::vector<action::HierarchicalAction> acts;
      std::vector<double> rewards, values;
      std::array<int, env::kItemCount> counts{};
      std::array<bool, env::kItemCount> got{};
      std::vector<std::uint8_t> rolling;
      int len = 0;
      double ep_reward = 0;

      auto forward_last = [&](nn::Graph& g) {
        if (len == t) {
          rolling.erase(rolling.begin(), rolling.begin() + static_cast<std::ptrdiff_t>(fbytes));
          --len;
        }
        rolling.insert(rolling.end(), obs.rgb.begin(), obs.rgb.end());
        ++len;
        return policy.forward(g, rolling.data(), len);
      };

      for (int step = 0; step < steps; ++step) {
        nn::Graph g;
        const auto heads = forward_last(g);
        const auto a = bc::sample_action(heads, len - 1, acfg, rng, false);
        frames.insert(frames.end(), obs.rgb.begin(), obs.rgb.end());
        acts.push_back(action::encode_hierarchical(a, acfg));
        values.push_back(ewma.denormalize(
            heads.value->v[static_cast<std::size_t>(len - 1)]));
        auto res = world.step(a);
        obs = std::move(res.obs);
        const double r = compute_reward(reward, res.events, counts);
        rewards.push_back(r);
        ep_reward += r;
        for (const auto& ev : res.events)
          if (ev.kind == env::Event::Kind::Collect || ev.kind == env::Event::Kind::Craft)
            got[static_cast<std::size_t>(static_cast<int>(ev.item))] = true;
      }
      double bootstrap;
      {
        nn::Graph g;
        const auto heads = forward_last(g);
        bootstrap = ewma.denormalize(heads.value->v[static_cast<std::size_t>(len - 1)]);
      }
      const auto adv = gae(rewards, values, cfg.gamma, cfg.lambda, bootstrap);
      env_advs.push_back(adv.advantages);
      env_targets.push_back(adv.targets);
      env_frames.push_back(std::move(frames));
      env_acts.push_back(std::move(acts));
      all_targets.insert(all_targets.end(), adv.targets.begin(), adv.targets.end());
      is.mean_reward += ep_reward / cfg.envs;
      for (int i = 0; i < env::kItemCount; ++i)
        is.item_rate[static_cast<std::size_t>(i)] +=
            got[static_cast<std::size_t>(i)] ? 1.0 / cfg.envs : 0.0;
    }

    ewma.update(all_targets);
    for (int e = 0; e < cfg.envs; ++e) {
      for (int p = 0; p + t <= steps; p += t) {
        SampleWindow w;
        w.frames.assign(env_frames[static_cast<std::size_t>(e)].begin() + static_cast<std::ptrdiff_t>(fbytes * static_cast<std::size_t>(p)),
                        env_frames[static_cast<std::size_t>(e)].begin() + static_cast<std::ptrdiff_t>(fbytes * static_cast<std::size_t>(p + t)));
        w.acts.assign(env_acts[static_cast<std::size_t>(e)].begin() + p,
                      env_acts[static_cast<std::size_t>(e)].begin() + p + t);
        for (int i = p; i < p + t; ++i) {
          w.advantages.push_back(env_advs[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)]);
          w.value_targets.push_back(
              ewma.normalize(env_targets[static_cast<std::size_t>(e)][static_cast<std::size_t>(i)]));
        }
        windows.push_back(std::move(w));
      }
    }

    const auto wake = wake_update(policy, opt, windows, cfg, rho, prior);
    is.policy_loss = wake.policy_loss;
    is.value_loss = wake.value_loss;
    if (cfg.sleep_cycles > 0) {
      const nn::Model anchor = policy;
      const int passes = std::max(1, cfg.max_sample_reuse / cfg.sleep_cycles);
      for (int c = 0; c < cfg.sleep_cycles; ++c)
        sleep_update(policy, opt, windows, cfg, anchor, passes);
    }
    out.push_back(is);
  }
  return out;
}

}  // namespace vpt::rl
