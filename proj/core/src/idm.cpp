#include "vpt/idm.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "vpt/util.hpp"

namespace vpt::idm {

namespace {

int argmax_row(const nn::Node* logits, int row) {
  int best = 0;
  const std::size_t base = static_cast<std::size_t>(row) * logits->cols;
  for (int j = 1; j < logits->cols; ++j)
    if (logits->v[base + static_cast<std::size_t>(j)] > logits->v[base + static_cast<std::size_t>(best)])
      best = j;
  return best;
}

}  // namespace

nn::Model train_idm(const pipeline::ShardReader& shard,
                    const IdmTrainConfig& cfg, std::uint64_t seed,
                    std::vector<TrainLogEntry>* log) {
  if (shard.kind() != pipeline::ActionKind::Factored)
    throw nn::TrainingError("inverse-dynamics training needs factored labels");
  nn::Model model(cfg.spec, shard.acfg(), seed);
  nn::Adam opt(cfg.adam, model);

  Rng rng(seed ^ 0x853c49e6748fea9bULL);
  std::vector<int> order(static_cast<std::size_t>(shard.size()));
  std::iota(order.begin(), order.end(), 0);

  const int t = shard.context();
  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    double acc_loss = 0;
    int acc_n = 0;
    for (int wi = 0; wi < shard.size(); ++wi) {
      const auto w = shard.get(order[static_cast<std::size_t>(wi)]);
      nn::Graph g;
      const auto heads = model.forward(g, w.frames.data(), t);
      auto* nll = model.nll_factored(g, heads, w.factored);
      auto* loss = g.scale(nll, 1.0 / (cfg.batch_windows * t));
      g.backward(loss);
      acc_loss += nll->scalar() / t;
      ++acc_n;
      if (acc_n == cfg.batch_windows || wi + 1 == shard.size()) {
        if (log)
          log->push_back({opt.step_count(), acc_loss / acc_n, opt.current_lr()});
        opt.step(model);
        acc_loss = 0;
        acc_n = 0;
      }
    }
  }
  return model;
}

std::vector<action::FactoredAction> predict_window(const nn::Model& model,
                                                   const std::uint8_t* frames,
                                                   int t) {
  nn::Graph g;
  const auto heads = model.forward(g, frames, t);
  const auto& acfg = model.action_config();
  std::vector<action::FactoredAction> out;
  out.reserve(static_cast<std::size_t>(t));
  for (int r = 0; r < t; ++r) {
    action::FactoredAction a;
    a.choices.resize(acfg.groups.size());
    for (std::size_t gi = 0; gi < acfg.groups.size(); ++gi)
      a.choices[gi] = argmax_row(heads.groups[gi], r);
    a.inventory = argmax_row(heads.inventory, r) == 1;
    a.mouse.x = argmax_row(heads.cam_x, r);
    a.mouse.y = argmax_row(heads.cam_y, r);
    if (a.inventory) {  // the two are exclusive by construction
      a.mouse.x = 5;
      a.mouse.y = 5;
    }
    out.push_back(std::move(a));
  }
  return out;
}

IdmEval evaluate_idm(const nn::Model& model,
                     const pipeline::ShardReader& labeled_shard) {
  const auto& acfg = model.action_config();
  IdmEval eval;
  std::map<std::string, std::pair<int, int>> hits;  // name -> (correct, total)
  double sx = 0, sy = 0;  // truth sums for variance
  std::vector<double> tx, ty, px, py;

  const int t = labeled_shard.context();
  for (int i = 0; i < labeled_shard.size(); ++i) {
    const auto w = labeled_shard.get(i);
    const auto pred = predict_window(model, w.frames.data(), t);
    for (int r = 0; r < t; ++r) {
      const auto& p = pred[static_cast<std::size_t>(r)];
      const auto& truth = w.factored[static_cast<std::size_t>(r)];
      for (std::size_t gi = 0; gi < acfg.groups.size(); ++gi) {
        auto& h = hits[acfg.groups[gi].name];
        h.first += p.choices[gi] == truth.choices[gi];
        ++h.second;
      }
      auto& hi = hits["inventory"];
      hi.first += p.inventory == truth.inventory;
      ++hi.second;
      tx.push_back(action::unbin_camera(truth.mouse.x, acfg));
      ty.push_back(action::unbin_camera(truth.mouse.y, acfg));
      px.push_back(action::unbin_camera(p.mouse.x, acfg));
      py.push_back(action::unbin_camera(p.mouse.y, acfg));
      sx += tx.back();
      sy += ty.back();
    }
    eval.frames += t;
  }

  double mean_acc = 0;
  for (const auto& [name, h] : hits) {
    const double a = h.second ? double(h.first) / h.second : 0.0;
    eval.keypress_accuracy[name] = a;
    mean_acc += a;
  }
  eval.keypress_accuracy_mean = hits.empty() ? 0.0 : mean_acc / hits.size();

  auto r2 = [](const std::vector<double>& truth, const std::vector<double>& pred,
               double sum) {
    if (truth.empty()) return 0.0;
    const double mean = sum / truth.size();
    double ss_res = 0, ss_tot = 0;
    for (std::size_t i = 0; i < truth.size(); ++i) {
      ss_res += (truth[i] - pred[i]) * (truth[i] - pred[i]);
      ss_tot += (truth[i] - mean) * (truth[i] - mean);
    }
    if (ss_tot < 1e-12) return ss_res < 1e-12 ? 1.0 : 0.0;
    return 1.0 - ss_res / ss_tot;
  };
  eval.r2_cam_x = r2(tx, px, sx);
  eval.r2_cam_y = r2(ty, py, sy);
  return eval;
}

std::pair<int, int> window_claim(int p, int n, int context, int claimed) {
  const int t = context;
  const bool last = p + t >= n;
  int lo;
  if (p == 0 && claimed == 0) lo = 0;            // first window keeps its head
  else if (last) lo = claimed;                    // final window fills the gap
  else lo = std::max(claimed, p + t / 4);
  const int hi = last ? n : p + 3 * t / 4;
  return {lo, hi};
}

std::vector<action::FactoredAction> pseudo_label(const nn::Model& model,
                                                 const std::uint8_t* frames,
                                                 int n, int obs) {
  const int t = model.spec().context;
  const std::size_t fstride = static_cast<std::size_t>(obs) * obs * 3;
  std::vector<action::FactoredAction> out(static_cast<std::size_t>(n));
  if (n <= t) {
    const auto pred = predict_window(model, frames, n);
    for (int i = 0; i < n; ++i) out[static_cast<std::size_t>(i)] = pred[static_cast<std::size_t>(i)];
    return out;
  }
  // 50% overlapping window positions, with the last clamped to end at n.
  std::vector<int> positions;
  for (int p = 0; p + t <= n; p += t / 2) positions.push_back(p);
  if (positions.back() != n - t) positions.push_back(n - t);
  int claimed = 0;
  for (const int pos : positions) {
    const auto [lo, hi] = window_claim(pos, n, t, claimed);
    if (lo >= hi) continue;
    const auto pred = predict_window(model, frames + fstride * pos, t);
    for (int i = lo; i < hi; ++i)
      out[static_cast<std::size_t>(i)] = pred[static_cast<std::size_t>(i - pos)];
    claimed = hi;
  }
  return out;
}

}  // namespace vpt::idm
