#include "vpt/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <regex>

#include "vpt/util.hpp"

namespace vpt::pipeline {

std::vector<double> frame_features(const std::uint8_t* frame, int obs) {
  std::vector<double> out(kFeatureDim, 0.0);
  const int cell = std::max(1, obs / 16);
  for (int fy = 0; fy < 16; ++fy)
    for (int fx = 0; fx < 16; ++fx) {
      double sum[3] = {0, 0, 0};
      int n = 0;
      for (int y = fy * cell; y < std::min(obs, (fy + 1) * cell); ++y)
        for (int x = fx * cell; x < std::min(obs, (fx + 1) * cell); ++x) {
          const std::uint8_t* p = frame + (static_cast<std::size_t>(y) * obs + x) * 3;
          for (int c = 0; c < 3; ++c) sum[c] += p[c] / 255.0;
          ++n;
        }
      for (int c = 0; c < 3; ++c)
        out[static_cast<std::size_t>((fy * 16 + fx) * 3 + c)] =
            n ? sum[c] / n : 0.0;
    }
  return out;
}

FrameClassifier::FrameClassifier(int hidden, std::uint64_t seed)
    : hidden_(hidden),
      w1_("fc.w1", kFeatureDim, hidden),
      b1_("fc.b1", 1, hidden),
      w2_("fc.w2", hidden, 3),
      b2_("fc.b2", 1, 3) {
  Rng rng(seed ^ 0x9e3779b97f4a7c15ULL);
  std::normal_distribution<double> nd(0.0, 1.0);
  for (auto& x : w1_.v) x = nd(rng) / std::sqrt(double(kFeatureDim));
  for (auto& x : w2_.v) x = nd(rng) / std::sqrt(double(hidden));
}

void FrameClassifier::train(const std::vector<std::vector<double>>& features,
                            const std::vector<FrameClass>& labels, int epochs,
                            std::uint64_t seed) {
  const int n = static_cast<int>(features.size());
  if (n == 0) return;
  Rng rng(seed);
  std::vector<int> order(static_cast<std::size_t>(n));
  std::iota(order.begin(), order.end(), 0);

  nn::Param* params[] = {&w1_, &b1_, &w2_, &b2_};
  std::vector<std::vector<double>> m, v;
  for (auto* p : params) {
    m.emplace_back(p->size(), 0.0);
    v.emplace_back(p->size(), 0.0);
  }
  const double lr = 3e-3, beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  std::int64_t t = 0;
  const int batch = 64;

  for (int epoch = 0; epoch < epochs; ++epoch) {
    std::shuffle(order.begin(), order.end(), rng);
    for (int start = 0; start < n; start += batch) {
      const int b = std::min(batch, n - start);
      std::vector<double> x(static_cast<std::size_t>(b) * kFeatureDim);
      std::vector<int> y(static_cast<std::size_t>(b));
      for (int i = 0; i < b; ++i) {
        const int idx = order[static_cast<std::size_t>(start + i)];
        std::copy(features[static_cast<std::size_t>(idx)].begin(),
                  features[static_cast<std::size_t>(idx)].end(),
                  x.begin() + static_cast<std::size_t>(i) * kFeatureDim);
        y[static_cast<std::size_t>(i)] =
            static_cast<int>(labels[static_cast<std::size_t>(idx)]);
      }
      nn::Graph g;
      auto* xi = g.input(b, kFeatureDim, x.data());
      auto* h = g.relu(g.linear(xi, g.leaf(w1_), g.leaf(b1_)));
      auto* logits = g.linear(h, g.leaf(w2_), g.leaf(b2_));
      auto* loss = g.scale(g.softmax_xent(logits, y), 1.0 / b);
      g.backward(loss);

      ++t;
      for (std::size_t pi = 0; pi < 4; ++pi) {
        auto& p = *params[pi];
        for (std::size_t j = 0; j < p.size(); ++j) {
          m[pi][j] = beta1 * m[pi][j] + (1 - beta1) * p.g[j];
          v[pi][j] = beta2 * v[pi][j] + (1 - beta2) * p.g[j] * p.g[j];
          const double mh = m[pi][j] / (1 - std::pow(beta1, double(t)));
          const double vh = v[pi][j] / (1 - std::pow(beta2, double(t)));
          p.v[j] -= lr * mh / (std::sqrt(vh) + eps);
        }
        p.zero_grad();
      }
    }
  }
}

std::vector<double> FrameClassifier::logits(
    const std::vector<double>& features) const {
  std::vector<double> h(static_cast<std::size_t>(hidden_));
  for (int j = 0; j < hidden_; ++j) {
    double s = b1_.v[static_cast<std::size_t>(j)];
    for (int i = 0; i < kFeatureDim; ++i)
      s += features[static_cast<std::size_t>(i)] *
           w1_.v[static_cast<std::size_t>(i) * hidden_ + j];
    h[static_cast<std::size_t>(j)] = std::max(0.0, s);
  }
  std::vector<double> out(3);
  for (int j = 0; j < 3; ++j) {
    double s = b2_.v[static_cast<std::size_t>(j)];
    for (int i = 0; i < hidden_; ++i)
      s += h[static_cast<std::size_t>(i)] * w2_.v[static_cast<std::size_t>(i) * 3 + j];
    out[static_cast<std::size_t>(j)] = s;
  }
  return out;
}

FrameClass FrameClassifier::predict(const std::vector<double>& features) const {
  const auto l = logits(features);
  int best = 0;
  for (int j = 1; j < 3; ++j)
    if (l[static_cast<std::size_t>(j)] > l[static_cast<std::size_t>(best)]) best = j;
  return static_cast<FrameClass>(best);
}

double FrameClassifier::accuracy(
    const std::vector<std::vector<double>>& features,
    const std::vector<FrameClass>& labels) const {
  if (features.empty()) return 0.0;
  int hits = 0;
  for (std::size_t i = 0; i < features.size(); ++i)
    if (predict(features[i]) == labels[i]) ++hits;
  return double(hits) / double(features.size());
}

void FrameClassifier::save(const std::filesystem::path& p) const {
  std::string out = "VPTFC1\n";
  put_le<std::int32_t>(out, hidden_);
  const nn::Param* params[] = {&w1_, &b1_, &w2_, &b2_};
  for (const auto* pr : params)
    for (double x : pr->v) put_f64(out, x);
  write_file(p, out);
}

FrameClassifier FrameClassifier::load(const std::filesystem::path& p) {
  const std::string data = read_file(p);
  if (data.size() < 11 || data.compare(0, 7, "VPTFC1\n") != 0)
    throw IoError("bad classifier file: " + p.string());
  std::size_t off = 7;
  const int hidden = get_le<std::int32_t>(data.data() + off);
  off += 4;
  FrameClassifier clf(hidden, 0);
  nn::Param* params[] = {&clf.w1_, &clf.b1_, &clf.w2_, &clf.b2_};
  for (auto* pr : params)
    for (double& x : pr->v) {
      x = get_f64(data.data() + off);
      off += 8;
    }
  return clf;
}

std::vector<FrameClass> classify_frames(const FrameClassifier& clf,
                                        const std::uint8_t* frames, int n,
                                        int obs, int stride) {
  std::vector<FrameClass> out(static_cast<std::size_t>(n), FrameClass::Clean);
  const std::size_t fstride = static_cast<std::size_t>(obs) * obs * 3;
  for (int s = 0; s < n; s += stride) {
    const auto cls = clf.predict(frame_features(frames + fstride * s, obs));
    for (int t = s; t < std::min(n, s + stride); ++t)
      out[static_cast<std::size_t>(t)] = cls;
  }
  return out;
}

std::vector<int> median_filter_binary(const std::vector<int>& xs, int k) {
  const int n = static_cast<int>(xs.size());
  std::vector<int> out(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) {
    const int lo = std::max(0, i - k / 2), hi = std::min(n - 1, i + k / 2);
    int ones = 0;
    for (int j = lo; j <= hi; ++j) ones += xs[static_cast<std::size_t>(j)];
    const int len = hi - lo + 1;
    out[static_cast<std::size_t>(i)] =
        2 * ones > len ? 1 : (2 * ones == len ? xs[static_cast<std::size_t>(i)] : 0);
  }
  return out;
}

std::vector<std::pair<int, int>> extract_clean_segments(
    const std::vector<FrameClass>& labels, const SegmentConfig& cfg) {
  const int n = static_cast<int>(labels.size());
  if (n == 0) return {};
  std::vector<int> clean(static_cast<std::size_t>(n));
  int total = 0;
  for (int i = 0; i < n; ++i) {
    clean[static_cast<std::size_t>(i)] = labels[static_cast<std::size_t>(i)] == FrameClass::Clean;
    total += clean[static_cast<std::size_t>(i)];
  }
  if (double(total) < cfg.min_clean_fraction * n) return {};
  const auto smooth = median_filter_binary(clean, cfg.median_k);
  std::vector<std::pair<int, int>> segs;
  int start = -1;
  for (int i = 0; i <= n; ++i) {
    const bool on = i < n && smooth[static_cast<std::size_t>(i)];
    if (on && start < 0) start = i;
    if (!on && start >= 0) {
      if (i - start >= cfg.min_len) segs.emplace_back(start, i);
      start = -1;
    }
  }
  return segs;
}

bool match_earlygame_metadata(const std::vector<std::string>& tags) {
  static const std::regex patterns[] = {
      std::regex(R"(\bepisode 1\b)", std::regex::icase),
      std::regex(R"(\bep\.? ?1\b)", std::regex::icase),
      std::regex(R"(\bday 1\b)", std::regex::icase),
      std::regex(R"(fresh world)", std::regex::icase),
      std::regex(R"(new world)", std::regex::icase),
      std::regex(R"(from scratch)", std::regex::icase),
      std::regex(R"(getting started)", std::regex::icase),
      std::regex(R"(first night)", std::regex::icase),
      std::regex(R"(starting out)", std::regex::icase),
  };
  for (const auto& tag : tags)
    for (const auto& re : patterns)
      if (std::regex_search(tag, re)) return true;
  return false;
}

std::vector<std::vector<std::size_t>> window_indices(
    std::span<const action::FactoredAction> actions, int begin, int end,
    const WindowingConfig& cfg) {
  std::vector<std::size_t> kept;
  if (cfg.filter_nulls) {
    const auto rel = action::filter_null_runs(
        actions.subspan(static_cast<std::size_t>(begin),
                        static_cast<std::size_t>(end - begin)),
        cfg.min_null_run);
    kept.reserve(rel.size());
    for (auto r : rel) kept.push_back(r + static_cast<std::size_t>(begin));
  } else {
    for (int i = begin; i < end; ++i) kept.push_back(static_cast<std::size_t>(i));
  }
  std::vector<std::vector<std::size_t>> windows;
  const int m = static_cast<int>(kept.size());
  for (int s = 0; s + cfg.context <= m; s += cfg.stride)
    windows.emplace_back(kept.begin() + s, kept.begin() + s + cfg.context);
  return windows;
}

std::vector<std::vector<std::size_t>> window_indices_unlabeled(
    int begin, int end, const WindowingConfig& cfg) {
  std::vector<std::vector<std::size_t>> windows;
  for (int s = begin; s + cfg.context <= end; s += cfg.stride) {
    std::vector<std::size_t> w(static_cast<std::size_t>(cfg.context));
    std::iota(w.begin(), w.end(), static_cast<std::size_t>(s));
    windows.push_back(std::move(w));
  }
  return windows;
}

// ---- shard files ----

namespace {
constexpr char kShardMagic[] = "VPTSHRD1";
constexpr char kIndexMagic[] = "VPTSIDX1";
}  // namespace

ShardWriter::ShardWriter(std::filesystem::path file, int context, int obs,
                         const action::ActionSpaceConfig& acfg, ActionKind kind)
    : file_(std::move(file)), acfg_(acfg), context_(context), obs_(obs),
      kind_(kind) {
  buf_.assign(kShardMagic, 8);
  put_le<std::uint32_t>(buf_, 1);  // version
  put_le<std::uint32_t>(buf_, static_cast<std::uint32_t>(context_));
  put_le<std::uint32_t>(buf_, static_cast<std::uint32_t>(obs_));
  buf_.push_back(static_cast<char>(kind_));
  put_le<std::uint64_t>(buf_, acfg_.hash());
  write_file(file_, buf_);
  buf_.clear();
}

ShardWriter::~ShardWriter() {
  if (!finished_) finish();
}

void ShardWriter::add(const std::uint8_t* frames,
                      std::span<const action::FactoredAction> actions) {
  if (kind_ != ActionKind::None &&
      static_cast<int>(actions.size()) != context_)
    throw IoError("shard window has wrong action count");
  buf_.append(reinterpret_cast<const char*>(frames),
              static_cast<std::size_t>(context_) * obs_ * obs_ * 3);
  if (kind_ == ActionKind::Factored) {
    for (const auto& a : actions) {
      for (int c : a.choices) buf_.push_back(static_cast<char>(c));
      buf_.push_back(static_cast<char>(a.inventory ? 1 : 0));
      buf_.push_back(static_cast<char>(a.mouse.x));
      buf_.push_back(static_cast<char>(a.mouse.y));
    }
  } else if (kind_ == ActionKind::Hierarchical) {
    for (const auto& a : actions) {
      const auto h = action::encode_hierarchical(a, acfg_);
      put_le<std::int64_t>(buf_, h.joint_index);
      put_le<std::int32_t>(buf_, h.camera_sub.value_or(-1));
    }
  }
  ++count_;
  if (buf_.size() > (8u << 20)) {
    append_file(file_, buf_);
    buf_.clear();
  }
}

void ShardWriter::finish() {
  if (finished_) return;
  finished_ = true;
  if (!buf_.empty()) append_file(file_, buf_);
  buf_.clear();
  // Records are fixed-size; the index stores explicit offsets anyway so the
  // format can evolve without breaking readers.
  const std::size_t hdr = 8 + 4 + 4 + 4 + 1 + 8;
  std::size_t rec = static_cast<std::size_t>(context_) * obs_ * obs_ * 3;
  if (kind_ == ActionKind::Factored)
    rec += static_cast<std::size_t>(context_) * (acfg_.groups.size() + 3);
  else if (kind_ == ActionKind::Hierarchical)
    rec += static_cast<std::size_t>(context_) * 12;
  std::string idx(kIndexMagic, 8);
  put_le<std::uint64_t>(idx, static_cast<std::uint64_t>(count_));
  for (int i = 0; i < count_; ++i)
    put_le<std::uint64_t>(idx, hdr + static_cast<std::uint64_t>(i) * rec);
  write_file(file_.string() + ".idx", idx);
}

ShardReader::ShardReader(const std::filesystem::path& file,
                         const action::ActionSpaceConfig& acfg)
    : data_(read_file(file)), acfg_(acfg) {
  if (data_.size() < 29 || data_.compare(0, 8, kShardMagic) != 0)
    throw IoError("bad shard file: " + file.string());
  std::size_t off = 8;
  const auto version = get_le<std::uint32_t>(data_.data() + off);
  off += 4;
  if (version != 1) throw IoError("unsupported shard version");
  context_ = static_cast<int>(get_le<std::uint32_t>(data_.data() + off));
  off += 4;
  obs_ = static_cast<int>(get_le<std::uint32_t>(data_.data() + off));
  off += 4;
  kind_ = static_cast<ActionKind>(data_[off]);
  off += 1;
  const auto hash = get_le<std::uint64_t>(data_.data() + off);
  if (hash != acfg_.hash())
    throw IoError("shard was built with a different action space");
  const std::string idx = read_file(file.string() + ".idx");
  if (idx.size() < 16 || idx.compare(0, 8, kIndexMagic) != 0)
    throw IoError("bad shard index: " + file.string());
  const auto count = get_le<std::uint64_t>(idx.data() + 8);
  offsets_.resize(count);
  for (std::uint64_t i = 0; i < count; ++i)
    offsets_[i] = get_le<std::uint64_t>(idx.data() + 16 + 8 * i);
}

Window ShardReader::get(int i) const {
  Window w;
  std::size_t off = offsets_[static_cast<std::size_t>(i)];
  const std::size_t fbytes = static_cast<std::size_t>(context_) * obs_ * obs_ * 3;
  w.frames.assign(data_.begin() + static_cast<std::ptrdiff_t>(off),
                  data_.begin() + static_cast<std::ptrdiff_t>(off + fbytes));
  off += fbytes;
  if (kind_ == ActionKind::Factored) {
    for (int t = 0; t < context_; ++t) {
      action::FactoredAction a;
      a.choices.resize(acfg_.groups.size());
      for (auto& c : a.choices) c = static_cast<unsigned char>(data_[off++]);
      a.inventory = data_[off++] != 0;
      a.mouse.x = static_cast<unsigned char>(data_[off++]);
      a.mouse.y = static_cast<unsigned char>(data_[off++]);
      w.factored.push_back(std::move(a));
    }
  } else if (kind_ == ActionKind::Hierarchical) {
    for (int t = 0; t < context_; ++t) {
      action::HierarchicalAction h;
      h.joint_index = get_le<std::int64_t>(data_.data() + off);
      off += 8;
      const auto cam = get_le<std::int32_t>(data_.data() + off);
      off += 4;
      if (cam >= 0) h.camera_sub = cam;
      w.hierarchical.push_back(h);
    }
  }
  return w;
}

}  // namespace vpt::pipeline
