#include "vpt/nn/model.hpp"

#include <cmath>
#include <sstream>

#include "vpt/util.hpp"

namespace vpt::nn {

int ModelSpec::width() const {
  int w = static_cast<int>(std::lround(d_model * width_mult));
  w = std::max(heads, w - w % heads);
  return w;
}

std::string ModelSpec::serialize() const {
  std::ostringstream os;
  os << "obs_size " << obs_size << "\npatch " << patch << "\nd_model "
     << d_model << "\nlayers " << layers << "\nheads " << heads << "\ncontext "
     << context << "\ncausal " << (causal ? 1 : 0) << "\ntemporal_conv "
     << (temporal_conv ? 1 : 0) << "\nhead_kind "
     << (head_kind == HeadKind::Factored ? "factored" : "hierarchical")
     << "\nvalue_heads " << (value_heads ? 1 : 0) << "\nwidth_mult "
     << width_mult << "\n";
  return os.str();
}

ModelSpec ModelSpec::parse(std::string_view text) {
  ModelSpec s;
  std::istringstream is{std::string(text)};
  std::string key;
  while (is >> key) {
    if (key == "obs_size") is >> s.obs_size;
    else if (key == "patch") is >> s.patch;
    else if (key == "d_model") is >> s.d_model;
    else if (key == "layers") is >> s.layers;
    else if (key == "heads") is >> s.heads;
    else if (key == "context") is >> s.context;
    else if (key == "causal") { int v; is >> v; s.causal = v != 0; }
    else if (key == "temporal_conv") { int v; is >> v; s.temporal_conv = v != 0; }
    else if (key == "head_kind") {
      std::string v; is >> v;
      s.head_kind = v == "factored" ? HeadKind::Factored : HeadKind::Hierarchical;
    }
    else if (key == "value_heads") { int v; is >> v; s.value_heads = v != 0; }
    else if (key == "width_mult") is >> s.width_mult;
    else throw std::invalid_argument("unknown model spec key: " + key);
  }
  return s;
}

std::uint64_t ModelSpec::hash() const { return fnv1a64(serialize()); }

std::vector<double> patchify(const std::uint8_t* frames, int t, int obs,
                             int patch) {
  const int k = obs / patch;          // patches per side
  const int pdim = patch * patch * 3;
  std::vector<double> out(static_cast<std::size_t>(t) * k * k * pdim);
  std::size_t row = 0;
  for (int f = 0; f < t; ++f) {
    const std::uint8_t* img = frames + static_cast<std::size_t>(f) * obs * obs * 3;
    for (int py = 0; py < k; ++py)
      for (int px = 0; px < k; ++px) {
        double* dst = &out[row * pdim];
        ++row;
        int idx = 0;
        for (int y = 0; y < patch; ++y)
          for (int x = 0; x < patch; ++x) {
            const std::uint8_t* p =
                img + (static_cast<std::size_t>(py * patch + y) * obs +
                       px * patch + x) * 3;
            dst[idx++] = p[0] / 255.0;
            dst[idx++] = p[1] / 255.0;
            dst[idx++] = p[2] / 255.0;
          }
      }
  }
  return out;
}

Model::Model(ModelSpec spec, action::ActionSpaceConfig acfg, std::uint64_t seed)
    : spec_(spec), acfg_(std::move(acfg)) {
  build_params(seed);
}

Param& Model::add(const std::string& name, int r, int c) {
  index_[name] = params_.size();
  params_.emplace_back(name, r, c);
  return params_.back();
}

Param& Model::param(std::string_view name) {
  auto it = index_.find(std::string(name));
  if (it == index_.end()) throw std::invalid_argument("no such param: " + std::string(name));
  return params_[it->second];
}

void Model::build_params(std::uint64_t seed) {
  const int d = spec_.width();
  const int pdim = spec_.patch * spec_.patch * 3;
  add("embed.w", pdim, d);
  add("embed.b", 1, d);
  add("enc.w1", d, d);
  add("enc.b1", 1, d);
  add("pos", spec_.context, d);
  if (spec_.temporal_conv) {
    for (int k = 0; k < 5; ++k)
      add("tconv.w" + std::to_string(k), d, d);
    add("tconv.b", 1, d);
  }
  for (int l = 0; l < spec_.layers; ++l) {
    const std::string p = "blk" + std::to_string(l) + ".";
    add(p + "ln1.g", 1, d);
    add(p + "ln1.b", 1, d);
    add(p + "attn.qkv", d, 3 * d);
    add(p + "attn.out", d, d);
    add(p + "ln2.g", 1, d);
    add(p + "ln2.b", 1, d);
    add(p + "mlp.w1", d, 4 * d);
    add(p + "mlp.b1", 1, 4 * d);
    add(p + "mlp.w2", 4 * d, d);
    add(p + "mlp.b2", 1, d);
  }
  add("lnf.g", 1, d);
  add("lnf.b", 1, d);
  if (spec_.head_kind == HeadKind::Factored) {
    for (const auto& grp : acfg_.groups)
      add("head." + grp.name + ".w", d, static_cast<int>(grp.options.size()));
    add("head.inventory.w", d, 2);
    add("head.cam_x.w", d, acfg_.bins_per_axis);
    add("head.cam_y.w", d, acfg_.bins_per_axis);
  } else {
    add("head.joint.w", d, static_cast<int>(action::joint_size(acfg_)));
    add("head.camera_sub.w", d, acfg_.bins_per_axis * acfg_.bins_per_axis);
  }
  if (spec_.value_heads) {
    add("head.value.w", d, 1);
    add("head.value.b", 1, 1);
    add("head.aux_value.w", d, 1);
    add("head.aux_value.b", 1, 1);
  }

  Rng rng(seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  for (auto& p : params_) {
    if (p.name.ends_with(".b") || p.name.ends_with(".b1") ||
        p.name.ends_with(".b2") || p.name == "pos") {
      if (p.name == "pos")
        for (auto& x : p.v) x = 0.01 * normal(rng);
      continue;  // biases start at zero
    }
    if (p.name.ends_with("ln1.g") || p.name.ends_with("ln2.g") ||
        p.name == "lnf.g") {
      std::fill(p.v.begin(), p.v.end(), 1.0);
      continue;
    }
    if (p.name.ends_with("ln1.b") || p.name.ends_with("ln2.b") ||
        p.name == "lnf.b")
      continue;
    const double scale = 1.0 / std::sqrt(static_cast<double>(p.rows));
    for (auto& x : p.v) x = scale * normal(rng);
  }
}

void Model::zero_grads() {
  for (auto& p : params_) p.zero_grad();
}

void Model::zero_value_head() {
  if (!spec_.value_heads) throw std::logic_error("model has no value heads");
  auto& w = param("head.value.w");
  std::fill(w.v.begin(), w.v.end(), 0.0);
  auto& b = param("head.value.b");
  std::fill(b.v.begin(), b.v.end(), 0.0);
}

HeadLogits Model::forward(Graph& g, const std::uint8_t* frames, int t) const {
  if (t < 1 || t > spec_.context)
    throw std::invalid_argument("window length out of range");
  auto& self = *const_cast<Model*>(this);
  const int d = spec_.width();
  const int k = (spec_.obs_size / spec_.patch) * (spec_.obs_size / spec_.patch);
  const int pdim = spec_.patch * spec_.patch * 3;

  auto patches = patchify(frames, t, spec_.obs_size, spec_.patch);
  Node* x = g.input(t * k, pdim, patches.data());
  x = g.relu(g.linear(x, g.leaf(self.param("embed.w")), g.leaf(self.param("embed.b"))));
  x = g.mean_pool_groups(x, k);  // [t, d]
  x = g.tanh_(g.linear(x, g.leaf(self.param("enc.w1")), g.leaf(self.param("enc.b1"))));
  x = g.add(x, g.slice_rows(g.leaf(self.param("pos")), 0, t));

  if (spec_.temporal_conv) {
    std::vector<Node*> taps;
    for (int i = 0; i < 5; ++i)
      taps.push_back(g.leaf(self.param("tconv.w" + std::to_string(i))));
    const std::vector<int> offsets = spec_.causal
        ? std::vector<int>{-4, -3, -2, -1, 0}
        : std::vector<int>{-2, -1, 0, 1, 2};
    x = g.add(x, g.temporal_conv(x, taps, offsets, g.leaf(self.param("tconv.b"))));
  }

  for (int l = 0; l < spec_.layers; ++l) {
    const std::string p = "blk" + std::to_string(l) + ".";
    Node* h = g.layer_norm(x, g.leaf(self.param(p + "ln1.g")),
                           g.leaf(self.param(p + "ln1.b")));
    h = g.attention(h, g.leaf(self.param(p + "attn.qkv")),
                    g.leaf(self.param(p + "attn.out")), spec_.heads,
                    spec_.causal);
    x = g.add(x, h);
    Node* m = g.layer_norm(x, g.leaf(self.param(p + "ln2.g")),
                           g.leaf(self.param(p + "ln2.b")));
    m = g.relu(g.linear(m, g.leaf(self.param(p + "mlp.w1")),
                        g.leaf(self.param(p + "mlp.b1"))));
    m = g.linear(m, g.leaf(self.param(p + "mlp.w2")),
                 g.leaf(self.param(p + "mlp.b2")));
    x = g.add(x, m);
  }
  Node* trunk = g.layer_norm(x, g.leaf(self.param("lnf.g")),
                             g.leaf(self.param("lnf.b")));

  HeadLogits out;
  if (spec_.head_kind == HeadKind::Factored) {
    for (const auto& grp : acfg_.groups)
      out.groups.push_back(
          g.matmul(trunk, g.leaf(self.param("head." + grp.name + ".w"))));
    out.inventory = g.matmul(trunk, g.leaf(self.param("head.inventory.w")));
    out.cam_x = g.matmul(trunk, g.leaf(self.param("head.cam_x.w")));
    out.cam_y = g.matmul(trunk, g.leaf(self.param("head.cam_y.w")));
  } else {
    out.joint = g.matmul(trunk, g.leaf(self.param("head.joint.w")));
    out.camera_sub = g.matmul(trunk, g.leaf(self.param("head.camera_sub.w")));
  }
  if (spec_.value_heads) {
    out.value = g.linear(trunk, g.leaf(self.param("head.value.w")),
                         g.leaf(self.param("head.value.b")));
    out.aux_value = g.linear(trunk, g.leaf(self.param("head.aux_value.w")),
                             g.leaf(self.param("head.aux_value.b")));
  }
  return out;
}

Node* Model::nll_factored(Graph& g, const HeadLogits& h,
                          const std::vector<action::FactoredAction>& labels,
                          NllBreakdown* breakdown) const {
  const int n = static_cast<int>(labels.size());
  std::vector<int> lab(n);
  Node* total = nullptr;
  auto accumulate = [&](const std::string& name, Node* logits) {
    Node* l = g.softmax_xent(logits, lab);
    if (breakdown) breakdown->per_head[name] = l->scalar();
    total = total ? g.add(total, l) : l;
  };
  for (std::size_t gi = 0; gi < acfg_.groups.size(); ++gi) {
    for (int i = 0; i < n; ++i) lab[i] = labels[i].choices[gi];
    accumulate(acfg_.groups[gi].name, h.groups[gi]);
  }
  for (int i = 0; i < n; ++i) lab[i] = labels[i].inventory ? 1 : 0;
  accumulate("inventory", h.inventory);
  for (int i = 0; i < n; ++i) lab[i] = labels[i].mouse.x;
  accumulate("cam_x", h.cam_x);
  for (int i = 0; i < n; ++i) lab[i] = labels[i].mouse.y;
  accumulate("cam_y", h.cam_y);
  if (breakdown) breakdown->total = total->scalar();
  return total;
}

Node* Model::nll_hierarchical(Graph& g, const HeadLogits& h,
                              const std::vector<action::HierarchicalAction>& labels,
                              NllBreakdown* breakdown) const {
  const int n = static_cast<int>(labels.size());
  std::vector<int> joint(n), sub(n);
  for (int i = 0; i < n; ++i) {
    joint[i] = static_cast<int>(labels[i].joint_index);
    sub[i] = labels[i].camera_sub ? *labels[i].camera_sub : -1;  // masked
  }
  Node* lj = g.softmax_xent(h.joint, joint);
  Node* ls = g.softmax_xent(h.camera_sub, sub);
  if (breakdown) {
    breakdown->per_head["joint"] = lj->scalar();
    breakdown->per_head["camera_sub"] = ls->scalar();
  }
  Node* total = g.add(lj, ls);
  if (breakdown) breakdown->total = total->scalar();
  return total;
}

void Model::save(const std::filesystem::path& p) const {
  std::string out;
  out += "VPTCKPT1";
  const std::string spec_text = spec_.serialize();
  const std::string acfg_text = acfg_.serialize();
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(spec_text.size()));
  out += spec_text;
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(acfg_text.size()));
  out += acfg_text;
  put_le<std::int64_t>(out, step_count);
  put_le<std::uint32_t>(out, static_cast<std::uint32_t>(params_.size()));
  for (const auto& pr : params_) {
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(pr.name.size()));
    out += pr.name;
    put_le<std::int32_t>(out, pr.rows);
    put_le<std::int32_t>(out, pr.cols);
    for (double x : pr.v) put_f64(out, x);
  }
  write_file(p, out);
}

Model Model::load(const std::filesystem::path& p) {
  const std::string in = read_file(p);
  std::size_t pos = 0;
  auto need = [&](std::size_t n) {
    if (pos + n > in.size()) throw IoError("truncated checkpoint " + p.string());
  };
  need(8);
  if (in.substr(0, 8) != "VPTCKPT1") throw IoError("bad checkpoint magic");
  pos = 8;
  need(4);
  const auto spec_len = get_le<std::uint32_t>(&in[pos]); pos += 4;
  need(spec_len);
  ModelSpec spec = ModelSpec::parse(in.substr(pos, spec_len)); pos += spec_len;
  need(4);
  const auto acfg_len = get_le<std::uint32_t>(&in[pos]); pos += 4;
  need(acfg_len);
  auto acfg = action::ActionSpaceConfig::parse(in.substr(pos, acfg_len));
  pos += acfg_len;
  need(12);
  Model m(spec, acfg, 0);
  m.step_count = get_le<std::int64_t>(&in[pos]); pos += 8;
  const auto count = get_le<std::uint32_t>(&in[pos]); pos += 4;
  if (count != m.params_.size()) throw IoError("checkpoint param count mismatch");
  for (auto& pr : m.params_) {
    need(4);
    const auto name_len = get_le<std::uint32_t>(&in[pos]); pos += 4;
    need(name_len);
    if (in.substr(pos, name_len) != pr.name)
      throw IoError("checkpoint param order mismatch at " + pr.name);
    pos += name_len;
    need(8);
    const auto r = get_le<std::int32_t>(&in[pos]); pos += 4;
    const auto c = get_le<std::int32_t>(&in[pos]); pos += 4;
    if (r != pr.rows || c != pr.cols) throw IoError("checkpoint shape mismatch");
    need(pr.size() * 8);
    for (auto& x : pr.v) {
      x = get_f64(&in[pos]);
      pos += 8;
    }
  }
  return m;
}

std::uint64_t Model::param_hash() const {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : params_) {
    h = fnv1a64(p.name.data(), p.name.size(), h);
    h = fnv1a64(p.v.data(), p.v.size() * sizeof(double), h);
  }
  return h;
}

}  // namespace vpt::nn
