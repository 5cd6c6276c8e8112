#include "vpt/action_space.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

namespace vpt::action {

ActionSpaceConfig ActionSpaceConfig::toy() {
  ActionSpaceConfig cfg;
  cfg.groups = {
      {"move", {"none", "forward", "back"}},
      {"strafe", {"none", "left", "right"}},
      {"hotbar", {"none", "slot1", "slot2", "slot3"}},
      {"attack", {"none", "attack"}},
      {"use", {"none", "use"}},
  };
  return cfg;
}

ActionSpaceConfig ActionSpaceConfig::full_minecraft() {
  ActionSpaceConfig cfg;
  cfg.groups = {
      {"move", {"none", "forward", "back"}},
      {"strafe", {"none", "left", "right"}},
      {"stance", {"none", "sneak", "sprint"}},
      {"hotbar", {"none", "slot1", "slot2", "slot3", "slot4", "slot5",
                  "slot6", "slot7", "slot8", "slot9"}},
      {"use", {"none", "use"}},
      {"drop", {"none", "drop"}},
      {"attack", {"none", "attack"}},
      {"jump", {"none", "jump"}},
  };
  return cfg;
}

int ActionSpaceConfig::group_index(std::string_view name) const {
  for (std::size_t i = 0; i < groups.size(); ++i)
    if (groups[i].name == name) return static_cast<int>(i);
  return -1;
}

std::string ActionSpaceConfig::serialize() const {
  std::ostringstream os;
  os << "bins_per_axis " << bins_per_axis << "\n";
  os << "max_move " << max_move << "\n";
  os << "foveation_mu " << foveation_mu << "\n";
  for (const auto& g : groups) {
    os << "group " << g.name;
    for (const auto& o : g.options) os << " " << o;
    os << "\n";
  }
  return os.str();
}

ActionSpaceConfig ActionSpaceConfig::parse(std::string_view text) {
  ActionSpaceConfig cfg;
  cfg.groups.clear();
  std::istringstream is{std::string(text)};
  std::string line;
  while (std::getline(is, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "bins_per_axis") ls >> cfg.bins_per_axis;
    else if (key == "max_move") ls >> cfg.max_move;
    else if (key == "foveation_mu") ls >> cfg.foveation_mu;
    else if (key == "group") {
      KeyGroup g;
      ls >> g.name;
      std::string opt;
      while (ls >> opt) g.options.push_back(opt);
      cfg.groups.push_back(std::move(g));
    } else {
      throw std::invalid_argument("unknown action config key: " + key);
    }
  }
  if (cfg.groups.empty()) throw std::invalid_argument("action config has no groups");
  return cfg;
}

FactoredAction null_action(const ActionSpaceConfig& cfg) {
  FactoredAction a;
  a.choices.assign(cfg.groups.size(), 0);
  return a;
}

void validate(const FactoredAction& a, const ActionSpaceConfig& cfg) {
  if (a.choices.size() != cfg.groups.size())
    throw std::invalid_argument("action has wrong group count");
  for (std::size_t i = 0; i < a.choices.size(); ++i) {
    if (a.choices[i] < 0 ||
        a.choices[i] >= static_cast<int>(cfg.groups[i].options.size()))
      throw std::invalid_argument("choice out of range for group " +
                                  cfg.groups[i].name);
  }
  const int c = cfg.bins_per_axis / 2;
  if (a.mouse.x < 0 || a.mouse.x >= cfg.bins_per_axis || a.mouse.y < 0 ||
      a.mouse.y >= cfg.bins_per_axis)
    throw std::invalid_argument("mouse bin out of range");
  if (a.inventory) {
    // Inventory is mutually exclusive with every other key and with camera.
    for (int ch : a.choices)
      if (ch != 0) throw std::invalid_argument("inventory excludes key groups");
    if (a.mouse.x != c || a.mouse.y != c)
      throw std::invalid_argument("inventory excludes mouse movement");
  }
}

namespace {

// Companding curve g(d) = sign(d) * ln(1 + mu|d|/M) / ln(1 + mu), in [-1,1].
double compand(double d, const ActionSpaceConfig& cfg) {
  const double m = std::min(std::abs(d), cfg.max_move);
  const double g = std::log(1.0 + cfg.foveation_mu * m / cfg.max_move) /
                   std::log(1.0 + cfg.foveation_mu);
  return d < 0 ? -g : g;
}

double uncompand(double g, const ActionSpaceConfig& cfg) {
  const double m = (std::pow(1.0 + cfg.foveation_mu, std::abs(g)) - 1.0) *
                   cfg.max_move / cfg.foveation_mu;
  return g < 0 ? -m : m;
}

}  // namespace

int bin_camera(double delta, const ActionSpaceConfig& cfg) {
  if (!std::isfinite(delta)) throw std::invalid_argument("non-finite camera delta");
  const int n = cfg.bins_per_axis;
  if (delta < 0) return n - 1 - bin_camera(-delta, cfg);  // odd symmetry by construction
  const double g = compand(delta, cfg);
  int b = static_cast<int>(std::floor((g + 1.0) / 2.0 * n));
  return std::min(b, n - 1);
}

double unbin_camera(int bin, const ActionSpaceConfig& cfg) {
  const int n = cfg.bins_per_axis;
  if (bin < 0 || bin >= n) throw std::invalid_argument("camera bin out of range");
  if (2 * bin + 1 == n) return 0.0;  // center bin decodes to exactly zero
  const double center = -1.0 + (2.0 * bin + 1.0) / n;
  return uncompand(center, cfg);
}

std::int64_t joint_size(const ActionSpaceConfig& cfg) {
  std::int64_t p = 1;
  for (const auto& g : cfg.groups) p *= static_cast<std::int64_t>(g.options.size());
  return p * 2 + 1;  // x2 camera-moved flag, +1 reserved inventory index
}

std::int64_t inventory_index(const ActionSpaceConfig& cfg) {
  return joint_size(cfg) - 1;
}

HierarchicalAction encode_hierarchical(const FactoredAction& a,
                                       const ActionSpaceConfig& cfg) {
  validate(a, cfg);
  if (a.inventory) return {inventory_index(cfg), std::nullopt};
  const int c = cfg.bins_per_axis / 2;
  const bool camera_on = a.mouse.x != c || a.mouse.y != c;
  std::int64_t base = 0;
  for (std::size_t i = 0; i < cfg.groups.size(); ++i)
    base = base * static_cast<std::int64_t>(cfg.groups[i].options.size()) +
           a.choices[i];
  HierarchicalAction h;
  h.joint_index = base * 2 + (camera_on ? 1 : 0);
  if (camera_on) h.camera_sub = cfg.bins_per_axis * a.mouse.y + a.mouse.x;
  return h;
}

FactoredAction decode_hierarchical(const HierarchicalAction& h,
                                   const ActionSpaceConfig& cfg) {
  const std::int64_t size = joint_size(cfg);
  if (h.joint_index < 0 || h.joint_index >= size)
    throw std::invalid_argument("joint index out of range");
  FactoredAction a = null_action(cfg);
  if (h.joint_index == inventory_index(cfg)) {
    if (h.camera_sub) throw std::invalid_argument("inventory index carries no camera sub-action");
    a.inventory = true;
    return a;
  }
  const bool camera_on = (h.joint_index & 1) != 0;
  if (camera_on != h.camera_sub.has_value())
    throw std::invalid_argument("camera sub-action presence inconsistent with camera flag");
  std::int64_t base = h.joint_index / 2;
  for (std::size_t i = cfg.groups.size(); i-- > 0;) {
    const auto n = static_cast<std::int64_t>(cfg.groups[i].options.size());
    a.choices[i] = static_cast<int>(base % n);
    base /= n;
  }
  const int c = cfg.bins_per_axis / 2;
  if (camera_on) {
    const int sub = *h.camera_sub;
    if (sub < 0 || sub >= cfg.bins_per_axis * cfg.bins_per_axis)
      throw std::invalid_argument("camera sub-action out of range");
    a.mouse.x = sub % cfg.bins_per_axis;
    a.mouse.y = sub / cfg.bins_per_axis;
    if (a.mouse.x == c && a.mouse.y == c)
      throw std::invalid_argument("camera flag on with zero-movement sub-action");
  }
  return a;
}

bool is_null(const FactoredAction& a) {
  if (a.inventory) return false;
  for (int ch : a.choices)
    if (ch != 0) return false;
  return a.mouse.x == 5 && a.mouse.y == 5;
}

std::vector<std::size_t> filter_null_runs(std::span<const FactoredAction> actions,
                                          int min_run) {
  if (min_run < 1) throw std::invalid_argument("min_run must be >= 1");
  std::vector<std::size_t> kept;
  kept.reserve(actions.size());
  std::size_t i = 0;
  while (i < actions.size()) {
    if (!is_null(actions[i])) {
      kept.push_back(i);
      ++i;
      continue;
    }
    std::size_t j = i;
    while (j < actions.size() && is_null(actions[j])) ++j;
    if (j - i < static_cast<std::size_t>(min_run))
      for (std::size_t k = i; k < j; ++k) kept.push_back(k);
    i = j;
  }
  return kept;
}

std::string to_record(const FactoredAction& a, const ActionSpaceConfig& cfg) {
  std::ostringstream os;
  for (std::size_t i = 0; i < cfg.groups.size(); ++i)
    os << cfg.groups[i].name << "=" << a.choices[i] << " ";
  os << "inv=" << (a.inventory ? 1 : 0) << " mx=" << a.mouse.x
     << " my=" << a.mouse.y;
  return os.str();
}

FactoredAction from_record(std::string_view line, const ActionSpaceConfig& cfg) {
  FactoredAction a = null_action(cfg);
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("malformed action record token: " + tok);
    const std::string key = tok.substr(0, eq);
    const int value = std::stoi(tok.substr(eq + 1));
    if (key == "inv") a.inventory = value != 0;
    else if (key == "mx") a.mouse.x = value;
    else if (key == "my") a.mouse.y = value;
    else {
      const int gi = cfg.group_index(key);
      if (gi < 0) throw std::invalid_argument("unknown group in record: " + key);
      a.choices[static_cast<std::size_t>(gi)] = value;
    }
  }
  validate(a, cfg);
  return a;
}

}  // namespace vpt::action
