#include "vpt/demonstrator.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <random>
#include <sstream>

#include "vpt/util.hpp"

namespace vpt::demo {

namespace {
constexpr const char* kTaskNames[] = {"freeplay", "treechop", "house-build",
                                      "earlygame", "obtain-diamond-pickaxe"};
}

const char* task_name(Task t) { return kTaskNames[static_cast<int>(t)]; }

std::optional<Task> task_from_name(std::string_view s) {
  for (int i = 0; i < 5; ++i)
    if (s == kTaskNames[i]) return static_cast<Task>(i);
  return std::nullopt;
}

ScriptedExpert::ScriptedExpert(env::MiniCrafter& e, DemonstratorProfile profile,
                               std::uint64_t seed)
    : env_(e), profile_(std::move(profile)), rng_(seed ^ 0xd1b54a32d192ed03ULL) {}

namespace {

using action::FactoredAction;
using env::Item;
using env::Tile;

int find_recipe(const env::TechTree& tree, Item out) {
  for (std::size_t i = 0; i < tree.recipes.size(); ++i)
    if (tree.recipes[i].output == out) return static_cast<int>(i);
  return -1;
}

bool tile_near(const env::WorldState& s, Tile want) {
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int x = s.ax + dx, y = s.ay + dy;
      if (s.in_bounds(x, y) && s.tile(x, y) == want) return true;
    }
  return false;
}

bool tile_exists(const env::WorldState& s, Tile want) {
  for (int y = 0; y < s.grid; ++y)
    for (int x = 0; x < s.grid; ++x)
      if (s.tile(x, y) == want) return true;
  return false;
}

// The expert's high-level intent for this tick.
struct Intent {
  enum class Kind { CraftGui, MineTile, PlaceItem, GotoTile, Wander, Idle } kind;
  Item item = Item::Log;   // CraftGui output / PlaceItem item
  Tile tile = Tile::Tree;  // MineTile / GotoTile target
};

}  // namespace

action::FactoredAction ScriptedExpert::turn_toward(double target_heading) {
  const auto& s = env_.state();
  const auto& acfg = env_.action_config();
  double delta = std::fmod(target_heading - s.heading + 540.0, 360.0) - 180.0;
  FactoredAction a = action::null_action(acfg);
  // Pick the bin whose decoded turn gets closest without overshooting badly.
  int best = 5;
  double best_err = std::abs(delta);
  for (int b = 0; b < acfg.bins_per_axis; ++b) {
    const double err = std::abs(delta - action::unbin_camera(b, acfg));
    if (err < best_err) {
      best_err = err;
      best = b;
    }
  }
  a.mouse.x = best;
  return a;
}

action::FactoredAction ScriptedExpert::cursor_toward(double tx, double ty,
                                                     bool click) {
  const auto& s = env_.state();
  const auto& acfg = env_.action_config();
  FactoredAction a = action::null_action(acfg);
  auto nearest_bin = [&](double d) {
    int best = 5;
    double best_err = std::abs(d);
    for (int b = 0; b < acfg.bins_per_axis; ++b) {
      const double err = std::abs(d - action::unbin_camera(b, acfg));
      if (err < best_err) {
        best_err = err;
        best = b;
      }
    }
    return best;
  };
  a.mouse.x = nearest_bin(tx - s.cursor_x);
  a.mouse.y = nearest_bin(ty - s.cursor_y);
  if (click && !s.prev_attack)
    a.choices[static_cast<std::size_t>(acfg.group_index("attack"))] = 1;
  return a;
}

action::FactoredAction ScriptedExpert::random_legal() {
  const auto& acfg = env_.action_config();
  FactoredAction a = action::null_action(acfg);
  for (int tries = 0; tries < 16; ++tries) {
    for (std::size_t i = 0; i < acfg.groups.size(); ++i)
      a.choices[i] = static_cast<int>(rng_() % acfg.groups[i].options.size());
    a.mouse.x = static_cast<int>(rng_() % static_cast<std::uint64_t>(acfg.bins_per_axis));
    a.mouse.y = static_cast<int>(rng_() % static_cast<std::uint64_t>(acfg.bins_per_axis));
    a.inventory = false;
    if (rng_() % 30 == 0) {
      a = action::null_action(acfg);
      a.inventory = true;
      return a;
    }
    if (!action::is_null(a)) return a;
  }
  a = action::null_action(acfg);
  a.choices[static_cast<std::size_t>(acfg.group_index("attack"))] = 1;
  return a;
}

action::FactoredAction ScriptedExpert::optimal() {
  const auto& s = env_.state();
  const auto& acfg = env_.action_config();
  const auto& tree = env_.tech_tree();
  const auto& inv = s.inventory;
  auto count = [&](Item i) { return inv[static_cast<int>(i)]; };
  mining_ = false;

  FactoredAction null = action::null_action(acfg);
  auto toggle_inventory = [&] {
    FactoredAction a = null;
    if (!s.prev_inventory) a.inventory = true;
    return a;
  };
  auto forward = [&] {
    FactoredAction a = null;
    a.choices[static_cast<std::size_t>(acfg.group_index("move"))] = 1;
    return a;
  };
  auto attack_hold = [&] {
    FactoredAction a = null;
    a.choices[static_cast<std::size_t>(acfg.group_index("attack"))] = 1;
    return a;
  };

  // ---- decide the high-level intent from inventory state ----
  const bool table_near = tile_near(s, Tile::Table);
  const bool table_placed = tile_exists(s, Tile::Table);
  const bool furnace_near = tile_near(s, Tile::Furnace);
  const bool furnace_placed = tile_exists(s, Tile::Furnace);
  const bool have_wp = count(Item::WoodenPickaxe) > 0;
  const bool have_sp = count(Item::StonePickaxe) > 0;
  const bool have_ip = count(Item::IronPickaxe) > 0;
  const bool have_dp = count(Item::DiamondPickaxe) > 0;

  Intent intent{Intent::Kind::Wander};
  const Task task = profile_.task;
  if (task == Task::Treechop) {
    intent = tile_exists(s, Tile::Tree)
                 ? Intent{Intent::Kind::MineTile, Item::Log, Tile::Tree}
                 : Intent{Intent::Kind::Wander};
  } else if (task == Task::Freeplay) {
    // Alternate chopping and wandering; goals picked by hash of step bucket.
    const bool chop = ((s.step / 40) % 2 == 0) && tile_exists(s, Tile::Tree);
    intent = chop ? Intent{Intent::Kind::MineTile, Item::Log, Tile::Tree}
                  : Intent{Intent::Kind::Wander};
  } else {
    // Tech-tree route shared by earlygame / obtain-diamond-pickaxe /
    // house-build (house-build branches off after wooden tools).
    const bool building = task == Task::HouseBuild && have_wp;
    const int planks_demand =
        (table_placed || count(Item::CraftingTable) > 0 ? 0 : 4) +
        (have_wp ? 0 : 3) + (count(Item::Stick) >= 8 && !building ? 0 : 4) +
        (building ? 12 : 0);
    if (count(Item::Planks) < planks_demand && count(Item::Log) > 0)
      intent = {Intent::Kind::CraftGui, Item::Planks};
    else if (count(Item::Planks) < planks_demand && tile_exists(s, Tile::Tree))
      intent = {Intent::Kind::MineTile, Item::Log, Tile::Tree};
    else if (count(Item::Stick) < 8 && !have_dp && count(Item::Planks) >= 2 &&
             !building)
      intent = {Intent::Kind::CraftGui, Item::Stick};
    else if (!table_placed && count(Item::CraftingTable) == 0)
      intent = {Intent::Kind::CraftGui, Item::CraftingTable};
    else if (!table_placed)
      intent = {Intent::Kind::PlaceItem, Item::CraftingTable};
    else if (!have_wp && !table_near)
      intent = {Intent::Kind::GotoTile, Item::Log, Tile::Table};
    else if (!have_wp)
      intent = {Intent::Kind::CraftGui, Item::WoodenPickaxe};
    else if (building)
      intent = {Intent::Kind::PlaceItem, Item::Planks};
    else {
      const int cobble_demand =
          (have_sp ? 0 : 3) + (furnace_placed || count(Item::Furnace) > 0 ? 0 : 8);
      const int coal_demand = have_ip ? 0 : 3 - count(Item::IronIngot) +
                                             (count(Item::Torch) > 0 ? 0 : 1);
      if (count(Item::Cobblestone) < cobble_demand)
        intent = {Intent::Kind::MineTile, Item::Cobblestone, Tile::Stone};
      else if (!have_sp && !table_near)
        intent = {Intent::Kind::GotoTile, Item::Log, Tile::Table};
      else if (!have_sp)
        intent = {Intent::Kind::CraftGui, Item::StonePickaxe};
      else if (!furnace_placed && count(Item::Furnace) == 0 && !table_near)
        intent = {Intent::Kind::GotoTile, Item::Log, Tile::Table};
      else if (!furnace_placed && count(Item::Furnace) == 0)
        intent = {Intent::Kind::CraftGui, Item::Furnace};
      else if (!furnace_placed)
        intent = {Intent::Kind::PlaceItem, Item::Furnace};
      else if (!have_ip && count(Item::Coal) < coal_demand &&
               tile_exists(s, Tile::Coal))
        intent = {Intent::Kind::MineTile, Item::Coal, Tile::Coal};
      else if (!have_ip && count(Item::Torch) == 0 && count(Item::Coal) > 0 &&
               count(Item::Stick) > 0)
        intent = {Intent::Kind::CraftGui, Item::Torch};
      else if (!have_ip && count(Item::IronIngot) + count(Item::IronOre) < 3 &&
               tile_exists(s, Tile::Iron))
        intent = {Intent::Kind::MineTile, Item::IronOre, Tile::Iron};
      else if (!have_ip && count(Item::IronIngot) < 3 &&
               count(Item::IronOre) > 0 && count(Item::Coal) > 0) {
        intent = furnace_near
                     ? Intent{Intent::Kind::CraftGui, Item::IronIngot}
                     : Intent{Intent::Kind::GotoTile, Item::Log, Tile::Furnace};
      } else if (!have_ip && count(Item::IronIngot) >= 3) {
        intent = table_near
                     ? Intent{Intent::Kind::CraftGui, Item::IronPickaxe}
                     : Intent{Intent::Kind::GotoTile, Item::Log, Tile::Table};
      } else if (have_ip && count(Item::Diamond) < 3 &&
                 tile_exists(s, Tile::Diamond))
        intent = {Intent::Kind::MineTile, Item::Diamond, Tile::Diamond};
      else if (have_ip && count(Item::Diamond) >= 3 && !have_dp) {
        intent = table_near
                     ? Intent{Intent::Kind::CraftGui, Item::DiamondPickaxe}
                     : Intent{Intent::Kind::GotoTile, Item::Log, Tile::Table};
      } else if (have_dp && tile_exists(s, Tile::Diamond))
        intent = {Intent::Kind::MineTile, Item::Diamond, Tile::Diamond};
      else if (tile_exists(s, Tile::Tree))
        intent = {Intent::Kind::MineTile, Item::Log, Tile::Tree};
      else
        intent = {Intent::Kind::Wander};
    }
  }

  // ---- GUI handling ----
  const bool wants_gui = intent.kind == Intent::Kind::CraftGui;
  if (s.mode == env::Mode::Gui && !wants_gui) return toggle_inventory();
  if (s.mode == env::Mode::World && wants_gui) return toggle_inventory();
  if (s.mode == env::Mode::Gui) {
    const int idx = find_recipe(tree, intent.item);
    const auto box = env_.recipe_cell(idx);
    const double cx = (box[0] + box[2]) / 2.0, cy = (box[1] + box[3]) / 2.0;
    const bool inside = s.cursor_x >= box[0] && s.cursor_x < box[2] &&
                        s.cursor_y >= box[1] && s.cursor_y < box[3];
    return cursor_toward(cx, cy, inside);
  }

  // ---- world mode ----
  if (s.pitch_down) {  // recover level pitch so facing works
    FactoredAction a = null;
    a.mouse.y = 0;
    return a;
  }

  if (intent.kind == Intent::Kind::Wander) {
    FactoredAction a = forward();
    if (rng_() % 6 == 0)
      a.mouse.x = rng_() % 2 == 0 ? 2 : 8;
    return a;
  }

  // Choose a destination: a target tile to mine or a station to stand by,
  // or a free cell to receive a placement.
  const auto& st = s;
  const int held_tier = env::pickaxe_tier(env::held_item(st).value_or(Item::Log));
  auto mineable = [&](Tile t) {
    auto it = tree.mining.find(t);
    return it != tree.mining.end() && held_tier >= it->second.tool_tier;
  };
  auto passable = [&](int x, int y) {
    const Tile t = st.tile(x, y);
    return (env::tile_walkable(t) && t != Tile::Lava) || mineable(t);
  };

  // For placement we want to stand anywhere with a free neighbor cell.
  Tile goal_tile = intent.tile;
  const bool placing = intent.kind == Intent::Kind::PlaceItem;
  auto is_goal = [&](int x, int y) {
    if (placing)
      return (st.tile(x, y) == Tile::Grass || st.tile(x, y) == Tile::Dirt) &&
             !(x == st.ax && y == st.ay);
    return st.tile(x, y) == goal_tile;
  };

  // BFS to the nearest goal cell; the path may tunnel through mineable tiles.
  const int g = st.grid;
  std::vector<int> prev(static_cast<std::size_t>(g) * g, -2);
  std::deque<int> queue;
  const int start = st.ay * g + st.ax;
  prev[static_cast<std::size_t>(start)] = -1;
  queue.push_back(start);
  int goal = -1;
  while (!queue.empty()) {
    const int cur = queue.front();
    queue.pop_front();
    const int cx = cur % g, cy = cur / g;
    if (is_goal(cx, cy) && cur != start) {
      goal = cur;
      break;
    }
    for (int d = 0; d < 8; d += 2) {  // cardinal first keeps paths simple
      const auto [dx, dy] = env::kDirs[static_cast<std::size_t>(d)];
      const int nx = cx + dx, ny = cy + dy;
      if (nx < 0 || nx >= g || ny < 0 || ny >= g) continue;
      const int nc = ny * g + nx;
      if (prev[static_cast<std::size_t>(nc)] != -2) continue;
      if (!passable(nx, ny) && !is_goal(nx, ny)) continue;
      prev[static_cast<std::size_t>(nc)] = cur;
      queue.push_back(nc);
    }
  }
  if (goal < 0) {
    FactoredAction a = forward();  // nothing reachable; drift
    if (rng_() % 4 == 0) a.mouse.x = 8;
    return a;
  }

  // Walk back to find the first step from the agent.
  int step_cell = goal;
  while (prev[static_cast<std::size_t>(step_cell)] != start &&
         prev[static_cast<std::size_t>(step_cell)] != -1)
    step_cell = prev[static_cast<std::size_t>(step_cell)];
  const int nx = step_cell % g, ny = step_cell / g;

  // Direction and required heading toward the next cell.
  int dir = -1;
  for (int d = 0; d < 8; ++d)
    if (env::kDirs[static_cast<std::size_t>(d)].first == nx - st.ax &&
        env::kDirs[static_cast<std::size_t>(d)].second == ny - st.ay)
      dir = d;
  if (dir < 0) return forward();
  const double want_heading = dir * 45.0;
  if (env::heading_dir(st.heading) != dir) return turn_toward(want_heading);

  const Tile next_tile = st.tile(nx, ny);
  const bool next_is_goal = (step_cell == goal);

  if (placing && next_is_goal) {
    // Stand still, face the free cell, select the right hotbar slot, use.
    const auto slots = env::hotbar_slots(st);
    int slot = -1;
    for (int i = 0; i < 3; ++i)
      if (slots[static_cast<std::size_t>(i)] == intent.item) slot = i;
    if (slot < 0) return null;  // item missing; plan will re-evaluate
    FactoredAction a = null;
    a.choices[static_cast<std::size_t>(acfg.group_index("hotbar"))] = slot + 1;
    if (!st.prev_use) a.choices[static_cast<std::size_t>(acfg.group_index("use"))] = 1;
    return a;
  }

  if (!env::tile_walkable(next_tile)) {
    // Mine through (or mine the goal itself).
    mining_ = true;
    FactoredAction a = attack_hold();
    // Keep the best pickaxe selected while mining.
    a.choices[static_cast<std::size_t>(acfg.group_index("hotbar"))] = 1;
    return a;
  }
  return forward();
}

action::FactoredAction ScriptedExpert::act() {
  const auto& acfg = env_.action_config();
  const bool critical = env_.state().mine_ticks > 0;

  if (pending_nulls_ > 0 && !critical) {
    --pending_nulls_;
    return action::null_action(acfg);
  }

  action::FactoredAction a = optimal();

  if (!critical && !mining_) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    if (profile_.action_noise > 0 && u(rng_) < profile_.action_noise)
      a = random_legal();
    if (profile_.skill < 1.0 && u(rng_) < (1.0 - profile_.skill) / 50.0)
      wander_steps_ = 25;
    if (wander_steps_ > 0) {
      --wander_steps_;
      a = action::null_action(acfg);
      a.choices[static_cast<std::size_t>(acfg.group_index("move"))] = 1;
      if (rng_() % 5 == 0) a.mouse.x = rng_() % 2 == 0 ? 1 : 9;
    }
    // Null bursts between activities; long-run fraction == null_rate.
    const double f = profile_.null_rate;
    if (f > 0) {
      const double mean_burst = 3.0;
      const double q = f / ((1.0 - f) * mean_burst);
      if (u(rng_) < q) {
        std::geometric_distribution<int> geo(1.0 / mean_burst);
        pending_nulls_ = 1 + geo(rng_);
      }
    }
  }
  return a;
}

TrajectorySegment generate_trajectory(std::uint64_t seed,
                                      const DemonstratorProfile& profile,
                                      const env::EnvConfig& ecfg,
                                      const action::ActionSpaceConfig& acfg) {
  env::MiniCrafter world(ecfg, acfg);
  env::Observation obs = world.reset(seed);
  ScriptedExpert expert(world, profile, seed);

  TrajectorySegment seg;
  seg.obs_size = ecfg.obs_size;
  seg.seed = seed;
  seg.profile_name = task_name(profile.task);
  seg.tags = profile.tags;
  seg.frames.reserve(static_cast<std::size_t>(profile.length) * obs.rgb.size());
  for (int t = 0; t < profile.length; ++t) {
    seg.frames.insert(seg.frames.end(), obs.rgb.begin(), obs.rgb.end());
    const auto a = expert.act();
    seg.actions.push_back(a);
    auto result = world.step(a);
    obs = std::move(result.obs);
    for (auto& e : result.events) seg.events.push_back(e);
  }
  return seg;
}

namespace {

void blank_overlay(std::uint8_t* img, int obs) {
  const int oh = std::max(3, obs / 16);
  for (int y = obs - oh; y < obs; ++y)
    for (int x = 0; x < obs; ++x) {
      std::uint8_t* p = img + (static_cast<std::size_t>(y) * obs + x) * 3;
      p[0] = 120; p[1] = 170; p[2] = 220;
    }
}

void apply_artifact(std::uint8_t* img, int obs, ArtifactWindow::Kind kind,
                    std::uint64_t seed) {
  switch (kind) {
    case ArtifactWindow::Kind::LogoPatch: {
      const int sz = std::max(6, obs / 6);
      for (int y = 1; y < 1 + sz; ++y)
        for (int x = obs - sz - 1; x < obs - 1; ++x) {
          std::uint8_t* p = img + (static_cast<std::size_t>(y) * obs + x) * 3;
          const bool inner = y > 2 && y < sz - 1 && x > obs - sz && x < obs - 3;
          p[0] = inner ? 250 : 230;
          p[1] = inner ? 250 : 40;
          p[2] = inner ? 80 : 200;
        }
      break;
    }
    case ArtifactWindow::Kind::PictureInPicture: {
      const int sz = obs / 3;
      const int x0 = obs - sz - 1, y0 = obs - sz - 1;
      std::vector<std::uint8_t> copy(img, img + static_cast<std::size_t>(obs) * obs * 3);
      for (int y = 0; y < sz; ++y)
        for (int x = 0; x < sz; ++x) {
          const std::uint8_t* src =
              &copy[(static_cast<std::size_t>(y * 3) * obs + x * 3) * 3];
          std::uint8_t* p =
              img + (static_cast<std::size_t>(y0 + y) * obs + x0 + x) * 3;
          const bool border = x == 0 || y == 0 || x == sz - 1 || y == sz - 1;
          p[0] = border ? 255 : src[0];
          p[1] = border ? 255 : src[1];
          p[2] = border ? 255 : src[2];
        }
      break;
    }
    case ArtifactWindow::Kind::TextBanner: {
      const int bh = std::max(4, obs / 8);
      Rng rng(seed);
      for (int y = 0; y < bh; ++y)
        for (int x = 0; x < obs; ++x) {
          std::uint8_t* p = img + (static_cast<std::size_t>(y) * obs + x) * 3;
          const bool glyph = y > 0 && y < bh - 1 && (rng() % 3 == 0);
          const std::uint8_t v = glyph ? 240 : 20;
          p[0] = v; p[1] = v; p[2] = v;
        }
      break;
    }
  }
}

}  // namespace

CorruptResult corrupt(const TrajectorySegment& segment,
                      const CorruptionSpec& spec, std::uint64_t seed) {
  CorruptResult out;
  out.frames = segment.frames;
  const int n = segment.length();
  out.labels.assign(static_cast<std::size_t>(n), FrameClass::Clean);
  const int obs = segment.obs_size;
  const std::size_t stride = static_cast<std::size_t>(obs) * obs * 3;
  Rng rng(seed ^ 0x94d049bb133111ebULL);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int t = 0; t < n; ++t) {
    std::uint8_t* img = out.frames.data() + stride * static_cast<std::size_t>(t);
    bool swapped = false;
    if (spec.mode_swap_prob > 0 && u(rng) < spec.mode_swap_prob) {
      blank_overlay(img, obs);
      out.labels[static_cast<std::size_t>(t)] = FrameClass::NotSurvival;
      swapped = true;
    }
    for (const auto& w : spec.windows)
      if (t >= w.start && t < w.end) {
        apply_artifact(img, obs, w.kind, seed + static_cast<std::uint64_t>(t));
        if (!swapped) out.labels[static_cast<std::size_t>(t)] = FrameClass::Artifact;
      }
  }
  return out;
}

void write_actions_file(const std::filesystem::path& file,
                        const std::vector<action::FactoredAction>& actions,
                        const action::ActionSpaceConfig& acfg, bool pseudo) {
  std::ostringstream os;
  os << "# provenance=" << (pseudo ? "pseudo" : "ground-truth") << "\n";
  for (const auto& a : actions) os << action::to_record(a, acfg) << "\n";
  write_file(file, os.str());
}

namespace {

std::vector<std::string> default_tags(Task task, std::uint64_t seed) {
  static const std::vector<std::string> early = {
      "minecraft survival let's play episode 1", "fresh world adventure",
      "new world day 1", "starting from scratch survival",
      "minecraft survival ep 1"};
  static const std::vector<std::string> other = {
      "castle tour part 9", "epic base showcase", "minecraft mega build",
      "redstone tutorial advanced", "survival series part 7"};
  const auto& pool =
      (task == Task::Earlygame || task == Task::ObtainDiamondPickaxe) ? early
                                                                      : other;
  return {pool[seed % pool.size()]};
}

}  // namespace

void make_corpus(const std::filesystem::path& root,
                 const std::vector<CorpusEntry>& entries, bool contractor_style,
                 std::uint64_t seed, const env::EnvConfig& ecfg,
                 const action::ActionSpaceConfig& acfg) {
  std::filesystem::create_directories(root);
  int index = 0;
  for (const auto& entry : entries) {
    for (int c = 0; c < entry.count; ++c, ++index) {
      const std::uint64_t tseed = seed * 1000003ULL + static_cast<std::uint64_t>(index);
      DemonstratorProfile profile = entry.profile;
      if (profile.tags.empty()) profile.tags = default_tags(profile.task, tseed);
      TrajectorySegment seg = generate_trajectory(tseed, profile, ecfg, acfg);

      char name[32];
      std::snprintf(name, sizeof name, "traj_%05d", index);
      const auto dir = root / name;
      std::filesystem::create_directories(dir);

      std::ostringstream meta;
      meta << "seed " << tseed << "\nlength " << seg.length() << "\nobs "
           << seg.obs_size << "\nprofile " << seg.profile_name << "\n";
      for (const auto& tag : seg.tags) meta << "tag " << tag << "\n";
      write_file(dir / "meta.txt", meta.str());

      if (contractor_style) {
        write_file(dir / "frames.bin",
                   std::string_view(reinterpret_cast<const char*>(seg.frames.data()),
                                    seg.frames.size()));
        write_actions_file(dir / "actions.txt", seg.actions, acfg, false);
      } else {
        auto corrupted = corrupt(seg, entry.corruption, tseed);
        write_file(dir / "frames.bin",
                   std::string_view(reinterpret_cast<const char*>(corrupted.frames.data()),
                                    corrupted.frames.size()));
        // Hidden ground truth: evaluation-only sidecars.
        write_actions_file(dir / "truth_actions.txt", seg.actions, acfg, false);
        std::ostringstream lb;
        static constexpr const char* kClass[] = {"clean", "artifact", "not-survival"};
        for (auto l : corrupted.labels) lb << kClass[static_cast<int>(l)] << "\n";
        write_file(dir / "truth_labels.txt", lb.str());
      }
      std::ostringstream ev;
      for (const auto& e : seg.events) ev << e.to_record() << "\n";
      write_file(dir / "events.txt", ev.str());
    }
  }
}

std::vector<std::filesystem::path> list_trajectories(const std::filesystem::path& root) {
  std::vector<std::filesystem::path> dirs;
  if (!std::filesystem::exists(root)) return dirs;
  for (const auto& e : std::filesystem::directory_iterator(root))
    if (e.is_directory() && e.path().filename().string().starts_with("traj_"))
      dirs.push_back(e.path());
  std::sort(dirs.begin(), dirs.end());
  return dirs;
}

StoredTrajectory load_trajectory(const std::filesystem::path& dir,
                                 const action::ActionSpaceConfig& acfg,
                                 bool include_sidecar_truth) {
  StoredTrajectory t;
  {
    std::istringstream is(read_file(dir / "meta.txt"));
    std::string line;
    while (std::getline(is, line)) {
      std::istringstream ls(line);
      std::string key;
      ls >> key;
      if (key == "seed") ls >> t.seed;
      else if (key == "length") ls >> t.length;
      else if (key == "obs") ls >> t.obs_size;
      else if (key == "tag") {
        std::string rest;
        std::getline(ls, rest);
        if (!rest.empty() && rest[0] == ' ') rest.erase(0, 1);
        t.tags.push_back(rest);
      }
    }
  }
  {
    const std::string raw = read_file(dir / "frames.bin");
    t.frames.assign(raw.begin(), raw.end());
  }
  auto read_actions = [&](const std::filesystem::path& f, bool* pseudo_out)
      -> std::vector<action::FactoredAction> {
    std::vector<action::FactoredAction> actions;
    std::istringstream is(read_file(f));
    std::string line;
    while (std::getline(is, line)) {
      if (line.empty()) continue;
      if (line.starts_with("#")) {
        if (pseudo_out && line.find("provenance=pseudo") != std::string::npos)
          *pseudo_out = true;
        continue;
      }
      actions.push_back(action::from_record(line, acfg));
    }
    return actions;
  };
  if (std::filesystem::exists(dir / "actions.txt"))
    t.actions = read_actions(dir / "actions.txt", &t.pseudo_labels);
  if (include_sidecar_truth) {
    if (std::filesystem::exists(dir / "truth_actions.txt"))
      t.truth_actions = read_actions(dir / "truth_actions.txt", nullptr);
    if (std::filesystem::exists(dir / "truth_labels.txt")) {
      std::istringstream is(read_file(dir / "truth_labels.txt"));
      std::string line;
      while (std::getline(is, line)) {
        if (line == "clean") t.truth_labels.push_back(FrameClass::Clean);
        else if (line == "artifact") t.truth_labels.push_back(FrameClass::Artifact);
        else if (line == "not-survival")
          t.truth_labels.push_back(FrameClass::NotSurvival);
      }
    }
  }
  return t;
}

}  // namespace vpt::demo
