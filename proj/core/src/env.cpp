#include "vpt/env.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "vpt/util.hpp"

namespace vpt::env {

namespace {
constexpr const char* kItemNames[kItemCount] = {
    "log", "planks", "stick", "crafting_table", "wooden_pickaxe",
    "cobblestone", "stone_pickaxe", "furnace", "coal", "torch",
    "iron_ore", "iron_ingot", "iron_pickaxe", "diamond", "diamond_pickaxe"};
}  // namespace

const char* item_name(Item i) { return kItemNames[static_cast<int>(i)]; }

std::optional<Item> item_from_name(std::string_view name) {
  for (int i = 0; i < kItemCount; ++i)
    if (name == kItemNames[i]) return static_cast<Item>(i);
  return std::nullopt;
}

TechTree TechTree::standard() {
  TechTree t;
  using I = Item;
  t.recipes = {
      {I::Planks, 4, {{I::Log, 1}}, Station::Hand},
      {I::Stick, 4, {{I::Planks, 2}}, Station::Hand},
      {I::CraftingTable, 1, {{I::Planks, 4}}, Station::Hand},
      {I::WoodenPickaxe, 1, {{I::Planks, 3}, {I::Stick, 2}}, Station::Table},
      {I::StonePickaxe, 1, {{I::Cobblestone, 3}, {I::Stick, 2}}, Station::Table},
      {I::Furnace, 1, {{I::Cobblestone, 8}}, Station::Table},
      {I::Torch, 4, {{I::Coal, 1}, {I::Stick, 1}}, Station::Hand},
      {I::IronIngot, 1, {{I::IronOre, 1}, {I::Coal, 1}}, Station::Furnace},
      {I::IronPickaxe, 1, {{I::IronIngot, 3}, {I::Stick, 2}}, Station::Table},
      {I::DiamondPickaxe, 1, {{I::Diamond, 3}, {I::Stick, 2}}, Station::Table},
  };
  t.mining = {
      {Tile::Tree, {I::Log, 0}},
      {Tile::Stone, {I::Cobblestone, 1}},
      {Tile::Coal, {I::Coal, 1}},
      {Tile::Iron, {I::IronOre, 2}},
      {Tile::Diamond, {I::Diamond, 3}},
      {Tile::Table, {I::CraftingTable, 0}},
      {Tile::Furnace, {I::Furnace, 0}},
      {Tile::Torch, {I::Torch, 0}},
      {Tile::Block, {I::Planks, 0}},
  };
  return t;
}

int pickaxe_tier(Item held) {
  switch (held) {
    case Item::WoodenPickaxe: return 1;
    case Item::StonePickaxe: return 2;
    case Item::IronPickaxe: return 3;
    case Item::DiamondPickaxe: return 3;
    default: return 0;
  }
}

std::string EnvConfig::serialize() const {
  std::ostringstream os;
  os << "grid " << grid << "\nobs_size " << obs_size << "\nticks_to_break "
     << ticks_to_break << "\nepisode_len " << episode_len << "\ngui_size "
     << gui_size << "\n";
  return os.str();
}

EnvConfig EnvConfig::parse(std::string_view text) {
  EnvConfig c;
  std::istringstream is{std::string(text)};
  std::string key;
  while (is >> key) {
    if (key == "grid") is >> c.grid;
    else if (key == "obs_size") is >> c.obs_size;
    else if (key == "ticks_to_break") is >> c.ticks_to_break;
    else if (key == "episode_len") is >> c.episode_len;
    else if (key == "gui_size") is >> c.gui_size;
    else throw std::invalid_argument("unknown env config key: " + key);
  }
  return c;
}

std::string Event::to_record() const {
  static constexpr const char* kKinds[] = {"collect", "craft", "place", "death"};
  std::ostringstream os;
  os << "step=" << step << " type=" << kKinds[static_cast<int>(kind)]
     << " item=" << item_name(item) << " qty=" << qty;
  return os.str();
}

Event Event::from_record(std::string_view line) {
  Event e;
  std::istringstream is{std::string(line)};
  std::string tok;
  while (is >> tok) {
    const auto eq = tok.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("malformed event token: " + tok);
    const std::string key = tok.substr(0, eq), val = tok.substr(eq + 1);
    if (key == "step") e.step = std::stoi(val);
    else if (key == "qty") e.qty = std::stoi(val);
    else if (key == "item") {
      auto it = item_from_name(val);
      if (!it) throw std::invalid_argument("unknown item: " + val);
      e.item = *it;
    } else if (key == "type") {
      if (val == "collect") e.kind = Kind::Collect;
      else if (val == "craft") e.kind = Kind::Craft;
      else if (val == "place") e.kind = Kind::Place;
      else if (val == "death") e.kind = Kind::Death;
      else throw std::invalid_argument("unknown event type: " + val);
    }
  }
  return e;
}

const std::array<std::pair<int, int>, 8> kDirs = {{
    {0, -1}, {1, -1}, {1, 0}, {1, 1}, {0, 1}, {-1, 1}, {-1, 0}, {-1, -1}}};

int heading_dir(double heading) {
  return static_cast<int>(std::lround(heading / 45.0)) % 8;
}

bool tile_walkable(Tile t) {
  return t == Tile::Grass || t == Tile::Dirt || t == Tile::Torch ||
         t == Tile::Lava;
}

std::array<std::optional<Item>, 3> hotbar_slots(const WorldState& s) {
  std::array<std::optional<Item>, 3> slots;
  static constexpr Item kPickaxes[] = {Item::DiamondPickaxe, Item::IronPickaxe,
                                       Item::StonePickaxe, Item::WoodenPickaxe};
  for (Item p : kPickaxes)
    if (s.inventory[static_cast<int>(p)] > 0) {
      slots[0] = p;
      break;
    }
  static constexpr Item kPlaceables[] = {Item::CraftingTable, Item::Furnace,
                                         Item::Torch, Item::Planks};
  int si = 1;
  for (Item p : kPlaceables) {
    if (si > 2) break;
    if (s.inventory[static_cast<int>(p)] > 0) slots[si++] = p;
  }
  return slots;
}

std::optional<Item> held_item(const WorldState& s) {
  return hotbar_slots(s)[static_cast<std::size_t>(s.hotbar_selected)];
}

MiniCrafter::MiniCrafter(EnvConfig cfg, action::ActionSpaceConfig acfg,
                         TechTree tree)
    : cfg_(cfg), acfg_(std::move(acfg)), tree_(std::move(tree)) {
  move_group_ = acfg_.group_index("move");
  strafe_group_ = acfg_.group_index("strafe");
  hotbar_group_ = acfg_.group_index("hotbar");
  attack_group_ = acfg_.group_index("attack");
  use_group_ = acfg_.group_index("use");
  if (move_group_ < 0 || strafe_group_ < 0 || hotbar_group_ < 0 ||
      attack_group_ < 0 || use_group_ < 0)
    throw std::invalid_argument("action config lacks a required key group");
}

void MiniCrafter::generate_world(std::uint64_t seed) {
  const int g = cfg_.grid;
  state_ = WorldState{};
  state_.seed = seed;
  state_.grid = g;
  state_.tiles.assign(static_cast<std::size_t>(g) * g, Tile::Grass);
  Rng rng(seed * 0x9e3779b97f4a7c15ULL + 1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  auto uint_below = [&](int n) {
    return static_cast<int>(rng() % static_cast<std::uint64_t>(n));
  };

  const int surface_rows = std::max(3, g / 5);          // grass + trees
  const int dirt_rows = std::max(2, g / 8);             // soft layer
  const int deep_start = g - std::max(3, g / 4);        // diamond band

  for (int y = 0; y < g; ++y)
    for (int x = 0; x < g; ++x) {
      if (y < surface_rows) {
        state_.set_tile(x, y, Tile::Grass);
      } else if (y < surface_rows + dirt_rows) {
        state_.set_tile(x, y, u(rng) < 0.75 ? Tile::Dirt : Tile::Stone);
      } else if (y < deep_start) {
        double r = u(rng);
        const double mid = static_cast<double>(y - surface_rows - dirt_rows) /
                           std::max(1, deep_start - surface_rows - dirt_rows);
        if (r < 0.08) state_.set_tile(x, y, Tile::Coal);
        else if (r < 0.08 + 0.06 * mid + 0.02) state_.set_tile(x, y, Tile::Iron);
        else state_.set_tile(x, y, Tile::Stone);
      } else {
        state_.set_tile(x, y, u(rng) < 0.12 ? Tile::Lava : Tile::Stone);
      }
    }

  // Trees cluster near spawn plus scattered extras.
  state_.spawn_x = 1 + uint_below(std::max(1, g / 4));
  state_.spawn_y = 1;
  int trees = 0;
  for (int attempt = 0; attempt < 200 && trees < std::max(6, g / 2); ++attempt) {
    int x = uint_below(g), y = uint_below(surface_rows);
    if (trees < 4) {  // guarantee a few within easy reach of spawn
      x = std::clamp(state_.spawn_x - 3 + uint_below(7), 0, g - 1);
      y = uint_below(surface_rows);
    }
    if (x == state_.spawn_x && y == state_.spawn_y) continue;
    if (state_.tile(x, y) == Tile::Grass) {
      state_.set_tile(x, y, Tile::Tree);
      ++trees;
    }
  }

  // Diamonds in the deep band, never enclosed by lava.
  int diamonds = 0;
  for (int attempt = 0; attempt < 400 && diamonds < 4; ++attempt) {
    const int x = uint_below(g);
    const int y = deep_start + uint_below(g - deep_start);
    if (state_.tile(x, y) != Tile::Stone) continue;
    bool has_solid_neighbor = false;
    for (auto [dx, dy] : kDirs) {
      const int nx = x + dx, ny = y + dy;
      if (state_.in_bounds(nx, ny) && state_.tile(nx, ny) == Tile::Stone)
        has_solid_neighbor = true;
    }
    if (!has_solid_neighbor) continue;
    state_.set_tile(x, y, Tile::Diamond);
    for (auto [dx, dy] : kDirs) {  // clear adjacent lava so the face is safe
      const int nx = x + dx, ny = y + dy;
      if (state_.in_bounds(nx, ny) && state_.tile(nx, ny) == Tile::Lava)
        state_.set_tile(nx, ny, Tile::Stone);
    }
    ++diamonds;
  }

  state_.set_tile(state_.spawn_x, state_.spawn_y, Tile::Grass);
  state_.ax = state_.spawn_x;
  state_.ay = state_.spawn_y;
  state_.heading = 90.0;  // facing east
  state_.cursor_x = cfg_.gui_size / 2.0;
  state_.cursor_y = cfg_.gui_size / 2.0;
}

Observation MiniCrafter::reset(std::uint64_t seed) {
  generate_world(seed);
  return render();
}

std::pair<int, int> MiniCrafter::facing_cell() const {
  if (state_.pitch_down) return {state_.ax, state_.ay};
  const auto [dx, dy] = kDirs[static_cast<std::size_t>(heading_dir(state_.heading))];
  return {state_.ax + dx, state_.ay + dy};
}

bool MiniCrafter::craftable(const Recipe& r) const {
  for (const auto& [item, qty] : r.ingredients)
    if (state_.inventory[static_cast<int>(item)] < qty) return false;
  if (r.station == Station::Hand) return true;
  const Tile want = r.station == Station::Table ? Tile::Table : Tile::Furnace;
  for (int dy = -1; dy <= 1; ++dy)
    for (int dx = -1; dx <= 1; ++dx) {
      const int x = state_.ax + dx, y = state_.ay + dy;
      if (state_.in_bounds(x, y) && state_.tile(x, y) == want) return true;
    }
  return false;
}

std::array<int, 4> MiniCrafter::recipe_cell(int index) const {
  // Two rows of five cells, centered in GUI space.
  const int gs = cfg_.gui_size;
  const int cell = gs / 6;
  const int col = index % 5, row = index / 5;
  const int x0 = gs / 12 + col * (cell + gs / 64 + 1);
  const int y0 = gs / 4 + row * (cell + gs / 8);
  return {x0, y0, x0 + cell, y0 + cell};
}

void MiniCrafter::pick_up_ground(std::vector<Event>& events) {
  const int cell = state_.ay * state_.grid + state_.ax;
  auto it = state_.ground.find(cell);
  if (it == state_.ground.end()) return;
  for (int i = 0; i < kItemCount; ++i)
    if (it->second[static_cast<std::size_t>(i)] > 0) {
      state_.inventory[static_cast<std::size_t>(i)] += it->second[static_cast<std::size_t>(i)];
      events.push_back({state_.step, Event::Kind::Collect,
                        static_cast<Item>(i), it->second[static_cast<std::size_t>(i)]});
    }
  state_.ground.erase(it);
}

StepResult MiniCrafter::step(const action::FactoredAction& a) {
  action::validate(a, acfg_);
  StepResult result;
  auto& s = state_;
  ++s.step;

  const bool attack = !a.inventory && a.choices[static_cast<std::size_t>(attack_group_)] == 1;
  const bool use = !a.inventory && a.choices[static_cast<std::size_t>(use_group_)] == 1;
  const bool attack_edge = attack && !s.prev_attack;
  const bool use_edge = use && !s.prev_use;
  const bool inv_edge = a.inventory && !s.prev_inventory;

  const double dx = action::unbin_camera(a.mouse.x, acfg_);
  const double dy = action::unbin_camera(a.mouse.y, acfg_);

  // Hotbar selection applies in both modes.
  const int hot = a.inventory ? 0 : a.choices[static_cast<std::size_t>(hotbar_group_)];
  if (hot > 0) s.hotbar_selected = std::min(hot, 3) - 1;

  if (inv_edge) {
    s.mode = s.mode == Mode::World ? Mode::Gui : Mode::World;
    s.cursor_x = cfg_.gui_size / 2.0;
    s.cursor_y = cfg_.gui_size / 2.0;
    s.mine_ticks = 0;
  }

  if (s.mode == Mode::Gui && !a.inventory) {
    s.cursor_x = std::clamp(s.cursor_x + dx, 0.0, cfg_.gui_size - 1.0);
    s.cursor_y = std::clamp(s.cursor_y + dy, 0.0, cfg_.gui_size - 1.0);
    if (attack_edge) {
      for (std::size_t i = 0; i < tree_.recipes.size(); ++i) {
        const auto box = recipe_cell(static_cast<int>(i));
        if (s.cursor_x >= box[0] && s.cursor_x < box[2] && s.cursor_y >= box[1] &&
            s.cursor_y < box[3]) {
          const Recipe& r = tree_.recipes[i];
          if (craftable(r)) {
            for (const auto& [item, qty] : r.ingredients)
              s.inventory[static_cast<int>(item)] -= qty;
            s.inventory[static_cast<int>(r.output)] += r.output_qty;
            result.events.push_back({s.step, Event::Kind::Craft, r.output,
                                     r.output_qty});
          }
          break;
        }
      }
    }
  } else if (s.mode == Mode::World && !a.inventory) {
    // Turning and pitch.
    s.heading = std::fmod(std::fmod(s.heading + dx, 360.0) + 360.0, 360.0);
    s.pitch_accum += dy;
    if (s.pitch_accum > 45.0) {
      s.pitch_down = true;
      s.pitch_accum = 0.0;
    } else if (s.pitch_accum < -45.0) {
      s.pitch_down = false;
      s.pitch_accum = 0.0;
    }

    // Movement: forward/back along heading, strafe perpendicular.
    const int dir = heading_dir(s.heading);
    int mx = 0, my = 0;
    const int move = a.choices[static_cast<std::size_t>(move_group_)];
    const int strafe = a.choices[static_cast<std::size_t>(strafe_group_)];
    if (move == 1) { mx += kDirs[static_cast<std::size_t>(dir)].first; my += kDirs[static_cast<std::size_t>(dir)].second; }
    if (move == 2) { mx -= kDirs[static_cast<std::size_t>(dir)].first; my -= kDirs[static_cast<std::size_t>(dir)].second; }
    const int left = (dir + 6) % 8;
    if (strafe == 1) { mx += kDirs[static_cast<std::size_t>(left)].first; my += kDirs[static_cast<std::size_t>(left)].second; }
    if (strafe == 2) { mx -= kDirs[static_cast<std::size_t>(left)].first; my -= kDirs[static_cast<std::size_t>(left)].second; }
    if (mx != 0 || my != 0) {
      const int nx = std::clamp(s.ax + (mx > 0 ? 1 : mx < 0 ? -1 : 0), 0, s.grid - 1);
      const int ny = std::clamp(s.ay + (my > 0 ? 1 : my < 0 ? -1 : 0), 0, s.grid - 1);
      if ((nx != s.ax || ny != s.ay) && tile_walkable(s.tile(nx, ny))) {
        s.ax = nx;
        s.ay = ny;
        s.mine_ticks = 0;
        pick_up_ground(result.events);
      }
    }

    // Placement.
    if (use_edge) {
      const auto held = held_item(s);
      if (held) {
        Tile place = Tile::Grass;
        bool placeable = true;
        switch (*held) {
          case Item::CraftingTable: place = Tile::Table; break;
          case Item::Furnace: place = Tile::Furnace; break;
          case Item::Torch: place = Tile::Torch; break;
          case Item::Planks: place = Tile::Block; break;
          default: placeable = false;
        }
        const auto [fx, fy] = facing_cell();
        if (placeable && s.in_bounds(fx, fy) && !(fx == s.ax && fy == s.ay) &&
            (s.tile(fx, fy) == Tile::Grass || s.tile(fx, fy) == Tile::Dirt)) {
          s.set_tile(fx, fy, place);
          --s.inventory[static_cast<int>(*held)];
          result.events.push_back({s.step, Event::Kind::Place, *held, 1});
        }
      }
    }

    // Mining: attack held on the same breakable facing cell.
    if (attack) {
      const auto [fx, fy] = facing_cell();
      if (s.in_bounds(fx, fy)) {
        auto rule = tree_.mining.find(s.tile(fx, fy));
        const int tier = pickaxe_tier(held_item(s).value_or(Item::Log));
        if (rule != tree_.mining.end() && tier >= rule->second.tool_tier) {
          if (fx == s.mine_x && fy == s.mine_y) ++s.mine_ticks;
          else { s.mine_x = fx; s.mine_y = fy; s.mine_ticks = 1; }
          if (s.mine_ticks >= cfg_.ticks_to_break) {
            s.set_tile(fx, fy, Tile::Dirt);
            ++s.inventory[static_cast<int>(rule->second.yield)];
            result.events.push_back({s.step, Event::Kind::Collect,
                                     rule->second.yield, 1});
            s.mine_ticks = 0;
            s.mine_x = s.mine_y = -1;
          }
        } else {
          s.mine_ticks = 0;
        }
      }
    } else {
      s.mine_ticks = 0;
    }
  }

  // Lava: death drops everything at the cell; the episode continues.
  if (s.tile(s.ax, s.ay) == Tile::Lava) {
    const int cell = s.ay * s.grid + s.ax;
    auto& pile = s.ground[cell];
    for (int i = 0; i < kItemCount; ++i) {
      pile[static_cast<std::size_t>(i)] += s.inventory[static_cast<std::size_t>(i)];
      s.inventory[static_cast<std::size_t>(i)] = 0;
    }
    s.ax = s.spawn_x;
    s.ay = s.spawn_y;
    s.mode = Mode::World;
    s.mine_ticks = 0;
    ++s.deaths;
    result.events.push_back({s.step, Event::Kind::Death, Item::Log, 0});
  }

  s.prev_attack = attack;
  s.prev_use = use;
  s.prev_inventory = a.inventory;
  result.obs = render();
  return result;
}

namespace {

struct Rgb { std::uint8_t r, g, b; };

Rgb tile_color(Tile t) {
  switch (t) {
    case Tile::Grass: return {70, 160, 70};
    case Tile::Tree: return {20, 90, 25};
    case Tile::Dirt: return {130, 90, 50};
    case Tile::Stone: return {128, 128, 128};
    case Tile::Coal: return {45, 45, 45};
    case Tile::Iron: return {205, 170, 140};
    case Tile::Diamond: return {80, 220, 230};
    case Tile::Lava: return {235, 95, 20};
    case Tile::Table: return {175, 120, 60};
    case Tile::Furnace: return {90, 90, 105};
    case Tile::Torch: return {250, 220, 100};
    case Tile::Block: return {195, 165, 110};
  }
  return {0, 0, 0};
}

Rgb item_color(Item i) {
  switch (i) {
    case Item::Log: return {100, 70, 30};
    case Item::Planks: return {195, 165, 110};
    case Item::Stick: return {160, 130, 80};
    case Item::CraftingTable: return {175, 120, 60};
    case Item::WoodenPickaxe: return {150, 110, 60};
    case Item::Cobblestone: return {110, 110, 110};
    case Item::StonePickaxe: return {90, 95, 100};
    case Item::Furnace: return {90, 90, 105};
    case Item::Coal: return {45, 45, 45};
    case Item::Torch: return {250, 220, 100};
    case Item::IronOre: return {205, 170, 140};
    case Item::IronIngot: return {220, 215, 205};
    case Item::IronPickaxe: return {200, 200, 210};
    case Item::Diamond: return {80, 220, 230};
    case Item::DiamondPickaxe: return {60, 200, 210};
    default: return {0, 0, 0};
  }
}

void fill_rect(Observation& o, int x0, int y0, int x1, int y1, Rgb c) {
  x0 = std::clamp(x0, 0, o.w);
  x1 = std::clamp(x1, 0, o.w);
  y0 = std::clamp(y0, 0, o.h);
  y1 = std::clamp(y1, 0, o.h);
  for (int y = y0; y < y1; ++y)
    for (int x = x0; x < x1; ++x) {
      std::uint8_t* p = &o.rgb[(static_cast<std::size_t>(y) * o.w + x) * 3];
      p[0] = c.r; p[1] = c.g; p[2] = c.b;
    }
}

}  // namespace

Observation MiniCrafter::render(const WorldState& s, const EnvConfig& cfg,
                                const TechTree& tree, bool overlays) {
  Observation o;
  o.h = o.w = cfg.obs_size;
  o.rgb.assign(static_cast<std::size_t>(o.h) * o.w * 3, 0);
  const int cell = std::max(1, cfg.obs_size / s.grid);
  const double gui_scale = static_cast<double>(cfg.obs_size) / cfg.gui_size;

  // World layer.
  for (int y = 0; y < s.grid; ++y)
    for (int x = 0; x < s.grid; ++x) {
      Rgb c = tile_color(s.tile(x, y));
      if (s.mode == Mode::Gui) {
        c = {static_cast<std::uint8_t>(c.r / 3), static_cast<std::uint8_t>(c.g / 3),
             static_cast<std::uint8_t>(c.b / 3)};
      }
      fill_rect(o, x * cell, y * cell, (x + 1) * cell, (y + 1) * cell, c);
    }

  if (s.mode == Mode::World) {
    // Agent body plus a facing marker.
    fill_rect(o, s.ax * cell, s.ay * cell, (s.ax + 1) * cell, (s.ay + 1) * cell,
              {255, 255, 255});
    const auto [dx, dy] = kDirs[static_cast<std::size_t>(heading_dir(s.heading))];
    const int mxp = s.ax * cell + cell / 2 + dx * std::max(1, cell / 2 - 1);
    const int myp = s.ay * cell + cell / 2 + dy * std::max(1, cell / 2 - 1);
    fill_rect(o, mxp, myp, mxp + 1, myp + 1, {200, 40, 40});
    // Mining progress flash on the target cell.
    if (s.mine_ticks > 0 && s.in_bounds(s.mine_x, s.mine_y)) {
      const int px = s.mine_x * cell, py = s.mine_y * cell;
      fill_rect(o, px, py, px + std::max(1, (s.mine_ticks * cell) / 8), py + 1,
                {255, 255, 0});
    }
  } else {
    // Crafting interface: one cell per recipe, brighter when craftable.
    for (std::size_t i = 0; i < tree.recipes.size(); ++i) {
      const int gs = cfg.gui_size;
      const int c6 = gs / 6;
      const int col = static_cast<int>(i) % 5, row = static_cast<int>(i) / 5;
      const int x0 = gs / 12 + col * (c6 + gs / 64 + 1);
      const int y0 = gs / 4 + row * (c6 + gs / 8);
      Rgb c = item_color(tree.recipes[i].output);
      bool ok = true;
      for (const auto& [item, qty] : tree.recipes[i].ingredients)
        if (s.inventory[static_cast<int>(item)] < qty) ok = false;
      if (tree.recipes[i].station != Station::Hand && ok) {
        const Tile want = tree.recipes[i].station == Station::Table
                              ? Tile::Table : Tile::Furnace;
        bool near = false;
        for (int ddy = -1; ddy <= 1; ++ddy)
          for (int ddx = -1; ddx <= 1; ++ddx) {
            const int x = s.ax + ddx, y = s.ay + ddy;
            if (s.in_bounds(x, y) && s.tile(x, y) == want) near = true;
          }
        ok = near;
      }
      if (!ok) c = {static_cast<std::uint8_t>(c.r / 4),
                    static_cast<std::uint8_t>(c.g / 4),
                    static_cast<std::uint8_t>(c.b / 4)};
      const int px0 = static_cast<int>(x0 * gui_scale);
      const int py0 = static_cast<int>(y0 * gui_scale);
      const int px1 = static_cast<int>((x0 + c6) * gui_scale);
      const int py1 = static_cast<int>((y0 + c6) * gui_scale);
      if (ok)  // white border marks craftable
        fill_rect(o, px0 - 1, py0 - 1, px1 + 1, py1 + 1, {255, 255, 255});
      fill_rect(o, px0, py0, px1, py1, c);
    }
    // Cursor sprite: small cross.
    const int cx = static_cast<int>(s.cursor_x * gui_scale);
    const int cy = static_cast<int>(s.cursor_y * gui_scale);
    fill_rect(o, cx - 2, cy, cx + 3, cy + 1, {255, 255, 255});
    fill_rect(o, cx, cy - 2, cx + 1, cy + 3, {255, 255, 255});
  }

  if (overlays) {
    // Hotbar and health strip, always drawn last.
    const int oh = std::max(3, cfg.obs_size / 16);
    const int y0 = o.h - oh;
    fill_rect(o, 0, y0, o.w, o.h, {30, 30, 30});
    const auto slots = hotbar_slots(s);
    const int sw = o.w / 6;
    for (int i = 0; i < 3; ++i) {
      Rgb c = slots[static_cast<std::size_t>(i)]
          ? item_color(*slots[static_cast<std::size_t>(i)]) : Rgb{60, 60, 60};
      fill_rect(o, i * sw + 1, y0 + 1, (i + 1) * sw - 1, o.h - 1, c);
      if (i == s.hotbar_selected)
        fill_rect(o, i * sw + 1, o.h - 1, (i + 1) * sw - 1, o.h, {255, 255, 255});
    }
    // Health hearts (constant; death is instant respawn) + mode pixel.
    fill_rect(o, 3 * sw + 2, y0 + 1, 5 * sw, y0 + 2, {220, 40, 40});
    fill_rect(o, o.w - 3, y0 + 1, o.w - 1, o.h - 1,
              s.mode == Mode::Gui ? Rgb{240, 240, 240} : Rgb{80, 80, 200});
  }
  return o;
}

ItemStats stats(std::span<const Event> events) {
  ItemStats st;
  for (const auto& e : events) {
    if (e.kind == Event::Kind::Collect)
      st.collected[static_cast<int>(e.item)] += e.qty;
    else if (e.kind == Event::Kind::Craft)
      st.crafted[static_cast<int>(e.item)] += e.qty;
  }
  return st;
}

}  // namespace vpt::env
