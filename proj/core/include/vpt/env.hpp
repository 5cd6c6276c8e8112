#pragma once

#include <array>
#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "vpt/action_space.hpp"

namespace vpt::env {

enum class Tile : std::uint8_t {
  Grass, Tree, Dirt, Stone, Coal, Iron, Diamond, Lava,
  Table, Furnace, Torch, Block,
};

enum class Item : std::uint8_t {
  Log, Planks, Stick, CraftingTable, WoodenPickaxe, Cobblestone, StonePickaxe,
  Furnace, Coal, Torch, IronOre, IronIngot, IronPickaxe, Diamond,
  DiamondPickaxe, Count,
};
constexpr int kItemCount = static_cast<int>(Item::Count);
const char* item_name(Item i);
std::optional<Item> item_from_name(std::string_view name);

enum class Station : std::uint8_t { Hand, Table, Furnace };

struct Recipe {
  Item output;
  int output_qty;
  std::vector<std::pair<Item, int>> ingredients;
  Station station;
};

struct MiningRule {
  Item yield;
  int tool_tier;  // 0 = hand, 1 = wooden, 2 = stone, 3 = iron pickaxe
};

struct TechTree {
  std::vector<Recipe> recipes;          // fixed order; defines GUI layout
  std::map<Tile, MiningRule> mining;
  static TechTree standard();
};

int pickaxe_tier(Item held);  // 0 for non-pickaxe items

struct EnvConfig {
  int grid = 16;
  int obs_size = 64;
  int ticks_to_break = 8;
  int episode_len = 2000;
  int gui_size = 64;  // cursor coordinate space, independent of obs_size
  std::string serialize() const;
  static EnvConfig parse(std::string_view text);
};

struct Event {
  enum class Kind : std::uint8_t { Collect, Craft, Place, Death };
  int step = 0;
  Kind kind = Kind::Collect;
  Item item = Item::Log;
  int qty = 0;
  std::string to_record() const;
  static Event from_record(std::string_view line);
};

struct Observation {
  int h = 0, w = 0;
  std::vector<std::uint8_t> rgb;  // h*w*3
  bool operator==(const Observation&) const = default;
};

enum class Mode : std::uint8_t { World, Gui };

struct WorldState {
  std::uint64_t seed = 0;
  int grid = 0;
  std::vector<Tile> tiles;  // grid*grid, row major
  int ax = 0, ay = 0;       // agent cell
  double heading = 0.0;     // degrees [0,360), 0 = north, clockwise
  bool pitch_down = false;
  double pitch_accum = 0.0;
  std::array<int, kItemCount> inventory{};
  int hotbar_selected = 0;  // 0..2
  Mode mode = Mode::World;
  double cursor_x = 0, cursor_y = 0;  // gui space
  int mine_x = -1, mine_y = -1, mine_ticks = 0;
  bool prev_attack = false, prev_use = false, prev_inventory = false;
  int spawn_x = 0, spawn_y = 0;
  int step = 0;
  int deaths = 0;
  std::map<int, std::array<int, kItemCount>> ground;  // cell index -> drops

  Tile tile(int x, int y) const { return tiles[static_cast<std::size_t>(y) * grid + x]; }
  void set_tile(int x, int y, Tile t) { tiles[static_cast<std::size_t>(y) * grid + x] = t; }
  bool in_bounds(int x, int y) const { return x >= 0 && x < grid && y >= 0 && y < grid; }
};

// The three hotbar slots are a deterministic function of the inventory:
// slot 0 = best pickaxe owned, slots 1-2 = first placeable items owned.
std::array<std::optional<Item>, 3> hotbar_slots(const WorldState& s);
std::optional<Item> held_item(const WorldState& s);

struct StepResult {
  Observation obs;
  std::vector<Event> events;
};

class MiniCrafter {
 public:
  MiniCrafter(EnvConfig cfg, action::ActionSpaceConfig acfg,
              TechTree tree = TechTree::standard());

  Observation reset(std::uint64_t seed);
  StepResult step(const action::FactoredAction& a);

  const WorldState& state() const { return state_; }
  WorldState& mutable_state() { return state_; }
  const EnvConfig& config() const { return cfg_; }
  const TechTree& tech_tree() const { return tree_; }
  const action::ActionSpaceConfig& action_config() const { return acfg_; }

  Observation render() const { return render(state_, cfg_, tree_, true); }
  static Observation render(const WorldState& s, const EnvConfig& cfg,
                            const TechTree& tree, bool overlays);

  // True when the recipe's ingredients are present and its station (placed
  // table/furnace) is within 1 cell of the agent.
  bool craftable(const Recipe& r) const;
  // GUI-space bounding box of recipe cell i: {x0, y0, x1, y1}.
  std::array<int, 4> recipe_cell(int index) const;
  // Facing target cell given heading and pitch.
  std::pair<int, int> facing_cell() const;

 private:
  EnvConfig cfg_;
  action::ActionSpaceConfig acfg_;
  TechTree tree_;
  WorldState state_;
  int move_group_ = -1, strafe_group_ = -1, hotbar_group_ = -1,
      attack_group_ = -1, use_group_ = -1;
  void generate_world(std::uint64_t seed);
  void pick_up_ground(std::vector<Event>& events);
};

struct ItemStats {
  std::array<int, kItemCount> collected{};
  std::array<int, kItemCount> crafted{};
};
ItemStats stats(std::span<const Event> events);

// Direction index 0..7 (N, NE, E, SE, S, SW, W, NW) nearest to heading.
int heading_dir(double heading);
extern const std::array<std::pair<int, int>, 8> kDirs;

bool tile_walkable(Tile t);

}  // namespace vpt::env
