#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "metaplan/geometry.hpp"
#include "metaplan/meta_action.hpp"
#include "metaplan/scene_graph.hpp"

namespace metaplan {

/// Fixture constants. Defaults match data/sim_config.json.
struct SimConfig {
  double grasp_radius = 0.03;          // m
  double sweep_step = 0.005;           // m per collision sample
  double sweep_angle_step_deg = 2.0;   // deg per collision sample while rotating
  double perturbation = 0.02;          // +/- m applied per trial to movable objects
  double contact_eps = 1e-9;
};

SimConfig load_sim_config(const std::filesystem::path& path);

enum class ObjectKind { Rigid, Container, PrismaticJoint, Button };

std::string_view to_string(ObjectKind k);
std::optional<ObjectKind> object_kind_from_string(std::string_view s);

struct WorldObject {
  std::string name;
  std::string category;
  ObjectKind kind = ObjectKind::Rigid;
  Pose6D pose;
  Vec3 half_extents;  // object frame
  bool fixed = false; // not perturbed per trial; a fixed rigid body cannot be grasped

  // Container
  double wall = 0.005;
  double floor = 0.005;

  // PrismaticJoint: `axis` is the unit closing direction; the handle sits at
  // closed_position - axis * joint_extension.
  Vec3 axis{0, 1, 0};
  double max_extension = 0.0;
  Vec3 closed_position;
  double joint_extension = 0.0;

  // Button
  bool pressed = false;

  Aabb aabb() const { return {pose.position, rotated_half_extents(pose.orientation, half_extents)}; }

  /// Open cavity of a container: xy half extents and floor height.
  Vec3 interior_half() const { return {half_extents.x - wall, half_extents.y - wall, half_extents.z}; }
  double interior_floor() const { return aabb().bottom() + floor; }

  bool operator==(const WorldObject&) const = default;
};

struct Gripper {
  Pose6D pose;
  GripperState state = GripperState::Open;
  std::optional<std::string> attached;
  Pose6D grasp;  // attached object's pose in the gripper frame

  bool operator==(const Gripper&) const = default;
};

struct WorldState {
  std::map<std::string, WorldObject> objects;
  Gripper gripper;
  std::uint64_t rng_seed = 0;

  bool operator==(const WorldState&) const = default;

  const WorldObject* find(std::string_view name) const;
  WorldObject* find(std::string_view name);
};

enum class TaskKind { InsertPen, CleanFloor, OpenDrawer, MakeCoffee };

std::string_view to_string(TaskKind k);
std::optional<TaskKind> task_kind_from_string(std::string_view s);

struct SuccessSpec {
  std::string object;                // insert_pen: pen; make_coffee: mug
  std::vector<std::string> objects;  // clean_floor: trash items
  std::string container;             // insert_pen: holder; clean_floor: bin
  std::string joint;                 // open_drawer
  double threshold = 0.12;           // open_drawer: minimum extension (m)
  std::string button;                // make_coffee
  Vec3 region_min, region_max;       // make_coffee: pad footprint (xy used)
};

struct TaskSpec {
  TaskKind kind = TaskKind::InsertPen;
  std::string name;
  std::string instruction;
  WorldState initial_world;
  SuccessSpec success;
};

/// Reads a declarative scene file (JSON). Throws std::runtime_error.
TaskSpec load_fixture(const std::filesystem::path& path);
TaskSpec parse_fixture(std::string_view json_text);

struct MoveResult {
  bool reached = false;
  std::optional<std::string> blocked_by;  // "ground", an object name, or "joint limit"
};

/// Straight-line sweep at fixed step with collision checks; stops at the last
/// free sample when blocked. A held joint handle constrains motion to its axis.
MoveResult move_gripper(WorldState& world, const Pose6D& target, const SimConfig& config = {});

struct GripperResult {
  GripperCommand command = GripperCommand::Hold;
  std::optional<std::string> attached;
  std::optional<std::string> detached;
  std::optional<std::string> pressed;
};

GripperResult set_gripper(WorldState& world, GripperCommand command, const SimConfig& config = {});

bool check_success(const WorldState& world, const TaskSpec& task);

/// Copies the world with every non-fixed object shifted in x and y by up to
/// +/- config.perturbation, deterministically from `seed`.
WorldState perturb(const WorldState& world, std::uint64_t seed, const SimConfig& config = {});

/// Nodes from objects; "in" and "on" edges from resting contacts.
SceneGraph scene_graph_of(const WorldState& world);

/// Pairs of objects whose boxes interpenetrate (containers count only walls).
std::vector<std::pair<std::string, std::string>> interpenetrations(const WorldState& world);

/// One line per box: name kind min.xyz max.xyz, plus the gripper point;
/// suitable for gnuplot's `with boxes`-style plotting scripts.
std::string debug_dump(const WorldState& world);

}  // namespace metaplan
