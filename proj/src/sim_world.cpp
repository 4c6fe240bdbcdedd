#include "metaplan/sim_world.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "metaplan/json_io.hpp"
#include "metaplan/random.hpp"

namespace metaplan {

namespace {

constexpr std::pair<ObjectKind, std::string_view> kKindNames[] = {
    {ObjectKind::Rigid, "rigid"},
    {ObjectKind::Container, "container"},
    {ObjectKind::PrismaticJoint, "prismatic_joint"},
    {ObjectKind::Button, "button"},
};

constexpr std::pair<TaskKind, std::string_view> kTaskNames[] = {
    {TaskKind::InsertPen, "insert_pen"},
    {TaskKind::CleanFloor, "clean_floor"},
    {TaskKind::OpenDrawer, "open_drawer"},
    {TaskKind::MakeCoffee, "make_coffee"},
};

bool in_cavity_footprint(const WorldObject& container, const Aabb& box, double eps) {
  Aabb c = container.aabb();
  Vec3 ih = container.interior_half();
  return std::abs(box.center.x - c.center.x) + box.half.x <= ih.x + eps &&
         std::abs(box.center.y - c.center.y) + box.half.y <= ih.y + eps;
}

bool point_collides(const WorldObject& obj, const Vec3& p, double eps) {
  Aabb box = obj.aabb();
  if (!contains_point(box, p, eps)) return false;
  if (obj.kind == ObjectKind::Container) {
    Vec3 ih = obj.interior_half();
    bool cavity = std::abs(p.x - box.center.x) < ih.x && std::abs(p.y - box.center.y) < ih.y &&
                  p.z > obj.interior_floor();
    return !cavity;
  }
  return true;
}

bool box_collides(const WorldObject& obj, const Aabb& b, double eps) {
  if (!overlaps(obj.aabb(), b, eps)) return false;
  if (obj.kind == ObjectKind::Container && in_cavity_footprint(obj, b, eps) &&
      b.bottom() >= obj.interior_floor() - eps)
    return false;
  return true;
}

Pose6D compose(const Pose6D& parent, const Pose6D& child) {
  return {parent.position + parent.orientation.rotate(child.position),
          (parent.orientation * child.orientation).normalized()};
}

Pose6D relative(const Pose6D& parent, const Pose6D& world) {
  Quat inv = parent.orientation.conjugate();
  return {inv.rotate(world.position - parent.position), (inv * world.orientation).normalized()};
}

/// Collision test of a gripper sample: returns the blocker's name.
std::optional<std::string> blocker(const WorldState& world, const Vec3& point, const std::optional<Aabb>& held,
                                   const SimConfig& cfg) {
  const double eps = cfg.contact_eps;
  if (point.z < -eps) return "ground";
  if (held && held->bottom() < -eps) return "ground";
  for (const auto& [name, obj] : world.objects) {
    if (world.gripper.attached && *world.gripper.attached == name) continue;
    if (point_collides(obj, point, eps)) return name;
    if (held && box_collides(obj, *held, eps)) return name;
  }
  return std::nullopt;
}

MoveResult move_with_joint(WorldState& world, WorldObject& handle, const Pose6D& target, const SimConfig& cfg) {
  const Vec3 pull = -handle.axis;
  const Vec3 start = world.gripper.pose.position;
  const double ext0 = handle.joint_extension;
  const double wanted = (target.position - start).dot(pull);
  const double dist = std::abs(wanted);
  const int steps = std::max(1, static_cast<int>(std::ceil(dist / cfg.sweep_step)));
  MoveResult result{true, std::nullopt};
  for (int i = 1; i <= steps; ++i) {
    double delta = wanted * (static_cast<double>(i) / steps);
    double ext = ext0 + delta;
    if (ext < -cfg.contact_eps || ext > handle.max_extension + cfg.contact_eps) {
      result = {false, std::string("joint limit")};
      break;
    }
    ext = std::clamp(ext, 0.0, handle.max_extension);
    Vec3 point = start + pull * (ext - ext0);
    if (auto b = blocker(world, point, std::nullopt, cfg)) {
      result = {false, b};
      break;
    }
    handle.joint_extension = ext;
    handle.pose.position = handle.closed_position + pull * ext;
    world.gripper.pose.position = point;
  }
  return result;
}

double settle_height(const WorldState& world, const std::string& self, const Aabb& box, const SimConfig& cfg) {
  const double eps = cfg.contact_eps;
  double support = 0.0;
  for (const auto& [name, obj] : world.objects) {
    if (name == self) continue;
    Aabb ob = obj.aabb();
    double level;
    if (obj.kind == ObjectKind::Container && in_cavity_footprint(obj, box, eps) &&
        box.bottom() >= obj.interior_floor() - eps) {
      level = obj.interior_floor();
    } else if (footprint_overlaps(box, ob, eps)) {
      level = ob.top();
    } else {
      continue;
    }
    if (level <= box.bottom() + eps) support = std::max(support, level);
  }
  return support;
}

Vec3 vec_from_json(const json& j) { return j.get<Vec3>(); }

}  // namespace

SimConfig load_sim_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open sim config " + path.string());
  json j = json::parse(in);
  SimConfig c;
  c.grasp_radius = j.value("grasp_radius", c.grasp_radius);
  c.sweep_step = j.value("sweep_step", c.sweep_step);
  c.sweep_angle_step_deg = j.value("sweep_angle_step_deg", c.sweep_angle_step_deg);
  c.perturbation = j.value("perturbation", c.perturbation);
  c.contact_eps = j.value("contact_eps", c.contact_eps);
  return c;
}

std::string_view to_string(ObjectKind k) {
  for (const auto& [kind, name] : kKindNames)
    if (kind == k) return name;
  return "?";
}

std::optional<ObjectKind> object_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kKindNames)
    if (name == s) return kind;
  return std::nullopt;
}

std::string_view to_string(TaskKind k) {
  for (const auto& [kind, name] : kTaskNames)
    if (kind == k) return name;
  return "?";
}

std::optional<TaskKind> task_kind_from_string(std::string_view s) {
  for (const auto& [kind, name] : kTaskNames)
    if (name == s) return kind;
  return std::nullopt;
}

const WorldObject* WorldState::find(std::string_view name) const {
  auto it = objects.find(std::string(name));
  return it == objects.end() ? nullptr : &it->second;
}

WorldObject* WorldState::find(std::string_view name) {
  auto it = objects.find(std::string(name));
  return it == objects.end() ? nullptr : &it->second;
}

TaskSpec parse_fixture(std::string_view json_text) {
  json j = json::parse(json_text);
  if (j.value("version", 0) != 1) throw std::runtime_error("unsupported fixture version");
  TaskSpec t;
  t.name = j.at("task").get<std::string>();
  auto kind = task_kind_from_string(t.name);
  if (!kind) throw std::runtime_error("unknown task '" + t.name + "'");
  t.kind = *kind;
  t.instruction = j.at("instruction").get<std::string>();

  for (const auto& o : j.at("objects")) {
    WorldObject obj;
    obj.name = o.at("name").get<std::string>();
    obj.category = o.value("category", obj.name);
    auto k = object_kind_from_string(o.value("kind", std::string("rigid")));
    if (!k) throw std::runtime_error("object '" + obj.name + "' has unknown kind");
    obj.kind = *k;
    obj.pose.position = vec_from_json(o.at("position"));
    if (o.contains("orientation")) obj.pose.orientation = o.at("orientation").get<Quat>().normalized();
    obj.half_extents = vec_from_json(o.at("half_extents"));
    obj.fixed = o.value("fixed", false);
    obj.wall = o.value("wall", obj.wall);
    obj.floor = o.value("floor", obj.floor);
    if (obj.kind == ObjectKind::PrismaticJoint) {
      obj.axis = vec_from_json(o.at("axis")).normalized();
      obj.max_extension = o.at("max_extension").get<double>();
      obj.joint_extension = o.value("extension", 0.0);
      obj.closed_position = obj.pose.position;
      obj.pose.position = obj.closed_position - obj.axis * obj.joint_extension;
    }
    obj.pressed = o.value("pressed", false);
    if (!t.initial_world.objects.emplace(obj.name, obj).second)
      throw std::runtime_error("duplicate object '" + obj.name + "'");
  }

  const json& g = j.at("gripper");
  t.initial_world.gripper.pose.position = vec_from_json(g.at("position"));
  if (g.contains("orientation")) t.initial_world.gripper.pose.orientation = g.at("orientation").get<Quat>();
  auto state = gripper_state_from_word(g.value("state", std::string("open")));
  if (!state) throw std::runtime_error("bad gripper state");
  t.initial_world.gripper.state = *state;

  const json& s = j.at("success");
  t.success.object = s.value("object", std::string{});
  t.success.objects = s.value("objects", std::vector<std::string>{});
  t.success.container = s.value("container", std::string{});
  t.success.joint = s.value("joint", std::string{});
  t.success.threshold = s.value("threshold", t.success.threshold);
  t.success.button = s.value("button", std::string{});
  if (s.contains("region_min")) t.success.region_min = vec_from_json(s.at("region_min"));
  if (s.contains("region_max")) t.success.region_max = vec_from_json(s.at("region_max"));

  auto require = [&](const std::string& name) {
    if (!name.empty() && !t.initial_world.find(name))
      throw std::runtime_error("success predicate names unknown object '" + name + "'");
  };
  require(t.success.object);
  require(t.success.container);
  require(t.success.joint);
  require(t.success.button);
  for (const auto& n : t.success.objects) require(n);
  return t;
}

TaskSpec load_fixture(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open fixture " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  try {
    return parse_fixture(ss.str());
  } catch (const std::exception& e) {
    throw std::runtime_error(path.string() + ": " + e.what());
  }
}

MoveResult move_gripper(WorldState& world, const Pose6D& target, const SimConfig& config) {
  Gripper& g = world.gripper;
  WorldObject* held = g.attached ? world.find(*g.attached) : nullptr;
  if (held && held->kind == ObjectKind::PrismaticJoint) return move_with_joint(world, *held, target, config);

  const Pose6D start = g.pose;
  const double dist = (target.position - start.position).norm();
  const double angle = start.orientation.angle_to(target.orientation);
  int steps = static_cast<int>(std::ceil(dist / config.sweep_step));
  steps = std::max(steps, static_cast<int>(std::ceil(angle / deg_to_rad(config.sweep_angle_step_deg))));
  steps = std::max(steps, 1);

  for (int i = 1; i <= steps; ++i) {
    Pose6D sample = target;
    if (i < steps) {
      double t = static_cast<double>(i) / steps;
      sample.position = start.position + (target.position - start.position) * t;
      sample.orientation = slerp(start.orientation, target.orientation, t);
    }
    std::optional<Aabb> held_box;
    Pose6D held_pose;
    if (held) {
      held_pose = compose(sample, g.grasp);
      held_box = Aabb{held_pose.position, rotated_half_extents(held_pose.orientation, held->half_extents)};
    }
    if (auto b = blocker(world, sample.position, held_box, config)) return {false, b};
    g.pose = sample;
    if (held) held->pose = held_pose;
  }
  return {true, std::nullopt};
}

GripperResult set_gripper(WorldState& world, GripperCommand command, const SimConfig& config) {
  GripperResult r;
  r.command = command;
  Gripper& g = world.gripper;
  const Vec3 p = g.pose.position;

  if (command == GripperCommand::CloseGripper) {
    g.state = GripperState::Close;
    if (!g.attached) {
      const WorldObject* best = nullptr;
      double best_d = 0;
      for (const auto& [name, obj] : world.objects) {
        if (obj.kind != ObjectKind::Rigid && obj.kind != ObjectKind::PrismaticJoint) continue;
        if (obj.kind == ObjectKind::Rigid && obj.fixed) continue;
        double d = distance_to_box(obj.aabb(), p);
        if (d <= config.grasp_radius && (!best || d < best_d)) {
          best = &obj;
          best_d = d;
        }
      }
      if (best) {
        g.attached = best->name;
        g.grasp = relative(g.pose, best->pose);
        r.attached = best->name;
      }
    }
    WorldObject* button = nullptr;
    double button_d = 0;
    for (auto& [name, obj] : world.objects) {
      if (obj.kind != ObjectKind::Button) continue;
      double d = distance_to_box(obj.aabb(), p);
      if (d <= config.grasp_radius && (!button || d < button_d)) {
        button = &obj;
        button_d = d;
      }
    }
    if (button) {
      button->pressed = true;
      r.pressed = button->name;
    }
  } else if (command == GripperCommand::OpenGripper) {
    g.state = GripperState::Open;
    if (g.attached) {
      WorldObject* obj = world.find(*g.attached);
      r.detached = *g.attached;
      g.attached.reset();
      g.grasp = {};
      if (obj && obj->kind == ObjectKind::Rigid) {
        Aabb box = obj->aabb();
        double support = settle_height(world, obj->name, box, config);
        obj->pose.position.z += support - box.bottom();
      }
    }
  }
  return r;
}

bool check_success(const WorldState& world, const TaskSpec& task) {
  const SuccessSpec& s = task.success;
  switch (task.kind) {
    case TaskKind::InsertPen: {
      const WorldObject* pen = world.find(s.object);
      const WorldObject* holder = world.find(s.container);
      if (!pen || !holder || world.gripper.attached == s.object) return false;
      Aabb h = holder->aabb();
      Vec3 ih = holder->interior_half();
      double radius = std::min(ih.x, ih.y);
      Vec3 c = pen->pose.position;
      double dx = c.x - h.center.x, dy = c.y - h.center.y;
      return std::sqrt(dx * dx + dy * dy) <= radius && c.z >= holder->interior_floor() && c.z <= h.top();
    }
    case TaskKind::CleanFloor: {
      const WorldObject* bin = world.find(s.container);
      if (!bin || s.objects.empty()) return false;
      Aabb b = bin->aabb();
      for (const auto& name : s.objects) {
        const WorldObject* o = world.find(name);
        if (!o || world.gripper.attached == name) return false;
        Vec3 d = (o->pose.position - b.center).cwise_abs();
        if (d.x > b.half.x || d.y > b.half.y || d.z > b.half.z) return false;
      }
      return true;
    }
    case TaskKind::OpenDrawer: {
      const WorldObject* j = world.find(s.joint);
      return j && j->joint_extension >= s.threshold;
    }
    case TaskKind::MakeCoffee: {
      const WorldObject* button = world.find(s.button);
      const WorldObject* mug = world.find(s.object);
      if (!button || !mug || !button->pressed || world.gripper.attached == s.object) return false;
      Vec3 c = mug->pose.position;
      return c.x >= s.region_min.x && c.x <= s.region_max.x && c.y >= s.region_min.y && c.y <= s.region_max.y;
    }
  }
  return false;
}

WorldState perturb(const WorldState& world, std::uint64_t seed, const SimConfig& config) {
  WorldState out = world;
  out.rng_seed = seed;
  Rng rng(seed);
  for (auto& [name, obj] : out.objects) {
    if (obj.fixed) continue;
    Vec3 shift{rng.uniform(-config.perturbation, config.perturbation),
               rng.uniform(-config.perturbation, config.perturbation), 0.0};
    obj.pose.position += shift;
    if (obj.kind == ObjectKind::PrismaticJoint) obj.closed_position += shift;
  }
  return out;
}

SceneGraph scene_graph_of(const WorldState& world) {
  SceneGraph g;
  for (const auto& [name, obj] : world.objects) g.nodes.push_back({name, obj.category, obj.pose});
  for (const auto& [a_name, a] : world.objects) {
    Aabb ab = a.aabb();
    for (const auto& [b_name, b] : world.objects) {
      if (a_name == b_name) continue;
      Aabb bb = b.aabb();
      if (b.kind == ObjectKind::Container && contains_point(bb, a.pose.position, 0.0)) {
        g.edges.push_back({a_name, Relation::In, b_name});
      } else if (footprint_overlaps(ab, bb) && std::abs(ab.bottom() - bb.top()) < 1e-6) {
        g.edges.push_back({a_name, Relation::On, b_name});
      }
    }
  }
  return g;
}

std::vector<std::pair<std::string, std::string>> interpenetrations(const WorldState& world) {
  std::vector<std::pair<std::string, std::string>> out;
  for (auto a = world.objects.begin(); a != world.objects.end(); ++a) {
    for (auto b = std::next(a); b != world.objects.end(); ++b) {
      Aabb ab = a->second.aabb(), bb = b->second.aabb();
      if (!overlaps(ab, bb, 1e-7)) continue;
      bool ok = (b->second.kind == ObjectKind::Container && !box_collides(b->second, ab, 1e-7)) ||
                (a->second.kind == ObjectKind::Container && !box_collides(a->second, bb, 1e-7));
      if (!ok) out.emplace_back(a->first, b->first);
    }
  }
  return out;
}

std::string debug_dump(const WorldState& world) {
  std::string out = "# name kind min_x min_y min_z max_x max_y max_z\n";
  char buf[256];
  for (const auto& [name, obj] : world.objects) {
    Aabb b = obj.aabb();
    Vec3 lo = b.min(), hi = b.max();
    std::snprintf(buf, sizeof buf, "\"%s\" %s %.4f %.4f %.4f %.4f %.4f %.4f\n", name.c_str(),
                  std::string(to_string(obj.kind)).c_str(), lo.x, lo.y, lo.z, hi.x, hi.y, hi.z);
    out += buf;
  }
  const Vec3& p = world.gripper.pose.position;
  std::snprintf(buf, sizeof buf, "\"gripper\" point %.4f %.4f %.4f %.4f %.4f %.4f\n", p.x, p.y, p.z, p.x, p.y, p.z);
  out += buf;
  return out;
}

}  // namespace metaplan
