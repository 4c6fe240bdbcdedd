#include "metaplan/executor.hpp"

#include <algorithm>
#include <cctype>
#include <cstdio>
#include <sstream>

#include "metaplan/random.hpp"

namespace metaplan {

namespace {

constexpr std::pair<FailureCategory, std::string_view> kCategoryNames[] = {
    {FailureCategory::TargetLocating, "TargetLocating"},
    {FailureCategory::ActionParsing, "ActionParsing"},
    {FailureCategory::TaskPlanning, "TaskPlanning"},
    {FailureCategory::CandidatePose, "CandidatePose"},
    {FailureCategory::Other, "Other"},
};

std::string fmt(const char* f, double a, double b, double c) {
  char buf[96];
  std::snprintf(buf, sizeof buf, f, a, b, c);
  return buf;
}

std::string pose_summary(const Pose6D& p) {
  const Quat& q = p.orientation;
  double angle = rad_to_deg(Quat::identity().angle_to(q));
  std::string s = fmt("position (%.3f, %.3f, %.3f)", p.position.x, p.position.y, p.position.z);
  Vec3 axis{q.x, q.y, q.z};
  if (angle > 1e-6) {
    Vec3 a = axis.normalized();
    if (q.w < 0) a = -a;
    s += fmt(", tilted %.1f deg about (%.3f, ", angle, a.x, a.y);
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.3f)", a.z);
    s += buf;
  } else {
    s += ", gripper down";
  }
  return s;
}

std::optional<long> first_integer(std::string_view s) {
  auto it = std::find_if(s.begin(), s.end(), [](unsigned char c) { return std::isdigit(c); });
  if (it == s.end()) return std::nullopt;
  auto end = std::find_if(it, s.end(), [](unsigned char c) { return !std::isdigit(c); });
  std::string digits(it, end);
  if (digits.size() > 9) return std::nullopt;
  return std::stol(digits);
}

const WorldObject* held_rigid(const WorldState& world) {
  if (!world.gripper.attached) return nullptr;
  const WorldObject* obj = world.find(*world.gripper.attached);
  return obj && obj->kind == ObjectKind::Rigid ? obj : nullptr;
}

}  // namespace

std::string_view to_string(FailureCategory c) {
  for (const auto& [cat, name] : kCategoryNames)
    if (cat == c) return name;
  return "?";
}

std::optional<FailureCategory> failure_category_from_string(std::string_view s) {
  for (const auto& [cat, name] : kCategoryNames)
    if (name == s) return cat;
  return std::nullopt;
}

Vec3 preposition_direction(Preposition p) {
  switch (p) {
    case Preposition::Above:
    case Preposition::On:
    case Preposition::Up: return {0, 0, 1};
    case Preposition::Into:
    case Preposition::Down: return {0, 0, -1};
    case Preposition::FrontOn:
    case Preposition::Backward: return {0, -1, 0};
    case Preposition::Behind:
    case Preposition::Forward: return {0, 1, 0};
    case Preposition::LeftOf: return {-1, 0, 0};
    case Preposition::RightOf: return {1, 0, 0};
  }
  return {};
}

OrientationHint parse_orientation_hint(std::string_view reply) {
  std::istringstream in{std::string(reply)};
  std::string word;
  OrientationHint hint;
  if (!(in >> word)) return hint;
  for (auto& c : word) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  if (word == "keep") {
    hint.kind = OrientationHint::Kind::Keep;
  } else if (word == "rotate") {
    double ax, ay, az, deg;
    if (in >> ax >> ay >> az >> deg && Vec3{ax, ay, az}.norm() > 0) {
      hint.kind = OrientationHint::Kind::Rotate;
      hint.rotation = Quat::from_axis_angle({ax, ay, az}, deg_to_rad(deg));
    }
  } else if (word == "orientation") {
    double w, x, y, z;
    if (in >> w >> x >> y >> z) {
      Quat q{w, x, y, z};
      if (q.norm() > 0) {
        hint.kind = OrientationHint::Kind::Absolute;
        hint.rotation = q.normalized();
      }
    }
  }
  return hint;
}

Pose6D resolve_init_pose(const LocationDescription& location, const WorldState& world, const Pose6D& last,
                         ConversationModel& model, const ExecutorConfig& config, std::optional<int> action_index) {
  const WorldObject* target = nullptr;
  if (location.object_ref) {
    target = world.find(*location.object_ref);
    if (!target) throw UnknownObject(*location.object_ref);
  }

  std::ostringstream prompt;
  prompt << "Locate the target \"" << to_string(location.preposition);
  if (location.object_ref) prompt << " " << *location.object_ref;
  prompt << "\". Current gripper " << pose_summary(last) << ".\n";
  if (target) prompt << "Target object " << target->name << " at " << pose_summary(target->pose) << ".\n";
  prompt << "Reply with an orientation hint: default, keep, rotate <ax> <ay> <az> <degrees>, or orientation <w> "
            "<x> <y> <z>.";
  std::string reply = model.reply({Message{Role::User, prompt.str(), std::nullopt}}, ModelQuery{"locate", action_index});
  OrientationHint hint = parse_orientation_hint(reply);

  const WorldObject* held = held_rigid(world);
  const Vec3 u = preposition_direction(location.preposition);

  Quat orientation;
  if (!target || held) {
    orientation = last.orientation;
  } else {
    orientation = Quat::identity();
  }
  switch (hint.kind) {
    case OrientationHint::Kind::Default: break;
    case OrientationHint::Kind::Keep: orientation = last.orientation; break;
    case OrientationHint::Kind::Rotate: orientation = (hint.rotation * last.orientation).normalized(); break;
    case OrientationHint::Kind::Absolute: orientation = hint.rotation; break;
  }

  if (!target) return {last.position + u * config.step, orientation};

  // When something is held, place the held object rather than the gripper point.
  Vec3 held_offset, held_half;
  if (held && held != target) {
    const Pose6D& grasp = world.gripper.grasp;
    held_offset = orientation.rotate(grasp.position);
    held_half = rotated_half_extents((orientation * grasp.orientation).normalized(), held->half_extents);
  }

  Aabb box = target->aabb();
  Vec3 anchor;
  if (location.preposition == Preposition::Into) {
    double floor = target->kind == ObjectKind::Container ? target->interior_floor() : box.bottom();
    // Contents already inside raise the resting level.
    for (const auto& [name, obj] : world.objects) {
      if (&obj == target || &obj == held || !contains_point(box, obj.pose.position, 0.0)) continue;
      floor = std::max(floor, obj.aabb().top());
    }
    if (held && held != target) {
      anchor = {box.center.x, box.center.y, floor + held_half.z + config.standoff};
    } else {
      anchor = {box.center.x, box.center.y, 0.5 * (floor + box.top())};
    }
  } else {
    double gap = location.preposition == Preposition::Above ? config.clearance : config.standoff;
    Vec3 face = box.center + u.cwise_mul(box.half);
    anchor = face + u * (gap + u.cwise_abs().dot(held_half));
  }
  return {anchor - held_offset, orientation};
}

CandidateSet sample_candidates(const Pose6D& init, MotionKind motion, int n, std::uint64_t seed,
                               const ExecutorConfig& config) {
  if (n < 1) throw std::invalid_argument("candidate count must be at least 1");
  CandidateSet set;
  set.base = init;
  set.seed = seed;
  set.mode = motion == MotionKind::Move ? CandidateMode::TranslationOnly : CandidateMode::RotationOnly;
  set.candidates.reserve(static_cast<std::size_t>(n));
  set.candidates.push_back(init);
  Rng rng(seed);
  const double alpha = deg_to_rad(config.max_rotation_deg);
  for (int i = 1; i < n; ++i) {
    Pose6D c = init;
    if (set.mode == CandidateMode::TranslationOnly) {
      Vec3 v;
      do {
        v = {rng.uniform(-1, 1), rng.uniform(-1, 1), rng.uniform(-1, 1)};
      } while (v.dot(v) > 1.0);
      c.position = init.position + v * config.max_translation;
    } else {
      double z = rng.uniform(-1, 1);
      double phi = rng.uniform(0, 2 * kPi);
      double r = std::sqrt(std::max(0.0, 1 - z * z));
      Vec3 axis{r * std::cos(phi), r * std::sin(phi), z};
      double angle = rng.uniform(-alpha, alpha);
      c.orientation = (Quat::from_axis_angle(axis, angle) * init.orientation).normalized();
    }
    set.candidates.push_back(c);
  }
  return set;
}

Selection select_target(const CandidateSet& set, const std::string& goal_text, const SceneGraph& scene,
                        ConversationModel& model, std::optional<int> action_index) {
  if (set.candidates.empty()) throw std::invalid_argument("empty candidate set");
  if (set.candidates.size() == 1) return {0, set.candidates[0], false};
  std::ostringstream prompt;
  prompt << "Goal: " << goal_text << "\nCandidate gripper poses:\n";
  for (std::size_t i = 0; i < set.candidates.size(); ++i)
    prompt << i << ": " << pose_summary(set.candidates[i]) << "\n";
  prompt << "Reply with the number of the candidate that best achieves the goal.";
  Message m{Role::User, prompt.str(), scene};
  std::string reply = model.reply({m}, ModelQuery{"select", action_index});
  auto idx = first_integer(reply);
  if (!idx || *idx < 0 || static_cast<std::size_t>(*idx) >= set.candidates.size())
    return {0, set.candidates[0], true};
  auto i = static_cast<std::size_t>(*idx);
  return {i, set.candidates[i], false};
}

StepOutcome execute_action(const MetaAction& action, WorldState& world, ConversationModel& model,
                           std::uint64_t seed, int action_index, const ExecutorConfig& config,
                           const SimConfig& sim) {
  StepOutcome out;
  out.action_line = serialize(action);
  Pose6D init;
  try {
    init = resolve_init_pose(action.location, world, world.gripper.pose, model, config, action_index);
  } catch (const UnknownObject& e) {
    out.category = FailureCategory::TargetLocating;
    out.message = e.what();
    return out;
  }
  auto set = sample_candidates(init, action.motion, config.candidates,
                               derive_seed(seed, static_cast<std::uint64_t>(action_index)), config);
  auto selection = select_target(set, out.action_line, scene_graph_of(world), model, action_index);
  out.target = selection.pose;
  out.candidate_index = selection.index;

  MoveResult move = move_gripper(world, selection.pose, sim);
  out.reached = move.reached;
  if (!move.reached) {
    out.category = FailureCategory::CandidatePose;
    out.message = "motion blocked by " + move.blocked_by.value_or("obstacle");
    return out;
  }
  out.gripper = set_gripper(world, gripper_command(action.pre, action.post), sim);
  return out;
}

std::vector<StepOutcome> execute_plan(const Plan& plan, WorldState& world, ConversationModel& model,
                                      std::uint64_t seed, const ExecutorConfig& config, const SimConfig& sim) {
  std::vector<StepOutcome> steps;
  for (std::size_t i = 0; i < plan.actions.size(); ++i) {
    steps.push_back(execute_action(plan.actions[i], world, model, seed, static_cast<int>(i), config, sim));
    if (steps.back().category) break;
  }
  return steps;
}

}  // namespace metaplan
