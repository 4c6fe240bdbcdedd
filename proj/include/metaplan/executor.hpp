#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaplan/conversation.hpp"
#include "metaplan/geometry.hpp"
#include "metaplan/meta_action.hpp"
#include "metaplan/scene_graph.hpp"
#include "metaplan/sim_world.hpp"

namespace metaplan {

/// Failure taxonomy for trials and steps.
enum class FailureCategory { TargetLocating, ActionParsing, TaskPlanning, CandidatePose, Other };

std::string_view to_string(FailureCategory c);
std::optional<FailureCategory> failure_category_from_string(std::string_view s);
inline constexpr FailureCategory kAllFailureCategories[] = {
    FailureCategory::TargetLocating, FailureCategory::ActionParsing, FailureCategory::TaskPlanning,
    FailureCategory::CandidatePose, FailureCategory::Other};

struct ExecutorConfig {
  int candidates = 8;                 // n
  double max_translation = 0.05;      // r_max, m
  double max_rotation_deg = 30.0;     // alpha_max
  double clearance = 0.10;            // "above" gap over the object's top, m
  double standoff = 0.02;             // contact-range gap for other prepositions, m
  double step = 0.10;                 // directional nudge for preposition-only targets, m
};

class UnknownObject : public std::runtime_error {
 public:
  explicit UnknownObject(const std::string& name)
      : std::runtime_error("unknown object '" + name + "'"), name_(name) {}
  const std::string& name() const { return name_; }

 private:
  std::string name_;
};

/// Unit direction associated with a preposition (+y is away from the robot).
Vec3 preposition_direction(Preposition p);

/// Orientation override from a "locate" reply: "default", "keep",
/// "rotate <ax> <ay> <az> <deg>" or "orientation <w> <x> <y> <z>".
struct OrientationHint {
  enum class Kind { Default, Keep, Rotate, Absolute } kind = Kind::Default;
  Quat rotation;
};
OrientationHint parse_orientation_hint(std::string_view reply);

/// Initial pose for a location description. Throws UnknownObject.
Pose6D resolve_init_pose(const LocationDescription& location, const WorldState& world, const Pose6D& last,
                         ConversationModel& model, const ExecutorConfig& config = {},
                         std::optional<int> action_index = std::nullopt);

enum class CandidateMode { TranslationOnly, RotationOnly };

struct CandidateSet {
  Pose6D base;
  std::vector<Pose6D> candidates;
  CandidateMode mode = CandidateMode::TranslationOnly;
  std::uint64_t seed = 0;
};

/// Candidate 0 is the base itself; the rest are uniform offsets (ball of
/// radius r_max for Move, axis on the sphere and angle in [-alpha, alpha] for
/// Rotate). Deterministic in `seed`.
CandidateSet sample_candidates(const Pose6D& init, MotionKind motion, int n, std::uint64_t seed,
                               const ExecutorConfig& config = {});

struct Selection {
  std::size_t index = 0;
  Pose6D pose;
  bool fallback = false;  // reply was unusable, candidate 0 taken
};

/// Presents every candidate as a numbered pose summary and takes the model's pick.
Selection select_target(const CandidateSet& set, const std::string& goal_text, const SceneGraph& scene,
                        ConversationModel& model, std::optional<int> action_index = std::nullopt);

struct StepOutcome {
  std::string action_line;
  bool reached = false;
  std::optional<Pose6D> target;
  std::size_t candidate_index = 0;
  GripperResult gripper;
  std::optional<FailureCategory> category;
  std::string message;
};

/// resolve -> sample -> select -> move -> gripper command on arrival.
StepOutcome execute_action(const MetaAction& action, WorldState& world, ConversationModel& model,
                           std::uint64_t seed, int action_index = 0, const ExecutorConfig& config = {},
                           const SimConfig& sim = {});

/// Runs actions in order and stops after the first failed step.
std::vector<StepOutcome> execute_plan(const Plan& plan, WorldState& world, ConversationModel& model,
                                      std::uint64_t seed, const ExecutorConfig& config = {},
                                      const SimConfig& sim = {});

}  // namespace metaplan
