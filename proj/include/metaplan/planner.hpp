#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <stdexcept>
#include <string>

#include "metaplan/conversation.hpp"
#include "metaplan/meta_action.hpp"
#include "metaplan/scene_graph.hpp"

namespace metaplan {

inline constexpr int kStageCount = 5;

/// Prompt templates with named placeholders {instruction}, {scene},
/// {meta_action_definition} and {error}.
struct PromptSet {
  std::string version;
  std::string system;
  std::array<std::string, kStageCount> stages;
  std::string repair;
  std::string meta_action_definition;

  /// The templates compiled into the library (data/prompts/v1).
  static const PromptSet& builtin();
  /// Reads system.txt, stage1.txt..stage5.txt, repair.txt, meta_action_definition.txt.
  static PromptSet load(const std::filesystem::path& dir);
};

/// Substitutes {name} placeholders. Throws std::invalid_argument for a
/// placeholder that has no value.
std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values);

enum class PlanErrorKind { ModelError, PlanParseError, ChainValidationError };

std::string_view to_string(PlanErrorKind k);

struct PlanError {
  PlanErrorKind kind = PlanErrorKind::ModelError;
  std::string stage;  // "1".."5" or "repair"
  std::string message;
};

struct StageTurn {
  Message prompt;
  std::string reply;
  bool stale = false;
};

struct PlanningSession {
  std::string instruction;
  SceneGraph scene;
  std::optional<PromptCache> icl_demo;
  std::string model_tag;
  GripperState initial = GripperState::Open;

  std::vector<Message> prefix;  // system prompt plus any demonstration round
  std::array<std::optional<StageTurn>, kStageCount> stages;
  std::optional<StageTurn> repair;
  std::optional<Plan> final;
  std::optional<PlanError> error;

  /// 1-based stage accessor.
  const std::optional<StageTurn>& stage(int n) const { return stages.at(static_cast<std::size_t>(n - 1)); }

  /// Stages 1..n all present and fresh.
  bool completed_through(int n) const;

  /// prefix + every fresh stage turn in order (+ repair turn).
  std::vector<Message> conversation() const;
  PromptCache prompt_cache(const std::string& created_at) const;
};

struct PlannerOptions {
  const PromptSet* prompts = nullptr;  // null selects PromptSet::builtin()
  GripperState initial = GripperState::Open;
  std::string task_id;
  int repair_rounds = 1;
};

/// Runs the five-stage conversation. Failures are recorded in the session,
/// never thrown; std::invalid_argument only for an empty instruction.
PlanningSession plan_task(const std::string& instruction, const SceneGraph& scene, ConversationModel& model,
                          const std::optional<PromptCache>& demo, const PlannerOptions& options = {});

/// Re-runs every missing or stale stage of an edited session, in order.
void resume_session(PlanningSession& session, ConversationModel& model, const PlannerOptions& options = {});

class StageIncomplete : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// "- name" lines of the stage-2 reply, lowercased and deduplicated.
std::set<std::string> extract_relevant_objects(const PlanningSession& session);
std::set<std::string> parse_object_list(std::string_view reply);

/// Contents of the first ``` fenced block, or nullopt when there is none.
std::optional<std::string> extract_fenced_block(std::string_view reply);

class InvalidMetaActionText : public std::runtime_error {
 public:
  InvalidMetaActionText(std::string message, std::optional<std::size_t> line, std::optional<std::size_t> index)
      : std::runtime_error(std::move(message)), line_(line), index_(index) {}
  std::optional<std::size_t> line() const { return line_; }    // parse failures
  std::optional<std::size_t> index() const { return index_; }  // chain breaks

 private:
  std::optional<std::size_t> line_;
  std::optional<std::size_t> index_;
};

/// Replaces the reply of stage n (1-based). Later stages and the repair turn
/// become stale and the final plan is dropped. A stage-5 edit is parsed and
/// chain-validated first (fenced or bare lines) and, when valid, becomes the
/// final plan; otherwise InvalidMetaActionText is thrown and nothing changes.
void edit_stage(PlanningSession& session, int stage, const std::string& text, const PlannerOptions& options = {});

}  // namespace metaplan
