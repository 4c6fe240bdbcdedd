#pragma once

#include <cstddef>
#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace metaplan {

enum class GripperState { Open, Close };
enum class MotionKind { Move, Rotate };

enum class Preposition {
  Above,
  On,
  FrontOn,
  Behind,
  LeftOf,
  RightOf,
  Into,
  Up,
  Down,
  Forward,
  Backward,
};

inline constexpr std::size_t kPrepositionCount = 11;

enum class GripperCommand { CloseGripper, OpenGripper, Hold };

struct LocationDescription {
  Preposition preposition = Preposition::On;
  std::optional<std::string> object_ref;

  bool operator==(const LocationDescription&) const = default;
};

/// One planned step: gripper state before, motion, textual goal, gripper state after.
struct MetaAction {
  GripperState pre = GripperState::Open;
  MotionKind motion = MotionKind::Move;
  LocationDescription location;
  GripperState post = GripperState::Open;

  bool operator==(const MetaAction&) const = default;
};

struct Plan {
  std::string task_id;
  std::vector<MetaAction> actions;

  bool operator==(const Plan&) const = default;
};

enum class ParseErrorKind {
  UnknownGripperWord,
  UnknownMotionWord,
  UnknownPreposition,
  FieldCountMismatch,
  InvalidObjectName,
};

/// Structured parse failure. `column` is 1-based and points at the start of
/// the offending field; `line` is 1-based when parsing a multi-line block.
class MetaActionParseError : public std::runtime_error {
 public:
  MetaActionParseError(ParseErrorKind kind, std::string token, std::size_t column,
                       std::size_t line = 0);

  ParseErrorKind kind() const noexcept { return kind_; }
  const std::string& token() const noexcept { return token_; }
  std::size_t column() const noexcept { return column_; }
  std::size_t line() const noexcept { return line_; }

 private:
  ParseErrorKind kind_;
  std::string token_;
  std::size_t column_;
  std::size_t line_;
};

std::string_view to_string(GripperState s);  // "opened" / "closed"
std::string_view to_string(MotionKind m);    // "move to" / "rotate to"
std::string_view to_string(Preposition p);   // "front on", "left of", ...
std::string_view to_string(GripperCommand c);
std::string_view to_string(ParseErrorKind k);

/// Every preposition in declaration order.
const std::vector<Preposition>& all_prepositions();

std::optional<GripperState> gripper_state_from_word(std::string_view word);
std::optional<MotionKind> motion_from_word(std::string_view word);
std::optional<Preposition> preposition_from_word(std::string_view word);

/// Parses one five-field line such as "opened, move to, front on, burger, closed".
/// Case- and whitespace-insensitive between fields. Throws MetaActionParseError.
MetaAction parse_meta_action(std::string_view line);

/// Canonical lowercase form; parse_meta_action(serialize(a)) == a.
std::string serialize(const MetaAction& action);

/// One action per line; blank lines are skipped. Errors carry the 1-based line.
std::vector<MetaAction> parse_plan_text(std::string_view text);
std::string serialize_plan_text(const std::vector<MetaAction>& actions);

struct ChainViolation {
  std::size_t index = 0;  // index of the action whose `pre` disagrees
  GripperState expected = GripperState::Open;  // previous post (or initial state)
  GripperState found = GripperState::Open;
};

struct ChainReport {
  bool initial_mismatch = false;
  std::optional<ChainViolation> initial;  // set when actions[0].pre != initial
  std::optional<ChainViolation> linkage;  // first adjacent-pair break

  bool ok() const noexcept { return !initial_mismatch && !linkage; }
  std::string describe() const;
};

class EmptyPlanError : public std::invalid_argument {
 public:
  EmptyPlanError() : std::invalid_argument("plan has no actions") {}
};

/// Throws EmptyPlanError on an empty action list.
ChainReport validate_chain(const std::vector<MetaAction>& actions, GripperState initial);
inline ChainReport validate_chain(const Plan& plan, GripperState initial) {
  return validate_chain(plan.actions, initial);
}

GripperCommand gripper_command(GripperState pre, GripperState post) noexcept;

}  // namespace metaplan
