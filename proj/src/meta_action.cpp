#include "metaplan/meta_action.hpp"

#include <array>
#include <cctype>
#include <sstream>

namespace metaplan {

namespace {

struct Field {
  std::string text;    // trimmed, lowercased, inner whitespace collapsed
  std::size_t column;  // 1-based column of the first non-space character
};

bool is_space(char c) { return c == ' ' || c == '\t' || c == '\r' || c == '\n' || c == '\v' || c == '\f'; }

Field normalize_field(std::string_view raw, std::size_t offset) {
  Field f{{}, offset + 1};
  std::size_t i = 0;
  while (i < raw.size() && is_space(raw[i])) ++i;
  f.column = offset + i + 1;
  bool pending_space = false;
  for (; i < raw.size(); ++i) {
    char c = raw[i];
    if (is_space(c)) {
      pending_space = true;
      continue;
    }
    if (pending_space && !f.text.empty()) f.text.push_back(' ');
    pending_space = false;
    f.text.push_back(static_cast<char>(std::tolower(static_cast<unsigned char>(c))));
  }
  return f;
}

struct PrepositionWord {
  Preposition value;
  std::string_view canonical;
};

constexpr std::array<PrepositionWord, kPrepositionCount> kPrepositionWords{{
    {Preposition::Above, "above"},
    {Preposition::On, "on"},
    {Preposition::FrontOn, "front on"},
    {Preposition::Behind, "behind"},
    {Preposition::LeftOf, "left of"},
    {Preposition::RightOf, "right of"},
    {Preposition::Into, "into"},
    {Preposition::Up, "up"},
    {Preposition::Down, "down"},
    {Preposition::Forward, "forward"},
    {Preposition::Backward, "backward"},
}};

}  // namespace

MetaActionParseError::MetaActionParseError(ParseErrorKind kind, std::string token,
                                           std::size_t column, std::size_t line)
    : std::runtime_error([&] {
        std::ostringstream os;
        os << to_string(kind) << " '" << token << "' at ";
        if (line > 0) os << "line " << line << ", ";
        os << "column " << column;
        return os.str();
      }()),
      kind_(kind),
      token_(std::move(token)),
      column_(column),
      line_(line) {}

std::string_view to_string(GripperState s) { return s == GripperState::Open ? "opened" : "closed"; }

std::string_view to_string(MotionKind m) { return m == MotionKind::Move ? "move to" : "rotate to"; }

std::string_view to_string(Preposition p) {
  for (const auto& w : kPrepositionWords)
    if (w.value == p) return w.canonical;
  return "?";
}

std::string_view to_string(GripperCommand c) {
  switch (c) {
    case GripperCommand::CloseGripper: return "close_gripper";
    case GripperCommand::OpenGripper: return "open_gripper";
    case GripperCommand::Hold: return "hold";
  }
  return "?";
}

std::string_view to_string(ParseErrorKind k) {
  switch (k) {
    case ParseErrorKind::UnknownGripperWord: return "UnknownGripperWord";
    case ParseErrorKind::UnknownMotionWord: return "UnknownMotionWord";
    case ParseErrorKind::UnknownPreposition: return "UnknownPreposition";
    case ParseErrorKind::FieldCountMismatch: return "FieldCountMismatch";
    case ParseErrorKind::InvalidObjectName: return "InvalidObjectName";
  }
  return "?";
}

const std::vector<Preposition>& all_prepositions() {
  static const std::vector<Preposition> all = [] {
    std::vector<Preposition> v;
    for (const auto& w : kPrepositionWords) v.push_back(w.value);
    return v;
  }();
  return all;
}

std::optional<GripperState> gripper_state_from_word(std::string_view word) {
  if (word == "opened" || word == "open") return GripperState::Open;
  if (word == "closed" || word == "close") return GripperState::Close;
  return std::nullopt;
}

std::optional<MotionKind> motion_from_word(std::string_view word) {
  if (word == "move to" || word == "move") return MotionKind::Move;
  if (word == "rotate to" || word == "rotate") return MotionKind::Rotate;
  return std::nullopt;
}

std::optional<Preposition> preposition_from_word(std::string_view word) {
  for (const auto& w : kPrepositionWords)
    if (w.canonical == word) return w.value;
  return std::nullopt;
}

MetaAction parse_meta_action(std::string_view line) {
  std::vector<Field> fields;
  std::size_t start = 0;
  for (std::size_t i = 0; i <= line.size(); ++i) {
    if (i == line.size() || line[i] == ',') {
      fields.push_back(normalize_field(line.substr(start, i - start), start));
      start = i + 1;
    }
  }
  if (fields.size() != 5) {
    std::size_t column = fields.size() > 5 ? fields[5].column : line.size() + 1;
    throw MetaActionParseError(ParseErrorKind::FieldCountMismatch,
                               std::to_string(fields.size()) + " fields", column);
  }

  MetaAction a;
  auto pre = gripper_state_from_word(fields[0].text);
  if (!pre) throw MetaActionParseError(ParseErrorKind::UnknownGripperWord, fields[0].text, fields[0].column);
  auto motion = motion_from_word(fields[1].text);
  if (!motion) throw MetaActionParseError(ParseErrorKind::UnknownMotionWord, fields[1].text, fields[1].column);
  auto prep = preposition_from_word(fields[2].text);
  if (!prep) throw MetaActionParseError(ParseErrorKind::UnknownPreposition, fields[2].text, fields[2].column);
  for (char c : fields[3].text) {
    if (static_cast<unsigned char>(c) < 0x20 || c == 0x7f)
      throw MetaActionParseError(ParseErrorKind::InvalidObjectName, fields[3].text, fields[3].column);
  }
  auto post = gripper_state_from_word(fields[4].text);
  if (!post) throw MetaActionParseError(ParseErrorKind::UnknownGripperWord, fields[4].text, fields[4].column);

  a.pre = *pre;
  a.motion = *motion;
  a.location.preposition = *prep;
  if (!fields[3].text.empty()) a.location.object_ref = fields[3].text;
  a.post = *post;
  return a;
}

std::string serialize(const MetaAction& action) {
  std::string out;
  out.reserve(64);
  out += to_string(action.pre);
  out += ", ";
  out += to_string(action.motion);
  out += ", ";
  out += to_string(action.location.preposition);
  out += ", ";
  if (action.location.object_ref) out += *action.location.object_ref;
  out += ", ";
  out += to_string(action.post);
  return out;
}

std::vector<MetaAction> parse_plan_text(std::string_view text) {
  std::vector<MetaAction> actions;
  std::size_t line_no = 0;
  std::size_t start = 0;
  while (start <= text.size()) {
    std::size_t end = text.find('\n', start);
    if (end == std::string_view::npos) end = text.size();
    ++line_no;
    std::string_view line = text.substr(start, end - start);
    bool blank = true;
    for (char c : line)
      if (!is_space(c)) blank = false;
    if (!blank) {
      try {
        actions.push_back(parse_meta_action(line));
      } catch (const MetaActionParseError& e) {
        throw MetaActionParseError(e.kind(), e.token(), e.column(), line_no);
      }
    }
    start = end + 1;
  }
  return actions;
}

std::string serialize_plan_text(const std::vector<MetaAction>& actions) {
  std::string out;
  for (const auto& a : actions) {
    out += serialize(a);
    out += '\n';
  }
  return out;
}

std::string ChainReport::describe() const {
  if (ok()) return "ok";
  std::ostringstream os;
  if (initial) {
    os << "action 0 starts " << to_string(initial->found) << " but the gripper is "
       << to_string(initial->expected);
  }
  if (linkage) {
    if (initial) os << "; ";
    os << "linkage broken at index " << linkage->index << ": previous action ends "
       << to_string(linkage->expected) << " but this one starts " << to_string(linkage->found);
  }
  return os.str();
}

ChainReport validate_chain(const std::vector<MetaAction>& actions, GripperState initial) {
  if (actions.empty()) throw EmptyPlanError();
  ChainReport report;
  if (actions.front().pre != initial) {
    report.initial_mismatch = true;
    report.initial = ChainViolation{0, initial, actions.front().pre};
  }
  for (std::size_t i = 1; i < actions.size(); ++i) {
    if (actions[i - 1].post != actions[i].pre) {
      report.linkage = ChainViolation{i, actions[i - 1].post, actions[i].pre};
      break;
    }
  }
  return report;
}

GripperCommand gripper_command(GripperState pre, GripperState post) noexcept {
  if (pre == post) return GripperCommand::Hold;
  return post == GripperState::Close ? GripperCommand::CloseGripper : GripperCommand::OpenGripper;
}

}  // namespace metaplan
