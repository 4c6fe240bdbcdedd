#include "metaplan/planner.hpp"

#include <algorithm>
#include <cctype>
#include <fstream>
#include <sstream>

namespace metaplan {

namespace {

#include "prompts_v1.inc"

std::string read_file(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read prompt template " + p.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

const PromptSet& prompts_of(const PlannerOptions& o) { return o.prompts ? *o.prompts : PromptSet::builtin(); }

std::map<std::string, std::string> template_values(const PlanningSession& s, const PromptSet& prompts) {
  return {{"instruction", s.instruction},
          {"scene", s.scene.to_text()},
          {"meta_action_definition", prompts.meta_action_definition}};
}

std::string trim(std::string_view s) {
  std::size_t b = 0, e = s.size();
  while (b < e && std::isspace(static_cast<unsigned char>(s[b]))) ++b;
  while (e > b && std::isspace(static_cast<unsigned char>(s[e - 1]))) --e;
  return std::string(s.substr(b, e - b));
}

Message stage_prompt(const PlanningSession& s, int n, const PromptSet& prompts) {
  Message m{Role::User, render_template(prompts.stages[static_cast<std::size_t>(n - 1)], template_values(s, prompts)),
            std::nullopt};
  if (n == 1) m.scene_payload = s.scene;
  return m;
}

bool run_stage(PlanningSession& s, int n, ConversationModel& model, const PromptSet& prompts) {
  StageTurn turn{stage_prompt(s, n, prompts), {}, false};
  auto convo = s.conversation();
  // conversation() stops at the first missing or stale stage, which is n.
  convo.push_back(turn.prompt);
  try {
    turn.reply = model.reply(convo, ModelQuery{std::to_string(n), std::nullopt});
  } catch (const std::exception& e) {
    s.error = PlanError{PlanErrorKind::ModelError, std::to_string(n), e.what()};
    return false;
  }
  s.stages[static_cast<std::size_t>(n - 1)] = std::move(turn);
  for (int later = n + 1; later <= kStageCount; ++later) {
    auto& t = s.stages[static_cast<std::size_t>(later - 1)];
    if (t) t->stale = true;
  }
  if (n == 2 && parse_object_list(s.stage(2)->reply).empty()) {
    s.error = PlanError{PlanErrorKind::PlanParseError, "2", "stage-2 reply lists no \"- name\" objects"};
    return false;
  }
  return true;
}

struct ParsedBlock {
  std::optional<std::vector<MetaAction>> actions;
  std::string error;
};

ParsedBlock parse_reply_block(std::string_view reply) {
  auto block = extract_fenced_block(reply);
  if (!block) return {std::nullopt, "reply has no fenced meta-action block"};
  try {
    auto actions = parse_plan_text(*block);
    if (actions.empty()) return {std::nullopt, "meta-action block is empty"};
    return {std::move(actions), {}};
  } catch (const MetaActionParseError& e) {
    return {std::nullopt, e.what()};
  }
}

void finalize(PlanningSession& s, ConversationModel& model, const PlannerOptions& options) {
  const PromptSet& prompts = prompts_of(options);
  auto parsed = parse_reply_block(s.stage(5)->reply);
  if (!parsed.actions) {
    s.error = PlanError{PlanErrorKind::PlanParseError, "5", parsed.error};
    return;
  }
  auto report = validate_chain(*parsed.actions, s.initial);
  for (int round = 0; !report.ok(); ++round) {
    if (round >= options.repair_rounds) {
      s.error = PlanError{PlanErrorKind::ChainValidationError, s.repair ? "repair" : "5", report.describe()};
      return;
    }
    auto values = template_values(s, prompts);
    values["error"] = report.describe();
    StageTurn turn{Message{Role::User, render_template(prompts.repair, values), std::nullopt}, {}, false};
    auto convo = s.conversation();
    convo.push_back(turn.prompt);
    try {
      turn.reply = model.reply(convo, ModelQuery{"repair", std::nullopt});
    } catch (const std::exception& e) {
      s.error = PlanError{PlanErrorKind::ModelError, "repair", e.what()};
      return;
    }
    s.repair = std::move(turn);
    parsed = parse_reply_block(s.repair->reply);
    if (!parsed.actions) {
      s.error = PlanError{PlanErrorKind::PlanParseError, "repair", parsed.error};
      return;
    }
    report = validate_chain(*parsed.actions, s.initial);
  }
  s.final = Plan{options.task_id, std::move(*parsed.actions)};
}

void run_from(PlanningSession& s, int first, ConversationModel& model, const PlannerOptions& options) {
  const PromptSet& prompts = prompts_of(options);
  s.error.reset();
  s.final.reset();
  s.repair.reset();
  for (int n = first; n <= kStageCount; ++n)
    if (!run_stage(s, n, model, prompts)) return;
  finalize(s, model, options);
}

}  // namespace

const PromptSet& PromptSet::builtin() {
  static const PromptSet set = [] {
    PromptSet p;
    p.version = "v1";
    p.system = kPromptSystem;
    p.stages = {kPromptStage1, kPromptStage2, kPromptStage3, kPromptStage4, kPromptStage5};
    p.repair = kPromptRepair;
    p.meta_action_definition = kPromptMetaActionDefinition;
    return p;
  }();
  return set;
}

PromptSet PromptSet::load(const std::filesystem::path& dir) {
  PromptSet p;
  p.version = dir.filename().string();
  p.system = read_file(dir / "system.txt");
  for (int i = 0; i < kStageCount; ++i)
    p.stages[static_cast<std::size_t>(i)] = read_file(dir / ("stage" + std::to_string(i + 1) + ".txt"));
  p.repair = read_file(dir / "repair.txt");
  p.meta_action_definition = read_file(dir / "meta_action_definition.txt");
  return p;
}

std::string render_template(std::string_view tmpl, const std::map<std::string, std::string>& values) {
  std::string out;
  out.reserve(tmpl.size() + 256);
  std::size_t i = 0;
  while (i < tmpl.size()) {
    char c = tmpl[i];
    if (c == '{') {
      std::size_t close = tmpl.find('}', i + 1);
      if (close != std::string_view::npos) {
        std::string_view name = tmpl.substr(i + 1, close - i - 1);
        bool ident = !name.empty() && std::all_of(name.begin(), name.end(), [](char ch) {
          return std::islower(static_cast<unsigned char>(ch)) || ch == '_';
        });
        if (ident) {
          auto it = values.find(std::string(name));
          if (it == values.end())
            throw std::invalid_argument("template placeholder {" + std::string(name) + "} has no value");
          out += it->second;
          i = close + 1;
          continue;
        }
      }
    }
    out.push_back(c);
    ++i;
  }
  return out;
}

std::string_view to_string(PlanErrorKind k) {
  switch (k) {
    case PlanErrorKind::ModelError: return "ModelError";
    case PlanErrorKind::PlanParseError: return "PlanParseError";
    case PlanErrorKind::ChainValidationError: return "ChainValidationError";
  }
  return "?";
}

bool PlanningSession::completed_through(int n) const {
  for (int i = 1; i <= n; ++i) {
    const auto& t = stage(i);
    if (!t || t->stale) return false;
  }
  return true;
}

std::vector<Message> PlanningSession::conversation() const {
  std::vector<Message> out = prefix;
  for (const auto& t : stages) {
    if (!t || t->stale) return out;
    out.push_back(t->prompt);
    out.push_back(Message{Role::Assistant, t->reply, std::nullopt});
  }
  if (repair) {
    out.push_back(repair->prompt);
    out.push_back(Message{Role::Assistant, repair->reply, std::nullopt});
  }
  return out;
}

PromptCache PlanningSession::prompt_cache(const std::string& created_at) const {
  return PromptCache{conversation(), model_tag, created_at};
}

PlanningSession plan_task(const std::string& instruction, const SceneGraph& scene, ConversationModel& model,
                          const std::optional<PromptCache>& demo, const PlannerOptions& options) {
  if (trim(instruction).empty()) throw std::invalid_argument("instruction must not be empty");
  const PromptSet& prompts = prompts_of(options);
  PlanningSession s;
  s.instruction = instruction;
  s.scene = scene;
  s.icl_demo = demo;
  s.model_tag = model.model_tag();
  s.initial = options.initial;
  s.prefix.push_back(Message{Role::System, prompts.system, std::nullopt});
  if (demo) {
    // The demonstration's own system turns are dropped; its dialogue becomes
    // one extra round ahead of stage 1.
    for (const auto& m : demo->messages)
      if (m.role != Role::System) s.prefix.push_back(m);
  }
  run_from(s, 1, model, options);
  return s;
}

void resume_session(PlanningSession& session, ConversationModel& model, const PlannerOptions& options) {
  int first = 1;
  while (first <= kStageCount && session.completed_through(first)) ++first;
  if (first > kStageCount) {
    if (!session.final) run_from(session, kStageCount, model, options);
    return;
  }
  run_from(session, first, model, options);
}

std::set<std::string> parse_object_list(std::string_view reply) {
  std::set<std::string> out;
  std::istringstream in{std::string(reply)};
  std::string line;
  while (std::getline(in, line)) {
    std::string t = trim(line);
    if (t.size() < 2 || t[0] != '-') continue;
    std::string name = trim(std::string_view(t).substr(1));
    if (name.empty()) continue;
    std::transform(name.begin(), name.end(), name.begin(),
                   [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
    out.insert(name);
  }
  return out;
}

std::set<std::string> extract_relevant_objects(const PlanningSession& session) {
  const auto& turn = session.stage(2);
  if (!turn || turn->stale) throw StageIncomplete("stage 2 has not completed");
  return parse_object_list(turn->reply);
}

std::optional<std::string> extract_fenced_block(std::string_view reply) {
  std::size_t open = reply.find("```");
  if (open == std::string_view::npos) return std::nullopt;
  std::size_t body = reply.find('\n', open);
  if (body == std::string_view::npos) return std::nullopt;
  std::size_t close = reply.find("```", body + 1);
  if (close == std::string_view::npos) return std::nullopt;
  return std::string(reply.substr(body + 1, close - body - 1));
}

void edit_stage(PlanningSession& session, int stage, const std::string& text, const PlannerOptions& options) {
  if (stage < 1 || stage > kStageCount) throw std::invalid_argument("stage must be in 1..5");
  const PromptSet& prompts = prompts_of(options);
  std::optional<Plan> new_final;
  if (stage == kStageCount) {
    std::string body = extract_fenced_block(text).value_or(text);
    std::vector<MetaAction> actions;
    try {
      actions = parse_plan_text(body);
    } catch (const MetaActionParseError& e) {
      throw InvalidMetaActionText(e.what(), e.line(), std::nullopt);
    }
    if (actions.empty()) throw InvalidMetaActionText("meta-action text is empty", std::nullopt, std::nullopt);
    auto report = validate_chain(actions, session.initial);
    if (!report.ok()) {
      std::size_t index = report.initial_mismatch ? 0 : report.linkage->index;
      throw InvalidMetaActionText(report.describe(), index + 1, index);
    }
    new_final = Plan{options.task_id.empty() && session.final ? session.final->task_id : options.task_id,
                     std::move(actions)};
  }
  auto& slot = session.stages[static_cast<std::size_t>(stage - 1)];
  Message prompt = slot ? slot->prompt : stage_prompt(session, stage, prompts);
  slot = StageTurn{std::move(prompt), text, false};
  for (int later = stage + 1; later <= kStageCount; ++later) {
    auto& t = session.stages[static_cast<std::size_t>(later - 1)];
    if (t) t->stale = true;
  }
  session.repair.reset();
  session.error.reset();
  session.final = std::move(new_final);
}

}  // namespace metaplan
