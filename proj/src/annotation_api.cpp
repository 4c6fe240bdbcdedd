#include "metaplan/annotation_api.hpp"

#include <charconv>
#include <httplib.h>

#include "metaplan/json_io.hpp"
#include "metaplan/sim_world.hpp"

namespace metaplan {

namespace {

ApiResponse ok(json body, int status = 200) {
  body["schema_version"] = kApiSchemaVersion;
  return {status, std::move(body)};
}

ApiResponse error(int status, const std::string& code, const std::string& message, json extra = json::object()) {
  extra["code"] = code;
  extra["message"] = message;
  return {status, json{{"schema_version", kApiSchemaVersion}, {"error", std::move(extra)}}};
}

std::vector<std::string> split_path(const std::string& path) {
  std::vector<std::string> parts;
  std::size_t i = 0;
  while (i < path.size()) {
    std::size_t j = path.find('/', i);
    if (j == std::string::npos) j = path.size();
    if (j > i) parts.push_back(path.substr(i, j - i));
    i = j + 1;
  }
  return parts;
}

std::optional<std::uint64_t> parse_id(const std::string& s) {
  std::uint64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || p != s.data() + s.size()) return std::nullopt;
  return v;
}

bool valid_scene_ref(const std::string& s) {
  if (s.empty() || s.size() > 64) return false;
  for (unsigned char c : s)
    if (!(std::islower(c) || std::isdigit(c) || c == '_' || c == '-')) return false;
  return true;
}

json stage_to_json(const std::optional<StageTurn>& t) {
  if (!t) return nullptr;
  return json{{"prompt", t->prompt.text}, {"reply", t->reply}, {"stale", t->stale}};
}

struct BadRequest : std::runtime_error {
  using std::runtime_error::runtime_error;
};

const json& require(const json& body, const char* key) {
  if (!body.is_object() || !body.contains(key)) throw BadRequest(std::string("missing field '") + key + "'");
  return body.at(key);
}

std::string require_string(const json& body, const char* key) {
  const json& v = require(body, key);
  if (!v.is_string()) throw BadRequest(std::string("field '") + key + "' must be a string");
  return v.get<std::string>();
}

}  // namespace

ModelProvider scripted_provider(std::filesystem::path transcript_dir) {
  return [dir = std::move(transcript_dir)](const std::string& scene_ref,
                                           const std::string& mode) -> std::unique_ptr<ConversationModel> {
    auto path = dir / scene_ref / (mode + ".json");
    if (!std::filesystem::exists(path)) throw ModelError("no transcript for " + scene_ref + "/" + mode);
    TranscriptFile file = load_transcript(path);
    return std::make_unique<ScriptedModel>(file.variant_for(0), file.label.empty() ? "scripted" : file.label);
  };
}

json session_to_json(const AnnotationSession& s, const std::string& mode) {
  const PlanningSession& p = s.session;
  json stages = json::array();
  for (const auto& t : p.stages) stages.push_back(stage_to_json(t));
  json j{{"mode", mode},
         {"version", s.version},
         {"model", p.model_tag},
         {"instruction", p.instruction},
         {"demo_record", s.demo_record ? json(*s.demo_record) : json(nullptr)},
         {"no_demonstration", s.no_demonstration},
         {"demo_round", p.prefix.size() > 1 ? json(std::vector<Message>(p.prefix.begin() + 1, p.prefix.end()))
                                            : json::array()},
         {"stages", stages},
         {"repair", stage_to_json(p.repair)},
         {"final", p.final ? json(serialize_plan_text(p.final->actions)) : json(nullptr)},
         {"error", p.error ? json{{"kind", std::string(to_string(p.error->kind))},
                                  {"stage", p.error->stage},
                                  {"message", p.error->message}}
                           : json(nullptr)}};
  try {
    j["relevant_objects"] = extract_relevant_objects(p);
  } catch (const StageIncomplete&) {
    j["relevant_objects"] = nullptr;
  }
  return j;
}

json task_to_json(const AnnotationTask& t) {
  json votes = json::array();
  for (const auto& v : t.votes) votes.push_back(vote_to_json(v));
  return json{{"id", t.id},
              {"instruction", t.instruction},
              {"scene_ref", t.scene_ref},
              {"status", std::string(to_string(t.status))},
              {"voted_session", t.voted_mode ? json(*t.voted_mode) : json(nullptr)},
              {"votes", votes},
              {"record_id", t.record_id ? json(*t.record_id) : json(nullptr)},
              {"sessions",
               {{"icl", t.with_icl ? session_to_json(*t.with_icl, "icl") : json(nullptr)},
                {"no_icl", t.without_icl ? session_to_json(*t.without_icl, "no_icl") : json(nullptr)}}}};
}

AnnotationService::AnnotationService(RecordStore& store, AnnotationConfig config)
    : store_(store), config_(std::move(config)) {
  if (config_.quorum < 1) throw std::invalid_argument("quorum must be at least 1");
}

std::optional<AnnotationTask> AnnotationService::task(std::uint64_t id) const {
  std::lock_guard lock(mutex_);
  auto it = tasks_.find(id);
  if (it == tasks_.end()) return std::nullopt;
  return it->second;
}

ApiResponse AnnotationService::handle(const std::string& method, const std::string& path, const std::string& body) {
  std::lock_guard lock(mutex_);
  json request = json::object();
  if (!body.empty()) {
    request = json::parse(body, nullptr, false);
    if (request.is_discarded()) return error(400, "BadRequest", "body is not valid JSON");
  }
  auto parts = split_path(path);
  try {
    if (parts.size() == 1 && parts[0] == "tasks") {
      if (method == "POST") return create_task(request);
      if (method == "GET") return list_tasks();
      return error(405, "MethodNotAllowed", method + " " + path);
    }
    if (parts.size() == 1 && parts[0] == "records" && method == "GET") return list_records();
    if (parts.size() == 2 && parts[0] == "records" && method == "GET") {
      auto id = parse_id(parts[1]);
      if (!id) return error(404, "UnknownRecord", "no record " + parts[1]);
      return get_record(*id);
    }
    if (parts.size() >= 2 && parts[0] == "tasks") {
      auto id = parse_id(parts[1]);
      if (!id || !tasks_.count(*id)) return error(404, "UnknownTask", "no task " + parts[1]);
      if (parts.size() == 2 && method == "GET") return get_task(*id);
      if (parts.size() == 3 && method == "POST") {
        if (parts[2] == "plan") return plan(*id, request);
        if (parts[2] == "vote") return vote(*id, request);
        if (parts[2] == "commit") return commit(*id);
      }
      if (parts.size() == 4 && parts[2] == "stages" && method == "PUT") {
        auto n = parse_id(parts[3]);
        if (!n || *n < 1 || *n > static_cast<std::uint64_t>(kStageCount))
          return error(400, "BadRequest", "stage must be in 1..5");
        return edit_stage(*id, static_cast<int>(*n), request);
      }
    }
  } catch (const BadRequest& e) {
    return error(400, "BadRequest", e.what());
  } catch (const json::exception& e) {
    return error(400, "BadRequest", e.what());
  }
  return error(404, "NotFound", method + " " + path);
}

ApiResponse AnnotationService::create_task(const json& body) {
  std::string instruction = require_string(body, "instruction");
  std::string scene_ref = require_string(body, "scene_ref");
  if (instruction.find_first_not_of(" \t\r\n") == std::string::npos)
    return error(400, "BadRequest", "instruction must not be empty");
  auto fixture = config_.fixture_dir / (scene_ref + ".json");
  if (!valid_scene_ref(scene_ref) || !std::filesystem::exists(fixture))
    return error(404, "UnknownScene", "no scene '" + scene_ref + "'");
  AnnotationTask t;
  t.id = next_id_++;
  t.instruction = instruction;
  t.scene_ref = scene_ref;
  t.scene = scene_graph_of(load_fixture(fixture).initial_world);
  auto [it, _] = tasks_.emplace(t.id, std::move(t));
  return ok(json{{"task", task_to_json(it->second)}}, 201);
}

ApiResponse AnnotationService::list_tasks() const {
  json list = json::array();
  for (const auto& [id, t] : tasks_)
    list.push_back({{"id", id},
                    {"instruction", t.instruction},
                    {"scene_ref", t.scene_ref},
                    {"status", std::string(to_string(t.status))},
                    {"record_id", t.record_id ? json(*t.record_id) : json(nullptr)}});
  return ok(json{{"tasks", list}});
}

ApiResponse AnnotationService::get_task(std::uint64_t id) const { return ok(json{{"task", task_to_json(tasks_.at(id))}}); }

ApiResponse AnnotationService::plan(std::uint64_t id, const json& body) {
  AnnotationTask& t = tasks_.at(id);
  std::string mode = require_string(body, "mode");
  if (mode != "icl" && mode != "no_icl" && mode != "both")
    return error(400, "BadRequest", "mode must be icl, no_icl or both");
  bool resume = body.value("resume", false);
  if (!config_.models) return error(503, "NoModel", "no model adapter configured");

  PlannerOptions popts;
  popts.prompts = config_.prompts;
  popts.task_id = t.scene_ref;

  std::vector<std::string> modes = mode == "both" ? std::vector<std::string>{"no_icl", "icl"}
                                                  : std::vector<std::string>{mode};
  std::optional<ApiResponse> model_failure;
  for (const auto& m : modes) {
    auto& slot = m == "icl" ? t.with_icl : t.without_icl;
    std::unique_ptr<ConversationModel> model;
    try {
      model = config_.models(t.scene_ref, m);
    } catch (const std::exception& e) {
      return error(502, "ModelError", e.what(), json{{"mode", m}, {"stage", nullptr}});
    }
    if (resume && slot) {
      resume_session(slot->session, *model, popts);
      ++slot->version;
    } else {
      AnnotationSession s;
      std::optional<PromptCache> demo;
      if (m == "icl") {
        try {
          auto r = store_.retrieve(embed(t.instruction, t.scene), config_.retrieve_k, *model, t.instruction);
          if (r.record) {
            demo = r.record->prompt_cache;
            s.demo_record = r.record->id;
          } else {
            s.no_demonstration = true;
          }
        } catch (const ModelError& e) {
          return error(502, "ModelError", e.what(), json{{"mode", m}, {"stage", "retrieve"}});
        }
      }
      s.session = plan_task(t.instruction, t.scene, *model, demo, popts);
      s.version = slot ? slot->version + 1 : 1;
      slot = std::move(s);
    }
    if (t.voted_mode == m) {
      t.status = RecordStatus::Pending;
      t.votes.clear();
      t.voted_mode.reset();
    }
    const auto& err = slot->session.error;
    if (err && err->kind == PlanErrorKind::ModelError && !model_failure)
      model_failure = error(502, "ModelError", err->message, json{{"mode", m}, {"stage", err->stage}});
  }
  if (model_failure) return *model_failure;
  json sessions = json::object();
  for (const auto& m : modes) sessions[m] = session_to_json(m == "icl" ? *t.with_icl : *t.without_icl, m);
  return ok(json{{"task_id", id}, {"sessions", sessions}});
}

ApiResponse AnnotationService::edit_stage(std::uint64_t id, int stage, const json& body) {
  AnnotationTask& t = tasks_.at(id);
  std::string mode = require_string(body, "session");
  std::string text = require_string(body, "text");
  const json& version = require(body, "version");
  if (!version.is_number_integer()) throw BadRequest("field 'version' must be an integer");
  if (mode != "icl" && mode != "no_icl") return error(400, "BadRequest", "session must be icl or no_icl");
  auto& slot = mode == "icl" ? t.with_icl : t.without_icl;
  if (!slot) return error(404, "NoSession", "task has no " + mode + " session");
  if (version.get<int>() != slot->version)
    return error(409, "StaleVersion", "session is at version " + std::to_string(slot->version),
                 json{{"current_version", slot->version}});
  PlannerOptions popts;
  popts.prompts = config_.prompts;
  popts.task_id = t.scene_ref;
  try {
    metaplan::edit_stage(slot->session, stage, text, popts);
  } catch (const InvalidMetaActionText& e) {
    json extra{{"line", e.line() ? json(*e.line()) : json(nullptr)},
               {"index", e.index() ? json(*e.index()) : json(nullptr)}};
    return error(422, "InvalidMetaActionText", e.what(), std::move(extra));
  }
  ++slot->version;
  if (t.voted_mode == mode) {
    t.status = RecordStatus::Pending;
    t.votes.clear();
    t.voted_mode.reset();
  }
  return ok(json{{"task_id", id}, {"session", session_to_json(*slot, mode)}});
}

ApiResponse AnnotationService::vote(std::uint64_t id, const json& body) {
  AnnotationTask& t = tasks_.at(id);
  std::string verdict = require_string(body, "verdict");
  std::string annotator = require_string(body, "annotator");
  if (verdict != "correct" && verdict != "incorrect")
    return error(400, "BadRequest", "verdict must be correct or incorrect");
  if (t.record_id) return error(409, "AlreadyCommitted", "task is already committed");
  std::string mode;
  if (body.contains("session")) {
    mode = require_string(body, "session");
    if (mode != "icl" && mode != "no_icl") return error(400, "BadRequest", "session must be icl or no_icl");
  } else {
    mode = t.with_icl && t.with_icl->session.final ? "icl" : "no_icl";
  }
  const auto& slot = mode == "icl" ? t.with_icl : t.without_icl;
  if (!slot || !slot->session.final) return error(409, "NoFinalPlan", "the " + mode + " session has no final plan");
  if (t.voted_mode != mode) {
    t.votes.clear();
    t.voted_mode = mode;
  }
  t.votes.push_back(Vote{verdict, annotator, config_.clock()});
  if (verdict == "incorrect") {
    t.status = RecordStatus::Rejected;
  } else if (t.status != RecordStatus::Rejected) {
    int correct = 0;
    for (const auto& v : t.votes) correct += v.verdict == "correct";
    if (correct >= config_.quorum) t.status = RecordStatus::Verified;
  }
  return ok(json{{"task_id", id},
                 {"session", mode},
                 {"status", std::string(to_string(t.status))},
                 {"votes", t.votes.size()}});
}

ApiResponse AnnotationService::commit(std::uint64_t id) {
  AnnotationTask& t = tasks_.at(id);
  if (t.record_id) return error(409, "AlreadyCommitted", "task is already committed");
  if (t.status != RecordStatus::Verified || !t.voted_mode)
    return error(409, "NotVerified", "task status is " + std::string(to_string(t.status)));
  const AnnotationSession& s = *(*t.voted_mode == "icl" ? t.with_icl : t.without_icl);

  PlanRecord record;
  record.instruction = t.instruction;
  record.scene = t.scene;
  record.embedding = embed(t.instruction, t.scene);
  record.prompt_cache = s.session.prompt_cache(config_.clock());
  record.plan = *s.session.final;
  record.relevant_objects = extract_relevant_objects(s.session);
  record.status = RecordStatus::Verified;
  record.votes = t.votes;
  GateResult gate;
  try {
    gate = store_.gate_and_add(std::move(record), config_.thresholds);
  } catch (const StoreError& e) {
    return error(422, "StoreError", e.what());
  }
  t.record_id = gate.decision == GateDecision::Add ? gate.added_id : gate.blocking_id;
  json scores = json::array();
  for (const auto& s : gate.scores)
    scores.push_back({{"record_id", s.record_id},
                      {"object_similarity", s.scores.object_similarity},
                      {"sequence_similarity", s.scores.sequence_similarity}});
  return ok(json{{"task_id", id},
                 {"decision", std::string(to_string(gate.decision))},
                 {"scores", scores},
                 {"record_id", t.record_id ? json(*t.record_id) : json(nullptr)},
                 {"blocking_id", gate.blocking_id ? json(*gate.blocking_id) : json(nullptr)}});
}

ApiResponse AnnotationService::list_records() const {
  json list = json::array();
  for (const auto& r : store_.records())
    list.push_back({{"id", r.id},
                    {"instruction", r.instruction},
                    {"status", std::string(to_string(r.status))},
                    {"task_id", r.plan.task_id},
                    {"plan", serialize_plan_text(r.plan.actions)},
                    {"relevant_objects", r.relevant_objects}});
  return ok(json{{"records", list}});
}

ApiResponse AnnotationService::get_record(std::uint64_t id) const {
  auto r = store_.find(id);
  if (!r) return error(404, "UnknownRecord", "no record " + std::to_string(id));
  json j = record_to_json(*r);
  j.erase("type");
  return ok(json{{"record", j}});
}

struct ApiServer::Impl {
  httplib::Server server;
};

ApiServer::ApiServer(AnnotationService& service) : impl_(std::make_unique<Impl>()) {
  auto handler = [&service](const httplib::Request& req, httplib::Response& res) {
    ApiResponse r = service.handle(req.method, req.path, req.body);
    res.status = r.status;
    res.set_content(r.body.dump(), "application/json");
  };
  impl_->server.Get(".*", handler);
  impl_->server.Post(".*", handler);
  impl_->server.Put(".*", handler);
  impl_->server.Delete(".*", handler);
}

ApiServer::~ApiServer() { stop(); }

int ApiServer::bind(const std::string& host, int port) {
  int bound = port == 0 ? impl_->server.bind_to_any_port(host) : (impl_->server.bind_to_port(host, port) ? port : -1);
  if (bound <= 0) throw std::runtime_error("cannot listen on " + host + ":" + std::to_string(port));
  return bound;
}

void ApiServer::run() { impl_->server.listen_after_bind(); }

void ApiServer::stop() { impl_->server.stop(); }

void serve(AnnotationService& service, const std::string& host, int port) {
  ApiServer server(service);
  server.bind(host, port);
  server.run();
}

}  // namespace metaplan
