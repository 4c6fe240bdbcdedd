#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>

#include <json.hpp>

#include "metaplan/conversation.hpp"
#include "metaplan/planner.hpp"
#include "metaplan/rag_store.hpp"

namespace metaplan {

inline constexpr int kApiSchemaVersion = 1;

/// Fresh model adapter for one planning request on a scene, mode "icl" or "no_icl".
using ModelProvider = std::function<std::unique_ptr<ConversationModel>(const std::string& scene_ref,
                                                                         const std::string& mode)>;

/// Replays <dir>/<scene_ref>/<mode>.json (first variant). Throws ModelError
/// when the transcript is missing.
ModelProvider scripted_provider(std::filesystem::path transcript_dir);

struct AnnotationConfig {
  std::filesystem::path fixture_dir;  // <dir>/<scene_ref>.json
  ModelProvider models;
  Clock clock = system_clock();
  int quorum = 1;  // correct votes needed for Verified
  std::size_t retrieve_k = 3;
  GateThresholds thresholds;
  const PromptSet* prompts = nullptr;
};

struct ApiResponse {
  int status = 200;
  nlohmann::json body;  // always carries schema_version
};

struct AnnotationSession {
  PlanningSession session;
  int version = 1;
  std::optional<std::uint64_t> demo_record;
  bool no_demonstration = false;
};

struct AnnotationTask {
  std::uint64_t id = 0;
  std::string instruction;
  std::string scene_ref;
  SceneGraph scene;
  std::optional<AnnotationSession> with_icl;
  std::optional<AnnotationSession> without_icl;
  RecordStatus status = RecordStatus::Pending;
  std::optional<std::string> voted_mode;  // session the votes apply to
  std::vector<Vote> votes;
  std::optional<std::uint64_t> record_id;
};

/// The annotation workflow as a request router. Requests are handled one at a
/// time; store writes go through RecordStore.
class AnnotationService {
 public:
  AnnotationService(RecordStore& store, AnnotationConfig config);

  ApiResponse handle(const std::string& method, const std::string& path, const std::string& body);

  std::optional<AnnotationTask> task(std::uint64_t id) const;

 private:
  ApiResponse create_task(const nlohmann::json& body);
  ApiResponse list_tasks() const;
  ApiResponse get_task(std::uint64_t id) const;
  ApiResponse plan(std::uint64_t id, const nlohmann::json& body);
  ApiResponse edit_stage(std::uint64_t id, int stage, const nlohmann::json& body);
  ApiResponse vote(std::uint64_t id, const nlohmann::json& body);
  ApiResponse commit(std::uint64_t id);
  ApiResponse list_records() const;
  ApiResponse get_record(std::uint64_t id) const;

  RecordStore& store_;
  AnnotationConfig config_;
  mutable std::mutex mutex_;
  std::map<std::uint64_t, AnnotationTask> tasks_;
  std::uint64_t next_id_ = 1;
};

nlohmann::json session_to_json(const AnnotationSession& s, const std::string& mode);
nlohmann::json task_to_json(const AnnotationTask& t);

/// The router behind an HTTP listener.
class ApiServer {
 public:
  explicit ApiServer(AnnotationService& service);
  ~ApiServer();

  /// Port 0 picks a free port. Returns the bound port; throws on failure.
  int bind(const std::string& host, int port);
  /// Blocks until stop() is called from another thread.
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

/// Serves the router over HTTP until the process is stopped.
void serve(AnnotationService& service, const std::string& host, int port);

}  // namespace metaplan
