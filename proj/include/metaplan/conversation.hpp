#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "metaplan/scene_graph.hpp"

namespace metaplan {

enum class Role { System, User, Assistant };

std::string_view to_string(Role r);
std::optional<Role> role_from_string(std::string_view s);

struct Message {
  Role role = Role::User;
  std::string text;
  std::optional<SceneGraph> scene_payload;  // never set on Assistant messages

  bool operator==(const Message&) const = default;
};

/// The recorded conversation of a planning run, replayed as an in-context demonstration.
struct PromptCache {
  std::vector<Message> messages;
  std::string model_tag;
  std::string created_at;

  bool operator==(const PromptCache&) const = default;

  /// Empty when leading System messages are followed by strictly alternating
  /// User/Assistant turns and no Assistant turn carries a scene payload.
  std::string validation_error() const;
};

/// Hex FNV-1a digest over roles, texts and scene payload texts.
std::string conversation_digest(const std::vector<Message>& messages);

class ModelError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// What a call is for. Live adapters ignore it; the scripted adapter uses it to
/// pick the transcript record. Tags: "1".."5", "repair", "retrieve", "locate", "select".
struct ModelQuery {
  std::string tag;
  std::optional<int> action_index;  // executor calls: index of the meta-action
};

/// Produces one Assistant reply for a conversation.
class ConversationModel {
 public:
  virtual ~ConversationModel() = default;
  virtual std::string reply(const std::vector<Message>& conversation, const ModelQuery& query) = 0;
  virtual std::string model_tag() const = 0;
};

struct TranscriptRecord {
  std::string stage;
  std::string reply;
  std::optional<int> action_index;
  std::optional<std::string> digest;
};

struct Transcript {
  std::vector<TranscriptRecord> records;
  std::map<std::string, std::string> defaults;
};

/// A transcript file: one or more variants sharing defaults. Trial i of a
/// suite replays variant i mod variants.size().
struct TranscriptFile {
  int version = 1;
  std::string label;
  std::vector<Transcript> variants;

  const Transcript& variant_for(std::size_t trial) const { return variants[trial % variants.size()]; }
};

inline constexpr int kTranscriptVersion = 1;

/// Throws std::runtime_error on malformed files.
TranscriptFile load_transcript(const std::filesystem::path& path);
TranscriptFile parse_transcript(std::string_view json_text);

/// Replays a transcript. Each call takes the first unconsumed record whose
/// stage equals the query tag and whose optional action index and digest match.
/// Planner stages without a record raise ModelError; executor and retrieval
/// tags fall back to `defaults`, then to an empty reply.
class ScriptedModel final : public ConversationModel {
 public:
  explicit ScriptedModel(Transcript transcript, std::string tag = "scripted");

  std::string reply(const std::vector<Message>& conversation, const ModelQuery& query) override;
  std::string model_tag() const override { return tag_; }

  std::size_t calls() const { return calls_; }

 private:
  Transcript transcript_;
  std::vector<bool> consumed_;
  std::string tag_;
  std::size_t calls_ = 0;
};

/// OpenAI-style chat-completions adapter for manual live runs.
class HttpChatModel final : public ConversationModel {
 public:
  struct Options {
    std::string base_url = "https://api.openai.com";
    std::string api_key;
    std::string model = "gpt-4o";
    double temperature = 0.0;
    int timeout_seconds = 120;
  };

  explicit HttpChatModel(Options options);

  std::string reply(const std::vector<Message>& conversation, const ModelQuery& query) override;
  std::string model_tag() const override { return options_.model; }

 private:
  Options options_;
};

using Clock = std::function<std::string()>;

/// UTC ISO-8601 wall clock with millisecond precision.
Clock system_clock();
/// Returns the same timestamp on every call.
Clock fixed_clock(std::string timestamp);

}  // namespace metaplan
