#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <optional>
#include <set>
#include <shared_mutex>
#include <span>
#include <string>
#include <vector>

#include "metaplan/conversation.hpp"
#include "metaplan/meta_action.hpp"
#include "metaplan/scene_graph.hpp"

namespace metaplan {

inline constexpr std::size_t kEmbeddingDim = 256;
inline constexpr int kStoreSchema = 1;

struct Embedding {
  std::vector<double> vector;  // kEmbeddingDim entries
  double norm = 0.0;

  bool is_zero() const { return norm == 0.0; }
  bool operator==(const Embedding&) const = default;
};

/// Lowercased alphanumeric words of an instruction.
std::vector<std::string> tokenize(std::string_view text);

/// Feature-hashing tokens of a task: instruction words, scene node names and
/// "relation(subject,object)" edge strings.
std::vector<std::string> embedding_tokens(std::string_view instruction, const SceneGraph& scene);

struct TokenSlot {
  std::size_t bucket;
  double sign;  // +1 or -1
};

/// FNV-1a 64 of the token; bucket = hash mod D, sign from the top bit.
TokenSlot token_slot(std::string_view token);

/// Signed bag-of-tokens embedding. Identical inputs give identical vectors;
/// an input with no tokens gives the zero vector.
Embedding embed(std::string_view instruction, const SceneGraph& scene);
Embedding embedding_from_vector(std::vector<double> v);

/// Cosine similarity via the dispatched SIMD kernel; 0 when either side is zero.
double cosine(const Embedding& a, const Embedding& b);

enum class RecordStatus { Pending, Verified, Rejected };
std::string_view to_string(RecordStatus s);
std::optional<RecordStatus> record_status_from_string(std::string_view s);

struct Vote {
  std::string verdict;  // "correct" | "incorrect"
  std::string annotator;
  std::string timestamp;

  bool operator==(const Vote&) const = default;
};

/// A demonstration row.
struct PlanRecord {
  std::uint64_t id = 0;
  std::string instruction;
  SceneGraph scene;
  Embedding embedding;
  PromptCache prompt_cache;
  Plan plan;
  std::set<std::string> relevant_objects;
  RecordStatus status = RecordStatus::Pending;
  std::vector<Vote> votes;

  bool operator==(const PlanRecord&) const = default;
};

struct SimilarityScores {
  double object_similarity = 0.0;
  double sequence_similarity = 0.0;
};

/// Jaccard index; two empty sets are identical (1.0).
double object_similarity(const std::set<std::string>& a, const std::set<std::string>& b);

/// Edit distance over whole meta-action lines, normalized by the longer plan.
std::size_t plan_edit_distance(const std::vector<MetaAction>& a, const std::vector<MetaAction>& b);
double sequence_similarity(const Plan& a, const Plan& b);

struct GateThresholds {
  double object = 0.6;
  double sequence = 0.7;
};

enum class GateDecision { Add, Skip };
std::string_view to_string(GateDecision d);

struct RecordScores {
  std::uint64_t record_id = 0;
  SimilarityScores scores;
};

struct GateResult {
  GateDecision decision = GateDecision::Add;
  std::vector<RecordScores> scores;  // one entry per existing record, in store order
  std::optional<std::uint64_t> added_id;
  std::optional<std::uint64_t> blocking_id;  // most similar record when skipped
};

/// Add iff every record scores below both thresholds. Pure; does not mutate.
GateResult augmentation_gate(const PlanRecord& candidate, std::span<const PlanRecord> records,
                             const GateThresholds& thresholds = {});

struct RankedRecord {
  std::uint64_t id = 0;
  double score = 0.0;
};

/// Verified records by descending cosine similarity, ties by ascending id.
std::vector<RankedRecord> rank_records(const Embedding& query, std::span<const PlanRecord> records);

struct RetrievalResult {
  std::optional<PlanRecord> record;
  std::vector<RankedRecord> top_k;
  std::optional<std::size_t> picked_rank;  // 1-based rank the model chose
  bool selection_out_of_range = false;     // reply was unusable; fell back to rank 1
};

class StoreError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Demonstration database. Many concurrent readers, one writer at a time;
/// every mutation is appended to the backing JSON-lines file and flushed
/// before the call returns.
class RecordStore {
 public:
  /// In-memory store.
  RecordStore() = default;
  /// Loads `path` (folding amendments) or creates it with a header line.
  explicit RecordStore(std::filesystem::path path);

  RecordStore(const RecordStore&) = delete;
  RecordStore& operator=(const RecordStore&) = delete;

  const std::optional<std::filesystem::path>& path() const { return path_; }

  std::vector<PlanRecord> records() const;
  std::optional<PlanRecord> find(std::uint64_t id) const;
  std::size_t size() const;

  /// Appends a record; assigns the next id when record.id == 0.
  /// Throws StoreError for zero embeddings, wrong dimension, duplicate ids,
  /// or a plan that fails chain validation.
  std::uint64_t append(PlanRecord record);

  void add_vote(std::uint64_t id, const Vote& vote);
  void set_status(std::uint64_t id, RecordStatus status);

  /// Runs the gate against a consistent snapshot and, on Add, appends the
  /// candidate within the same critical section. The candidate must be Verified.
  GateResult gate_and_add(PlanRecord candidate, const GateThresholds& thresholds = {});

  std::vector<RankedRecord> rank(const Embedding& query) const;

  /// Top-k by cosine, then the model picks one by 1-based index ("retrieve" tag).
  RetrievalResult retrieve(const Embedding& query, std::size_t k, ConversationModel& model,
                           std::string_view query_instruction = {}) const;

  /// Rewrites the backing file as header + folded records.
  void compact();

 private:
  void write_line(const std::string& line);
  std::uint64_t append_locked(PlanRecord record);
  PlanRecord* find_locked(std::uint64_t id);
  std::shared_lock<std::shared_mutex> read_lock() const;
  std::unique_lock<std::shared_mutex> write_lock();

  std::optional<std::filesystem::path> path_;
  mutable std::shared_mutex mutex_;
  mutable std::mutex turnstile_;  // a waiting writer holds it so new readers queue behind
  std::vector<PlanRecord> records_;
};

}  // namespace metaplan
