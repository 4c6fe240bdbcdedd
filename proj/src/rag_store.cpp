#include "metaplan/rag_store.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <mutex>
#include <sstream>

#include "metaplan/json_io.hpp"
#include "metaplan/simd/kernels.hpp"

namespace metaplan {

std::vector<std::string> tokenize(std::string_view text) {
  std::vector<std::string> out;
  std::string cur;
  for (char c : text) {
    unsigned char u = static_cast<unsigned char>(c);
    if (std::isalnum(u)) {
      cur.push_back(static_cast<char>(std::tolower(u)));
    } else if (!cur.empty()) {
      out.push_back(std::move(cur));
      cur.clear();
    }
  }
  if (!cur.empty()) out.push_back(std::move(cur));
  return out;
}

std::vector<std::string> embedding_tokens(std::string_view instruction, const SceneGraph& scene) {
  auto tokens = tokenize(instruction);
  for (const auto& n : scene.nodes) tokens.push_back(n.name);
  for (const auto& e : scene.edges)
    tokens.push_back(std::string(to_string(e.relation)) + "(" + e.subject + "," + e.object + ")");
  return tokens;
}

TokenSlot token_slot(std::string_view token) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : token) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return {static_cast<std::size_t>(h % kEmbeddingDim), (h >> 63) ? -1.0 : 1.0};
}

Embedding embedding_from_vector(std::vector<double> v) {
  Embedding e;
  e.norm = std::sqrt(simd::squared_norm(v));
  e.vector = std::move(v);
  return e;
}

Embedding embed(std::string_view instruction, const SceneGraph& scene) {
  std::vector<double> v(kEmbeddingDim, 0.0);
  for (const auto& t : embedding_tokens(instruction, scene)) {
    auto slot = token_slot(t);
    v[slot.bucket] += slot.sign;
  }
  return embedding_from_vector(std::move(v));
}

double cosine(const Embedding& a, const Embedding& b) {
  if (a.is_zero() || b.is_zero()) return 0.0;
  return simd::dot(a.vector, b.vector) / (a.norm * b.norm);
}

std::string_view to_string(RecordStatus s) {
  switch (s) {
    case RecordStatus::Pending: return "pending";
    case RecordStatus::Verified: return "verified";
    case RecordStatus::Rejected: return "rejected";
  }
  return "?";
}

std::optional<RecordStatus> record_status_from_string(std::string_view s) {
  if (s == "pending") return RecordStatus::Pending;
  if (s == "verified") return RecordStatus::Verified;
  if (s == "rejected") return RecordStatus::Rejected;
  return std::nullopt;
}

std::string_view to_string(GateDecision d) { return d == GateDecision::Add ? "add" : "skip"; }

double object_similarity(const std::set<std::string>& a, const std::set<std::string>& b) {
  if (a.empty() && b.empty()) return 1.0;
  std::size_t inter = 0;
  for (const auto& x : a) inter += b.count(x);
  std::size_t uni = a.size() + b.size() - inter;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

std::size_t plan_edit_distance(const std::vector<MetaAction>& a, const std::vector<MetaAction>& b) {
  std::vector<std::string> la, lb;
  for (const auto& x : a) la.push_back(serialize(x));
  for (const auto& x : b) lb.push_back(serialize(x));
  std::vector<std::size_t> prev(lb.size() + 1), cur(lb.size() + 1);
  for (std::size_t j = 0; j <= lb.size(); ++j) prev[j] = j;
  for (std::size_t i = 1; i <= la.size(); ++i) {
    cur[0] = i;
    for (std::size_t j = 1; j <= lb.size(); ++j) {
      std::size_t sub = prev[j - 1] + (la[i - 1] == lb[j - 1] ? 0 : 1);
      cur[j] = std::min({prev[j] + 1, cur[j - 1] + 1, sub});
    }
    std::swap(prev, cur);
  }
  return prev[lb.size()];
}

double sequence_similarity(const Plan& a, const Plan& b) {
  std::size_t longest = std::max(a.actions.size(), b.actions.size());
  if (longest == 0) return 1.0;
  return 1.0 - static_cast<double>(plan_edit_distance(a.actions, b.actions)) / static_cast<double>(longest);
}

GateResult augmentation_gate(const PlanRecord& candidate, std::span<const PlanRecord> records,
                             const GateThresholds& thresholds) {
  GateResult result;
  double worst = -1.0;
  for (const auto& r : records) {
    SimilarityScores s{object_similarity(candidate.relevant_objects, r.relevant_objects),
                       sequence_similarity(candidate.plan, r.plan)};
    result.scores.push_back({r.id, s});
    if (s.object_similarity >= thresholds.object || s.sequence_similarity >= thresholds.sequence) {
      result.decision = GateDecision::Skip;
      double combined = s.object_similarity + s.sequence_similarity;
      if (combined > worst || (combined == worst && r.id < *result.blocking_id)) {
        worst = combined;
        result.blocking_id = r.id;
      }
    }
  }
  return result;
}

std::vector<RankedRecord> rank_records(const Embedding& query, std::span<const PlanRecord> records) {
  std::vector<const PlanRecord*> verified;
  for (const auto& r : records)
    if (r.status == RecordStatus::Verified) verified.push_back(&r);
  std::vector<RankedRecord> ranked;
  ranked.reserve(verified.size());
  if (!verified.empty() && !query.is_zero() && query.vector.size() == kEmbeddingDim) {
    std::vector<double> rows;
    rows.reserve(verified.size() * kEmbeddingDim);
    for (const auto* r : verified) rows.insert(rows.end(), r->embedding.vector.begin(), r->embedding.vector.end());
    std::vector<double> dots(verified.size());
    simd::dot_many(query.vector, rows, dots);
    for (std::size_t i = 0; i < verified.size(); ++i) {
      double denom = query.norm * verified[i]->embedding.norm;
      ranked.push_back({verified[i]->id, denom > 0 ? dots[i] / denom : 0.0});
    }
  } else {
    for (const auto* r : verified) ranked.push_back({r->id, 0.0});
  }
  std::stable_sort(ranked.begin(), ranked.end(), [](const RankedRecord& a, const RankedRecord& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.id < b.id;
  });
  return ranked;
}

json vote_to_json(const Vote& v) {
  return json{{"verdict", v.verdict}, {"annotator", v.annotator}, {"timestamp", v.timestamp}};
}

Vote vote_from_json(const json& j) {
  return Vote{j.at("verdict").get<std::string>(), j.at("annotator").get<std::string>(),
              j.value("timestamp", std::string{})};
}

json record_to_json(const PlanRecord& r) {
  json votes = json::array();
  for (const auto& v : r.votes) votes.push_back(vote_to_json(v));
  return json{{"type", "record"},
              {"id", r.id},
              {"instruction", r.instruction},
              {"scene", r.scene},
              {"embedding", r.embedding.vector},
              {"prompt_cache", r.prompt_cache},
              {"task_id", r.plan.task_id},
              {"plan", plan_to_json(r.plan.actions)},
              {"relevant_objects", r.relevant_objects},
              {"status", std::string(to_string(r.status))},
              {"votes", votes}};
}

PlanRecord record_from_json(const json& j) {
  PlanRecord r;
  r.id = j.at("id").get<std::uint64_t>();
  r.instruction = j.at("instruction").get<std::string>();
  r.scene = j.at("scene").get<SceneGraph>();
  r.embedding = embedding_from_vector(j.at("embedding").get<std::vector<double>>());
  r.prompt_cache = j.at("prompt_cache").get<PromptCache>();
  r.plan = Plan{j.value("task_id", std::string{}), plan_from_json(j.at("plan"))};
  r.relevant_objects = j.at("relevant_objects").get<std::set<std::string>>();
  auto status = record_status_from_string(j.at("status").get<std::string>());
  if (!status) throw StoreError("unknown record status");
  r.status = *status;
  for (const auto& v : j.at("votes")) r.votes.push_back(vote_from_json(v));
  return r;
}

namespace {

std::string header_line() { return json{{"schema", kStoreSchema}, {"dim", kEmbeddingDim}}.dump(); }

void validate_record(const PlanRecord& r) {
  if (r.embedding.vector.size() != kEmbeddingDim) throw StoreError("embedding dimension mismatch");
  if (r.embedding.is_zero()) throw StoreError("zero embedding is not storable");
  if (r.plan.actions.empty()) throw StoreError("record plan is empty");
  // Demonstrations start from an open gripper; only linkage is enforced here.
  auto report = validate_chain(r.plan.actions, r.plan.actions.front().pre);
  if (!report.ok()) throw StoreError("record plan fails chain validation: " + report.describe());
}

}  // namespace

RecordStore::RecordStore(std::filesystem::path path) : path_(std::move(path)) {
  std::ifstream in(*path_);
  if (!in) {
    if (path_->has_parent_path()) std::filesystem::create_directories(path_->parent_path());
    write_line(header_line());
    return;
  }
  std::string line;
  std::size_t line_no = 0;
  bool saw_header = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    try {
      json j = json::parse(line);
      if (!saw_header) {
        if (j.value("schema", 0) != kStoreSchema) throw StoreError("unsupported store schema");
        if (j.value("dim", std::size_t{0}) != kEmbeddingDim) throw StoreError("store dimension mismatch");
        saw_header = true;
        continue;
      }
      std::string type = j.at("type").get<std::string>();
      if (type == "record") {
        records_.push_back(record_from_json(j));
      } else if (type == "vote") {
        auto* r = find_locked(j.at("id").get<std::uint64_t>());
        if (!r) throw StoreError("vote for unknown record");
        r->votes.push_back(vote_from_json(j.at("vote")));
      } else if (type == "status") {
        auto* r = find_locked(j.at("id").get<std::uint64_t>());
        auto status = record_status_from_string(j.at("status").get<std::string>());
        if (!r || !status) throw StoreError("bad status amendment");
        r->status = *status;
      } else {
        throw StoreError("unknown line type '" + type + "'");
      }
    } catch (const std::exception& e) {
      throw StoreError(path_->string() + ":" + std::to_string(line_no) + ": " + e.what());
    }
  }
  if (!saw_header) write_line(header_line());
}

void RecordStore::write_line(const std::string& line) {
  if (!path_) return;
  std::ofstream out(*path_, std::ios::app | std::ios::binary);
  if (!out) throw StoreError("cannot append to " + path_->string());
  out << line << '\n';
  out.flush();
  if (!out) throw StoreError("write to " + path_->string() + " failed");
}

std::shared_lock<std::shared_mutex> RecordStore::read_lock() const {
  std::lock_guard gate(turnstile_);
  return std::shared_lock(mutex_);
}

std::unique_lock<std::shared_mutex> RecordStore::write_lock() {
  std::lock_guard gate(turnstile_);
  return std::unique_lock(mutex_);
}

PlanRecord* RecordStore::find_locked(std::uint64_t id) {
  for (auto& r : records_)
    if (r.id == id) return &r;
  return nullptr;
}

std::vector<PlanRecord> RecordStore::records() const {
  auto lock = read_lock();
  return records_;
}

std::optional<PlanRecord> RecordStore::find(std::uint64_t id) const {
  auto lock = read_lock();
  for (const auto& r : records_)
    if (r.id == id) return r;
  return std::nullopt;
}

std::size_t RecordStore::size() const {
  auto lock = read_lock();
  return records_.size();
}

std::uint64_t RecordStore::append_locked(PlanRecord record) {
  validate_record(record);
  if (record.id == 0) {
    std::uint64_t max_id = 0;
    for (const auto& r : records_) max_id = std::max(max_id, r.id);
    record.id = max_id + 1;
  } else if (find_locked(record.id)) {
    throw StoreError("duplicate record id " + std::to_string(record.id));
  }
  write_line(record_to_json(record).dump());
  records_.push_back(std::move(record));
  return records_.back().id;
}

std::uint64_t RecordStore::append(PlanRecord record) {
  auto lock = write_lock();
  return append_locked(std::move(record));
}

void RecordStore::add_vote(std::uint64_t id, const Vote& vote) {
  auto lock = write_lock();
  auto* r = find_locked(id);
  if (!r) throw StoreError("no record " + std::to_string(id));
  write_line(json{{"type", "vote"}, {"id", id}, {"vote", vote_to_json(vote)}}.dump());
  r->votes.push_back(vote);
}

void RecordStore::set_status(std::uint64_t id, RecordStatus status) {
  auto lock = write_lock();
  auto* r = find_locked(id);
  if (!r) throw StoreError("no record " + std::to_string(id));
  write_line(json{{"type", "status"}, {"id", id}, {"status", std::string(to_string(status))}}.dump());
  r->status = status;
}

GateResult RecordStore::gate_and_add(PlanRecord candidate, const GateThresholds& thresholds) {
  if (candidate.status != RecordStatus::Verified) throw StoreError("only verified tasks can enter the store");
  auto lock = write_lock();
  GateResult result = augmentation_gate(candidate, records_, thresholds);
  if (result.decision == GateDecision::Add) result.added_id = append_locked(std::move(candidate));
  return result;
}

std::vector<RankedRecord> RecordStore::rank(const Embedding& query) const {
  auto lock = read_lock();
  return rank_records(query, records_);
}

RetrievalResult RecordStore::retrieve(const Embedding& query, std::size_t k, ConversationModel& model,
                                      std::string_view query_instruction) const {
  if (k == 0) throw std::invalid_argument("k must be at least 1");
  RetrievalResult result;
  std::vector<PlanRecord> candidates;
  {
    auto lock = read_lock();
    auto ranked = rank_records(query, records_);
    if (ranked.empty()) return result;
    ranked.resize(std::min(k, ranked.size()));
    result.top_k = ranked;
    for (const auto& rr : ranked)
      for (const auto& r : records_)
        if (r.id == rr.id) candidates.push_back(r);
  }

  std::ostringstream prompt;
  prompt << "A new task needs a demonstration: \"" << query_instruction << "\".\n"
         << "Candidate demonstrations:\n";
  for (std::size_t i = 0; i < candidates.size(); ++i) {
    prompt << (i + 1) << ". " << candidates[i].instruction << " (objects:";
    for (const auto& o : candidates[i].relevant_objects) prompt << ' ' << o;
    prompt << ")\n";
  }
  prompt << "Reply with the number of the most similar demonstration.";
  std::string reply = model.reply({Message{Role::User, prompt.str(), std::nullopt}}, ModelQuery{"retrieve", {}});

  std::size_t pick = 0;
  auto digit = std::find_if(reply.begin(), reply.end(), [](unsigned char c) { return std::isdigit(c); });
  if (digit != reply.end()) {
    auto end = std::find_if(digit, reply.end(), [](unsigned char c) { return !std::isdigit(c); });
    std::string num(digit, end);
    if (num.size() <= 6) pick = static_cast<std::size_t>(std::stoul(num));
  }
  if (pick < 1 || pick > candidates.size()) {
    result.selection_out_of_range = true;
    pick = 1;
  }
  result.picked_rank = pick;
  result.record = candidates[pick - 1];
  return result;
}

void RecordStore::compact() {
  auto lock = write_lock();
  if (!path_) return;
  auto tmp = *path_;
  tmp += ".compact";
  {
    std::ofstream out(tmp, std::ios::trunc | std::ios::binary);
    if (!out) throw StoreError("cannot write " + tmp.string());
    out << header_line() << '\n';
    for (const auto& r : records_) out << record_to_json(r).dump() << '\n';
    out.flush();
    if (!out) throw StoreError("write to " + tmp.string() + " failed");
  }
  std::filesystem::rename(tmp, *path_);
}

}  // namespace metaplan
