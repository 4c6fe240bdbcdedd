#include <doctest.h>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <functional>
#include <map>
#include <random>
#include <sstream>
#include <thread>

#include "metaplan/rag_store.hpp"

using namespace metaplan;

namespace {

const std::vector<std::string> kNames = {"cup", "burger", "pen", "pen holder", "drawer handle", "bin"};

const std::vector<std::string> kLines = {
    "opened, move to, above, cup, opened",   "opened, move to, on, cup, closed",
    "closed, move to, up, , closed",         "closed, move to, into, bin, opened",
    "opened, move to, front on, burger, closed", "closed, rotate to, up, , closed",
};

struct TempFile {
  std::filesystem::path path;
  explicit TempFile(const std::string& name)
      : path(std::filesystem::temp_directory_path() / ("metaplan_" + name + "_" + std::to_string(::getpid()))) {
    std::filesystem::remove(path);
  }
  ~TempFile() {
    std::filesystem::remove(path);
    std::filesystem::remove(path.string() + ".compact");
  }
};

std::string slurp(const std::filesystem::path& p) {
  std::ifstream in(p, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

// FNV-1a 64 written out independently of the library.
std::uint64_t oracle_fnv(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (std::size_t i = 0; i < s.size(); ++i) h = (h ^ static_cast<std::uint8_t>(s[i])) * 0x100000001b3ull;
  return h;
}

std::vector<MetaAction> chain_plan(std::mt19937_64& rng, std::size_t n) {
  std::vector<MetaAction> out;
  GripperState state = GripperState::Open;
  for (std::size_t i = 0; i < n; ++i) {
    MetaAction a = parse_meta_action(kLines[rng() % kLines.size()]);
    a.pre = state;
    state = a.post;
    out.push_back(a);
  }
  return out;
}

SceneGraph scene_of(const std::vector<std::string>& names) {
  SceneGraph g;
  for (const auto& n : names) g.nodes.push_back({n, n, {}});
  return g;
}

PlanRecord make_record(std::string instruction, std::vector<std::string> objects, std::vector<MetaAction> plan,
                       RecordStatus status = RecordStatus::Verified) {
  PlanRecord r;
  r.instruction = std::move(instruction);
  r.scene = scene_of(objects);
  r.embedding = embed(r.instruction, r.scene);
  r.plan = Plan{"t", std::move(plan)};
  r.relevant_objects = {objects.begin(), objects.end()};
  r.status = status;
  r.prompt_cache.messages.push_back({Role::System, "system", std::nullopt});
  return r;
}

std::set<std::string> random_subset(std::mt19937_64& rng, std::size_t max_size) {
  std::set<std::string> s;
  std::size_t n = rng() % (max_size + 1);
  while (s.size() < n) s.insert(kNames[rng() % kNames.size()]);
  return s;
}

double oracle_jaccard(const std::set<std::string>& a, const std::set<std::string>& b) {
  std::vector<std::string> inter, uni;
  std::set_intersection(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(inter));
  std::set_union(a.begin(), a.end(), b.begin(), b.end(), std::back_inserter(uni));
  if (uni.empty()) return 1.0;
  return static_cast<double>(inter.size()) / static_cast<double>(uni.size());
}

// Top-down memoized edit distance over serialized lines.
std::size_t oracle_edit(const std::vector<std::string>& a, const std::vector<std::string>& b) {
  std::map<std::pair<std::size_t, std::size_t>, std::size_t> memo;
  std::function<std::size_t(std::size_t, std::size_t)> d = [&](std::size_t i, std::size_t j) -> std::size_t {
    if (i == a.size()) return b.size() - j;
    if (j == b.size()) return a.size() - i;
    auto key = std::make_pair(i, j);
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    std::size_t best = std::min(d(i + 1, j), d(i, j + 1)) + 1;
    best = std::min(best, d(i + 1, j + 1) + (a[i] == b[j] ? 0 : 1));
    return memo[key] = best;
  };
  return d(0, 0);
}

std::vector<std::string> lines_of(const std::vector<MetaAction>& p) {
  std::vector<std::string> out;
  for (const auto& a : p) out.push_back(serialize(a));
  return out;
}

class PickModel : public ConversationModel {
 public:
  explicit PickModel(std::string reply) : reply_(std::move(reply)) {}
  std::string reply(const std::vector<Message>&, const ModelQuery& q) override {
    last_tag = q.tag;
    return reply_;
  }
  std::string model_tag() const override { return "pick"; }
  std::string last_tag;

 private:
  std::string reply_;
};

}  // namespace

TEST_CASE("tokenizer lowercases alphanumeric words") {
  CHECK(tokenize("Put the Pen, into the pen-holder!") ==
        std::vector<std::string>{"put", "the", "pen", "into", "the", "pen", "holder"});
  CHECK(tokenize(" ,.; ").empty());
}

TEST_CASE("token slots follow FNV-1a") {
  CHECK(oracle_fnv("a") == 0xaf63dc4c8601ec8cull);
  for (const std::string t : {"a", "cup", "on(cup,table)", "pen holder", ""}) {
    std::uint64_t h = oracle_fnv(t);
    TokenSlot s = token_slot(t);
    CHECK(s.bucket == h % 256);
    CHECK(s.sign == ((h >> 63) ? -1.0 : 1.0));
  }
}

TEST_CASE("embedding is the signed token histogram") {
  SceneGraph g = scene_of({"cup", "table"});
  g.edges.push_back({"cup", Relation::On, "table"});
  Embedding e = embed("Pick up the cup", g);
  std::vector<double> expected(256, 0.0);
  for (const std::string t : {"pick", "up", "the", "cup", "cup", "table", "on(cup,table)"}) {
    std::uint64_t h = oracle_fnv(t);
    expected[h % 256] += (h >> 63) ? -1.0 : 1.0;
  }
  CHECK(e.vector == expected);
  double n2 = 0;
  for (double x : expected) n2 += x * x;
  CHECK(e.norm == doctest::Approx(std::sqrt(n2)));
  CHECK(embed("Pick up the cup", g) == e);
  CHECK(embed("", SceneGraph{}).is_zero());
  CHECK(cosine(e, embed("", SceneGraph{})) == 0.0);
  CHECK(cosine(e, e) == doctest::Approx(1.0));
}

TEST_CASE("similarities match brute force on 400 pairs") {
  std::mt19937_64 rng(31);
  std::vector<std::set<std::string>> sets;
  std::vector<std::vector<MetaAction>> plans;
  for (int i = 0; i < 20; ++i) {
    sets.push_back(random_subset(rng, 5));
    plans.push_back(chain_plan(rng, rng() % 6));
  }
  sets[0].clear();
  plans[0].clear();
  int pairs = 0;
  for (std::size_t i = 0; i < sets.size(); ++i) {
    for (std::size_t j = 0; j < sets.size(); ++j) {
      CHECK(object_similarity(sets[i], sets[j]) == oracle_jaccard(sets[i], sets[j]));
      auto la = lines_of(plans[i]), lb = lines_of(plans[j]);
      std::size_t d = oracle_edit(la, lb);
      CHECK(plan_edit_distance(plans[i], plans[j]) == d);
      std::size_t longest = std::max(la.size(), lb.size());
      double expected = longest == 0 ? 1.0 : 1.0 - static_cast<double>(d) / static_cast<double>(longest);
      CHECK(sequence_similarity(Plan{"", plans[i]}, Plan{"", plans[j]}) == expected);
      ++pairs;
    }
  }
  CHECK(pairs >= 200);
}

TEST_CASE("gate decisions") {
  std::mt19937_64 rng(1);
  auto plan = chain_plan(rng, 4);
  PlanRecord a = make_record("put the cup in the bin", {"cup", "bin"}, plan);

  GateResult empty = augmentation_gate(a, {});
  CHECK(empty.decision == GateDecision::Add);
  CHECK(empty.scores.empty());

  RecordStore store;
  GateResult first = store.gate_and_add(a);
  REQUIRE(first.added_id);
  GateResult dup = store.gate_and_add(a);
  CHECK(dup.decision == GateDecision::Skip);
  CHECK(dup.blocking_id == first.added_id);
  REQUIRE(dup.scores.size() == 1);
  CHECK(dup.scores[0].scores.object_similarity == 1.0);
  CHECK(dup.scores[0].scores.sequence_similarity == 1.0);
  CHECK(store.size() == 1);

  // Disjoint objects and a plan sharing only one of four lines.
  PlanRecord b = make_record("open the drawer", {"drawer handle"},
                             parse_plan_text("opened, move to, front on, drawer handle, closed\n"
                                             "closed, move to, backward, , closed\n"
                                             "closed, move to, backward, , opened\n"
                                             "opened, move to, above, cup, opened\n"));
  GateResult novel = store.gate_and_add(b);
  CHECK(novel.decision == GateDecision::Add);

  PlanRecord pending = b;
  pending.status = RecordStatus::Pending;
  CHECK_THROWS_AS(store.gate_and_add(pending), StoreError);
}

TEST_CASE("gate thresholds are strict") {
  // Jaccard exactly 0.6 blocks; just below does not.
  PlanRecord base = make_record("x", {"a", "b", "c", "d"}, parse_plan_text("opened, move to, above, a, opened"));
  PlanRecord cand = make_record("y", {"a", "b", "c", "e"}, parse_plan_text("opened, move to, above, zz, opened"));
  PlanRecord at = make_record("z", {"a", "b", "c", "d", "e"}, parse_plan_text("opened, move to, above, q, opened"));
  std::vector<PlanRecord> records{base};
  records[0].id = 1;
  CHECK(object_similarity(cand.relevant_objects, base.relevant_objects) == doctest::Approx(0.6));
  CHECK(augmentation_gate(cand, records).decision == GateDecision::Skip);
  CHECK(object_similarity(at.relevant_objects, base.relevant_objects) == doctest::Approx(0.8));
  PlanRecord below = make_record("w", {"a", "b", "f", "g"}, parse_plan_text("opened, move to, above, r, opened"));
  CHECK(augmentation_gate(below, records).decision == GateDecision::Add);
}

TEST_CASE("gate is invariant under store order and the store only grows") {
  std::mt19937_64 rng(77);
  for (int seq = 0; seq < 100; ++seq) {
    RecordStore store;
    std::size_t last = 0;
    for (int step = 0; step < 12; ++step) {
      auto objs = random_subset(rng, 5);
      PlanRecord r = make_record("task " + std::to_string(step), {objs.begin(), objs.end()},
                                 chain_plan(rng, 1 + rng() % 5));
      if (r.embedding.is_zero()) continue;
      auto records = store.records();
      GateResult direct = augmentation_gate(r, records);
      std::shuffle(records.begin(), records.end(), rng);
      GateResult shuffled = augmentation_gate(r, records);
      CHECK(direct.decision == shuffled.decision);
      CHECK(direct.blocking_id == shuffled.blocking_id);
      store.gate_and_add(r);
      CHECK(store.size() >= last);
      CHECK(store.size() <= last + 1);
      last = store.size();
    }
  }
}

TEST_CASE("ranking equals exhaustive cosine sort") {
  std::mt19937_64 rng(5);
  RecordStore store;
  std::vector<std::string> words = {"pick", "place", "cup", "pen", "drawer", "open", "close", "bin", "mug"};
  for (int i = 0; i < 30; ++i) {
    std::string instr;
    for (int k = 0; k < 4; ++k) instr += words[rng() % words.size()] + " ";
    RecordStatus st = i % 5 == 4 ? RecordStatus::Pending : RecordStatus::Verified;
    store.append(make_record(instr, {kNames[rng() % kNames.size()]}, chain_plan(rng, 2), st));
  }
  Embedding q = embed("pick the cup and place it", scene_of({"cup"}));
  std::vector<std::pair<double, std::uint64_t>> oracle;
  for (const auto& r : store.records()) {
    if (r.status != RecordStatus::Verified) continue;
    double dotp = 0, nq = 0, nr = 0;
    for (std::size_t d = 0; d < 256; ++d) {
      dotp += q.vector[d] * r.embedding.vector[d];
      nq += q.vector[d] * q.vector[d];
      nr += r.embedding.vector[d] * r.embedding.vector[d];
    }
    oracle.push_back({dotp / std::sqrt(nq * nr), r.id});
  }
  std::sort(oracle.begin(), oracle.end(), [](auto& a, auto& b) {
    if (a.first != b.first) return a.first > b.first;
    return a.second < b.second;
  });
  auto ranked = store.rank(q);
  REQUIRE(ranked.size() == oracle.size());
  for (std::size_t i = 0; i < ranked.size(); ++i) {
    CHECK(ranked[i].id == oracle[i].second);
    CHECK(ranked[i].score == doctest::Approx(oracle[i].first).epsilon(1e-12));
  }
}

TEST_CASE("retrieval asks the model to pick among the top k") {
  RecordStore store;
  std::mt19937_64 rng(2);
  store.append(make_record("put the pen in the holder", {"pen", "pen holder"}, chain_plan(rng, 3)));
  store.append(make_record("open the drawer", {"drawer handle"}, chain_plan(rng, 3)));
  store.append(make_record("put the cup in the bin", {"cup", "bin"}, chain_plan(rng, 3)));
  Embedding q = embed("put the pen in the holder", scene_of({"pen", "pen holder"}));

  PickModel second("I choose 2.");
  RetrievalResult r = store.retrieve(q, 2, second, "put the pen in the holder");
  CHECK(second.last_tag == "retrieve");
  REQUIRE(r.top_k.size() == 2);
  CHECK(r.top_k[0].id == 1);
  CHECK(r.picked_rank == 2u);
  CHECK(r.record->id == r.top_k[1].id);
  CHECK_FALSE(r.selection_out_of_range);

  PickModel bad("none of them");
  RetrievalResult fb = store.retrieve(q, 2, bad);
  CHECK(fb.selection_out_of_range);
  CHECK(fb.record->id == 1);
  PickModel big("7");
  CHECK(store.retrieve(q, 2, big).selection_out_of_range);

  RecordStore empty;
  CHECK_FALSE(empty.retrieve(q, 3, second).record);
  CHECK_THROWS_AS(store.retrieve(q, 0, second), std::invalid_argument);
}

TEST_CASE("records that cannot be stored") {
  RecordStore store;
  std::mt19937_64 rng(3);
  PlanRecord zero = make_record("", {}, chain_plan(rng, 2));
  CHECK(zero.embedding.is_zero());
  CHECK_THROWS_AS(store.append(zero), StoreError);
  PlanRecord broken = make_record("x", {"cup"}, parse_plan_text("opened, move to, on, cup, closed\n"
                                                                  "opened, move to, up, , opened\n"));
  CHECK_THROWS_AS(store.append(broken), StoreError);
  PlanRecord ok = make_record("x", {"cup"}, chain_plan(rng, 2));
  ok.id = 9;
  store.append(ok);
  CHECK_THROWS_AS(store.append(ok), StoreError);
}

TEST_CASE("file round trip preserves ranking and folds amendments") {
  TempFile file("roundtrip.jsonl");
  std::mt19937_64 rng(44);
  std::vector<std::string> words = {"stack", "the", "red", "blue", "block", "cup", "pour", "water", "wipe"};
  Embedding q = embed("stack the red block on the blue block", scene_of({"red block", "blue block"}));
  std::string before;
  {
    RecordStore store(file.path);
    for (int i = 0; i < 20; ++i) {
      std::string instr;
      for (int k = 0; k < 5; ++k) instr += words[rng() % words.size()] + " ";
      store.append(make_record(instr, {kNames[rng() % kNames.size()], "table"}, chain_plan(rng, 1 + rng() % 4)));
    }
    store.add_vote(3, Vote{"incorrect", "ann", "2026-01-01T00:00:00.000Z"});
    store.set_status(3, RecordStatus::Rejected);
    for (const auto& r : store.rank(q)) before += std::to_string(r.id) + ",";
  }
  RecordStore reloaded(file.path);
  CHECK(reloaded.size() == 20);
  std::string after;
  for (const auto& r : reloaded.rank(q)) after += std::to_string(r.id) + ",";
  CHECK(after == before);
  CHECK(before.find("3,") != 0);
  auto three = reloaded.find(3);
  REQUIRE(three);
  CHECK(three->status == RecordStatus::Rejected);
  CHECK(three->votes.size() == 1);

  auto records = reloaded.records();
  reloaded.compact();
  std::string compacted = slurp(file.path);
  CHECK(std::count(compacted.begin(), compacted.end(), '\n') == 21);
  RecordStore again(file.path);
  CHECK(again.records() == records);
}

TEST_CASE("corrupt store files are reported with the line") {
  TempFile file("corrupt.jsonl");
  {
    std::ofstream out(file.path);
    out << "{\"dim\":256,\"schema\":1}\n{\"type\":\"vote\",\"id\":5,\"vote\":{}}\n";
  }
  try {
    RecordStore s(file.path);
    FAIL("expected StoreError");
  } catch (const StoreError& e) {
    CHECK(std::string(e.what()).find(":2:") != std::string::npos);
  }
}

TEST_CASE("concurrent readers with one writer") {
  RecordStore store;
  std::mt19937_64 rng(8);
  for (int i = 0; i < 5; ++i) store.append(make_record("seed " + std::to_string(i), {"cup"}, chain_plan(rng, 2)));
  Embedding q = embed("seed", scene_of({"cup"}));
  std::atomic<bool> done{false};
  std::vector<std::thread> readers;
  std::atomic<int> bad{0};
  for (int t = 0; t < 4; ++t)
    readers.emplace_back([&] {
      while (!done) {
        auto ranked = store.rank(q);
        if (ranked.size() < 5) ++bad;
      }
    });
  std::mt19937_64 wrng(9);
  for (int i = 0; i < 50; ++i) store.append(make_record("more " + std::to_string(i), {"bin"}, chain_plan(wrng, 2)));
  done = true;
  for (auto& t : readers) t.join();
  CHECK(bad == 0);
  CHECK(store.size() == 55);
}
