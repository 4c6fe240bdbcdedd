#include <doctest.h>

#include <httplib.h>
#include <thread>
#include <unistd.h>

#include "metaplan/annotation_api.hpp"
#include "metaplan/json_io.hpp"
#include "support/api_replay.hpp"

using namespace metaplan;
namespace fs = std::filesystem;

namespace {

const fs::path kData = METAPLAN_DATA_DIR;
const fs::path kReplay = fs::path(METAPLAN_TEST_FIXTURES) / "api_replay";
const char* kClock = "2026-01-01T00:00:00.000Z";

fs::path temp_db(const std::string& tag) {
  return fs::temp_directory_path() / ("metaplan_api_" + tag + "_" + std::to_string(::getpid()) + ".jsonl");
}

struct Fixture {
  fs::path db;
  std::unique_ptr<RecordStore> store;
  std::unique_ptr<AnnotationService> api;

  explicit Fixture(const std::string& tag, int quorum = 1, bool with_models = true) : db(temp_db(tag)) {
    fs::remove(db);
    store = std::make_unique<RecordStore>(db);
    AnnotationConfig config;
    config.fixture_dir = kData / "fixtures";
    if (with_models) config.models = scripted_provider(kData / "transcripts");
    config.clock = fixed_clock(kClock);
    config.quorum = quorum;
    api = std::make_unique<AnnotationService>(*store, config);
  }
  ~Fixture() {
    api.reset();
    store.reset();
    fs::remove(db);
  }

  ApiResponse call(const std::string& method, const std::string& path, const json& body = nullptr) {
    ApiResponse r = api->handle(method, path, body.is_null() ? std::string{} : body.dump());
    CHECK(r.body.at("schema_version") == kApiSchemaVersion);
    return r;
  }

  std::uint64_t create(const std::string& scene = "insert_pen",
                       const std::string& instruction = "Insert the pen into the pen holder") {
    auto r = call("POST", "/tasks", {{"instruction", instruction}, {"scene_ref", scene}});
    REQUIRE(r.status == 201);
    return r.body.at("task").at("id").get<std::uint64_t>();
  }

  std::string path(std::uint64_t id, const std::string& tail = "") {
    return "/tasks/" + std::to_string(id) + tail;
  }
};

std::string code(const ApiResponse& r) { return r.body.at("error").at("code").get<std::string>(); }

}  // namespace

TEST_CASE("creating tasks") {
  Fixture f("create");
  auto r = f.call("POST", "/tasks", {{"instruction", "Open the drawer"}, {"scene_ref", "open_drawer"}});
  CHECK(r.status == 201);
  const json& task = r.body.at("task");
  CHECK(task.at("status") == "pending");
  CHECK(task.at("sessions").at("icl").is_null());
  CHECK(task.at("sessions").at("no_icl").is_null());
  CHECK(task.at("record_id").is_null());

  auto unknown = f.call("POST", "/tasks", {{"instruction", "x"}, {"scene_ref", "kitchen"}});
  CHECK(unknown.status == 404);
  CHECK(code(unknown) == "UnknownScene");
  CHECK(f.call("POST", "/tasks", {{"instruction", "x"}, {"scene_ref", "../data/fixtures/insert_pen"}}).status == 404);

  // Same instruction and scene: a second, independent task.
  auto again = f.call("POST", "/tasks", {{"instruction", "Open the drawer"}, {"scene_ref", "open_drawer"}});
  CHECK(again.body.at("task").at("id") != task.at("id"));
  CHECK(f.call("GET", "/tasks").body.at("tasks").size() == 2);

  CHECK(code(f.call("POST", "/tasks", {{"scene_ref", "open_drawer"}})) == "BadRequest");
  CHECK(code(f.call("POST", "/tasks", {{"instruction", "  "}, {"scene_ref", "open_drawer"}})) == "BadRequest");
  CHECK(code(f.call("POST", "/tasks", {{"instruction", 3}, {"scene_ref", "open_drawer"}})) == "BadRequest");
  auto bad_json = f.api->handle("POST", "/tasks", "{nope");
  CHECK(bad_json.status == 400);
}

TEST_CASE("routing errors") {
  Fixture f("routes");
  CHECK(code(f.call("GET", "/tasks/9")) == "UnknownTask");
  CHECK(code(f.call("POST", "/tasks/9/plan", {{"mode", "icl"}})) == "UnknownTask");
  CHECK(code(f.call("GET", "/tasks/abc")) == "UnknownTask");
  CHECK(f.call("DELETE", "/tasks").status == 405);
  CHECK(code(f.call("GET", "/nowhere")) == "NotFound");
  CHECK(code(f.call("GET", "/records/7")) == "UnknownRecord");
  auto id = f.create();
  CHECK(code(f.call("PUT", f.path(id, "/stages/6"), {{"session", "icl"}, {"text", "x"}, {"version", 1}})) ==
        "BadRequest");
  CHECK(code(f.call("POST", f.path(id, "/plan"), {{"mode", "sideways"}})) == "BadRequest");
}

TEST_CASE("planning modes") {
  Fixture f("plan");
  auto id = f.create();

  SUBCASE("icl on an empty store plans without a demonstration") {
    auto r = f.call("POST", f.path(id, "/plan"), {{"mode", "icl"}});
    REQUIRE(r.status == 200);
    const json& s = r.body.at("sessions").at("icl");
    CHECK(s.at("no_demonstration") == true);
    CHECK(s.at("demo_record").is_null());
    CHECK(s.at("demo_round").empty());
    CHECK(s.at("final").is_string());
    CHECK(s.at("version") == 1);
    CHECK(s.at("stages").size() == 5);
    CHECK(s.at("relevant_objects") == json({"pen", "pen holder"}));
  }
  SUBCASE("both on a seeded store") {
    REQUIRE(f.call("POST", f.path(id, "/plan"), {{"mode", "icl"}}).status == 200);
    REQUIRE(f.call("POST", f.path(id, "/vote"), {{"verdict", "correct"}, {"annotator", "a"}}).status == 200);
    REQUIRE(f.call("POST", f.path(id, "/commit")).body.at("decision") == "add");

    auto other = f.create("clean_floor", "Clean up the floor");
    auto r = f.call("POST", f.path(other, "/plan"), {{"mode", "both"}});
    REQUIRE(r.status == 200);
    const json& icl = r.body.at("sessions").at("icl");
    const json& plain = r.body.at("sessions").at("no_icl");
    CHECK(icl.at("demo_record") == 1);
    CHECK(icl.at("no_demonstration") == false);
    CHECK(icl.at("demo_round").size() == 10);  // five user/assistant pairs
    CHECK(plain.at("demo_round").empty());
    CHECK(plain.at("demo_record").is_null());
  }
  SUBCASE("replanning bumps the version") {
    f.call("POST", f.path(id, "/plan"), {{"mode", "no_icl"}});
    auto r = f.call("POST", f.path(id, "/plan"), {{"mode", "no_icl"}});
    CHECK(r.body.at("sessions").at("no_icl").at("version") == 2);
  }
}

TEST_CASE("model failures surface with their stage") {
  SUBCASE("no adapter") {
    Fixture f("nomodel", 1, false);
    auto id = f.create();
    auto r = f.call("POST", f.path(id, "/plan"), {{"mode", "icl"}});
    CHECK(r.status == 503);
    CHECK(code(r) == "NoModel");
  }
  SUBCASE("transcript missing for the scene") {
    fs::path dir = fs::temp_directory_path() / ("metaplan_api_tx_" + std::to_string(::getpid()));
    fs::create_directories(dir / "insert_pen");
    // A transcript that stops after stage 2.
    std::ofstream(dir / "insert_pen" / "no_icl.json")
        << R"({"version": 1, "variants": [{"records": [{"stage": 1, "reply": "a"}, {"stage": 2, "reply": "- pen"}]}]})";
    RecordStore store;
    AnnotationConfig config;
    config.fixture_dir = kData / "fixtures";
    config.models = scripted_provider(dir);
    config.clock = fixed_clock(kClock);
    AnnotationService api(store, config);
    api.handle("POST", "/tasks", R"({"instruction": "i", "scene_ref": "insert_pen"})");
    auto r = api.handle("POST", "/tasks/1/plan", R"({"mode": "no_icl"})");
    CHECK(r.status == 502);
    CHECK(r.body.at("error").at("code") == "ModelError");
    CHECK(r.body.at("error").at("stage") == "3");
    auto missing = api.handle("POST", "/tasks/1/plan", R"({"mode": "icl"})");
    CHECK(missing.status == 502);
    CHECK(missing.body.at("error").at("mode") == "icl");
    fs::remove_all(dir);
  }
}

TEST_CASE("editing stages") {
  Fixture f("edit");
  auto id = f.create("clean_floor", "Clean up the floor");
  CHECK(code(f.call("PUT", f.path(id, "/stages/5"), {{"session", "icl"}, {"text", "x"}, {"version", 1}})) ==
        "NoSession");
  REQUIRE(f.call("POST", f.path(id, "/plan"), {{"mode", "icl"}}).status == 200);

  SUBCASE("valid stage-5 text replaces the plan") {
    std::string text = "opened, move to, above, soda can, opened\nopened, move to, on, soda can, closed";
    auto r = f.call("PUT", f.path(id, "/stages/5"), {{"session", "icl"}, {"text", text}, {"version", 1}});
    REQUIRE(r.status == 200);
    CHECK(r.body.at("session").at("final") == text + "\n");
    CHECK(r.body.at("session").at("version") == 2);
  }
  SUBCASE("broken linkage is rejected with its index") {
    std::string text = "opened, move to, above, soda can, closed\nopened, move to, on, soda can, closed";
    auto r = f.call("PUT", f.path(id, "/stages/5"), {{"session", "icl"}, {"text", text}, {"version", 1}});
    CHECK(r.status == 422);
    CHECK(code(r) == "InvalidMetaActionText");
    CHECK(r.body.at("error").at("index") == 1);
    auto task = f.call("GET", f.path(id)).body.at("task");
    CHECK(task.at("sessions").at("icl").at("version") == 1);
  }
  SUBCASE("unparseable line reports the line") {
    auto r = f.call("PUT", f.path(id, "/stages/5"),
                    {{"session", "icl"}, {"text", "opened, move to, up, , opened\nopened, hop"}, {"version", 1}});
    CHECK(r.status == 422);
    CHECK(r.body.at("error").at("line") == 2);
  }
  SUBCASE("stage-3 edit marks later stages stale") {
    auto r = f.call("PUT", f.path(id, "/stages/3"), {{"session", "icl"}, {"text", "1. Do it."}, {"version", 1}});
    REQUIRE(r.status == 200);
    const json& stages = r.body.at("session").at("stages");
    CHECK(stages[2].at("stale") == false);
    CHECK(stages[3].at("stale") == true);
    CHECK(stages[4].at("stale") == true);
    CHECK(r.body.at("session").at("final").is_null());

    auto resumed = f.call("POST", f.path(id, "/plan"), {{"mode", "icl"}, {"resume", true}});
    REQUIRE(resumed.status == 200);
    const json& s = resumed.body.at("sessions").at("icl");
    CHECK(s.at("stages")[2].at("reply") == "1. Do it.");
    CHECK(s.at("stages")[4].at("stale") == false);
    CHECK(s.at("final").is_string());
    CHECK(s.at("version") == 3);
  }
  SUBCASE("stale version") {
    f.call("PUT", f.path(id, "/stages/1"), {{"session", "icl"}, {"text", "a"}, {"version", 1}});
    auto r = f.call("PUT", f.path(id, "/stages/1"), {{"session", "icl"}, {"text", "b"}, {"version", 1}});
    CHECK(r.status == 409);
    CHECK(code(r) == "StaleVersion");
    CHECK(r.body.at("error").at("current_version") == 2);
  }
}

TEST_CASE("voting") {
  Fixture f("vote");
  auto id = f.create();
  auto before = f.call("POST", f.path(id, "/vote"), {{"verdict", "correct"}, {"annotator", "a"}});
  CHECK(before.status == 409);
  CHECK(code(before) == "NoFinalPlan");
  REQUIRE(f.call("POST", f.path(id, "/plan"), {{"mode", "both"}}).status == 200);

  CHECK(code(f.call("POST", f.path(id, "/vote"), {{"verdict", "maybe"}, {"annotator", "a"}})) == "BadRequest");
  auto yes = f.call("POST", f.path(id, "/vote"), {{"verdict", "correct"}, {"annotator", "a"}});
  CHECK(yes.body.at("status") == "verified");
  CHECK(yes.body.at("session") == "icl");

  auto no = f.call("POST", f.path(id, "/vote"), {{"verdict", "incorrect"}, {"annotator", "b"}});
  CHECK(no.body.at("status") == "rejected");
  CHECK(no.body.at("votes") == 2);

  // Editing the voted session clears its votes.
  f.call("PUT", f.path(id, "/stages/4"), {{"session", "icl"}, {"text", "fine"}, {"version", 1}});
  auto task = f.call("GET", f.path(id)).body.at("task");
  CHECK(task.at("status") == "pending");
  CHECK(task.at("votes").empty());
}

TEST_CASE("quorum of two") {
  Fixture f("quorum", 2);
  auto id = f.create();
  f.call("POST", f.path(id, "/plan"), {{"mode", "no_icl"}});
  auto first = f.call("POST", f.path(id, "/vote"), {{"verdict", "correct"}, {"annotator", "a"}});
  CHECK(first.body.at("status") == "pending");
  CHECK(code(f.call("POST", f.path(id, "/commit"))) == "NotVerified");
  auto second = f.call("POST", f.path(id, "/vote"), {{"verdict", "correct"}, {"annotator", "b"}});
  CHECK(second.body.at("status") == "verified");
}

TEST_CASE("committing") {
  Fixture f("commit");
  auto id = f.create();
  f.call("POST", f.path(id, "/plan"), {{"mode", "icl"}});
  CHECK(code(f.call("POST", f.path(id, "/commit"))) == "NotVerified");
  f.call("POST", f.path(id, "/vote"), {{"verdict", "correct"}, {"annotator", "a"}});
  auto add = f.call("POST", f.path(id, "/commit"));
  REQUIRE(add.status == 200);
  CHECK(add.body.at("decision") == "add");
  CHECK(add.body.at("record_id") == 1);
  CHECK(add.body.at("scores").empty());
  CHECK(code(f.call("POST", f.path(id, "/commit"))) == "AlreadyCommitted");
  CHECK(code(f.call("POST", f.path(id, "/vote"), {{"verdict", "correct"}, {"annotator", "b"}})) ==
        "AlreadyCommitted");

  auto record = f.call("GET", "/records/1").body.at("record");
  CHECK(record.at("status") == "verified");
  CHECK(record.at("prompt_cache").at("created_at") == kClock);
  PlanRecord stored = *f.store->find(1);
  CHECK(validate_chain(stored.plan, GripperState::Open).ok());
  CHECK(stored.prompt_cache.validation_error().empty());
  CHECK(stored.votes.size() == 1);
  CHECK(f.call("GET", "/records").body.at("records").size() == 1);

  // The same task again duplicates record 1.
  auto dup = f.create();
  f.call("POST", f.path(dup, "/plan"), {{"mode", "icl"}});
  f.call("POST", f.path(dup, "/vote"), {{"verdict", "correct"}, {"annotator", "a"}});
  auto skip = f.call("POST", f.path(dup, "/commit"));
  CHECK(skip.body.at("decision") == "skip");
  CHECK(skip.body.at("blocking_id") == 1);
  CHECK(skip.body.at("record_id") == 1);
  CHECK(skip.body.at("scores")[0].at("object_similarity") == 1.0);
  CHECK(skip.body.at("scores")[0].at("sequence_similarity") == 1.0);
  CHECK(f.store->size() == 1);

  auto rejected = f.create("open_drawer", "Open the drawer");
  f.call("POST", f.path(rejected, "/plan"), {{"mode", "no_icl"}});
  f.call("POST", f.path(rejected, "/vote"), {{"verdict", "incorrect"}, {"annotator", "a"}});
  CHECK(code(f.call("POST", f.path(rejected, "/commit"))) == "NotVerified");
}

TEST_CASE("request replay reproduces the database byte for byte") {
  auto requests = testing::load_requests(kReplay / "requests.jsonl");
  REQUIRE(requests.size() == 30);
  auto db = temp_db("replay");
  auto first = testing::replay(requests, db, kData);
  CHECK(first.status_mismatches == 0);
  for (std::size_t i = 0; i < requests.size(); ++i)
    CHECK_MESSAGE(first.responses[i].status == requests[i].status, "request " << i + 1);
  auto second = testing::replay(requests, db, kData);
  CHECK(second.db_bytes == first.db_bytes);
  CHECK(first.db_bytes == testing::read_bytes(kReplay / "expected_db.jsonl"));

  // Folding the committed records into a fresh store gives the same file.
  RecordStore replayed(db);
  auto folded_path = temp_db("fold");
  fs::remove(folded_path);
  {
    RecordStore folded(folded_path);
    for (const auto& r : replayed.records()) folded.append(r);
  }
  CHECK(testing::read_bytes(folded_path) == first.db_bytes);
  CHECK(replayed.size() == 4);
  fs::remove(folded_path);
  fs::remove(db);
}

TEST_CASE("endpoints over HTTP") {
  Fixture f("http");
  ApiServer server(*f.api);
  int port = server.bind("127.0.0.1", 0);
  std::thread t([&] { server.run(); });
  httplib::Client client("127.0.0.1", port);
  auto created = client.Post("/tasks", R"({"instruction": "Open the drawer", "scene_ref": "open_drawer"})",
                             "application/json");
  REQUIRE(created);
  CHECK(created->status == 201);
  CHECK(json::parse(created->body).at("task").at("id") == 1);
  auto planned = client.Post("/tasks/1/plan", R"({"mode": "no_icl"})", "application/json");
  REQUIRE(planned);
  CHECK(planned->status == 200);
  auto edited = client.Put("/tasks/1/stages/2", R"({"session": "no_icl", "text": "- drawer handle", "version": 1})",
                           "application/json");
  REQUIRE(edited);
  CHECK(edited->status == 200);
  auto listed = client.Get("/tasks");
  REQUIRE(listed);
  CHECK(json::parse(listed->body).at("tasks").size() == 1);
  auto records = client.Get("/records");
  REQUIRE(records);
  CHECK(json::parse(records->body).at("schema_version") == kApiSchemaVersion);
  server.stop();
  t.join();
}
