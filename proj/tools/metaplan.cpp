#include <CLI11.hpp>

#include <algorithm>
#include <fstream>
#include <iostream>
#include <sstream>

#include "metaplan/annotation_api.hpp"
#include "metaplan/harness.hpp"
#include "metaplan/json_io.hpp"
#include "metaplan/rag_store.hpp"

using namespace metaplan;

namespace {

const std::string kDataDir = METAPLAN_DATA_DIR;

std::vector<std::string> split_list(const std::string& s) {
  std::vector<std::string> out;
  std::stringstream in(s);
  std::string item;
  while (std::getline(in, item, ','))
    if (!item.empty()) out.push_back(item);
  return out;
}

SuiteReport read_report(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw InfrastructureError("cannot read " + path);
  return SuiteReport::from_json(json::parse(in));
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"metaplan: meta-action planning, evaluation and annotation"};
  app.require_subcommand(1);

  auto* run = app.add_subcommand("run", "Run the evaluation suite");
  std::string tasks = "insert_pen,clean_floor,open_drawer,make_coffee";
  int trials = 20;
  std::string icl = "on";
  std::uint64_t seed = 0;
  std::string transcripts = kDataDir + "/transcripts";
  std::string fixtures = kDataDir + "/fixtures";
  std::string db = kDataDir + "/db/demos.jsonl";
  std::string out;
  std::string episodes;
  std::string sim_config;
  std::string prompt_dir;
  int jobs = 1;
  bool timing = false;
  run->add_option("--tasks", tasks, "Comma-separated task names");
  run->add_option("--trials", trials, "Trials per task")->check(CLI::NonNegativeNumber);
  run->add_option("--icl", icl, "Retrieve demonstrations")->check(CLI::IsMember({"on", "off"}));
  run->add_option("--seed", seed);
  run->add_option("--transcripts", transcripts, "Transcript directory");
  run->add_option("--fixtures", fixtures, "Scene fixture directory");
  run->add_option("--db", db, "Demonstration database");
  run->add_option("--out", out, "Report path (stdout when omitted)");
  run->add_option("--episodes", episodes, "Directory for per-trial episode logs");
  run->add_option("--sim-config", sim_config, "Simulator parameters");
  run->add_option("--prompts", prompt_dir, "Prompt template directory");
  run->add_option("--jobs", jobs)->check(CLI::PositiveNumber);
  run->add_flag("--timing", timing, "Include wall times in the report");

  auto* compare = app.add_subcommand("compare", "Compare a without-ICL report with a with-ICL report");
  std::string report_a, report_b;
  bool compare_json = false;
  compare->add_option("without", report_a)->required();
  compare->add_option("with", report_b)->required();
  compare->add_flag("--json", compare_json);

  auto* dbcmd = app.add_subcommand("db", "Demonstration database maintenance");
  dbcmd->require_subcommand(1);
  auto* compact = dbcmd->add_subcommand("compact", "Fold amendments into a clean file");
  auto* list = dbcmd->add_subcommand("list", "Print one line per record");
  auto* seed_cmd = dbcmd->add_subcommand("seed", "Add each fixture's first scripted plan as a verified record");
  std::string db_file = db;
  std::string seed_time = "2026-01-01T00:00:00.000Z";
  compact->add_option("file", db_file);
  list->add_option("file", db_file);
  seed_cmd->add_option("file", db_file);
  seed_cmd->add_option("--fixtures", fixtures);
  seed_cmd->add_option("--transcripts", transcripts);
  seed_cmd->add_option("--timestamp", seed_time, "created_at of the stored prompt caches");

  auto* serve_cmd = app.add_subcommand("serve", "Run the annotation HTTP service");
  std::string host = "127.0.0.1";
  int port = 8080;
  int quorum = 1;
  serve_cmd->add_option("--host", host);
  serve_cmd->add_option("--port", port);
  serve_cmd->add_option("--db", db);
  serve_cmd->add_option("--fixtures", fixtures);
  serve_cmd->add_option("--transcripts", transcripts);
  serve_cmd->add_option("--quorum", quorum)->check(CLI::PositiveNumber);

  CLI11_PARSE(app, argc, argv);

  try {
    if (*run) {
      SuiteOptions o;
      o.tasks = split_list(tasks);
      o.trials_per_task = trials;
      o.icl = icl == "on";
      o.seed = seed;
      o.transcript_dir = transcripts;
      o.fixture_dir = fixtures;
      if (!db.empty()) o.db_path = db;
      if (!episodes.empty()) o.episode_dir = episodes;
      o.jobs = jobs;
      if (!sim_config.empty()) o.sim = load_sim_config(sim_config);
      PromptSet prompts;
      if (!prompt_dir.empty()) {
        prompts = PromptSet::load(prompt_dir);
        o.prompts = &prompts;
      }
      SuiteReport report = run_suite(o);
      std::string text = report.to_json(timing).dump(2) + "\n";
      if (out.empty()) {
        std::cout << text;
      } else {
        std::ofstream f(out);
        if (!f) throw InfrastructureError("cannot write " + out);
        f << text;
        std::cerr << report.total_successes() << "/" << report.total_trials() << " trials succeeded\n";
      }
      return 0;
    }
    if (*compare) {
      Comparison c = compare_icl(read_report(report_a), read_report(report_b));
      std::cout << (compare_json ? c.to_json().dump(2) + "\n" : c.to_text());
      return 0;
    }
    if (*compact) {
      if (!std::filesystem::exists(db_file)) throw InfrastructureError("no database at " + db_file);
      RecordStore store(db_file);
      store.compact();
      std::cerr << store.size() << " records\n";
      return 0;
    }
    if (*list) {
      if (!std::filesystem::exists(db_file)) throw InfrastructureError("no database at " + db_file);
      RecordStore store(db_file);
      for (const auto& r : store.records())
        std::cout << r.id << "\t" << to_string(r.status) << "\t" << r.instruction << "\n";
      return 0;
    }
    if (*seed_cmd) {
      RecordStore store(db_file);
      std::vector<std::filesystem::path> files;
      for (const auto& e : std::filesystem::directory_iterator(fixtures))
        if (e.path().extension() == ".json") files.push_back(e.path());
      std::sort(files.begin(), files.end());
      for (const auto& f : files) {
        TaskSpec spec = load_fixture(f);
        SceneGraph scene = scene_graph_of(spec.initial_world);
        TranscriptFile t = load_transcript(transcript_path(transcripts, spec.name, true));
        ScriptedModel model(t.variant_for(0), t.label);
        PlannerOptions popts;
        popts.task_id = spec.name;
        PlanningSession s = plan_task(spec.instruction, scene, model, std::nullopt, popts);
        if (!s.final) throw InfrastructureError(spec.name + ": scripted plan failed: " + s.error->message);
        PlanRecord r;
        r.instruction = spec.instruction;
        r.scene = scene;
        r.embedding = embed(spec.instruction, scene);
        r.prompt_cache = s.prompt_cache(seed_time);
        r.plan = *s.final;
        r.relevant_objects = extract_relevant_objects(s);
        r.status = RecordStatus::Verified;
        r.votes.push_back(Vote{"correct", "seed", seed_time});
        GateResult g = store.gate_and_add(std::move(r));
        std::cout << spec.name << "\t" << to_string(g.decision) << "\n";
      }
      return 0;
    }
    if (*serve_cmd) {
      RecordStore store(db);
      AnnotationConfig config;
      config.fixture_dir = fixtures;
      config.models = scripted_provider(transcripts);
      config.quorum = quorum;
      AnnotationService service(store, std::move(config));
      std::cerr << "listening on " << host << ":" << port << "\n";
      serve(service, host, port);
      return 0;
    }
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  }
  return 0;
}
