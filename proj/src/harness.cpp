#include "metaplan/harness.hpp"

#include <atomic>
#include <chrono>
#include <cstdio>
#include <fstream>
#include <set>
#include <thread>

#include "metaplan/json_io.hpp"
#include "metaplan/rag_store.hpp"
#include "metaplan/random.hpp"

namespace metaplan {

namespace {

std::uint64_t fnv1a(std::string_view s) {
  std::uint64_t h = 14695981039346656037ull;
  for (unsigned char c : s) {
    h ^= c;
    h *= 1099511628211ull;
  }
  return h;
}

struct LoadedTask {
  TaskSpec spec;
  TranscriptFile transcript;
};

json step_to_json(const StepOutcome& s) {
  json j{{"action_line", s.action_line},
         {"reached", s.reached},
         {"candidate", s.candidate_index},
         {"gripper", std::string(to_string(s.gripper.command))},
         {"category", s.category ? json(std::string(to_string(*s.category))) : json(nullptr)}};
  j["P_target"] = s.target ? json(*s.target) : json(nullptr);
  if (s.gripper.attached) j["attached"] = *s.gripper.attached;
  if (s.gripper.detached) j["detached"] = *s.gripper.detached;
  if (s.gripper.pressed) j["pressed"] = *s.gripper.pressed;
  if (!s.message.empty()) j["message"] = s.message;
  return j;
}

TrialResult run_trial(const LoadedTask& task, int trial, const SuiteOptions& options, const RecordStore* store) {
  auto started = std::chrono::steady_clock::now();
  TrialResult result;
  result.task = task.spec.name;
  result.trial = trial;
  result.icl = options.icl;

  const std::uint64_t seed = trial_seed(options.seed, task.spec.name, trial);
  WorldState world = perturb(task.spec.initial_world, seed, options.sim);
  ScriptedModel model(task.transcript.variant_for(static_cast<std::size_t>(trial)),
                      task.transcript.label.empty() ? "scripted" : task.transcript.label);
  SceneGraph scene = scene_graph_of(world);
  std::vector<std::string> log;
  auto fail = [&](FailureCategory c, std::string detail) {
    result.failure_category = c;
    result.failure_detail = std::move(detail);
  };

  std::optional<PromptCache> demo;
  if (options.icl && store) {
    try {
      auto r = store->retrieve(embed(task.spec.instruction, scene), options.retrieve_k, model,
                               task.spec.instruction);
      if (r.record) {
        demo = r.record->prompt_cache;
        result.demo_record = r.record->id;
      }
    } catch (const ModelError& e) {
      fail(FailureCategory::Other, std::string("retrieval: ") + e.what());
    }
  }

  if (!result.failure_category) {
    PlannerOptions popts;
    popts.prompts = options.prompts;
    popts.task_id = task.spec.name;
    popts.initial = world.gripper.state;
    PlanningSession session = plan_task(task.spec.instruction, scene, model, demo, popts);
    if (!session.final) {
      const PlanError& err = *session.error;
      FailureCategory c =
          err.kind == PlanErrorKind::ModelError ? FailureCategory::Other : FailureCategory::ActionParsing;
      fail(c, std::string(to_string(err.kind)) + " at stage " + err.stage + ": " + err.message);
    } else {
      auto steps = execute_plan(*session.final, world, model, seed, options.executor, options.sim);
      for (const auto& s : steps) log.push_back(step_to_json(s).dump());
      if (!steps.empty() && steps.back().category) {
        fail(*steps.back().category, steps.back().action_line + ": " + steps.back().message);
      } else if (check_success(world, task.spec)) {
        result.success = true;
      } else {
        fail(FailureCategory::TaskPlanning, "plan executed but the success predicate does not hold");
      }
    }
  }

  if (options.episode_dir) {
    char name[128];
    std::snprintf(name, sizeof name, "%s_%s_%03d.jsonl", task.spec.name.c_str(), options.icl ? "icl" : "no_icl",
                  trial);
    auto path = *options.episode_dir / name;
    std::ofstream out(path, std::ios::trunc);
    if (!out) throw InfrastructureError("cannot write episode log " + path.string());
    out << json{{"task", result.task}, {"trial", trial}, {"icl", options.icl}, {"seed", seed}}.dump() << '\n';
    for (const auto& line : log) out << line << '\n';
    out << json{{"success", result.success},
                {"failure_category",
                 result.failure_category ? json(std::string(to_string(*result.failure_category))) : json(nullptr)}}
               .dump()
        << '\n';
    result.episode_log = path.string();
  }
  result.wall_time_ms =
      std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - started).count();
  return result;
}

}  // namespace

int SuiteReport::total_trials() const {
  int n = 0;
  for (const auto& t : tasks) n += t.trials;
  return n;
}

int SuiteReport::total_successes() const {
  int n = 0;
  for (const auto& t : tasks) n += t.successes;
  return n;
}

double SuiteReport::success_rate() const {
  int n = total_trials();
  return n == 0 ? 0.0 : static_cast<double>(total_successes()) / n;
}

json SuiteReport::to_json(bool include_timing) const {
  json tasks_json = json::array();
  for (const auto& t : tasks)
    tasks_json.push_back({{"task", t.task}, {"trials", t.trials}, {"successes", t.successes}, {"rate", t.rate()}});
  json hist = json::object();
  for (FailureCategory c : kAllFailureCategories) {
    auto it = failure_histogram.find(c);
    hist[std::string(to_string(c))] = it == failure_histogram.end() ? 0 : it->second;
  }
  json trials_json = json::array();
  for (const auto& t : trials) {
    json tj{{"task", t.task},
            {"trial", t.trial},
            {"success", t.success},
            {"failure_category",
             t.failure_category ? json(std::string(to_string(*t.failure_category))) : json(nullptr)},
            {"failure_detail", t.failure_detail},
            {"demo_record", t.demo_record ? json(*t.demo_record) : json(nullptr)}};
    if (include_timing) tj["wall_time_ms"] = t.wall_time_ms;
    trials_json.push_back(std::move(tj));
  }
  return json{{"schema", "metaplan.suite_report"},
              {"version", kReportVersion},
              {"icl", icl},
              {"seed", seed},
              {"trials_per_task", trials_per_task},
              {"tasks", tasks_json},
              {"overall",
               {{"trials", total_trials()}, {"successes", total_successes()}, {"rate", success_rate()}}},
              {"failure_histogram", hist},
              {"trials", trials_json}};
}

SuiteReport SuiteReport::from_json(const json& j) {
  if (j.value("schema", std::string{}) != "metaplan.suite_report" || j.value("version", 0) != kReportVersion)
    throw std::runtime_error("not a version-1 suite report");
  SuiteReport r;
  r.icl = j.at("icl").get<bool>();
  r.seed = j.at("seed").get<std::uint64_t>();
  r.trials_per_task = j.at("trials_per_task").get<int>();
  for (const auto& t : j.at("tasks"))
    r.tasks.push_back({t.at("task").get<std::string>(), t.at("trials").get<int>(), t.at("successes").get<int>()});
  for (auto c : kAllFailureCategories) r.failure_histogram[c] = 0;
  for (const auto& [k, v] : j.at("failure_histogram").items()) {
    auto c = failure_category_from_string(k);
    if (!c) throw std::runtime_error("unknown failure category '" + k + "'");
    r.failure_histogram[*c] = v.get<int>();
  }
  for (const auto& t : j.at("trials")) {
    TrialResult tr;
    tr.task = t.at("task").get<std::string>();
    tr.trial = t.at("trial").get<int>();
    tr.icl = r.icl;
    tr.success = t.at("success").get<bool>();
    if (!t.at("failure_category").is_null())
      tr.failure_category = failure_category_from_string(t.at("failure_category").get<std::string>());
    tr.failure_detail = t.value("failure_detail", std::string{});
    if (t.contains("demo_record") && !t.at("demo_record").is_null())
      tr.demo_record = t.at("demo_record").get<std::uint64_t>();
    tr.wall_time_ms = t.value("wall_time_ms", 0.0);
    r.trials.push_back(std::move(tr));
  }
  return r;
}

SuiteReport aggregate(std::vector<TrialResult> trials, const std::vector<std::string>& task_order, bool icl,
                      std::uint64_t seed, int trials_per_task) {
  SuiteReport r;
  r.icl = icl;
  r.seed = seed;
  r.trials_per_task = trials_per_task;
  std::map<std::string, std::size_t> order;
  for (const auto& t : task_order) {
    order.emplace(t, order.size());
    r.tasks.push_back({t, 0, 0});
  }
  for (auto c : kAllFailureCategories) r.failure_histogram[c] = 0;
  std::stable_sort(trials.begin(), trials.end(), [&](const TrialResult& a, const TrialResult& b) {
    auto oa = order.at(a.task), ob = order.at(b.task);
    return oa != ob ? oa < ob : a.trial < b.trial;
  });
  for (auto& t : trials) {
    TaskTally& tally = r.tasks[order.at(t.task)];
    ++tally.trials;
    if (t.success) {
      ++tally.successes;
      t.failure_category.reset();
    } else {
      if (!t.failure_category) t.failure_category = FailureCategory::Other;
      ++r.failure_histogram[*t.failure_category];
    }
  }
  r.trials = std::move(trials);
  return r;
}

std::filesystem::path transcript_path(const std::filesystem::path& dir, const std::string& task, bool icl) {
  return dir / task / (icl ? "icl.json" : "no_icl.json");
}

std::uint64_t trial_seed(std::uint64_t suite_seed, const std::string& task, int trial) {
  return derive_seed(derive_seed(suite_seed, fnv1a(task)), static_cast<std::uint64_t>(trial));
}

SuiteReport run_suite(const SuiteOptions& options) {
  if (options.trials_per_task < 0) throw std::invalid_argument("trials per task must be non-negative");
  std::set<std::string> seen;
  for (const auto& t : options.tasks)
    if (!seen.insert(t).second) throw std::invalid_argument("task listed twice: " + t);

  std::vector<LoadedTask> loaded;
  for (const auto& name : options.tasks) {
    auto fixture = options.fixture_dir / (name + ".json");
    if (!std::filesystem::exists(fixture)) throw MissingFixture("missing fixture " + fixture.string());
    auto transcript = transcript_path(options.transcript_dir, name, options.icl);
    if (!std::filesystem::exists(transcript)) throw MissingTranscript("missing transcript " + transcript.string());
    try {
      loaded.push_back({load_fixture(fixture), load_transcript(transcript)});
    } catch (const std::exception& e) {
      throw InfrastructureError(e.what());
    }
    if (loaded.back().spec.name != name)
      throw MissingFixture(fixture.string() + " describes task '" + loaded.back().spec.name + "'");
  }

  std::unique_ptr<RecordStore> store;
  if (options.db_path && options.icl) {
    if (!std::filesystem::exists(*options.db_path))
      throw InfrastructureError("missing demonstration database " + options.db_path->string());
    try {
      store = std::make_unique<RecordStore>(*options.db_path);
    } catch (const std::exception& e) {
      throw InfrastructureError(e.what());
    }
  }
  if (options.episode_dir) std::filesystem::create_directories(*options.episode_dir);

  const std::size_t per_task = static_cast<std::size_t>(options.trials_per_task);
  const std::size_t total = loaded.size() * per_task;
  std::vector<TrialResult> results(total);
  std::atomic<std::size_t> next{0};
  std::exception_ptr first_error;
  std::mutex error_mutex;
  auto worker = [&] {
    for (std::size_t i = next++; i < total; i = next++) {
      try {
        results[i] = run_trial(loaded[i / per_task], static_cast<int>(i % per_task), options, store.get());
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!first_error) first_error = std::current_exception();
      }
    }
  };
  int jobs = std::max(1, options.jobs);
  if (jobs == 1 || total <= 1) {
    worker();
  } else {
    std::vector<std::thread> pool;
    for (int j = 0; j < jobs; ++j) pool.emplace_back(worker);
    for (auto& t : pool) t.join();
  }
  if (first_error) std::rethrow_exception(first_error);
  return aggregate(std::move(results), options.tasks, options.icl, options.seed, options.trials_per_task);
}

nlohmann::json Comparison::to_json() const {
  auto row = [](const ComparisonRow& r) {
    return json{{"task", r.task},
                {"trials", r.trials},
                {"rate_without_icl", r.rate_without},
                {"rate_with_icl", r.rate_with},
                {"delta_points", r.delta_points}};
  };
  json rows_json = json::array();
  for (const auto& r : rows) rows_json.push_back(row(r));
  return json{{"schema", "metaplan.icl_comparison"}, {"version", kReportVersion}, {"tasks", rows_json},
              {"overall", row(overall)}};
}

std::string Comparison::to_text() const {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-16s %7s %10s %10s %9s\n", "task", "trials", "w/o ICL", "with ICL", "delta");
  out += buf;
  auto line = [&](const ComparisonRow& r) {
    std::snprintf(buf, sizeof buf, "%-16s %7d %9.1f%% %9.1f%% %+8.1f\n", r.task.c_str(), r.trials,
                  r.rate_without * 100.0, r.rate_with * 100.0, r.delta_points);
    out += buf;
  };
  for (const auto& r : rows) line(r);
  line(overall);
  return out;
}

Comparison compare_icl(const SuiteReport& without_icl, const SuiteReport& with_icl) {
  if (without_icl.tasks.size() != with_icl.tasks.size())
    throw MismatchedSuites("suites cover different numbers of tasks");
  Comparison c;
  for (std::size_t i = 0; i < with_icl.tasks.size(); ++i) {
    const TaskTally& a = without_icl.tasks[i];
    const TaskTally& b = with_icl.tasks[i];
    if (a.task != b.task) throw MismatchedSuites("task mismatch: '" + a.task + "' vs '" + b.task + "'");
    if (a.trials != b.trials) throw MismatchedSuites("trial count mismatch for task '" + a.task + "'");
    c.rows.push_back({a.task, a.trials, a.rate(), b.rate(), (b.rate() - a.rate()) * 100.0});
  }
  c.overall = {"overall", without_icl.total_trials(), without_icl.success_rate(), with_icl.success_rate(),
               (with_icl.success_rate() - without_icl.success_rate()) * 100.0};
  return c;
}

}  // namespace metaplan
