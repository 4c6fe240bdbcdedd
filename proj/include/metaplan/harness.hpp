#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

#include "metaplan/executor.hpp"
#include "metaplan/planner.hpp"
#include "metaplan/sim_world.hpp"

namespace metaplan {

inline constexpr int kReportVersion = 1;

/// Infrastructure failures: the suite cannot run as configured.
class InfrastructureError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

class MissingTranscript : public InfrastructureError {
 public:
  using InfrastructureError::InfrastructureError;
};

class MissingFixture : public InfrastructureError {
 public:
  using InfrastructureError::InfrastructureError;
};

class MismatchedSuites : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct TrialResult {
  std::string task;
  int trial = 0;
  bool icl = false;
  bool success = false;
  std::optional<FailureCategory> failure_category;
  std::string failure_detail;
  std::optional<std::uint64_t> demo_record;
  std::string episode_log;
  double wall_time_ms = 0.0;
};

struct TaskTally {
  std::string task;
  int trials = 0;
  int successes = 0;

  double rate() const { return trials == 0 ? 0.0 : static_cast<double>(successes) / trials; }
};

struct SuiteReport {
  bool icl = false;
  std::uint64_t seed = 0;
  int trials_per_task = 0;
  std::vector<TaskTally> tasks;
  std::vector<TrialResult> trials;  // ordered by (task, trial index)
  std::map<FailureCategory, int> failure_histogram;

  int total_trials() const;
  int total_successes() const;
  int total_failures() const { return total_trials() - total_successes(); }
  double success_rate() const;

  /// Deterministic serialization; wall times are included only on request.
  nlohmann::json to_json(bool include_timing = false) const;
  static SuiteReport from_json(const nlohmann::json& j);
};

/// Builds per-task tallies and the failure histogram from trial results.
SuiteReport aggregate(std::vector<TrialResult> trials, const std::vector<std::string>& task_order, bool icl,
                      std::uint64_t seed, int trials_per_task);

struct SuiteOptions {
  std::vector<std::string> tasks;
  int trials_per_task = 0;
  bool icl = false;
  std::uint64_t seed = 0;
  std::filesystem::path transcript_dir;  // <dir>/<task>/{icl,no_icl}.json
  std::filesystem::path fixture_dir;     // <dir>/<task>.json
  std::optional<std::filesystem::path> db_path;
  std::optional<std::filesystem::path> episode_dir;
  std::size_t retrieve_k = 3;
  int jobs = 1;
  ExecutorConfig executor;
  SimConfig sim;
  const PromptSet* prompts = nullptr;
};

std::filesystem::path transcript_path(const std::filesystem::path& dir, const std::string& task, bool icl);

/// Seed of one trial, independent of which other tasks are in the suite.
std::uint64_t trial_seed(std::uint64_t suite_seed, const std::string& task, int trial);

/// Throws MissingTranscript, MissingFixture, or InfrastructureError.
SuiteReport run_suite(const SuiteOptions& options);

struct ComparisonRow {
  std::string task;
  int trials = 0;
  double rate_without = 0.0;
  double rate_with = 0.0;
  double delta_points = 0.0;
};

struct Comparison {
  std::vector<ComparisonRow> rows;
  ComparisonRow overall;

  nlohmann::json to_json() const;
  std::string to_text() const;
};

/// Throws MismatchedSuites when task lists or trial counts differ.
Comparison compare_icl(const SuiteReport& without_icl, const SuiteReport& with_icl);

}  // namespace metaplan
