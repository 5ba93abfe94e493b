#pragma once

#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "termcomp/session.hpp"

namespace termcomp {

struct TrajectoryStep {
  int step_index = 0;
  std::string command;
  std::string raw_output;
  std::optional<std::string> agent_message;
};

// Recorded task: a header record followed by one record per step, each a
// JSON object on its own line.
struct TrajectoryFile {
  std::string task_id;
  std::string instruction;
  std::optional<std::string> category;
  std::string terminal_preview;
  std::vector<TrajectoryStep> steps;
};

struct TrajectoryError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

TrajectoryFile parse_trajectory(const std::string& text);
TrajectoryFile load_trajectory(const std::filesystem::path& path);

struct TaskReport {
  std::string task_id;
  size_t episodes = 0;
  size_t entries = 0;       // steps where compression removed >= 1 line
  long chars_saved = 0;     // sum of (before - after) over entries
  double overall_ratio = 1.0;  // total after / total before over entries
  double best_ratio = 1.0;     // minimum per-entry ratio
  size_t total_chars_before = 0;  // across all steps
  double score = 0.0;             // chars_saved / total_chars_before
  Json to_json() const;
};

struct CompressionReport {
  std::vector<TaskReport> tasks;
  size_t episodes = 0;
  size_t entries = 0;
  long chars_saved = 0;
  Json to_json() const;
  std::string to_table() const;
};

TaskReport report_from_session(const TaskSession& session);

// Replays one trajectory against a pool snapshot. The pool is not mutated;
// write-back is the evolution driver's job.
std::pair<TaskReport, std::vector<RuleOutcome>> replay_task(const TrajectoryFile& trajectory,
                                                            const GlobalRulePool& pool,
                                                            const SessionConfig& config,
                                                            LlmGateway* gateway);

std::vector<double> rolling_std(const std::vector<double>& series, size_t window = 3);

struct EvolutionConfig {
  size_t batch_size = 4;          // concurrent sessions per wave
  size_t max_turns = 4;
  double retention_threshold = 90.0;  // early stop once retention reaches this
  size_t retention_k = 30;
  double tau = 0.3;
  double alpha = 0.3;
  SessionConfig session;
};

struct TurnReport {
  int turn = 0;
  RetentionReport retention;
  long pool_generation = 0;
  double mean_score = 0.0;
  std::optional<double> rolling_std;  // over the last 3 turn scores
  CompressionReport compression;
  std::vector<std::string> failures;  // failed tasks, recorded and skipped
};

struct EvolutionReport {
  std::vector<TurnReport> turns;
  bool converged = false;
  Json to_json() const;
};

// Multi-turn batched evolution: waves of batch_size concurrent sessions,
// per-task write-back applied in task order before the next wave starts,
// retention computed against the previous turn's pool, early stop at the
// threshold. Failed tasks are recorded and skipped.
EvolutionReport run_evolution(const std::vector<TrajectoryFile>& tasks, GlobalRulePool& pool,
                              const EvolutionConfig& config, LlmGateway* gateway);

}  // namespace termcomp
