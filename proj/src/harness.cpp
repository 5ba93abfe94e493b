#include "termcomp/harness.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>
#include <thread>

namespace termcomp {

TrajectoryFile parse_trajectory(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::vector<Json> records;
  size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    try {
      records.push_back(Json::parse(line));
    } catch (const Json::parse_error& e) {
      throw TrajectoryError("trajectory line " + std::to_string(line_no) +
                            " is not valid JSON: " + e.what());
    }
  }
  if (records.empty()) throw TrajectoryError("trajectory is empty");

  TrajectoryFile trajectory;
  const Json& header = records.front();
  if (!header.contains("task_id") || !header.contains("instruction"))
    throw TrajectoryError("trajectory header must carry task_id and instruction");
  trajectory.task_id = header["task_id"].get<std::string>();
  trajectory.instruction = header["instruction"].get<std::string>();
  if (header.contains("category") && !header["category"].is_null())
    trajectory.category = header["category"].get<std::string>();
  trajectory.terminal_preview = header.value("terminal_preview", std::string());

  int last_index = -1;
  for (size_t i = 1; i < records.size(); ++i) {
    const Json& rec = records[i];
    TrajectoryStep step;
    if (!rec.contains("step_index") || !rec.contains("command") || !rec.contains("raw_output"))
      throw TrajectoryError("step record " + std::to_string(i) +
                            " must carry step_index, command, raw_output");
    step.step_index = rec["step_index"].get<int>();
    step.command = rec["command"].get<std::string>();
    step.raw_output = rec["raw_output"].get<std::string>();
    if (rec.contains("agent_message") && !rec["agent_message"].is_null())
      step.agent_message = rec["agent_message"].get<std::string>();
    if (step.step_index <= last_index)
      throw TrajectoryError("step indices must be strictly increasing (saw " +
                            std::to_string(step.step_index) + " after " +
                            std::to_string(last_index) + ")");
    last_index = step.step_index;
    trajectory.steps.push_back(std::move(step));
  }
  return trajectory;
}

TrajectoryFile load_trajectory(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw TrajectoryError("cannot read trajectory file: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  try {
    return parse_trajectory(buffer.str());
  } catch (const TrajectoryError& e) {
    throw TrajectoryError(path.string() + ": " + e.what());
  }
}

Json TaskReport::to_json() const {
  Json doc = Json::object();
  doc["task_id"] = task_id;
  doc["episodes"] = episodes;
  doc["entries"] = entries;
  doc["chars_saved"] = chars_saved;
  doc["overall_ratio"] = overall_ratio;
  doc["best_ratio"] = best_ratio;
  doc["total_chars_before"] = total_chars_before;
  doc["score"] = score;
  doc["estimated_tokens_saved"] = chars_saved / 4;  // estimated, chars / 4
  return doc;
}

Json CompressionReport::to_json() const {
  Json doc = Json::object();
  Json task_docs = Json::array();
  for (const auto& t : tasks) task_docs.push_back(t.to_json());
  doc["tasks"] = std::move(task_docs);
  doc["episodes"] = episodes;
  doc["entries"] = entries;
  doc["chars_saved"] = chars_saved;
  doc["estimated_tokens_saved"] = chars_saved / 4;
  return doc;
}

std::string CompressionReport::to_table() const {
  std::ostringstream os;
  char buf[160];
  os << "Task                            Episodes  Entries  Chars saved  Overall ratio  Best ratio\n";
  for (const auto& t : tasks) {
    std::snprintf(buf, sizeof buf, "%-32s %7zu %8zu %12ld %14.3f %11.3f\n", t.task_id.c_str(),
                  t.episodes, t.entries, t.chars_saved, t.overall_ratio, t.best_ratio);
    os << buf;
  }
  std::snprintf(buf, sizeof buf, "%-32s %7zu %8zu %12ld\n", "TOTAL", episodes, entries,
                chars_saved);
  os << buf;
  return os.str();
}

TaskReport report_from_session(const TaskSession& session) {
  TaskReport report;
  report.task_id = session.task_id();
  report.episodes = session.history().size();
  size_t before_sum = 0;
  size_t after_sum = 0;
  for (const auto& rec : session.history()) {
    report.total_chars_before += rec.result.chars_before;
    if (rec.result.lines_removed >= 1) {
      ++report.entries;
      before_sum += rec.result.chars_before;
      after_sum += rec.result.chars_after;
      report.chars_saved += static_cast<long>(rec.result.chars_before) -
                            static_cast<long>(rec.result.chars_after);
      report.best_ratio = std::min(report.best_ratio, rec.result.ratio);
    }
  }
  report.overall_ratio =
      before_sum > 0 ? static_cast<double>(after_sum) / static_cast<double>(before_sum) : 1.0;
  report.score = report.total_chars_before > 0
                     ? static_cast<double>(report.chars_saved) /
                           static_cast<double>(report.total_chars_before)
                     : 0.0;
  return report;
}

std::pair<TaskReport, std::vector<RuleOutcome>> replay_task(const TrajectoryFile& trajectory,
                                                            const GlobalRulePool& pool,
                                                            const SessionConfig& config,
                                                            LlmGateway* gateway) {
  TaskSession session =
      TaskSession::init(trajectory.task_id, trajectory.instruction, trajectory.category,
                        trajectory.terminal_preview, pool, config, gateway);
  for (size_t i = 0; i < trajectory.steps.size(); ++i) {
    const auto& step = trajectory.steps[i];
    session.step(step.step_index, step.command, step.raw_output, gateway);
    // Feedback pairing: a step's follow-up is its recorded agent message
    // plus the next step's command.
    if (step.agent_message) {
      FollowupEvent event{FollowupKind::AgentMessage, *step.agent_message, step.step_index};
      session.report_feedback(event, gateway);
    }
    if (i + 1 < trajectory.steps.size()) {
      FollowupEvent event{FollowupKind::NextCommand, trajectory.steps[i + 1].command, {}};
      session.report_feedback(event, gateway);
    }
  }
  return {report_from_session(session), session.finalize()};
}

std::vector<double> rolling_std(const std::vector<double>& series, size_t window) {
  std::vector<double> out;
  if (window < 2 || series.size() < window) return out;
  for (size_t i = window - 1; i < series.size(); ++i) {
    double mean = 0.0;
    for (size_t j = i + 1 - window; j <= i; ++j) mean += series[j];
    mean /= static_cast<double>(window);
    double ss = 0.0;
    for (size_t j = i + 1 - window; j <= i; ++j) ss += (series[j] - mean) * (series[j] - mean);
    out.push_back(std::sqrt(ss / static_cast<double>(window - 1)));  // sample std
  }
  return out;
}

Json EvolutionReport::to_json() const {
  Json doc = Json::object();
  Json turn_docs = Json::array();
  for (const auto& t : turns) {
    Json td = Json::object();
    td["turn"] = t.turn;
    td["retention_percent"] = t.retention.retention_percent;
    td["retained_count"] = t.retention.retained_count;
    td["retention_k"] = t.retention.k;
    td["pool_generation"] = t.pool_generation;
    td["mean_score"] = t.mean_score;
    td["rolling_std"] = t.rolling_std ? Json(*t.rolling_std) : Json(nullptr);
    td["compression"] = t.compression.to_json();
    td["failures"] = t.failures;
    turn_docs.push_back(std::move(td));
  }
  doc["turns"] = std::move(turn_docs);
  doc["converged"] = converged;
  return doc;
}

EvolutionReport run_evolution(const std::vector<TrajectoryFile>& tasks, GlobalRulePool& pool,
                              const EvolutionConfig& config, LlmGateway* gateway) {
  EvolutionReport report;
  std::vector<double> turn_scores;
  const size_t batch = std::max<size_t>(1, config.batch_size);

  for (size_t turn = 1; turn <= config.max_turns; ++turn) {
    GlobalRulePool previous(pool);
    TurnReport turn_report;
    turn_report.turn = static_cast<int>(turn);

    for (size_t wave_start = 0; wave_start < tasks.size(); wave_start += batch) {
      const size_t wave_end = std::min(tasks.size(), wave_start + batch);
      struct Slot {
        TaskReport report;
        std::vector<RuleOutcome> outcomes;
        std::string error;
        bool ok = false;
      };
      std::vector<Slot> slots(wave_end - wave_start);
      std::vector<std::thread> workers;
      for (size_t i = wave_start; i < wave_end; ++i) {
        workers.emplace_back([&, i] {
          Slot& slot = slots[i - wave_start];
          try {
            auto [task_report, outcomes] =
                replay_task(tasks[i], pool, config.session, gateway);
            slot.report = std::move(task_report);
            slot.outcomes = std::move(outcomes);
            slot.ok = true;
          } catch (const std::exception& e) {
            slot.error = tasks[i].task_id + ": " + e.what();
          }
        });
      }
      for (auto& worker : workers) worker.join();
      // Write-backs are applied in task order so runs are reproducible
      // regardless of thread completion order.
      for (auto& slot : slots) {
        if (!slot.ok) {
          turn_report.failures.push_back(slot.error);
          continue;
        }
        pool.write_back(slot.outcomes, config.tau, config.alpha);
        turn_report.compression.tasks.push_back(slot.report);
      }
    }

    double score_sum = 0.0;
    for (const auto& t : turn_report.compression.tasks) {
      turn_report.compression.episodes += t.episodes;
      turn_report.compression.entries += t.entries;
      turn_report.compression.chars_saved += t.chars_saved;
      score_sum += t.score;
    }
    turn_report.mean_score = turn_report.compression.tasks.empty()
                                 ? 0.0
                                 : score_sum / static_cast<double>(turn_report.compression.tasks.size());
    turn_scores.push_back(turn_report.mean_score);
    auto stds = rolling_std(turn_scores, 3);
    if (!stds.empty()) turn_report.rolling_std = stds.back();

    turn_report.retention =
        retention(previous, pool, config.retention_k, static_cast<int>(turn));
    turn_report.pool_generation = pool.generation();
    report.turns.push_back(std::move(turn_report));

    if (report.turns.back().retention.retention_percent >= config.retention_threshold) {
      report.converged = true;
      break;
    }
  }
  return report;
}

}  // namespace termcomp
