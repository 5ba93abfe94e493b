#pragma once

#include <optional>
#include <string>
#include <vector>

#include "termcomp/complaint.hpp"
#include "termcomp/executor.hpp"
#include "termcomp/gateway.hpp"
#include "termcomp/pool.hpp"

namespace termcomp {

enum class RuleOrigin { Selected, Modified, NewPlan, NewMidtask, Replacement };

const char* rule_origin_name(RuleOrigin origin);

struct ActiveRule {
  CompressionRule rule;
  RuleOrigin origin = RuleOrigin::Selected;
  bool frozen = false;
  double task_confidence = 1.0;
  long delta_applications = 0;
  bool complained = false;
};

struct SessionConfig {
  size_t top_k = 30;
  double tau = 0.3;
  size_t rule_cap = 12;  // spawn requests are suppressed beyond this
  ExecutorConfig executor;
  ComplaintConfig complaint;
};

// Per-task lifecycle: initializes the active rule set from the pool through
// the gateway, serves compression steps, spawns rules for uncovered outputs,
// freezes complained rules with conservative replacements, and finalizes
// the outcomes the pool write-back consumes. Single-threaded per session.
class TaskSession {
 public:
  // Gateway failures degrade to the raw top-k candidates; initialization
  // never fails the task.
  static TaskSession init(std::string task_id, std::string instruction,
                          std::optional<std::string> category, const std::string& terminal_preview,
                          const GlobalRulePool& pool, const SessionConfig& config,
                          LlmGateway* gateway);

  ObservationRecord step(int step_index, const std::string& command, const std::string& raw,
                         LlmGateway* gateway);

  // Returns ids of rules frozen by this follow-up (empty when no complaint).
  std::vector<std::string> report_feedback(const FollowupEvent& event, LlmGateway* gateway);

  std::vector<RuleOutcome> finalize() const;

  const std::string& task_id() const { return task_id_; }
  const std::vector<ActiveRule>& active_rules() const { return active_rules_; }
  const std::vector<ObservationRecord>& history() const { return history_; }
  const std::vector<std::string>& diagnostics() const { return diagnostics_; }

  Json transcript_json() const;

 private:
  TaskSession() = default;

  ActiveRule* find_active(const std::string& rule_id);
  bool has_rule_id(const std::string& rule_id) const;
  std::string unique_rule_id(std::string candidate) const;
  void add_rule(CompressionRule rule, RuleOrigin origin, double task_confidence);

  std::string task_id_;
  std::string instruction_;
  std::optional<std::string> category_;
  SessionConfig config_;
  std::vector<ActiveRule> active_rules_;
  std::vector<ObservationRecord> history_;
  std::vector<std::string> diagnostics_;
};

}  // namespace termcomp
