#include "termcomp/session.hpp"

#include <algorithm>

namespace termcomp {

const char* rule_origin_name(RuleOrigin origin) {
  switch (origin) {
    case RuleOrigin::Selected: return "selected";
    case RuleOrigin::Modified: return "modified";
    case RuleOrigin::NewPlan: return "new-plan";
    case RuleOrigin::NewMidtask: return "new-midtask";
    case RuleOrigin::Replacement: return "replacement";
  }
  return "unknown";
}

ActiveRule* TaskSession::find_active(const std::string& rule_id) {
  for (auto& ar : active_rules_)
    if (ar.rule.rule_id == rule_id) return &ar;
  return nullptr;
}

bool TaskSession::has_rule_id(const std::string& rule_id) const {
  for (const auto& ar : active_rules_)
    if (ar.rule.rule_id == rule_id) return true;
  return false;
}

std::string TaskSession::unique_rule_id(std::string candidate) const {
  while (has_rule_id(candidate)) candidate += "_v2";
  return candidate;
}

void TaskSession::add_rule(CompressionRule rule, RuleOrigin origin, double task_confidence) {
  ActiveRule ar;
  ar.rule = std::move(rule);
  ar.origin = origin;
  ar.task_confidence = task_confidence;
  active_rules_.push_back(std::move(ar));
}

TaskSession TaskSession::init(std::string task_id, std::string instruction,
                              std::optional<std::string> category,
                              const std::string& terminal_preview, const GlobalRulePool& pool,
                              const SessionConfig& config, LlmGateway* gateway) {
  TaskSession session;
  session.task_id_ = std::move(task_id);
  session.instruction_ = std::move(instruction);
  session.category_ = std::move(category);
  session.config_ = config;

  const auto candidates = pool.top_k(config.top_k, session.category_);
  auto degrade = [&](const std::string& why) {
    session.active_rules_.clear();
    for (const auto& rule : candidates) session.add_rule(rule, RuleOrigin::Selected, rule.confidence);
    if (!why.empty()) session.diagnostics_.push_back("init degraded: " + why);
  };

  if (!gateway) {
    degrade("");
    return session;
  }

  PromptRequest request;
  request.bindings["instruction"] = session.instruction_;
  request.bindings["task_category"] = session.category_.value_or("general");
  request.bindings["terminal_state"] = terminal_preview;
  if (candidates.empty()) {
    request.template_id = TemplateId::ProposalNoCache;
  } else {
    request.template_id = TemplateId::ProposalWithCache;
    Json cached = Json::array();
    for (const auto& rule : candidates) cached.push_back(rule_to_json(rule));
    request.bindings["cached_rules_json"] = cached.dump(2);
  }

  try {
    RuleProposal proposal = request_proposal(*gateway, request);
    for (const auto& d : proposal.diagnostics) session.diagnostics_.push_back(d);
    for (const auto& id : proposal.selected_rule_ids) {
      auto it = std::find_if(candidates.begin(), candidates.end(),
                             [&](const CompressionRule& r) { return r.rule_id == id; });
      if (it == candidates.end()) {
        session.diagnostics_.push_back("selected_rule_ids: '" + id + "' is not a candidate; dropped");
        continue;
      }
      if (!session.has_rule_id(id)) session.add_rule(*it, RuleOrigin::Selected, it->confidence);
    }
    for (auto rule : proposal.modified_rules) {
      rule.rule_id = session.unique_rule_id(rule.rule_id.empty() ? "modified_rule" : rule.rule_id);
      session.add_rule(std::move(rule), RuleOrigin::Modified, 1.0);
    }
    for (auto rule : proposal.new_rules) {
      rule.rule_id = session.unique_rule_id(rule.rule_id.empty() ? "new_rule" : rule.rule_id);
      session.add_rule(std::move(rule), RuleOrigin::NewPlan, 1.0);
    }
  } catch (const GatewayError& e) {
    degrade(e.what());
  }
  return session;
}

ObservationRecord TaskSession::step(int step_index, const std::string& command,
                                    const std::string& raw, LlmGateway* gateway) {
  std::vector<const CompressionRule*> eligible;
  for (const auto& ar : active_rules_)
    if (!ar.frozen) eligible.push_back(&ar.rule);

  ObservationRecord record = compress(step_index, command, raw, eligible, config_.executor);

  if (record.coverage == Coverage::Covered && record.result.applied_rule_id &&
      record.result.lines_removed >= 1) {
    if (ActiveRule* ar = find_active(*record.result.applied_rule_id)) {
      ar->delta_applications += 1;
      ar->task_confidence = std::min(1.0, ar->task_confidence + 0.05);
    }
  } else if (record.coverage == Coverage::Uncovered && gateway &&
             active_rules_.size() < config_.rule_cap) {
    PromptRequest request;
    request.template_id = TemplateId::SpawnNew;
    request.bindings["output_length"] = std::to_string(raw.size());
    request.bindings["command"] = command;
    request.bindings["raw_output_head"] = record.result.compressed_text;
    request.bindings["raw_output_tail"] = record.result.compressed_text;
    request.bindings["task_instruction"] = instruction_;
    try {
      CompressionRule rule = request_single_rule(*gateway, request);
      rule.rule_id = unique_rule_id(rule.rule_id);
      add_rule(rule, RuleOrigin::NewMidtask, 1.0);
      ActiveRule& ar = active_rules_.back();
      // The spawned rule applies retroactively to the triggering output.
      record.result = apply_rule(ar.rule, record.result.compressed_text);
      record.coverage = Coverage::Covered;
      if (record.result.lines_removed >= 1) {
        ar.delta_applications += 1;
        ar.task_confidence = std::min(1.0, ar.task_confidence + 0.05);
      }
    } catch (const GatewayError& e) {
      diagnostics_.push_back("spawn failed at step " + std::to_string(step_index) + ": " +
                             e.what());
    }
  }

  history_.push_back(record);
  return record;
}

std::vector<std::string> TaskSession::report_feedback(const FollowupEvent& event,
                                                      LlmGateway* gateway) {
  std::vector<std::string> frozen_ids;
  auto complained_step = detect_complaint(history_, event, config_.complaint);
  if (!complained_step) return frozen_ids;

  const ObservationRecord* record = nullptr;
  for (const auto& rec : history_)
    if (rec.step_index == *complained_step) record = &rec;
  if (!record || !record->result.applied_rule_id || record->result.lines_removed < 1)
    return frozen_ids;

  ActiveRule* ar = find_active(*record->result.applied_rule_id);
  if (!ar || ar->frozen) return frozen_ids;

  ar->frozen = true;
  ar->complained = true;
  ar->task_confidence = 0.0;
  ar->rule.times_complained += 1;
  frozen_ids.push_back(ar->rule.rule_id);

  if (gateway && active_rules_.size() < config_.rule_cap) {
    PromptRequest request;
    request.template_id = TemplateId::SpawnReplacement;
    request.bindings["old_rule_json"] = serialize_rule(ar->rule);
    request.bindings["command"] = record->command;
    request.bindings["raw_output_snippet"] = record->raw_output;
    request.bindings["agent_feedback"] = event.text;
    try {
      CompressionRule replacement = request_single_rule(*gateway, request);
      const std::string old_id = ar->rule.rule_id;
      if (replacement.rule_id.empty() || replacement.rule_id == old_id ||
          has_rule_id(replacement.rule_id))
        replacement.rule_id = unique_rule_id(old_id + "_v2");
      add_rule(std::move(replacement), RuleOrigin::Replacement, 1.0);
    } catch (const GatewayError& e) {
      diagnostics_.push_back("replacement spawn failed for '" + ar->rule.rule_id + "': " +
                             e.what());
    }
  }
  return frozen_ids;
}

std::vector<RuleOutcome> TaskSession::finalize() const {
  std::vector<RuleOutcome> outcomes;
  for (const auto& ar : active_rules_) {
    RuleOutcome outcome;
    outcome.rule_id = ar.rule.rule_id;
    outcome.delta_applications = ar.delta_applications;
    outcome.task_confidence = ar.task_confidence;
    outcome.complained = ar.complained;
    if (ar.origin != RuleOrigin::Selected) outcome.rule_body = ar.rule;
    outcomes.push_back(std::move(outcome));
  }
  return outcomes;
}

Json TaskSession::transcript_json() const {
  Json steps = Json::array();
  for (const auto& rec : history_) {
    Json step = Json::object();
    step["step_index"] = rec.step_index;
    step["command"] = rec.command;
    step["coverage"] = coverage_name(rec.coverage);
    step["applied_rule_id"] =
        rec.result.applied_rule_id ? Json(*rec.result.applied_rule_id) : Json(nullptr);
    step["lines_removed"] = rec.result.lines_removed;
    step["chars_before"] = rec.result.chars_before;
    step["chars_after"] = rec.result.chars_after;
    step["ratio"] = rec.result.ratio;
    steps.push_back(std::move(step));
  }
  Json doc = Json::object();
  doc["task_id"] = task_id_;
  doc["steps"] = std::move(steps);
  return doc;
}

}  // namespace termcomp
