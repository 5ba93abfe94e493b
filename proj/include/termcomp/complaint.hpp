#pragma once

#include <optional>
#include <string>
#include <vector>

#include "termcomp/executor.hpp"

namespace termcomp {

enum class FollowupKind { NextCommand, AgentMessage };

struct FollowupEvent {
  FollowupKind kind = FollowupKind::NextCommand;
  std::string text;
  // Step the follow-up refers to; defaults to the most recent qualifying step.
  std::optional<int> refers_to_step;
};

struct ComplaintConfig {
  int window = 3;  // steps looked back for a qualifying antecedent
  std::vector<std::string> phrases = {
      "full output", "truncated", "missing", "show the complete", "entire log",
      "re-run to see",
  };
};

// Over-compression complaint detection. Raises a complaint against the most
// recent step within the window whose output was compressed (>= 1 line
// removed) when the follow-up either repeats that step's command, widens it
// (drops a trailing `| head`/`| tail`, drops -q/--quiet, adds -v/--verbose),
// or is an agent message containing a complaint phrase. Returns the step
// index complained about, or nullopt.
std::optional<int> detect_complaint(const std::vector<ObservationRecord>& history,
                                    const FollowupEvent& event,
                                    const ComplaintConfig& config = {});

}  // namespace termcomp
