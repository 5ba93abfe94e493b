#pragma once

#include <optional>
#include <string>
#include <vector>

#include "termcomp/rule.hpp"

namespace termcomp {

enum class OutputClass { Critical, Normal };
enum class Coverage { Covered, Uncovered, Bypassed };

const char* coverage_name(Coverage c);

struct CompressionResult {
  std::string compressed_text;
  long lines_removed = 0;
  size_t chars_before = 0;
  size_t chars_after = 0;
  double ratio = 1.0;  // chars_after / chars_before, 1.0 when chars_before == 0
  std::optional<std::string> applied_rule_id;
};

struct ObservationRecord {
  int step_index = 0;
  std::string command;
  std::string raw_output;
  OutputClass output_class = OutputClass::Normal;
  CompressionResult result;
  Coverage coverage = Coverage::Covered;
};

struct ExecutorConfig {
  // A Normal output with no matching rule counts as uncovered only past
  // these thresholds.
  size_t uncovered_min_chars = 1500;
  int uncovered_min_lines = 40;
};

std::vector<std::string> split_lines(const std::string& text, bool* trailing_newline = nullptr);
std::string join_lines(const std::vector<std::string>& lines, bool trailing_newline);

// Critical iff any raw line carries an explicit error/failure signal.
// Runs on raw text, before baseline filtering.
OutputClass classify_output(const std::string& command, const std::string& raw);

// ANSI escape removal, carriage-return overwrite collapse, leading
// Ubuntu MOTD banner removal. Idempotent.
std::string baseline_filter(const std::string& raw);

// Unique winner under: lowest priority value, then higher ranking score,
// then lexicographic rule_id. Null when no trigger matches the command.
const CompressionRule* select_rule(const std::string& command,
                                   const std::vector<const CompressionRule*>& active_rules);

CompressionResult apply_rule(const CompressionRule& rule, const std::string& text);

ObservationRecord compress(int step_index, const std::string& command, const std::string& raw,
                           const std::vector<const CompressionRule*>& active_rules,
                           const ExecutorConfig& config = {});

}  // namespace termcomp
