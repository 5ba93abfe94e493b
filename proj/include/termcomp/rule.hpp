#pragma once

#include <optional>
#include <regex>
#include <stdexcept>
#include <string>
#include <vector>

#include <json.hpp>

namespace termcomp {

using Json = nlohmann::ordered_json;

// One structured compression rule. trigger_regex is matched against the
// executed command; keep/strip patterns are matched against output lines.
struct CompressionRule {
  std::string rule_id;
  std::string trigger_regex;
  std::string description;
  std::vector<std::string> keep_patterns;
  std::vector<std::string> strip_patterns;
  int keep_first_n = 5;
  int keep_last_n = 10;
  std::optional<int> max_lines;
  std::string summary_header = "[output compressed]";
  int priority = 42;
  double confidence = 1.0;
  long times_applied = 0;
  long times_complained = 0;
  std::optional<std::string> category;
  Json extra = Json::object();  // unknown fields, kept through round-trip

  bool operator==(const CompressionRule& o) const;
};

enum class ProblemKind {
  MissingField,
  BadType,
  BadRegex,
  UnsupportedConstruct,
  OutOfRange,
};

const char* problem_kind_name(ProblemKind k);

struct ValidationEntry {
  std::string field;
  ProblemKind kind;
  std::string message;
};

struct RuleValidationReport {
  std::string rule_id;
  std::vector<ValidationEntry> entries;
  bool valid() const { return entries.empty(); }
  std::string summary() const;
};

struct RuleParseError : std::runtime_error {
  std::string field;
  RuleParseError(std::string field_, const std::string& msg)
      : std::runtime_error(msg), field(std::move(field_)) {}
};

// Supported pattern dialect: literals, classes, anchors (^ $ \b), \d \s \S \w,
// quantifiers, alternation, groups. Lookbehind and backreferences are
// rejected. Returns an error message, or nullopt when the pattern is fine.
std::optional<std::string> check_pattern(const std::string& pattern);

// Compiles a pattern that already passed check_pattern. Results are cached
// per thread; patterns are matched with regex_search (substring semantics).
const std::regex& compile_pattern(const std::string& pattern);

CompressionRule parse_rule(const Json& doc);
CompressionRule parse_rule(const std::string& text);

RuleValidationReport validate_rule(const CompressionRule& rule);

Json rule_to_json(const CompressionRule& rule);
std::string serialize_rule(const CompressionRule& rule);

// The six bundled seed rules, in priority order.
const std::vector<CompressionRule>& seed_rules();
const std::string& seed_rules_text();
bool is_seed_rule_id(const std::string& rule_id);

}  // namespace termcomp
