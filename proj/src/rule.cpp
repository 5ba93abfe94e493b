#include "termcomp/rule.hpp"

#include <mutex>
#include <set>
#include <sstream>
#include <unordered_map>

namespace termcomp {

const char* problem_kind_name(ProblemKind k) {
  switch (k) {
    case ProblemKind::MissingField: return "missing-field";
    case ProblemKind::BadType: return "bad-type";
    case ProblemKind::BadRegex: return "bad-regex";
    case ProblemKind::UnsupportedConstruct: return "unsupported-construct";
    case ProblemKind::OutOfRange: return "out-of-range";
  }
  return "unknown";
}

std::string RuleValidationReport::summary() const {
  std::ostringstream os;
  os << rule_id << ": " << (valid() ? "valid" : "invalid");
  for (const auto& e : entries)
    os << "; " << e.field << " (" << problem_kind_name(e.kind) << "): " << e.message;
  return os.str();
}

bool CompressionRule::operator==(const CompressionRule& o) const {
  return rule_id == o.rule_id && trigger_regex == o.trigger_regex &&
         description == o.description && keep_patterns == o.keep_patterns &&
         strip_patterns == o.strip_patterns && keep_first_n == o.keep_first_n &&
         keep_last_n == o.keep_last_n && max_lines == o.max_lines &&
         summary_header == o.summary_header && priority == o.priority &&
         confidence == o.confidence && times_applied == o.times_applied &&
         times_complained == o.times_complained && category == o.category &&
         extra == o.extra;
}

std::optional<std::string> check_pattern(const std::string& pattern) {
  for (size_t i = 0; i < pattern.size(); ++i) {
    char c = pattern[i];
    if (c == '\\' && i + 1 < pattern.size()) {
      char n = pattern[i + 1];
      if (n >= '1' && n <= '9')
        return "backreference \\" + std::string(1, n) + " is not supported";
      ++i;
      continue;
    }
    if (c == '(' && pattern.compare(i, 3, "(?<") == 0)
      return "lookbehind/named groups are not supported";
  }
  try {
    std::regex re(pattern, std::regex::ECMAScript | std::regex::optimize);
    (void)re;
  } catch (const std::regex_error& e) {
    return std::string("does not compile: ") + e.what();
  }
  return std::nullopt;
}

const std::regex& compile_pattern(const std::string& pattern) {
  thread_local std::unordered_map<std::string, std::regex> cache;
  auto it = cache.find(pattern);
  if (it == cache.end()) {
    it = cache.emplace(pattern,
                       std::regex(pattern, std::regex::ECMAScript | std::regex::optimize))
             .first;
  }
  return it->second;
}

namespace {

const std::set<std::string> kKnownFields = {
    "rule_id",      "trigger_regex",  "description",   "keep_patterns",
    "strip_patterns", "keep_first_n", "keep_last_n",   "max_lines",
    "summary_header", "priority",     "confidence",    "times_applied",
    "times_complained", "category"};

std::string get_string(const Json& doc, const char* field, bool required,
                       const std::string& fallback = "") {
  if (!doc.contains(field)) {
    if (required) throw RuleParseError(field, std::string("missing required field '") + field + "'");
    return fallback;
  }
  if (!doc[field].is_string())
    throw RuleParseError(field, std::string("field '") + field + "' must be a string");
  return doc[field].get<std::string>();
}

std::vector<std::string> get_pattern_list(const Json& doc, const char* field) {
  std::vector<std::string> out;
  if (!doc.contains(field)) return out;
  if (!doc[field].is_array())
    throw RuleParseError(field, std::string("field '") + field + "' must be an array of strings");
  for (const auto& v : doc[field]) {
    if (!v.is_string())
      throw RuleParseError(field, std::string("field '") + field + "' must contain only strings");
    out.push_back(v.get<std::string>());
  }
  return out;
}

long get_int(const Json& doc, const char* field, long fallback) {
  if (!doc.contains(field) || doc[field].is_null()) return fallback;
  if (!doc[field].is_number_integer())
    throw RuleParseError(field, std::string("field '") + field + "' must be an integer");
  return doc[field].get<long>();
}

}  // namespace

CompressionRule parse_rule(const Json& doc) {
  if (!doc.is_object()) throw RuleParseError("", "rule document must be a JSON object");
  CompressionRule r;
  r.rule_id = get_string(doc, "rule_id", true);
  if (r.rule_id.empty()) throw RuleParseError("rule_id", "rule_id must be non-empty");
  r.trigger_regex = get_string(doc, "trigger_regex", true);
  r.description = get_string(doc, "description", true);
  r.keep_patterns = get_pattern_list(doc, "keep_patterns");
  r.strip_patterns = get_pattern_list(doc, "strip_patterns");
  r.keep_first_n = static_cast<int>(get_int(doc, "keep_first_n", 5));
  r.keep_last_n = static_cast<int>(get_int(doc, "keep_last_n", 10));
  if (doc.contains("max_lines") && !doc["max_lines"].is_null())
    r.max_lines = static_cast<int>(get_int(doc, "max_lines", 0));
  r.summary_header = get_string(doc, "summary_header", false, "[output compressed]");
  r.priority = static_cast<int>(get_int(doc, "priority", 42));
  if (doc.contains("confidence")) {
    if (!doc["confidence"].is_number())
      throw RuleParseError("confidence", "field 'confidence' must be a number");
    r.confidence = doc["confidence"].get<double>();
  }
  r.times_applied = get_int(doc, "times_applied", 0);
  r.times_complained = get_int(doc, "times_complained", 0);
  if (doc.contains("category") && !doc["category"].is_null())
    r.category = get_string(doc, "category", false);
  for (auto it = doc.begin(); it != doc.end(); ++it) {
    if (!kKnownFields.count(it.key())) r.extra[it.key()] = it.value();
  }

  auto report = validate_rule(r);
  if (!report.valid()) {
    const auto& e = report.entries.front();
    throw RuleParseError(e.field, report.summary());
  }
  return r;
}

CompressionRule parse_rule(const std::string& text) {
  Json doc;
  try {
    doc = Json::parse(text);
  } catch (const Json::parse_error& e) {
    throw RuleParseError("", std::string("not valid JSON: ") + e.what());
  }
  return parse_rule(doc);
}

RuleValidationReport validate_rule(const CompressionRule& rule) {
  RuleValidationReport report{rule.rule_id, {}};
  auto bad = [&](std::string field, ProblemKind kind, std::string msg) {
    report.entries.push_back({std::move(field), kind, std::move(msg)});
  };
  if (rule.rule_id.empty())
    bad("rule_id", ProblemKind::MissingField, "rule_id must be non-empty");
  if (rule.confidence < 0.0 || rule.confidence > 1.0)
    bad("confidence", ProblemKind::OutOfRange, "confidence must be in [0,1]");
  if (rule.times_applied < 0)
    bad("times_applied", ProblemKind::OutOfRange, "times_applied must be >= 0");
  if (rule.times_complained < 0)
    bad("times_complained", ProblemKind::OutOfRange, "times_complained must be >= 0");
  if (rule.keep_first_n < 0)
    bad("keep_first_n", ProblemKind::OutOfRange, "keep_first_n must be >= 0");
  if (rule.keep_last_n < 0)
    bad("keep_last_n", ProblemKind::OutOfRange, "keep_last_n must be >= 0");
  if (rule.max_lines && *rule.max_lines < 0)
    bad("max_lines", ProblemKind::OutOfRange, "max_lines must be >= 0");

  auto check = [&](const std::string& field, const std::string& pattern) {
    if (auto err = check_pattern(pattern)) {
      bool unsupported = err->find("not supported") != std::string::npos;
      bad(field, unsupported ? ProblemKind::UnsupportedConstruct : ProblemKind::BadRegex,
          "pattern `" + pattern + "` " + *err);
    }
  };
  check("trigger_regex", rule.trigger_regex);
  for (size_t i = 0; i < rule.keep_patterns.size(); ++i)
    check("keep_patterns[" + std::to_string(i) + "]", rule.keep_patterns[i]);
  for (size_t i = 0; i < rule.strip_patterns.size(); ++i)
    check("strip_patterns[" + std::to_string(i) + "]", rule.strip_patterns[i]);
  return report;
}

Json rule_to_json(const CompressionRule& rule) {
  Json doc = Json::object();
  doc["rule_id"] = rule.rule_id;
  doc["trigger_regex"] = rule.trigger_regex;
  doc["description"] = rule.description;
  doc["keep_patterns"] = rule.keep_patterns;
  doc["strip_patterns"] = rule.strip_patterns;
  doc["keep_first_n"] = rule.keep_first_n;
  doc["keep_last_n"] = rule.keep_last_n;
  if (rule.max_lines)
    doc["max_lines"] = *rule.max_lines;
  else
    doc["max_lines"] = nullptr;
  doc["summary_header"] = rule.summary_header;
  doc["priority"] = rule.priority;
  doc["confidence"] = rule.confidence;
  doc["times_applied"] = rule.times_applied;
  doc["times_complained"] = rule.times_complained;
  if (rule.category) doc["category"] = *rule.category;
  for (auto it = rule.extra.begin(); it != rule.extra.end(); ++it)
    doc[it.key()] = it.value();
  return doc;
}

std::string serialize_rule(const CompressionRule& rule) {
  return rule_to_json(rule).dump(2);
}

namespace {
// Mirrors data/seed_rules.json; the unit tests assert the two stay in sync.
const char* kSeedRulesJson = R"SEED([
  {
    "rule_id": "seed_git_noise",
    "trigger_regex": "\\bgit\\b\\s+(clone|fetch|pull|push|checkout|submodule)",
    "description": "Removes git transfer progress lines (Counting/Compressing/Receiving/Resolving objects) and remote enumeration noise. Compresses hint blocks.",
    "keep_patterns": [
      "\\bfatal:",
      "\\berror:",
      "\\bwarning:",
      "Already up to date",
      "Cloning into",
      "branch\\s+\\S+\\s+->"
    ],
    "strip_patterns": [
      "Enumerating objects: \\d+, done\\.",
      "Counting objects: +\\d+%",
      "Counting objects: \\d+, done\\.",
      "Compressing objects: +\\d+%",
      "Compressing objects: \\d+, done\\.",
      "Receiving objects: +\\d+%",
      "Receiving objects: \\d+, done\\.",
      "Resolving deltas: +\\d+%",
      "Resolving deltas: \\d+, done\\.",
      "remote: Enumerating objects:",
      "remote: Counting objects:",
      "remote: Compressing objects:",
      "remote: Total \\d+",
      "^hint: "
    ],
    "keep_first_n": 3,
    "keep_last_n": 5,
    "max_lines": null,
    "summary_header": "[git output compressed - transfer progress removed]",
    "priority": 30,
    "confidence": 0.8,
    "times_applied": 10,
    "times_complained": 0
  },
  {
    "rule_id": "seed_heredoc",
    "trigger_regex": "(cat|tee)\\s+.*<<\\s*['\\\"]?\\w+['\\\"]?|cat\\s+>\\s*\\S+\\s*<<",
    "description": "Detects heredoc commands (cat > file << EOF) and compresses the echoed lines. Terminal echoes every line back during heredoc writes; these are pure noise once the write succeeds. Errors are preserved.",
    "keep_patterns": [
      "^bash: ",
      "^sh: ",
      ": event not found",
      ": command not found",
      "syntax error",
      ": No such file or directory"
    ],
    "strip_patterns": [
      "^> "
    ],
    "keep_first_n": 2,
    "keep_last_n": 3,
    "max_lines": 10,
    "summary_header": "[heredoc echo compressed]",
    "priority": 35,
    "confidence": 0.8,
    "times_applied": 10,
    "times_complained": 0
  },
  {
    "rule_id": "seed_pip_install",
    "trigger_regex": "\\bpip3?\\s+install\\b",
    "description": "Compresses pip install output: removes Collecting/Downloading/Requirement-already-satisfied lines while preserving errors and the final 'Successfully installed' summary.",
    "keep_patterns": [
      "\\bERROR:",
      "\\berror:",
      "Successfully installed",
      "Could not",
      "Traceback",
      "WARNING:"
    ],
    "strip_patterns": [
      "^\\s*Collecting \\S+",
      "^\\s*Downloading \\S+",
      "^\\s*Requirement already satisfied",
      "^\\s*Using cached",
      "^\\s*Installing collected packages"
    ],
    "keep_first_n": 3,
    "keep_last_n": 5,
    "max_lines": null,
    "summary_header": "[pip install output compressed]",
    "priority": 50,
    "confidence": 0.8,
    "times_applied": 10,
    "times_complained": 0
  },
  {
    "rule_id": "seed_apt_install",
    "trigger_regex": "\\bapt(?:-get)?\\s+(install|update|upgrade)\\b",
    "description": "Compresses apt/apt-get output: removes repetitive Setting-up, Unpacking, and Get: download lines while keeping first/last few and preserving errors.",
    "keep_patterns": [
      "\\bE:",
      "\\bErr:",
      "\\berror:",
      "dpkg: error",
      "Unable to locate package",
      "Reading package lists",
      "Building dependency tree"
    ],
    "strip_patterns": [
      "^Setting up \\S+",
      "^Unpacking \\S+",
      "^Get:\\d+",
      "^Preparing to unpack",
      "^Selecting previously unselected package"
    ],
    "keep_first_n": 2,
    "keep_last_n": 2,
    "max_lines": null,
    "summary_header": "[apt install output compressed]",
    "priority": 55,
    "confidence": 0.8,
    "times_applied": 10,
    "times_complained": 0
  },
  {
    "rule_id": "seed_compiler_output",
    "trigger_regex": "\\b(gcc|g\\+\\+|clang|cc|make|cmake)\\b",
    "description": "Truncates long gcc/g++/clang/cc compiler command lines (>200 chars) that clutter the output. Preserves error and warning messages.",
    "keep_patterns": [
      "\\berror:",
      "\\bwarning:",
      "\\bundefined reference",
      ": fatal error:",
      "make\\[\\d+\\]: \\*\\*\\*",
      "^ld:"
    ],
    "strip_patterns": [
      "^\\s*(gcc|g\\+\\+|clang|cc)\\s+.{200,}"
    ],
    "keep_first_n": 5,
    "keep_last_n": 10,
    "max_lines": 30,
    "summary_header": "[compiler output compressed - long command lines truncated]",
    "priority": 60,
    "confidence": 0.8,
    "times_applied": 10,
    "times_complained": 0
  },
  {
    "rule_id": "seed_openssl",
    "trigger_regex": "\\b(openssl|ssh-keygen|gpg)\\b",
    "description": "Removes OpenSSL/SSH key generation dot-progress noise. These are long strings of dots and plus signs emitted during random number generation.",
    "keep_patterns": [
      "\\berror:",
      "unable to",
      "Generating",
      "Your identification has been saved",
      "The key fingerprint is"
    ],
    "strip_patterns": [
      "[.+]{20,}"
    ],
    "keep_first_n": 5,
    "keep_last_n": 5,
    "max_lines": null,
    "summary_header": "[key generation progress compressed]",
    "priority": 65,
    "confidence": 0.8,
    "times_applied": 10,
    "times_complained": 0
  }
]
)SEED";
}  // namespace

const std::string& seed_rules_text() {
  static const std::string text = kSeedRulesJson;
  return text;
}

const std::vector<CompressionRule>& seed_rules() {
  static const std::vector<CompressionRule> rules = [] {
    std::vector<CompressionRule> out;
    for (const auto& doc : Json::parse(seed_rules_text())) out.push_back(parse_rule(doc));
    return out;
  }();
  return rules;
}

bool is_seed_rule_id(const std::string& rule_id) {
  for (const auto& r : seed_rules())
    if (r.rule_id == rule_id) return true;
  return false;
}

}  // namespace termcomp
