#include "termcomp/executor.hpp"

#include "termcomp/pool.hpp"

namespace termcomp {

const char* coverage_name(Coverage c) {
  switch (c) {
    case Coverage::Covered: return "covered";
    case Coverage::Uncovered: return "uncovered";
    case Coverage::Bypassed: return "bypassed";
  }
  return "unknown";
}

std::vector<std::string> split_lines(const std::string& text, bool* trailing_newline) {
  std::vector<std::string> lines;
  size_t start = 0;
  while (start <= text.size()) {
    size_t nl = text.find('\n', start);
    if (nl == std::string::npos) {
      lines.push_back(text.substr(start));
      break;
    }
    lines.push_back(text.substr(start, nl - start));
    start = nl + 1;
  }
  bool trailing = !lines.empty() && lines.back().empty() && !text.empty();
  if (trailing) lines.pop_back();
  if (trailing_newline) *trailing_newline = trailing;
  return lines;
}

std::string join_lines(const std::vector<std::string>& lines, bool trailing_newline) {
  std::string out;
  for (size_t i = 0; i < lines.size(); ++i) {
    out += lines[i];
    if (i + 1 < lines.size()) out += '\n';
  }
  if (trailing_newline && !lines.empty()) out += '\n';
  return out;
}

namespace {

bool starts_with(const std::string& s, const char* prefix) {
  return s.rfind(prefix, 0) == 0;
}

bool contains(const std::string& s, const char* needle) {
  return s.find(needle) != std::string::npos;
}

// Fixed, case-sensitive critical-signal set, checked line by line.
bool is_critical_line(const std::string& line) {
  return contains(line, "Traceback (most recent call last)") ||
         contains(line, "SyntaxError") || contains(line, " error:") ||
         starts_with(line, "error:") || contains(line, "fatal:") ||
         contains(line, "FATAL") || contains(line, "Segmentation fault") ||
         contains(line, "panicked at") || contains(line, "undefined reference") ||
         contains(line, "AssertionError") || starts_with(line, "E: ") ||
         contains(line, "npm ERR!");
}

std::string strip_ansi(const std::string& s) {
  std::string out;
  out.reserve(s.size());
  size_t i = 0;
  while (i < s.size()) {
    if (static_cast<unsigned char>(s[i]) == 0x1b && i + 1 < s.size()) {
      char n = s[i + 1];
      if (n == '[') {  // CSI: parameter/intermediate bytes then one final byte
        size_t j = i + 2;
        while (j < s.size() && static_cast<unsigned char>(s[j]) >= 0x20 &&
               static_cast<unsigned char>(s[j]) <= 0x3f)
          ++j;
        if (j < s.size()) ++j;
        i = j;
        continue;
      }
      if (n == ']') {  // OSC: terminated by BEL or ST
        size_t j = i + 2;
        while (j < s.size() && s[j] != '\x07' &&
               !(s[j] == '\x1b' && j + 1 < s.size() && s[j + 1] == '\\'))
          ++j;
        if (j < s.size()) j += (s[j] == '\x07') ? 1 : 2;
        i = j;
        continue;
      }
      i += 2;  // two-character escape
      continue;
    }
    out.push_back(s[i]);
    ++i;
  }
  return out;
}

// Progress bars overwrite in place with \r; only the final state matters.
std::string collapse_carriage_returns(std::string line) {
  while (!line.empty() && line.back() == '\r') line.pop_back();
  size_t pos = line.rfind('\r');
  if (pos != std::string::npos) line = line.substr(pos + 1);
  return line;
}

bool is_motd_line(const std::string& line) {
  return line.empty() || starts_with(line, "Welcome to Ubuntu") ||
         starts_with(line, " * ") || starts_with(line, "* ") ||
         starts_with(line, "This system has been minimized") ||
         starts_with(line, "To restore this content") ||
         contains(line, "Expanded Security Maintenance") ||
         contains(line, "updates can be applied") ||
         contains(line, "To check for new updates run") ||
         starts_with(line, "Last login:");
}

}  // namespace

OutputClass classify_output(const std::string&, const std::string& raw) {
  for (const auto& line : split_lines(raw))
    if (is_critical_line(line)) return OutputClass::Critical;
  return OutputClass::Normal;
}

std::string baseline_filter(const std::string& raw) {
  bool trailing = false;
  auto lines = split_lines(strip_ansi(raw), &trailing);
  for (auto& line : lines) line = collapse_carriage_returns(line);

  if (!lines.empty() && starts_with(lines[0], "Welcome to Ubuntu")) {
    size_t i = 0;
    while (i < lines.size() && is_motd_line(lines[i])) ++i;
    lines.erase(lines.begin(), lines.begin() + static_cast<long>(i));
  }
  return join_lines(lines, trailing);
}

const CompressionRule* select_rule(const std::string& command,
                                   const std::vector<const CompressionRule*>& active_rules) {
  const CompressionRule* best = nullptr;
  for (const auto* rule : active_rules) {
    if (!rule) continue;
    if (!std::regex_search(command, compile_pattern(rule->trigger_regex))) continue;
    if (!best) {
      best = rule;
      continue;
    }
    if (rule->priority != best->priority) {
      if (rule->priority < best->priority) best = rule;
    } else if (ranking_score(*rule) != ranking_score(*best)) {
      if (ranking_score(*rule) > ranking_score(*best)) best = rule;
    } else if (rule->rule_id < best->rule_id) {
      best = rule;
    }
  }
  return best;
}

CompressionResult apply_rule(const CompressionRule& rule, const std::string& text) {
  CompressionResult result;
  result.applied_rule_id = rule.rule_id;
  result.chars_before = text.size();

  bool trailing = false;
  auto lines = split_lines(text, &trailing);
  const size_t n = lines.size();
  const size_t head_n = static_cast<size_t>(rule.keep_first_n);
  const size_t tail_n = static_cast<size_t>(rule.keep_last_n);

  if (head_n + tail_n >= n) {  // head and tail would overlap: leave untouched
    result.compressed_text = text;
    result.chars_after = text.size();
    result.ratio = result.chars_before == 0
                       ? 1.0
                       : static_cast<double>(result.chars_after) / result.chars_before;
    return result;
  }

  auto matches_any = [](const std::string& line, const std::vector<std::string>& patterns) {
    for (const auto& p : patterns)
      if (std::regex_search(line, compile_pattern(p))) return true;
    return false;
  };

  std::vector<std::string> body;
  long removed = 0;
  for (size_t i = head_n; i < n - tail_n; ++i) {
    const auto& line = lines[i];
    // Keep wins over strip; lines matching neither are retained.
    if (matches_any(line, rule.keep_patterns) || !matches_any(line, rule.strip_patterns))
      body.push_back(line);
    else
      ++removed;
  }
  if (rule.max_lines && body.size() > static_cast<size_t>(*rule.max_lines)) {
    removed += static_cast<long>(body.size()) - *rule.max_lines;
    body.resize(static_cast<size_t>(*rule.max_lines));
  }

  std::vector<std::string> out(lines.begin(), lines.begin() + static_cast<long>(head_n));
  if (removed > 0) {
    out.push_back(rule.summary_header);
    out.push_back("  [" + std::to_string(removed) + " lines removed]");
  }
  out.insert(out.end(), body.begin(), body.end());
  out.insert(out.end(), lines.end() - static_cast<long>(tail_n), lines.end());

  result.compressed_text = join_lines(out, trailing);
  result.lines_removed = removed;
  result.chars_after = result.compressed_text.size();
  result.ratio = result.chars_before == 0
                     ? 1.0
                     : static_cast<double>(result.chars_after) / result.chars_before;
  return result;
}

ObservationRecord compress(int step_index, const std::string& command, const std::string& raw,
                           const std::vector<const CompressionRule*>& active_rules,
                           const ExecutorConfig& config) {
  ObservationRecord record;
  record.step_index = step_index;
  record.command = command;
  record.raw_output = raw;
  record.output_class = classify_output(command, raw);

  if (record.output_class == OutputClass::Critical) {
    // Byte-exact pass-through; baseline filters are skipped as well.
    record.result.compressed_text = raw;
    record.result.chars_before = raw.size();
    record.result.chars_after = raw.size();
    record.result.ratio = 1.0;
    record.coverage = Coverage::Bypassed;
    return record;
  }

  const std::string filtered = baseline_filter(raw);
  if (const CompressionRule* rule = select_rule(command, active_rules)) {
    record.result = apply_rule(*rule, filtered);
    record.coverage = Coverage::Covered;
    return record;
  }

  record.result.compressed_text = filtered;
  record.result.chars_before = filtered.size();
  record.result.chars_after = filtered.size();
  record.result.ratio = 1.0;
  const size_t raw_lines = split_lines(raw).size();
  const bool long_output = raw.size() > config.uncovered_min_chars ||
                           raw_lines > static_cast<size_t>(config.uncovered_min_lines);
  record.coverage = long_output ? Coverage::Uncovered : Coverage::Covered;
  return record;
}

}  // namespace termcomp
