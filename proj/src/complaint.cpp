#include "termcomp/complaint.hpp"

#include <algorithm>
#include <cctype>
#include <sstream>

namespace termcomp {

namespace {

std::string normalize_ws(const std::string& s) {
  std::string out;
  bool in_space = true;
  for (char c : s) {
    if (std::isspace(static_cast<unsigned char>(c))) {
      if (!out.empty()) in_space = true;
    } else {
      if (in_space && !out.empty()) out += ' ';
      out += c;
      in_space = false;
    }
  }
  return out;
}

std::string to_lower(std::string s) {
  std::transform(s.begin(), s.end(), s.begin(),
                 [](unsigned char c) { return static_cast<char>(std::tolower(c)); });
  return s;
}

std::vector<std::string> tokens(const std::string& s) {
  std::istringstream in(s);
  std::vector<std::string> out;
  std::string tok;
  while (in >> tok) out.push_back(tok);
  return out;
}

std::string join(const std::vector<std::string>& toks) {
  std::string out;
  for (const auto& t : toks) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

// Command with output-narrowing parts removed: trailing `| head ...` or
// `| tail ...` pipe stage, -q / --quiet flags.
std::string strip_narrowers(const std::string& command) {
  std::string s = normalize_ws(command);
  for (const char* pipe : {"| head", "| tail"}) {
    size_t pos = s.rfind(pipe);
    if (pos != std::string::npos && s.find('|', pos + 1) == std::string::npos) {
      s = s.substr(0, pos);
      break;
    }
  }
  auto toks = tokens(s);
  toks.erase(std::remove_if(toks.begin(), toks.end(),
                            [](const std::string& t) { return t == "-q" || t == "--quiet"; }),
             toks.end());
  return join(toks);
}

std::string strip_verbose(const std::string& command) {
  auto toks = tokens(normalize_ws(command));
  toks.erase(std::remove_if(toks.begin(), toks.end(),
                            [](const std::string& t) { return t == "-v" || t == "--verbose"; }),
             toks.end());
  return join(toks);
}

bool widens(const std::string& event_command, const std::string& prior_command) {
  const std::string e = normalize_ws(event_command);
  const std::string c = normalize_ws(prior_command);
  if (e == c) return false;  // plain repetition is handled separately
  if (e == strip_narrowers(prior_command) && !e.empty()) return true;
  if (strip_verbose(event_command) == c && !c.empty()) return true;
  return false;
}

}  // namespace

std::optional<int> detect_complaint(const std::vector<ObservationRecord>& history,
                                    const FollowupEvent& event, const ComplaintConfig& config) {
  if (history.empty()) return std::nullopt;
  const size_t window_start =
      history.size() > static_cast<size_t>(config.window)
          ? history.size() - static_cast<size_t>(config.window)
          : 0;

  auto qualifies = [&](const ObservationRecord& rec) {
    // Bypassed and untouched steps can never be complained about.
    return rec.result.lines_removed >= 1;
  };

  if (event.kind == FollowupKind::AgentMessage) {
    const std::string msg = to_lower(event.text);
    bool phrased = std::any_of(config.phrases.begin(), config.phrases.end(),
                               [&](const std::string& p) {
                                 return msg.find(to_lower(p)) != std::string::npos;
                               });
    if (!phrased) return std::nullopt;
    if (event.refers_to_step) {
      for (size_t i = window_start; i < history.size(); ++i)
        if (history[i].step_index == *event.refers_to_step && qualifies(history[i]))
          return history[i].step_index;
      return std::nullopt;
    }
    for (size_t i = history.size(); i-- > window_start;)
      if (qualifies(history[i])) return history[i].step_index;
    return std::nullopt;
  }

  const std::string cmd = normalize_ws(event.text);
  for (size_t i = history.size(); i-- > window_start;) {
    const auto& rec = history[i];
    if (!qualifies(rec)) continue;
    if (normalize_ws(rec.command) == cmd || widens(event.text, rec.command))
      return rec.step_index;
  }
  return std::nullopt;
}

}  // namespace termcomp
