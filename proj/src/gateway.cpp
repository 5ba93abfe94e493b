#define CPPHTTPLIB_OPENSSL_SUPPORT
#include <httplib.h>

#include "termcomp/gateway.hpp"

#include <cstdlib>
#include <fstream>
#include <sstream>

namespace termcomp {

namespace {

const char* kProposalWithCache = R"TPL(You are a terminal output compression strategy expert.

The system already has these baseline filters (you do NOT need to generate rules for these):
- ANSI escape code removal
- System login banner (Ubuntu MOTD) removal
- Empty command polling state handling

Below are historical compression rules from previous tasks. Select the ones
relevant to the current task, modify any that need adjustment, and create
new rules if needed.

Historical rules:
{cached_rules_json}

Current task description:
{instruction}

Task category: {task_category}

Current terminal environment (first 500 chars):
{terminal_state}

Instructions:
1. "selected_rule_ids": List rule_ids of rules to use AS-IS from the historical set
2. "modified_rules": For rules that are close but need adjustment, output the full
   modified rule with a NEW rule_id (e.g., original_id + "_mod")
3. "new_rules": For command types not covered by any historical rule, create new rules

Requirements:
- Only create rules for HIGH-OUTPUT commands (pip, apt, make, pytest, git, docker, etc.)
- Do NOT create rules for short-output commands (ls, cat, echo, pwd, cd)
- NEVER compress error output --- errors must always be fully preserved
- Be conservative: when in doubt, KEEP the line rather than strip it
- Total rules (selected + modified + new) should be 3-7

Output a single JSON object:
{
  "selected_rule_ids": ["id1", "id2"],
  "modified_rules": [
    {
      "rule_id": "string",
      "trigger_regex": "string",
      "description": "string",
      "keep_patterns": ["regex1"],
      "strip_patterns": ["regex1"],
      "keep_first_n": 5,
      "keep_last_n": 10,
      "max_lines": null,
      "summary_header": "[description]",
      "priority": 42
    }
  ],
  "new_rules": [
    {same format as modified_rules}
  ]
}

Output ONLY the JSON object, no other text.)TPL";

const char* kProposalNoCache = R"TPL(You are a terminal output compression strategy expert.

The system already has these baseline filters (you do NOT need to generate rules for these):
- ANSI escape code removal
- System login banner (Ubuntu MOTD) removal
- Empty command polling state handling

Given the task below, predict which terminal commands will produce long outputs,
and create compression rules for them.

Task description:
{instruction}

Task category: {task_category}

Current terminal environment (first 500 chars):
{terminal_state}

Requirements:
- Only create rules for HIGH-OUTPUT commands (pip, apt, make, pytest, git, docker, etc.)
- Do NOT create rules for short-output commands (ls, cat, echo, pwd, cd)
- NEVER compress error output --- errors must always be fully preserved
- Be conservative: when in doubt, KEEP the line rather than strip it
- Generate 3-7 rules

For each rule, provide:
- trigger_regex: regex to match the command string
- description: what this rule does
- keep_patterns: regex patterns for lines that MUST be preserved
- strip_patterns: regex patterns for lines safe to remove
- keep_first_n: always keep first N lines (default 5)
- keep_last_n: always keep last N lines (default 10)
- max_lines: cap on body lines after filtering (null = no cap)
- summary_header: text to show when lines are removed

Output a single JSON object:
{
  "rules": [
    {
      "rule_id": "string",
      "trigger_regex": "string",
      "description": "string",
      "keep_patterns": ["regex1"],
      "strip_patterns": ["regex1"],
      "keep_first_n": 5,
      "keep_last_n": 10,
      "max_lines": null,
      "summary_header": "[description]",
      "priority": 42
    }
  ]
}

Output ONLY the JSON object, no other text.)TPL";

const char* kSpawnNew = R"TPL(You are a terminal output compression rule expert.

The agent executed a command that produced a very long output ({output_length} chars),
but no compression rule exists for this command type.

Command: {command}

Output (first 2000 chars):
{raw_output_head}

Output (last 500 chars):
{raw_output_tail}

Task context: {task_instruction}

Generate a compression rule for this type of command. The rule should:
1. Have a trigger_regex that matches this CATEGORY of command (not just this exact command)
2. Identify repetitive/progress/noise patterns in the output to strip
3. Preserve all error messages, results, and actionable information
4. Be conservative --- when in doubt, keep the line

Output a single JSON object with these fields:
{
  "rule_id": "string",
  "trigger_regex": "string",
  "description": "string",
  "keep_patterns": ["regex1", "regex2"],
  "strip_patterns": ["regex1", "regex2"],
  "keep_first_n": 5,
  "keep_last_n": 10,
  "max_lines": null,
  "summary_header": "[description of what was compressed]",
  "priority": 42
}

Output ONLY the JSON object, no other text.)TPL";

const char* kSpawnReplacement = R"TPL(You are a terminal output compression rule expert.

The following rule compressed terminal output too aggressively, causing the
agent to miss critical information.

Old rule (JSON):
{old_rule_json}

Command that was executed: {command}

Original terminal output (first 2000 chars):
{raw_output_snippet}

Agent's feedback (what it complained about):
{agent_feedback}

Generate a NEW replacement rule that:
1. Keeps the same trigger_regex (targets same command type)
2. Is MORE CONSERVATIVE --- preserves more information
3. Stays SPECIFIC to this command type (don't make a generic "keep everything" rule)
4. Adds the missing information type to keep_patterns
5. Only strips content that is 100% certain to be noise
6. Uses a new rule_id (suggest: old_id + "_v2" or similar)

Output a single JSON object with these fields:
{
  "rule_id": "string",
  "trigger_regex": "string",
  "description": "string",
  "keep_patterns": ["regex1", "regex2"],
  "strip_patterns": ["regex1", "regex2"],
  "keep_first_n": 5,
  "keep_last_n": 10,
  "max_lines": null,
  "summary_header": "[description of what was compressed]",
  "priority": 42
}

Output ONLY the JSON object, no other text.)TPL";

struct TemplateSpec {
  const char* text;
  std::vector<std::string> placeholders;
};

const TemplateSpec& spec_for(TemplateId id) {
  static const TemplateSpec with_cache{
      kProposalWithCache, {"cached_rules_json", "instruction", "task_category", "terminal_state"}};
  static const TemplateSpec no_cache{
      kProposalNoCache, {"instruction", "task_category", "terminal_state"}};
  static const TemplateSpec spawn_new{
      kSpawnNew,
      {"output_length", "command", "raw_output_head", "raw_output_tail", "task_instruction"}};
  static const TemplateSpec spawn_replacement{
      kSpawnReplacement, {"old_rule_json", "command", "raw_output_snippet", "agent_feedback"}};
  switch (id) {
    case TemplateId::ProposalWithCache: return with_cache;
    case TemplateId::ProposalNoCache: return no_cache;
    case TemplateId::SpawnNew: return spawn_new;
    case TemplateId::SpawnReplacement: return spawn_replacement;
  }
  return with_cache;
}

std::string truncate_head(const std::string& s, size_t n) {
  return s.size() <= n ? s : s.substr(0, n);
}

std::string truncate_tail(const std::string& s, size_t n) {
  return s.size() <= n ? s : s.substr(s.size() - n);
}

void replace_all(std::string& haystack, const std::string& token, const std::string& value) {
  size_t pos = 0;
  while ((pos = haystack.find(token, pos)) != std::string::npos) {
    haystack.replace(pos, token.size(), value);
    pos += value.size();
  }
}

}  // namespace

const char* template_id_name(TemplateId id) {
  switch (id) {
    case TemplateId::ProposalWithCache: return "proposal_with_cache";
    case TemplateId::ProposalNoCache: return "proposal_no_cache";
    case TemplateId::SpawnNew: return "spawn_new";
    case TemplateId::SpawnReplacement: return "spawn_replacement";
  }
  return "unknown";
}

std::optional<TemplateId> template_id_from_name(const std::string& name) {
  for (TemplateId id : {TemplateId::ProposalWithCache, TemplateId::ProposalNoCache,
                        TemplateId::SpawnNew, TemplateId::SpawnReplacement})
    if (name == template_id_name(id)) return id;
  return std::nullopt;
}

const std::string& template_text(TemplateId id) {
  static const std::string with_cache = kProposalWithCache;
  static const std::string no_cache = kProposalNoCache;
  static const std::string spawn_new = kSpawnNew;
  static const std::string spawn_replacement = kSpawnReplacement;
  switch (id) {
    case TemplateId::ProposalWithCache: return with_cache;
    case TemplateId::ProposalNoCache: return no_cache;
    case TemplateId::SpawnNew: return spawn_new;
    case TemplateId::SpawnReplacement: return spawn_replacement;
  }
  return with_cache;
}

std::string render_prompt(const PromptRequest& request) {
  const auto& spec = spec_for(request.template_id);
  std::string prompt = spec.text;
  for (const auto& name : spec.placeholders) {
    auto it = request.bindings.find(name);
    if (it == request.bindings.end())
      throw GatewayError(GatewayError::Kind::Config,
                         std::string("missing prompt binding '") + name + "' for template " +
                             template_id_name(request.template_id));
    std::string value = it->second;
    if (name == "terminal_state") value = truncate_head(value, 500);
    if (name == "raw_output_head" || name == "raw_output_snippet")
      value = truncate_head(value, 2000);
    if (name == "raw_output_tail") value = truncate_tail(value, 500);
    replace_all(prompt, "{" + name + "}", value);
  }
  if (request.template_id == TemplateId::ProposalWithCache) {
    const std::string& cached = request.bindings.at("cached_rules_json");
    if (cached.empty() || cached == "[]")
      throw GatewayError(GatewayError::Kind::Config,
                         "proposal_with_cache requires a non-empty rule cache; "
                         "use proposal_no_cache for cold start");
  }
  if (!request.repair_note.empty())
    prompt += "\n\nYour previous response could not be parsed: " + request.repair_note +
              "\nOutput ONLY the JSON object, no other text.";
  return prompt;
}

std::string bindings_hash(TemplateId id, const std::map<std::string, std::string>& bindings) {
  uint64_t h = 1469598103934665603ull;
  auto mix = [&](const std::string& s) {
    for (unsigned char c : s) {
      h ^= c;
      h *= 1099511628211ull;
    }
    h ^= 0x1f;
    h *= 1099511628211ull;
  };
  mix(template_id_name(id));
  for (const auto& [key, value] : bindings) {  // std::map: already key-sorted
    mix(key);
    mix(value);
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

namespace {

// Extracts the first balanced, parseable JSON object from free-form text
// (tolerates code fences and surrounding prose).
std::optional<Json> extract_json_object(const std::string& text) {
  for (size_t start = text.find('{'); start != std::string::npos;
       start = text.find('{', start + 1)) {
    int depth = 0;
    bool in_string = false;
    bool escaped = false;
    for (size_t i = start; i < text.size(); ++i) {
      char c = text[i];
      if (in_string) {
        if (escaped)
          escaped = false;
        else if (c == '\\')
          escaped = true;
        else if (c == '"')
          in_string = false;
        continue;
      }
      if (c == '"') in_string = true;
      else if (c == '{') ++depth;
      else if (c == '}') {
        if (--depth == 0) {
          try {
            return Json::parse(text.substr(start, i - start + 1));
          } catch (const Json::parse_error&) {
            break;  // not valid JSON; try the next candidate
          }
        }
      }
    }
  }
  return std::nullopt;
}

void collect_rules(const Json& arr, const char* label, std::vector<CompressionRule>& out,
                   std::vector<std::string>& diagnostics) {
  if (!arr.is_array()) return;
  for (const auto& doc : arr) {
    try {
      out.push_back(parse_rule(doc));
    } catch (const RuleParseError& e) {
      diagnostics.push_back(std::string(label) + ": dropped invalid rule: " + e.what());
    }
  }
}

}  // namespace

RuleProposal parse_proposal(const std::string& text) {
  auto doc = extract_json_object(text);
  if (!doc)
    throw GatewayError(GatewayError::Kind::Parse,
                       "no JSON object found in response: " + truncate_head(text, 200));
  RuleProposal proposal;
  if (doc->contains("selected_rule_ids") && (*doc)["selected_rule_ids"].is_array())
    for (const auto& id : (*doc)["selected_rule_ids"])
      if (id.is_string()) proposal.selected_rule_ids.push_back(id.get<std::string>());
  if (doc->contains("modified_rules"))
    collect_rules((*doc)["modified_rules"], "modified_rules", proposal.modified_rules,
                  proposal.diagnostics);
  if (doc->contains("new_rules"))
    collect_rules((*doc)["new_rules"], "new_rules", proposal.new_rules, proposal.diagnostics);
  // Cold-start responses carry a single "rules" array.
  if (doc->contains("rules"))
    collect_rules((*doc)["rules"], "rules", proposal.new_rules, proposal.diagnostics);
  return proposal;
}

CompressionRule parse_single_rule(const std::string& text) {
  auto doc = extract_json_object(text);
  if (!doc)
    throw GatewayError(GatewayError::Kind::Parse,
                       "no JSON object found in response: " + truncate_head(text, 200));
  try {
    return parse_rule(*doc);
  } catch (const RuleParseError& e) {
    throw GatewayError(GatewayError::Kind::Parse, std::string("invalid rule: ") + e.what());
  }
}

MockGateway::MockGateway(const std::filesystem::path& transcript_path) {
  std::ifstream in(transcript_path, std::ios::binary);
  if (!in)
    throw GatewayError(GatewayError::Kind::Config,
                       "cannot read mock transcript: " + transcript_path.string());
  Json doc = Json::parse(in);
  for (const auto& entry : doc) {
    auto id = template_id_from_name(entry.at("template_id").get<std::string>());
    if (!id)
      throw GatewayError(GatewayError::Kind::Config,
                         "unknown template_id in transcript: " + entry.at("template_id").dump());
    entries_.push_back({*id, entry.at("bindings_hash").get<std::string>(),
                        entry.at("response_text").get<std::string>()});
  }
}

void MockGateway::add_entry(TemplateId id, const std::string& hash, std::string response) {
  entries_.push_back({id, hash, std::move(response)});
}

std::string MockGateway::complete(const PromptRequest& request) {
  const std::string hash = bindings_hash(request.template_id, request.bindings);
  for (const auto& entry : entries_)
    if (entry.template_id == request.template_id && entry.hash == hash) return entry.response;
  for (const auto& entry : entries_)
    if (entry.template_id == request.template_id && entry.hash == "*") return entry.response;
  throw GatewayError(GatewayError::Kind::Transport,
                     std::string("no transcript entry for ") +
                         template_id_name(request.template_id) + " / " + hash);
}

HttpGateway HttpGateway::from_env() {
  const char* endpoint = std::getenv("TERMCOMP_LLM_ENDPOINT");
  const char* key = std::getenv("TERMCOMP_LLM_API_KEY");
  const char* model = std::getenv("TERMCOMP_LLM_MODEL");
  const char* timeout = std::getenv("TERMCOMP_LLM_TIMEOUT_S");
  if (!endpoint || !model)
    throw GatewayError(GatewayError::Kind::Config,
                       "TERMCOMP_LLM_ENDPOINT and TERMCOMP_LLM_MODEL must be set");
  return HttpGateway(endpoint, key ? key : "", model, timeout ? std::atoi(timeout) : 60);
}

HttpGateway::HttpGateway(std::string endpoint, std::string api_key, std::string model,
                         int timeout_seconds)
    : endpoint_(std::move(endpoint)),
      api_key_(std::move(api_key)),
      model_(std::move(model)),
      timeout_seconds_(timeout_seconds) {}

std::string HttpGateway::complete(const PromptRequest& request) {
  const std::string prompt = render_prompt(request);
  try {
    return complete_once(prompt, request);
  } catch (const GatewayError& e) {
    if (e.kind == GatewayError::Kind::Timeout || e.kind == GatewayError::Kind::Transport)
      return complete_once(prompt, request);  // single retry on transient failure
    throw;
  }
}

std::string HttpGateway::complete_once(const std::string& prompt, const PromptRequest& request) {
  std::string base = endpoint_;
  std::string path = "/v1/chat/completions";
  size_t scheme = base.find("://");
  if (scheme != std::string::npos) {
    size_t slash = base.find('/', scheme + 3);
    if (slash != std::string::npos) {
      path = base.substr(slash);
      base = base.substr(0, slash);
    }
  }
  httplib::Client client(base);
  client.set_connection_timeout(timeout_seconds_, 0);
  client.set_read_timeout(timeout_seconds_, 0);

  Json body = {
      {"model", model_},
      {"messages", Json::array({Json{{"role", "user"}, {"content", prompt}}})},
      {"temperature", request.temperature},
      {"max_tokens", request.max_output_tokens},
  };
  httplib::Headers headers;
  if (!api_key_.empty()) headers.emplace("Authorization", "Bearer " + api_key_);

  auto res = client.Post(path, headers, body.dump(), "application/json");
  if (!res) {
    auto err = res.error();
    if (err == httplib::Error::ConnectionTimeout || err == httplib::Error::Read ||
        err == httplib::Error::Write)
      throw GatewayError(GatewayError::Kind::Timeout, "provider timeout");
    throw GatewayError(GatewayError::Kind::Transport,
                       "transport failure: " + httplib::to_string(err));
  }
  if (res->status == 401 || res->status == 403)
    throw GatewayError(GatewayError::Kind::Auth, "provider rejected credentials");
  if (res->status == 429)
    throw GatewayError(GatewayError::Kind::RateLimit, "provider rate limit");
  if (res->status >= 500)
    throw GatewayError(GatewayError::Kind::Transport,
                       "provider error " + std::to_string(res->status));
  if (res->status != 200)
    throw GatewayError(GatewayError::Kind::Transport,
                       "unexpected status " + std::to_string(res->status) + ": " + res->body);
  try {
    Json doc = Json::parse(res->body);
    return doc.at("choices").at(0).at("message").at("content").get<std::string>();
  } catch (const std::exception& e) {
    throw GatewayError(GatewayError::Kind::Transport,
                       std::string("malformed provider response: ") + e.what());
  }
}

RecordingGateway::RecordingGateway(LlmGateway& inner, std::filesystem::path transcript_path)
    : inner_(inner), path_(std::move(transcript_path)) {}

std::string RecordingGateway::complete(const PromptRequest& request) {
  std::string response = inner_.complete(request);
  std::lock_guard lock(mutex_);
  Json doc = Json::array();
  {
    std::ifstream in(path_, std::ios::binary);
    if (in) {
      try {
        doc = Json::parse(in);
      } catch (const Json::parse_error&) {
        doc = Json::array();
      }
    }
  }
  doc.push_back(Json{{"template_id", template_id_name(request.template_id)},
                     {"bindings_hash", bindings_hash(request.template_id, request.bindings)},
                     {"response_text", response}});
  std::ofstream out(path_, std::ios::binary | std::ios::trunc);
  out << doc.dump(2) << "\n";
  return response;
}

RuleProposal request_proposal(LlmGateway& gateway, PromptRequest request) {
  try {
    return parse_proposal(gateway.complete(request));
  } catch (const GatewayError& e) {
    if (e.kind != GatewayError::Kind::Parse) throw;
    request.repair_note = e.what();
    return parse_proposal(gateway.complete(request));
  }
}

CompressionRule request_single_rule(LlmGateway& gateway, PromptRequest request) {
  try {
    return parse_single_rule(gateway.complete(request));
  } catch (const GatewayError& e) {
    if (e.kind != GatewayError::Kind::Parse) throw;
    request.repair_note = e.what();
    return parse_single_rule(gateway.complete(request));
  }
}

}  // namespace termcomp
