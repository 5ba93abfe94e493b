#pragma once

#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <string>
#include <vector>

#include "termcomp/rule.hpp"

namespace termcomp {

enum class TemplateId {
  ProposalWithCache,
  ProposalNoCache,
  SpawnNew,
  SpawnReplacement,
};

const char* template_id_name(TemplateId id);
std::optional<TemplateId> template_id_from_name(const std::string& name);

struct PromptRequest {
  TemplateId template_id = TemplateId::ProposalWithCache;
  std::map<std::string, std::string> bindings;
  double temperature = 0.2;
  int max_output_tokens = 2048;
  // Set on the single repair re-ask after a parse failure.
  std::string repair_note;
};

struct RuleProposal {
  std::vector<std::string> selected_rule_ids;
  std::vector<CompressionRule> modified_rules;
  std::vector<CompressionRule> new_rules;
  std::vector<std::string> diagnostics;
};

struct GatewayError : std::runtime_error {
  enum class Kind { Timeout, Auth, RateLimit, Transport, Parse, Config };
  Kind kind;
  GatewayError(Kind kind_, const std::string& msg) : std::runtime_error(msg), kind(kind_) {}
};

// Renders the bundled template for the request, byte-stable. terminal_state
// is truncated to 500 chars, raw_output_head to 2000, raw_output_tail to its
// last 500. Throws GatewayError{Config} on a missing binding, or when the
// with-cache template is given an empty rule cache.
std::string render_prompt(const PromptRequest& request);

const std::string& template_text(TemplateId id);

// FNV-1a over template id plus sorted bindings; keys mock transcripts.
std::string bindings_hash(TemplateId id, const std::map<std::string, std::string>& bindings);

RuleProposal parse_proposal(const std::string& text);
CompressionRule parse_single_rule(const std::string& text);  // throws GatewayError{Parse}

class LlmGateway {
 public:
  virtual ~LlmGateway() = default;
  virtual std::string complete(const PromptRequest& request) = 0;
};

// Deterministic scripted gateway. Transcript file: JSON array of
// {template_id, bindings_hash, response_text}; bindings_hash "*" matches any
// request with that template_id.
class MockGateway : public LlmGateway {
 public:
  MockGateway() = default;
  explicit MockGateway(const std::filesystem::path& transcript_path);
  void add_entry(TemplateId id, const std::string& hash, std::string response);
  std::string complete(const PromptRequest& request) override;

 private:
  struct Entry {
    TemplateId template_id;
    std::string hash;
    std::string response;
  };
  std::vector<Entry> entries_;
};

// Chat-completion provider over HTTP, configured from the environment:
// TERMCOMP_LLM_ENDPOINT, TERMCOMP_LLM_API_KEY, TERMCOMP_LLM_MODEL,
// TERMCOMP_LLM_TIMEOUT_S. One retry on transient failures.
class HttpGateway : public LlmGateway {
 public:
  static HttpGateway from_env();
  HttpGateway(std::string endpoint, std::string api_key, std::string model,
              int timeout_seconds = 60);
  std::string complete(const PromptRequest& request) override;

 private:
  std::string complete_once(const std::string& prompt, const PromptRequest& request);
  std::string endpoint_;
  std::string api_key_;
  std::string model_;
  int timeout_seconds_;
};

// Wraps another gateway and appends every exchange to a transcript file
// usable by MockGateway (record/replay).
class RecordingGateway : public LlmGateway {
 public:
  RecordingGateway(LlmGateway& inner, std::filesystem::path transcript_path);
  std::string complete(const PromptRequest& request) override;

 private:
  LlmGateway& inner_;
  std::filesystem::path path_;
  std::mutex mutex_;
};

// complete + parse with one repair re-ask on parse failure. Throws
// GatewayError when both attempts fail.
RuleProposal request_proposal(LlmGateway& gateway, PromptRequest request);
CompressionRule request_single_rule(LlmGateway& gateway, PromptRequest request);

}  // namespace termcomp
