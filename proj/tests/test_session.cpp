#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <sstream>

#include "termcomp/session.hpp"

using namespace termcomp;

namespace {

struct ScriptedGateway : LlmGateway {
  std::vector<std::string> responses;
  std::vector<PromptRequest> seen;
  size_t next = 0;

  std::string complete(const PromptRequest& request) override {
    seen.push_back(request);
    if (next >= responses.size())
      throw GatewayError(GatewayError::Kind::Transport, "script exhausted");
    return responses[next++];
  }
};

std::string apt_output() {
  std::ostringstream out;
  out << "Reading package lists... Done\n";
  out << "Building dependency tree... Done\n";
  for (int i = 0; i < 10; ++i)
    out << "Unpacking pkg" << i << " (1." << i << ") over (1.0) ...\n";
  out << "Processing triggers for man-db (2.10.2-1) ...\n";
  out << "done\n";
  return out.str();
}

std::string objdump_output() {
  std::ostringstream out;
  out << "app:     file format elf64-x86-64\n";
  out << "\n";
  out << "Disassembly of section .text:\n";
  out << "\n";
  out << "0000000000001129 <main>:\n";
  for (int i = 0; i < 90; ++i) {
    std::ostringstream addr;
    addr << std::hex << (0x1129 + i * 4);
    out << "    " << addr.str() << ":\t48 89 e5             \tmov    %rsp,%rbp\n";
  }
  return out.str();
}

const char* kObjdumpRuleJson = R"({
  "rule_id": "objdump_disassembly",
  "trigger_regex": "\\bobjdump\\b",
  "description": "Keeps section and symbol lines from disassembly listings, drops instruction rows.",
  "keep_patterns": ["Disassembly of section", "^[0-9a-f]+ <"],
  "strip_patterns": ["^\\s*[0-9a-f]+:\\s"],
  "keep_first_n": 4,
  "keep_last_n": 4,
  "summary_header": "[disassembly compressed]",
  "priority": 45
})";

const char* kAptReplacementJson = R"({
  "rule_id": "seed_apt_install",
  "trigger_regex": "\\bapt(?:-get)?\\s+install\\b",
  "description": "Conservative apt replacement: only drops Unpacking rows.",
  "keep_patterns": ["\\berror:", "Reading package lists", "Building dependency tree"],
  "strip_patterns": ["^Unpacking \\S+"],
  "keep_first_n": 2,
  "keep_last_n": 2,
  "summary_header": "[apt unpack rows compressed]",
  "priority": 55
})";

const char* kMakeRuleJson = R"({
  "rule_id": "make_filter",
  "trigger_regex": "\\bmake\\b",
  "description": "Drops percent progress rows from make output.",
  "keep_patterns": ["\\berror:", "\\bwarning:"],
  "strip_patterns": ["^\\[ *\\d+%\\]"],
  "keep_first_n": 2,
  "keep_last_n": 2,
  "summary_header": "[make progress compressed]",
  "priority": 40
})";

std::string proposal_response() {
  Json doc;
  doc["selected_rule_ids"] = Json::array({"seed_compiler_output", "seed_git_noise"});
  doc["modified_rules"] = Json::array();
  doc["new_rules"] = Json::array({Json::parse(kMakeRuleJson)});
  return doc.dump();
}

const ActiveRule* find_rule(const TaskSession& session, const std::string& id) {
  for (const auto& ar : session.active_rules())
    if (ar.rule.rule_id == id) return &ar;
  return nullptr;
}

}  // namespace

TEST_CASE("init adopts the gateway's plan") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  MockGateway mock;
  mock.add_entry(TemplateId::ProposalWithCache, "*", proposal_response());

  TaskSession session = TaskSession::init("t1", "build the project", std::nullopt,
                                          "root@host:~# ", pool, {}, &mock);
  REQUIRE(session.active_rules().size() == 3);
  CHECK(session.active_rules()[0].rule.rule_id == "seed_compiler_output");
  CHECK(session.active_rules()[0].origin == RuleOrigin::Selected);
  CHECK(session.active_rules()[0].task_confidence == 0.8);
  CHECK(session.active_rules()[1].rule.rule_id == "seed_git_noise");
  CHECK(session.active_rules()[1].task_confidence == 0.8);
  CHECK(session.active_rules()[2].rule.rule_id == "make_filter");
  CHECK(session.active_rules()[2].origin == RuleOrigin::NewPlan);
  CHECK(session.active_rules()[2].task_confidence == 1.0);
  CHECK(session.diagnostics().empty());
}

TEST_CASE("init without a gateway degrades to the raw candidates") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  TaskSession session =
      TaskSession::init("t2", "do things", std::nullopt, "", pool, {}, nullptr);
  REQUIRE(session.active_rules().size() == 6);
  for (const auto& ar : session.active_rules()) {
    CHECK(ar.origin == RuleOrigin::Selected);
    CHECK(ar.task_confidence == 0.8);
  }
  CHECK(session.diagnostics().empty());
}

TEST_CASE("init degrades with a diagnostic when the gateway fails") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  ScriptedGateway broken;  // throws Transport on the first call
  TaskSession session =
      TaskSession::init("t3", "do things", std::nullopt, "", pool, {}, &broken);
  CHECK(session.active_rules().size() == 6);
  REQUIRE(session.diagnostics().size() == 1);
  CHECK(session.diagnostics()[0].find("init degraded") != std::string::npos);
}

TEST_CASE("an empty pool with a failing gateway still yields a working session") {
  GlobalRulePool pool;
  ScriptedGateway broken;
  TaskSession session =
      TaskSession::init("t4", "inspect logs", std::nullopt, "", pool, {}, &broken);
  CHECK(session.active_rules().empty());
  CHECK(broken.seen.size() == 1);
  CHECK(broken.seen[0].template_id == TemplateId::ProposalNoCache);

  std::ostringstream big;
  for (int i = 0; i < 50; ++i) big << "log line " << i << " payload payload payload\n";
  auto record = session.step(1, "journalctl", big.str(), nullptr);
  CHECK(record.coverage == Coverage::Uncovered);
  CHECK(record.result.lines_removed == 0);
  CHECK(record.result.chars_after == record.result.chars_before);
}

TEST_CASE("init drops ghost selections and invalid rules with diagnostics") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  Json doc;
  doc["selected_rule_ids"] = Json::array({"seed_git_noise", "ghost_rule"});
  Json broken = Json::parse(kMakeRuleJson);
  broken["trigger_regex"] = "([";
  doc["modified_rules"] = Json::array({broken});
  doc["new_rules"] = Json::array();
  MockGateway mock;
  mock.add_entry(TemplateId::ProposalWithCache, "*", doc.dump());

  TaskSession session =
      TaskSession::init("t5", "build", std::nullopt, "", pool, {}, &mock);
  REQUIRE(session.active_rules().size() == 1);
  CHECK(session.active_rules()[0].rule.rule_id == "seed_git_noise");
  REQUIRE(session.diagnostics().size() == 2);
  CHECK(session.diagnostics()[1].find("ghost_rule") != std::string::npos);
}

TEST_CASE("successful applications bump counters and task confidence") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  TaskSession session =
      TaskSession::init("t6", "install deps", std::nullopt, "", pool, {}, nullptr);

  auto first = session.step(1, "apt-get install -y ripgrep", apt_output(), nullptr);
  REQUIRE(first.result.applied_rule_id);
  CHECK(*first.result.applied_rule_id == "seed_apt_install");
  CHECK(first.result.lines_removed >= 1);
  const ActiveRule* apt = find_rule(session, "seed_apt_install");
  REQUIRE(apt);
  CHECK(apt->delta_applications == 1);
  CHECK(apt->task_confidence == doctest::Approx(0.85));

  session.step(2, "apt-get install -y fd-find", apt_output(), nullptr);
  CHECK(apt->delta_applications == 2);
  CHECK(apt->task_confidence == doctest::Approx(0.9));

  // History and counters agree.
  for (const auto& ar : session.active_rules()) {
    long applied = 0;
    for (const auto& rec : session.history())
      if (rec.result.applied_rule_id == ar.rule.rule_id && rec.result.lines_removed >= 1)
        ++applied;
    CHECK(ar.delta_applications == applied);
  }
}

TEST_CASE("a complaint freezes the rule and later steps skip it") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  TaskSession session =
      TaskSession::init("t7", "install deps", std::nullopt, "", pool, {}, nullptr);
  session.step(1, "apt-get install -y ripgrep", apt_output(), nullptr);

  FollowupEvent repeat{FollowupKind::NextCommand, "apt-get install -y ripgrep", {}};
  auto frozen = session.report_feedback(repeat, nullptr);
  REQUIRE(frozen.size() == 1);
  CHECK(frozen[0] == "seed_apt_install");
  const ActiveRule* apt = find_rule(session, "seed_apt_install");
  REQUIRE(apt);
  CHECK(apt->frozen);
  CHECK(apt->complained);
  CHECK(apt->task_confidence == 0.0);
  CHECK(apt->rule.times_complained == 1);

  auto rerun = session.step(2, "apt-get install -y ripgrep", apt_output(), nullptr);
  CHECK_FALSE(rerun.result.applied_rule_id);
  CHECK(rerun.result.lines_removed == 0);

  // A second identical complaint has no remaining target.
  CHECK(session.report_feedback(repeat, nullptr).empty());
}

TEST_CASE("complaints spawn a conservative replacement") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  TaskSession session =
      TaskSession::init("t8", "install deps", std::nullopt, "", pool, {}, nullptr);
  session.step(1, "apt-get install -y ripgrep", apt_output(), nullptr);

  ScriptedGateway gateway;
  gateway.responses = {kAptReplacementJson};
  FollowupEvent message{FollowupKind::AgentMessage,
                        "the output seems truncated, I need the full output", {}};
  auto frozen = session.report_feedback(message, &gateway);
  REQUIRE(frozen.size() == 1);

  REQUIRE(gateway.seen.size() == 1);
  CHECK(gateway.seen[0].template_id == TemplateId::SpawnReplacement);
  CHECK(gateway.seen[0].bindings.at("agent_feedback") == message.text);
  CHECK(gateway.seen[0].bindings.at("command") == "apt-get install -y ripgrep");

  // The response reused the old id, so the replacement gets the _v2 suffix.
  const ActiveRule* repl = find_rule(session, "seed_apt_install_v2");
  REQUIRE(repl);
  CHECK(repl->origin == RuleOrigin::Replacement);
  CHECK(repl->task_confidence == 1.0);
  CHECK(repl->delta_applications == 0);
  CHECK_FALSE(repl->frozen);

  auto rerun = session.step(2, "apt-get install -y ripgrep", apt_output(), nullptr);
  REQUIRE(rerun.result.applied_rule_id);
  CHECK(*rerun.result.applied_rule_id == "seed_apt_install_v2");
}

TEST_CASE("uncovered outputs spawn a mid-task rule applied retroactively") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  TaskSession session =
      TaskSession::init("t9", "analyze the binary", std::nullopt, "", pool, {}, nullptr);

  ScriptedGateway gateway;
  gateway.responses = {kObjdumpRuleJson};
  auto record = session.step(1, "objdump -d app", objdump_output(), &gateway);

  REQUIRE(gateway.seen.size() == 1);
  CHECK(gateway.seen[0].template_id == TemplateId::SpawnNew);
  CHECK(gateway.seen[0].bindings.at("command") == "objdump -d app");
  CHECK(gateway.seen[0].bindings.at("output_length") ==
        std::to_string(objdump_output().size()));

  CHECK(record.coverage == Coverage::Covered);
  REQUIRE(record.result.applied_rule_id);
  CHECK(*record.result.applied_rule_id == "objdump_disassembly");
  CHECK(record.result.lines_removed >= 1);
  CHECK(record.result.compressed_text.find("Disassembly of section .text:") !=
        std::string::npos);
  CHECK(record.result.compressed_text.find("0000000000001129 <main>:") != std::string::npos);

  const ActiveRule* spawned = find_rule(session, "objdump_disassembly");
  REQUIRE(spawned);
  CHECK(spawned->origin == RuleOrigin::NewMidtask);
  CHECK(spawned->delta_applications == 1);
}

TEST_CASE("the rule cap suppresses spawn requests") {
  GlobalRulePool pool;
  SessionConfig config;
  config.rule_cap = 0;
  TaskSession session =
      TaskSession::init("t10", "analyze", std::nullopt, "", pool, config, nullptr);

  ScriptedGateway gateway;
  gateway.responses = {kObjdumpRuleJson};
  auto record = session.step(1, "objdump -d app", objdump_output(), &gateway);
  CHECK(gateway.seen.empty());
  CHECK(record.coverage == Coverage::Uncovered);
  CHECK(session.active_rules().empty());
}

TEST_CASE("a failed spawn leaves the step uncovered with a diagnostic") {
  GlobalRulePool pool;
  TaskSession session =
      TaskSession::init("t11", "analyze", std::nullopt, "", pool, {}, nullptr);
  ScriptedGateway gateway;
  gateway.responses = {"not a rule at all", "still not a rule"};
  auto record = session.step(1, "objdump -d app", objdump_output(), &gateway);
  CHECK(record.coverage == Coverage::Uncovered);
  CHECK(session.active_rules().empty());
  REQUIRE(session.diagnostics().size() == 1);
  CHECK(session.diagnostics()[0].find("spawn failed at step 1") != std::string::npos);
}

TEST_CASE("finalize reports one outcome per active rule") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  TaskSession session =
      TaskSession::init("t12", "install deps", std::nullopt, "", pool, {}, nullptr);
  session.step(1, "apt-get install -y ripgrep", apt_output(), nullptr);
  session.step(2, "apt-get install -y fd-find", apt_output(), nullptr);

  ScriptedGateway spawner;
  spawner.responses = {kObjdumpRuleJson};
  session.step(3, "objdump -d app", objdump_output(), &spawner);

  FollowupEvent repeat{FollowupKind::NextCommand, "apt-get install -y fd-find", {}};
  session.report_feedback(repeat, nullptr);

  auto outcomes = session.finalize();
  REQUIRE(outcomes.size() == 7);  // six seeds plus the spawned rule

  const RuleOutcome* apt = nullptr;
  const RuleOutcome* spawned = nullptr;
  const RuleOutcome* idle = nullptr;
  for (const auto& o : outcomes) {
    if (o.rule_id == "seed_apt_install") apt = &o;
    if (o.rule_id == "objdump_disassembly") spawned = &o;
    if (o.rule_id == "seed_git_noise") idle = &o;
  }
  REQUIRE(apt);
  CHECK(apt->delta_applications == 2);
  CHECK(apt->task_confidence == 0.0);
  CHECK(apt->complained);
  CHECK_FALSE(apt->rule_body.has_value());  // selected rules live in the pool already

  REQUIRE(spawned);
  CHECK(spawned->delta_applications == 1);
  CHECK(spawned->task_confidence == doctest::Approx(1.0));
  CHECK_FALSE(spawned->complained);
  REQUIRE(spawned->rule_body.has_value());
  CHECK(spawned->rule_body->rule_id == "objdump_disassembly");

  REQUIRE(idle);
  CHECK(idle->delta_applications == 0);
  CHECK(idle->task_confidence == 0.8);
  CHECK_FALSE(idle->complained);
}

TEST_CASE("transcript_json mirrors the step history") {
  GlobalRulePool pool = GlobalRulePool::seeded();
  TaskSession session =
      TaskSession::init("t13", "install deps", std::nullopt, "", pool, {}, nullptr);
  session.step(1, "apt-get install -y ripgrep", apt_output(), nullptr);
  session.step(2, "ls", "README.md\n", nullptr);

  Json doc = session.transcript_json();
  CHECK(doc["task_id"] == "t13");
  REQUIRE(doc["steps"].size() == 2);
  CHECK(doc["steps"][0]["applied_rule_id"] == "seed_apt_install");
  CHECK(doc["steps"][0]["lines_removed"].get<long>() >= 1);
  CHECK(doc["steps"][1]["applied_rule_id"].is_null());
  CHECK(doc["steps"][1]["coverage"] == "covered");
}
