#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "termcomp/complaint.hpp"

using namespace termcomp;

namespace {

ObservationRecord make_record(int step, const std::string& command, long lines_removed,
                              Coverage coverage = Coverage::Covered) {
  ObservationRecord rec;
  rec.step_index = step;
  rec.command = command;
  rec.result.lines_removed = lines_removed;
  rec.coverage = coverage;
  if (lines_removed > 0) rec.result.applied_rule_id = "some_rule";
  return rec;
}

FollowupEvent next_command(const std::string& text) {
  return FollowupEvent{FollowupKind::NextCommand, text, {}};
}

FollowupEvent agent_message(const std::string& text, std::optional<int> step = {}) {
  return FollowupEvent{FollowupKind::AgentMessage, text, step};
}

}  // namespace

TEST_CASE("repeating a compressed command raises a complaint") {
  std::vector<ObservationRecord> history = {make_record(5, "make", 25)};
  auto hit = detect_complaint(history, next_command("make"));
  REQUIRE(hit);
  CHECK(*hit == 5);
}

TEST_CASE("repetition matches after whitespace normalization") {
  std::vector<ObservationRecord> history = {make_record(2, "make   -j2", 10)};
  CHECK(detect_complaint(history, next_command("make -j2")) == 2);
  CHECK(detect_complaint(history, next_command("  make\t-j2  ")) == 2);
}

TEST_CASE("no complaint without a qualifying antecedent") {
  std::vector<ObservationRecord> history = {make_record(1, "make", 25)};
  CHECK_FALSE(detect_complaint(history, next_command("ls")));
  CHECK_FALSE(detect_complaint({}, next_command("make")));

  // The same command with nothing removed is an ordinary re-run.
  std::vector<ObservationRecord> untouched = {make_record(1, "make", 0)};
  CHECK_FALSE(detect_complaint(untouched, next_command("make")));
}

TEST_CASE("bypassed steps can never be complained about") {
  // Critical outputs were shown in full, so lines_removed stays 0.
  std::vector<ObservationRecord> history = {
      make_record(3, "git push", 0, Coverage::Bypassed)};
  CHECK_FALSE(detect_complaint(history, next_command("git push")));
  CHECK_FALSE(detect_complaint(history, agent_message("the log seems truncated")));
}

TEST_CASE("widening transformations count as complaints") {
  SUBCASE("dropping a trailing head pipe") {
    std::vector<ObservationRecord> history = {make_record(4, "dmesg | head -n 20", 12)};
    CHECK(detect_complaint(history, next_command("dmesg")) == 4);
  }
  SUBCASE("dropping a trailing tail pipe") {
    std::vector<ObservationRecord> history = {make_record(4, "journalctl | tail -n 50", 8)};
    CHECK(detect_complaint(history, next_command("journalctl")) == 4);
  }
  SUBCASE("dropping a quiet flag") {
    std::vector<ObservationRecord> history = {make_record(4, "pip install -q flask", 6)};
    CHECK(detect_complaint(history, next_command("pip install flask")) == 4);
  }
  SUBCASE("adding a verbose flag") {
    std::vector<ObservationRecord> history = {make_record(4, "pytest tests", 6)};
    CHECK(detect_complaint(history, next_command("pytest -v tests")) == 4);
    CHECK(detect_complaint(history, next_command("pytest tests --verbose")) == 4);
  }
  SUBCASE("an unrelated narrower command is not widening") {
    std::vector<ObservationRecord> history = {make_record(4, "dmesg | head -n 20", 12)};
    CHECK_FALSE(detect_complaint(history, next_command("dmesg | grep usb")));
  }
}

TEST_CASE("agent messages trigger on the complaint phrase list") {
  std::vector<ObservationRecord> history = {make_record(7, "pytest", 30)};
  CHECK(detect_complaint(history, agent_message("the output seems truncated, show full log")) ==
        7);
  CHECK(detect_complaint(history, agent_message("I need the FULL OUTPUT here")) == 7);
  CHECK(detect_complaint(history, agent_message("some details are missing")) == 7);
  CHECK(detect_complaint(history, agent_message("please show the complete trace")) == 7);
  CHECK(detect_complaint(history, agent_message("I'll check the entire log")) == 7);
  CHECK(detect_complaint(history, agent_message("re-run to see everything")) == 7);
  CHECK_FALSE(detect_complaint(history, agent_message("tests look green, moving on")));
}

TEST_CASE("agent message refers_to_step pins the complaint target") {
  std::vector<ObservationRecord> history = {make_record(5, "make", 10),
                                            make_record(6, "pytest", 8)};
  CHECK(detect_complaint(history, agent_message("output truncated", 5)) == 5);
  CHECK(detect_complaint(history, agent_message("output truncated", 6)) == 6);
  // Referencing an untouched step yields nothing.
  history.push_back(make_record(7, "ls", 0));
  CHECK_FALSE(detect_complaint(history, agent_message("output truncated", 7)));
  // Without a reference, the most recent qualifying step wins.
  CHECK(detect_complaint(history, agent_message("output truncated")) == 6);
}

TEST_CASE("complaints respect the lookback window") {
  std::vector<ObservationRecord> history = {
      make_record(1, "make", 25), make_record(2, "ls", 0), make_record(3, "pwd", 0),
      make_record(4, "whoami", 0)};
  // Step 1 fell out of the default W=3 window.
  CHECK_FALSE(detect_complaint(history, next_command("make")));

  ComplaintConfig wide;
  wide.window = 4;
  CHECK(detect_complaint(history, next_command("make"), wide) == 1);
}

TEST_CASE("the most recent qualifying step is blamed") {
  std::vector<ObservationRecord> history = {make_record(5, "make", 10),
                                            make_record(6, "make", 12)};
  CHECK(detect_complaint(history, next_command("make")) == 6);
}

TEST_CASE("detection is deterministic over identical inputs") {
  std::vector<ObservationRecord> history = {make_record(3, "pip install -q x", 4)};
  auto event = next_command("pip install x");
  for (int i = 0; i < 10; ++i) CHECK(detect_complaint(history, event) == 3);
}

TEST_CASE("phrase list is configurable") {
  std::vector<ObservationRecord> history = {make_record(2, "make", 5)};
  ComplaintConfig config;
  config.phrases = {"where did the rest go"};
  CHECK(detect_complaint(history, agent_message("where did the rest go?"), config) == 2);
  CHECK_FALSE(detect_complaint(history, agent_message("output truncated"), config));
}
