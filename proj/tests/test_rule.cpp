#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <fstream>
#include <random>
#include <sstream>

#include "termcomp/rule.hpp"

using namespace termcomp;

namespace {

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(in.good());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

}  // namespace

TEST_CASE("six bundled seed rules match the shipped seed file") {
  const auto& rules = seed_rules();
  REQUIRE(rules.size() == 6);

  Json file_doc = Json::parse(read_file(std::string(TERMCOMP_DATA_DIR) + "/seed_rules.json"));
  REQUIRE(file_doc.is_array());
  REQUIRE(file_doc.size() == 6);
  for (size_t i = 0; i < 6; ++i) {
    CompressionRule from_file = parse_rule(file_doc[i]);
    CHECK(from_file == rules[i]);
    // Canonical serialization byte-matches the shipped layout.
    CHECK(serialize_rule(from_file) == file_doc[i].dump(2));
  }

  // Embedded copy parses to the same values as the file.
  Json embedded = Json::parse(seed_rules_text());
  CHECK(embedded == file_doc);
}

TEST_CASE("seed rules are in priority order and valid") {
  const auto& rules = seed_rules();
  int last = 0;
  for (const auto& r : rules) {
    CHECK(validate_rule(r).valid());
    CHECK(r.priority > last);
    last = r.priority;
    CHECK(is_seed_rule_id(r.rule_id));
  }
  CHECK(rules.front().priority == 30);
  CHECK(rules.back().priority == 65);
  CHECK_FALSE(is_seed_rule_id("objdump_disassembly"));
}

TEST_CASE("seed_pip_install carries the documented fields") {
  const CompressionRule* pip = nullptr;
  for (const auto& r : seed_rules())
    if (r.rule_id == "seed_pip_install") pip = &r;
  REQUIRE(pip);
  CHECK(pip->trigger_regex == "\\bpip3?\\s+install\\b");
  CHECK(pip->keep_first_n == 3);
  CHECK(pip->keep_last_n == 5);
  CHECK(pip->priority == 50);
  CHECK(pip->confidence == 0.8);
  CHECK(pip->times_applied == 10);
  CHECK_FALSE(pip->max_lines.has_value());
  CHECK_FALSE(pip->category.has_value());
}

TEST_CASE("parse_rule fills documented defaults") {
  CompressionRule r = parse_rule(std::string(
      R"({"rule_id":"x","trigger_regex":"a","description":"d","keep_patterns":[],)"
      R"("strip_patterns":[],"keep_first_n":0,"keep_last_n":0,"summary_header":"[x]",)"
      R"("priority":42})"));
  CHECK(r.confidence == 1.0);
  CHECK(r.times_applied == 0);
  CHECK(r.times_complained == 0);
  CHECK_FALSE(r.max_lines.has_value());
  CHECK_FALSE(r.category.has_value());

  CompressionRule bare = parse_rule(std::string(
      R"({"rule_id":"y","trigger_regex":"b","description":"d"})"));
  CHECK(bare.keep_first_n == 5);
  CHECK(bare.keep_last_n == 10);
  CHECK(bare.priority == 42);
  CHECK(bare.summary_header == "[output compressed]");
}

TEST_CASE("parse_rule rejects malformed documents") {
  CHECK_THROWS_AS(parse_rule(std::string("not json at all")), RuleParseError);

  try {
    parse_rule(std::string(R"({"trigger_regex":"a","description":"d"})"));
    FAIL("expected RuleParseError");
  } catch (const RuleParseError& e) {
    CHECK(e.field == "rule_id");
  }

  try {
    parse_rule(std::string(R"({"rule_id":"x","trigger_regex":"([","description":"d"})"));
    FAIL("expected RuleParseError");
  } catch (const RuleParseError& e) {
    CHECK(e.field == "trigger_regex");
  }

  try {
    parse_rule(std::string(
        R"({"rule_id":"x","trigger_regex":"a","description":"d","keep_patterns":[3]})"));
    FAIL("expected RuleParseError");
  } catch (const RuleParseError& e) {
    CHECK(e.field == "keep_patterns");
  }
}

TEST_CASE("validate_rule reports dialect and range violations without throwing") {
  CompressionRule r;
  r.rule_id = "probe";
  r.trigger_regex = "a";
  r.description = "d";

  SUBCASE("out-of-range confidence") {
    r.confidence = 1.5;
    auto report = validate_rule(r);
    REQUIRE_FALSE(report.valid());
    CHECK(report.entries[0].field == "confidence");
    CHECK(report.entries[0].kind == ProblemKind::OutOfRange);
  }
  SUBCASE("lookbehind rejected as unsupported") {
    r.strip_patterns = {"(?<=x)y"};
    auto report = validate_rule(r);
    REQUIRE_FALSE(report.valid());
    CHECK(report.entries[0].field == "strip_patterns[0]");
    CHECK(report.entries[0].kind == ProblemKind::UnsupportedConstruct);
  }
  SUBCASE("backreference rejected as unsupported") {
    r.keep_patterns = {"(a)\\1"};
    auto report = validate_rule(r);
    REQUIRE_FALSE(report.valid());
    CHECK(report.entries[0].kind == ProblemKind::UnsupportedConstruct);
  }
  SUBCASE("unbalanced class is a bad regex") {
    r.trigger_regex = "([";
    auto report = validate_rule(r);
    REQUIRE_FALSE(report.valid());
    CHECK(report.entries[0].kind == ProblemKind::BadRegex);
  }
  SUBCASE("negative counters") {
    r.times_applied = -1;
    CHECK_FALSE(validate_rule(r).valid());
  }
}

TEST_CASE("check_pattern accepts the supported dialect") {
  CHECK_FALSE(check_pattern("^\\s*Unpacking \\S+").has_value());
  CHECK_FALSE(check_pattern("[.+]{20,}").has_value());
  CHECK_FALSE(check_pattern("(foo|bar)+\\d*\\bbaz\\b$").has_value());
  CHECK(check_pattern("(?<name>x)").has_value());
  CHECK(check_pattern("\\2").has_value());
}

TEST_CASE("serialize_rule round-trips every seed rule") {
  for (const auto& r : seed_rules()) {
    CompressionRule again = parse_rule(serialize_rule(r));
    CHECK(again == r);
  }
}

TEST_CASE("seed_openssl serialization contains its strip pattern") {
  const CompressionRule* ssl = nullptr;
  for (const auto& r : seed_rules())
    if (r.rule_id == "seed_openssl") ssl = &r;
  REQUIRE(ssl);
  std::string doc = serialize_rule(*ssl);
  CHECK(doc.find("\"strip_patterns\"") != std::string::npos);
  CHECK(doc.find("[.+]{20,}") != std::string::npos);
}

TEST_CASE("round-trip preserves category, max_lines, and unknown fields") {
  Json doc = Json::parse(
      R"({"rule_id":"z","trigger_regex":"a","description":"d","keep_patterns":["k"],)"
      R"("strip_patterns":["s"],"keep_first_n":1,"keep_last_n":2,"max_lines":7,)"
      R"("summary_header":"[z]","priority":9,"confidence":0.5,"times_applied":3,)"
      R"("times_complained":1,"category":"build","zzz":7,"nested":{"a":[1,2]}})");
  CompressionRule r = parse_rule(doc);
  REQUIRE(r.max_lines.has_value());
  CHECK(*r.max_lines == 7);
  REQUIRE(r.category.has_value());
  CHECK(*r.category == "build");
  CHECK(r.extra["zzz"] == 7);
  CHECK(r.extra["nested"]["a"][1] == 2);

  CompressionRule again = parse_rule(serialize_rule(r));
  CHECK(again == r);
}

TEST_CASE("serializations of rules differing only in rule_id differ only there") {
  CompressionRule a = seed_rules()[0];
  CompressionRule b = a;
  b.rule_id = "other_id";
  std::istringstream sa(serialize_rule(a));
  std::istringstream sb(serialize_rule(b));
  std::string la, lb;
  int diff = 0;
  while (std::getline(sa, la) && std::getline(sb, lb)) {
    if (la != lb) {
      ++diff;
      CHECK(la.find("rule_id") != std::string::npos);
    }
  }
  CHECK(diff == 1);
}

TEST_CASE("randomized round-trip property") {
  std::mt19937 rng(20240314);
  const std::vector<std::string> patterns = {
      "^foo", "bar$", "\\d+", "[a-z]{2,5}", "(alpha|beta)", "\\berror\\b", "x.*y"};
  std::uniform_int_distribution<int> small(0, 6);
  for (int i = 0; i < 200; ++i) {
    CompressionRule r;
    r.rule_id = "rule_" + std::to_string(i);
    r.trigger_regex = patterns[static_cast<size_t>(small(rng))];
    r.description = "desc " + std::to_string(rng() % 1000);
    for (int k = 0; k < small(rng) % 3; ++k)
      r.keep_patterns.push_back(patterns[static_cast<size_t>(small(rng))]);
    for (int k = 0; k < small(rng) % 3; ++k)
      r.strip_patterns.push_back(patterns[static_cast<size_t>(small(rng))]);
    r.keep_first_n = small(rng);
    r.keep_last_n = small(rng);
    if (rng() % 2) r.max_lines = small(rng) + 1;
    r.summary_header = "[h" + std::to_string(i) + "]";
    r.priority = static_cast<int>(rng() % 100);
    r.confidence = static_cast<double>(rng() % 101) / 100.0;
    r.times_applied = static_cast<long>(rng() % 500);
    r.times_complained = static_cast<long>(rng() % 5);
    if (rng() % 2) r.category = "cat" + std::to_string(rng() % 4);
    CompressionRule again = parse_rule(serialize_rule(r));
    REQUIRE(again == r);
  }
}
