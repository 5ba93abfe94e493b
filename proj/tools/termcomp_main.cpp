#include <sys/wait.h>

#include <cstdio>
#include <fstream>
#include <iostream>
#include <memory>
#include <sstream>

#include <CLI11.hpp>

#include "termcomp/harness.hpp"

namespace {

using namespace termcomp;

constexpr int kExitOk = 0;
constexpr int kExitInput = 1;
constexpr int kExitPool = 2;
constexpr int kExitGateway = 3;
constexpr int kExitChild = 4;

std::string read_stream(std::istream& in) {
  std::ostringstream buffer;
  buffer << in.rdbuf();
  return buffer.str();
}

std::string read_input(const std::string& path) {
  if (path.empty() || path == "-") return read_stream(std::cin);
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read input file: " + path);
  return read_stream(in);
}

std::vector<CompressionRule> load_rule_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read rule file: " + path);
  Json doc = Json::parse(in);
  std::vector<CompressionRule> rules;
  if (doc.is_array())
    for (const auto& r : doc) rules.push_back(parse_rule(r));
  else
    rules.push_back(parse_rule(doc));
  return rules;
}

struct GatewayOptions {
  std::string mock_path;

  std::unique_ptr<LlmGateway> make() const {
    if (!mock_path.empty()) return std::make_unique<MockGateway>(mock_path);
    if (std::getenv("TERMCOMP_LLM_ENDPOINT"))
      return std::make_unique<HttpGateway>(HttpGateway::from_env());
    return nullptr;  // degraded mode: sessions fall back to raw candidates
  }
};

std::vector<CompressionRule> gather_rules(const std::string& pool_path,
                                          const std::string& rules_path) {
  if (!rules_path.empty()) return load_rule_file(rules_path);
  if (!pool_path.empty()) return load_pool(pool_path).all_rules();
  return seed_rules();
}

int cmd_compress(const std::string& command, const std::string& input_path,
                 const std::string& pool_path, const std::string& rules_path, bool stats) {
  std::vector<CompressionRule> rules;
  try {
    rules = gather_rules(pool_path, rules_path);
  } catch (const PoolError& e) {
    std::cerr << "termcomp: " << e.what() << "\n";
    return kExitPool;
  }
  std::string input;
  try {
    input = read_input(input_path);
  } catch (const std::exception& e) {
    std::cerr << "termcomp: " << e.what() << "\n";
    return kExitInput;
  }
  std::vector<const CompressionRule*> active;
  for (const auto& r : rules) active.push_back(&r);
  ObservationRecord record = compress(0, command, input, active);
  std::cout << record.result.compressed_text;
  if (stats) {
    Json s = Json::object();
    s["chars_before"] = record.result.chars_before;
    s["chars_after"] = record.result.chars_after;
    s["ratio"] = record.result.ratio;
    s["applied_rule_id"] =
        record.result.applied_rule_id ? Json(*record.result.applied_rule_id) : Json(nullptr);
    s["coverage"] = coverage_name(record.coverage);
    std::cerr << s.dump() << "\n";
  }
  return kExitOk;
}

int cmd_wrap(const std::vector<std::string>& child_argv, const std::string& pool_path,
             const std::string& rules_path) {
  std::vector<CompressionRule> rules;
  try {
    rules = gather_rules(pool_path, rules_path);
  } catch (const PoolError& e) {
    std::cerr << "termcomp: " << e.what() << "\n";
    return kExitPool;
  }
  std::string command;
  for (const auto& arg : child_argv) {
    if (!command.empty()) command += ' ';
    command += arg;
  }
  // One child invocation is one observation; stdout and stderr are captured
  // together at the command boundary.
  FILE* pipe = popen((command + " 2>&1").c_str(), "r");
  if (!pipe) {
    std::cerr << "termcomp: failed to spawn child: " << command << "\n";
    return kExitChild;
  }
  std::string output;
  char buf[4096];
  size_t n;
  while ((n = fread(buf, 1, sizeof buf, pipe)) > 0) output.append(buf, n);
  int status = pclose(pipe);

  std::vector<const CompressionRule*> active;
  for (const auto& r : rules) active.push_back(&r);
  ObservationRecord record = compress(0, command, output, active);
  std::cout << record.result.compressed_text;

  if (status == -1) return kExitChild;
  if (WIFEXITED(status)) return WEXITSTATUS(status);
  return kExitChild;
}

int cmd_pool_init(const std::string& pool_path, bool force) {
  if (std::filesystem::exists(pool_path) && !force) {
    std::cerr << "termcomp: pool file exists (use --force to overwrite): " << pool_path << "\n";
    return kExitPool;
  }
  save_pool(GlobalRulePool::seeded(), pool_path);
  std::cout << "initialized seed pool at " << pool_path << "\n";
  return kExitOk;
}

int cmd_pool_top(const std::string& pool_path, size_t k, const std::string& category) {
  GlobalRulePool pool = load_pool(pool_path, /*seed_if_missing=*/false);
  std::optional<std::string> cat;
  if (!category.empty()) cat = category;
  char buf[256];
  for (const auto& rule : pool.top_k(k, cat)) {
    std::snprintf(buf, sizeof buf, "%-36s score=%-10.3f confidence=%.3f applied=%ld\n",
                  rule.rule_id.c_str(), ranking_score(rule), rule.confidence,
                  rule.times_applied);
    std::cout << buf;
  }
  return kExitOk;
}

int cmd_pool_show(const std::string& pool_path, const std::string& rule_id) {
  GlobalRulePool pool = load_pool(pool_path, /*seed_if_missing=*/false);
  auto rule = pool.find(rule_id);
  if (!rule) {
    std::cerr << "termcomp: no rule '" << rule_id << "' in pool\n";
    return kExitPool;
  }
  std::cout << serialize_rule(*rule) << "\n";
  return kExitOk;
}

int cmd_pool_retention(const std::string& prev_path, const std::string& curr_path, size_t k) {
  GlobalRulePool prev = load_pool(prev_path, /*seed_if_missing=*/false);
  GlobalRulePool curr = load_pool(curr_path, /*seed_if_missing=*/false);
  auto report = retention(prev, curr, k);
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.1f\n", report.retention_percent);
  std::cout << buf;
  if (report.undersized)
    std::cerr << "termcomp: note: a pool holds fewer than K=" << k << " rules\n";
  return kExitOk;
}

std::vector<TrajectoryFile> load_trajectories(const std::vector<std::string>& paths,
                                              std::vector<std::string>& errors) {
  std::vector<TrajectoryFile> out;
  for (const auto& path : paths) {
    try {
      out.push_back(load_trajectory(path));
    } catch (const TrajectoryError& e) {
      errors.push_back(e.what());
    }
  }
  return out;
}

int cmd_replay(const std::vector<std::string>& paths, const std::string& pool_path,
               const GatewayOptions& gw_opts, const SessionConfig& session_config, bool table) {
  std::vector<std::string> errors;
  auto trajectories = load_trajectories(paths, errors);
  for (const auto& e : errors) std::cerr << "termcomp: " << e << "\n";

  GlobalRulePool pool =
      pool_path.empty() ? GlobalRulePool::seeded() : load_pool(pool_path);
  auto gateway = gw_opts.make();

  CompressionReport report;
  for (const auto& trajectory : trajectories) {
    auto [task_report, outcomes] = replay_task(trajectory, pool, session_config, gateway.get());
    report.episodes += task_report.episodes;
    report.entries += task_report.entries;
    report.chars_saved += task_report.chars_saved;
    report.tasks.push_back(std::move(task_report));
  }
  if (table)
    std::cout << report.to_table();
  else
    std::cout << report.to_json().dump(2) << "\n";
  return errors.empty() ? kExitOk : kExitInput;
}

int cmd_evolve(const std::vector<std::string>& paths, const std::string& pool_path,
               const GatewayOptions& gw_opts, const EvolutionConfig& config) {
  std::vector<std::string> errors;
  auto trajectories = load_trajectories(paths, errors);
  for (const auto& e : errors) std::cerr << "termcomp: " << e << "\n";

  GlobalRulePool pool =
      pool_path.empty() ? GlobalRulePool::seeded() : load_pool(pool_path);
  auto gateway = gw_opts.make();

  EvolutionReport report = run_evolution(trajectories, pool, config, gateway.get());
  if (!pool_path.empty()) save_pool(pool, pool_path);
  std::cout << report.to_json().dump(2) << "\n";
  return errors.empty() ? kExitOk : kExitInput;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Self-evolving terminal output compression"};
  app.require_subcommand(1);

  std::string pool_path, rules_path, command, input_path = "-", category;
  GatewayOptions gw_opts;
  bool stats = false, table = false, force = false;
  EvolutionConfig evo;
  evo.session.top_k = 30;

  auto add_pool_opt = [&](CLI::App* sub) {
    sub->add_option("--pool", pool_path, "pool file path")->envname("TERMCOMP_POOL");
  };
  auto add_gateway_opts = [&](CLI::App* sub) {
    sub->add_option("--mock", gw_opts.mock_path, "mock transcript file (offline gateway)")
        ->envname("TERMCOMP_MOCK");
  };

  auto* compress_cmd = app.add_subcommand("compress", "compress one observation");
  compress_cmd->add_option("--command", command, "command that produced the output")->required();
  compress_cmd->add_option("input", input_path, "input file ('-' for stdin)");
  compress_cmd->add_option("--rules", rules_path, "explicit rule file (JSON array)")
      ->envname("TERMCOMP_RULES");
  compress_cmd->add_flag("--stats", stats, "print size accounting on stderr");
  add_pool_opt(compress_cmd);

  auto* wrap_cmd = app.add_subcommand("wrap", "run a child command, compress its output");
  std::vector<std::string> child_argv;
  wrap_cmd->add_option("child", child_argv, "child command line")->required();
  wrap_cmd->add_option("--rules", rules_path, "explicit rule file (JSON array)");
  add_pool_opt(wrap_cmd);
  wrap_cmd->positionals_at_end();

  auto* pool_cmd = app.add_subcommand("pool", "inspect and manage the rule pool");
  pool_cmd->require_subcommand(1);
  auto* pool_init = pool_cmd->add_subcommand("init", "write the seed pool");
  add_pool_opt(pool_init);
  pool_init->add_flag("--force", force, "overwrite an existing pool file");
  auto* pool_top = pool_cmd->add_subcommand("top", "list rules by ranking score");
  add_pool_opt(pool_top);
  size_t top_k_count = 30;
  pool_top->add_option("--k", top_k_count, "how many rules to list");
  pool_top->add_option("--category", category, "rank this category first");
  auto* pool_show = pool_cmd->add_subcommand("show", "print one rule");
  add_pool_opt(pool_show);
  std::string show_id;
  pool_show->add_option("--id", show_id, "rule id")->required();
  auto* pool_ret = pool_cmd->add_subcommand("retention", "top-K overlap between two pools");
  std::string prev_path, curr_path;
  size_t retention_k = 30;
  pool_ret->add_option("--prev", prev_path, "previous pool file")->required();
  pool_ret->add_option("--curr", curr_path, "current pool file")->required();
  pool_ret->add_option("--K", retention_k, "K for the overlap");

  std::vector<std::string> trajectory_paths;
  auto* replay_cmd = app.add_subcommand("replay", "replay trajectories, report compression");
  replay_cmd->add_option("trajectories", trajectory_paths, "trajectory files")->required();
  replay_cmd->add_option("--k", evo.session.top_k, "top-k rule candidates per task")
      ->envname("TERMCOMP_K");
  replay_cmd->add_flag("--table", table, "human-readable table instead of JSON");
  add_pool_opt(replay_cmd);
  add_gateway_opts(replay_cmd);

  auto* evolve_cmd = app.add_subcommand("evolve", "multi-turn batched rule evolution");
  evolve_cmd->add_option("trajectories", trajectory_paths, "trajectory files")->required();
  evolve_cmd->add_option("--k", evo.session.top_k, "top-k rule candidates per task")
      ->envname("TERMCOMP_K");
  evolve_cmd->add_option("--tau", evo.tau, "write-back confidence threshold")
      ->envname("TERMCOMP_TAU");
  evolve_cmd->add_option("--K", evo.retention_k, "K for the retention metric")
      ->envname("TERMCOMP_RETENTION_K");
  evolve_cmd->add_option("--n", evo.batch_size, "batch size (concurrent sessions)")
      ->envname("TERMCOMP_N");
  evolve_cmd->add_option("--turns", evo.max_turns, "maximum evolution turns")
      ->envname("TERMCOMP_TURNS");
  evolve_cmd
      ->add_option("--retention-threshold", evo.retention_threshold,
                   "stop once retention reaches this percentage")
      ->envname("TERMCOMP_RETENTION_THRESHOLD");
  add_pool_opt(evolve_cmd);
  add_gateway_opts(evolve_cmd);

  CLI11_PARSE(app, argc, argv);

  try {
    if (compress_cmd->parsed())
      return cmd_compress(command, input_path, pool_path, rules_path, stats);
    if (wrap_cmd->parsed()) return cmd_wrap(child_argv, pool_path, rules_path);
    if (pool_cmd->parsed()) {
      if (pool_init->parsed()) return cmd_pool_init(pool_path, force);
      if (pool_top->parsed()) return cmd_pool_top(pool_path, top_k_count, category);
      if (pool_show->parsed()) return cmd_pool_show(pool_path, show_id);
      if (pool_ret->parsed()) return cmd_pool_retention(prev_path, curr_path, retention_k);
    }
    if (replay_cmd->parsed())
      return cmd_replay(trajectory_paths, pool_path, gw_opts, evo.session, table);
    if (evolve_cmd->parsed()) return cmd_evolve(trajectory_paths, pool_path, gw_opts, evo);
  } catch (const PoolError& e) {
    std::cerr << "termcomp: " << e.what() << "\n";
    return kExitPool;
  } catch (const GatewayError& e) {
    std::cerr << "termcomp: " << e.what() << "\n";
    return kExitGateway;
  } catch (const std::exception& e) {
    std::cerr << "termcomp: " << e.what() << "\n";
    return kExitInput;
  }
  return kExitInput;
}
