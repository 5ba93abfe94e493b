#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "termcomp/rule.hpp"

namespace termcomp {

// Retrieval key: global confidence times (cumulative successful
// applications + 1).
double ranking_score(const CompressionRule& rule);

struct RuleOutcome {
  std::string rule_id;
  long delta_applications = 0;       // successful applications this task
  double task_confidence = 0.0;      // final task-level confidence
  bool complained = false;           // complained => task_confidence == 0
  std::optional<CompressionRule> rule_body;  // present for rules created in-task
};

struct RetentionReport {
  int run_index = 0;
  size_t k = 0;
  size_t retained_count = 0;
  double retention_percent = 0.0;
  bool undersized = false;  // either pool held fewer than K rules
};

struct PoolError : std::runtime_error {
  enum class Kind { Missing, Corrupt, SchemaMismatch };
  Kind kind;
  PoolError(Kind kind_, const std::string& msg) : std::runtime_error(msg), kind(kind_) {}
};

// Persistent ranked rule collection. top_k and read accessors are safe to
// call concurrently; write_back is an atomic read-modify-write guarded by an
// internal lock, so concurrent write-backs serialize without lost updates.
class GlobalRulePool {
 public:
  static constexpr int kSchemaVersion = 1;

  explicit GlobalRulePool(size_t capacity = 500) : capacity_(capacity) {}
  GlobalRulePool(const GlobalRulePool& other);
  GlobalRulePool& operator=(const GlobalRulePool& other);

  static GlobalRulePool seeded(size_t capacity = 500);

  long generation() const;
  size_t size() const;
  size_t capacity() const { return capacity_; }
  bool contains(const std::string& rule_id) const;
  std::optional<CompressionRule> find(const std::string& rule_id) const;
  std::vector<CompressionRule> all_rules() const;  // unspecified order

  // Inserts or replaces a rule outside the write-back protocol (seeding,
  // file load, tooling).
  void put(const CompressionRule& rule, long updated_generation = 0);

  std::vector<CompressionRule> top_k(size_t k,
                                     const std::optional<std::string>& category = {}) const;

  struct WriteBackResult {
    size_t updated = 0;
    size_t inserted = 0;
    size_t deleted = 0;
    size_t evicted = 0;
    std::vector<std::string> diagnostics;
  };

  WriteBackResult write_back(const std::vector<RuleOutcome>& outcomes, double tau = 0.3,
                             double alpha = 0.3);

  Json to_json() const;
  static GlobalRulePool from_json(const Json& doc, size_t capacity = 500);

 private:
  struct Entry {
    CompressionRule rule;
    long updated_generation = 0;
  };

  std::vector<const Entry*> ranked_locked(const std::optional<std::string>& category) const;

  mutable std::shared_mutex mutex_;
  std::map<std::string, Entry> entries_;
  long generation_ = 0;
  size_t capacity_ = 500;
};

RetentionReport retention(const GlobalRulePool& prev, const GlobalRulePool& curr, size_t k,
                          int run_index = 0);

// Missing file yields the seeded pool when seed_if_missing is set, a
// PoolError otherwise. Corrupt files report the parse byte offset.
GlobalRulePool load_pool(const std::filesystem::path& path, bool seed_if_missing = true,
                         size_t capacity = 500);
void save_pool(const GlobalRulePool& pool, const std::filesystem::path& path);

// Cross-process mutual exclusion for pools shared through one file path.
class PoolFileLock {
 public:
  explicit PoolFileLock(const std::filesystem::path& pool_path);
  ~PoolFileLock();
  PoolFileLock(const PoolFileLock&) = delete;
  PoolFileLock& operator=(const PoolFileLock&) = delete;

 private:
  int fd_ = -1;
};

}  // namespace termcomp
