#include "termcomp/pool.hpp"

#include <fcntl.h>
#include <sys/file.h>
#include <unistd.h>

#include <algorithm>
#include <fstream>
#include <mutex>
#include <set>
#include <sstream>

namespace termcomp {

double ranking_score(const CompressionRule& rule) {
  return rule.confidence * static_cast<double>(rule.times_applied + 1);
}

GlobalRulePool::GlobalRulePool(const GlobalRulePool& other) {
  std::shared_lock lock(other.mutex_);
  entries_ = other.entries_;
  generation_ = other.generation_;
  capacity_ = other.capacity_;
}

GlobalRulePool& GlobalRulePool::operator=(const GlobalRulePool& other) {
  if (this == &other) return *this;
  GlobalRulePool copy(other);
  std::unique_lock lock(mutex_);
  entries_ = std::move(copy.entries_);
  generation_ = copy.generation_;
  capacity_ = copy.capacity_;
  return *this;
}

GlobalRulePool GlobalRulePool::seeded(size_t capacity) {
  GlobalRulePool pool(capacity);
  for (const auto& rule : seed_rules()) pool.put(rule);
  return pool;
}

long GlobalRulePool::generation() const {
  std::shared_lock lock(mutex_);
  return generation_;
}

size_t GlobalRulePool::size() const {
  std::shared_lock lock(mutex_);
  return entries_.size();
}

bool GlobalRulePool::contains(const std::string& rule_id) const {
  std::shared_lock lock(mutex_);
  return entries_.count(rule_id) > 0;
}

std::optional<CompressionRule> GlobalRulePool::find(const std::string& rule_id) const {
  std::shared_lock lock(mutex_);
  auto it = entries_.find(rule_id);
  if (it == entries_.end()) return std::nullopt;
  return it->second.rule;
}

std::vector<CompressionRule> GlobalRulePool::all_rules() const {
  std::shared_lock lock(mutex_);
  std::vector<CompressionRule> out;
  out.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) out.push_back(entry.rule);
  return out;
}

void GlobalRulePool::put(const CompressionRule& rule, long updated_generation) {
  std::unique_lock lock(mutex_);
  entries_[rule.rule_id] = Entry{rule, updated_generation};
}

std::vector<const GlobalRulePool::Entry*> GlobalRulePool::ranked_locked(
    const std::optional<std::string>& category) const {
  std::vector<const Entry*> ranked;
  ranked.reserve(entries_.size());
  for (const auto& [id, entry] : entries_) ranked.push_back(&entry);
  std::stable_sort(ranked.begin(), ranked.end(), [&](const Entry* a, const Entry* b) {
    if (category) {
      bool am = a->rule.category == *category;
      bool bm = b->rule.category == *category;
      if (am != bm) return am;
    }
    double sa = ranking_score(a->rule);
    double sb = ranking_score(b->rule);
    if (sa != sb) return sa > sb;
    if (a->updated_generation != b->updated_generation)
      return a->updated_generation > b->updated_generation;
    return a->rule.rule_id < b->rule.rule_id;
  });
  return ranked;
}

std::vector<CompressionRule> GlobalRulePool::top_k(
    size_t k, const std::optional<std::string>& category) const {
  std::shared_lock lock(mutex_);
  auto ranked = ranked_locked(category);
  std::vector<CompressionRule> out;
  for (size_t i = 0; i < ranked.size() && i < k; ++i) out.push_back(ranked[i]->rule);
  return out;
}

GlobalRulePool::WriteBackResult GlobalRulePool::write_back(
    const std::vector<RuleOutcome>& outcomes, double tau, double alpha) {
  std::unique_lock lock(mutex_);
  WriteBackResult result;
  const long next_generation = generation_ + 1;

  for (const auto& outcome : outcomes) {
    if (outcome.complained) {
      if (entries_.erase(outcome.rule_id) > 0) ++result.deleted;
      continue;
    }
    if (outcome.delta_applications < 1 || outcome.task_confidence < tau) continue;

    auto it = entries_.find(outcome.rule_id);
    if (it != entries_.end()) {
      auto& rule = it->second.rule;
      rule.times_applied += outcome.delta_applications;
      rule.confidence = (1.0 - alpha) * rule.confidence + alpha * outcome.task_confidence;
      it->second.updated_generation = next_generation;
      ++result.updated;
    } else if (outcome.rule_body) {
      CompressionRule rule = *outcome.rule_body;
      rule.rule_id = outcome.rule_id;
      rule.confidence = outcome.task_confidence;
      rule.times_applied = outcome.delta_applications;
      rule.times_complained = 0;
      const std::string id = rule.rule_id;
      entries_[id] = Entry{std::move(rule), next_generation};
      ++result.inserted;
    } else {
      result.diagnostics.push_back("outcome for unknown rule '" + outcome.rule_id +
                                   "' carries no rule body; skipped");
    }
  }

  generation_ = next_generation;

  while (entries_.size() > capacity_) {
    auto victim = entries_.end();
    double victim_score = 0.0;
    for (auto it = entries_.begin(); it != entries_.end(); ++it) {
      if (is_seed_rule_id(it->first)) continue;
      double score = ranking_score(it->second.rule);
      if (victim == entries_.end() || score < victim_score ||
          (score == victim_score && it->first < victim->first)) {
        victim = it;
        victim_score = score;
      }
    }
    if (victim == entries_.end()) break;  // everything left is a seed rule
    entries_.erase(victim);
    ++result.evicted;
  }
  return result;
}

Json GlobalRulePool::to_json() const {
  std::shared_lock lock(mutex_);
  Json doc = Json::object();
  doc["schema_version"] = kSchemaVersion;
  doc["generation"] = generation_;
  Json rules = Json::array();
  for (const auto& [id, entry] : entries_) {
    Json r = rule_to_json(entry.rule);
    r["updated_generation"] = entry.updated_generation;
    rules.push_back(std::move(r));
  }
  doc["rules"] = std::move(rules);
  return doc;
}

GlobalRulePool GlobalRulePool::from_json(const Json& doc, size_t capacity) {
  if (!doc.is_object() || !doc.contains("schema_version"))
    throw PoolError(PoolError::Kind::Corrupt, "pool document lacks schema_version");
  if (doc["schema_version"].get<int>() != kSchemaVersion)
    throw PoolError(PoolError::Kind::SchemaMismatch,
                    "unsupported pool schema_version " + doc["schema_version"].dump());
  GlobalRulePool pool(capacity);
  pool.generation_ = doc.value("generation", 0L);
  if (!doc.contains("rules") || !doc["rules"].is_array())
    throw PoolError(PoolError::Kind::Corrupt, "pool document lacks a rules array");
  for (const auto& rule_doc : doc["rules"]) {
    long gen = rule_doc.value("updated_generation", 0L);
    Json clean = rule_doc;
    clean.erase("updated_generation");
    pool.put(parse_rule(clean), gen);
  }
  return pool;
}

RetentionReport retention(const GlobalRulePool& prev, const GlobalRulePool& curr, size_t k,
                          int run_index) {
  auto prev_top = prev.top_k(k);
  auto curr_top = curr.top_k(k);
  std::set<std::string> prev_ids;
  for (const auto& r : prev_top) prev_ids.insert(r.rule_id);
  size_t retained = 0;
  for (const auto& r : curr_top)
    if (prev_ids.count(r.rule_id)) ++retained;

  RetentionReport report;
  report.run_index = run_index;
  report.k = k;
  report.retained_count = retained;
  // The denominator stays K even when the pools hold fewer rules.
  report.retention_percent = 100.0 * static_cast<double>(retained) / static_cast<double>(k);
  report.undersized = prev_top.size() < k || curr_top.size() < k;
  return report;
}

GlobalRulePool load_pool(const std::filesystem::path& path, bool seed_if_missing,
                         size_t capacity) {
  if (!std::filesystem::exists(path)) {
    if (seed_if_missing) return GlobalRulePool::seeded(capacity);
    throw PoolError(PoolError::Kind::Missing, "pool file not found: " + path.string());
  }
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PoolError(PoolError::Kind::Missing, "pool file unreadable: " + path.string());
  std::ostringstream buffer;
  buffer << in.rdbuf();
  Json doc;
  try {
    doc = Json::parse(buffer.str());
  } catch (const Json::parse_error& e) {
    throw PoolError(PoolError::Kind::Corrupt, "corrupt pool file " + path.string() +
                                                  " at byte " + std::to_string(e.byte) + ": " +
                                                  e.what());
  }
  try {
    return GlobalRulePool::from_json(doc, capacity);
  } catch (const RuleParseError& e) {
    throw PoolError(PoolError::Kind::Corrupt,
                    "corrupt pool file " + path.string() + ": " + e.what());
  }
}

void save_pool(const GlobalRulePool& pool, const std::filesystem::path& path) {
  PoolFileLock lock(path);
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw PoolError(PoolError::Kind::Missing, "cannot write pool file: " + tmp.string());
    out << pool.to_json().dump(2) << "\n";
  }
  std::filesystem::rename(tmp, path);
}

PoolFileLock::PoolFileLock(const std::filesystem::path& pool_path) {
  auto lock_path = pool_path;
  lock_path += ".lock";
  fd_ = ::open(lock_path.c_str(), O_CREAT | O_RDWR, 0644);
  if (fd_ >= 0) ::flock(fd_, LOCK_EX);
}

PoolFileLock::~PoolFileLock() {
  if (fd_ >= 0) {
    ::flock(fd_, LOCK_UN);
    ::close(fd_);
  }
}

}  // namespace termcomp
