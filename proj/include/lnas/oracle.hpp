#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <unordered_map>
#include <utility>

#include "lnas/archspace.hpp"
#include "lnas/common.hpp"

// Accuracy/cost lookup for architectures: an immutable key -> record table
// (loaded from disk or tabulated from the deterministic synthetic model) plus a
// per-run budget clock and query cache.

namespace lnas::oracle {

struct DuplicateKey : Error { using Error::Error; };
struct MissingField : Error { using Error::Error; };
struct UnknownArchitecture : Error { using Error::Error; };
struct BudgetExceeded : Error { using Error::Error; };
struct EmptyOracle : Error { using Error::Error; };
struct InvalidCell : Error { using Error::Error; };

struct OracleRecord {
  double validation_accuracy = 0.0;  // in [0, 1]; drives the search
  double test_accuracy = 0.0;        // in [0, 1]; reported, defines regret
  double training_seconds = 0.0;     // > 0; advances the simulated clock
  bool operator==(const OracleRecord&) const = default;
};

class Oracle {
 public:
  Oracle() = default;
  explicit Oracle(std::map<CanonicalKey, OracleRecord> table) : table_(std::move(table)) {}

  const OracleRecord& at(const CanonicalKey& key) const;
  bool contains(const CanonicalKey& key) const { return table_.count(key) != 0; }
  size_t size() const { return table_.size(); }
  bool empty() const { return table_.empty(); }
  const std::map<CanonicalKey, OracleRecord>& table() const { return table_; }

 private:
  std::map<CanonicalKey, OracleRecord> table_;
};

// Deterministic stand-in accuracy model for fully enumerable spaces. The
// validation score rewards a specific compute op along the deepest input-to-
// output path (among deepest paths, the richest one counts), plus a small
// key-hash jitter; the test score perturbs validation downward by the jitter
// magnitude, which keeps both argmaxes on the same cell.
OracleRecord synthetic_accuracy(const arch::CellGraph& cell, const arch::SearchSpaceSpec& spec);

// Applies synthetic_accuracy to every enumerated cell.
Oracle tabulate_synthetic(const arch::SearchSpaceSpec& spec);

// Highest test accuracy; ties broken by lowest key. Regret is measured on test
// accuracy against that record.
std::pair<CanonicalKey, OracleRecord> best_in_space(const Oracle& oracle);
double regret(const Oracle& oracle, const OracleRecord& record);

class BudgetClock {
 public:
  explicit BudgetClock(double budget_seconds, int64_t query_budget = -1)
      : budget_(budget_seconds), query_budget_(query_budget) {}

  double elapsed() const { return elapsed_; }
  double budget() const { return budget_; }
  int64_t query_count() const { return query_count_; }
  int64_t query_budget() const { return query_budget_; }

  bool can_afford(double seconds) const {
    if (query_budget_ >= 0 && query_count_ >= query_budget_) return false;
    return elapsed_ + seconds <= budget_;
  }
  // Throws BudgetExceeded (clock untouched) when the charge does not fit.
  void charge(double seconds);

 private:
  double elapsed_ = 0.0;
  double budget_ = 0.0;
  int64_t query_count_ = 0;
  int64_t query_budget_ = -1;
};

struct QueryResult {
  OracleRecord record;
  bool cached = false;  // repeat of an earlier query in this session; cost-free
};

// Binds an oracle to one run's clock. First query of an architecture charges
// its training cost; repeats are free and flagged.
class QuerySession {
 public:
  QuerySession(const Oracle& oracle, const arch::SearchSpaceSpec& spec, BudgetClock clock)
      : oracle_(oracle), spec_(spec), clock_(clock) {}

  QueryResult query(const arch::CellGraph& cell);
  QueryResult query_key(const CanonicalKey& key);

  const BudgetClock& clock() const { return clock_; }
  int64_t cache_hits() const { return cache_hits_; }

 private:
  const Oracle& oracle_;
  const arch::SearchSpaceSpec& spec_;
  BudgetClock clock_;
  std::unordered_map<CanonicalKey, OracleRecord> seen_;
  int64_t cache_hits_ = 0;
};

// One JSON object per line: {"key": hex, "validation_accuracy", "test_accuracy",
// "training_seconds"}. Keys ascending, doubles round-trip exactly.
void save_tabular(const Oracle& oracle, const std::string& path);
Oracle load_tabular(const std::string& path);

}  // namespace lnas::oracle
