#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "doctest.h"
#include "lnas/oracle.hpp"

using namespace lnas;
using oracle::BudgetClock;
using oracle::Oracle;
using oracle::OracleRecord;
using oracle::QuerySession;

namespace {

// Exhaustive scan over every input->output path; keeps the lexicographic best
// (length, op-2 count). Independent of the DP inside the oracle.
void scan_paths(const arch::CellGraph& cell, int node, int len, int score, int& best_len,
                int& best_score) {
  if (node == cell.N - 1) {
    if (len > best_len || (len == best_len && score > best_score)) {
      best_len = len;
      best_score = score;
    }
    return;
  }
  for (int j = node + 1; j < cell.N; ++j)
    if (cell.at(node, j))
      scan_paths(cell, j, len + 1, score + (cell.ops[size_t(j)] == 2 ? 1 : 0), best_len,
                 best_score);
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  REQUIRE(bool(in));
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_SUITE("oracle") {

TEST_CASE("synthetic scores recompute from an exhaustive path scan") {
  auto spec = arch::synthetic_spec();
  for (uint64_t seed = 0; seed < 200; ++seed) {
    auto cell = arch::uniform_sample(spec, seed);
    auto rec = oracle::synthetic_accuracy(cell, spec);
    auto rec2 = oracle::synthetic_accuracy(cell, spec);
    CHECK(rec == rec2);

    int best_len = -1, best_score = 0;
    scan_paths(cell, 0, 0, 0, best_len, best_score);
    REQUIRE(best_len >= 1);
    const double s = double(best_score) / double(spec.max_nodes - 2);
    const double h = unit_signed(arch::canonical_hash(cell, spec));
    CHECK(rec.validation_accuracy ==
          doctest::Approx(0.80 + 0.15 * s + 0.005 * h).epsilon(1e-14));
    CHECK(rec.test_accuracy ==
          doctest::Approx(rec.validation_accuracy - 0.002 * std::abs(h)).epsilon(1e-14));
    CHECK(rec.training_seconds ==
          doctest::Approx(600.0 + 1800.0 * double(cell.edge_count()) / double(spec.max_edges))
              .epsilon(1e-14));
    CHECK(rec.validation_accuracy >= 0.0);
    CHECK(rec.validation_accuracy <= 1.0);
    CHECK(rec.test_accuracy <= rec.validation_accuracy);
    CHECK(rec.training_seconds > 0.0);
  }
}

TEST_CASE("a chain without the rewarded op scores the base accuracy") {
  auto spec = arch::synthetic_spec();
  auto cell = arch::make_cell(spec, {"input", "conv1x1", "conv1x1", "conv1x1", "output"},
                              {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  auto rec = oracle::synthetic_accuracy(cell, spec);
  const double h = unit_signed(arch::canonical_hash(cell, spec));
  CHECK(rec.validation_accuracy == doctest::Approx(0.80 + 0.005 * h).epsilon(1e-14));

  SUBCASE("invalid cells are rejected") {
    arch::CellGraph broken = cell;
    broken.ops[1] = 0;  // second input label
    CHECK_THROWS_AS(oracle::synthetic_accuracy(broken, spec), oracle::InvalidCell);
    auto unbounded = spec;
    unbounded.max_edges = -1;
    CHECK_THROWS_AS(oracle::synthetic_accuracy(cell, unbounded), oracle::InvalidCell);
  }
}

TEST_CASE("tabulated space has a unique optimum shared by both metrics") {
  auto spec = arch::synthetic_spec();
  Oracle table = oracle::tabulate_synthetic(spec);
  CHECK(table.size() == arch::enumerate_space(spec).size());

  std::vector<double> tests;
  const std::pair<const CanonicalKey, OracleRecord>* val_best = nullptr;
  const std::pair<const CanonicalKey, OracleRecord>* test_best = nullptr;
  for (const auto& kv : table.table()) {
    const auto& r = kv.second;
    CHECK(r.validation_accuracy >= 0.0);
    CHECK(r.validation_accuracy <= 1.0);
    CHECK(r.test_accuracy >= 0.0);
    CHECK(r.test_accuracy <= 1.0);
    CHECK(r.training_seconds > 0.0);
    tests.push_back(r.test_accuracy);
    if (!val_best || r.validation_accuracy > val_best->second.validation_accuracy) val_best = &kv;
    if (!test_best || r.test_accuracy > test_best->second.test_accuracy) test_best = &kv;
  }
  std::sort(tests.begin(), tests.end());
  CHECK(std::adjacent_find(tests.begin(), tests.end()) == tests.end());  // strictly unique scores
  CHECK(val_best->first == test_best->first);

  auto [best_key, best_rec] = oracle::best_in_space(table);
  CHECK(best_key == test_best->first);
  CHECK(oracle::regret(table, best_rec) == 0.0);
  for (const auto& kv : table.table()) CHECK(oracle::regret(table, kv.second) >= 0.0);

  Oracle again = oracle::tabulate_synthetic(spec);
  CHECK(again.table() == table.table());

  CHECK_THROWS_AS(oracle::best_in_space(Oracle{}), oracle::EmptyOracle);
}

TEST_CASE("budget clock accepts exact fits and rejects overruns untouched") {
  BudgetClock clock(100.0);
  clock.charge(40.0);
  CHECK(clock.elapsed() == 40.0);
  CHECK(clock.query_count() == 1);
  CHECK_THROWS_AS(clock.charge(61.0), oracle::BudgetExceeded);
  CHECK(clock.elapsed() == 40.0);
  CHECK(clock.query_count() == 1);
  clock.charge(60.0);  // lands exactly on the budget
  CHECK(clock.elapsed() == 100.0);

  BudgetClock counted(1e9, 2);
  counted.charge(1.0);
  counted.charge(1.0);
  CHECK_FALSE(counted.can_afford(1.0));
  CHECK_THROWS_AS(counted.charge(1.0), oracle::BudgetExceeded);
  CHECK(counted.query_count() == 2);
}

TEST_CASE("query sessions cache repeats and keep a consistent ledger") {
  auto spec = arch::synthetic_spec(4, 2, 5);
  Oracle table = oracle::tabulate_synthetic(spec);
  const auto& cells = arch::enumerate_space(spec);
  REQUIRE(cells.size() >= 5);

  QuerySession session(table, spec, BudgetClock(1e9));
  double spent = 0.0;
  for (size_t i = 0; i < 5; ++i) {
    auto res = session.query(cells[i]);
    CHECK_FALSE(res.cached);
    spent += res.record.training_seconds;
  }
  auto repeat = session.query(cells[2]);
  CHECK(repeat.cached);
  CHECK(repeat.record == oracle::synthetic_accuracy(cells[2], spec));
  CHECK(session.cache_hits() == 1);
  CHECK(session.clock().elapsed() == doctest::Approx(spent).epsilon(1e-12));
  CHECK(session.clock().query_count() == 5);

  SUBCASE("unknown architectures and exhausted budgets") {
    QuerySession empty_session(Oracle{}, spec, BudgetClock(1e9));
    CHECK_THROWS_AS(empty_session.query(cells[0]), oracle::UnknownArchitecture);

    QuerySession tight(table, spec, BudgetClock(100.0));  // every record costs more
    CHECK_THROWS_AS(tight.query(cells[0]), oracle::BudgetExceeded);
    CHECK(tight.clock().elapsed() == 0.0);
  }
}

TEST_CASE("tabular files round trip byte for byte and reject malformed input") {
  auto spec = arch::synthetic_spec(4, 2, 5);
  Oracle table = oracle::tabulate_synthetic(spec);

  std::remove("oracle_a.jsonl");
  std::remove("oracle_b.jsonl");
  oracle::save_tabular(table, "oracle_a.jsonl");
  Oracle loaded = oracle::load_tabular("oracle_a.jsonl");
  CHECK(loaded.table() == table.table());
  oracle::save_tabular(loaded, "oracle_b.jsonl");
  CHECK(slurp("oracle_a.jsonl") == slurp("oracle_b.jsonl"));

  {
    std::ofstream out("oracle_dup.jsonl");
    const std::string line =
        "{\"key\":\"00000000000000000000000000000001\",\"validation_accuracy\":0.5,"
        "\"test_accuracy\":0.5,\"training_seconds\":10.0}";
    out << line << "\n" << line << "\n";
  }
  CHECK_THROWS_AS(oracle::load_tabular("oracle_dup.jsonl"), oracle::DuplicateKey);

  {
    std::ofstream out("oracle_missing.jsonl");
    out << "{\"key\":\"00000000000000000000000000000001\",\"validation_accuracy\":0.5,"
           "\"test_accuracy\":0.5}\n";
  }
  CHECK_THROWS_AS(oracle::load_tabular("oracle_missing.jsonl"), oracle::MissingField);

  {
    std::ofstream out("oracle_bad.jsonl");
    out << "not json at all\n";
  }
  CHECK_THROWS_AS(oracle::load_tabular("oracle_bad.jsonl"), arch::ParseError);

  {
    std::ofstream out("oracle_badkey.jsonl");
    out << "{\"key\":\"zz\",\"validation_accuracy\":0.5,\"test_accuracy\":0.5,"
           "\"training_seconds\":10.0}\n";
  }
  CHECK_THROWS_AS(oracle::load_tabular("oracle_badkey.jsonl"), arch::ParseError);

  CHECK_THROWS_AS(oracle::load_tabular("oracle_nonexistent.jsonl"), arch::ParseError);

  for (const char* f : {"oracle_a.jsonl", "oracle_b.jsonl", "oracle_dup.jsonl",
                        "oracle_missing.jsonl", "oracle_bad.jsonl", "oracle_badkey.jsonl"})
    std::remove(f);
}

}  // TEST_SUITE
