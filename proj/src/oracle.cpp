#include "lnas/oracle.hpp"

#include <algorithm>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

namespace lnas::oracle {

using json = nlohmann::json;

const OracleRecord& Oracle::at(const CanonicalKey& key) const {
  auto it = table_.find(key);
  if (it == table_.end())
    throw UnknownArchitecture("no record for key " + key.hex());
  return it->second;
}

OracleRecord synthetic_accuracy(const arch::CellGraph& cell, const arch::SearchSpaceSpec& spec) {
  auto report = arch::validate(cell, spec);
  if (!report.valid) {
    std::string why = report.failures.empty() ? "invalid cell" : report.failures[0].detail;
    throw InvalidCell("synthetic oracle rejects cell: " + why);
  }
  if (spec.max_edges <= 0) throw InvalidCell("synthetic oracle needs a bounded edge budget");

  const int N = cell.N;
  // Deepest input->output path; among equally deep paths, the one carrying the
  // most op-2 nodes. Lexicographic DP over the topological (row) order.
  constexpr int kUnreached = -1;
  std::vector<int> len(size_t(N), kUnreached), score(size_t(N), 0);
  len[0] = 0;
  for (int j = 1; j < N; ++j) {
    for (int i = 0; i < j; ++i) {
      if (!cell.at(i, j) || len[size_t(i)] == kUnreached) continue;
      const int cand_len = len[size_t(i)] + 1;
      const int cand_score = score[size_t(i)] + (cell.ops[size_t(j)] == 2 ? 1 : 0);
      if (cand_len > len[size_t(j)] ||
          (cand_len == len[size_t(j)] && cand_score > score[size_t(j)])) {
        len[size_t(j)] = cand_len;
        score[size_t(j)] = cand_score;
      }
    }
  }
  const double s = double(score[size_t(N - 1)]) / double(N - 2);
  const double h = unit_signed(arch::canonical_hash(cell, spec));

  OracleRecord rec;
  rec.validation_accuracy = 0.80 + 0.15 * s + 0.005 * h;
  rec.test_accuracy = rec.validation_accuracy - 0.002 * std::abs(h);
  rec.training_seconds = 600.0 + 1800.0 * double(cell.edge_count()) / double(spec.max_edges);
  return rec;
}

Oracle tabulate_synthetic(const arch::SearchSpaceSpec& spec) {
  std::map<CanonicalKey, OracleRecord> table;
  for (const auto& cell : arch::enumerate_space(spec))
    table.emplace(arch::canonical_hash(cell, spec), synthetic_accuracy(cell, spec));
  return Oracle(std::move(table));
}

std::pair<CanonicalKey, OracleRecord> best_in_space(const Oracle& oracle) {
  if (oracle.empty()) throw EmptyOracle("best_in_space over an empty oracle");
  const std::pair<const CanonicalKey, OracleRecord>* best = nullptr;
  for (const auto& kv : oracle.table())
    if (!best || kv.second.test_accuracy > best->second.test_accuracy) best = &kv;
  return {best->first, best->second};
}

double regret(const Oracle& oracle, const OracleRecord& record) {
  return best_in_space(oracle).second.test_accuracy - record.test_accuracy;
}

void BudgetClock::charge(double seconds) {
  if (!can_afford(seconds))
    throw BudgetExceeded("query cost " + std::to_string(seconds) + "s does not fit (elapsed " +
                         std::to_string(elapsed_) + "s of " + std::to_string(budget_) + "s)");
  elapsed_ += seconds;
  ++query_count_;
}

QueryResult QuerySession::query(const arch::CellGraph& cell) {
  return query_key(arch::canonical_hash(cell, spec_));
}

QueryResult QuerySession::query_key(const CanonicalKey& key) {
  auto hit = seen_.find(key);
  if (hit != seen_.end()) {
    ++cache_hits_;
    return {hit->second, true};
  }
  const OracleRecord& rec = oracle_.at(key);
  clock_.charge(rec.training_seconds);
  seen_.emplace(key, rec);
  return {rec, false};
}

void save_tabular(const Oracle& oracle, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (const auto& [key, rec] : oracle.table()) {
    json j;
    j["key"] = key.hex();
    j["validation_accuracy"] = rec.validation_accuracy;
    j["test_accuracy"] = rec.test_accuracy;
    j["training_seconds"] = rec.training_seconds;
    out << j.dump() << "\n";
  }
  if (!out) throw Error("write failure on '" + path + "'");
}

Oracle load_tabular(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw arch::ParseError("cannot open '" + path + "'");
  std::map<CanonicalKey, OracleRecord> table;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object()) throw arch::ParseError("bad record at " + where);
    for (const char* field : {"key", "validation_accuracy", "test_accuracy", "training_seconds"})
      if (!j.contains(field))
        throw MissingField(std::string("missing '") + field + "' at " + where);
    CanonicalKey key;
    try {
      key = Digest128::from_hex(j["key"].get<std::string>());
    } catch (const Error& e) {
      throw arch::ParseError(std::string(e.what()) + " at " + where);
    }
    OracleRecord rec;
    if (!j["validation_accuracy"].is_number() || !j["test_accuracy"].is_number() ||
        !j["training_seconds"].is_number())
      throw arch::ParseError("non-numeric field at " + where);
    rec.validation_accuracy = j["validation_accuracy"].get<double>();
    rec.test_accuracy = j["test_accuracy"].get<double>();
    rec.training_seconds = j["training_seconds"].get<double>();
    if (!table.emplace(key, rec).second)
      throw DuplicateKey("repeated key " + key.hex() + " at " + where);
  }
  return Oracle(std::move(table));
}

}  // namespace lnas::oracle
