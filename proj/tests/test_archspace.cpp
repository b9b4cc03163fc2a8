#include <doctest.h>

#include <algorithm>
#include <array>
#include <cstdio>
#include <map>
#include <numeric>
#include <set>
#include <unordered_map>
#include <unordered_set>

#include "lnas/archspace.hpp"

using namespace lnas;
using namespace lnas::arch;

namespace {

// ---- independent oracles (no shared code with the implementation) ----------

// Validity of a full-size synthetic cell, recomputed from scratch: Warshall
// transitive closure instead of BFS, popcount for the edge budget.
bool oracle_valid_topology(uint32_t mask, int N, int max_edges) {
  int bits = N * (N - 1) / 2;
  int edges = 0;
  for (int b = 0; b < bits; ++b) edges += (mask >> b) & 1u;
  if (max_edges >= 0 && edges > max_edges) return false;

  std::vector<std::vector<char>> reach(N, std::vector<char>(N, 0));
  int b = 0;
  for (int i = 0; i < N; ++i) {
    reach[i][i] = 1;
    for (int j = i + 1; j < N; ++j, ++b)
      if ((mask >> b) & 1u) reach[i][j] = 1;
  }
  for (int k = 0; k < N; ++k)
    for (int i = 0; i < N; ++i)
      if (reach[i][k])
        for (int j = 0; j < N; ++j)
          if (reach[k][j]) reach[i][j] = 1;
  for (int v = 0; v < N; ++v)
    if (!reach[0][v] || !reach[v][N - 1]) return false;
  return true;
}

// Dense-rebuild isomorphism check: permute intermediates of `a`, reconstruct the
// full matrices, and compare directly against `b`.
bool oracle_isomorphic(const CellGraph& a, const CellGraph& b, int pins) {
  if (a.N != b.N || a.K != b.K || a.active_nodes() != b.active_nodes()) return false;
  const int N = a.N;
  const int act = a.active_nodes();
  std::vector<int> idx;
  for (int i = pins; i < act - 1; ++i) idx.push_back(i);
  std::vector<int> perm = idx;
  do {
    std::vector<int> m(N);
    std::iota(m.begin(), m.end(), 0);
    for (size_t i = 0; i < idx.size(); ++i) m[idx[i]] = perm[i];
    std::vector<uint8_t> p_adj(size_t(N) * N, 0);
    std::vector<int16_t> p_ops(N, -1);
    for (int i = 0; i < N; ++i) {
      p_ops[m[i]] = a.ops[i];
      for (int j = i + 1; j < N; ++j)
        if (a.at(i, j)) p_adj[size_t(m[i]) * N + m[j]] = 1;
    }
    if (p_adj == b.adj && p_ops == b.ops) return true;
  } while (std::next_permutation(perm.begin(), perm.end()));
  return false;
}

struct UnionFind {
  std::vector<int> parent;
  explicit UnionFind(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) { return parent[x] == x ? x : parent[x] = find(parent[x]); }
  void unite(int a, int b) { parent[find(a)] = find(b); }
};

// Count isomorphism classes of all valid synthetic matrices by brute force:
// raw enumeration, invariant bucketing, pairwise oracle checks inside buckets.
int oracle_class_count(const SearchSpaceSpec& spec) {
  const int N = spec.max_nodes, K = spec.num_ops();
  const int bits = N * (N - 1) / 2;
  const int n_inter = N - 2;
  std::vector<CellGraph> cells;
  for (uint32_t mask = 0; mask < (1u << bits); ++mask) {
    if (!oracle_valid_topology(mask, N, spec.max_edges)) continue;
    int combos = 1;
    for (int i = 0; i < n_inter; ++i) combos *= K - 2;
    for (int c = 0; c < combos; ++c) {
      CellGraph cell;
      cell.N = N;
      cell.K = K;
      cell.adj.assign(size_t(N) * N, 0);
      cell.ops.assign(N, -1);
      cell.ops[0] = 0;
      cell.ops[N - 1] = int16_t(K - 1);
      int rest = c;
      for (int i = 0; i < n_inter; ++i) {
        cell.ops[1 + i] = int16_t(1 + rest % (K - 2));
        rest /= K - 2;
      }
      int b = 0;
      for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j, ++b)
          if ((mask >> b) & 1u) cell.set(i, j, 1);
      cells.push_back(std::move(cell));
    }
  }

  // invariant bucket: sorted multiset of (indeg, outdeg, op) + edge count
  std::map<std::string, std::vector<int>> buckets;
  for (size_t c = 0; c < cells.size(); ++c) {
    const auto& cell = cells[c];
    std::vector<std::array<int, 3>> sig;
    for (int i = 0; i < cell.N; ++i) {
      int in = 0, out = 0;
      for (int j = 0; j < i; ++j) in += cell.at(j, i);
      for (int j = i + 1; j < cell.N; ++j) out += cell.at(i, j);
      sig.push_back({in, out, int(cell.ops[i])});
    }
    std::sort(sig.begin(), sig.end());
    std::string key;
    for (auto& s : sig)
      key += std::to_string(s[0]) + "," + std::to_string(s[1]) + "," + std::to_string(s[2]) + ";";
    buckets[key].push_back(int(c));
  }

  UnionFind uf(int(cells.size()));
  for (auto& [key, members] : buckets) {
    for (size_t i = 0; i < members.size(); ++i)
      for (size_t j = i + 1; j < members.size(); ++j) {
        if (uf.find(members[i]) == uf.find(members[j])) continue;
        if (oracle_isomorphic(cells[members[i]], cells[members[j]], 1))
          uf.unite(members[i], members[j]);
      }
  }
  std::set<int> roots;
  for (size_t c = 0; c < cells.size(); ++c) roots.insert(uf.find(int(c)));
  return int(roots.size());
}

// Upper tail of the chi-square distribution via the Wilson-Hilferty cube-root
// normal approximation; plenty for a p > 0.01 assertion at large dof.
double chi2_pvalue(double stat, double dof) {
  double z = (std::cbrt(stat / dof) - (1.0 - 2.0 / (9.0 * dof))) / std::sqrt(2.0 / (9.0 * dof));
  return 0.5 * std::erfc(z / std::sqrt(2.0));
}

CellGraph chain_cell(const SearchSpaceSpec& spec) {
  // input -> op -> ... -> output along consecutive nodes
  std::vector<std::string> names{spec.op_vocab.front()};
  for (int i = 1; i < spec.max_nodes - 1; ++i) names.push_back(spec.op_vocab[1]);
  names.push_back(spec.op_vocab.back());
  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i + 1 < spec.max_nodes; ++i) edges.emplace_back(i, i + 1);
  return make_cell(spec, names, edges);
}

// Frozen counts from the oracles above (independently recomputed in the tests
// that cite them).
constexpr int kSynthetic5Classes = 874;
constexpr int kNb201Cells = 15625;

}  // namespace

TEST_SUITE_BEGIN("archspace");

TEST_CASE("spec factories pin vocabulary order and shapes") {
  auto syn = synthetic_spec();
  CHECK(syn.max_nodes == 5);
  CHECK(syn.num_ops() == 5);
  CHECK(syn.op_vocab.front() == "input");
  CHECK(syn.op_vocab.back() == "output");
  CHECK(syn.max_edges == 6);

  auto nb101 = nb101_spec();
  CHECK(nb101.max_nodes == 7);
  CHECK(nb101.op_vocab == std::vector<std::string>{"input", "conv1x1", "conv3x3", "maxpool3x3", "output"});
  CHECK(nb101.max_edges == 9);

  auto nb201 = nb201_spec();
  CHECK(nb201.max_nodes == 8);
  CHECK(nb201.num_ops() == 7);

  auto darts = darts_spec();
  CHECK(darts.max_nodes == 11);
  CHECK(darts.num_ops() == 11);
  CHECK(input_pins(darts) == 2);
  CHECK(input_pins(syn) == 1);
}

TEST_CASE("encode/decode round trip and padding convention") {
  auto spec = synthetic_spec();
  // 4 active nodes in a 5-node spec: row/col 4 must be all zero
  auto cell = make_cell(spec, {"input", "conv1x1", "conv3x3", "output"},
                        {{0, 1}, {1, 2}, {2, 3}, {0, 3}});
  auto enc = encode_cell(cell, spec);
  CHECK(enc.N == 5);
  CHECK(enc.K == 5);
  for (int j = 0; j < 5; ++j) {
    CHECK(enc.A[size_t(4) * 5 + j] == 0);
    CHECK(enc.A[size_t(j) * 5 + 4] == 0);
  }
  for (int k = 0; k < 5; ++k) CHECK(enc.X[size_t(4) * 5 + k] == 0);
  CHECK(enc.X[0 * 5 + 0] == 1);
  CHECK(enc.X[3 * 5 + 4] == 1);

  auto back = decode_cell(enc, spec);
  CHECK(back == cell);
}

TEST_CASE("decode_cell rejects malformed matrices") {
  auto spec = synthetic_spec();
  auto good = encode_cell(chain_cell(spec), spec);

  auto low = good;
  low.A[size_t(3) * 5 + 1] = 1;
  CHECK_THROWS_AS(decode_cell(low, spec), NotUpperTriangular);

  auto two = good;
  two.X[size_t(2) * 5 + 3] = 1;  // row 2 now has two ones
  CHECK_THROWS_AS(decode_cell(two, spec), MalformedOneHot);

  auto zero_with_edges = good;
  for (int k = 0; k < 5; ++k) zero_with_edges.X[size_t(2) * 5 + k] = 0;
  CHECK_THROWS_AS(decode_cell(zero_with_edges, spec), MalformedOneHot);

  auto gap = good;
  for (int k = 0; k < 5; ++k) gap.X[size_t(2) * 5 + k] = 0;
  for (int j = 0; j < 5; ++j) {
    gap.A[size_t(2) * 5 + j] = 0;
    gap.A[size_t(j) * 5 + 2] = 0;
  }
  CHECK_THROWS_AS(decode_cell(gap, spec), MalformedOneHot);  // padding not trailing

  CHECK_THROWS_AS(decode_cell(good, nb101_spec()), SpecMismatch);
}

TEST_CASE("make_cell input validation") {
  auto spec = synthetic_spec();
  CHECK_THROWS_AS(make_cell(spec, {"input", "transformer", "output"}, {{0, 1}, {1, 2}}),
                  UnknownOperation);
  CHECK_THROWS_AS(make_cell(spec, {"input", "conv1x1", "conv1x1", "conv1x1", "conv1x1", "output"}, {}),
                  TooManyNodes);
  CHECK_THROWS_AS(make_cell(spec, {"input", "output"}, {{1, 0}}), NotUpperTriangular);
}

TEST_CASE("validate: minimal cell, io-path rule, edge budget, exact node count") {
  auto two = synthetic_spec(2, 3, 6);
  auto minimal = make_cell(two, {"input", "output"}, {{0, 1}});
  CHECK(validate(minimal, two).valid);

  auto spec = synthetic_spec();
  auto good = chain_cell(spec);
  CHECK(validate(good, spec).valid);

  // orphan node: node 2 loses its incoming edge
  auto orphan = good;
  orphan.set(1, 2, 0);
  auto rep = validate(orphan, spec);
  CHECK(!rep.valid);
  bool saw_path = false;
  for (auto& f : rep.failures) saw_path |= f.rule == "io-path";
  CHECK(saw_path);

  // padded cell is well-formed but fails the exact-node-count rule
  auto padded = make_cell(spec, {"input", "conv1x1", "conv3x3", "output"},
                          {{0, 1}, {1, 2}, {2, 3}});
  auto rep2 = validate(padded, spec);
  CHECK(!rep2.valid);
  bool saw_count = false;
  for (auto& f : rep2.failures) saw_count |= f.rule == "node-count";
  CHECK(saw_count);

  // node-op benchmark cells keep pruned sizes: padding is fine down to two nodes
  auto nb = nb101_spec();
  auto pruned = make_cell(nb, {"input", "conv3x3", "output"}, {{0, 1}, {1, 2}});
  CHECK(pruned.active_nodes() == 3);
  CHECK(validate(pruned, nb).valid);
  auto direct = make_cell(nb, {"input", "output"}, {{0, 1}});
  CHECK(validate(direct, nb).valid);
  auto lonely = make_cell(nb, {"input"}, {});
  CHECK(!validate(lonely, nb).valid);

  // duplicate input label on an intermediate row
  auto dup = good;
  dup.ops[2] = 0;
  auto rep3 = validate(dup, spec);
  CHECK(!rep3.valid);

  // edge budget: 5-node cell with 7 edges (max is 6)
  auto fat = good;
  fat.set(0, 2, 1);
  fat.set(0, 3, 1);
  fat.set(1, 3, 1);
  CHECK(fat.edge_count() == 7);
  auto rep4 = validate(fat, spec);
  bool saw_budget = false;
  for (auto& f : rep4.failures) saw_budget |= f.rule == "edge-budget";
  CHECK(saw_budget);
}

TEST_CASE("validate: edge-op cells check the fixed wiring") {
  auto spec = nb201_spec();
  auto cell = nb201_to_nodeop({3, 3, 3, 3, 3, 3}, spec);  // all skip
  CHECK(validate(cell, spec).valid);
  CHECK(cell.active_nodes() == 8);
  CHECK(cell.ops[0] == 0);
  CHECK(cell.ops[7] == 6);
  for (int i = 1; i <= 6; ++i) CHECK(cell.ops[i] == 4);  // "skip" sits at vocab index 4

  auto broken = cell;
  broken.set(0, 1, 0);
  auto rep = validate(broken, spec);
  CHECK(!rep.valid);
  bool saw = false;
  for (auto& f : rep.failures) saw |= f.rule == "fixed-topology";
  CHECK(saw);
}

TEST_CASE("validate: darts rule set") {
  auto spec = darts_spec();
  Rng rng(7);
  for (int t = 0; t < 50; ++t) {
    auto cell = uniform_sample(spec, rng);
    CHECK(validate(cell, spec).valid);
    // every intermediate has exactly two predecessors
    for (int i = 2; i < spec.max_nodes - 1; ++i) {
      int in = 0;
      for (int j = 0; j < i; ++j) in += cell.at(j, i);
      CHECK(in == 2);
    }
  }

  auto cell = uniform_sample(spec, 11);
  auto wrong_pin = cell;
  wrong_pin.ops[1] = 0;
  CHECK(!validate(wrong_pin, spec).valid);

  auto extra_in = cell;
  // give node 4 a third predecessor: pick one that is absent
  for (int j = 0; j < 4; ++j)
    if (!extra_in.at(j, 4)) {
      extra_in.set(j, 4, 1);
      break;
    }
  auto rep = validate(extra_in, spec);
  bool saw = false;
  for (auto& f : rep.failures) saw |= f.rule == "fanin-two";
  CHECK(saw);
}

TEST_CASE("canonical_hash matches brute-force isomorphism") {
  auto spec = synthetic_spec();

  // hand-built isomorphic pair: two parallel branches with swapped labels
  auto a = make_cell(spec, {"input", "conv1x1", "conv3x3", "maxpool3x3", "output"},
                     {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {3, 4}, {0, 4}});
  auto b = make_cell(spec, {"input", "conv3x3", "conv1x1", "maxpool3x3", "output"},
                     {{0, 1}, {0, 2}, {1, 3}, {2, 3}, {3, 4}, {0, 4}});
  CHECK(canonical_hash(a, spec) == canonical_hash(b, spec));
  CHECK(oracle_isomorphic(a, b, 1));

  auto c = b;
  c.ops[3] = 1;  // different op multiset
  CHECK(canonical_hash(a, spec) != canonical_hash(c, spec));
  CHECK(!oracle_isomorphic(a, c, 1));

  Rng rng(123);
  std::vector<CellGraph> cells;
  for (int i = 0; i < 120; ++i) cells.push_back(uniform_sample(spec, rng));
  for (size_t i = 0; i < cells.size(); ++i) {
    auto ki = canonical_hash(cells[i], spec);
    for (size_t j = i + 1; j < cells.size(); ++j) {
      bool same_key = ki == canonical_hash(cells[j], spec);
      bool iso = oracle_isomorphic(cells[i], cells[j], 1);
      CHECK(same_key == iso);
    }
  }

  CHECK_THROWS_AS(canonical_hash(uniform_sample(darts_spec(), 3), darts_spec()),
                  TooLargeForExact);
}

TEST_CASE("edit_distance: metric axioms and manual counts") {
  auto spec = synthetic_spec();
  auto a = chain_cell(spec);
  CHECK(edit_distance(a, a) == 0);

  auto b = a;
  b.ops[2] = 2;
  CHECK(edit_distance(a, b) == 1);
  b.set(0, 4, b.at(0, 4) ? 0 : 1);
  CHECK(edit_distance(a, b) == 2);
  CHECK(edit_distance(b, a) == 2);

  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    auto x = uniform_sample(spec, rng);
    auto y = uniform_sample(spec, rng);
    auto z = uniform_sample(spec, rng);
    int dxy = edit_distance(x, y), dyz = edit_distance(y, z), dxz = edit_distance(x, z);
    CHECK(dxy == edit_distance(y, x));
    CHECK(dxz <= dxy + dyz);
  }

  CHECK_THROWS_AS(edit_distance(a, nb201_to_nodeop({0, 0, 0, 0, 0, 0}, nb201_spec())),
                  SpecMismatch);
}

TEST_CASE("enumerate_space: counts, validity, distinct keys") {
  auto two = synthetic_spec(2, 3, 6);
  CHECK(enumerate_space(two).size() == 1);

  auto spec = synthetic_spec();
  const auto& cells = enumerate_space(spec);
  CHECK(int(cells.size()) == kSynthetic5Classes);

  std::unordered_set<Digest128> keys;
  for (const auto& c : cells) {
    CHECK(validate(c, spec).valid);
    keys.insert(canonical_hash(c, spec));
  }
  CHECK(keys.size() == cells.size());

  CHECK_THROWS_AS(enumerate_space(nb101_spec()), SpaceTooLarge);
  CHECK_THROWS_AS(enumerate_space(darts_spec()), SpaceTooLarge);
}

TEST_CASE("enumerate_space count equals the brute-force class count" * doctest::timeout(300)) {
  auto spec = synthetic_spec();
  CHECK(oracle_class_count(spec) == kSynthetic5Classes);
}

TEST_CASE("nb201 transform: 15625 distinct cells, injective") {
  auto spec = nb201_spec();
  const auto& cells = enumerate_space(spec);
  CHECK(int(cells.size()) == kNb201Cells);
  // all share the same adjacency; only ops differ
  for (size_t i = 1; i < cells.size(); ++i) CHECK(cells[i].adj == cells[0].adj);
  CHECK_THROWS_AS(nb201_to_nodeop({0, 0, 0, 0, 0, 5}, spec), UnknownOperation);
  CHECK_THROWS_AS(nb201_to_nodeop({0, 0, 0, 0, 0, 0}, synthetic_spec()), SpecMismatch);
}

TEST_CASE("uniform_sample: deterministic, valid, class-uniform") {
  auto spec = synthetic_spec();
  CHECK(uniform_sample(spec, uint64_t(42)) == uniform_sample(spec, uint64_t(42)));
  CHECK(uniform_sample(spec, uint64_t(42)) != uniform_sample(spec, uint64_t(43)));

  Rng rng(9);
  for (int t = 0; t < 10000; ++t) CHECK(validate(uniform_sample(spec, rng), spec).valid);

  // chi-square uniformity over canonical classes
  const auto& cells = enumerate_space(spec);
  std::unordered_map<Digest128, int> index;
  for (size_t i = 0; i < cells.size(); ++i) index[canonical_hash(cells[i], spec)] = int(i);
  std::vector<int> counts(cells.size(), 0);
  Rng rng2(1234);
  const int n_samples = 100000;
  for (int t = 0; t < n_samples; ++t) {
    auto cell = uniform_sample(spec, rng2);
    ++counts[size_t(index.at(canonical_hash(cell, spec)))];
  }
  double expected = double(n_samples) / double(cells.size());
  double stat = 0;
  for (int c : counts) {
    double d = c - expected;
    stat += d * d / expected;
  }
  double p = chi2_pvalue(stat, double(cells.size() - 1));
  CHECK(p > 0.01);

  // NB101-style rejection sampling also yields valid cells deterministically
  auto nb = nb101_spec();
  auto s1 = uniform_sample(nb, uint64_t(7));
  CHECK(validate(s1, nb).valid);
  CHECK(s1 == uniform_sample(nb, uint64_t(7)));
}

TEST_CASE("random_walk: unit edits, validity, no backtracking, determinism") {
  auto spec = synthetic_spec();
  auto start = uniform_sample(spec, uint64_t(1));

  auto path = random_walk(start, 200, spec, 99);
  CHECK(path.size() == 201);
  CHECK(path.front() == start);
  for (size_t i = 0; i + 1 < path.size(); ++i) {
    CHECK(edit_distance(path[i], path[i + 1]) == 1);
    CHECK(validate(path[i + 1], spec).valid);
    if (i >= 1) CHECK(!(path[i + 1] == path[i - 1]));
  }
  CHECK(random_walk(start, 200, spec, 99) == path);
  CHECK(random_walk(start, 0, spec, 99) == std::vector<CellGraph>{start});

  // the 2-node space has a single cell and therefore no unit-edit neighbors
  auto two = synthetic_spec(2, 3, 6);
  auto only = enumerate_space(two).front();
  CHECK_THROWS_AS(random_walk(only, 1, two, 0), DeadEnd);
}

TEST_CASE("spec and dataset files round-trip") {
  auto spec = synthetic_spec();
  std::string dir = "archspace_io_test";
  std::remove((dir + "_spec.json").c_str());
  save_spec(spec, dir + "_spec.json");
  auto spec2 = load_spec(dir + "_spec.json");
  CHECK(spec2 == spec);

  auto records = make_dataset(spec);
  CHECK(int(records.size()) == kSynthetic5Classes);
  save_dataset(records, dir + "_data.jsonl");
  auto loaded = load_dataset(dir + "_data.jsonl", spec);
  REQUIRE(loaded.size() == records.size());
  for (size_t i = 0; i < records.size(); ++i) {
    CHECK(loaded[i].id == records[i].id);
    CHECK(loaded[i].cell == records[i].cell);
  }

  FILE* f = std::fopen((dir + "_bad.jsonl").c_str(), "w");
  std::fputs("{\"id\": 0, \"n_nodes\": 2}\n", f);
  std::fclose(f);
  CHECK_THROWS_AS(load_dataset(dir + "_bad.jsonl", spec), ParseError);

  std::remove((dir + "_spec.json").c_str());
  std::remove((dir + "_data.jsonl").c_str());
  std::remove((dir + "_bad.jsonl").c_str());
}

TEST_SUITE_END();
