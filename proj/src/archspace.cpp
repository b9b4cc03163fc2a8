#include "lnas/archspace.hpp"

#include <algorithm>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <sstream>
#include <unordered_set>

#include <nlohmann/json.hpp>

using json = nlohmann::json;

namespace lnas::arch {

namespace {

// Index of pair (i, j), i < j, in the row-major strict upper triangle.
inline int ut_index(int N, int i, int j) {
  return i * (N - 1) - i * (i - 1) / 2 + (j - i - 1);
}

inline int ut_size(int N) { return N * (N - 1) / 2; }

std::vector<std::string> generic_vocab(int n_compute) {
  // Three compute ops mirror the usual conv/conv/pool flavor; larger vocabularies
  // fall back to numbered names.
  if (n_compute == 3) return {"input", "conv1x1", "conv3x3", "maxpool3x3", "output"};
  std::vector<std::string> v{"input"};
  for (int i = 0; i < n_compute; ++i) v.push_back("op" + std::to_string(i + 1));
  v.push_back("output");
  return v;
}

// Transformed topology of the 4-node edge-op space: one node per original edge
// in lexicographic order, plus input (0) and output (7).
const std::vector<std::pair<int, int>>& edge_op_topology() {
  static const std::vector<std::pair<int, int>> edges = {
      {0, 1}, {0, 2}, {0, 3}, {1, 4}, {1, 5}, {2, 6}, {4, 6}, {3, 7}, {5, 7}, {6, 7}};
  return edges;
}

struct Reach {
  std::vector<char> from_input;
  std::vector<char> to_output;
};

Reach reachability(const CellGraph& cell, int source, int sink) {
  const int N = cell.N;
  Reach r{std::vector<char>(N, 0), std::vector<char>(N, 0)};
  r.from_input[source] = 1;
  for (int i = 0; i < N; ++i) {
    if (!r.from_input[i]) continue;
    for (int j = i + 1; j < N; ++j)
      if (cell.at(i, j)) r.from_input[j] = 1;
  }
  r.to_output[sink] = 1;
  for (int j = sink; j >= 0; --j) {
    if (!r.to_output[j]) continue;
    for (int i = 0; i < j; ++i)
      if (cell.at(i, j)) r.to_output[i] = 1;
  }
  return r;
}

void check_shape(const CellGraph& cell, const SearchSpaceSpec& spec) {
  if (cell.N != spec.max_nodes || cell.K != spec.num_ops())
    throw SpecMismatch("cell shape (" + std::to_string(cell.N) + "," + std::to_string(cell.K) +
                       ") does not match spec '" + spec.name + "' (" +
                       std::to_string(spec.max_nodes) + "," + std::to_string(spec.num_ops()) + ")");
}

// Structural checks shared by every kind. Returns rule failures; cheap enough to
// run inside validate() even though decode_cell enforces the same conditions.
void structural_failures(const CellGraph& cell, std::vector<RuleFailure>& out) {
  const int N = cell.N;
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      uint8_t v = cell.at(i, j);
      if (v > 1) {
        out.push_back({"upper-triangular", "non-binary adjacency entry at (" + std::to_string(i) +
                                               "," + std::to_string(j) + ")"});
        return;
      }
      if (v && j <= i) {
        out.push_back({"upper-triangular", "entry on or below the diagonal at (" +
                                               std::to_string(i) + "," + std::to_string(j) + ")"});
        return;
      }
    }
  }
  bool padding_seen = false;
  for (int i = 0; i < N; ++i) {
    if (cell.ops[i] < 0) {
      padding_seen = true;
      for (int j = 0; j < N; ++j) {
        if (cell.at(i, j) || cell.at(j, i)) {
          out.push_back({"padding-edges", "padding row " + std::to_string(i) + " has an edge"});
          return;
        }
      }
    } else if (padding_seen) {
      out.push_back({"padding-trailing", "active row " + std::to_string(i) + " after padding"});
      return;
    }
  }
}

CellGraph fresh_cell(const SearchSpaceSpec& spec) {
  CellGraph c;
  c.N = spec.max_nodes;
  c.K = spec.num_ops();
  c.adj.assign(size_t(c.N) * c.N, 0);
  c.ops.assign(c.N, -1);
  return c;
}

}  // namespace

std::string to_string(SpaceKind k) {
  switch (k) {
    case SpaceKind::node_op: return "node_op";
    case SpaceKind::edge_op: return "edge_op";
    case SpaceKind::darts: return "darts";
    case SpaceKind::synthetic: return "synthetic";
  }
  throw Error("unreachable space kind");
}

SpaceKind space_kind_from_string(const std::string& s) {
  if (s == "node_op") return SpaceKind::node_op;
  if (s == "edge_op") return SpaceKind::edge_op;
  if (s == "darts") return SpaceKind::darts;
  if (s == "synthetic") return SpaceKind::synthetic;
  throw ParseError("unknown space kind '" + s + "'");
}

std::string SearchSpaceSpec::fingerprint() const {
  std::string s = name + "|" + arch::to_string(kind) + "|" + std::to_string(max_nodes) + "|" +
                  std::to_string(max_edges) + "|";
  for (const auto& op : op_vocab) s += op + ",";
  return s;
}

SearchSpaceSpec synthetic_spec(int n_nodes, int n_compute_ops, int max_edges) {
  SearchSpaceSpec s;
  s.name = "synthetic" + std::to_string(n_nodes);
  s.kind = SpaceKind::synthetic;
  s.max_nodes = n_nodes;
  s.op_vocab = generic_vocab(n_compute_ops);
  s.max_edges = max_edges;
  return s;
}

SearchSpaceSpec nb101_spec() {
  SearchSpaceSpec s;
  s.name = "nb101";
  s.kind = SpaceKind::node_op;
  s.max_nodes = 7;
  s.op_vocab = {"input", "conv1x1", "conv3x3", "maxpool3x3", "output"};
  s.max_edges = 9;
  return s;
}

SearchSpaceSpec nb201_spec() {
  SearchSpaceSpec s;
  s.name = "nb201";
  s.kind = SpaceKind::edge_op;
  s.max_nodes = 8;
  s.op_vocab = {"input", "conv1x1", "conv3x3", "avgpool3x3", "skip", "zero", "output"};
  s.max_edges = -1;
  return s;
}

SearchSpaceSpec darts_spec() {
  SearchSpaceSpec s;
  s.name = "darts";
  s.kind = SpaceKind::darts;
  s.max_nodes = 11;
  s.op_vocab = {"c_km2",       "c_km1",       "zero",        "maxpool3x3",
                "avgpool3x3",  "identity",    "sepconv3x3",  "sepconv5x5",
                "dilconv3x3",  "dilconv5x5",  "c_k"};
  s.max_edges = -1;
  return s;
}

int input_pins(const SearchSpaceSpec& spec) { return spec.kind == SpaceKind::darts ? 2 : 1; }

int CellGraph::active_nodes() const {
  int n = 0;
  for (int i = 0; i < N; ++i)
    if (ops[i] >= 0) ++n;
  return n;
}

int CellGraph::edge_count() const {
  int e = 0;
  for (const auto v : adj) e += v != 0;
  return e;
}

CellGraph make_cell(const SearchSpaceSpec& spec, const std::vector<std::string>& op_names,
                    const std::vector<std::pair<int, int>>& edges) {
  const int n = int(op_names.size());
  if (n > spec.max_nodes)
    throw TooManyNodes(std::to_string(n) + " nodes exceed spec limit " +
                       std::to_string(spec.max_nodes));
  CellGraph cell = fresh_cell(spec);
  for (int i = 0; i < n; ++i) {
    auto it = std::find(spec.op_vocab.begin(), spec.op_vocab.end(), op_names[i]);
    if (it == spec.op_vocab.end())
      throw UnknownOperation("op '" + op_names[i] + "' not in vocabulary of '" + spec.name + "'");
    cell.ops[i] = int16_t(it - spec.op_vocab.begin());
  }
  for (auto [i, j] : edges) {
    if (i < 0 || j >= n)
      throw TooManyNodes("edge (" + std::to_string(i) + "," + std::to_string(j) +
                         ") references a node outside the active range");
    if (i >= j)
      throw NotUpperTriangular("edge (" + std::to_string(i) + "," + std::to_string(j) +
                               ") is not strictly upper-triangular");
    cell.set(i, j, 1);
  }
  return cell;
}

EncodedCell encode_cell(const CellGraph& cell, const SearchSpaceSpec& spec) {
  check_shape(cell, spec);
  const int N = cell.N, K = cell.K;
  for (int i = 0; i < N; ++i) {
    if (cell.ops[i] < -1 || cell.ops[i] >= K)
      throw UnknownOperation("row " + std::to_string(i) + " has op index " +
                             std::to_string(cell.ops[i]));
    for (int j = 0; j <= i; ++j)
      if (cell.at(i, j))
        throw NotUpperTriangular("entry at (" + std::to_string(i) + "," + std::to_string(j) + ")");
  }
  EncodedCell enc;
  enc.N = N;
  enc.K = K;
  enc.A = cell.adj;
  enc.X.assign(size_t(N) * K, 0);
  for (int i = 0; i < N; ++i)
    if (cell.ops[i] >= 0) enc.X[size_t(i) * K + cell.ops[i]] = 1;
  return enc;
}

CellGraph decode_cell(const EncodedCell& enc, const SearchSpaceSpec& spec) {
  if (enc.N != spec.max_nodes || enc.K != spec.num_ops())
    throw SpecMismatch("encoded shape (" + std::to_string(enc.N) + "," + std::to_string(enc.K) +
                       ") does not match spec '" + spec.name + "'");
  const int N = enc.N, K = enc.K;
  if (enc.A.size() != size_t(N) * N || enc.X.size() != size_t(N) * K)
    throw SpecMismatch("encoded buffers have the wrong length");
  CellGraph cell = fresh_cell(spec);
  for (int i = 0; i < N; ++i) {
    for (int j = 0; j < N; ++j) {
      uint8_t v = enc.A[size_t(i) * N + j];
      if (v > 1 || (v && j <= i))
        throw NotUpperTriangular("adjacency entry at (" + std::to_string(i) + "," +
                                 std::to_string(j) + ")");
      cell.adj[size_t(i) * N + j] = v;
    }
  }
  int padding_from = -1;
  for (int i = 0; i < N; ++i) {
    int ones = 0, op = -1;
    for (int k = 0; k < K; ++k) {
      uint8_t v = enc.X[size_t(i) * K + k];
      if (v > 1) throw MalformedOneHot("op entry at (" + std::to_string(i) + "," + std::to_string(k) + ") is not 0/1");
      if (v) {
        ++ones;
        op = k;
      }
    }
    if (ones > 1) throw MalformedOneHot("row " + std::to_string(i) + " has " + std::to_string(ones) + " ones");
    if (ones == 0) {
      if (padding_from < 0) padding_from = i;
      for (int j = 0; j < N; ++j)
        if (cell.at(i, j) || cell.at(j, i))
          throw MalformedOneHot("all-zero op row " + std::to_string(i) + " has nonzero adjacency");
    } else {
      if (padding_from >= 0)
        throw MalformedOneHot("one-hot row " + std::to_string(i) + " after padding row " +
                              std::to_string(padding_from));
      cell.ops[i] = int16_t(op);
    }
  }
  return cell;
}

ValidityReport validate(const CellGraph& cell, const SearchSpaceSpec& spec) {
  check_shape(cell, spec);
  ValidityReport report;
  auto& fail = report.failures;
  structural_failures(cell, fail);
  if (!fail.empty()) {
    report.valid = false;
    return report;
  }

  const int N = cell.N, K = cell.K;
  const int active = cell.active_nodes();
  const int last = active - 1;  // padding is trailing, so active rows are 0..last

  auto indegree = [&](int j) {
    int d = 0;
    for (int i = 0; i < j; ++i) d += cell.at(i, j) != 0;
    return d;
  };
  auto outdegree = [&](int i) {
    int d = 0;
    for (int j = i + 1; j < N; ++j) d += cell.at(i, j) != 0;
    return d;
  };

  if (spec.kind == SpaceKind::node_op || spec.kind == SpaceKind::synthetic) {
    // Synthetic spaces fix the node count; node-op benchmark cells may use
    // fewer rows than the matrix provides (pruned modules keep their padding).
    if (spec.kind == SpaceKind::synthetic && active != N)
      fail.push_back({"node-count", std::to_string(active) + " active nodes, spec requires " +
                                        std::to_string(N)});
    if (active < 2) {
      fail.push_back({"node-count", "fewer than two active nodes"});
      report.valid = false;
      return report;
    }
    if (cell.ops[0] != 0) fail.push_back({"first-node-input", "row 0 is not the input label"});
    if (cell.ops[last] != K - 1)
      fail.push_back({"last-node-output", "last active row is not the output label"});
    for (int i = 1; i < last; ++i)
      if (cell.ops[i] < 1 || cell.ops[i] > K - 2)
        fail.push_back({"intermediate-ops", "row " + std::to_string(i) + " is not a compute op"});
    if (spec.max_edges >= 0 && cell.edge_count() > spec.max_edges)
      fail.push_back({"edge-budget", std::to_string(cell.edge_count()) + " edges > " +
                                         std::to_string(spec.max_edges)});
    Reach r = reachability(cell, 0, last);
    for (int i = 0; i <= last; ++i)
      if (!r.from_input[i] || !r.to_output[i]) {
        fail.push_back({"io-path", "node " + std::to_string(i) + " is not on an input->output path"});
        break;
      }
  } else if (spec.kind == SpaceKind::edge_op) {
    if (active != N)
      fail.push_back({"node-count", std::to_string(active) + " active nodes, expected " +
                                        std::to_string(N)});
    if (active > 0 && cell.ops[0] != 0)
      fail.push_back({"first-node-input", "row 0 is not the input label"});
    if (active > 0 && cell.ops[last] != K - 1)
      fail.push_back({"last-node-output", "last active row is not the output label"});
    CellGraph expect = fresh_cell(spec);
    for (auto [i, j] : edge_op_topology()) expect.set(i, j, 1);
    if (cell.adj != expect.adj)
      fail.push_back({"fixed-topology", "adjacency differs from the fixed edge-op wiring"});
    for (int i = 1; i < last; ++i)
      if (cell.ops[i] < 1 || cell.ops[i] > K - 2)
        fail.push_back({"edge-ops", "row " + std::to_string(i) + " is not an edge op"});
  } else {  // darts
    if (N < 4) throw SpecMismatch("darts-style specs need at least 4 nodes");
    if (cell.ops[0] != 0 || cell.ops[1] != 1)
      fail.push_back({"input-pair", "rows 0,1 must carry the two input labels in order"});
    if (cell.ops[N - 1] != K - 1)
      fail.push_back({"output-last", "row " + std::to_string(N - 1) + " is not the output label"});
    for (int i = 2; i < N - 1; ++i)
      if (cell.ops[i] < 2 || cell.ops[i] > K - 2)
        fail.push_back({"intermediate-ops", "row " + std::to_string(i) + " is not a compute op"});
    for (int j = 2; j < N; ++j)
      if (indegree(j) == 0) {
        fail.push_back({"no-orphan-nodes", "node " + std::to_string(j) + " has no predecessor"});
        break;
      }
    for (int i = 0; i < N - 1; ++i)
      if (outdegree(i) == 0) {
        fail.push_back({"no-dead-end-nodes", "node " + std::to_string(i) + " has no successor"});
        break;
      }
    for (int i = 2; i < N - 1; ++i)
      if (indegree(i) != 2) {
        fail.push_back({"fanin-two", "intermediate node " + std::to_string(i) + " has in-degree " +
                                         std::to_string(indegree(i))});
        break;
      }
  }

  report.valid = fail.empty();
  return report;
}

CanonicalKey canonical_hash(const CellGraph& cell, const SearchSpaceSpec& spec) {
  check_shape(cell, spec);
  if (spec.max_nodes > 8)
    throw TooLargeForExact("exact canonicalization supports at most 8 nodes, spec has " +
                           std::to_string(spec.max_nodes));
  const int N = cell.N;
  const int active = cell.active_nodes();
  const int pins = input_pins(spec);

  std::vector<int> inter;
  for (int i = pins; i < active - 1; ++i) inter.push_back(i);

  std::vector<std::pair<int, int>> edges;
  for (int i = 0; i < N; ++i)
    for (int j = i + 1; j < N; ++j)
      if (cell.at(i, j)) edges.emplace_back(i, j);

  const size_t ops_off = 2;
  const size_t bits_off = ops_off + size_t(N);
  const size_t total = bits_off + size_t((ut_size(N) + 7) / 8);

  std::vector<uint8_t> base(total, 0);
  base[0] = uint8_t(N);
  base[1] = uint8_t(cell.K);

  std::vector<uint8_t> best, cand;
  std::vector<int> m(N);
  std::vector<int> perm = inter;

  do {
    for (int i = 0; i < N; ++i) m[i] = i;
    for (size_t i = 0; i < inter.size(); ++i) m[inter[i]] = perm[i];

    bool ok = true;
    for (auto [i, j] : edges) {
      if (m[i] >= m[j]) {
        ok = false;
        break;
      }
    }
    if (!ok) continue;

    cand = base;
    for (int i = 0; i < N; ++i) cand[ops_off + m[i]] = uint8_t(cell.ops[i] + 1);
    for (auto [i, j] : edges) {
      int idx = ut_index(N, m[i], m[j]);
      cand[bits_off + idx / 8] |= uint8_t(1u << (idx % 8));
    }
    if (best.empty() || cand < best) best = cand;
  } while (std::next_permutation(perm.begin(), perm.end()));

  if (best.empty())
    throw Error("canonical_hash: no upper-triangular relabeling found");  // identity always works
  return fnv128(best.data(), best.size());
}

int edit_distance(const CellGraph& a, const CellGraph& b) {
  if (a.N != b.N || a.K != b.K)
    throw SpecMismatch("edit_distance requires cells of identical shape");
  int d = 0;
  for (int i = 0; i < a.N; ++i)
    for (int j = i + 1; j < a.N; ++j) d += a.at(i, j) != b.at(i, j);
  for (int i = 0; i < a.N; ++i) d += a.ops[i] != b.ops[i];
  return d;
}

namespace {

std::vector<CellGraph> enumerate_synthetic(const SearchSpaceSpec& spec) {
  const int N = spec.max_nodes, K = spec.num_ops();
  const int bits = ut_size(N);
  if (bits > 20)
    throw SpaceTooLarge("synthetic enumeration capped at 20 adjacency bits, spec has " +
                        std::to_string(bits));
  const int n_compute = K - 2;
  const int n_inter = N - 2;

  std::vector<CellGraph> out;
  std::unordered_set<Digest128> seen;

  for (uint32_t mask = 0; mask < (1u << bits); ++mask) {
    CellGraph cell = fresh_cell(spec);
    cell.ops[0] = 0;
    cell.ops[N - 1] = int16_t(K - 1);
    for (int i = 1; i < N - 1; ++i) cell.ops[i] = 1;
    int b = 0;
    for (int i = 0; i < N; ++i)
      for (int j = i + 1; j < N; ++j, ++b)
        if (mask & (1u << b)) cell.set(i, j, 1);
    if (!validate(cell, spec).valid) continue;  // ops rows are all legal, so this is topology-only

    // Odometer over compute-op assignments for the intermediate rows.
    std::vector<int> t(size_t(n_inter), 0);
    while (true) {
      for (int i = 0; i < n_inter; ++i) cell.ops[1 + i] = int16_t(1 + t[i]);
      CanonicalKey key = canonical_hash(cell, spec);
      if (seen.insert(key).second) out.push_back(cell);
      int pos = n_inter - 1;
      while (pos >= 0 && t[pos] == n_compute - 1) t[pos--] = 0;
      if (pos < 0) break;
      ++t[pos];
    }
  }
  return out;
}

std::vector<CellGraph> enumerate_edge_op(const SearchSpaceSpec& spec) {
  const int n_edge_ops = spec.num_ops() - 2;
  std::vector<CellGraph> out;
  std::unordered_set<Digest128> seen;
  std::array<int, 6> t{};
  while (true) {
    CellGraph cell = nb201_to_nodeop(t, spec);
    CanonicalKey key = canonical_hash(cell, spec);
    if (seen.insert(key).second) out.push_back(cell);
    int pos = 5;
    while (pos >= 0 && t[pos] == n_edge_ops - 1) t[pos--] = 0;
    if (pos < 0) break;
    ++t[pos];
  }
  return out;
}

std::mutex g_space_cache_mutex;
std::map<std::string, std::unique_ptr<std::vector<CellGraph>>> g_space_cache;

}  // namespace

const std::vector<CellGraph>& enumerate_space(const SearchSpaceSpec& spec) {
  std::scoped_lock lock(g_space_cache_mutex);
  auto it = g_space_cache.find(spec.fingerprint());
  if (it != g_space_cache.end()) return *it->second;

  std::vector<CellGraph> cells;
  switch (spec.kind) {
    case SpaceKind::synthetic: cells = enumerate_synthetic(spec); break;
    case SpaceKind::edge_op: cells = enumerate_edge_op(spec); break;
    default:
      throw SpaceTooLarge("space kind '" + to_string(spec.kind) + "' is not enumerable");
  }
  auto owned = std::make_unique<std::vector<CellGraph>>(std::move(cells));
  auto& ref = *owned;
  g_space_cache.emplace(spec.fingerprint(), std::move(owned));
  return ref;
}

CellGraph uniform_sample(const SearchSpaceSpec& spec, Rng& rng) {
  if (spec.kind == SpaceKind::synthetic || spec.kind == SpaceKind::edge_op) {
    const auto& all = enumerate_space(spec);
    if (all.empty()) throw SamplingExhausted("space '" + spec.name + "' has no valid cells");
    return all[size_t(rng.bounded(all.size()))];
  }

  const int N = spec.max_nodes, K = spec.num_ops();
  if (spec.kind == SpaceKind::node_op) {
    for (int attempt = 0; attempt < 200000; ++attempt) {
      CellGraph cell = fresh_cell(spec);
      cell.ops[0] = 0;
      cell.ops[N - 1] = int16_t(K - 1);
      for (int i = 1; i < N - 1; ++i) cell.ops[i] = int16_t(1 + rng.bounded(uint64_t(K - 2)));
      for (int i = 0; i < N; ++i)
        for (int j = i + 1; j < N; ++j)
          if (rng.next_u64() & 1) cell.set(i, j, 1);
      if (validate(cell, spec).valid) return cell;
    }
    throw SamplingExhausted("node-op rejection sampling failed for '" + spec.name + "'");
  }

  // DARTS-style: propose two predecessors per intermediate, wire successor-free
  // intermediates into the output, retry until the validity rules hold (the
  // proposal can leave an input row without a successor).
  for (int attempt = 0; attempt < 10000; ++attempt) {
    CellGraph cell = fresh_cell(spec);
    cell.ops[0] = 0;
    cell.ops[1] = 1;
    cell.ops[N - 1] = int16_t(K - 1);
    for (int i = 2; i < N - 1; ++i) {
      cell.ops[i] = int16_t(2 + rng.bounded(uint64_t(K - 3)));
      int a = int(rng.bounded(uint64_t(i)));
      int b = int(rng.bounded(uint64_t(i - 1)));
      if (b >= a) ++b;
      cell.set(a, i, 1);
      cell.set(b, i, 1);
    }
    for (int i = 2; i < N - 1; ++i) {
      bool has_succ = false;
      for (int j = i + 1; j < N - 1; ++j) has_succ |= cell.at(i, j) != 0;
      if (!has_succ) cell.set(i, N - 1, 1);
    }
    if (validate(cell, spec).valid) return cell;
  }
  throw SamplingExhausted("darts-style sampling failed for '" + spec.name + "'");
}

CellGraph uniform_sample(const SearchSpaceSpec& spec, uint64_t seed) {
  Rng rng(seed);
  return uniform_sample(spec, rng);
}

std::vector<CellGraph> random_walk(const CellGraph& start, int steps,
                                   const SearchSpaceSpec& spec, uint64_t seed) {
  if (steps < 0) throw Error("random_walk: negative step count");
  if (!validate(start, spec).valid) throw Error("random_walk: start cell is not valid");

  Rng rng(seed);
  std::vector<CellGraph> path{start};
  const CellGraph* prev = nullptr;

  for (int t = 0; t < steps; ++t) {
    const CellGraph cur = path.back();
    std::vector<CellGraph> candidates;

    for (int i = 0; i < cur.N; ++i) {
      for (int j = i + 1; j < cur.N; ++j) {
        CellGraph cand = cur;
        cand.set(i, j, cand.at(i, j) ? 0 : 1);
        if (prev && cand == *prev) continue;
        if (validate(cand, spec).valid) candidates.push_back(std::move(cand));
      }
    }
    for (int i = 0; i < cur.N; ++i) {
      for (int k = -1; k < cur.K; ++k) {
        if (int16_t(k) == cur.ops[i]) continue;
        CellGraph cand = cur;
        cand.ops[i] = int16_t(k);
        if (prev && cand == *prev) continue;
        if (validate(cand, spec).valid) candidates.push_back(std::move(cand));
      }
    }

    if (candidates.empty())
      throw DeadEnd("no valid single-edit neighbor at walk step " + std::to_string(t));
    size_t pick = size_t(rng.bounded(candidates.size()));
    path.push_back(candidates[pick]);
    prev = &path[path.size() - 2];
  }
  return path;
}

CellGraph nb201_to_nodeop(const std::array<int, 6>& edge_ops, const SearchSpaceSpec& spec) {
  if (spec.kind != SpaceKind::edge_op)
    throw SpecMismatch("nb201_to_nodeop needs an edge-op spec, got '" + to_string(spec.kind) + "'");
  if (spec.max_nodes != 8)
    throw SpecMismatch("edge-op transform is defined for 8 transformed nodes");
  const int K = spec.num_ops();
  for (int e = 0; e < 6; ++e)
    if (edge_ops[e] < 0 || edge_ops[e] >= K - 2)
      throw UnknownOperation("edge op index " + std::to_string(edge_ops[e]) + " out of range");

  CellGraph cell = fresh_cell(spec);
  cell.ops[0] = 0;
  cell.ops[7] = int16_t(K - 1);
  for (int e = 0; e < 6; ++e) cell.ops[1 + e] = int16_t(1 + edge_ops[e]);
  for (auto [i, j] : edge_op_topology()) cell.set(i, j, 1);
  return cell;
}

// ---- file IO ----------------------------------------------------------------

void save_spec(const SearchSpaceSpec& spec, const std::string& path) {
  json j{{"name", spec.name},
         {"kind", to_string(spec.kind)},
         {"max_nodes", spec.max_nodes},
         {"op_vocab", spec.op_vocab},
         {"max_edges", spec.max_edges}};
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  out << j.dump(2) << "\n";
}

SearchSpaceSpec load_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  json j = json::parse(in, nullptr, false);
  if (j.is_discarded()) throw ParseError("'" + path + "' is not valid JSON");
  SearchSpaceSpec spec;
  try {
    spec.name = j.at("name").get<std::string>();
    spec.kind = space_kind_from_string(j.at("kind").get<std::string>());
    spec.max_nodes = j.at("max_nodes").get<int>();
    spec.op_vocab = j.at("op_vocab").get<std::vector<std::string>>();
    spec.max_edges = j.at("max_edges").get<int>();
  } catch (const json::exception& e) {
    throw ParseError("'" + path + "': " + e.what());
  }
  if (spec.max_nodes < 2 || spec.num_ops() < 3)
    throw ParseError("'" + path + "': spec needs at least 2 nodes and 3 labels");
  return spec;
}

void save_dataset(const std::vector<DatasetRecord>& records, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (const auto& rec : records) {
    const CellGraph& c = rec.cell;
    std::string bits(size_t(ut_size(c.N)), '0');
    for (int i = 0; i < c.N; ++i)
      for (int j = i + 1; j < c.N; ++j)
        if (c.at(i, j)) bits[size_t(ut_index(c.N, i, j))] = '1';
    std::vector<int> ops;
    for (int i = 0; i < c.N && c.ops[i] >= 0; ++i) ops.push_back(c.ops[i]);
    json j{{"id", rec.id}, {"n_nodes", int(ops.size())}, {"adjacency", bits}, {"ops", ops}};
    out << j.dump() << "\n";
  }
}

std::vector<DatasetRecord> load_dataset(const std::string& path, const SearchSpaceSpec& spec) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  const int N = spec.max_nodes, K = spec.num_ops();
  std::vector<DatasetRecord> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, false);
    if (j.is_discarded()) throw ParseError(path + ":" + std::to_string(lineno) + ": bad JSON");
    DatasetRecord rec;
    try {
      rec.id = j.at("id").get<int64_t>();
      int n_nodes = j.at("n_nodes").get<int>();
      std::string bits = j.at("adjacency").get<std::string>();
      std::vector<int> ops = j.at("ops").get<std::vector<int>>();
      if (n_nodes < 0 || n_nodes > N)
        throw SpecMismatch("n_nodes " + std::to_string(n_nodes) + " outside [0," +
                           std::to_string(N) + "]");
      if (int(ops.size()) != n_nodes) throw ParseError("ops length does not match n_nodes");
      if (int(bits.size()) != ut_size(N))
        throw ParseError("adjacency string length " + std::to_string(bits.size()) +
                         ", expected " + std::to_string(ut_size(N)));
      CellGraph cell = fresh_cell(spec);
      for (int i = 0; i < n_nodes; ++i) {
        if (ops[i] < 0 || ops[i] >= K)
          throw UnknownOperation("op index " + std::to_string(ops[i]) + " out of range");
        cell.ops[i] = int16_t(ops[i]);
      }
      int b = 0;
      for (int i = 0; i < N; ++i) {
        for (int jj = i + 1; jj < N; ++jj, ++b) {
          char ch = bits[size_t(b)];
          if (ch != '0' && ch != '1') throw ParseError("adjacency string has non-bit characters");
          if (ch == '1') {
            if (i >= n_nodes || jj >= n_nodes)
              throw MalformedOneHot("edge touches a padding row");
            cell.set(i, jj, 1);
          }
        }
      }
      rec.cell = std::move(cell);
    } catch (const json::exception& e) {
      throw ParseError(path + ":" + std::to_string(lineno) + ": " + e.what());
    }
    out.push_back(std::move(rec));
  }
  return out;
}

std::vector<DatasetRecord> make_dataset(const SearchSpaceSpec& spec) {
  const auto& cells = enumerate_space(spec);
  std::vector<DatasetRecord> out;
  out.reserve(cells.size());
  for (size_t i = 0; i < cells.size(); ++i) out.push_back({int64_t(i), cells[i]});
  return out;
}

}  // namespace lnas::arch
