#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lnas/common.hpp"

// Cell-based architecture search spaces: fixed-size DAG encodings, validity
// rules, exact canonicalization, enumeration and sampling.
//
// A cell is a DAG on at most N nodes. Node 0 carries the input label (DARTS-style
// cells pin two input rows), the last active node carries the output label, and
// everything in between is a compute op from the space vocabulary. Cells are
// stored at fixed shape: N x N strictly upper-triangular adjacency and one op
// label per row, with unused trailing rows zeroed out.

namespace lnas::arch {

struct UnknownOperation : Error { using Error::Error; };
struct TooManyNodes : Error { using Error::Error; };
struct NotUpperTriangular : Error { using Error::Error; };
struct MalformedOneHot : Error { using Error::Error; };
struct SpecMismatch : Error { using Error::Error; };
struct SamplingExhausted : Error { using Error::Error; };
struct DeadEnd : Error { using Error::Error; };
struct TooLargeForExact : Error { using Error::Error; };
struct SpaceTooLarge : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };

enum class SpaceKind { node_op, edge_op, darts, synthetic };

std::string to_string(SpaceKind k);
SpaceKind space_kind_from_string(const std::string& s);

struct SearchSpaceSpec {
  std::string name;
  SpaceKind kind = SpaceKind::synthetic;
  int max_nodes = 5;                  // N: fixed matrix size, padding included
  std::vector<std::string> op_vocab;  // input label first, output label last
  int max_edges = -1;                 // -1 = unbounded

  int num_ops() const { return int(op_vocab.size()); }
  bool operator==(const SearchSpaceSpec&) const = default;
  std::string fingerprint() const;  // stable identity string for caches/manifests
};

SearchSpaceSpec synthetic_spec(int n_nodes = 5, int n_compute_ops = 3, int max_edges = 6);
SearchSpaceSpec nb101_spec();
SearchSpaceSpec nb201_spec();  // node-op form of the edge-op space (8 nodes, 7 labels)
SearchSpaceSpec darts_spec();

// Number of pinned input rows at the top of the matrix (2 for DARTS-style cells).
int input_pins(const SearchSpaceSpec& spec);

struct CellGraph {
  int N = 0;
  int K = 0;
  std::vector<uint8_t> adj;  // N*N row-major, strictly upper-triangular, 0/1
  std::vector<int16_t> ops;  // length N; vocab index per row, -1 for padding rows

  uint8_t at(int i, int j) const { return adj[size_t(i) * N + j]; }
  void set(int i, int j, uint8_t v) { adj[size_t(i) * N + j] = v; }
  int active_nodes() const;
  int edge_count() const;
  bool operator==(const CellGraph&) const = default;
};

// Builds a cell from op names (one per active node) and an edge list (i < j).
CellGraph make_cell(const SearchSpaceSpec& spec, const std::vector<std::string>& op_names,
                    const std::vector<std::pair<int, int>>& edges);

// Fixed-shape one-hot encoding. X is N x K row-major; padding rows are all zero.
struct EncodedCell {
  int N = 0;
  int K = 0;
  std::vector<uint8_t> A;
  std::vector<uint8_t> X;
  bool operator==(const EncodedCell&) const = default;
};

EncodedCell encode_cell(const CellGraph& cell, const SearchSpaceSpec& spec);

// Inverse of encode_cell with structural checks: strictly upper-triangular binary
// adjacency, one-hot or all-zero rows, padding trailing and edge-free.
CellGraph decode_cell(const EncodedCell& enc, const SearchSpaceSpec& spec);

struct RuleFailure {
  std::string rule;
  std::string detail;
};

struct ValidityReport {
  bool valid = false;
  std::vector<RuleFailure> failures;
};

ValidityReport validate(const CellGraph& cell, const SearchSpaceSpec& spec);

// Exact canonical key: lexicographic minimum of the serialized cell over all
// relabelings of intermediate nodes that keep the adjacency upper-triangular.
// Input/output pins stay put. Throws TooLargeForExact when N > 8.
CanonicalKey canonical_hash(const CellGraph& cell, const SearchSpaceSpec& spec);

// Hamming distance under the fixed node ordering: differing upper-triangle
// adjacency entries plus differing row labels (padding counts as its own label).
int edit_distance(const CellGraph& a, const CellGraph& b);

// Valid cell drawn uniformly. Enumerable kinds (synthetic, edge_op) sample
// uniformly over canonical classes via the cached enumeration; other kinds use
// rejection (node_op) or constructive proposals with rejection (darts).
CellGraph uniform_sample(const SearchSpaceSpec& spec, Rng& rng);
CellGraph uniform_sample(const SearchSpaceSpec& spec, uint64_t seed);

// All valid, canonically distinct cells in deterministic order. Cached per spec.
// Throws SpaceTooLarge for kinds/sizes that cannot be enumerated exhaustively.
const std::vector<CellGraph>& enumerate_space(const SearchSpaceSpec& spec);

// Uniform walk over valid cells where each step changes exactly one matrix entry
// (one adjacency bit or one op label) and never returns to the immediately
// preceding cell. Result has steps+1 entries, starting with `start`.
std::vector<CellGraph> random_walk(const CellGraph& start, int steps,
                                   const SearchSpaceSpec& spec, uint64_t seed);

// Edge-op cell -> node-op cell: one node per original edge in lexicographic edge
// order ((0,1),(0,2),(0,3),(1,2),(1,3),(2,3)), plus input and output nodes.
// edge_ops holds vocabulary indices 0..4 into the five edge operations.
CellGraph nb201_to_nodeop(const std::array<int, 6>& edge_ops, const SearchSpaceSpec& spec);

// ---- file formats ----------------------------------------------------------
// Space spec: single JSON object. Dataset: one JSON record per line with
// {id, n_nodes, adjacency (row-major upper-triangle bit string), ops}.

void save_spec(const SearchSpaceSpec& spec, const std::string& path);
SearchSpaceSpec load_spec(const std::string& path);

struct DatasetRecord {
  int64_t id = 0;
  CellGraph cell;
};

void save_dataset(const std::vector<DatasetRecord>& records, const std::string& path);
std::vector<DatasetRecord> load_dataset(const std::string& path, const SearchSpaceSpec& spec);

// Enumerates the space and assigns sequential ids.
std::vector<DatasetRecord> make_dataset(const SearchSpaceSpec& spec);

}  // namespace lnas::arch
