#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "lnas/archspace.hpp"
#include "lnas/genmetrics.hpp"
#include "lnas/oracle.hpp"
#include "lnas/search.hpp"
#include "lnas/vgae.hpp"

// Command-line pipeline driver. One static JSON configuration file describes a
// run; each subcommand (gen, pretrain, embed, eval-pretrain, search, analyze,
// report) reads the config, consumes the inputs it names, and writes
// fixed-name outputs plus a per-command manifest into the output directory.
//
// Conventions:
//   - Relative paths inside the config resolve against the config file's
//     directory, so a run directory holding the config and all artifacts is
//     self-contained and relocatable.
//   - Every JSON output embeds the config digest; every output (any format) is
//     listed with a content digest in the command's manifest. Timestamps exist
//     only in manifests.
//   - Exit codes: 0 success, 2 configuration error (bad usage, unreadable or
//     invalid config, missing inputs; nothing is written), 3 runtime error
//     (error.json is written next to any partial outputs).
//   - LNAS_WORKERS caps worker threads for multi-run search and batch
//     embedding; results do not depend on the worker count.

namespace lnas::harness {

struct ConfigError : Error { using Error::Error; };
struct RuntimeFailure : Error { using Error::Error; };

inline constexpr int kExitOk = 0;
inline constexpr int kExitConfig = 2;
inline constexpr int kExitRuntime = 3;

struct SpaceConfig {
  std::string path;  // spec JSON on disk; empty -> built-in space below
  std::string name = "synthetic";  // synthetic | nb101 | nb201 | darts
  int nodes = 5;                   // synthetic knobs
  int ops = 3;
  int max_edges = 6;
};

struct OracleConfig {
  bool synthetic = true;
  std::string table = "oracle.jsonl";  // used when synthetic == false
};

struct SearchConfig {
  std::string method = "random";  // random | reinforce | dngo
  int runs = 1;
  std::vector<uint64_t> seeds;  // explicit per-run seeds; empty -> base_seed + i
  uint64_t base_seed = 0;
  double budget_seconds = 0.0;  // required, > 0
  int64_t query_budget = -1;    // -1 unlimited
  bool stop_on_best = false;    // stop a run once the space optimum is queried
  search::ReinforceHyper reinforce;
  search::DngoHyper dngo;
};

struct AnalyzeConfig {
  int n_prior = 1000;
  int64_t gp_n_train = 250;
  double gp_floor = 0.8;
  int gp_seeds = 10;
  int walk_steps = 1000;
  int walk_window = 10;
  std::vector<uint64_t> walk_seeds = {0, 1, 2};
  int max_edit = 5;  // rank correlation restricted to edit distances 1..max_edit
  int chain_length = 10;
  int chain_seeds = 20;
};

struct RunConfig {
  SpaceConfig space;
  std::string dataset = "dataset.jsonl";
  std::string external;  // external results file consumed by the import command
  OracleConfig oracle;
  std::string checkpoint = "checkpoint.bin";
  std::string embeddings = "embeddings.jsonl";
  std::string split = "split.json";
  uint64_t seed = 0;
  vgae::EncoderConfig encoder;
  vgae::TrainHyper vgae_hyper;  // hyper.seed mirrors `seed`
  SearchConfig search;
  AnalyzeConfig analyze;

  std::string digest;    // fnv128 hex of the effective (canonicalized) config
  std::string base_dir;  // directory the config file lives in

  // Canonical serialization of the effective config; digest = fnv128(this).
  std::string canonical_json() const;
  // Joins relative paths onto base_dir; absolute paths pass through.
  std::string resolve(const std::string& path) const;

  arch::SearchSpaceSpec load_space() const;
  oracle::Oracle load_oracle(const arch::SearchSpaceSpec& spec) const;
};

// Parses and validates config text. Unknown keys anywhere are errors. The
// optional override replaces `seed` before the digest is computed.
RunConfig parse_config(const std::string& text, const std::string& base_dir,
                       std::optional<uint64_t> seed_override = std::nullopt);
RunConfig load_config(const std::string& path,
                      std::optional<uint64_t> seed_override = std::nullopt);

// Worker threads for fan-out: LNAS_WORKERS when set (must parse to >= 1),
// otherwise hardware concurrency, never more than `jobs`, never less than 1.
int worker_count(int jobs);

// External benchmark results: one JSON object per line. Node-op style spaces
// take {"ops": [names], "edges": [[i, j], ...]}; edge-op spaces take
// {"edge_ops": [6 names]}. Every row carries validation_accuracy and
// test_accuracy in [0, 1] plus training_seconds > 0; unrecognized keys are
// ignored so converters can pass provenance through. Rows are keyed by the
// exact canonical form; the first row for a key wins, later ones count as
// duplicates, and rows violating the space rules are skipped.
struct ImportStats {
  int64_t rows = 0;
  int64_t imported = 0;
  int64_t duplicates = 0;
  int64_t invalid = 0;
};
struct ImportedTable {
  std::vector<arch::DatasetRecord> records;
  oracle::Oracle table;
  ImportStats stats;
};
ImportedTable import_external(const std::string& path, const arch::SearchSpaceSpec& spec);

// Stage commands. Each throws ConfigError for violated preconditions (missing
// inputs) and other lnas errors at runtime; on success all outputs plus
// manifest_<command>.json exist under out_dir.
void cmd_gen(const RunConfig& cfg, const std::string& out_dir);
void cmd_import(const RunConfig& cfg, const std::string& out_dir);
void cmd_pretrain(const RunConfig& cfg, const std::string& out_dir);
void cmd_embed(const RunConfig& cfg, const std::string& out_dir);
void cmd_eval_pretrain(const RunConfig& cfg, const std::string& out_dir);
void cmd_search(const RunConfig& cfg, const std::string& out_dir);
void cmd_analyze(const RunConfig& cfg, const std::string& out_dir);
void cmd_report(const RunConfig& cfg, const std::string& out_dir);

// Full CLI: parses argv, dispatches, maps failures to exit codes and
// machine-readable error records (stderr JSON always; error.json under the
// output directory for runtime failures).
int run_cli(int argc, const char* const* argv);

}  // namespace lnas::harness
