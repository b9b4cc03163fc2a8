#include "lnas/harness.hpp"

#include <algorithm>
#include <array>
#include <atomic>
#include <chrono>
#include <map>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <limits>
#include <numeric>
#include <optional>
#include <sstream>
#include <thread>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

namespace fs = std::filesystem;
using nlohmann::json;
using nlohmann::ordered_json;

namespace lnas::harness {

namespace {

// ---- small IO helpers ------------------------------------------------------

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::string& path, const std::string& content) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw RuntimeFailure("cannot write " + path);
  out << content;
  if (!out) throw RuntimeFailure("short write to " + path);
}

std::string iso_utc_now() {
  const std::time_t t =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt_double(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

// ---- config parsing --------------------------------------------------------

void check_keys(const json& j, std::initializer_list<const char*> allowed,
                const std::string& where) {
  for (const auto& [key, value] : j.items()) {
    (void)value;
    if (std::find_if(allowed.begin(), allowed.end(),
                     [&](const char* a) { return key == a; }) == allowed.end())
      throw ConfigError("unknown key \"" + key + "\" in " + where);
  }
}

const json* find(const json& j, const char* key) {
  auto it = j.find(key);
  return it == j.end() ? nullptr : &*it;
}

template <typename T>
T get_as(const json& j, const char* key, T fallback, const std::string& where) {
  const json* v = find(j, key);
  if (!v) return fallback;
  try {
    return v->get<T>();
  } catch (const json::exception&) {
    throw ConfigError(std::string("bad value for \"") + key + "\" in " + where);
  }
}

void parse_space(const json& j, SpaceConfig& out) {
  check_keys(j, {"path", "name", "nodes", "ops", "max_edges"}, "space");
  out.path = get_as<std::string>(j, "path", out.path, "space");
  out.name = get_as<std::string>(j, "name", out.name, "space");
  out.nodes = get_as<int>(j, "nodes", out.nodes, "space");
  out.ops = get_as<int>(j, "ops", out.ops, "space");
  out.max_edges = get_as<int>(j, "max_edges", out.max_edges, "space");
  if (out.path.empty()) {
    static const char* kNames[] = {"synthetic", "nb101", "nb201", "darts"};
    if (std::find_if(std::begin(kNames), std::end(kNames),
                     [&](const char* n) { return out.name == n; }) == std::end(kNames))
      throw ConfigError("space.name must be synthetic, nb101, nb201, or darts");
    if (out.nodes < 2) throw ConfigError("space.nodes must be >= 2");
    if (out.ops < 1) throw ConfigError("space.ops must be >= 1");
    if (out.max_edges < -1) throw ConfigError("space.max_edges must be >= -1");
  }
}

void parse_oracle(const json& j, OracleConfig& out) {
  check_keys(j, {"synthetic", "table"}, "oracle");
  out.synthetic = get_as<bool>(j, "synthetic", out.synthetic, "oracle");
  out.table = get_as<std::string>(j, "table", out.table, "oracle");
}

void parse_encoder(const json& j, vgae::EncoderConfig& out) {
  check_keys(j, {"hidden", "aggregation", "variational", "kl_weight"}, "encoder");
  out.hidden = get_as<std::vector<int64_t>>(j, "hidden", out.hidden, "encoder");
  if (out.hidden.empty()) throw ConfigError("encoder.hidden must be nonempty");
  for (int64_t h : out.hidden)
    if (h < 1) throw ConfigError("encoder.hidden entries must be >= 1");
  if (const json* v = find(j, "aggregation")) {
    try {
      out.aggregation = vgae::aggregation_from_string(v->get<std::string>());
    } catch (const std::exception&) {
      throw ConfigError("encoder.aggregation must be sum_eps or norm_avg");
    }
  }
  out.variational = get_as<bool>(j, "variational", out.variational, "encoder");
  out.kl_weight = get_as<double>(j, "kl_weight", out.kl_weight, "encoder");
  if (!(out.kl_weight >= 0.0)) throw ConfigError("encoder.kl_weight must be >= 0");
}

void parse_vgae(const json& j, vgae::TrainHyper& out) {
  check_keys(j,
             {"lr", "batch_size", "max_epochs", "min_epochs", "heldout_fraction",
              "stop_at_full_recon"},
             "vgae");
  out.lr = get_as<double>(j, "lr", out.lr, "vgae");
  out.batch_size = get_as<int>(j, "batch_size", out.batch_size, "vgae");
  out.max_epochs = get_as<int>(j, "max_epochs", out.max_epochs, "vgae");
  out.min_epochs = get_as<int>(j, "min_epochs", out.min_epochs, "vgae");
  out.heldout_fraction = get_as<double>(j, "heldout_fraction", out.heldout_fraction, "vgae");
  out.stop_at_full_recon =
      get_as<bool>(j, "stop_at_full_recon", out.stop_at_full_recon, "vgae");
  if (!(out.lr > 0.0)) throw ConfigError("vgae.lr must be > 0");
  if (out.batch_size < 1) throw ConfigError("vgae.batch_size must be >= 1");
  if (out.max_epochs < 1) throw ConfigError("vgae.max_epochs must be >= 1");
  if (out.min_epochs < 1) throw ConfigError("vgae.min_epochs must be >= 1");
  if (!(out.heldout_fraction > 0.0 && out.heldout_fraction < 1.0))
    throw ConfigError("vgae.heldout_fraction must be in (0, 1)");
}

void parse_reinforce(const json& j, search::ReinforceHyper& out) {
  check_keys(j,
             {"lstm_hidden", "action_dim", "lr", "archs_per_episode", "discount",
              "baseline", "bandit_mode", "ema_baseline", "ema_decay"},
             "search.reinforce");
  out.lstm_hidden = get_as<int64_t>(j, "lstm_hidden", out.lstm_hidden, "search.reinforce");
  out.action_dim = get_as<int64_t>(j, "action_dim", out.action_dim, "search.reinforce");
  out.lr = get_as<double>(j, "lr", out.lr, "search.reinforce");
  out.archs_per_episode =
      get_as<int>(j, "archs_per_episode", out.archs_per_episode, "search.reinforce");
  out.discount = get_as<double>(j, "discount", out.discount, "search.reinforce");
  out.baseline = get_as<double>(j, "baseline", out.baseline, "search.reinforce");
  out.bandit_mode = get_as<bool>(j, "bandit_mode", out.bandit_mode, "search.reinforce");
  out.ema_baseline = get_as<bool>(j, "ema_baseline", out.ema_baseline, "search.reinforce");
  out.ema_decay = get_as<double>(j, "ema_decay", out.ema_decay, "search.reinforce");
  if (out.lstm_hidden < 1) throw ConfigError("search.reinforce.lstm_hidden must be >= 1");
  if (out.action_dim < 1) throw ConfigError("search.reinforce.action_dim must be >= 1");
  if (!(out.lr > 0.0)) throw ConfigError("search.reinforce.lr must be > 0");
  if (out.archs_per_episode < 1)
    throw ConfigError("search.reinforce.archs_per_episode must be >= 1");
  if (!(out.discount >= 0.0 && out.discount <= 1.0))
    throw ConfigError("search.reinforce.discount must be in [0, 1]");
  if (!(out.ema_decay >= 0.0 && out.ema_decay < 1.0))
    throw ConfigError("search.reinforce.ema_decay must be in [0, 1)");
}

void parse_dngo(const json& j, search::DngoHyper& out) {
  check_keys(j,
             {"basis_hidden", "top_k_per_round", "retrain_epochs", "ei_incumbent",
              "running_incumbent", "init_samples", "lr"},
             "search.dngo");
  out.basis_hidden = get_as<int64_t>(j, "basis_hidden", out.basis_hidden, "search.dngo");
  out.top_k_per_round =
      get_as<int>(j, "top_k_per_round", out.top_k_per_round, "search.dngo");
  out.retrain_epochs = get_as<int>(j, "retrain_epochs", out.retrain_epochs, "search.dngo");
  out.ei_incumbent = get_as<double>(j, "ei_incumbent", out.ei_incumbent, "search.dngo");
  out.running_incumbent =
      get_as<bool>(j, "running_incumbent", out.running_incumbent, "search.dngo");
  out.init_samples = get_as<int>(j, "init_samples", out.init_samples, "search.dngo");
  out.lr = get_as<double>(j, "lr", out.lr, "search.dngo");
  if (out.basis_hidden < 1) throw ConfigError("search.dngo.basis_hidden must be >= 1");
  if (out.top_k_per_round < 1) throw ConfigError("search.dngo.top_k_per_round must be >= 1");
  if (out.retrain_epochs < 1) throw ConfigError("search.dngo.retrain_epochs must be >= 1");
  if (out.init_samples < 1) throw ConfigError("search.dngo.init_samples must be >= 1");
  if (!(out.lr > 0.0)) throw ConfigError("search.dngo.lr must be > 0");
}

void parse_search(const json& j, SearchConfig& out) {
  check_keys(j,
             {"method", "runs", "seeds", "base_seed", "budget_seconds", "query_budget",
              "stop_on_best", "reinforce", "dngo"},
             "search");
  out.method = get_as<std::string>(j, "method", out.method, "search");
  if (out.method != "random" && out.method != "reinforce" && out.method != "dngo")
    throw ConfigError("search.method must be random, reinforce, or dngo");
  out.runs = get_as<int>(j, "runs", out.runs, "search");
  if (out.runs < 1) throw ConfigError("search.runs must be >= 1");
  out.seeds = get_as<std::vector<uint64_t>>(j, "seeds", out.seeds, "search");
  out.base_seed = get_as<uint64_t>(j, "base_seed", out.base_seed, "search");
  if (!out.seeds.empty() && out.seeds.size() != size_t(out.runs))
    throw ConfigError("search.seeds must list exactly search.runs seeds");
  out.budget_seconds = get_as<double>(j, "budget_seconds", out.budget_seconds, "search");
  out.query_budget = get_as<int64_t>(j, "query_budget", out.query_budget, "search");
  if (out.query_budget != -1 && out.query_budget < 1)
    throw ConfigError("search.query_budget must be -1 (unlimited) or >= 1");
  out.stop_on_best = get_as<bool>(j, "stop_on_best", out.stop_on_best, "search");
  if (const json* v = find(j, "reinforce")) parse_reinforce(*v, out.reinforce);
  if (const json* v = find(j, "dngo")) parse_dngo(*v, out.dngo);
}

void parse_analyze(const json& j, AnalyzeConfig& out) {
  check_keys(j,
             {"n_prior", "gp_n_train", "gp_floor", "gp_seeds", "walk_steps", "walk_window",
              "walk_seeds", "max_edit", "chain_length", "chain_seeds"},
             "analyze");
  out.n_prior = get_as<int>(j, "n_prior", out.n_prior, "analyze");
  out.gp_n_train = get_as<int64_t>(j, "gp_n_train", out.gp_n_train, "analyze");
  out.gp_floor = get_as<double>(j, "gp_floor", out.gp_floor, "analyze");
  out.gp_seeds = get_as<int>(j, "gp_seeds", out.gp_seeds, "analyze");
  out.walk_steps = get_as<int>(j, "walk_steps", out.walk_steps, "analyze");
  out.walk_window = get_as<int>(j, "walk_window", out.walk_window, "analyze");
  out.walk_seeds = get_as<std::vector<uint64_t>>(j, "walk_seeds", out.walk_seeds, "analyze");
  out.max_edit = get_as<int>(j, "max_edit", out.max_edit, "analyze");
  out.chain_length = get_as<int>(j, "chain_length", out.chain_length, "analyze");
  out.chain_seeds = get_as<int>(j, "chain_seeds", out.chain_seeds, "analyze");
  if (out.n_prior < 1) throw ConfigError("analyze.n_prior must be >= 1");
  if (out.gp_n_train < 1) throw ConfigError("analyze.gp_n_train must be >= 1");
  if (out.gp_seeds < 1) throw ConfigError("analyze.gp_seeds must be >= 1");
  if (out.walk_steps < 1) throw ConfigError("analyze.walk_steps must be >= 1");
  if (out.walk_window < 1) throw ConfigError("analyze.walk_window must be >= 1");
  if (out.walk_seeds.empty()) throw ConfigError("analyze.walk_seeds must be nonempty");
  if (out.max_edit < 1) throw ConfigError("analyze.max_edit must be >= 1");
  if (out.chain_length < 1) throw ConfigError("analyze.chain_length must be >= 1");
  if (out.chain_seeds < 1) throw ConfigError("analyze.chain_seeds must be >= 1");
}

std::vector<uint64_t> effective_seeds(const SearchConfig& sc) {
  if (!sc.seeds.empty()) return sc.seeds;
  std::vector<uint64_t> seeds;
  for (int i = 0; i < sc.runs; ++i) seeds.push_back(sc.base_seed + uint64_t(i));
  return seeds;
}

}  // namespace

std::string RunConfig::canonical_json() const {
  ordered_json j;
  ordered_json sp;
  if (!space.path.empty()) {
    sp["path"] = space.path;
  } else {
    sp["name"] = space.name;
    if (space.name == "synthetic") {
      sp["nodes"] = space.nodes;
      sp["ops"] = space.ops;
      sp["max_edges"] = space.max_edges;
    }
  }
  j["space"] = sp;
  j["dataset"] = dataset;
  j["external"] = external;
  j["oracle"] = ordered_json{{"synthetic", oracle.synthetic}, {"table", oracle.table}};
  j["checkpoint"] = checkpoint;
  j["embeddings"] = embeddings;
  j["split"] = split;
  j["seed"] = seed;
  j["encoder"] = json::parse(encoder.to_json());
  j["vgae"] = ordered_json{{"lr", vgae_hyper.lr},
                           {"batch_size", vgae_hyper.batch_size},
                           {"max_epochs", vgae_hyper.max_epochs},
                           {"min_epochs", vgae_hyper.min_epochs},
                           {"heldout_fraction", vgae_hyper.heldout_fraction},
                           {"stop_at_full_recon", vgae_hyper.stop_at_full_recon}};
  j["search"] =
      ordered_json{{"method", search.method},
                   {"runs", search.runs},
                   {"seeds", effective_seeds(search)},
                   {"budget_seconds", search.budget_seconds},
                   {"query_budget", search.query_budget},
                   {"stop_on_best", search.stop_on_best},
                   {"reinforce",
                    ordered_json{{"lstm_hidden", search.reinforce.lstm_hidden},
                                 {"action_dim", search.reinforce.action_dim},
                                 {"lr", search.reinforce.lr},
                                 {"archs_per_episode", search.reinforce.archs_per_episode},
                                 {"discount", search.reinforce.discount},
                                 {"baseline", search.reinforce.baseline},
                                 {"bandit_mode", search.reinforce.bandit_mode},
                                 {"ema_baseline", search.reinforce.ema_baseline},
                                 {"ema_decay", search.reinforce.ema_decay}}},
                   {"dngo",
                    ordered_json{{"basis_hidden", search.dngo.basis_hidden},
                                 {"top_k_per_round", search.dngo.top_k_per_round},
                                 {"retrain_epochs", search.dngo.retrain_epochs},
                                 {"ei_incumbent", search.dngo.ei_incumbent},
                                 {"running_incumbent", search.dngo.running_incumbent},
                                 {"init_samples", search.dngo.init_samples},
                                 {"lr", search.dngo.lr}}}};
  j["analyze"] = ordered_json{{"n_prior", analyze.n_prior},
                              {"gp_n_train", analyze.gp_n_train},
                              {"gp_floor", analyze.gp_floor},
                              {"gp_seeds", analyze.gp_seeds},
                              {"walk_steps", analyze.walk_steps},
                              {"walk_window", analyze.walk_window},
                              {"walk_seeds", analyze.walk_seeds},
                              {"max_edit", analyze.max_edit},
                              {"chain_length", analyze.chain_length},
                              {"chain_seeds", analyze.chain_seeds}};
  return j.dump();
}

std::string RunConfig::resolve(const std::string& path) const {
  if (path.empty()) throw ConfigError("empty path in config");
  fs::path p(path);
  if (p.is_absolute()) return path;
  return (fs::path(base_dir) / p).lexically_normal().string();
}

arch::SearchSpaceSpec RunConfig::load_space() const {
  if (!space.path.empty()) return arch::load_spec(resolve(space.path));
  if (space.name == "synthetic")
    return arch::synthetic_spec(space.nodes, space.ops, space.max_edges);
  if (space.name == "nb101") return arch::nb101_spec();
  if (space.name == "nb201") return arch::nb201_spec();
  return arch::darts_spec();
}

oracle::Oracle RunConfig::load_oracle(const arch::SearchSpaceSpec& spec) const {
  if (oracle.synthetic) return oracle::tabulate_synthetic(spec);
  return oracle::load_tabular(resolve(oracle.table));
}

RunConfig parse_config(const std::string& text, const std::string& base_dir,
                       std::optional<uint64_t> seed_override) {
  json j = json::parse(text, nullptr, /*allow_exceptions=*/false);
  if (j.is_discarded() || !j.is_object())
    throw ConfigError("config is not a JSON object");
  check_keys(j,
             {"space", "dataset", "external", "oracle", "checkpoint", "embeddings", "split",
              "seed", "encoder", "vgae", "search", "analyze"},
             "config");
  RunConfig cfg;
  cfg.base_dir = base_dir.empty() ? "." : base_dir;
  if (const json* v = find(j, "space")) parse_space(*v, cfg.space);
  cfg.dataset = get_as<std::string>(j, "dataset", cfg.dataset, "config");
  cfg.external = get_as<std::string>(j, "external", cfg.external, "config");
  if (const json* v = find(j, "oracle")) parse_oracle(*v, cfg.oracle);
  cfg.checkpoint = get_as<std::string>(j, "checkpoint", cfg.checkpoint, "config");
  cfg.embeddings = get_as<std::string>(j, "embeddings", cfg.embeddings, "config");
  cfg.split = get_as<std::string>(j, "split", cfg.split, "config");
  cfg.seed = get_as<uint64_t>(j, "seed", cfg.seed, "config");
  if (const json* v = find(j, "encoder")) parse_encoder(*v, cfg.encoder);
  if (const json* v = find(j, "vgae")) parse_vgae(*v, cfg.vgae_hyper);
  if (const json* v = find(j, "search")) parse_search(*v, cfg.search);
  if (const json* v = find(j, "analyze")) parse_analyze(*v, cfg.analyze);
  if (seed_override) cfg.seed = *seed_override;
  cfg.vgae_hyper.seed = cfg.seed;
  cfg.digest = fnv128(cfg.canonical_json()).hex();
  return cfg;
}

RunConfig load_config(const std::string& path, std::optional<uint64_t> seed_override) {
  const std::string text = slurp(path);
  const std::string dir = fs::path(path).parent_path().string();
  return parse_config(text, dir, seed_override);
}

int worker_count(int jobs) {
  if (jobs < 1) return 1;
  int w = int(std::thread::hardware_concurrency());
  if (w < 1) w = 1;
  if (const char* env = std::getenv("LNAS_WORKERS")) {
    try {
      size_t pos = 0;
      w = std::stoi(env, &pos);
      if (pos != std::string(env).size()) throw std::invalid_argument("trailing");
    } catch (const std::exception&) {
      throw ConfigError("LNAS_WORKERS must be a positive integer");
    }
    if (w < 1) throw ConfigError("LNAS_WORKERS must be a positive integer");
  }
  return std::min(w, jobs);
}

namespace {

// ---- manifest and shared command plumbing -----------------------------------

void require_input(const RunConfig& cfg, const std::string& path, const char* role) {
  const std::string full = cfg.resolve(path);
  if (!fs::exists(full))
    throw ConfigError(std::string("missing ") + role + ": " + full);
}

struct StageWriter {
  std::string out_dir;
  std::string command;
  const RunConfig* cfg;
  std::string started;
  std::vector<std::string> files;  // out_dir-relative

  StageWriter(std::string out, std::string cmd, const RunConfig& c)
      : out_dir(std::move(out)), command(std::move(cmd)), cfg(&c),
        started(iso_utc_now()) {
    fs::create_directories(out_dir);
  }

  std::string path(const std::string& rel) {
    files.push_back(rel);
    return (fs::path(out_dir) / rel).string();
  }

  void finish() {
    ordered_json m;
    m["command"] = command;
    m["config_digest"] = cfg->digest;
    m["seed"] = cfg->seed;
    m["started_at"] = started;
    m["finished_at"] = iso_utc_now();
    ordered_json outs = ordered_json::array();
    for (const auto& rel : files) {
      const std::string full = (fs::path(out_dir) / rel).string();
      const std::string bytes = slurp(full);
      outs.push_back(ordered_json{{"file", rel},
                                  {"bytes", bytes.size()},
                                  {"fnv128", fnv128(bytes).hex()}});
    }
    m["outputs"] = outs;
    write_text((fs::path(out_dir) / ("manifest_" + command + ".json")).string(),
               m.dump(2) + "\n");
  }
};

void write_json_output(StageWriter& stage, const std::string& rel, ordered_json body) {
  body["config_digest"] = stage.cfg->digest;
  write_text(stage.path(rel), body.dump(2) + "\n");
}

std::vector<arch::CellGraph> cells_of(const std::vector<arch::DatasetRecord>& records) {
  std::vector<arch::CellGraph> cells;
  cells.reserve(records.size());
  for (const auto& r : records) cells.push_back(r.cell);
  return cells;
}

struct SplitCells {
  std::vector<arch::CellGraph> train;
  std::vector<arch::CellGraph> heldout;
};

SplitCells read_split(const RunConfig& cfg, const std::vector<arch::CellGraph>& cells) {
  const std::string text = slurp(cfg.resolve(cfg.split));
  json j = json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw arch::ParseError("split file is not a JSON object: " + cfg.resolve(cfg.split));
  std::vector<int64_t> heldout_idx;
  try {
    heldout_idx = j.at("heldout_indices").get<std::vector<int64_t>>();
  } catch (const json::exception& e) {
    throw arch::ParseError(std::string("bad split file: ") + e.what());
  }
  std::vector<char> is_heldout(cells.size(), 0);
  for (int64_t idx : heldout_idx) {
    if (idx < 0 || size_t(idx) >= cells.size())
      throw arch::ParseError("split index out of range: " + std::to_string(idx));
    is_heldout[size_t(idx)] = 1;
  }
  SplitCells split;
  for (size_t i = 0; i < cells.size(); ++i)
    (is_heldout[i] ? split.heldout : split.train).push_back(cells[i]);
  return split;
}

// ---- aggregate statistics ----------------------------------------------------

struct MeanStd {
  double mean = std::numeric_limits<double>::quiet_NaN();
  double stdev = std::numeric_limits<double>::quiet_NaN();
  size_t n = 0;
};

MeanStd mean_std(const std::vector<double>& v) {
  MeanStd ms;
  ms.n = v.size();
  if (v.empty()) return ms;
  ms.mean = std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
  if (v.size() == 1) {
    ms.stdev = 0.0;
    return ms;
  }
  double acc = 0.0;
  for (double x : v) acc += (x - ms.mean) * (x - ms.mean);
  ms.stdev = std::sqrt(acc / double(v.size() - 1));
  return ms;
}

double median_of(std::vector<double> v) {
  if (v.empty()) return std::numeric_limits<double>::quiet_NaN();
  std::sort(v.begin(), v.end());
  const size_t mid = v.size() / 2;
  if (v.size() % 2 == 1) return v[mid];
  return 0.5 * (v[mid - 1] + v[mid]);
}

ordered_json stats_json(const MeanStd& ms) {
  ordered_json j;
  if (std::isfinite(ms.mean)) j["mean"] = ms.mean; else j["mean"] = nullptr;
  if (std::isfinite(ms.stdev)) j["std"] = ms.stdev; else j["std"] = nullptr;
  j["n"] = ms.n;
  return j;
}

struct RunStat {
  int run = 0;
  uint64_t seed = 0;
  size_t events = 0;
  double elapsed = 0.0;
  std::string reason;
  // Empty traces leave the optionals unset.
  std::optional<double> final_validation;
  std::optional<double> final_test;
  std::optional<double> regret;
  int64_t queries_to_optimum = -1;
};

RunStat summarize_run(int run, uint64_t seed, const search::SearchTrace& trace,
                      const oracle::Oracle& orc, const CanonicalKey& best_key,
                      double best_test) {
  RunStat rs;
  rs.run = run;
  rs.seed = seed;
  rs.events = trace.events.size();
  rs.reason = search::to_string(trace.reason);
  if (!trace.events.empty()) {
    rs.elapsed = trace.events.back().elapsed_seconds;
    const double final_inc = trace.events.back().incumbent;
    rs.final_validation = final_inc;
    // The incumbent-setting event: first event whose reward equals the final
    // incumbent (incumbents are copied rewards, so equality is exact).
    for (const auto& ev : trace.events)
      if (ev.reward == final_inc) {
        rs.final_test = orc.at(ev.id).test_accuracy;
        break;
      }
    rs.regret = best_test - *rs.final_test;
  }
  rs.queries_to_optimum = search::queries_to_key(trace, best_key);
  return rs;
}

// ---- commands ------------------------------------------------------------------

}  // namespace

void cmd_gen(const RunConfig& cfg, const std::string& out_dir) {
  if (!cfg.space.path.empty()) require_input(cfg, cfg.space.path, "space spec");
  const arch::SearchSpaceSpec spec = cfg.load_space();
  const auto records = arch::make_dataset(spec);

  StageWriter stage(out_dir, "gen", cfg);
  arch::save_spec(spec, stage.path("spec.json"));
  arch::save_dataset(records, stage.path("dataset.jsonl"));
  if (cfg.oracle.synthetic)
    oracle::save_tabular(oracle::tabulate_synthetic(spec), stage.path("oracle.jsonl"));
  ordered_json summary;
  summary["space"] = spec.fingerprint();
  summary["records"] = records.size();
  write_json_output(stage, "gen_summary.json", std::move(summary));
  stage.finish();
}

ImportedTable import_external(const std::string& path, const arch::SearchSpaceSpec& spec) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot read " + path);

  ImportedTable out;
  std::map<CanonicalKey, oracle::OracleRecord> table;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const std::string where = path + ":" + std::to_string(lineno);
    const json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.is_object())
      throw arch::ParseError("bad record at " + where);
    ++out.stats.rows;

    auto metric = [&](const char* field, double lo, double hi) {
      const json* v = find(j, field);
      if (!v || !v->is_number())
        throw arch::ParseError(std::string("missing or non-numeric '") + field + "' at " +
                               where);
      const double x = v->get<double>();
      if (!std::isfinite(x) || x < lo || x > hi)
        throw arch::ParseError(std::string("'") + field + "' out of range at " + where);
      return x;
    };
    oracle::OracleRecord rec;
    rec.validation_accuracy = metric("validation_accuracy", 0.0, 1.0);
    rec.test_accuracy = metric("test_accuracy", 0.0, 1.0);
    rec.training_seconds =
        metric("training_seconds", std::numeric_limits<double>::min(),
               std::numeric_limits<double>::infinity());

    arch::CellGraph cell;
    try {
      if (spec.kind == arch::SpaceKind::edge_op) {
        const json* v = find(j, "edge_ops");
        if (!v || !v->is_array() || v->size() != 6)
          throw arch::ParseError("'edge_ops' must list 6 operation names");
        std::array<int, 6> edge_ops{};
        for (size_t e = 0; e < 6; ++e) {
          const std::string name = v->at(e).get<std::string>();
          const auto it = std::find(spec.op_vocab.begin(), spec.op_vocab.end(), name);
          if (it == spec.op_vocab.end() || it == spec.op_vocab.begin() ||
              it + 1 == spec.op_vocab.end())
            throw arch::UnknownOperation("unknown edge op '" + name + "'");
          edge_ops[e] = int(it - spec.op_vocab.begin()) - 1;
        }
        cell = arch::nb201_to_nodeop(edge_ops, spec);
      } else {
        const json* ops = find(j, "ops");
        const json* edges = find(j, "edges");
        if (!ops || !ops->is_array() || !edges || !edges->is_array())
          throw arch::ParseError("rows need 'ops' and 'edges' arrays");
        std::vector<std::pair<int, int>> edge_list;
        for (const auto& e : *edges) {
          if (!e.is_array() || e.size() != 2)
            throw arch::ParseError("'edges' entries must be [i, j] pairs");
          edge_list.emplace_back(e.at(0).get<int>(), e.at(1).get<int>());
        }
        cell = arch::make_cell(spec, ops->get<std::vector<std::string>>(), edge_list);
      }
    } catch (const json::exception& e) {
      throw arch::ParseError(std::string(e.what()) + " at " + where);
    } catch (const Error& e) {
      throw arch::ParseError(std::string(e.what()) + " at " + where);
    }

    if (!arch::validate(cell, spec).valid) {
      ++out.stats.invalid;
      continue;
    }
    const CanonicalKey key = arch::canonical_hash(cell, spec);
    if (!table.emplace(key, rec).second) {
      ++out.stats.duplicates;
      continue;
    }
    out.records.push_back({int64_t(out.records.size()), std::move(cell)});
    ++out.stats.imported;
  }
  if (out.stats.imported == 0)
    throw arch::ParseError("no importable rows in " + path);
  out.table = oracle::Oracle(std::move(table));
  return out;
}

void cmd_import(const RunConfig& cfg, const std::string& out_dir) {
  if (cfg.external.empty())
    throw ConfigError("import needs a nonempty top-level \"external\" path");
  if (!cfg.space.path.empty()) require_input(cfg, cfg.space.path, "space spec");
  require_input(cfg, cfg.external, "external results file");
  const arch::SearchSpaceSpec spec = cfg.load_space();
  const ImportedTable imp = import_external(cfg.resolve(cfg.external), spec);

  StageWriter stage(out_dir, "import", cfg);
  arch::save_spec(spec, stage.path("spec.json"));
  arch::save_dataset(imp.records, stage.path("dataset.jsonl"));
  oracle::save_tabular(imp.table, stage.path("oracle.jsonl"));
  ordered_json summary;
  summary["space"] = spec.fingerprint();
  summary["rows"] = imp.stats.rows;
  summary["imported"] = imp.stats.imported;
  summary["duplicates"] = imp.stats.duplicates;
  summary["invalid"] = imp.stats.invalid;
  write_json_output(stage, "import_summary.json", std::move(summary));
  stage.finish();
}

void cmd_pretrain(const RunConfig& cfg, const std::string& out_dir) {
  if (!cfg.space.path.empty()) require_input(cfg, cfg.space.path, "space spec");
  require_input(cfg, cfg.dataset, "dataset");
  const arch::SearchSpaceSpec spec = cfg.load_space();
  const auto records = arch::load_dataset(cfg.resolve(cfg.dataset), spec);
  const auto cells = cells_of(records);

  vgae::Model model(spec, cfg.encoder, cfg.seed);
  const vgae::TrainResult result = vgae::train(model, cells, cfg.vgae_hyper);

  StageWriter stage(out_dir, "pretrain", cfg);
  model.save(stage.path("checkpoint.bin"),
             ordered_json{{"config_digest", cfg.digest}}.dump());
  vgae::save_history(result.history, stage.path("history.jsonl"));
  ordered_json split;
  split["n_train"] = result.n_train;
  split["n_heldout"] = result.n_heldout;
  split["heldout_indices"] = result.heldout_indices;
  write_json_output(stage, "split.json", std::move(split));
  stage.finish();
}

void cmd_embed(const RunConfig& cfg, const std::string& out_dir) {
  if (!cfg.space.path.empty()) require_input(cfg, cfg.space.path, "space spec");
  require_input(cfg, cfg.dataset, "dataset");
  require_input(cfg, cfg.checkpoint, "checkpoint");
  const arch::SearchSpaceSpec spec = cfg.load_space();
  const auto records = arch::load_dataset(cfg.resolve(cfg.dataset), spec);
  const vgae::Model model = vgae::Model::load(cfg.resolve(cfg.checkpoint), spec);
  const auto rows = vgae::embed_dataset(model, records, worker_count(int(records.size())));

  StageWriter stage(out_dir, "embed", cfg);
  vgae::save_embeddings(rows, stage.path("embeddings.jsonl"));
  stage.finish();
}

void cmd_eval_pretrain(const RunConfig& cfg, const std::string& out_dir) {
  if (!cfg.space.path.empty()) require_input(cfg, cfg.space.path, "space spec");
  require_input(cfg, cfg.dataset, "dataset");
  require_input(cfg, cfg.checkpoint, "checkpoint");
  require_input(cfg, cfg.split, "split file");
  const arch::SearchSpaceSpec spec = cfg.load_space();
  const auto records = arch::load_dataset(cfg.resolve(cfg.dataset), spec);
  const auto cells = cells_of(records);
  const vgae::Model model = vgae::Model::load(cfg.resolve(cfg.checkpoint), spec);
  const SplitCells split = read_split(cfg, cells);
  const gen::PretrainReport report =
      gen::pretrain_report(model, split.train, split.heldout, cfg.analyze.n_prior, cfg.seed);

  StageWriter stage(out_dir, "eval-pretrain", cfg);
  write_json_output(stage, "pretrain_report.json",
                    ordered_json(json::parse(report.to_json())));
  stage.finish();
}

void cmd_search(const RunConfig& cfg, const std::string& out_dir) {
  if (!cfg.space.path.empty()) require_input(cfg, cfg.space.path, "space spec");
  require_input(cfg, cfg.dataset, "dataset");
  require_input(cfg, cfg.embeddings, "embedding table");
  if (!cfg.oracle.synthetic) require_input(cfg, cfg.oracle.table, "oracle table");
  if (!(cfg.search.budget_seconds > 0.0))
    throw ConfigError("search.budget_seconds must be > 0");

  const arch::SearchSpaceSpec spec = cfg.load_space();
  const auto records = arch::load_dataset(cfg.resolve(cfg.dataset), spec);
  const auto rows = vgae::load_embeddings(cfg.resolve(cfg.embeddings));
  const search::EmbeddingTable table = search::make_table(records, rows, spec);
  if (cfg.search.method == "reinforce" &&
      cfg.search.reinforce.action_dim != int64_t(table.dim()))
    throw ConfigError("search.reinforce.action_dim (" +
                      std::to_string(cfg.search.reinforce.action_dim) +
                      ") must equal the embedding dimension (" +
                      std::to_string(table.dim()) + ")");
  const search::NeighborIndex index(table);
  const oracle::Oracle orc = cfg.load_oracle(spec);
  const auto [best_key, best_rec] = oracle::best_in_space(orc);
  const std::vector<uint64_t> seeds = effective_seeds(cfg.search);
  const int runs = cfg.search.runs;
  const CanonicalKey* stop_key = cfg.search.stop_on_best ? &best_key : nullptr;

  std::vector<std::optional<search::SearchTrace>> traces(static_cast<size_t>(runs));
  std::vector<std::string> failures(static_cast<size_t>(runs));
  std::atomic<int> next{0};
  auto work = [&]() {
    for (int i = next.fetch_add(1); i < runs; i = next.fetch_add(1)) {
      oracle::BudgetClock clock(cfg.search.budget_seconds, cfg.search.query_budget);
      try {
        if (cfg.search.method == "random")
          traces[size_t(i)] = search::random_search(index, orc, clock, seeds[size_t(i)],
                                                    stop_key);
        else if (cfg.search.method == "reinforce")
          traces[size_t(i)] = search::reinforce_search(index, orc, clock,
                                                       cfg.search.reinforce,
                                                       seeds[size_t(i)], stop_key);
        else
          traces[size_t(i)] = search::dngo_search(index, orc, clock, cfg.search.dngo,
                                                  seeds[size_t(i)], stop_key);
      } catch (const std::exception& e) {
        failures[size_t(i)] = e.what();
      }
    }
  };
  const int workers = worker_count(runs);
  if (workers <= 1) {
    work();
  } else {
    std::vector<std::thread> pool;
    for (int t = 0; t < workers; ++t) pool.emplace_back(work);
    for (auto& th : pool) th.join();
  }

  StageWriter stage(out_dir, "search", cfg);
  fs::create_directories(fs::path(out_dir) / "traces");
  std::vector<RunStat> stats;
  for (int i = 0; i < runs; ++i) {
    if (!traces[size_t(i)]) continue;
    char name[32];
    std::snprintf(name, sizeof name, "traces/run_%03d.jsonl", i);
    search::save_trace(*traces[size_t(i)], stage.path(name));
    stats.push_back(summarize_run(i, seeds[size_t(i)], *traces[size_t(i)], orc, best_key,
                                  best_rec.test_accuracy));
  }
  std::string failed;
  for (int i = 0; i < runs; ++i)
    if (!failures[size_t(i)].empty())
      failed += "run " + std::to_string(i) + ": " + failures[size_t(i)] + "; ";
  if (!failed.empty())
    throw RuntimeFailure("search runs failed (completed traces preserved): " + failed);

  std::vector<double> fv, ft, rg, qopt;
  for (const auto& rs : stats) {
    if (rs.final_validation) fv.push_back(*rs.final_validation);
    if (rs.final_test) ft.push_back(*rs.final_test);
    if (rs.regret) rg.push_back(*rs.regret);
    if (rs.queries_to_optimum >= 0) qopt.push_back(double(rs.queries_to_optimum));
  }
  ordered_json agg;
  agg["method"] = cfg.search.method;
  agg["runs"] = runs;
  agg["final_validation"] = stats_json(mean_std(fv));
  agg["final_test"] = stats_json(mean_std(ft));
  agg["regret"] = stats_json(mean_std(rg));
  ordered_json q;
  q["found"] = qopt.size();
  if (qopt.empty()) q["median"] = nullptr; else q["median"] = median_of(qopt);
  agg["queries_to_optimum"] = q;
  ordered_json per = ordered_json::array();
  for (const auto& rs : stats) {
    ordered_json r;
    r["run"] = rs.run;
    r["seed"] = rs.seed;
    r["events"] = rs.events;
    r["elapsed_seconds"] = rs.elapsed;
    r["stop_reason"] = rs.reason;
    r["final_validation"] = rs.final_validation ? ordered_json(*rs.final_validation)
                                                : ordered_json(nullptr);
    r["final_test"] = rs.final_test ? ordered_json(*rs.final_test) : ordered_json(nullptr);
    r["regret"] = rs.regret ? ordered_json(*rs.regret) : ordered_json(nullptr);
    r["queries_to_optimum"] = rs.queries_to_optimum;
    per.push_back(r);
  }
  agg["per_run"] = per;
  write_json_output(stage, "aggregate.json", std::move(agg));

  std::string csv =
      "run,seed,events,elapsed_seconds,stop_reason,final_validation,final_test,regret,"
      "queries_to_optimum\n";
  for (const auto& rs : stats) {
    csv += std::to_string(rs.run) + "," + std::to_string(rs.seed) + "," +
           std::to_string(rs.events) + "," + fmt_double(rs.elapsed) + "," + rs.reason + ",";
    csv += rs.final_validation ? fmt_double(*rs.final_validation) : std::string();
    csv += ",";
    csv += rs.final_test ? fmt_double(*rs.final_test) : std::string();
    csv += ",";
    csv += rs.regret ? fmt_double(*rs.regret) : std::string();
    csv += "," + std::to_string(rs.queries_to_optimum) + "\n";
  }
  write_text(stage.path("aggregate.csv"), csv);
  stage.finish();
}

void cmd_analyze(const RunConfig& cfg, const std::string& out_dir) {
  if (!cfg.space.path.empty()) require_input(cfg, cfg.space.path, "space spec");
  require_input(cfg, cfg.dataset, "dataset");
  require_input(cfg, cfg.checkpoint, "checkpoint");
  require_input(cfg, cfg.split, "split file");
  if (!cfg.oracle.synthetic) require_input(cfg, cfg.oracle.table, "oracle table");
  const arch::SearchSpaceSpec spec = cfg.load_space();
  const auto records = arch::load_dataset(cfg.resolve(cfg.dataset), spec);
  const auto cells = cells_of(records);
  const vgae::Model model = vgae::Model::load(cfg.resolve(cfg.checkpoint), spec);
  const oracle::Oracle orc = cfg.load_oracle(spec);
  if (cfg.analyze.gp_n_train >= int64_t(records.size()))
    throw ConfigError("analyze.gp_n_train must be smaller than the dataset");
  if (size_t(cfg.analyze.chain_length) > records.size())
    throw ConfigError("analyze.chain_length exceeds the dataset size");

  const SplitCells split = read_split(cfg, cells);
  const gen::PretrainReport report =
      gen::pretrain_report(model, split.train, split.heldout, cfg.analyze.n_prior, cfg.seed);

  const auto rows = vgae::embed_dataset(model, records, worker_count(int(records.size())));
  const search::EmbeddingTable table = search::make_table(records, rows, spec);
  const search::NeighborIndex index(table);
  std::vector<std::vector<double>> embs;
  std::vector<double> accs;
  for (size_t i = 0; i < records.size(); ++i) {
    embs.push_back(rows[i].values);
    accs.push_back(orc.at(table.ids[i]).test_accuracy);
  }
  const gen::PredictiveFit fit =
      gen::predictive_fit(embs, accs, cfg.analyze.gp_n_train, cfg.analyze.gp_floor,
                          cfg.analyze.gp_seeds, cfg.seed);

  StageWriter stage(out_dir, "analyze", cfg);
  write_json_output(stage, "pretrain_report.json",
                    ordered_json(json::parse(report.to_json())));
  write_json_output(stage, "predictive_fit.json", ordered_json(json::parse(fit.to_json())));

  ordered_json smooth = ordered_json::array();
  for (uint64_t ws : cfg.analyze.walk_seeds) {
    const gen::L2EditProfile profile = gen::l2_edit_profile(
        model, spec, cfg.analyze.walk_steps, ws, cfg.analyze.walk_window);
    gen::save_profile_csv(profile, stage.path("l2_edit_seed" + std::to_string(ws) + ".csv"));
    const auto medians = gen::median_l2_by_edit(profile);
    std::vector<double> xs, ys;
    for (const auto& [edit, med] : medians) {
      if (edit < 1 || edit > cfg.analyze.max_edit) continue;
      xs.push_back(double(edit));
      ys.push_back(med);
    }
    const double rho = gen::spearman_rho(xs, ys);
    ordered_json row;
    row["walk_seed"] = ws;
    row["edit_distances"] = xs.size();
    if (std::isfinite(rho)) row["spearman_rho"] = rho; else row["spearman_rho"] = nullptr;
    smooth.push_back(row);
  }

  Rng chain_root(cfg.seed);
  int wins = 0, losses = 0, ties = 0;
  std::vector<double> greedy_means, random_means;
  std::string chains_csv = "seed,kind,start_row,mean_edit,rows\n";
  auto chain_row = [&](int seed_idx, const char* kind, size_t start, const gen::Chain& c) {
    std::string joined;
    for (size_t r : c.rows) {
      if (!joined.empty()) joined += ';';
      joined += std::to_string(r);
    }
    chains_csv += std::to_string(seed_idx) + "," + kind + "," + std::to_string(start) +
                  "," + fmt_double(c.mean_edit()) + "," + joined + "\n";
  };
  for (int k = 0; k < cfg.analyze.chain_seeds; ++k) {
    Rng pick = chain_root.fork(300 + uint64_t(k));
    const size_t start = size_t(pick.bounded(uint64_t(records.size())));
    const gen::Chain greedy =
        gen::neighbor_sequence(index, cells, start, cfg.analyze.chain_length);
    const gen::Chain random = gen::random_sequence(
        cells, start, cfg.analyze.chain_length, chain_root.fork(400 + uint64_t(k)).seed());
    chain_row(k, "greedy", start, greedy);
    chain_row(k, "random", start, random);
    greedy_means.push_back(greedy.mean_edit());
    random_means.push_back(random.mean_edit());
    if (greedy.mean_edit() < random.mean_edit()) ++wins;
    else if (greedy.mean_edit() > random.mean_edit()) ++losses;
    else ++ties;
  }
  write_text(stage.path("neighbor_chains.csv"), chains_csv);

  ordered_json summary;
  summary["latent_smoothness"] = smooth;
  ordered_json chains;
  chains["length"] = cfg.analyze.chain_length;
  chains["seeds"] = cfg.analyze.chain_seeds;
  chains["wins"] = wins;
  chains["losses"] = losses;
  chains["ties"] = ties;
  chains["sign_test_p"] = gen::sign_test_p(wins, losses);
  chains["greedy_mean_edit"] = mean_std(greedy_means).mean;
  chains["random_mean_edit"] = mean_std(random_means).mean;
  summary["chains"] = chains;
  write_json_output(stage, "analysis_summary.json", std::move(summary));
  stage.finish();
}

void cmd_report(const RunConfig& cfg, const std::string& out_dir) {
  auto read_json = [](const fs::path& p) -> std::optional<json> {
    if (!fs::exists(p)) return std::nullopt;
    json j = json::parse(slurp(p.string()), nullptr, false);
    if (j.is_discarded())
      throw arch::ParseError("malformed JSON artifact: " + p.string());
    return j;
  };

  const fs::path root(out_dir);
  const auto pretrain = read_json(root / "pretrain_report.json");
  const auto predictive = read_json(root / "predictive_fit.json");
  const auto analysis = read_json(root / "analysis_summary.json");

  std::vector<fs::path> agg_paths;
  if (fs::exists(root / "aggregate.json")) agg_paths.push_back(root / "aggregate.json");
  if (fs::exists(root)) {
    std::vector<fs::path> dirs;
    for (const auto& entry : fs::directory_iterator(root))
      if (entry.is_directory()) dirs.push_back(entry.path());
    std::sort(dirs.begin(), dirs.end());
    for (const auto& d : dirs)
      if (fs::exists(d / "aggregate.json")) agg_paths.push_back(d / "aggregate.json");
  }

  if (!pretrain && !predictive && !analysis && agg_paths.empty())
    throw RuntimeFailure("nothing to report under " + out_dir);

  ordered_json rep;
  rep["pretrain"] = pretrain ? ordered_json(*pretrain) : ordered_json(nullptr);
  rep["predictive_fit"] = predictive ? ordered_json(*predictive) : ordered_json(nullptr);
  rep["analysis"] = analysis ? ordered_json(*analysis) : ordered_json(nullptr);

  std::string csv =
      "method,runs,mean_test_accuracy,std_test_accuracy,mean_regret,std_regret,"
      "median_queries_to_optimum\n";
  ordered_json searches = ordered_json::array();
  for (const auto& p : agg_paths) {
    const json agg = *read_json(p);
    ordered_json entry;
    entry["dir"] = fs::relative(p.parent_path(), root).string();
    for (const char* key : {"method", "runs", "final_validation", "final_test", "regret",
                            "queries_to_optimum", "config_digest"})
      if (agg.contains(key)) entry[key] = agg.at(key);
    searches.push_back(entry);
    auto num = [&](const json& v) {
      return v.is_number() ? fmt_double(v.get<double>()) : std::string();
    };
    csv += agg.value("method", std::string()) + "," +
           std::to_string(agg.value("runs", 0)) + ",";
    const json ft = agg.value("final_test", json::object());
    const json rg = agg.value("regret", json::object());
    const json qo = agg.value("queries_to_optimum", json::object());
    csv += num(ft.value("mean", json())) + "," + num(ft.value("std", json())) + ",";
    csv += num(rg.value("mean", json())) + "," + num(rg.value("std", json())) + ",";
    csv += num(qo.value("median", json())) + "\n";
  }
  rep["search"] = searches;

  StageWriter stage(out_dir, "report", cfg);
  write_json_output(stage, "report.json", std::move(rep));
  write_text(stage.path("report.csv"), csv);
  stage.finish();
}

// ---- CLI -----------------------------------------------------------------------

namespace {

void print_error_record(const std::string& command, const char* kind,
                        const std::string& message) {
  ordered_json e;
  e["command"] = command;
  e["error_type"] = kind;
  e["message"] = message;
  std::cerr << e.dump() << "\n";
}

}  // namespace

int run_cli(int argc, const char* const* argv) {
  CLI::App app{"latent-space architecture search pipeline"};
  app.require_subcommand(1);
  std::string config_path, out_dir;
  uint64_t seed_value = 0;
  static const std::pair<const char*, const char*> kCommands[] = {
      {"gen", "enumerate a space and write spec/dataset/oracle files"},
      {"import", "convert external benchmark results to dataset/oracle files"},
      {"pretrain", "train the graph autoencoder and write a checkpoint"},
      {"embed", "embed every dataset cell with a trained checkpoint"},
      {"eval-pretrain", "reconstruction/validity/uniqueness report"},
      {"search", "run simulated architecture search with per-run traces"},
      {"analyze", "latent-space geometry and predictive-fit reports"},
      {"report", "consolidate stage outputs into a final report"}};
  for (const auto& [name, desc] : kCommands) {
    CLI::App* sub = app.add_subcommand(name, desc);
    sub->add_option("--config", config_path, "run configuration JSON")->required();
    sub->add_option("--out", out_dir, "output directory")->required();
    sub->add_option("--seed-override", seed_value, "replace the config seed");
  }

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);  // prints help, exit 0
  } catch (const CLI::ParseError& e) {
    print_error_record("", "config", e.what());
    return kExitConfig;
  }
  CLI::App* sub = app.get_subcommands().front();
  const std::string command = sub->get_name();
  std::optional<uint64_t> seed_override;
  if (sub->count("--seed-override") > 0) seed_override = seed_value;

  RunConfig cfg;
  try {
    cfg = load_config(config_path, seed_override);
  } catch (const std::exception& e) {
    print_error_record(command, "config", e.what());
    return kExitConfig;
  }

  try {
    if (command == "gen") cmd_gen(cfg, out_dir);
    else if (command == "import") cmd_import(cfg, out_dir);
    else if (command == "pretrain") cmd_pretrain(cfg, out_dir);
    else if (command == "embed") cmd_embed(cfg, out_dir);
    else if (command == "eval-pretrain") cmd_eval_pretrain(cfg, out_dir);
    else if (command == "search") cmd_search(cfg, out_dir);
    else if (command == "analyze") cmd_analyze(cfg, out_dir);
    else cmd_report(cfg, out_dir);
  } catch (const ConfigError& e) {
    print_error_record(command, "config", e.what());
    return kExitConfig;
  } catch (const std::exception& e) {
    print_error_record(command, "runtime", e.what());
    try {
      fs::create_directories(out_dir);
      ordered_json rec;
      rec["command"] = command;
      rec["error_type"] = "runtime";
      rec["message"] = e.what();
      rec["config_digest"] = cfg.digest;
      write_text((fs::path(out_dir) / "error.json").string(), rec.dump(2) + "\n");
    } catch (const std::exception&) {
      // The stderr record already carries the failure.
    }
    return kExitRuntime;
  }
  return kExitOk;
}

}  // namespace lnas::harness
