#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "lnas/archspace.hpp"
#include "lnas/common.hpp"
#include "lnas/oracle.hpp"
#include "lnas/tensorcore.hpp"
#include "lnas/vgae.hpp"

// Architecture search over a frozen embedding table: an LSTM policy-gradient
// agent and a neural-basis Bayesian optimizer retrieve architectures by exact
// L2 nearest neighbor in latent space and query an oracle under a simulated
// wall-clock budget; uniform random search is the baseline. One run is
// single-threaded and fully determined by its seed.

namespace lnas::search {

struct EmptyTable : Error { using Error::Error; };
struct AllExcluded : Error { using Error::Error; };
struct BudgetZero : Error { using Error::Error; };
struct SingularSystem : Error { using Error::Error; };
struct TableMismatch : Error { using Error::Error; };

// ---- embedding table and nearest-neighbor retrieval -------------------------

struct EmbeddingTable {
  std::vector<CanonicalKey> ids;                // unique, aligned with embeddings
  std::vector<std::vector<double>> embeddings;  // M rows, equal dimension

  size_t size() const { return ids.size(); }
  int64_t dim() const { return embeddings.empty() ? 0 : int64_t(embeddings[0].size()); }
};

// Joins dataset cells with their embedding rows by record id and keys each row
// by the cell's canonical hash. Throws TableMismatch on unmatched or duplicate
// ids and EmptyTable on empty input.
EmbeddingTable make_table(const std::vector<arch::DatasetRecord>& records,
                          const std::vector<vgae::EmbeddingRow>& rows,
                          const arch::SearchSpaceSpec& spec);

// Exact brute-force L2 index. Rows are scanned in order; ties resolve to the
// lowest id.
class NeighborIndex {
 public:
  explicit NeighborIndex(const EmbeddingTable& table);  // keeps a reference

  // Row index of the nearest non-excluded embedding. excluded may be empty
  // (nothing excluded) or one flag per row. Throws AllExcluded when no row is
  // eligible.
  size_t nearest(const std::vector<double>& z, const std::vector<char>& excluded) const;
  size_t nearest(const std::vector<double>& z) const { return nearest(z, {}); }

  const EmbeddingTable& table() const { return table_; }

 private:
  const EmbeddingTable& table_;
};

// ---- traces ------------------------------------------------------------------

struct TraceEvent {
  int64_t step = 0;               // 1-based query index within the run
  CanonicalKey id;                // queried architecture
  double reward = 0.0;            // validation accuracy (the search signal)
  double elapsed_seconds = 0.0;   // simulated clock after this query
  double incumbent = 0.0;         // best reward so far, nondecreasing
  bool operator==(const TraceEvent&) const = default;
};

enum class StopReason { budget, queries, exhausted, target };
std::string to_string(StopReason r);

struct SearchTrace {
  std::vector<TraceEvent> events;
  StopReason reason = StopReason::budget;
};

// 1-based step at which `key` was queried, or -1 if never.
int64_t queries_to_key(const SearchTrace& trace, const CanonicalKey& key);

// One JSON object per line: {"step", "id" (hex), "reward", "elapsed_seconds",
// "incumbent"}. The terminal reason is not part of the file.
void save_trace(const SearchTrace& trace, const std::string& path);
std::vector<TraceEvent> load_trace_events(const std::string& path);

// ---- hyperparameters -----------------------------------------------------------

struct ReinforceHyper {
  int64_t lstm_hidden = 128;
  int64_t action_dim = 16;        // must equal the table dimension
  double lr = 1e-2;
  int archs_per_episode = 16;
  double discount = 0.8;
  double baseline = 0.95;         // fixed constant subtracted from returns
  bool bandit_mode = false;       // treat episode samples as independent draws
  bool ema_baseline = false;      // replace the constant with a running mean
  double ema_decay = 0.9;
};

struct DngoHyper {
  int64_t basis_hidden = 128;
  int top_k_per_round = 5;
  int retrain_epochs = 100;
  double ei_incumbent = 0.95;     // fixed improvement threshold
  bool running_incumbent = false; // use the best observed reward instead
  int init_samples = 16;
  double lr = 1e-2;               // Adam rate for the basis network
};

// ---- Bayesian linear regression and expected improvement -----------------------

struct BlrPosterior {
  double alpha = 1.0;             // prior weight precision
  double beta = 100.0;            // observation noise precision
  std::vector<double> mean;       // F weights
  std::vector<double> cov;        // F x F posterior covariance, row-major

  // Predictive mean and variance at one feature vector.
  std::pair<double, double> predict(const std::vector<double>& phi) const;
};

// Exact posterior at the given precisions: S^-1 = alpha I + beta Phi^T Phi,
// m = beta S Phi^T y. Escalating diagonal jitter on factorization failure, then
// SingularSystem.
BlrPosterior blr_posterior(const std::vector<std::vector<double>>& phi,
                           const std::vector<double>& y, double alpha, double beta);

// Evidence-maximizing precisions via the standard fixed-point iteration,
// starting from (alpha0, beta0), at most max_iters sweeps. Degenerate or
// non-finite updates fall back to (1, 100).
std::pair<double, double> fit_evidence(const std::vector<std::vector<double>>& phi,
                                       const std::vector<double>& y, double alpha0 = 1.0,
                                       double beta0 = 100.0, int max_iters = 50);

// Maximization-form expected improvement: (mu - incumbent) CDF(u) + sigma PDF(u)
// with u = (mu - incumbent) / sigma; sigma = 0 degrades to max(mu - incumbent, 0).
double expected_improvement(double mu, double sigma, double incumbent);

// ---- search drivers --------------------------------------------------------------

// Uniform queries without replacement over the table. Stops when the clock
// rejects the next query (reason budget/queries), the table is exhausted, or
// stop_on_key was just queried (reason target). Throws BudgetZero when the
// budget is nonpositive or the query budget is zero.
SearchTrace random_search(const NeighborIndex& index, const oracle::Oracle& orc,
                          oracle::BudgetClock clock, uint64_t seed,
                          const CanonicalKey* stop_on_key = nullptr);

// LSTM controller over latent actions: each step feeds the current architecture
// embedding (zeros at step 0 and after each episode reset), samples an action
// from a unit-covariance Gaussian around the emitted mean, retrieves the
// nearest unvisited architecture, and queries it. After every full episode the
// policy takes one Adam step on the discounted-return REINFORCE objective.
SearchTrace reinforce_search(const NeighborIndex& index, const oracle::Oracle& orc,
                             oracle::BudgetClock clock, const ReinforceHyper& hyper,
                             uint64_t seed, const CanonicalKey* stop_on_key = nullptr);

// Neural-basis Bayesian optimization: seed with init_samples uniform queries,
// then per round retrain a one-hidden-layer tanh network from scratch on the
// observed (embedding, reward) pool, fit Bayesian linear regression on its
// hidden features (plus a constant), score every unvisited row by expected
// improvement, and query the top_k (ties to the lowest id).
SearchTrace dngo_search(const NeighborIndex& index, const oracle::Oracle& orc,
                        oracle::BudgetClock clock, const DngoHyper& hyper, uint64_t seed,
                        const CanonicalKey* stop_on_key = nullptr);

// ---- exposed internals (deterministic pieces reused by tests) ---------------------

// Creates the controller parameters (ctrl.Wx, ctrl.Wh, ctrl.b, ctrl.head.W,
// ctrl.head.b) for the given sizes.
void init_controller(tc::ParamStore& ps, int64_t input_dim, int64_t hidden, int64_t action_dim,
                     Rng& rng);

// Recomputes the episode forward pass from recorded states and actions,
// accumulates the REINFORCE gradients into ps, and returns the surrogate loss
// sum_t advantage_t * 0.5 ||action_t - mean_t||^2 whose gradient is the
// negative policy gradient. baseline_override, when given, replaces the
// constant baseline (used for the EMA mode).
double reinforce_episode_update(tc::ParamStore& ps, const std::vector<std::vector<double>>& states,
                                const std::vector<std::vector<double>>& actions,
                                const std::vector<double>& rewards, const ReinforceHyper& hyper,
                                const double* baseline_override = nullptr);

// Discounted suffix returns G_t = sum_k discount^k r_{t+k}; bandit mode returns
// each reward unchanged.
std::vector<double> episode_returns(const std::vector<double>& rewards, double discount,
                                    bool bandit_mode);

}  // namespace lnas::search
