#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "lnas/archspace.hpp"
#include "lnas/common.hpp"
#include "lnas/search.hpp"
#include "lnas/tensorcore.hpp"
#include "lnas/vgae.hpp"

// Evaluation of a pre-trained latent space: reconstruction accuracy on held-out
// cells, validity and uniqueness of decodes from a rescaled prior, Gaussian-
// process predictive fit of accuracies from embeddings, the L2-versus-edit-
// distance profile along a random walk, greedy nearest-neighbor decode chains,
// and the encoder-variant ablation harness.

namespace lnas::gen {

struct EmptySet : Error { using Error::Error; };
struct SingularKernel : Error { using Error::Error; };
struct ExhaustedTable : Error { using Error::Error; };

// ---- pre-training report -----------------------------------------------------

struct PretrainReport {
  double reconstruction_accuracy_pct = 0.0;
  int64_t reconstruction_n = 0;  // held-out cells evaluated
  double validity_pct = 0.0;
  int64_t validity_n = 0;        // prior samples drawn
  double uniqueness_pct = 0.0;
  int64_t uniqueness_n = 0;      // valid decodes entering uniqueness

  std::string to_json() const;
  static PretrainReport from_json(const std::string& text);
  bool operator==(const PretrainReport&) const = default;
};

// Percentage of cells whose encode -> decode round trip is exact.
double reconstruction_accuracy(const vgae::Model& model,
                               const std::vector<arch::CellGraph>& heldout);

// Per-node-per-dimension mean and population standard deviation of node_mu over
// the training cells; used to rescale unit-Gaussian prior samples.
struct LatentScaler {
  tc::Tensor mean;    // N x d
  tc::Tensor stddev;  // N x d
};
LatentScaler train_latent_stats(const vgae::Model& model,
                                const std::vector<arch::CellGraph>& train);

struct PriorSampleResult {
  int64_t n = 0;                        // samples drawn
  std::vector<arch::CellGraph> valid;   // decodes that passed validation
  double validity_pct() const { return n == 0 ? 0.0 : 100.0 * double(valid.size()) / double(n); }
};
// Draws node_z ~ N(0, I) elementwise, rescales by the train statistics, decodes
// and validates. Deterministic given seed.
PriorSampleResult sample_prior(const vgae::Model& model, const LatentScaler& scaler, int n,
                               uint64_t seed);
double prior_validity(const vgae::Model& model, const LatentScaler& scaler, int n, uint64_t seed);

// Distinct canonical keys / count, as a percentage. Throws EmptySet.
double uniqueness(const std::vector<arch::CellGraph>& cells, const arch::SearchSpaceSpec& spec);

// Reconstruction + prior validity + uniqueness for one trained model.
PretrainReport pretrain_report(const vgae::Model& model,
                               const std::vector<arch::CellGraph>& train,
                               const std::vector<arch::CellGraph>& heldout, int n_prior,
                               uint64_t seed);

// ---- Gaussian-process predictive fit -------------------------------------------

// Exact GP regression with an RBF kernel on a centered target. Hyperparameters
// (length scale, signal variance, noise variance) start from the median
// heuristic and are refined by backtracking gradient ascent on the log marginal
// likelihood; noise variance never drops below 1e-6. Deterministic.
struct GpModel {
  std::vector<std::vector<double>> X;
  std::vector<double> alpha;  // K^{-1} (y - y_mean)
  double y_mean = 0.0;
  double lengthscale = 1.0;
  double signal_var = 1.0;
  double noise_var = 1e-6;
  double lml = 0.0;

  double predict(const std::vector<double>& x) const;  // posterior mean
};
GpModel fit_gp(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
               int max_iters = 80);

struct PredictiveFit {
  std::vector<uint64_t> seeds;
  std::vector<double> rmse;       // per seed
  std::vector<double> pearson_r;  // per seed; NaN when undefined
  int64_t n_train = 250;
  double accuracy_floor = 0.8;
  bool degenerate = false;  // some seed had an undefined correlation or empty test set

  double rmse_mean() const;
  double rmse_std() const;
  double pearson_mean() const;
  double pearson_std() const;

  std::string to_json() const;
  static PredictiveFit from_json(const std::string& text);
};

// Per seed: sample n_train rows without replacement, fit a GP from embeddings to
// accuracies, predict every remaining row, and score RMSE / Pearson r over the
// rows whose true accuracy exceeds the floor.
PredictiveFit predictive_fit(const std::vector<std::vector<double>>& embeddings,
                             const std::vector<double>& accuracies, int64_t n_train = 250,
                             double floor = 0.8, int n_seeds = 10, uint64_t base_seed = 0);

// ---- latent-space geometry -------------------------------------------------------

struct L2EditProfile {
  std::map<int, std::vector<double>> by_edit;  // edit distance -> embedding L2 samples
};

// Random walk of walk_len steps from a uniformly sampled start; records the
// (edit distance, embedding L2) of every pair at most `window` steps apart,
// keeping edit distances 0..10.
L2EditProfile l2_edit_profile(const vgae::Model& model, const arch::SearchSpaceSpec& spec,
                              int walk_len = 1000, uint64_t seed = 0, int window = 10);

std::map<int, double> median_l2_by_edit(const L2EditProfile& profile);

// Spearman rank correlation with average ranks on ties. NaN when either side is
// constant.
double spearman_rho(const std::vector<double>& a, const std::vector<double>& b);

// CSV {edit_distance, l2}, one row per sample, sorted by edit distance.
void save_profile_csv(const L2EditProfile& profile, const std::string& path);
L2EditProfile load_profile_csv(const std::string& path);

// ---- decoded nearest-neighbor chains ----------------------------------------------

struct Chain {
  std::vector<size_t> rows;  // table rows in visit order, starting with the seed row
  std::vector<int> edits;    // consecutive edit distances (rows.size() - 1 entries)
  double mean_edit() const;
};

// Greedy nearest-neighbor chain by embedding L2, never revisiting a row.
// cells[i] must describe table row i. Throws ExhaustedTable when length exceeds
// the table size.
Chain neighbor_sequence(const search::NeighborIndex& index,
                        const std::vector<arch::CellGraph>& cells, size_t start_row, int length);

// Uniform chain without replacement over the same rows, same start.
Chain random_sequence(const std::vector<arch::CellGraph>& cells, size_t start_row, int length,
                      uint64_t seed);

// One-sided exact sign test: probability of at least `wins` successes in
// wins + losses fair coin flips.
double sign_test_p(int wins, int losses);

// ---- encoder-variant ablations ------------------------------------------------------

struct AblationRow {
  std::string variant;
  vgae::EncoderConfig config;
  PretrainReport report;
};

// arch2vec (sum aggregation, variational, KL on), arch2vec-no-KL, GAE
// (normalized averaging, deterministic), VGAE (normalized averaging,
// variational, KL on).
std::vector<std::pair<std::string, vgae::EncoderConfig>> default_ablation_variants();

// Trains every variant with identical data, split, and seeds, then reports the
// three pre-training metrics for each.
std::vector<AblationRow> ablation_suite(
    const std::vector<arch::CellGraph>& dataset, const arch::SearchSpaceSpec& spec,
    const vgae::TrainHyper& hyper, int n_prior = 10000, uint64_t metrics_seed = 0,
    uint64_t init_seed = 0,
    const std::vector<std::pair<std::string, vgae::EncoderConfig>>& variants =
        default_ablation_variants());

}  // namespace lnas::gen
