#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lnas/archspace.hpp"
#include "lnas/common.hpp"
#include "lnas/tensorcore.hpp"

// Variational graph autoencoder over fixed-shape cells. The encoder stacks
// message-passing layers (sum aggregation with a trainable self-weight by
// default, symmetric-normalized averaging for the ablation variants), each
// followed by a linear-batchnorm-ReLU block. Two linear heads produce per-node
// Gaussian means and log-variances; edges decode from latent inner products and
// op labels from a linear layer with a row softmax.

namespace lnas::vgae {

struct EmptyDataset : Error { using Error::Error; };
struct ModelMismatch : Error { using Error::Error; };

enum class Aggregation { sum_eps, norm_avg };  // GIN-style vs GCN-style mixing

std::string to_string(Aggregation a);
Aggregation aggregation_from_string(const std::string& s);

struct EncoderConfig {
  std::vector<int64_t> hidden{128, 128, 128, 128, 16};  // last entry = latent dim
  Aggregation aggregation = Aggregation::sum_eps;
  bool variational = true;  // false: deterministic z = mu, no KL, no noise
  double kl_weight = 1.0;   // 0 drops the divergence term but keeps sampling

  int64_t latent_dim() const { return hidden.back(); }
  bool operator==(const EncoderConfig&) const = default;

  std::string to_json() const;
  static EncoderConfig from_json(const std::string& text);
};

// Per-node posterior for one cell plus the pooled representation (column sum of
// node_mu, eval-mode normalization).
struct LatentPoint {
  tc::Tensor node_mu;                  // N x d
  tc::Tensor node_sigma;               // N x d, empty when not variational
  std::vector<double> cell_embedding;  // d
};

struct ElboStats {
  double loss = 0.0;     // -(recon_a + recon_x) + kl_weight * kl, per cell
  double recon_a = 0.0;  // Bernoulli log-likelihood of the upper triangle, per cell
  double recon_x = 0.0;  // categorical log-likelihood of active-row ops, per cell
  double kl = 0.0;       // divergence from the unit Gaussian prior, per cell
};

struct EpochStats {
  int epoch = 0;
  double loss = 0.0;
  double recon_a = 0.0;
  double recon_x = 0.0;
  double kl = 0.0;
  double heldout_recon_acc = 0.0;  // percent
};

struct TrainHyper {
  double lr = 1e-3;
  int batch_size = 32;
  int max_epochs = 10;
  int min_epochs = 3;  // early stop never fires before this many epochs
  double heldout_fraction = 0.10;
  bool stop_at_full_recon = true;  // stop once held-out reconstruction hits 100%
  uint64_t seed = 0;
};

class Model {
 public:
  Model(const arch::SearchSpaceSpec& spec, EncoderConfig cfg, uint64_t init_seed);

  const arch::SearchSpaceSpec& spec() const { return spec_; }
  const EncoderConfig& config() const { return cfg_; }
  tc::ParamStore& params() { return ps_; }
  const tc::ParamStore& params() const { return ps_; }

  // Loss over a batch, optionally with exact gradients accumulated into the
  // store. training selects batch-statistics normalization (and updates running
  // stats); eval mode reads the running stats. When variational, the
  // reparameterization noise comes from frozen_noise (batch*N x d) if given,
  // else is drawn from rng.
  ElboStats elbo_batch(const std::vector<arch::EncodedCell>& batch, bool training,
                       bool with_grads, const tc::Tensor* frozen_noise = nullptr,
                       Rng* rng = nullptr);

  // Eval-mode posterior for one cell; z is taken at the mean.
  LatentPoint encode_cell(const arch::EncodedCell& cell) const;
  std::vector<double> cell_embedding(const arch::CellGraph& cell) const;

  // z = mu + sigma * eta with eta ~ N(0, I) drawn from rng.
  tc::Tensor reparameterize(const tc::Tensor& node_mu, const tc::Tensor& node_sigma,
                            Rng& rng) const;

  // Edge probabilities sigmoid(z_i . z_j) for one cell's latent matrix (N x d).
  tc::Tensor decode_edge_probs(const tc::Tensor& node_z) const;
  // Row-stochastic op probabilities (N x K).
  tc::Tensor decode_op_probs(const tc::Tensor& node_z) const;
  // Thresholded decode: edge iff probability strictly above 0.5 on the strict
  // upper triangle, op = row argmax (ties to the lowest index). Validity is the
  // caller's concern.
  arch::CellGraph decode_point(const tc::Tensor& node_z) const;

  // encode -> decode_point round trip equals the input exactly.
  bool reconstructs(const arch::CellGraph& cell) const;

  void save(const std::string& path, const std::string& extra_meta_json = "{}") const;
  static Model load(const std::string& path, const arch::SearchSpaceSpec& spec);

 private:
  Model(const arch::SearchSpaceSpec& spec, EncoderConfig cfg);  // uninitialized params

  struct Forward;  // per-batch activations
  void encode_forward(const std::vector<arch::EncodedCell>& batch, bool training,
                      Forward& fwd) const;

  arch::SearchSpaceSpec spec_;
  EncoderConfig cfg_;
  tc::ParamStore ps_;
};

struct TrainResult {
  std::vector<EpochStats> history;
  size_t n_train = 0;
  size_t n_heldout = 0;
  std::vector<int64_t> heldout_indices;  // into the input dataset
};

// Mini-batch Adam on the ELBO with a deterministic 90/10 split drawn from
// hyper.seed. History carries per-epoch averages and held-out reconstruction.
TrainResult train(Model& model, const std::vector<arch::CellGraph>& dataset,
                  const TrainHyper& hyper);

// ---- file formats ----------------------------------------------------------

struct EmbeddingRow {
  int64_t id = 0;
  std::vector<double> values;
  bool operator==(const EmbeddingRow&) const = default;
};

// One JSON object per line: {"id": ..., "embedding": [...]}.
void save_embeddings(const std::vector<EmbeddingRow>& rows, const std::string& path);
std::vector<EmbeddingRow> load_embeddings(const std::string& path);

// One JSON object per line: {"epoch", "loss", "recon_a", "recon_x", "kl",
// "heldout_recon_acc"}.
void save_history(const std::vector<EpochStats>& history, const std::string& path);
std::vector<EpochStats> load_history(const std::string& path);

// Eval-mode embeddings for every record, order preserved. workers <= 0 means
// sequential; params are shared read-only across threads.
std::vector<EmbeddingRow> embed_dataset(const Model& model,
                                        const std::vector<arch::DatasetRecord>& records,
                                        int workers = 0);

}  // namespace lnas::vgae
