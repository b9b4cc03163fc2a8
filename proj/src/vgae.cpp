#include "lnas/vgae.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <thread>

#include <nlohmann/json.hpp>

namespace lnas::vgae {

using json = nlohmann::json;
using tc::Tensor;

std::string to_string(Aggregation a) {
  return a == Aggregation::sum_eps ? "sum_eps" : "norm_avg";
}

Aggregation aggregation_from_string(const std::string& s) {
  if (s == "sum_eps") return Aggregation::sum_eps;
  if (s == "norm_avg") return Aggregation::norm_avg;
  throw ModelMismatch("unknown aggregation '" + s + "'");
}

std::string EncoderConfig::to_json() const {
  json j;
  j["hidden"] = hidden;
  j["aggregation"] = vgae::to_string(aggregation);
  j["variational"] = variational;
  j["kl_weight"] = kl_weight;
  return j.dump();
}

EncoderConfig EncoderConfig::from_json(const std::string& text) {
  json j = json::parse(text);
  EncoderConfig cfg;
  cfg.hidden = j.at("hidden").get<std::vector<int64_t>>();
  cfg.aggregation = aggregation_from_string(j.at("aggregation").get<std::string>());
  cfg.variational = j.at("variational").get<bool>();
  cfg.kl_weight = j.at("kl_weight").get<double>();
  return cfg;
}

namespace {

std::string layer_name(int k, const char* leaf) {
  return "enc.l" + std::to_string(k) + "." + leaf;
}

// Stable Bernoulli log-likelihood of label a under logit e.
double bernoulli_ll(double a, double e) {
  return a * e - std::max(e, 0.0) - std::log1p(std::exp(-std::abs(e)));
}

}  // namespace

struct Model::Forward {
  int64_t B = 0, N = 0, K = 0, d = 0;
  std::vector<Tensor> mixers;  // per cell: N x N symmetric neighbor weights
  std::vector<Tensor> hs;      // hs[0] = stacked X; hs[k] = layer k output
  std::vector<Tensor> agg;     // aggregated input per layer
  std::vector<tc::LinearCache> lin;
  std::vector<tc::BatchNormCache> bn;
  std::vector<tc::ReluCache> rl;
  Tensor mu, logvar, sigma;  // (B*N, d)
  tc::LinearCache mu_cache, lv_cache;
};

Model::Model(const arch::SearchSpaceSpec& spec, EncoderConfig cfg) : spec_(spec), cfg_(std::move(cfg)) {
  if (cfg_.hidden.empty()) throw ModelMismatch("encoder needs at least one layer");
  for (auto h : cfg_.hidden)
    if (h < 1) throw ModelMismatch("hidden sizes must be positive");
}

Model::Model(const arch::SearchSpaceSpec& spec, EncoderConfig cfg, uint64_t init_seed)
    : Model(spec, std::move(cfg)) {
  Rng rng(init_seed);
  const int64_t K = spec_.num_ops();
  const int64_t d = cfg_.latent_dim();
  const int L = int(cfg_.hidden.size());
  for (int k = 0; k < L; ++k) {
    const int64_t in = k == 0 ? K : cfg_.hidden[size_t(k) - 1];
    const int64_t out = cfg_.hidden[size_t(k)];
    // no linear bias: the following batchnorm's beta supplies the shift, and a
    // pre-normalization bias would have an identically zero training gradient
    tc::glorot_init(ps_.create(layer_name(k, "W"), {in, out}), rng);
    ps_.create(layer_name(k, "bn.gamma"), {out}).fill(1.0);
    ps_.create(layer_name(k, "bn.beta"), {out});
    ps_.create(layer_name(k, "bn.running_mean"), {out}, /*trainable=*/false);
    ps_.create(layer_name(k, "bn.running_var"), {out}, /*trainable=*/false).fill(1.0);
    if (cfg_.aggregation == Aggregation::sum_eps) ps_.create(layer_name(k, "eps"), {1});
  }
  tc::glorot_init(ps_.create("head.mu.W", {d, d}), rng);
  ps_.create("head.mu.b", {d});
  if (cfg_.variational) {
    tc::glorot_init(ps_.create("head.lv.W", {d, d}), rng);
    ps_.create("head.lv.b", {d});
  }
  tc::glorot_init(ps_.create("dec.op.W", {d, K}), rng);
  ps_.create("dec.op.b", {K});
}

void Model::encode_forward(const std::vector<arch::EncodedCell>& batch, bool training,
                           Forward& fwd) const {
  const int64_t N = spec_.max_nodes;
  const int64_t K = spec_.num_ops();
  const int64_t B = int64_t(batch.size());
  fwd.B = B;
  fwd.N = N;
  fwd.K = K;
  fwd.d = cfg_.latent_dim();

  Tensor h0 = Tensor::zeros({B * N, K});
  fwd.mixers.clear();
  fwd.mixers.reserve(size_t(B));
  for (int64_t b = 0; b < B; ++b) {
    const auto& cell = batch[size_t(b)];
    if (cell.N != N || cell.K != K)
      throw ModelMismatch("encoded cell shape does not match the model's space");
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < K; ++j)
        h0.at(b * N + i, j) = double(cell.X[size_t(i * K + j)]);

    Tensor mix = Tensor::zeros({N, N});
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = i + 1; j < N; ++j)
        if (cell.A[size_t(i * N + j)]) {
          mix.at(i, j) = 1.0;
          mix.at(j, i) = 1.0;
        }
    if (cfg_.aggregation == Aggregation::norm_avg) {
      for (int64_t i = 0; i < N; ++i) mix.at(i, i) = 1.0;  // self loop
      std::vector<double> dinv(static_cast<size_t>(N));
      for (int64_t i = 0; i < N; ++i) {
        double deg = 0.0;
        for (int64_t j = 0; j < N; ++j) deg += mix.at(i, j);
        dinv[size_t(i)] = 1.0 / std::sqrt(deg);
      }
      for (int64_t i = 0; i < N; ++i)
        for (int64_t j = 0; j < N; ++j) mix.at(i, j) *= dinv[size_t(i)] * dinv[size_t(j)];
    }
    fwd.mixers.push_back(std::move(mix));
  }

  const int L = int(cfg_.hidden.size());
  fwd.hs.assign(size_t(L) + 1, Tensor());
  fwd.agg.assign(size_t(L), Tensor());
  fwd.lin.assign(size_t(L), tc::LinearCache());
  fwd.bn.assign(size_t(L), tc::BatchNormCache());
  fwd.rl.assign(size_t(L), tc::ReluCache());
  fwd.hs[0] = std::move(h0);

  // Eval mode never writes the running stats, so the cast below stays honest for
  // const callers; training mode is only reached through non-const entry points.
  auto& ps = const_cast<tc::ParamStore&>(ps_);
  for (int k = 0; k < L; ++k) {
    const Tensor& hin = fwd.hs[size_t(k)];
    const int64_t in_dim = hin.shape[1];
    const double self_w =
        cfg_.aggregation == Aggregation::sum_eps ? 1.0 + ps_.value(layer_name(k, "eps")).at(0) : 0.0;
    Tensor agg = Tensor::zeros({B * N, in_dim});
    for (int64_t b = 0; b < B; ++b) {
      const Tensor& mix = fwd.mixers[size_t(b)];
      for (int64_t i = 0; i < N; ++i) {
        double* out = &agg.data[size_t((b * N + i) * in_dim)];
        const double* self_row = &hin.data[size_t((b * N + i) * in_dim)];
        if (self_w != 0.0)
          for (int64_t c = 0; c < in_dim; ++c) out[c] += self_w * self_row[c];
        for (int64_t j = 0; j < N; ++j) {
          const double w = mix.at(i, j);
          if (w == 0.0) continue;
          const double* nb = &hin.data[size_t((b * N + j) * in_dim)];
          for (int64_t c = 0; c < in_dim; ++c) out[c] += w * nb[c];
        }
      }
    }
    fwd.agg[size_t(k)] = std::move(agg);
    const Tensor zero_bias = Tensor::zeros({ps_.value(layer_name(k, "W")).shape[1]});
    Tensor pre = tc::linear(fwd.agg[size_t(k)], ps_.value(layer_name(k, "W")), zero_bias,
                            &fwd.lin[size_t(k)]);
    Tensor normed = tc::batchnorm(pre, ps_.value(layer_name(k, "bn.gamma")),
                                  ps_.value(layer_name(k, "bn.beta")),
                                  ps.value(layer_name(k, "bn.running_mean")),
                                  ps.value(layer_name(k, "bn.running_var")), training,
                                  &fwd.bn[size_t(k)]);
    fwd.hs[size_t(k) + 1] = tc::relu(normed, &fwd.rl[size_t(k)]);
  }

  fwd.mu = tc::linear(fwd.hs[size_t(L)], ps_.value("head.mu.W"), ps_.value("head.mu.b"),
                      &fwd.mu_cache);
  if (cfg_.variational) {
    fwd.logvar = tc::linear(fwd.hs[size_t(L)], ps_.value("head.lv.W"), ps_.value("head.lv.b"),
                            &fwd.lv_cache);
    fwd.sigma = fwd.logvar;
    for (auto& v : fwd.sigma.data) v = std::exp(0.5 * v);
  }
}

ElboStats Model::elbo_batch(const std::vector<arch::EncodedCell>& batch, bool training,
                            bool with_grads, const tc::Tensor* frozen_noise, Rng* rng) {
  if (batch.empty()) throw EmptyDataset("elbo over an empty batch");
  Forward fwd;
  encode_forward(batch, training, fwd);
  const int64_t B = fwd.B, N = fwd.N, K = fwd.K, d = fwd.d;

  Tensor eta;
  Tensor z;
  if (cfg_.variational) {
    if (frozen_noise) {
      if (frozen_noise->shape != std::vector<int64_t>{B * N, d})
        throw tc::ShapeMismatch("frozen noise shape");
      eta = *frozen_noise;
    } else {
      if (!rng) throw ModelMismatch("variational elbo needs a noise source");
      eta = Tensor::zeros({B * N, d});
      for (auto& v : eta.data) v = rng->gaussian();
    }
    z = fwd.mu;
    for (size_t i = 0; i < z.data.size(); ++i) z.data[i] += fwd.sigma.data[i] * eta.data[i];
  } else {
    z = fwd.mu;
  }

  // Edge reconstruction over the strict upper triangle, per cell.
  double ll_a = 0.0;
  Tensor gz = with_grads ? Tensor::zeros({B * N, d}) : Tensor();
  for (int64_t b = 0; b < B; ++b) {
    const auto& A = batch[size_t(b)].A;
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = i + 1; j < N; ++j) {
        const double* zi = &z.data[size_t((b * N + i) * d)];
        const double* zj = &z.data[size_t((b * N + j) * d)];
        double e = 0.0;
        for (int64_t c = 0; c < d; ++c) e += zi[c] * zj[c];
        const double a = double(A[size_t(i * N + j)]);
        ll_a += bernoulli_ll(a, e);
        if (with_grads) {
          const double ge = (1.0 / (1.0 + std::exp(-e)) - a) / double(B);
          double* gi = &gz.data[size_t((b * N + i) * d)];
          double* gj = &gz.data[size_t((b * N + j) * d)];
          for (int64_t c = 0; c < d; ++c) {
            gi[c] += ge * zj[c];
            gj[c] += ge * zi[c];
          }
        }
      }
  }

  // Op reconstruction over active (non-padding) rows.
  tc::LinearCache op_cache;
  Tensor logits = tc::linear(z, ps_.value("dec.op.W"), ps_.value("dec.op.b"), &op_cache);
  double ll_x = 0.0;
  Tensor glogits = with_grads ? Tensor::zeros({B * N, K}) : Tensor();
  for (int64_t b = 0; b < B; ++b) {
    const auto& X = batch[size_t(b)].X;
    for (int64_t i = 0; i < N; ++i) {
      int64_t label = -1;
      for (int64_t k = 0; k < K; ++k)
        if (X[size_t(i * K + k)]) {
          label = k;
          break;
        }
      if (label < 0) continue;  // padding row
      const int64_t r = b * N + i;
      double mx = logits.at(r, 0);
      for (int64_t k = 1; k < K; ++k) mx = std::max(mx, logits.at(r, k));
      double sum = 0.0;
      for (int64_t k = 0; k < K; ++k) sum += std::exp(logits.at(r, k) - mx);
      const double lse = mx + std::log(sum);
      ll_x += logits.at(r, label) - lse;
      if (with_grads)
        for (int64_t k = 0; k < K; ++k) {
          const double p = std::exp(logits.at(r, k) - lse);
          glogits.at(r, k) = (p - (k == label ? 1.0 : 0.0)) / double(B);
        }
    }
  }

  double kl = 0.0;
  if (cfg_.variational) {
    for (size_t i = 0; i < fwd.mu.data.size(); ++i) {
      const double mu = fwd.mu.data[i], lv = fwd.logvar.data[i];
      kl += 0.5 * (mu * mu + std::exp(lv) - 1.0 - lv);
    }
  }

  ElboStats stats;
  stats.recon_a = ll_a / double(B);
  stats.recon_x = ll_x / double(B);
  stats.kl = kl / double(B);
  stats.loss = -(stats.recon_a + stats.recon_x) + cfg_.kl_weight * stats.kl;

  if (!with_grads) return stats;

  Tensor gz_op, gWo, gbo;
  tc::linear_backward(glogits, op_cache, ps_.value("dec.op.W"), &gz_op, &gWo, &gbo);
  ps_.accumulate("dec.op.W", gWo);
  ps_.accumulate("dec.op.b", gbo);
  for (size_t i = 0; i < gz.data.size(); ++i) gz.data[i] += gz_op.data[i];

  Tensor gmu = gz;
  Tensor glv;
  if (cfg_.variational) {
    glv = Tensor::zeros({B * N, d});
    for (size_t i = 0; i < glv.data.size(); ++i)
      glv.data[i] = gz.data[i] * 0.5 * fwd.sigma.data[i] * eta.data[i];
    if (cfg_.kl_weight != 0.0) {
      const double w = cfg_.kl_weight / double(B);
      for (size_t i = 0; i < gmu.data.size(); ++i) {
        gmu.data[i] += w * fwd.mu.data[i];
        glv.data[i] += w * 0.5 * (std::exp(fwd.logvar.data[i]) - 1.0);
      }
    }
  }

  Tensor ghead, gW, gb;
  tc::linear_backward(gmu, fwd.mu_cache, ps_.value("head.mu.W"), &ghead, &gW, &gb);
  ps_.accumulate("head.mu.W", gW);
  ps_.accumulate("head.mu.b", gb);
  if (cfg_.variational) {
    Tensor ghead2;
    tc::linear_backward(glv, fwd.lv_cache, ps_.value("head.lv.W"), &ghead2, &gW, &gb);
    ps_.accumulate("head.lv.W", gW);
    ps_.accumulate("head.lv.b", gb);
    for (size_t i = 0; i < ghead.data.size(); ++i) ghead.data[i] += ghead2.data[i];
  }

  const int L = int(cfg_.hidden.size());
  Tensor gh = std::move(ghead);
  for (int k = L - 1; k >= 0; --k) {
    Tensor gnormed;
    tc::relu_backward(gh, fwd.rl[size_t(k)], &gnormed);
    Tensor gpre, ggamma, gbeta;
    tc::batchnorm_backward(gnormed, fwd.bn[size_t(k)], ps_.value(layer_name(k, "bn.gamma")),
                           &gpre, &ggamma, &gbeta);
    ps_.accumulate(layer_name(k, "bn.gamma"), ggamma);
    ps_.accumulate(layer_name(k, "bn.beta"), gbeta);
    Tensor gagg, gWk;
    tc::linear_backward(gpre, fwd.lin[size_t(k)], ps_.value(layer_name(k, "W")), &gagg, &gWk,
                        nullptr);
    ps_.accumulate(layer_name(k, "W"), gWk);

    const Tensor& hin = fwd.hs[size_t(k)];
    const int64_t in_dim = hin.shape[1];
    const double self_w =
        cfg_.aggregation == Aggregation::sum_eps ? 1.0 + ps_.value(layer_name(k, "eps")).at(0) : 0.0;
    Tensor ghin = Tensor::zeros({B * N, in_dim});
    double geps = 0.0;
    for (int64_t b = 0; b < B; ++b) {
      const Tensor& mix = fwd.mixers[size_t(b)];
      for (int64_t i = 0; i < N; ++i) {
        const double* grow = &gagg.data[size_t((b * N + i) * in_dim)];
        double* gself = &ghin.data[size_t((b * N + i) * in_dim)];
        if (self_w != 0.0)
          for (int64_t c = 0; c < in_dim; ++c) gself[c] += self_w * grow[c];
        for (int64_t j = 0; j < N; ++j) {
          const double w = mix.at(i, j);  // symmetric mixer
          if (w == 0.0) continue;
          double* gnb = &ghin.data[size_t((b * N + j) * in_dim)];
          for (int64_t c = 0; c < in_dim; ++c) gnb[c] += w * grow[c];
        }
        if (cfg_.aggregation == Aggregation::sum_eps) {
          const double* self_row = &hin.data[size_t((b * N + i) * in_dim)];
          for (int64_t c = 0; c < in_dim; ++c) geps += grow[c] * self_row[c];
        }
      }
    }
    if (cfg_.aggregation == Aggregation::sum_eps)
      ps_.accumulate(layer_name(k, "eps"), Tensor::of({1}, {geps}));
    gh = std::move(ghin);
  }
  return stats;
}

LatentPoint Model::encode_cell(const arch::EncodedCell& cell) const {
  Forward fwd;
  encode_forward({cell}, /*training=*/false, fwd);
  LatentPoint pt;
  pt.node_mu = std::move(fwd.mu);
  if (cfg_.variational) pt.node_sigma = std::move(fwd.sigma);
  pt.cell_embedding.assign(size_t(fwd.d), 0.0);
  for (int64_t i = 0; i < fwd.N; ++i)
    for (int64_t c = 0; c < fwd.d; ++c) pt.cell_embedding[size_t(c)] += pt.node_mu.at(i, c);
  return pt;
}

std::vector<double> Model::cell_embedding(const arch::CellGraph& cell) const {
  return encode_cell(arch::encode_cell(cell, spec_)).cell_embedding;
}

tc::Tensor Model::reparameterize(const Tensor& node_mu, const Tensor& node_sigma,
                                 Rng& rng) const {
  if (!node_mu.same_shape(node_sigma)) throw tc::ShapeMismatch("mu/sigma shapes differ");
  Tensor z = node_mu;
  for (size_t i = 0; i < z.data.size(); ++i) z.data[i] += node_sigma.data[i] * rng.gaussian();
  return z;
}

tc::Tensor Model::decode_edge_probs(const Tensor& node_z) const {
  const int64_t N = node_z.shape[0], d = node_z.shape[1];
  Tensor p = Tensor::zeros({N, N});
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < N; ++j) {
      double e = 0.0;
      for (int64_t c = 0; c < d; ++c) e += node_z.at(i, c) * node_z.at(j, c);
      p.at(i, j) = 1.0 / (1.0 + std::exp(-e));
    }
  return p;
}

tc::Tensor Model::decode_op_probs(const Tensor& node_z) const {
  Tensor logits = tc::linear(node_z, ps_.value("dec.op.W"), ps_.value("dec.op.b"));
  return tc::row_softmax(logits);
}

arch::CellGraph Model::decode_point(const Tensor& node_z) const {
  const int64_t N = spec_.max_nodes;
  const int64_t K = spec_.num_ops();
  if (node_z.shape != std::vector<int64_t>{N, int64_t(cfg_.latent_dim())})
    throw tc::ShapeMismatch("latent matrix shape");
  Tensor edge_p = decode_edge_probs(node_z);
  Tensor op_p = decode_op_probs(node_z);

  arch::EncodedCell enc;
  enc.N = int(N);
  enc.K = int(K);
  enc.A.assign(size_t(N * N), 0);
  enc.X.assign(size_t(N * K), 0);
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = i + 1; j < N; ++j)
      if (edge_p.at(i, j) > 0.5) enc.A[size_t(i * N + j)] = 1;
  for (int64_t i = 0; i < N; ++i) {
    int64_t best = 0;
    for (int64_t k = 1; k < K; ++k)
      if (op_p.at(i, k) > op_p.at(i, best)) best = k;
    enc.X[size_t(i * K + best)] = 1;
  }
  return arch::decode_cell(enc, spec_);
}

bool Model::reconstructs(const arch::CellGraph& cell) const {
  LatentPoint pt = encode_cell(arch::encode_cell(cell, spec_));
  return decode_point(pt.node_mu) == cell;
}

void Model::save(const std::string& path, const std::string& extra_meta_json) const {
  json meta;
  meta["format"] = "latentnas-vgae";
  meta["space"] = spec_.fingerprint();
  meta["config"] = json::parse(cfg_.to_json());
  meta["extra"] = json::parse(extra_meta_json);
  tc::save_checkpoint(path, ps_, meta.dump());
}

Model Model::load(const std::string& path, const arch::SearchSpaceSpec& spec) {
  tc::ParamStore ps;
  const std::string meta_text = tc::load_checkpoint(path, ps);
  json meta = json::parse(meta_text, nullptr, /*allow_exceptions=*/false);
  if (meta.is_discarded() || !meta.contains("format") || meta["format"] != "latentnas-vgae")
    throw ModelMismatch("'" + path + "' is not a model checkpoint");
  if (meta.at("space").get<std::string>() != spec.fingerprint())
    throw ModelMismatch("checkpoint was trained on a different space");
  Model model(spec, EncoderConfig::from_json(meta.at("config").dump()));
  model.ps_ = std::move(ps);
  if (!model.ps_.has("head.mu.W") || !model.ps_.has("dec.op.W"))
    throw ModelMismatch("checkpoint is missing encoder/decoder parameters");
  return model;
}

TrainResult train(Model& model, const std::vector<arch::CellGraph>& dataset,
                  const TrainHyper& hyper) {
  if (dataset.empty()) throw EmptyDataset("cannot train on an empty dataset");
  const size_t n = dataset.size();
  size_t n_heldout = size_t(std::llround(double(n) * hyper.heldout_fraction));
  n_heldout = std::min(std::max<size_t>(n_heldout, n > 1 ? 1 : 0), n - 1);

  Rng root(hyper.seed);
  std::vector<int64_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng split_rng = root.fork(1);
  for (size_t i = n - 1; i > 0; --i)
    std::swap(order[i], order[size_t(split_rng.bounded(uint64_t(i) + 1))]);

  std::vector<int64_t> train_idx(order.begin(), order.end() - ptrdiff_t(n_heldout));
  std::vector<int64_t> heldout_idx(order.end() - ptrdiff_t(n_heldout), order.end());

  std::vector<arch::EncodedCell> train_enc;
  train_enc.reserve(train_idx.size());
  for (auto i : train_idx) train_enc.push_back(arch::encode_cell(dataset[size_t(i)], model.spec()));

  Rng noise_rng = root.fork(2);
  TrainResult result;
  result.n_train = train_idx.size();
  result.n_heldout = n_heldout;
  result.heldout_indices = heldout_idx;

  std::vector<size_t> batch_order(train_enc.size());
  std::iota(batch_order.begin(), batch_order.end(), 0);
  for (int epoch = 1; epoch <= hyper.max_epochs; ++epoch) {
    Rng shuffle_rng = root.fork(100 + uint64_t(epoch));
    for (size_t i = batch_order.size() - 1; i > 0; --i)
      std::swap(batch_order[i], batch_order[size_t(shuffle_rng.bounded(uint64_t(i) + 1))]);

    double loss_sum = 0, ra_sum = 0, rx_sum = 0, kl_sum = 0;
    size_t seen = 0;
    for (size_t start = 0; start < batch_order.size(); start += size_t(hyper.batch_size)) {
      const size_t stop = std::min(batch_order.size(), start + size_t(hyper.batch_size));
      std::vector<arch::EncodedCell> batch;
      batch.reserve(stop - start);
      for (size_t i = start; i < stop; ++i) batch.push_back(train_enc[batch_order[i]]);
      ElboStats stats = model.elbo_batch(batch, /*training=*/true, /*with_grads=*/true, nullptr,
                                         &noise_rng);
      model.params().adam_update(hyper.lr);
      const double w = double(stop - start);
      loss_sum += stats.loss * w;
      ra_sum += stats.recon_a * w;
      rx_sum += stats.recon_x * w;
      kl_sum += stats.kl * w;
      seen += stop - start;
    }

    size_t hits = 0;
    for (auto i : heldout_idx)
      if (model.reconstructs(dataset[size_t(i)])) ++hits;

    EpochStats es;
    es.epoch = epoch;
    es.loss = loss_sum / double(seen);
    es.recon_a = ra_sum / double(seen);
    es.recon_x = rx_sum / double(seen);
    es.kl = kl_sum / double(seen);
    es.heldout_recon_acc = n_heldout ? 100.0 * double(hits) / double(n_heldout) : 0.0;
    result.history.push_back(es);

    if (hyper.stop_at_full_recon && epoch >= hyper.min_epochs && n_heldout && hits == n_heldout)
      break;
  }
  return result;
}

// ---- file formats ----------------------------------------------------------

void save_embeddings(const std::vector<EmbeddingRow>& rows, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (const auto& row : rows) {
    json j;
    j["id"] = row.id;
    j["embedding"] = row.values;
    out << j.dump() << "\n";
  }
  if (!out) throw Error("write failure on '" + path + "'");
}

std::vector<EmbeddingRow> load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<EmbeddingRow> rows;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded() || !j.contains("id") || !j.contains("embedding"))
      throw arch::ParseError("bad embedding record at " + path + ":" + std::to_string(lineno));
    EmbeddingRow row;
    row.id = j["id"].get<int64_t>();
    row.values = j["embedding"].get<std::vector<double>>();
    rows.push_back(std::move(row));
  }
  return rows;
}

void save_history(const std::vector<EpochStats>& history, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw Error("cannot open '" + path + "' for writing");
  for (const auto& es : history) {
    json j;
    j["epoch"] = es.epoch;
    j["loss"] = es.loss;
    j["recon_a"] = es.recon_a;
    j["recon_x"] = es.recon_x;
    j["kl"] = es.kl;
    j["heldout_recon_acc"] = es.heldout_recon_acc;
    out << j.dump() << "\n";
  }
  if (!out) throw Error("write failure on '" + path + "'");
}

std::vector<EpochStats> load_history(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  std::vector<EpochStats> history;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    json j = json::parse(line, nullptr, /*allow_exceptions=*/false);
    if (j.is_discarded())
      throw arch::ParseError("bad history record at " + path + ":" + std::to_string(lineno));
    EpochStats es;
    es.epoch = j.at("epoch").get<int>();
    es.loss = j.at("loss").get<double>();
    es.recon_a = j.at("recon_a").get<double>();
    es.recon_x = j.at("recon_x").get<double>();
    es.kl = j.at("kl").get<double>();
    es.heldout_recon_acc = j.at("heldout_recon_acc").get<double>();
    history.push_back(es);
  }
  return history;
}

std::vector<EmbeddingRow> embed_dataset(const Model& model,
                                        const std::vector<arch::DatasetRecord>& records,
                                        int workers) {
  std::vector<EmbeddingRow> rows(records.size());
  auto run = [&](size_t lo, size_t hi) {
    for (size_t i = lo; i < hi; ++i) {
      rows[i].id = records[i].id;
      rows[i].values = model.cell_embedding(records[i].cell);
    }
  };
  if (workers <= 1 || records.size() < 2) {
    run(0, records.size());
    return rows;
  }
  const size_t w = std::min<size_t>(size_t(workers), records.size());
  std::vector<std::thread> threads;
  const size_t chunk = (records.size() + w - 1) / w;
  for (size_t t = 0; t < w; ++t) {
    const size_t lo = t * chunk;
    const size_t hi = std::min(records.size(), lo + chunk);
    if (lo >= hi) break;
    threads.emplace_back(run, lo, hi);
  }
  for (auto& th : threads) th.join();
  return rows;
}

}  // namespace lnas::vgae
