#include "lnas/genmetrics.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

namespace lnas::gen {

namespace {

constexpr double kNan = std::numeric_limits<double>::quiet_NaN();

double vec_mean(const std::vector<double>& v) {
  if (v.empty()) return kNan;
  return std::accumulate(v.begin(), v.end(), 0.0) / double(v.size());
}

// Mean/std over the finite entries only; sample std (n-1 denominator).
std::pair<double, double> finite_mean_std(const std::vector<double>& v) {
  std::vector<double> vals;
  for (double x : v)
    if (std::isfinite(x)) vals.push_back(x);
  if (vals.empty()) return {kNan, kNan};
  const double m = vec_mean(vals);
  if (vals.size() < 2) return {m, 0.0};
  double acc = 0.0;
  for (double x : vals) acc += (x - m) * (x - m);
  return {m, std::sqrt(acc / double(vals.size() - 1))};
}

double pearson(const std::vector<double>& a, const std::vector<double>& b) {
  const size_t n = a.size();
  if (n != b.size() || n < 2) return kNan;
  const double ma = vec_mean(a), mb = vec_mean(b);
  double sab = 0.0, saa = 0.0, sbb = 0.0;
  for (size_t i = 0; i < n; ++i) {
    sab += (a[i] - ma) * (b[i] - mb);
    saa += (a[i] - ma) * (a[i] - ma);
    sbb += (b[i] - mb) * (b[i] - mb);
  }
  if (saa <= 0.0 || sbb <= 0.0) return kNan;
  return sab / std::sqrt(saa * sbb);
}

}  // namespace

// ---- pre-training report -----------------------------------------------------

std::string PretrainReport::to_json() const {
  nlohmann::ordered_json j;
  j["reconstruction_accuracy_pct"] = reconstruction_accuracy_pct;
  j["reconstruction_n"] = reconstruction_n;
  j["validity_pct"] = validity_pct;
  j["validity_n"] = validity_n;
  j["uniqueness_pct"] = uniqueness_pct;
  j["uniqueness_n"] = uniqueness_n;
  return j.dump();
}

PretrainReport PretrainReport::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object())
    throw arch::ParseError("PretrainReport: bad JSON");
  PretrainReport r;
  try {
    r.reconstruction_accuracy_pct = j.at("reconstruction_accuracy_pct").get<double>();
    r.reconstruction_n = j.at("reconstruction_n").get<int64_t>();
    r.validity_pct = j.at("validity_pct").get<double>();
    r.validity_n = j.at("validity_n").get<int64_t>();
    r.uniqueness_pct = j.at("uniqueness_pct").get<double>();
    r.uniqueness_n = j.at("uniqueness_n").get<int64_t>();
  } catch (const nlohmann::json::exception& e) {
    throw arch::ParseError(std::string("PretrainReport: ") + e.what());
  }
  return r;
}

double reconstruction_accuracy(const vgae::Model& model,
                               const std::vector<arch::CellGraph>& heldout) {
  if (heldout.empty()) throw EmptySet("reconstruction_accuracy: no held-out cells");
  int64_t hits = 0;
  for (const auto& cell : heldout)
    if (model.reconstructs(cell)) ++hits;
  return 100.0 * double(hits) / double(heldout.size());
}

LatentScaler train_latent_stats(const vgae::Model& model,
                                const std::vector<arch::CellGraph>& train) {
  if (train.empty()) throw EmptySet("train_latent_stats: no training cells");
  const int64_t N = model.spec().max_nodes;
  const int64_t d = model.config().latent_dim();
  tc::Tensor sum = tc::Tensor::zeros({N, d});
  std::vector<tc::Tensor> mus;
  mus.reserve(train.size());
  for (const auto& cell : train) {
    auto point = model.encode_cell(arch::encode_cell(cell, model.spec()));
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < d; ++j) sum.at(i, j) += point.node_mu.at(i, j);
    mus.push_back(std::move(point.node_mu));
  }
  LatentScaler scaler;
  scaler.mean = tc::Tensor::zeros({N, d});
  scaler.stddev = tc::Tensor::zeros({N, d});
  const double n = double(train.size());
  for (int64_t i = 0; i < N; ++i)
    for (int64_t j = 0; j < d; ++j) scaler.mean.at(i, j) = sum.at(i, j) / n;
  for (const auto& mu : mus)
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < d; ++j) {
        const double diff = mu.at(i, j) - scaler.mean.at(i, j);
        scaler.stddev.at(i, j) += diff * diff;
      }
  for (auto& v : scaler.stddev.data) v = std::sqrt(v / n);
  return scaler;
}

PriorSampleResult sample_prior(const vgae::Model& model, const LatentScaler& scaler, int n,
                               uint64_t seed) {
  const int64_t N = model.spec().max_nodes;
  const int64_t d = model.config().latent_dim();
  if (!scaler.mean.same_shape(scaler.stddev) || scaler.mean.shape != std::vector<int64_t>{N, d})
    throw tc::ShapeMismatch("sample_prior: scaler shape does not match the model");
  PriorSampleResult result;
  result.n = n;
  Rng rng(seed);
  tc::Tensor z = tc::Tensor::zeros({N, d});
  for (int s = 0; s < n; ++s) {
    for (int64_t i = 0; i < N; ++i)
      for (int64_t j = 0; j < d; ++j)
        z.at(i, j) = scaler.mean.at(i, j) + scaler.stddev.at(i, j) * rng.gaussian();
    arch::CellGraph cell = model.decode_point(z);
    if (arch::validate(cell, model.spec()).valid) result.valid.push_back(std::move(cell));
  }
  return result;
}

double prior_validity(const vgae::Model& model, const LatentScaler& scaler, int n,
                      uint64_t seed) {
  return sample_prior(model, scaler, n, seed).validity_pct();
}

double uniqueness(const std::vector<arch::CellGraph>& cells, const arch::SearchSpaceSpec& spec) {
  if (cells.empty()) throw EmptySet("uniqueness: no cells");
  std::set<CanonicalKey> keys;
  for (const auto& cell : cells) keys.insert(arch::canonical_hash(cell, spec));
  return 100.0 * double(keys.size()) / double(cells.size());
}

PretrainReport pretrain_report(const vgae::Model& model,
                               const std::vector<arch::CellGraph>& train,
                               const std::vector<arch::CellGraph>& heldout, int n_prior,
                               uint64_t seed) {
  PretrainReport report;
  report.reconstruction_accuracy_pct = reconstruction_accuracy(model, heldout);
  report.reconstruction_n = int64_t(heldout.size());
  const LatentScaler scaler = train_latent_stats(model, train);
  const PriorSampleResult samples = sample_prior(model, scaler, n_prior, seed);
  report.validity_pct = samples.validity_pct();
  report.validity_n = samples.n;
  report.uniqueness_n = int64_t(samples.valid.size());
  report.uniqueness_pct =
      samples.valid.empty() ? 0.0 : uniqueness(samples.valid, model.spec());
  return report;
}

// ---- Gaussian-process predictive fit -------------------------------------------

namespace {

struct GpWork {
  Eigen::MatrixXd D2;  // pairwise squared distances
  Eigen::VectorXd yc;  // centered targets
};

// Cholesky with escalating relative jitter; throws SingularKernel past 1e-4.
Eigen::LLT<Eigen::MatrixXd> chol_jitter(const Eigen::MatrixXd& K) {
  const double scale = std::max(K.diagonal().mean(), 1e-300);
  double jitter = 0.0;
  for (;;) {
    Eigen::MatrixXd A = K;
    A.diagonal().array() += jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) return llt;
    jitter = jitter == 0.0 ? 1e-10 * scale : jitter * 10.0;
    if (!(jitter <= 1e-4 * scale))
      throw SingularKernel("gp: kernel factorization failed after jitter escalation");
  }
}

struct GpEval {
  double lml = -std::numeric_limits<double>::infinity();
  Eigen::VectorXd alpha;
  std::array<double, 3> grad{0.0, 0.0, 0.0};  // d lml / d (log l, log sf2, log sn2)
};

GpEval gp_eval(const GpWork& w, double log_l, double log_sf2, double log_sn2,
               bool with_grad) {
  const Eigen::Index n = w.yc.size();
  const double l2 = std::exp(2.0 * log_l);
  const double sf2 = std::exp(log_sf2);
  const double sn2 = std::exp(log_sn2);
  const Eigen::MatrixXd E = (-w.D2 / (2.0 * l2)).array().exp().matrix();
  Eigen::MatrixXd K = sf2 * E;
  K.diagonal().array() += sn2;

  auto llt = chol_jitter(K);
  GpEval out;
  out.alpha = llt.solve(w.yc);
  const double logdet = 2.0 * llt.matrixLLT().diagonal().array().log().sum();
  out.lml = -0.5 * w.yc.dot(out.alpha) - 0.5 * logdet - 0.5 * double(n) * std::log(2.0 * M_PI);
  if (!with_grad) return out;

  const Eigen::MatrixXd Kinv = llt.solve(Eigen::MatrixXd::Identity(n, n));
  const Eigen::MatrixXd A = out.alpha * out.alpha.transpose() - Kinv;
  // d K / d log l = sf2 * E .* D2 / l^2 (chain rule through exp(-D2 / (2 l^2))).
  const Eigen::MatrixXd dK_dlogl = (sf2 / l2) * E.cwiseProduct(w.D2);
  out.grad[0] = 0.5 * A.cwiseProduct(dK_dlogl).sum();
  out.grad[1] = 0.5 * A.cwiseProduct(sf2 * E).sum();
  out.grad[2] = 0.5 * sn2 * A.diagonal().sum();
  return out;
}

}  // namespace

double GpModel::predict(const std::vector<double>& x) const {
  double acc = y_mean;
  const double l2 = lengthscale * lengthscale;
  for (size_t i = 0; i < X.size(); ++i) {
    double d2 = 0.0;
    for (size_t j = 0; j < x.size(); ++j) {
      const double diff = x[j] - X[i][j];
      d2 += diff * diff;
    }
    acc += alpha[i] * signal_var * std::exp(-d2 / (2.0 * l2));
  }
  return acc;
}

GpModel fit_gp(const std::vector<std::vector<double>>& X, const std::vector<double>& y,
               int max_iters) {
  const size_t n = X.size();
  if (n == 0) throw EmptySet("fit_gp: no training points");
  if (y.size() != n) throw tc::ShapeMismatch("fit_gp: misaligned inputs");
  const size_t d = X[0].size();
  for (const auto& row : X) {
    if (row.size() != d) throw tc::ShapeMismatch("fit_gp: ragged inputs");
    for (double v : row)
      if (!std::isfinite(v)) throw SingularKernel("fit_gp: non-finite input row");
  }
  for (double v : y)
    if (!std::isfinite(v)) throw SingularKernel("fit_gp: non-finite target");

  GpWork w;
  w.D2.resize(Eigen::Index(n), Eigen::Index(n));
  for (size_t i = 0; i < n; ++i)
    for (size_t j = 0; j <= i; ++j) {
      double d2 = 0.0;
      for (size_t k = 0; k < d; ++k) {
        const double diff = X[i][k] - X[j][k];
        d2 += diff * diff;
      }
      w.D2(Eigen::Index(i), Eigen::Index(j)) = d2;
      w.D2(Eigen::Index(j), Eigen::Index(i)) = d2;
    }
  const double y_mean = vec_mean(y);
  w.yc.resize(Eigen::Index(n));
  for (size_t i = 0; i < n; ++i) w.yc(Eigen::Index(i)) = y[i] - y_mean;

  // Median-heuristic initialization.
  std::vector<double> dists;
  dists.reserve(n * (n - 1) / 2);
  for (size_t i = 0; i < n; ++i)
    for (size_t j = i + 1; j < n; ++j)
      dists.push_back(std::sqrt(w.D2(Eigen::Index(i), Eigen::Index(j))));
  double l0 = 1.0;
  if (!dists.empty()) {
    std::nth_element(dists.begin(), dists.begin() + long(dists.size() / 2), dists.end());
    const double med = dists[dists.size() / 2];
    if (med > 0.0) l0 = med;
  }
  const double var_y = w.yc.squaredNorm() / double(n);
  const double sf0 = std::max(var_y, 1e-8);
  const double sn0 = std::max(0.01 * var_y, 1e-6);

  const double lo_logl = std::log(1e-6), hi_logl = std::log(1e9);
  const double lo_logsf = std::log(1e-12), hi_logsf = std::log(1e9);
  const double lo_logsn = std::log(1e-6), hi_logsn = std::log(1e9);
  auto clamp3 = [&](std::array<double, 3>& t) {
    t[0] = std::clamp(t[0], lo_logl, hi_logl);
    t[1] = std::clamp(t[1], lo_logsf, hi_logsf);
    t[2] = std::clamp(t[2], lo_logsn, hi_logsn);
  };

  std::array<double, 3> theta{std::log(l0), std::log(sf0), std::log(sn0)};
  clamp3(theta);
  GpEval cur = gp_eval(w, theta[0], theta[1], theta[2], true);
  std::array<double, 3> best_theta = theta;
  double best_lml = cur.lml;

  double step = 0.1;
  for (int iter = 0; iter < max_iters && step >= 1e-4; ++iter) {
    std::array<double, 3> cand = theta;
    for (int k = 0; k < 3; ++k) cand[k] += step * cur.grad[k];
    clamp3(cand);
    GpEval next;
    bool ok = true;
    try {
      next = gp_eval(w, cand[0], cand[1], cand[2], true);
    } catch (const SingularKernel&) {
      ok = false;  // treat as a rejected step; the trust region shrinks
    }
    if (ok && std::isfinite(next.lml) && next.lml > cur.lml) {
      theta = cand;
      cur = next;
      step = std::min(step * 1.5, 1.0);
      if (cur.lml > best_lml) {
        best_lml = cur.lml;
        best_theta = theta;
      }
    } else {
      step *= 0.5;
    }
  }

  GpEval fin = gp_eval(w, best_theta[0], best_theta[1], best_theta[2], false);
  GpModel model;
  model.X = X;
  model.y_mean = y_mean;
  model.lengthscale = std::exp(best_theta[0]);
  model.signal_var = std::exp(best_theta[1]);
  model.noise_var = std::max(std::exp(best_theta[2]), 1e-6);
  model.lml = fin.lml;
  model.alpha.assign(fin.alpha.data(), fin.alpha.data() + fin.alpha.size());
  return model;
}

double PredictiveFit::rmse_mean() const { return finite_mean_std(rmse).first; }
double PredictiveFit::rmse_std() const { return finite_mean_std(rmse).second; }
double PredictiveFit::pearson_mean() const { return finite_mean_std(pearson_r).first; }
double PredictiveFit::pearson_std() const { return finite_mean_std(pearson_r).second; }

std::string PredictiveFit::to_json() const {
  nlohmann::ordered_json j;
  j["n_train"] = n_train;
  j["accuracy_floor"] = accuracy_floor;
  j["seeds"] = seeds;
  auto encode = [](const std::vector<double>& v) {
    nlohmann::json arr = nlohmann::json::array();
    for (double x : v) {
      if (std::isfinite(x)) arr.push_back(x);
      else arr.push_back(nullptr);  // NaN has no JSON literal
    }
    return arr;
  };
  j["rmse"] = encode(rmse);
  j["pearson_r"] = encode(pearson_r);
  j["degenerate"] = degenerate;
  auto stats = [](double m, double s) {
    nlohmann::ordered_json o;
    if (std::isfinite(m)) o["mean"] = m; else o["mean"] = nullptr;
    if (std::isfinite(s)) o["std"] = s; else o["std"] = nullptr;
    return o;
  };
  j["rmse_summary"] = stats(rmse_mean(), rmse_std());
  j["pearson_summary"] = stats(pearson_mean(), pearson_std());
  return j.dump();
}

PredictiveFit PredictiveFit::from_json(const std::string& text) {
  nlohmann::json j = nlohmann::json::parse(text, nullptr, false);
  if (j.is_discarded() || !j.is_object()) throw arch::ParseError("PredictiveFit: bad JSON");
  PredictiveFit f;
  try {
    f.n_train = j.at("n_train").get<int64_t>();
    f.accuracy_floor = j.at("accuracy_floor").get<double>();
    f.seeds = j.at("seeds").get<std::vector<uint64_t>>();
    auto decode = [](const nlohmann::json& arr) {
      std::vector<double> v;
      for (const auto& x : arr) v.push_back(x.is_null() ? kNan : x.get<double>());
      return v;
    };
    f.rmse = decode(j.at("rmse"));
    f.pearson_r = decode(j.at("pearson_r"));
    f.degenerate = j.at("degenerate").get<bool>();
  } catch (const nlohmann::json::exception& e) {
    throw arch::ParseError(std::string("PredictiveFit: ") + e.what());
  }
  return f;
}

PredictiveFit predictive_fit(const std::vector<std::vector<double>>& embeddings,
                             const std::vector<double>& accuracies, int64_t n_train,
                             double floor, int n_seeds, uint64_t base_seed) {
  const size_t M = embeddings.size();
  if (M < 2) throw EmptySet("predictive_fit: need at least two rows");
  if (accuracies.size() != M) throw tc::ShapeMismatch("predictive_fit: misaligned inputs");
  if (n_train < 1 || n_train >= int64_t(M))
    throw EmptySet("predictive_fit: n_train leaves nothing to predict");

  PredictiveFit fit;
  fit.n_train = n_train;
  fit.accuracy_floor = floor;
  Rng root(base_seed);
  for (int s = 0; s < n_seeds; ++s) {
    Rng rng = root.fork(uint64_t(s));
    std::vector<size_t> order(M);
    std::iota(order.begin(), order.end(), size_t(0));
    for (size_t i = 0; i < size_t(n_train); ++i) {
      const size_t j = i + size_t(rng.bounded(uint64_t(M - i)));
      std::swap(order[i], order[j]);
    }
    std::vector<std::vector<double>> train_x;
    std::vector<double> train_y;
    for (size_t i = 0; i < size_t(n_train); ++i) {
      train_x.push_back(embeddings[order[i]]);
      train_y.push_back(accuracies[order[i]]);
    }
    const GpModel gp = fit_gp(train_x, train_y);

    std::vector<double> preds, truths;
    for (size_t i = size_t(n_train); i < M; ++i) {
      if (!(accuracies[order[i]] > floor)) continue;
      preds.push_back(gp.predict(embeddings[order[i]]));
      truths.push_back(accuracies[order[i]]);
    }
    fit.seeds.push_back(uint64_t(s));
    if (preds.empty()) {
      fit.rmse.push_back(kNan);
      fit.pearson_r.push_back(kNan);
      fit.degenerate = true;
      continue;
    }
    double se = 0.0;
    for (size_t i = 0; i < preds.size(); ++i)
      se += (preds[i] - truths[i]) * (preds[i] - truths[i]);
    fit.rmse.push_back(std::sqrt(se / double(preds.size())));
    const double r = pearson(preds, truths);
    fit.pearson_r.push_back(r);
    if (!std::isfinite(r)) fit.degenerate = true;
  }
  return fit;
}

// ---- latent-space geometry -------------------------------------------------------

L2EditProfile l2_edit_profile(const vgae::Model& model, const arch::SearchSpaceSpec& spec,
                              int walk_len, uint64_t seed, int window) {
  Rng root(seed);
  Rng start_rng = root.fork(1);
  const arch::CellGraph start = arch::uniform_sample(spec, start_rng);
  const std::vector<arch::CellGraph> walk =
      arch::random_walk(start, walk_len, spec, root.fork(2).seed());

  std::vector<std::vector<double>> embs;
  embs.reserve(walk.size());
  for (const auto& cell : walk) embs.push_back(model.cell_embedding(cell));

  L2EditProfile profile;
  for (size_t i = 0; i < walk.size(); ++i)
    for (size_t j = i + 1; j < walk.size() && j <= i + size_t(window); ++j) {
      const int d = arch::edit_distance(walk[i], walk[j]);
      if (d > 10) continue;
      double l2 = 0.0;
      for (size_t k = 0; k < embs[i].size(); ++k)
        l2 += (embs[i][k] - embs[j][k]) * (embs[i][k] - embs[j][k]);
      profile.by_edit[d].push_back(std::sqrt(l2));
    }
  return profile;
}

std::map<int, double> median_l2_by_edit(const L2EditProfile& profile) {
  std::map<int, double> medians;
  for (const auto& [edit, samples] : profile.by_edit) {
    if (samples.empty()) continue;
    std::vector<double> copy = samples;
    const size_t mid = copy.size() / 2;
    std::nth_element(copy.begin(), copy.begin() + long(mid), copy.end());
    double med = copy[mid];
    if (copy.size() % 2 == 0) {
      const double lower = *std::max_element(copy.begin(), copy.begin() + long(mid));
      med = 0.5 * (med + lower);
    }
    medians[edit] = med;
  }
  return medians;
}

namespace {

std::vector<double> average_ranks(const std::vector<double>& v) {
  const size_t n = v.size();
  std::vector<size_t> idx(n);
  std::iota(idx.begin(), idx.end(), size_t(0));
  std::sort(idx.begin(), idx.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
  std::vector<double> ranks(n, 0.0);
  size_t i = 0;
  while (i < n) {
    size_t j = i;
    while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
    const double avg = 0.5 * (double(i) + double(j)) + 1.0;  // 1-based average rank
    for (size_t k = i; k <= j; ++k) ranks[idx[k]] = avg;
    i = j + 1;
  }
  return ranks;
}

}  // namespace

double spearman_rho(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.size() < 2) return kNan;
  return pearson(average_ranks(a), average_ranks(b));
}

void save_profile_csv(const L2EditProfile& profile, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw arch::ParseError("save_profile_csv: cannot open " + path);
  out << "edit_distance,l2\n";
  char buf[64];
  for (const auto& [edit, samples] : profile.by_edit)
    for (double l2 : samples) {
      std::snprintf(buf, sizeof(buf), "%.17g", l2);
      out << edit << "," << buf << "\n";
    }
}

L2EditProfile load_profile_csv(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw arch::ParseError("load_profile_csv: cannot open " + path);
  std::string line;
  if (!std::getline(in, line) || line != "edit_distance,l2")
    throw arch::ParseError("load_profile_csv: bad header in " + path);
  L2EditProfile profile;
  size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    const size_t comma = line.find(',');
    if (comma == std::string::npos)
      throw arch::ParseError("load_profile_csv: bad row at line " + std::to_string(lineno));
    try {
      const int edit = std::stoi(line.substr(0, comma));
      const double l2 = std::stod(line.substr(comma + 1));
      profile.by_edit[edit].push_back(l2);
    } catch (const std::exception&) {
      throw arch::ParseError("load_profile_csv: bad row at line " + std::to_string(lineno));
    }
  }
  return profile;
}

// ---- decoded nearest-neighbor chains ----------------------------------------------

double Chain::mean_edit() const {
  if (edits.empty()) return 0.0;
  return std::accumulate(edits.begin(), edits.end(), 0.0) / double(edits.size());
}

Chain neighbor_sequence(const search::NeighborIndex& index,
                        const std::vector<arch::CellGraph>& cells, size_t start_row,
                        int length) {
  const size_t M = index.table().size();
  if (cells.size() != M)
    throw tc::ShapeMismatch("neighbor_sequence: cells do not match the table");
  if (start_row >= M) throw tc::ShapeMismatch("neighbor_sequence: start row out of range");
  if (length < 1 || size_t(length) > M)
    throw ExhaustedTable("neighbor_sequence: chain length " + std::to_string(length) +
                         " vs table size " + std::to_string(M));
  Chain chain;
  chain.rows.push_back(start_row);
  std::vector<char> visited(M, 0);
  visited[start_row] = 1;
  size_t cur = start_row;
  for (int step = 1; step < length; ++step) {
    const size_t next = index.nearest(index.table().embeddings[cur], visited);
    chain.edits.push_back(arch::edit_distance(cells[cur], cells[next]));
    chain.rows.push_back(next);
    visited[next] = 1;
    cur = next;
  }
  return chain;
}

Chain random_sequence(const std::vector<arch::CellGraph>& cells, size_t start_row, int length,
                      uint64_t seed) {
  const size_t M = cells.size();
  if (M == 0) throw EmptySet("random_sequence: no cells");
  if (start_row >= M) throw tc::ShapeMismatch("random_sequence: start row out of range");
  if (length < 1 || size_t(length) > M)
    throw ExhaustedTable("random_sequence: chain length " + std::to_string(length) +
                         " vs table size " + std::to_string(M));
  std::vector<size_t> others;
  others.reserve(M - 1);
  for (size_t r = 0; r < M; ++r)
    if (r != start_row) others.push_back(r);
  Rng rng(seed);
  Chain chain;
  chain.rows.push_back(start_row);
  size_t cur = start_row;
  for (int step = 1; step < length; ++step) {
    const size_t pick = size_t(step) - 1 + size_t(rng.bounded(uint64_t(others.size() - (size_t(step) - 1))));
    std::swap(others[size_t(step) - 1], others[pick]);
    const size_t next = others[size_t(step) - 1];
    chain.edits.push_back(arch::edit_distance(cells[cur], cells[next]));
    chain.rows.push_back(next);
    cur = next;
  }
  return chain;
}

double sign_test_p(int wins, int losses) {
  const int n = wins + losses;
  if (n <= 0) return 1.0;
  double p = 0.0;
  for (int i = wins; i <= n; ++i) {
    const double log_c =
        std::lgamma(double(n) + 1.0) - std::lgamma(double(i) + 1.0) - std::lgamma(double(n - i) + 1.0);
    p += std::exp(log_c - double(n) * std::log(2.0));
  }
  return std::min(p, 1.0);
}

// ---- encoder-variant ablations ------------------------------------------------------

std::vector<std::pair<std::string, vgae::EncoderConfig>> default_ablation_variants() {
  vgae::EncoderConfig arch2vec;  // sum aggregation, variational, KL weight 1

  vgae::EncoderConfig no_kl = arch2vec;
  no_kl.kl_weight = 0.0;

  vgae::EncoderConfig gae;
  gae.aggregation = vgae::Aggregation::norm_avg;
  gae.variational = false;
  gae.kl_weight = 0.0;

  vgae::EncoderConfig vgae_cfg;
  vgae_cfg.aggregation = vgae::Aggregation::norm_avg;

  return {{"arch2vec", arch2vec},
          {"arch2vec-no-KL", no_kl},
          {"GAE", gae},
          {"VGAE", vgae_cfg}};
}

std::vector<AblationRow> ablation_suite(
    const std::vector<arch::CellGraph>& dataset, const arch::SearchSpaceSpec& spec,
    const vgae::TrainHyper& hyper, int n_prior, uint64_t metrics_seed, uint64_t init_seed,
    const std::vector<std::pair<std::string, vgae::EncoderConfig>>& variants) {
  if (dataset.empty()) throw EmptySet("ablation_suite: empty dataset");
  std::vector<AblationRow> rows;
  for (const auto& [name, cfg] : variants) {
    vgae::Model model(spec, cfg, init_seed);
    const vgae::TrainResult result = vgae::train(model, dataset, hyper);
    std::vector<char> is_heldout(dataset.size(), 0);
    for (int64_t idx : result.heldout_indices) is_heldout[size_t(idx)] = 1;
    std::vector<arch::CellGraph> train, heldout;
    for (size_t i = 0; i < dataset.size(); ++i)
      (is_heldout[i] ? heldout : train).push_back(dataset[i]);
    rows.push_back({name, cfg, pretrain_report(model, train, heldout, n_prior, metrics_seed)});
  }
  return rows;
}

}  // namespace lnas::gen
