#include "lnas/search.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <set>
#include <unordered_map>

#include <nlohmann/json.hpp>

namespace lnas::search {

namespace {

constexpr double kPi = 3.14159265358979323846;

}  // namespace

// ---- embedding table and nearest-neighbor retrieval -------------------------

EmbeddingTable make_table(const std::vector<arch::DatasetRecord>& records,
                          const std::vector<vgae::EmbeddingRow>& rows,
                          const arch::SearchSpaceSpec& spec) {
  if (records.empty() || rows.empty()) throw EmptyTable("make_table: empty input");
  std::unordered_map<int64_t, const vgae::EmbeddingRow*> by_id;
  for (const auto& row : rows)
    if (!by_id.emplace(row.id, &row).second)
      throw TableMismatch("make_table: duplicate embedding id " + std::to_string(row.id));
  if (by_id.size() != records.size())
    throw TableMismatch("make_table: " + std::to_string(records.size()) + " records vs " +
                        std::to_string(by_id.size()) + " embedding rows");

  EmbeddingTable table;
  table.ids.reserve(records.size());
  table.embeddings.reserve(records.size());
  std::set<CanonicalKey> seen;
  size_t dim = 0;
  for (const auto& rec : records) {
    auto it = by_id.find(rec.id);
    if (it == by_id.end())
      throw TableMismatch("make_table: record id " + std::to_string(rec.id) +
                          " has no embedding row");
    const CanonicalKey key = arch::canonical_hash(rec.cell, spec);
    if (!seen.insert(key).second)
      throw TableMismatch("make_table: duplicate canonical key " + key.hex());
    if (table.embeddings.empty())
      dim = it->second->values.size();
    else if (it->second->values.size() != dim)
      throw TableMismatch("make_table: inconsistent embedding dimensions");
    table.ids.push_back(key);
    table.embeddings.push_back(it->second->values);
  }
  if (dim == 0) throw TableMismatch("make_table: zero-dimensional embeddings");
  return table;
}

NeighborIndex::NeighborIndex(const EmbeddingTable& table) : table_(table) {
  if (table.size() == 0) throw EmptyTable("NeighborIndex: empty table");
}

size_t NeighborIndex::nearest(const std::vector<double>& z,
                              const std::vector<char>& excluded) const {
  const size_t M = table_.size();
  if (!excluded.empty() && excluded.size() != M)
    throw TableMismatch("nearest: exclusion mask size " + std::to_string(excluded.size()) +
                        " vs " + std::to_string(M) + " rows");
  if (int64_t(z.size()) != table_.dim())
    throw TableMismatch("nearest: query dimension " + std::to_string(z.size()) + " vs table " +
                        std::to_string(table_.dim()));
  size_t best = M;
  double best_d2 = std::numeric_limits<double>::infinity();
  for (size_t r = 0; r < M; ++r) {
    if (!excluded.empty() && excluded[r]) continue;
    const auto& e = table_.embeddings[r];
    double d2 = 0.0;
    for (size_t j = 0; j < z.size(); ++j) {
      const double diff = z[j] - e[j];
      d2 += diff * diff;
    }
    if (best == M || d2 < best_d2 || (d2 == best_d2 && table_.ids[r] < table_.ids[best])) {
      best = r;
      best_d2 = d2;
    }
  }
  if (best == M) throw AllExcluded("nearest: every row excluded");
  return best;
}

// ---- traces ------------------------------------------------------------------

std::string to_string(StopReason r) {
  switch (r) {
    case StopReason::budget: return "budget";
    case StopReason::queries: return "queries";
    case StopReason::exhausted: return "exhausted";
    case StopReason::target: return "target";
  }
  return "budget";
}

int64_t queries_to_key(const SearchTrace& trace, const CanonicalKey& key) {
  for (const auto& e : trace.events)
    if (e.id == key) return e.step;
  return -1;
}

void save_trace(const SearchTrace& trace, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw arch::ParseError("save_trace: cannot open " + path);
  for (const auto& e : trace.events) {
    nlohmann::ordered_json j;
    j["step"] = e.step;
    j["id"] = e.id.hex();
    j["reward"] = e.reward;
    j["elapsed_seconds"] = e.elapsed_seconds;
    j["incumbent"] = e.incumbent;
    out << j.dump() << "\n";
  }
}

std::vector<TraceEvent> load_trace_events(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw arch::ParseError("load_trace_events: cannot open " + path);
  std::vector<TraceEvent> events;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
    if (j.is_discarded() || !j.is_object())
      throw arch::ParseError("load_trace_events: bad JSON at line " + std::to_string(lineno));
    for (const char* field : {"step", "id", "reward", "elapsed_seconds", "incumbent"})
      if (!j.contains(field))
        throw arch::ParseError("load_trace_events: missing field '" + std::string(field) +
                               "' at line " + std::to_string(lineno));
    TraceEvent e;
    if (!j["step"].is_number_integer() || !j["id"].is_string() || !j["reward"].is_number() ||
        !j["elapsed_seconds"].is_number() || !j["incumbent"].is_number())
      throw arch::ParseError("load_trace_events: bad field type at line " + std::to_string(lineno));
    e.step = j["step"].get<int64_t>();
    e.id = Digest128::from_hex(j["id"].get<std::string>());
    e.reward = j["reward"].get<double>();
    e.elapsed_seconds = j["elapsed_seconds"].get<double>();
    e.incumbent = j["incumbent"].get<double>();
    events.push_back(e);
  }
  return events;
}

// ---- Bayesian linear regression ------------------------------------------------

std::pair<double, double> BlrPosterior::predict(const std::vector<double>& phi) const {
  const size_t F = mean.size();
  if (phi.size() != F)
    throw TableMismatch("BlrPosterior::predict: feature size " + std::to_string(phi.size()) +
                        " vs " + std::to_string(F));
  double mu = 0.0;
  for (size_t i = 0; i < F; ++i) mu += mean[i] * phi[i];
  double quad = 0.0;
  for (size_t i = 0; i < F; ++i) {
    double row = 0.0;
    for (size_t j = 0; j < F; ++j) row += cov[i * F + j] * phi[j];
    quad += phi[i] * row;
  }
  return {mu, 1.0 / beta + quad};
}

namespace {

Eigen::MatrixXd to_eigen(const std::vector<std::vector<double>>& phi) {
  const Eigen::Index n = Eigen::Index(phi.size());
  const Eigen::Index F = n > 0 ? Eigen::Index(phi[0].size()) : 0;
  Eigen::MatrixXd out(n, F);
  for (Eigen::Index i = 0; i < n; ++i) {
    if (Eigen::Index(phi[size_t(i)].size()) != F)
      throw TableMismatch("blr: ragged feature rows");
    for (Eigen::Index j = 0; j < F; ++j) out(i, j) = phi[size_t(i)][size_t(j)];
  }
  return out;
}

}  // namespace

BlrPosterior blr_posterior(const std::vector<std::vector<double>>& phi,
                           const std::vector<double>& y, double alpha, double beta) {
  if (phi.empty() || phi.size() != y.size())
    throw TableMismatch("blr_posterior: need n >= 1 aligned rows");
  if (!(alpha > 0.0) || !(beta > 0.0) || !std::isfinite(alpha) || !std::isfinite(beta))
    throw SingularSystem("blr_posterior: precisions must be positive finite");
  const Eigen::MatrixXd Phi = to_eigen(phi);
  const Eigen::Index n = Phi.rows(), F = Phi.cols();
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  if (!Phi.allFinite() || !yv.allFinite())
    throw SingularSystem("blr_posterior: non-finite inputs");

  const Eigen::MatrixXd G = Phi.transpose() * Phi;
  Eigen::MatrixXd S;
  double jitter = 0.0;
  const double scale = std::max(1.0, G.diagonal().mean());
  for (int attempt = 0;; ++attempt) {
    Eigen::MatrixXd A = beta * G;
    A.diagonal().array() += alpha + jitter;
    Eigen::LLT<Eigen::MatrixXd> llt(A);
    if (llt.info() == Eigen::Success) {
      S = llt.solve(Eigen::MatrixXd::Identity(F, F));
      if (S.allFinite()) break;
    }
    if (attempt == 0)
      jitter = 1e-10 * scale;
    else
      jitter *= 10.0;
    if (jitter > 1e-4 * scale)
      throw SingularSystem("blr_posterior: factorization failed after jitter escalation");
  }
  const Eigen::VectorXd m = beta * (S * (Phi.transpose() * yv));

  BlrPosterior post;
  post.alpha = alpha;
  post.beta = beta;
  post.mean.assign(m.data(), m.data() + F);
  post.cov.resize(size_t(F) * size_t(F));
  for (Eigen::Index i = 0; i < F; ++i)
    for (Eigen::Index j = 0; j < F; ++j) post.cov[size_t(i * F + j)] = S(i, j);
  return post;
}

std::pair<double, double> fit_evidence(const std::vector<std::vector<double>>& phi,
                                       const std::vector<double>& y, double alpha0, double beta0,
                                       int max_iters) {
  const std::pair<double, double> fallback{1.0, 100.0};
  if (phi.empty() || phi.size() != y.size()) return fallback;
  const Eigen::MatrixXd Phi = to_eigen(phi);
  const Eigen::Index n = Phi.rows();
  const Eigen::VectorXd yv = Eigen::Map<const Eigen::VectorXd>(y.data(), n);
  if (!Phi.allFinite() || !yv.allFinite()) return fallback;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Phi.transpose() * Phi);
  if (es.info() != Eigen::Success) return fallback;
  const Eigen::VectorXd u = es.eigenvalues().cwiseMax(0.0);
  const Eigen::MatrixXd& V = es.eigenvectors();
  const Eigen::VectorXd t = V.transpose() * (Phi.transpose() * yv);

  double alpha = alpha0 > 0.0 ? alpha0 : 1.0;
  double beta = beta0 > 0.0 ? beta0 : 100.0;
  for (int iter = 0; iter < max_iters; ++iter) {
    const Eigen::ArrayXd dinv = 1.0 / (alpha + beta * u.array());
    const Eigen::VectorXd m = beta * (V * (dinv * t.array()).matrix());
    const double gamma = (beta * u.array() * dinv).sum();
    const double mm = m.squaredNorm();
    const double rss = (yv - Phi * m).squaredNorm();
    if (!(mm > 0.0) || !(rss > 0.0) || !(double(n) - gamma > 0.0)) return fallback;
    const double alpha_new = gamma / mm;
    const double beta_new = (double(n) - gamma) / rss;
    if (!std::isfinite(alpha_new) || !std::isfinite(beta_new) || alpha_new <= 1e-12 ||
        beta_new <= 1e-12 || alpha_new > 1e12 || beta_new > 1e12)
      return fallback;
    const bool converged = std::abs(alpha_new - alpha) <= 1e-6 * std::max(1.0, alpha) &&
                           std::abs(beta_new - beta) <= 1e-6 * std::max(1.0, beta);
    alpha = alpha_new;
    beta = beta_new;
    if (converged) break;
  }
  return {alpha, beta};
}

double expected_improvement(double mu, double sigma, double incumbent) {
  if (!(sigma > 0.0)) return std::max(mu - incumbent, 0.0);
  const double u = (mu - incumbent) / sigma;
  const double cdf = 0.5 * std::erfc(-u / std::sqrt(2.0));
  const double pdf = std::exp(-0.5 * u * u) / std::sqrt(2.0 * kPi);
  return std::max((mu - incumbent) * cdf + sigma * pdf, 0.0);
}

// ---- shared run bookkeeping ------------------------------------------------------

namespace {

struct Runner {
  const NeighborIndex& index;
  const oracle::Oracle& orc;
  oracle::BudgetClock clock;
  const CanonicalKey* stop_key;
  SearchTrace trace;
  std::vector<char> visited;
  size_t visited_count = 0;
  double best = -std::numeric_limits<double>::infinity();
  bool done = false;

  Runner(const NeighborIndex& idx, const oracle::Oracle& o, oracle::BudgetClock c,
         const CanonicalKey* stop)
      : index(idx), orc(o), clock(c), stop_key(stop) {
    if (!(clock.budget() > 0.0) || clock.query_budget() == 0)
      throw BudgetZero("search: nonpositive budget");
    visited.assign(index.table().size(), 0);
  }

  // Queries row r if the clock allows it. Returns false once the run is over;
  // an event is appended only when the query was accepted.
  bool query_row(size_t r) {
    const CanonicalKey& key = index.table().ids[r];
    const oracle::OracleRecord& rec = orc.at(key);
    if (!clock.can_afford(rec.training_seconds)) {
      const bool out_of_queries =
          clock.query_budget() >= 0 && clock.query_count() >= clock.query_budget();
      trace.reason = out_of_queries ? StopReason::queries : StopReason::budget;
      done = true;
      return false;
    }
    clock.charge(rec.training_seconds);
    visited[r] = 1;
    ++visited_count;
    best = std::max(best, rec.validation_accuracy);
    trace.events.push_back({int64_t(trace.events.size()) + 1, key, rec.validation_accuracy,
                            clock.elapsed(), best});
    if (stop_key && key == *stop_key) {
      trace.reason = StopReason::target;
      done = true;
      return false;
    }
    if (visited_count == visited.size()) {
      trace.reason = StopReason::exhausted;
      done = true;
      return false;
    }
    return true;
  }
};

}  // namespace

// ---- random search ------------------------------------------------------------

SearchTrace random_search(const NeighborIndex& index, const oracle::Oracle& orc,
                          oracle::BudgetClock clock, uint64_t seed,
                          const CanonicalKey* stop_on_key) {
  Runner run(index, orc, clock, stop_on_key);
  const size_t M = index.table().size();
  Rng rng = Rng(seed).fork(1);
  std::vector<size_t> order(M);
  std::iota(order.begin(), order.end(), size_t(0));
  for (size_t i = 0; i < M && !run.done; ++i) {
    const size_t j = i + size_t(rng.bounded(uint64_t(M - i)));
    std::swap(order[i], order[j]);
    run.query_row(order[i]);
  }
  return run.trace;
}

// ---- REINFORCE ------------------------------------------------------------------

void init_controller(tc::ParamStore& ps, int64_t input_dim, int64_t hidden, int64_t action_dim,
                     Rng& rng) {
  tc::glorot_init(ps.create("ctrl.Wx", {input_dim, 4 * hidden}), rng);
  tc::glorot_init(ps.create("ctrl.Wh", {hidden, 4 * hidden}), rng);
  ps.create("ctrl.b", {4 * hidden});
  tc::glorot_init(ps.create("ctrl.head.W", {hidden, action_dim}), rng);
  ps.create("ctrl.head.b", {action_dim});
}

std::vector<double> episode_returns(const std::vector<double>& rewards, double discount,
                                    bool bandit_mode) {
  if (bandit_mode) return rewards;
  std::vector<double> returns(rewards.size(), 0.0);
  double acc = 0.0;
  for (size_t t = rewards.size(); t-- > 0;) {
    acc = rewards[t] + discount * acc;
    returns[t] = acc;
  }
  return returns;
}

double reinforce_episode_update(tc::ParamStore& ps, const std::vector<std::vector<double>>& states,
                                const std::vector<std::vector<double>>& actions,
                                const std::vector<double>& rewards, const ReinforceHyper& hyper,
                                const double* baseline_override) {
  const size_t T = rewards.size();
  if (T == 0 || states.size() != T || actions.size() != T)
    throw TableMismatch("reinforce_episode_update: misaligned episode buffers");
  const int64_t din = int64_t(states[0].size());
  const int64_t dact = int64_t(actions[0].size());
  const int64_t H = hyper.lstm_hidden;
  const tc::Tensor& Wx = ps.value("ctrl.Wx");
  const tc::Tensor& Wh = ps.value("ctrl.Wh");
  const tc::Tensor& bg = ps.value("ctrl.b");
  const tc::Tensor& headW = ps.value("ctrl.head.W");
  const tc::Tensor& headb = ps.value("ctrl.head.b");

  const std::vector<double> returns = episode_returns(rewards, hyper.discount, hyper.bandit_mode);
  const double baseline = baseline_override ? *baseline_override : hyper.baseline;

  std::vector<tc::LstmCache> lstm_caches(T);
  std::vector<tc::LinearCache> head_caches(T);
  std::vector<tc::Tensor> means(T);
  tc::Tensor h = tc::Tensor::zeros({1, H});
  tc::Tensor c = tc::Tensor::zeros({1, H});
  for (size_t t = 0; t < T; ++t) {
    const tc::Tensor x = tc::Tensor::of({1, din}, states[t]);
    tc::LstmOut out = tc::lstm_step(x, h, c, Wx, Wh, bg, &lstm_caches[t]);
    means[t] = tc::linear(out.h, headW, headb, &head_caches[t]);
    h = out.h;
    c = out.c;
  }

  double loss = 0.0;
  std::vector<tc::Tensor> gmean(T);
  for (size_t t = 0; t < T; ++t) {
    const double adv = returns[t] - baseline;
    gmean[t] = tc::Tensor::zeros({1, dact});
    for (int64_t j = 0; j < dact; ++j) {
      const double diff = means[t].at(0, j) - actions[t][size_t(j)];
      loss += adv * 0.5 * diff * diff;
      gmean[t].at(0, j) = adv * diff;
    }
  }

  tc::Tensor gh_next, gc_next;  // empty means zero
  for (size_t t = T; t-- > 0;) {
    tc::Tensor gh_head, gheadW, gheadb;
    tc::linear_backward(gmean[t], head_caches[t], headW, &gh_head, &gheadW, &gheadb);
    ps.accumulate("ctrl.head.W", gheadW);
    ps.accumulate("ctrl.head.b", gheadb);
    if (gh_next.numel() > 0)
      for (size_t i = 0; i < gh_head.data.size(); ++i) gh_head.data[i] += gh_next.data[i];
    tc::Tensor gh_prev, gc_prev, gWx, gWh, gbg;
    tc::lstm_step_backward(gh_head, gc_next, lstm_caches[t], Wx, Wh, nullptr, &gh_prev, &gc_prev,
                           &gWx, &gWh, &gbg);
    ps.accumulate("ctrl.Wx", gWx);
    ps.accumulate("ctrl.Wh", gWh);
    ps.accumulate("ctrl.b", gbg);
    gh_next = gh_prev;
    gc_next = gc_prev;
  }
  return loss;
}

SearchTrace reinforce_search(const NeighborIndex& index, const oracle::Oracle& orc,
                             oracle::BudgetClock clock, const ReinforceHyper& hyper,
                             uint64_t seed, const CanonicalKey* stop_on_key) {
  const EmbeddingTable& table = index.table();
  if (hyper.action_dim != table.dim())
    throw TableMismatch("reinforce_search: action_dim " + std::to_string(hyper.action_dim) +
                        " vs table dimension " + std::to_string(table.dim()));
  Runner run(index, orc, clock, stop_on_key);

  Rng root(seed);
  Rng init_rng = root.fork(1);
  Rng noise = root.fork(2);
  tc::ParamStore ps;
  init_controller(ps, table.dim(), hyper.lstm_hidden, hyper.action_dim, init_rng);
  const int64_t H = hyper.lstm_hidden;
  double ema = hyper.baseline;

  while (!run.done) {
    std::vector<std::vector<double>> states, actions;
    std::vector<double> rewards;
    tc::Tensor h = tc::Tensor::zeros({1, H});
    tc::Tensor c = tc::Tensor::zeros({1, H});
    std::vector<double> state(size_t(table.dim()), 0.0);  // episode starts from zeros

    for (int t = 0; t < hyper.archs_per_episode && !run.done; ++t) {
      const tc::Tensor x = tc::Tensor::of({1, table.dim()}, state);
      tc::LstmOut out = tc::lstm_step(x, h, c, ps.value("ctrl.Wx"), ps.value("ctrl.Wh"),
                                      ps.value("ctrl.b"));
      const tc::Tensor mean = tc::linear(out.h, ps.value("ctrl.head.W"), ps.value("ctrl.head.b"));
      std::vector<double> action(size_t(hyper.action_dim));
      for (size_t j = 0; j < action.size(); ++j) action[j] = mean.at(0, int64_t(j)) + noise.gaussian();

      size_t row;
      try {
        row = index.nearest(action, run.visited);
      } catch (const AllExcluded&) {
        run.trace.reason = StopReason::exhausted;
        run.done = true;
        break;
      }
      const size_t before = run.trace.events.size();
      const bool keep_going = run.query_row(row);
      if (run.trace.events.size() > before) {
        states.push_back(state);
        actions.push_back(action);
        rewards.push_back(run.trace.events.back().reward);
      }
      if (!keep_going) break;
      state = table.embeddings[row];
      h = out.h;
      c = out.c;
    }

    if (run.done) break;
    if (int(rewards.size()) == hyper.archs_per_episode) {
      const double* override_ptr = nullptr;
      if (hyper.ema_baseline) override_ptr = &ema;
      reinforce_episode_update(ps, states, actions, rewards, hyper, override_ptr);
      ps.adam_update(hyper.lr);
      if (hyper.ema_baseline) {
        const double mean_r =
            std::accumulate(rewards.begin(), rewards.end(), 0.0) / double(rewards.size());
        ema = hyper.ema_decay * ema + (1.0 - hyper.ema_decay) * mean_r;
      }
    }
  }
  return run.trace;
}

// ---- DNGO Bayesian optimization ----------------------------------------------------

namespace {

// One-hidden-layer tanh regressor trained full-batch from scratch; returns the
// parameter store so callers can extract basis features.
tc::ParamStore train_basis_net(const std::vector<std::vector<double>>& xs,
                               const std::vector<double>& ys, const DngoHyper& hyper, Rng& rng) {
  const int64_t n = int64_t(xs.size());
  const int64_t d = int64_t(xs[0].size());
  const int64_t H = hyper.basis_hidden;
  tc::ParamStore ps;
  tc::glorot_init(ps.create("net.l1.W", {d, H}), rng);
  ps.create("net.l1.b", {H});
  tc::glorot_init(ps.create("net.out.W", {H, 1}), rng);
  ps.create("net.out.b", {1});

  tc::Tensor X = tc::Tensor::zeros({n, d});
  tc::Tensor Y = tc::Tensor::zeros({n, 1});
  for (int64_t i = 0; i < n; ++i) {
    for (int64_t j = 0; j < d; ++j) X.at(i, j) = xs[size_t(i)][size_t(j)];
    Y.at(i, 0) = ys[size_t(i)];
  }

  for (int epoch = 0; epoch < hyper.retrain_epochs; ++epoch) {
    tc::LinearCache c1, c2;
    tc::TanhCache ct;
    const tc::Tensor a1 = tc::linear(X, ps.value("net.l1.W"), ps.value("net.l1.b"), &c1);
    const tc::Tensor z1 = tc::tanh_act(a1, &ct);
    const tc::Tensor pred = tc::linear(z1, ps.value("net.out.W"), ps.value("net.out.b"), &c2);
    tc::Tensor gpred = tc::Tensor::zeros({n, 1});
    for (int64_t i = 0; i < n; ++i) gpred.at(i, 0) = 2.0 * (pred.at(i, 0) - Y.at(i, 0)) / double(n);
    tc::Tensor gz1, gW2, gb2;
    tc::linear_backward(gpred, c2, ps.value("net.out.W"), &gz1, &gW2, &gb2);
    ps.accumulate("net.out.W", gW2);
    ps.accumulate("net.out.b", gb2);
    tc::Tensor ga1;
    tc::tanh_backward(gz1, ct, &ga1);
    tc::Tensor gW1, gb1;
    tc::linear_backward(ga1, c1, ps.value("net.l1.W"), nullptr, &gW1, &gb1);
    ps.accumulate("net.l1.W", gW1);
    ps.accumulate("net.l1.b", gb1);
    ps.adam_update(hyper.lr);
  }
  return ps;
}

// Basis features: tanh hidden activations with a trailing constant 1.
std::vector<double> basis_features(const tc::ParamStore& ps, const std::vector<double>& x) {
  const tc::Tensor& W = ps.value("net.l1.W");
  const tc::Tensor& b = ps.value("net.l1.b");
  const int64_t d = W.shape[0], H = W.shape[1];
  std::vector<double> phi(size_t(H) + 1, 1.0);
  for (int64_t j = 0; j < H; ++j) {
    double acc = b.at(j);
    for (int64_t i = 0; i < d; ++i) acc += x[size_t(i)] * W.at(i, j);
    phi[size_t(j)] = std::tanh(acc);
  }
  return phi;
}

}  // namespace

SearchTrace dngo_search(const NeighborIndex& index, const oracle::Oracle& orc,
                        oracle::BudgetClock clock, const DngoHyper& hyper, uint64_t seed,
                        const CanonicalKey* stop_on_key) {
  const EmbeddingTable& table = index.table();
  Runner run(index, orc, clock, stop_on_key);

  Rng root(seed);
  Rng pick = root.fork(1);
  std::vector<size_t> pool_rows;  // rows queried so far, in query order

  // Seed pool: uniform distinct rows.
  const size_t M = table.size();
  std::vector<size_t> order(M);
  std::iota(order.begin(), order.end(), size_t(0));
  const size_t n_init = std::min(size_t(std::max(hyper.init_samples, 1)), M);
  for (size_t i = 0; i < n_init && !run.done; ++i) {
    const size_t j = i + size_t(pick.bounded(uint64_t(M - i)));
    std::swap(order[i], order[j]);
    const size_t before = run.trace.events.size();
    run.query_row(order[i]);
    if (run.trace.events.size() > before) pool_rows.push_back(order[i]);
  }

  uint64_t round = 0;
  while (!run.done) {
    std::vector<std::vector<double>> xs;
    std::vector<double> ys;
    xs.reserve(pool_rows.size());
    for (size_t r : pool_rows) {
      xs.push_back(table.embeddings[r]);
      ys.push_back(orc.at(table.ids[r]).validation_accuracy);
    }

    Rng net_rng = root.fork(100 + round);
    const tc::ParamStore net = train_basis_net(xs, ys, hyper, net_rng);

    std::vector<std::vector<double>> phi;
    phi.reserve(xs.size());
    for (const auto& x : xs) phi.push_back(basis_features(net, x));
    const auto [alpha, beta] = fit_evidence(phi, ys);
    const BlrPosterior post = blr_posterior(phi, ys, alpha, beta);

    const double incumbent = hyper.running_incumbent ? run.best : hyper.ei_incumbent;
    std::vector<std::pair<double, size_t>> scored;  // (EI, row)
    for (size_t r = 0; r < M; ++r) {
      if (run.visited[r]) continue;
      const auto [mu, var] = post.predict(basis_features(net, table.embeddings[r]));
      scored.emplace_back(expected_improvement(mu, std::sqrt(std::max(var, 0.0)), incumbent), r);
    }
    std::sort(scored.begin(), scored.end(), [&](const auto& a, const auto& b) {
      if (a.first != b.first) return a.first > b.first;
      return table.ids[a.second] < table.ids[b.second];
    });

    const size_t k = std::min(size_t(std::max(hyper.top_k_per_round, 1)), scored.size());
    for (size_t i = 0; i < k && !run.done; ++i) {
      const size_t r = scored[i].second;
      const size_t before = run.trace.events.size();
      run.query_row(r);
      if (run.trace.events.size() > before) pool_rows.push_back(r);
    }
    ++round;
  }
  return run.trace;
}

}  // namespace lnas::search
