#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "lnas/common.hpp"

// Minimal dense float64 tensor math with hand-written backward passes. The
// model graphs in this codebase are small and fixed, so there is no tape: each
// forward op fills a cache struct and has a matching *_backward that consumes
// it. Backward functions write raw gradients; accumulation into parameter slots
// goes through ParamStore::accumulate so the optimizer can track liveness.

namespace lnas::tc {

struct ShapeMismatch : Error { using Error::Error; };
struct MissingGradient : Error { using Error::Error; };
struct DuplicateParam : Error { using Error::Error; };
struct UnknownParam : Error { using Error::Error; };
struct CheckpointError : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };

struct Tensor {
  std::vector<int64_t> shape;
  std::vector<double> data;

  Tensor() = default;

  static Tensor zeros(std::vector<int64_t> shape);
  static Tensor of(std::vector<int64_t> shape, std::vector<double> values);

  int64_t numel() const { return int64_t(data.size()); }
  int64_t rows() const { return shape.empty() ? 0 : shape[0]; }
  int64_t cols() const { return shape.size() < 2 ? 1 : shape[1]; }

  double& at(int64_t i) { return data[size_t(i)]; }
  double at(int64_t i) const { return data[size_t(i)]; }
  double& at(int64_t i, int64_t j) { return data[size_t(i * cols() + j)]; }
  double at(int64_t i, int64_t j) const { return data[size_t(i * cols() + j)]; }

  bool same_shape(const Tensor& o) const { return shape == o.shape; }
  bool all_finite() const;
  void fill(double v) { std::fill(data.begin(), data.end(), v); }

  bool operator==(const Tensor&) const = default;
};

Tensor matmul(const Tensor& a, const Tensor& b);     // (m,k)x(k,n)
Tensor matmul_tn(const Tensor& a, const Tensor& b);  // aT x b: (k,m),(k,n) -> (m,n)
Tensor matmul_nt(const Tensor& a, const Tensor& b);  // a x bT: (m,k),(n,k) -> (m,n)

void glorot_init(Tensor& t, Rng& rng);  // 2-D weight init, N(0, 2/(fan_in+fan_out))

// ---- parameters and Adam -----------------------------------------------------

struct Param {
  Tensor value;
  Tensor grad;
  Tensor m;
  Tensor v;
  bool trainable = true;
};

class ParamStore {
 public:
  Tensor& create(const std::string& name, std::vector<int64_t> shape, bool trainable = true);
  bool has(const std::string& name) const { return params_.count(name) != 0; }
  Tensor& value(const std::string& name);
  const Tensor& value(const std::string& name) const;
  const Tensor& grad(const std::string& name) const;

  // Shape-checked gradient accumulation; marks gradients live for the optimizer.
  void accumulate(const std::string& name, const Tensor& g);
  void zero_grads();
  bool grads_live() const { return grads_live_; }

  // Bias-corrected Adam on all trainable parameters. Throws MissingGradient when
  // no gradients were accumulated since the last update; zeroes gradients after
  // stepping. Throws NonFinite if an update produces a non-finite value.
  void adam_update(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-8);

  int64_t step_count() const { return step_; }
  const std::map<std::string, Param>& all() const { return params_; }
  std::map<std::string, Param>& all_mutable() { return params_; }

 private:
  std::map<std::string, Param> params_;  // ordered: iteration and files are stable
  int64_t step_ = 0;
  bool grads_live_ = false;
};

// ---- layers -------------------------------------------------------------------

struct LinearCache {
  Tensor x;
};
// y = x W + b. x: (B, in), W: (in, out), b: (out).
Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b, LinearCache* cache = nullptr);
void linear_backward(const Tensor& gout, const LinearCache& cache, const Tensor& W,
                     Tensor* gx, Tensor* gW, Tensor* gb);

struct BatchNormCache {
  Tensor xhat;
  Tensor xc;                    // x - batch mean
  std::vector<double> invstd;   // per feature
  bool training = true;
};
// Per-feature normalization over the row dimension. Training mode uses biased
// batch variance and updates running stats (running_var gets the unbiased
// estimate, matching the usual convention); eval mode normalizes with the
// running stats and leaves them untouched. Training requires >= 2 rows.
Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor& running_mean, Tensor& running_var, bool training,
                 BatchNormCache* cache = nullptr, double momentum = 0.1, double eps = 1e-5);
void batchnorm_backward(const Tensor& gout, const BatchNormCache& cache, const Tensor& gamma,
                        Tensor* gx, Tensor* ggamma, Tensor* gbeta);

struct ReluCache {
  Tensor x;
};
Tensor relu(const Tensor& x, ReluCache* cache = nullptr);
void relu_backward(const Tensor& gout, const ReluCache& cache, Tensor* gx);

struct SigmoidCache {
  Tensor y;
};
Tensor sigmoid(const Tensor& x, SigmoidCache* cache = nullptr);
void sigmoid_backward(const Tensor& gout, const SigmoidCache& cache, Tensor* gx);

struct TanhCache {
  Tensor y;
};
Tensor tanh_act(const Tensor& x, TanhCache* cache = nullptr);
void tanh_backward(const Tensor& gout, const TanhCache& cache, Tensor* gx);

struct SoftmaxCache {
  Tensor y;
};
Tensor row_softmax(const Tensor& x, SoftmaxCache* cache = nullptr);
void row_softmax_backward(const Tensor& gout, const SoftmaxCache& cache, Tensor* gx);

// ---- LSTM ----------------------------------------------------------------------

struct LstmCache {
  Tensor x, h_prev, c_prev;
  Tensor i, f, g, o;
  Tensor c_new, tanh_c_new;
};
struct LstmOut {
  Tensor h, c;
};
// Standard cell. Wx: (I, 4H), Wh: (H, 4H), b: (4H); gate order i, f, g, o.
LstmOut lstm_step(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& Wx,
                  const Tensor& Wh, const Tensor& b, LstmCache* cache = nullptr);
// gh/gc are the incoming gradients for the new h and c (either may be empty to
// mean zero). gc_prev_out etc. may be null when not needed.
void lstm_step_backward(const Tensor& gh, const Tensor& gc, const LstmCache& cache,
                        const Tensor& Wx, const Tensor& Wh, Tensor* gx, Tensor* gh_prev,
                        Tensor* gc_prev, Tensor* gWx, Tensor* gWh, Tensor* gb);

// ---- gradient checking ----------------------------------------------------------

struct GradCheckResult {
  double max_rel_err = 0.0;
  std::string worst_coord;
  int coords_checked = 0;
};

// Central-difference check against analytic gradients. loss_fn computes the loss
// and accumulates gradients into the store (the harness zeroes them around each
// call). Checks n_coords coordinates sampled without replacement across all
// trainable parameters. Relative error: |a - n| / max(|a|, |n|, 1e-8).
GradCheckResult finite_diff_check(const std::function<double()>& loss_fn, ParamStore& ps,
                                  int n_coords, double eps, Rng& rng);

// ---- checkpoints -----------------------------------------------------------------

// Single-file container: magic "LNTC", format version, byte-order tag, a JSON
// metadata blob, then named f64 tensors in name order. Writing the same store
// twice yields identical bytes.
void save_checkpoint(const std::string& path, const ParamStore& ps, const std::string& meta_json);
// Store must be empty; returns the metadata blob.
std::string load_checkpoint(const std::string& path, ParamStore& ps);

}  // namespace lnas::tc
