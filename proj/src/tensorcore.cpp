#include "lnas/tensorcore.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numeric>

namespace lnas::tc {

namespace {

int64_t shape_numel(const std::vector<int64_t>& shape) {
  int64_t n = 1;
  for (auto d : shape) {
    if (d < 0) throw ShapeMismatch("negative dimension");
    n *= d;
  }
  return n;
}

void require_2d(const Tensor& t, const char* who) {
  if (t.shape.size() != 2) throw ShapeMismatch(std::string(who) + ": tensor is not 2-D");
}

}  // namespace

Tensor Tensor::zeros(std::vector<int64_t> shape) {
  Tensor t;
  int64_t n = shape_numel(shape);
  t.shape = std::move(shape);
  t.data.assign(size_t(n), 0.0);
  return t;
}

Tensor Tensor::of(std::vector<int64_t> shape, std::vector<double> values) {
  if (shape_numel(shape) != int64_t(values.size()))
    throw ShapeMismatch("Tensor::of: data length does not match shape");
  Tensor t;
  t.shape = std::move(shape);
  t.data = std::move(values);
  return t;
}

bool Tensor::all_finite() const {
  for (double v : data)
    if (!std::isfinite(v)) return false;
  return true;
}

Tensor matmul(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul");
  require_2d(b, "matmul");
  if (a.shape[1] != b.shape[0]) throw ShapeMismatch("matmul: inner dimensions disagree");
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[1];
  Tensor c = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* ar = &a.data[size_t(i * k)];
    double* cr = &c.data[size_t(i * n)];
    for (int64_t kk = 0; kk < k; ++kk) {
      const double av = ar[kk];
      if (av == 0.0) continue;
      const double* br = &b.data[size_t(kk * n)];
      for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

Tensor matmul_tn(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_tn");
  require_2d(b, "matmul_tn");
  if (a.shape[0] != b.shape[0]) throw ShapeMismatch("matmul_tn: leading dimensions disagree");
  const int64_t k = a.shape[0], m = a.shape[1], n = b.shape[1];
  Tensor c = Tensor::zeros({m, n});
  for (int64_t kk = 0; kk < k; ++kk) {
    const double* ar = &a.data[size_t(kk * m)];
    const double* br = &b.data[size_t(kk * n)];
    for (int64_t i = 0; i < m; ++i) {
      const double av = ar[i];
      if (av == 0.0) continue;
      double* cr = &c.data[size_t(i * n)];
      for (int64_t j = 0; j < n; ++j) cr[j] += av * br[j];
    }
  }
  return c;
}

Tensor matmul_nt(const Tensor& a, const Tensor& b) {
  require_2d(a, "matmul_nt");
  require_2d(b, "matmul_nt");
  if (a.shape[1] != b.shape[1]) throw ShapeMismatch("matmul_nt: trailing dimensions disagree");
  const int64_t m = a.shape[0], k = a.shape[1], n = b.shape[0];
  Tensor c = Tensor::zeros({m, n});
  for (int64_t i = 0; i < m; ++i) {
    const double* ar = &a.data[size_t(i * k)];
    double* cr = &c.data[size_t(i * n)];
    for (int64_t j = 0; j < n; ++j) {
      const double* br = &b.data[size_t(j * k)];
      double s = 0;
      for (int64_t kk = 0; kk < k; ++kk) s += ar[kk] * br[kk];
      cr[j] = s;
    }
  }
  return c;
}

void glorot_init(Tensor& t, Rng& rng) {
  require_2d(t, "glorot_init");
  const double std = std::sqrt(2.0 / double(t.shape[0] + t.shape[1]));
  for (auto& v : t.data) v = rng.gaussian() * std;
}

// ---- ParamStore ---------------------------------------------------------------

Tensor& ParamStore::create(const std::string& name, std::vector<int64_t> shape, bool trainable) {
  if (params_.count(name)) throw DuplicateParam("parameter '" + name + "' already exists");
  Param p;
  p.value = Tensor::zeros(shape);
  p.grad = Tensor::zeros(shape);
  p.m = Tensor::zeros(shape);
  p.v = Tensor::zeros(shape);
  p.trainable = trainable;
  auto [it, ok] = params_.emplace(name, std::move(p));
  (void)ok;
  return it->second.value;
}

Tensor& ParamStore::value(const std::string& name) {
  auto it = params_.find(name);
  if (it == params_.end()) throw UnknownParam("no parameter '" + name + "'");
  return it->second.value;
}

const Tensor& ParamStore::value(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UnknownParam("no parameter '" + name + "'");
  return it->second.value;
}

const Tensor& ParamStore::grad(const std::string& name) const {
  auto it = params_.find(name);
  if (it == params_.end()) throw UnknownParam("no parameter '" + name + "'");
  return it->second.grad;
}

void ParamStore::accumulate(const std::string& name, const Tensor& g) {
  auto it = params_.find(name);
  if (it == params_.end()) throw UnknownParam("no parameter '" + name + "'");
  if (!it->second.grad.same_shape(g))
    throw ShapeMismatch("gradient shape mismatch for '" + name + "'");
  auto& dst = it->second.grad.data;
  for (size_t i = 0; i < dst.size(); ++i) dst[i] += g.data[i];
  grads_live_ = true;
}

void ParamStore::zero_grads() {
  for (auto& [name, p] : params_) p.grad.fill(0.0);
  grads_live_ = false;
}

void ParamStore::adam_update(double lr, double beta1, double beta2, double eps) {
  if (!grads_live_)
    throw MissingGradient("adam_update called with no accumulated gradients");
  const int64_t t = step_ + 1;
  const double bc1 = 1.0 - std::pow(beta1, double(t));
  const double bc2 = 1.0 - std::pow(beta2, double(t));
  for (auto& [name, p] : params_) {
    if (!p.trainable) continue;
    for (size_t i = 0; i < p.value.data.size(); ++i) {
      const double g = p.grad.data[i];
      p.m.data[i] = beta1 * p.m.data[i] + (1.0 - beta1) * g;
      p.v.data[i] = beta2 * p.v.data[i] + (1.0 - beta2) * g * g;
      const double mhat = p.m.data[i] / bc1;
      const double vhat = p.v.data[i] / bc2;
      p.value.data[i] -= lr * mhat / (std::sqrt(vhat) + eps);
      if (!std::isfinite(p.value.data[i]))
        throw NonFinite("non-finite value in '" + name + "' after Adam step");
    }
  }
  step_ = t;
  zero_grads();
}

// ---- layers ---------------------------------------------------------------------

Tensor linear(const Tensor& x, const Tensor& W, const Tensor& b, LinearCache* cache) {
  require_2d(x, "linear");
  require_2d(W, "linear");
  if (x.shape[1] != W.shape[0]) throw ShapeMismatch("linear: input width != W rows");
  if (b.numel() != W.shape[1]) throw ShapeMismatch("linear: bias length != W cols");
  Tensor y = matmul(x, W);
  const int64_t B = y.shape[0], out = y.shape[1];
  for (int64_t i = 0; i < B; ++i)
    for (int64_t j = 0; j < out; ++j) y.at(i, j) += b.at(j);
  if (cache) cache->x = x;
  return y;
}

void linear_backward(const Tensor& gout, const LinearCache& cache, const Tensor& W,
                     Tensor* gx, Tensor* gW, Tensor* gb) {
  if (gx) *gx = matmul_nt(gout, W);
  if (gW) *gW = matmul_tn(cache.x, gout);
  if (gb) {
    *gb = Tensor::zeros({gout.shape[1]});
    for (int64_t i = 0; i < gout.shape[0]; ++i)
      for (int64_t j = 0; j < gout.shape[1]; ++j) gb->at(j) += gout.at(i, j);
  }
}

Tensor batchnorm(const Tensor& x, const Tensor& gamma, const Tensor& beta,
                 Tensor& running_mean, Tensor& running_var, bool training,
                 BatchNormCache* cache, double momentum, double eps) {
  require_2d(x, "batchnorm");
  const int64_t B = x.shape[0], F = x.shape[1];
  if (gamma.numel() != F || beta.numel() != F || running_mean.numel() != F ||
      running_var.numel() != F)
    throw ShapeMismatch("batchnorm: feature-length mismatch");

  Tensor y = Tensor::zeros({B, F});
  if (training) {
    if (B < 2) throw ShapeMismatch("batchnorm: training mode needs at least 2 rows");
    std::vector<double> mean(size_t(F), 0.0), var(size_t(F), 0.0), invstd(size_t(F), 0.0);
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < F; ++j) mean[size_t(j)] += x.at(i, j);
    for (auto& m : mean) m /= double(B);
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < F; ++j) {
        double d = x.at(i, j) - mean[size_t(j)];
        var[size_t(j)] += d * d;
      }
    for (auto& v : var) v /= double(B);
    for (int64_t j = 0; j < F; ++j) invstd[size_t(j)] = 1.0 / std::sqrt(var[size_t(j)] + eps);

    Tensor xc = Tensor::zeros({B, F});
    Tensor xhat = Tensor::zeros({B, F});
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < F; ++j) {
        xc.at(i, j) = x.at(i, j) - mean[size_t(j)];
        xhat.at(i, j) = xc.at(i, j) * invstd[size_t(j)];
        y.at(i, j) = gamma.at(j) * xhat.at(i, j) + beta.at(j);
      }
    const double unbias = double(B) / double(B - 1);
    for (int64_t j = 0; j < F; ++j) {
      running_mean.at(j) = (1.0 - momentum) * running_mean.at(j) + momentum * mean[size_t(j)];
      running_var.at(j) = (1.0 - momentum) * running_var.at(j) + momentum * var[size_t(j)] * unbias;
    }
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->xc = std::move(xc);
      cache->invstd = std::move(invstd);
      cache->training = true;
    }
  } else {
    std::vector<double> invstd(size_t(F), 0.0);
    for (int64_t j = 0; j < F; ++j) invstd[size_t(j)] = 1.0 / std::sqrt(running_var.at(j) + eps);
    Tensor xhat = Tensor::zeros({B, F});
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < F; ++j) {
        xhat.at(i, j) = (x.at(i, j) - running_mean.at(j)) * invstd[size_t(j)];
        y.at(i, j) = gamma.at(j) * xhat.at(i, j) + beta.at(j);
      }
    if (cache) {
      cache->xhat = std::move(xhat);
      cache->xc = Tensor();
      cache->invstd = std::move(invstd);
      cache->training = false;
    }
  }
  return y;
}

void batchnorm_backward(const Tensor& gout, const BatchNormCache& cache, const Tensor& gamma,
                        Tensor* gx, Tensor* ggamma, Tensor* gbeta) {
  const int64_t B = gout.shape[0], F = gout.shape[1];
  if (ggamma) {
    *ggamma = Tensor::zeros({F});
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < F; ++j) ggamma->at(j) += gout.at(i, j) * cache.xhat.at(i, j);
  }
  if (gbeta) {
    *gbeta = Tensor::zeros({F});
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < F; ++j) gbeta->at(j) += gout.at(i, j);
  }
  if (!gx) return;

  *gx = Tensor::zeros({B, F});
  if (!cache.training) {
    for (int64_t i = 0; i < B; ++i)
      for (int64_t j = 0; j < F; ++j)
        gx->at(i, j) = gout.at(i, j) * gamma.at(j) * cache.invstd[size_t(j)];
    return;
  }

  for (int64_t j = 0; j < F; ++j) {
    const double invstd = cache.invstd[size_t(j)];
    double sum_dxhat = 0.0, sum_dxhat_xc = 0.0, sum_xc = 0.0;
    for (int64_t i = 0; i < B; ++i) {
      const double dxhat = gout.at(i, j) * gamma.at(j);
      sum_dxhat += dxhat;
      sum_dxhat_xc += dxhat * cache.xc.at(i, j);
      sum_xc += cache.xc.at(i, j);
    }
    const double dvar = sum_dxhat_xc * (-0.5) * invstd * invstd * invstd;
    const double dmean = -invstd * sum_dxhat + dvar * (-2.0 / double(B)) * sum_xc;
    for (int64_t i = 0; i < B; ++i) {
      const double dxhat = gout.at(i, j) * gamma.at(j);
      gx->at(i, j) = dxhat * invstd + dvar * 2.0 * cache.xc.at(i, j) / double(B) +
                     dmean / double(B);
    }
  }
}

Tensor relu(const Tensor& x, ReluCache* cache) {
  Tensor y = x;
  for (auto& v : y.data) v = v > 0.0 ? v : 0.0;
  if (cache) cache->x = x;
  return y;
}

void relu_backward(const Tensor& gout, const ReluCache& cache, Tensor* gx) {
  if (!gx) return;
  *gx = gout;
  for (size_t i = 0; i < gx->data.size(); ++i)
    if (cache.x.data[i] <= 0.0) gx->data[i] = 0.0;
}

Tensor sigmoid(const Tensor& x, SigmoidCache* cache) {
  Tensor y = x;
  for (auto& v : y.data) v = 1.0 / (1.0 + std::exp(-v));
  if (cache) cache->y = y;
  return y;
}

void sigmoid_backward(const Tensor& gout, const SigmoidCache& cache, Tensor* gx) {
  if (!gx) return;
  *gx = gout;
  for (size_t i = 0; i < gx->data.size(); ++i) {
    const double y = cache.y.data[i];
    gx->data[i] *= y * (1.0 - y);
  }
}

Tensor tanh_act(const Tensor& x, TanhCache* cache) {
  Tensor y = x;
  for (auto& v : y.data) v = std::tanh(v);
  if (cache) cache->y = y;
  return y;
}

void tanh_backward(const Tensor& gout, const TanhCache& cache, Tensor* gx) {
  if (!gx) return;
  *gx = gout;
  for (size_t i = 0; i < gx->data.size(); ++i) {
    const double y = cache.y.data[i];
    gx->data[i] *= 1.0 - y * y;
  }
}

Tensor row_softmax(const Tensor& x, SoftmaxCache* cache) {
  require_2d(x, "row_softmax");
  Tensor y = x;
  const int64_t B = x.shape[0], F = x.shape[1];
  for (int64_t i = 0; i < B; ++i) {
    double mx = y.at(i, 0);
    for (int64_t j = 1; j < F; ++j) mx = std::max(mx, y.at(i, j));
    double sum = 0.0;
    for (int64_t j = 0; j < F; ++j) {
      y.at(i, j) = std::exp(y.at(i, j) - mx);
      sum += y.at(i, j);
    }
    for (int64_t j = 0; j < F; ++j) y.at(i, j) /= sum;
  }
  if (cache) cache->y = y;
  return y;
}

void row_softmax_backward(const Tensor& gout, const SoftmaxCache& cache, Tensor* gx) {
  if (!gx) return;
  const Tensor& y = cache.y;
  *gx = Tensor::zeros(y.shape);
  const int64_t B = y.shape[0], F = y.shape[1];
  for (int64_t i = 0; i < B; ++i) {
    double dot = 0.0;
    for (int64_t j = 0; j < F; ++j) dot += gout.at(i, j) * y.at(i, j);
    for (int64_t j = 0; j < F; ++j) gx->at(i, j) = y.at(i, j) * (gout.at(i, j) - dot);
  }
}

// ---- LSTM ------------------------------------------------------------------------

LstmOut lstm_step(const Tensor& x, const Tensor& h, const Tensor& c, const Tensor& Wx,
                  const Tensor& Wh, const Tensor& b, LstmCache* cache) {
  require_2d(x, "lstm_step");
  require_2d(h, "lstm_step");
  const int64_t B = x.shape[0];
  const int64_t H = h.shape[1];
  if (Wx.shape[1] != 4 * H || Wh.shape[0] != H || Wh.shape[1] != 4 * H || b.numel() != 4 * H)
    throw ShapeMismatch("lstm_step: parameter shapes disagree with hidden size");
  if (c.shape != h.shape || h.shape[0] != B) throw ShapeMismatch("lstm_step: state shapes");

  Tensor pre = matmul(x, Wx);
  Tensor preh = matmul(h, Wh);
  for (size_t i = 0; i < pre.data.size(); ++i) pre.data[i] += preh.data[i];
  for (int64_t i = 0; i < B; ++i)
    for (int64_t j = 0; j < 4 * H; ++j) pre.at(i, j) += b.at(j);

  Tensor ig = Tensor::zeros({B, H}), fg = Tensor::zeros({B, H}), gg = Tensor::zeros({B, H}),
         og = Tensor::zeros({B, H});
  for (int64_t r = 0; r < B; ++r)
    for (int64_t j = 0; j < H; ++j) {
      ig.at(r, j) = 1.0 / (1.0 + std::exp(-pre.at(r, j)));
      fg.at(r, j) = 1.0 / (1.0 + std::exp(-pre.at(r, H + j)));
      gg.at(r, j) = std::tanh(pre.at(r, 2 * H + j));
      og.at(r, j) = 1.0 / (1.0 + std::exp(-pre.at(r, 3 * H + j)));
    }

  LstmOut out;
  out.c = Tensor::zeros({B, H});
  out.h = Tensor::zeros({B, H});
  Tensor tanh_c = Tensor::zeros({B, H});
  for (int64_t r = 0; r < B; ++r)
    for (int64_t j = 0; j < H; ++j) {
      out.c.at(r, j) = fg.at(r, j) * c.at(r, j) + ig.at(r, j) * gg.at(r, j);
      tanh_c.at(r, j) = std::tanh(out.c.at(r, j));
      out.h.at(r, j) = og.at(r, j) * tanh_c.at(r, j);
    }

  if (cache) {
    cache->x = x;
    cache->h_prev = h;
    cache->c_prev = c;
    cache->i = std::move(ig);
    cache->f = std::move(fg);
    cache->g = std::move(gg);
    cache->o = std::move(og);
    cache->c_new = out.c;
    cache->tanh_c_new = std::move(tanh_c);
  }
  return out;
}

void lstm_step_backward(const Tensor& gh, const Tensor& gc, const LstmCache& cache,
                        const Tensor& Wx, const Tensor& Wh, Tensor* gx, Tensor* gh_prev,
                        Tensor* gc_prev, Tensor* gWx, Tensor* gWh, Tensor* gb) {
  const int64_t B = cache.i.shape[0], H = cache.i.shape[1];
  auto val = [&](const Tensor& t, int64_t r, int64_t j) -> double {
    return t.numel() == 0 ? 0.0 : t.at(r, j);
  };

  Tensor gpre = Tensor::zeros({B, 4 * H});
  Tensor gcp = Tensor::zeros({B, H});
  for (int64_t r = 0; r < B; ++r)
    for (int64_t j = 0; j < H; ++j) {
      const double i = cache.i.at(r, j), f = cache.f.at(r, j), g = cache.g.at(r, j),
                   o = cache.o.at(r, j);
      const double tc = cache.tanh_c_new.at(r, j);
      const double ghv = val(gh, r, j);
      const double gc_total = val(gc, r, j) + ghv * o * (1.0 - tc * tc);
      const double go = ghv * tc;
      const double gi = gc_total * g;
      const double gf = gc_total * cache.c_prev.at(r, j);
      const double gg = gc_total * i;
      gpre.at(r, j) = gi * i * (1.0 - i);
      gpre.at(r, H + j) = gf * f * (1.0 - f);
      gpre.at(r, 2 * H + j) = gg * (1.0 - g * g);
      gpre.at(r, 3 * H + j) = go * o * (1.0 - o);
      gcp.at(r, j) = gc_total * f;
    }

  if (gx) *gx = matmul_nt(gpre, Wx);
  if (gh_prev) *gh_prev = matmul_nt(gpre, Wh);
  if (gc_prev) *gc_prev = std::move(gcp);
  if (gWx) *gWx = matmul_tn(cache.x, gpre);
  if (gWh) *gWh = matmul_tn(cache.h_prev, gpre);
  if (gb) {
    *gb = Tensor::zeros({4 * H});
    for (int64_t r = 0; r < B; ++r)
      for (int64_t j = 0; j < 4 * H; ++j) gb->at(j) += gpre.at(r, j);
  }
}

// ---- gradient checking --------------------------------------------------------------

GradCheckResult finite_diff_check(const std::function<double()>& loss_fn, ParamStore& ps,
                                  int n_coords, double eps, Rng& rng) {
  std::vector<std::pair<std::string, int64_t>> coords;
  for (const auto& [name, p] : ps.all())
    if (p.trainable)
      for (int64_t i = 0; i < p.value.numel(); ++i) coords.emplace_back(name, i);
  if (coords.empty()) throw Error("finite_diff_check: no trainable coordinates");

  const int n = std::min<int>(n_coords, int(coords.size()));
  for (int i = 0; i < n; ++i) {
    const size_t j = size_t(i) + size_t(rng.bounded(coords.size() - size_t(i)));
    std::swap(coords[size_t(i)], coords[j]);
  }

  ps.zero_grads();
  (void)loss_fn();
  std::map<std::string, Tensor> analytic;
  for (const auto& [name, p] : ps.all()) analytic[name] = p.grad;

  GradCheckResult res;
  res.coords_checked = n;
  for (int k = 0; k < n; ++k) {
    const auto& [name, idx] = coords[size_t(k)];
    double& w = ps.value(name).data[size_t(idx)];
    const double orig = w;

    w = orig + eps;
    ps.zero_grads();
    const double fp = loss_fn();
    w = orig - eps;
    ps.zero_grads();
    const double fm = loss_fn();
    w = orig;

    const double numeric = (fp - fm) / (2.0 * eps);
    const double a = analytic[name].data[size_t(idx)];
    const double rel = std::abs(a - numeric) / std::max({std::abs(a), std::abs(numeric), 1e-8});
    if (rel > res.max_rel_err) {
      res.max_rel_err = rel;
      res.worst_coord = name + "[" + std::to_string(idx) + "]";
    }
  }
  ps.zero_grads();
  return res;
}

// ---- checkpoints -----------------------------------------------------------------------

namespace {

constexpr char kMagic[4] = {'L', 'N', 'T', 'C'};
constexpr uint32_t kVersion = 1;
constexpr uint32_t kEndianTag = 0x01020304u;

template <typename T>
void write_pod(std::ofstream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T read_pod(std::ifstream& in) {
  T v;
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw CheckpointError("truncated checkpoint");
  return v;
}

}  // namespace

void save_checkpoint(const std::string& path, const ParamStore& ps, const std::string& meta_json) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  out.write(kMagic, 4);
  write_pod(out, kVersion);
  write_pod(out, kEndianTag);
  write_pod(out, uint64_t(meta_json.size()));
  out.write(meta_json.data(), std::streamsize(meta_json.size()));
  write_pod(out, uint64_t(ps.all().size()));
  for (const auto& [name, p] : ps.all()) {
    write_pod(out, uint32_t(name.size()));
    out.write(name.data(), std::streamsize(name.size()));
    write_pod(out, uint8_t(p.trainable ? 1 : 0));
    write_pod(out, uint32_t(p.value.shape.size()));
    for (auto d : p.value.shape) write_pod(out, int64_t(d));
    out.write(reinterpret_cast<const char*>(p.value.data.data()),
              std::streamsize(p.value.data.size() * sizeof(double)));
  }
  if (!out) throw CheckpointError("write failure on '" + path + "'");
}

std::string load_checkpoint(const std::string& path, ParamStore& ps) {
  if (!ps.all().empty()) throw CheckpointError("load_checkpoint needs an empty store");
  std::ifstream in(path, std::ios::binary);
  if (!in) throw CheckpointError("cannot open '" + path + "'");
  char magic[4];
  in.read(magic, 4);
  if (!in || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("'" + path + "' is not a checkpoint file");
  const auto version = read_pod<uint32_t>(in);
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));
  const auto endian = read_pod<uint32_t>(in);
  if (endian != kEndianTag)
    throw CheckpointError("checkpoint byte order differs from this host");
  const auto meta_len = read_pod<uint64_t>(in);
  std::string meta(size_t(meta_len), '\0');
  in.read(meta.data(), std::streamsize(meta_len));
  if (!in) throw CheckpointError("truncated metadata");
  const auto count = read_pod<uint64_t>(in);
  for (uint64_t t = 0; t < count; ++t) {
    const auto name_len = read_pod<uint32_t>(in);
    std::string name(size_t(name_len), '\0');
    in.read(name.data(), std::streamsize(name_len));
    const auto trainable = read_pod<uint8_t>(in);
    const auto ndim = read_pod<uint32_t>(in);
    std::vector<int64_t> shape;
    for (uint32_t d = 0; d < ndim; ++d) shape.push_back(read_pod<int64_t>(in));
    Tensor& dst = ps.create(name, shape, trainable != 0);
    in.read(reinterpret_cast<char*>(dst.data.data()),
            std::streamsize(dst.data.size() * sizeof(double)));
    if (!in) throw CheckpointError("truncated tensor '" + name + "'");
  }
  return meta;
}

}  // namespace lnas::tc
