#include "gsfda/network.hpp"

#include <algorithm>
#include <cmath>

namespace gsfda {

namespace {

const std::vector<std::string> kParamNames = {
    "W1", "b1", "W2", "b2", "bn_gamma", "bn_beta", "W_fl", "b_fl", "W_g", "b_g"};

Matrix glorot_uniform(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  Matrix w(out_dim, in_dim);
  for (double& v : w.data()) v = rng.uniform(-a, a);
  return w;
}

// y = x * W^T + b, with W (out x in) and b (1 x out).
Matrix affine(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix y = matmul_nt(x, w);
  for (std::size_t i = 0; i < y.rows(); ++i) {
    double* row = y.row_ptr(i);
    for (std::size_t j = 0; j < y.cols(); ++j) row[j] += b(0, j);
  }
  return y;
}

Matrix relu(const Matrix& z) {
  Matrix a = z;
  for (double& v : a.data()) v = std::max(0.0, v);
  return a;
}

}  // namespace

const std::vector<std::string>& NetworkParams::param_names() { return kParamNames; }

Matrix& NetworkParams::by_name(const std::string& name) {
  return const_cast<Matrix&>(static_cast<const NetworkParams&>(*this).by_name(name));
}

const Matrix& NetworkParams::by_name(const std::string& name) const {
  if (name == "W1") return W1;
  if (name == "b1") return b1;
  if (name == "W2") return W2;
  if (name == "b2") return b2;
  if (name == "bn_gamma") return bn_gamma;
  if (name == "bn_beta") return bn_beta;
  if (name == "W_fl") return W_fl;
  if (name == "b_fl") return b_fl;
  if (name == "W_g") return W_g;
  if (name == "b_g") return b_g;
  throw UsageError("unknown parameter name: " + name);
}

void NetworkParams::set_all_trainable() {
  for (const auto& name : kParamNames) trainable[name] = true;
}

void NetworkParams::set_adaptation_trainable() {
  for (const auto& name : kParamNames) trainable[name] = false;
  trainable["bn_gamma"] = true;
  trainable["bn_beta"] = true;
  trainable["W_fl"] = true;
  trainable["b_fl"] = true;
  trainable["W_g"] = true;
}

NetworkParams init_params(const NetworkDims& dims, Rng& rng) {
  NetworkParams p;
  p.dims = dims;
  p.W1 = glorot_uniform(dims.hidden, dims.input_dim, rng);
  p.b1 = Matrix(1, dims.hidden);
  p.W2 = glorot_uniform(dims.hidden, dims.hidden, rng);
  p.b2 = Matrix(1, dims.hidden);
  p.bn_gamma = Matrix(1, dims.hidden, 1.0);
  p.bn_beta = Matrix(1, dims.hidden);
  p.bn_mean = Matrix(1, dims.hidden);
  p.bn_var = Matrix(1, dims.hidden, 1.0);
  p.W_fl = glorot_uniform(dims.feature, dims.hidden, rng);
  p.b_fl = Matrix(1, dims.feature);
  p.W_g = glorot_uniform(dims.classes, dims.feature, rng);
  p.b_g = Matrix(1, dims.classes);
  p.set_all_trainable();
  return p;
}

ForwardCache forward(NetworkParams& params, const Matrix& x, const Vector* mask,
                     bool training, bool update_running) {
  const NetworkDims& d = params.dims;
  if (x.cols() != d.input_dim) throw ShapeError("forward: input dim mismatch");
  if (x.rows() == 0) throw ConfigError("forward: empty batch");
  if (training && x.rows() < 2)
    throw ConfigError("forward: BN training mode needs a batch of at least 2");
  if (mask && mask->size() != d.feature)
    throw ShapeError("forward: mask length must equal feature dim");

  ForwardCache c;
  c.training = training;
  c.x = x;
  c.z1 = affine(x, params.W1, params.b1);
  c.a1 = relu(c.z1);
  c.z2 = affine(c.a1, params.W2, params.b2);
  c.a2 = relu(c.z2);

  const std::size_t n = x.rows(), h = d.hidden;
  c.bn_mean_used.resize(h);
  c.bn_inv_std.resize(h);
  if (training) {
    for (std::size_t j = 0; j < h; ++j) {
      double mean = 0.0;
      for (std::size_t i = 0; i < n; ++i) mean += c.a2(i, j);
      mean /= static_cast<double>(n);
      double var = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dv = c.a2(i, j) - mean;
        var += dv * dv;
      }
      var /= static_cast<double>(n);
      c.bn_mean_used[j] = mean;
      c.bn_inv_std[j] = 1.0 / std::sqrt(var + kBnEps);
      if (update_running) {
        params.bn_mean(0, j) = (1.0 - kBnMomentum) * params.bn_mean(0, j) + kBnMomentum * mean;
        params.bn_var(0, j) = (1.0 - kBnMomentum) * params.bn_var(0, j) + kBnMomentum * var;
      }
    }
  } else {
    for (std::size_t j = 0; j < h; ++j) {
      c.bn_mean_used[j] = params.bn_mean(0, j);
      c.bn_inv_std[j] = 1.0 / std::sqrt(params.bn_var(0, j) + kBnEps);
    }
  }
  c.bn_xhat = Matrix(n, h);
  c.bn_out = Matrix(n, h);
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = 0; j < h; ++j) {
      const double xh = (c.a2(i, j) - c.bn_mean_used[j]) * c.bn_inv_std[j];
      c.bn_xhat(i, j) = xh;
      c.bn_out(i, j) = params.bn_gamma(0, j) * xh + params.bn_beta(0, j);
    }
  }

  c.feature = affine(c.bn_out, params.W_fl, params.b_fl);
  if (mask) {
    c.mask = *mask;
    c.feature_masked = c.feature;
    for (std::size_t i = 0; i < n; ++i) {
      double* row = c.feature_masked.row_ptr(i);
      for (std::size_t j = 0; j < d.feature; ++j) row[j] *= (*mask)[j];
    }
  } else {
    c.feature_masked = c.feature;
  }
  c.logits = affine(c.feature_masked, params.W_g, params.b_g);
  ensure_finite(c.logits, "forward logits");

  // Row-wise stable softmax.
  c.probs = Matrix(n, d.classes);
  for (std::size_t i = 0; i < n; ++i) {
    const double* lrow = c.logits.row_ptr(i);
    double mx = lrow[0];
    for (std::size_t j = 1; j < d.classes; ++j) mx = std::max(mx, lrow[j]);
    double sum = 0.0;
    for (std::size_t j = 0; j < d.classes; ++j) {
      const double e = std::exp(lrow[j] - mx);
      c.probs(i, j) = e;
      sum += e;
    }
    for (std::size_t j = 0; j < d.classes; ++j) c.probs(i, j) /= sum;
  }
  return c;
}

ForwardCache forward_eval(const NetworkParams& params, const Matrix& x, const Vector* mask) {
  // Eval mode never writes back; the const_cast is confined here.
  return forward(const_cast<NetworkParams&>(params), x, mask, /*training=*/false,
                 /*update_running=*/false);
}

Matrix& Gradients::by_name(const std::string& name) {
  return const_cast<Matrix&>(static_cast<const Gradients&>(*this).by_name(name));
}

const Matrix& Gradients::by_name(const std::string& name) const {
  if (name == "W1") return W1;
  if (name == "b1") return b1;
  if (name == "W2") return W2;
  if (name == "b2") return b2;
  if (name == "bn_gamma") return bn_gamma;
  if (name == "bn_beta") return bn_beta;
  if (name == "W_fl") return W_fl;
  if (name == "b_fl") return b_fl;
  if (name == "W_g") return W_g;
  if (name == "b_g") return b_g;
  throw UsageError("unknown gradient name: " + name);
}

Gradients& Gradients::operator+=(const Gradients& other) {
  for (const auto& name : NetworkParams::param_names())
    add_inplace(by_name(name), other.by_name(name));
  if (!other.dmask.empty()) {
    if (dmask.empty()) dmask.assign(other.dmask.size(), 0.0);
    for (std::size_t j = 0; j < dmask.size(); ++j) dmask[j] += other.dmask[j];
  }
  return *this;
}

double cross_entropy(const Matrix& probs, const std::vector<int>& labels) {
  if (labels.size() != probs.rows()) throw UsageError("cross_entropy: label count mismatch");
  double loss = 0.0;
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= probs.cols())
      throw UsageError("cross_entropy: label out of range");
    loss -= std::log(std::max(probs(i, y), 1e-12));
  }
  return loss / static_cast<double>(probs.rows());
}

Gradients backward_from_dlogits(const NetworkParams& params, const ForwardCache& cache,
                                const Matrix& dlogits) {
  const NetworkDims& d = params.dims;
  if (dlogits.rows() != cache.batch() || dlogits.cols() != d.classes)
    throw UsageError("backward: dlogits shape does not match cache");
  const std::size_t n = cache.batch(), h = d.hidden;

  Gradients g;
  g.W_g = matmul_tn(dlogits, cache.feature_masked);       // classes x feature
  g.b_g = Matrix::row(col_sums(dlogits));
  Matrix dfm = matmul(dlogits, params.W_g);               // n x feature

  Matrix dfeature = dfm;
  if (!cache.mask.empty()) {
    for (std::size_t i = 0; i < n; ++i) {
      double* row = dfeature.row_ptr(i);
      for (std::size_t j = 0; j < d.feature; ++j) row[j] *= cache.mask[j];
    }
    g.dmask.assign(d.feature, 0.0);
    for (std::size_t i = 0; i < n; ++i)
      for (std::size_t j = 0; j < d.feature; ++j)
        g.dmask[j] += dfm(i, j) * cache.feature(i, j);
  }

  g.W_fl = matmul_tn(dfeature, cache.bn_out);             // feature x hidden
  g.b_fl = Matrix::row(col_sums(dfeature));
  Matrix dbn_out = matmul(dfeature, params.W_fl);         // n x hidden

  g.bn_gamma = Matrix(1, h);
  g.bn_beta = Matrix(1, h);
  for (std::size_t j = 0; j < h; ++j) {
    double dg = 0.0, db = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      dg += dbn_out(i, j) * cache.bn_xhat(i, j);
      db += dbn_out(i, j);
    }
    g.bn_gamma(0, j) = dg;
    g.bn_beta(0, j) = db;
  }

  Matrix da2(n, h);
  if (cache.training) {
    // Full batch-norm backward: gradient flows through the batch mean and
    // variance as well.
    for (std::size_t j = 0; j < h; ++j) {
      const double gamma = params.bn_gamma(0, j);
      const double inv_std = cache.bn_inv_std[j];
      double sum_dxhat = 0.0, sum_dxhat_xhat = 0.0;
      for (std::size_t i = 0; i < n; ++i) {
        const double dxhat = dbn_out(i, j) * gamma;
        sum_dxhat += dxhat;
        sum_dxhat_xhat += dxhat * cache.bn_xhat(i, j);
      }
      const double inv_n = 1.0 / static_cast<double>(n);
      for (std::size_t i = 0; i < n; ++i) {
        const double dxhat = dbn_out(i, j) * gamma;
        da2(i, j) = inv_std * (dxhat - inv_n * sum_dxhat -
                               cache.bn_xhat(i, j) * inv_n * sum_dxhat_xhat);
      }
    }
  } else {
    for (std::size_t j = 0; j < h; ++j) {
      const double k = params.bn_gamma(0, j) * cache.bn_inv_std[j];
      for (std::size_t i = 0; i < n; ++i) da2(i, j) = dbn_out(i, j) * k;
    }
  }

  Matrix dz2 = da2;
  for (std::size_t i = 0; i < dz2.size(); ++i)
    if (cache.z2.data()[i] <= 0.0) dz2.data()[i] = 0.0;
  g.W2 = matmul_tn(dz2, cache.a1);
  g.b2 = Matrix::row(col_sums(dz2));
  Matrix da1 = matmul(dz2, params.W2);

  Matrix dz1 = da1;
  for (std::size_t i = 0; i < dz1.size(); ++i)
    if (cache.z1.data()[i] <= 0.0) dz1.data()[i] = 0.0;
  g.W1 = matmul_tn(dz1, cache.x);
  g.b1 = Matrix::row(col_sums(dz1));

  ensure_finite(g.W1, "backward gradients");
  return g;
}

Gradients backward_ce(const NetworkParams& params, const ForwardCache& cache,
                      const std::vector<int>& labels) {
  if (labels.size() != cache.batch())
    throw UsageError("backward_ce: label count does not match cached batch");
  const std::size_t n = cache.batch();
  Matrix dlogits = cache.probs;
  for (std::size_t i = 0; i < n; ++i) {
    const int y = labels[i];
    if (y < 0 || static_cast<std::size_t>(y) >= cache.probs.cols())
      throw UsageError("backward_ce: label out of range");
    dlogits(i, y) -= 1.0;
  }
  scale_inplace(dlogits, 1.0 / static_cast<double>(n));
  return backward_from_dlogits(params, cache, dlogits);
}

Gradients apply_protection(const Gradients& grads, const Vector& protect,
                           const NetworkDims& dims) {
  if (protect.size() != dims.feature)
    throw ShapeError("apply_protection: protect length must equal feature dim");
  Gradients g = grads;
  // (1 - A) on the feature axis: rows of W_fl, entries of b_fl, columns of W_g.
  for (std::size_t j = 0; j < dims.feature; ++j) {
    const double keep = 1.0 - protect[j];
    double* wfl_row = g.W_fl.row_ptr(j);
    for (std::size_t k = 0; k < dims.hidden; ++k) wfl_row[k] *= keep;
    g.b_fl(0, j) *= keep;
    for (std::size_t c = 0; c < dims.classes; ++c) g.W_g(c, j) *= keep;
  }
  return g;
}

void apply_masked_update(NetworkParams& params, const Gradients& grads, SgdState& sgd,
                         const Vector* protect) {
  Gradients g = protect ? apply_protection(grads, *protect, params.dims) : grads;
  for (const auto& name : NetworkParams::param_names()) {
    auto it = params.trainable.find(name);
    if (it == params.trainable.end() || !it->second) continue;
    sgd_step(params.by_name(name), g.by_name(name), sgd, name);
  }
}

void refresh_bn_stats(NetworkParams& params, const Matrix& data) {
  if (data.rows() == 0) throw ConfigError("refresh_bn_stats: empty data");
  Matrix z1 = affine(data, params.W1, params.b1);
  Matrix a1 = relu(z1);
  Matrix z2 = affine(a1, params.W2, params.b2);
  Matrix a2 = relu(z2);
  const std::size_t n = data.rows(), h = params.dims.hidden;
  for (std::size_t j = 0; j < h; ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += a2(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const double dv = a2(i, j) - mean;
      var += dv * dv;
    }
    var /= static_cast<double>(n);
    params.bn_mean(0, j) = mean;
    params.bn_var(0, j) = var;
  }
}

}  // namespace gsfda
