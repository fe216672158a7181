#include "gsfda/gradcheck.hpp"

#include <cmath>

#include "gsfda/attention.hpp"
#include "gsfda/finite_diff.hpp"
#include "gsfda/lsc.hpp"
#include "gsfda/network.hpp"
#include "gsfda/rng.hpp"

namespace gsfda {

namespace {

constexpr double kEps = 1e-5;

double err_of(double analytic, double fd) {
  return std::abs(analytic - fd) / std::max(std::abs(fd), 1e-2);
}

void compare(const Matrix& analytic, const Matrix& fd, double& max_err) {
  for (std::size_t i = 0; i < analytic.rows(); ++i)
    for (std::size_t c = 0; c < analytic.cols(); ++c)
      max_err = std::max(max_err, err_of(analytic(i, c), fd(i, c)));
}

// Small random problem instance shared by the network-path suites.
struct Instance {
  NetworkParams params;
  Matrix x;
  std::vector<int> labels;
  Vector mask;
};

// Central differences are only a valid oracle at smooth, well-conditioned
// points: a pre-activation within eps of the ReLU kink, or a BN channel
// whose batch variance is near zero (third derivative ~ var^-3/2), makes the
// difference quotient meaningless. Instances are redrawn until clear of both.
bool well_conditioned(NetworkParams& params, const Instance& inst) {
  ForwardCache cache = forward(params, inst.x, &inst.mask, true, false);
  for (double z : cache.z1.data())
    if (std::abs(z) < 5e-4) return false;
  for (double z : cache.z2.data())
    if (std::abs(z) < 5e-4) return false;
  std::size_t n = cache.a2.rows();
  for (std::size_t j = 0; j < cache.a2.cols(); ++j) {
    double mean = 0.0;
    for (std::size_t i = 0; i < n; ++i) mean += cache.a2(i, j);
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      double d = cache.a2(i, j) - mean;
      var += d * d;
    }
    if (var / static_cast<double>(n) < 1e-2) return false;
  }
  return true;
}

Instance make_instance(Rng& rng) {
  for (int attempt = 0; attempt < 200; ++attempt) {
    Instance inst;
    NetworkDims dims{3, 5, 4, 3};
    inst.params = init_params(dims, rng);
    inst.params.set_all_trainable();
    std::size_t n = 4 + rng.index(3);
    inst.x = Matrix(n, dims.input_dim);
    for (double& v : inst.x.data()) v = rng.uniform(-1.0, 1.0);
    inst.labels.resize(n);
    for (auto& y : inst.labels)
      y = static_cast<int>(rng.index(dims.classes));
    inst.mask.resize(dims.feature);
    // soft mask so the mask path carries gradient
    for (double& v : inst.mask) v = rng.uniform(0.1, 0.9);
    if (well_conditioned(inst.params, inst)) return inst;
  }
  throw NumericError("gradcheck: no well-conditioned instance found");
}

// Training-mode forward (batch statistics, running stats untouched) so the
// finite-difference loss is a pure function of the parameters.
double ce_at(const Instance& inst, const std::string& pname, const Matrix& pval) {
  NetworkParams p = inst.params;
  p.by_name(pname) = pval;
  ForwardCache cache = forward(p, inst.x, &inst.mask, true, false);
  return cross_entropy(cache.probs, inst.labels);
}

GradCheckResult check_ce(Rng& rng, int trials) {
  GradCheckResult res{"ce-backward", 0.0, trials, false};
  for (int t = 0; t < trials; ++t) {
    Instance inst = make_instance(rng);
    ForwardCache cache = forward(inst.params, inst.x, &inst.mask, true, false);
    Gradients g = backward_ce(inst.params, cache, inst.labels);
    for (const auto& name : NetworkParams::param_names()) {
      Matrix fd = finite_diff_grad(
          [&](const Matrix& p) { return ce_at(inst, name, p); },
          inst.params.by_name(name), kEps);
      compare(g.by_name(name), fd, res.max_err);
    }
    // the mask itself is a forward input; dmask must match too
    Matrix fd_mask = finite_diff_grad(
        [&](const Matrix& mv) {
          Instance local = inst;
          local.mask = mv.row_vec(0);
          NetworkParams p = local.params;
          ForwardCache c = forward(p, local.x, &local.mask, true, false);
          return cross_entropy(c.probs, local.labels);
        },
        Matrix::row(inst.mask), kEps);
    compare(Matrix::row(g.dmask), fd_mask, res.max_err);
  }
  res.pass = res.max_err < kGradCheckTol;
  return res;
}

// Random banks + neighbor lists for the clustering loss.
struct LscInstance {
  Banks banks;
  std::vector<std::vector<int>> neighbors;
  LscConfig cfg;
};

LscInstance make_lsc_instance(Rng& rng, std::size_t n, std::size_t classes,
                              std::size_t feat_dim) {
  LscInstance li;
  std::size_t n_bank = 8;
  Matrix raw(n_bank, classes);
  for (double& v : raw.data()) v = rng.uniform(-2.0, 2.0);
  li.banks.scores = Matrix(n_bank, classes);
  for (std::size_t i = 0; i < n_bank; ++i) {
    double sum = 0.0;
    for (std::size_t c = 0; c < classes; ++c) {
      li.banks.scores(i, c) = std::exp(raw(i, c));
      sum += li.banks.scores(i, c);
    }
    for (std::size_t c = 0; c < classes; ++c) li.banks.scores(i, c) /= sum;
  }
  li.banks.features = Matrix(n_bank, feat_dim);
  for (double& v : li.banks.features.data()) v = rng.uniform(-1.0, 1.0);
  li.neighbors.resize(n);
  for (auto& lst : li.neighbors) {
    std::size_t cnt = 1 + rng.index(3);
    for (std::size_t j = 0; j < cnt; ++j)
      lst.push_back(static_cast<int>(rng.index(n_bank)));
  }
  li.cfg.k = 3;
  li.cfg.balance_weight = rng.uniform(0.5, 1.5);
  return li;
}

double lsc_at_logits(const Matrix& logits, const LscInstance& li) {
  ForwardCache cache;
  cache.probs = Matrix(logits.rows(), logits.cols());
  for (std::size_t i = 0; i < logits.rows(); ++i) {
    double mx = logits(i, 0);
    for (std::size_t c = 1; c < logits.cols(); ++c)
      mx = std::max(mx, logits(i, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < logits.cols(); ++c) {
      cache.probs(i, c) = std::exp(logits(i, c) - mx);
      sum += cache.probs(i, c);
    }
    for (std::size_t c = 0; c < logits.cols(); ++c) cache.probs(i, c) /= sum;
  }
  return lsc_loss_and_dlogits(cache, li.banks, li.neighbors, li.cfg).loss;
}

GradCheckResult check_lsc_dlogits(Rng& rng, int trials) {
  GradCheckResult res{"lsc-dlogits", 0.0, trials, false};
  for (int t = 0; t < trials; ++t) {
    std::size_t n = 4 + rng.index(3), classes = 3;
    LscInstance li = make_lsc_instance(rng, n, classes, 4);
    Matrix logits(n, classes);
    for (double& v : logits.data()) v = rng.uniform(-2.0, 2.0);

    ForwardCache cache;
    cache.probs = Matrix(n, classes);
    for (std::size_t i = 0; i < n; ++i) {
      double mx = logits(i, 0);
      for (std::size_t c = 1; c < classes; ++c) mx = std::max(mx, logits(i, c));
      double sum = 0.0;
      for (std::size_t c = 0; c < classes; ++c) {
        cache.probs(i, c) = std::exp(logits(i, c) - mx);
        sum += cache.probs(i, c);
      }
      for (std::size_t c = 0; c < classes; ++c) cache.probs(i, c) /= sum;
    }
    LscLoss ll = lsc_loss_and_dlogits(cache, li.banks, li.neighbors, li.cfg);
    Matrix fd = finite_diff_grad(
        [&](const Matrix& lg) { return lsc_at_logits(lg, li); }, logits, kEps);
    compare(ll.dlogits, fd, res.max_err);
  }
  res.pass = res.max_err < kGradCheckTol;
  return res;
}

GradCheckResult check_lsc_chain(Rng& rng, int trials) {
  GradCheckResult res{"lsc-param-chain", 0.0, trials, false};
  for (int t = 0; t < trials; ++t) {
    Instance inst = make_instance(rng);
    std::size_t n = inst.x.rows();
    LscInstance li = make_lsc_instance(rng, n, inst.params.dims.classes,
                                       inst.params.dims.feature);
    auto loss_at = [&](const std::string& pname, const Matrix& pval) {
      NetworkParams p = inst.params;
      p.by_name(pname) = pval;
      ForwardCache cache = forward(p, inst.x, &inst.mask, true, false);
      return lsc_loss_and_dlogits(cache, li.banks, li.neighbors, li.cfg).loss;
    };
    ForwardCache cache = forward(inst.params, inst.x, &inst.mask, true, false);
    LscLoss ll = lsc_loss_and_dlogits(cache, li.banks, li.neighbors, li.cfg);
    Gradients g = backward_from_dlogits(inst.params, cache, ll.dlogits);
    for (const auto& name : NetworkParams::param_names()) {
      Matrix fd = finite_diff_grad(
          [&](const Matrix& p) { return loss_at(name, p); },
          inst.params.by_name(name), kEps);
      compare(g.by_name(name), fd, res.max_err);
    }
  }
  res.pass = res.max_err < kGradCheckTol;
  return res;
}

GradCheckResult check_sparsity(Rng& rng, int trials) {
  GradCheckResult res{"sda-sparsity", 0.0, trials, false};
  for (int t = 0; t < trials; ++t) {
    std::size_t d = 6;
    DomainAttention att;
    att.domain_id = 1;
    att.e.resize(d);
    for (double& v : att.e) v = rng.uniform(-0.05, 0.05);
    std::vector<Vector> priors(rng.index(3));
    for (auto& p : priors) {
      p.resize(d);
      for (double& v : p) v = rng.uniform(0.0, 1.0);
    }
    SparsityPenalty sp = sparsity_penalty(att, priors);
    Matrix fd = finite_diff_grad(
        [&](const Matrix& ev) {
          DomainAttention a = att;
          a.e = ev.row_vec(0);
          return sparsity_penalty(a, priors).loss;
        },
        Matrix::row(att.e), kEps);
    compare(Matrix::row(sp.grad_e), fd, res.max_err);
  }
  res.pass = res.max_err < kGradCheckTol;
  return res;
}

// The compensated chain grad_mask -> grad_e must equal the gradient of the
// same objective with a PLAIN sigmoid in the embedding's place: that is the
// whole point of the compensation.
GradCheckResult check_compensation(Rng& rng, int trials) {
  GradCheckResult res{"sda-compensation", 0.0, trials, false};
  for (int t = 0; t < trials; ++t) {
    std::size_t d = 6;
    DomainAttention att;
    att.e.resize(d);
    Vector w(d);
    for (double& v : att.e) v = rng.uniform(-0.15, 0.15);
    for (double& v : w) v = rng.uniform(-2.0, 2.0);
    Vector analytic =
        compensate_embedding_grad(att, mask_grad_to_embedding(att, w));
    Matrix fd = finite_diff_grad(
        [&](const Matrix& ev) {
          double s = 0.0;
          for (std::size_t j = 0; j < d; ++j)
            s += w[j] / (1.0 + std::exp(-ev(0, j)));
          return s;
        },
        Matrix::row(att.e), kEps);
    compare(Matrix::row(analytic), fd, res.max_err);
  }
  res.pass = res.max_err < kGradCheckTol;
  return res;
}

// The protected update must step with exactly (1-A) times the true loss
// gradient on the feature axis of W_fl, b_fl and W_g.
GradCheckResult check_masked_scaling(Rng& rng, int trials) {
  GradCheckResult res{"masked-update-scaling", 0.0, trials, false};
  for (int t = 0; t < trials; ++t) {
    Instance inst = make_instance(rng);
    const NetworkDims& dims = inst.params.dims;
    Vector protect(dims.feature);
    for (double& v : protect) v = rng.uniform(0.0, 1.0);

    ForwardCache cache = forward(inst.params, inst.x, &inst.mask, true, false);
    Gradients g = backward_ce(inst.params, cache, inst.labels);
    Gradients scaled = apply_protection(g, protect, dims);

    for (const std::string& name : {std::string("W_fl"), std::string("b_fl"),
                                    std::string("W_g")}) {
      Matrix fd = finite_diff_grad(
          [&](const Matrix& p) { return ce_at(inst, name, p); },
          inst.params.by_name(name), kEps);
      // scale the oracle the same way before comparing
      for (std::size_t j = 0; j < dims.feature; ++j) {
        double keep = 1.0 - protect[j];
        if (name == "W_fl")
          for (std::size_t c = 0; c < fd.cols(); ++c) fd(j, c) *= keep;
        else if (name == "b_fl")
          fd(0, j) *= keep;
        else
          for (std::size_t r = 0; r < fd.rows(); ++r) fd(r, j) *= keep;
      }
      compare(scaled.by_name(name), fd, res.max_err);
    }
  }
  res.pass = res.max_err < kGradCheckTol;
  return res;
}

}  // namespace

std::vector<GradCheckResult> run_gradchecks(std::uint64_t seed, int trials) {
  std::vector<GradCheckResult> out;
  {
    Rng rng(Rng::mix(seed, 1));
    out.push_back(check_ce(rng, trials));
  }
  {
    Rng rng(Rng::mix(seed, 2));
    out.push_back(check_lsc_dlogits(rng, trials));
  }
  {
    Rng rng(Rng::mix(seed, 3));
    out.push_back(check_lsc_chain(rng, trials));
  }
  {
    Rng rng(Rng::mix(seed, 4));
    out.push_back(check_sparsity(rng, trials));
  }
  {
    Rng rng(Rng::mix(seed, 5));
    out.push_back(check_compensation(rng, trials));
  }
  {
    Rng rng(Rng::mix(seed, 6));
    out.push_back(check_masked_scaling(rng, trials));
  }
  return out;
}

}  // namespace gsfda
