#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <numeric>

#include "gsfda/finite_diff.hpp"
#include "gsfda/network.hpp"

using namespace gsfda;

namespace {

NetworkDims tiny_dims() {
  NetworkDims d;
  d.input_dim = 3;
  d.hidden = 5;
  d.feature = 4;
  d.classes = 3;
  return d;
}

// A small batch kept away from ReLU kinks and BN degeneracies so central
// differences are a valid oracle (the fixture is fixed, not sampled).
Matrix tiny_batch() {
  return Matrix(4, 3, {0.9, -1.2, 0.4,   //
                       -0.7, 0.8, 1.1,   //
                       0.3, 0.5, -0.9,   //
                       -1.1, -0.4, 0.6});
}

NetworkParams tiny_params(std::uint64_t seed = 11) {
  Rng rng(seed);
  return init_params(tiny_dims(), rng);
}

bool bit_equal(const Matrix& a, const Matrix& b) {
  return a.same_shape(b) &&
         std::memcmp(a.data().data(), b.data().data(),
                     a.size() * sizeof(double)) == 0;
}

double max_abs_diff(const Matrix& a, const Matrix& b) {
  REQUIRE(a.same_shape(b));
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i)
    worst = std::max(worst, std::abs(a.data()[i] - b.data()[i]));
  return worst;
}

double grad_err(const Matrix& analytic, const Matrix& fd) {
  double worst = 0.0;
  for (std::size_t i = 0; i < analytic.size(); ++i) {
    double denom = std::max(std::abs(fd.data()[i]), 1e-2);
    worst = std::max(worst, std::abs(analytic.data()[i] - fd.data()[i]) / denom);
  }
  return worst;
}

}  // namespace

// ---------------------------------------------------------------------------
// forward
// ---------------------------------------------------------------------------

TEST_CASE("all-ones mask reproduces the unmasked forward bit for bit") {
  NetworkParams p = tiny_params();
  Matrix x = tiny_batch();
  Vector ones(p.dims.feature, 1.0);
  ForwardCache plain = forward(p, x, nullptr, false, false);
  ForwardCache masked = forward(p, x, &ones, false, false);
  CHECK(bit_equal(plain.logits, masked.logits));
}

TEST_CASE("all-zeros mask collapses logits to the classifier bias") {
  NetworkParams p = tiny_params();
  Matrix x = tiny_batch();
  Vector zeros(p.dims.feature, 0.0);
  ForwardCache fc = forward(p, x, &zeros, false, false);
  for (std::size_t i = 0; i < fc.logits.rows(); ++i)
    for (std::size_t c = 0; c < fc.logits.cols(); ++c)
      CHECK(fc.logits(i, c) == doctest::Approx(p.b_g(0, c)).epsilon(1e-15));
}

TEST_CASE("softmax rows sum to one") {
  NetworkParams p = tiny_params();
  ForwardCache fc = forward(p, tiny_batch(), nullptr, true, false);
  for (std::size_t i = 0; i < fc.probs.rows(); ++i) {
    double s = 0.0;
    for (std::size_t c = 0; c < fc.probs.cols(); ++c) s += fc.probs(i, c);
    CHECK(std::abs(s - 1.0) < 1e-9);
  }
}

TEST_CASE("eval-mode forward is deterministic bit for bit") {
  NetworkParams p = tiny_params();
  Matrix x = tiny_batch();
  ForwardCache a = forward(p, x, nullptr, false, false);
  ForwardCache b = forward(p, x, nullptr, false, false);
  CHECK(bit_equal(a.logits, b.logits));
  CHECK(bit_equal(a.probs, b.probs));
}

TEST_CASE("forward rejects input dimension mismatch") {
  NetworkParams p = tiny_params();
  Matrix bad(2, 4, 0.5);
  CHECK_THROWS_AS(forward(p, bad, nullptr, false, false), ShapeError);
}

TEST_CASE("forward rejects a singleton batch in BN training mode") {
  NetworkParams p = tiny_params();
  Matrix one(1, 3, 0.5);
  CHECK_THROWS_AS(forward(p, one, nullptr, true, false), ConfigError);
  CHECK_NOTHROW(forward(p, one, nullptr, false, false));  // eval mode is fine
}

TEST_CASE("forward rejects a mask of the wrong length") {
  NetworkParams p = tiny_params();
  Vector bad(p.dims.feature + 1, 1.0);
  CHECK_THROWS_AS(forward(p, tiny_batch(), &bad, false, false), ShapeError);
}

TEST_CASE("training-mode forward keeps bn_var nonnegative and updates running stats") {
  NetworkParams p = tiny_params();
  Matrix mean_before = p.bn_mean, var_before = p.bn_var;
  forward(p, tiny_batch(), nullptr, true, true);
  for (double v : p.bn_var.data()) CHECK(v >= 0.0);
  CHECK_FALSE(bit_equal(mean_before, p.bn_mean));
  // update_running=false leaves the running statistics untouched
  NetworkParams q = tiny_params();
  Matrix qm = q.bn_mean;
  forward(q, tiny_batch(), nullptr, true, false);
  CHECK(bit_equal(qm, q.bn_mean));
}

TEST_CASE("masking commutes with a channel permutation") {
  NetworkParams p = tiny_params();
  Matrix x = tiny_batch();
  Vector mask{0.9, 0.1, 0.7, 0.3};
  ForwardCache base = forward(p, x, &mask, false, false);

  // permute feature channels: W_fl rows, b_fl entries, W_g columns, mask
  std::vector<std::size_t> perm{2, 0, 3, 1};
  NetworkParams pp = p;
  Vector pmask(mask.size());
  for (std::size_t j = 0; j < perm.size(); ++j) {
    pmask[j] = mask[perm[j]];
    pp.b_fl(0, j) = p.b_fl(0, perm[j]);
    for (std::size_t h = 0; h < p.dims.hidden; ++h)
      pp.W_fl(j, h) = p.W_fl(perm[j], h);
    for (std::size_t c = 0; c < p.dims.classes; ++c)
      pp.W_g(c, j) = p.W_g(c, perm[j]);
  }
  ForwardCache permuted = forward(pp, x, &pmask, false, false);
  for (std::size_t i = 0; i < x.rows(); ++i)
    for (std::size_t j = 0; j < perm.size(); ++j)
      CHECK(permuted.feature_masked(i, j) ==
            doctest::Approx(base.feature_masked(i, perm[j])).epsilon(1e-12));
  CHECK(max_abs_diff(permuted.logits, base.logits) < 1e-12);
}

// ---------------------------------------------------------------------------
// backward
// ---------------------------------------------------------------------------

TEST_CASE("gradient at the logits vanishes on a perfect prediction") {
  NetworkParams p = tiny_params();
  ForwardCache fc = forward(p, tiny_batch(), nullptr, false, false);
  // overwrite the cached probabilities with exact one-hots (test fixture)
  std::vector<int> labels{0, 2, 1, 0};
  fc.probs.fill(0.0);
  for (std::size_t i = 0; i < 4; ++i) fc.probs(i, labels[i]) = 1.0;
  Gradients g = backward_ce(p, fc, labels);
  // p - y == 0 at the logits makes every downstream gradient exactly zero
  for (const char* name : {"W1", "b1", "W2", "b2", "W_fl", "b_fl", "W_g", "b_g"})
    for (double v : g.by_name(name).data()) CHECK(v == 0.0);
}

TEST_CASE("cross-entropy gradients match finite differences on the toy net") {
  NetworkParams p = tiny_params();
  Matrix x = tiny_batch();
  std::vector<int> labels{0, 2, 1, 1};
  Vector mask{0.8, 0.3, 0.6, 0.9};

  ForwardCache fc = forward(p, x, &mask, true, false);
  Gradients analytic = backward_ce(p, fc, labels);

  for (const std::string& name : NetworkParams::param_names()) {
    if (name == "bn_mean" || name == "bn_var") continue;  // not trained
    NetworkParams probe = p;
    auto loss = [&](const Matrix& cand) {
      probe.by_name(name) = cand;
      ForwardCache c = forward(probe, x, &mask, true, false);
      return cross_entropy(c.probs, labels);
    };
    Matrix fd = finite_diff_grad(loss, p.by_name(name), 1e-5);
    CHECK_MESSAGE(grad_err(analytic.by_name(name), fd) < 1e-4, name);
  }
}

TEST_CASE("mask gradient matches finite differences") {
  NetworkParams p = tiny_params();
  Matrix x = tiny_batch();
  std::vector<int> labels{0, 2, 1, 1};
  Vector mask{0.8, 0.3, 0.6, 0.9};
  ForwardCache fc = forward(p, x, &mask, true, false);
  Gradients analytic = backward_ce(p, fc, labels);
  REQUIRE(analytic.dmask.size() == mask.size());

  auto loss = [&](const Matrix& cand) {
    Vector m = cand.data();
    ForwardCache c = forward(p, x, &m, true, false);
    return cross_entropy(c.probs, labels);
  };
  Matrix fd = finite_diff_grad(loss, Matrix::row(mask), 1e-5);
  Matrix got = Matrix::row(analytic.dmask);
  CHECK(grad_err(got, fd) < 1e-4);
}

TEST_CASE("duplicating every sample leaves the mean gradient unchanged") {
  NetworkParams p = tiny_params();
  Matrix x = tiny_batch();
  std::vector<int> labels{0, 2, 1, 1};
  Matrix x2(8, 3);
  std::vector<int> labels2;
  for (int rep = 0; rep < 2; ++rep)
    for (std::size_t i = 0; i < 4; ++i) {
      x2.set_row(rep * 4 + i, x.row_ptr(i));
      labels2.push_back(labels[i]);
    }
  // eval-mode BN so the batch statistics do not differ between the two sizes
  ForwardCache a = forward(p, x, nullptr, false, false);
  ForwardCache b = forward(p, x2, nullptr, false, false);
  Gradients ga = backward_ce(p, a, labels);
  Gradients gb = backward_ce(p, b, labels2);
  for (const char* name : {"W1", "W2", "W_fl", "W_g"})
    CHECK(max_abs_diff(ga.by_name(name), gb.by_name(name)) < 1e-12);
}

TEST_CASE("zero upstream gradient produces zero parameter gradients") {
  NetworkParams p = tiny_params();
  ForwardCache fc = forward(p, tiny_batch(), nullptr, true, false);
  Matrix dlogits(fc.logits.rows(), fc.logits.cols());
  Gradients g = backward_from_dlogits(p, fc, dlogits);
  for (const char* name : {"W1", "b1", "W2", "b2", "bn_gamma", "bn_beta", "W_fl", "b_fl", "W_g", "b_g"})
    for (double v : g.by_name(name).data()) CHECK(v == 0.0);
}

TEST_CASE("backward_ce equals backward_from_dlogits seeded with (p - y)/n") {
  NetworkParams p = tiny_params();
  ForwardCache fc = forward(p, tiny_batch(), nullptr, true, false);
  std::vector<int> labels{1, 0, 2, 1};
  Gradients direct = backward_ce(p, fc, labels);
  Matrix dlogits = fc.probs;
  for (std::size_t i = 0; i < 4; ++i) dlogits(i, labels[i]) -= 1.0;
  scale_inplace(dlogits, 0.25);
  Gradients composed = backward_from_dlogits(p, fc, dlogits);
  for (const std::string& name : NetworkParams::param_names()) {
    if (name == "bn_mean" || name == "bn_var") continue;
    CHECK(bit_equal(direct.by_name(name), composed.by_name(name)));
  }
}

TEST_CASE("backward_ce rejects a stale cache and bad labels") {
  NetworkParams p = tiny_params();
  ForwardCache fc = forward(p, tiny_batch(), nullptr, false, false);
  std::vector<int> short_labels{0, 1};
  CHECK_THROWS_AS(backward_ce(p, fc, short_labels), UsageError);
  std::vector<int> bad_labels{0, 1, 3, 0};  // class 3 does not exist
  CHECK_THROWS_AS(backward_ce(p, fc, bad_labels), UsageError);
}

// ---------------------------------------------------------------------------
// masked update
// ---------------------------------------------------------------------------

namespace {

Gradients nonzero_grads(const NetworkParams& p, std::uint64_t seed) {
  Rng rng(seed);
  ForwardCache fc;
  NetworkParams copy = p;
  Matrix x(4, p.dims.input_dim);
  for (double& v : x.data()) v = rng.uniform(-1, 1);
  fc = forward(copy, x, nullptr, true, false);
  Matrix dlogits(fc.logits.rows(), fc.logits.cols());
  for (double& v : dlogits.data()) v = rng.uniform(-1, 1);
  return backward_from_dlogits(copy, fc, dlogits);
}

}  // namespace

TEST_CASE("full protection leaves the feature layer and classifier frozen") {
  NetworkParams p = tiny_params();
  p.set_all_trainable();
  Gradients g = nonzero_grads(p, 21);
  Vector ones(p.dims.feature, 1.0);
  NetworkParams before = p;
  SgdState sgd;
  sgd.learning_rate = 0.1;
  apply_masked_update(p, g, sgd, &ones);
  CHECK(bit_equal(before.W_fl, p.W_fl));
  CHECK(bit_equal(before.b_fl, p.b_fl));
  CHECK(bit_equal(before.W_g, p.W_g));
  // unprotected parameters did move
  CHECK_FALSE(bit_equal(before.W1, p.W1));
  CHECK_FALSE(bit_equal(before.bn_gamma, p.bn_gamma));
}

TEST_CASE("zero protection equals an unmasked step bit for bit") {
  NetworkParams a = tiny_params();
  a.set_all_trainable();
  NetworkParams b = a;
  Gradients g = nonzero_grads(a, 22);
  Vector zeros(a.dims.feature, 0.0);
  SgdState sa, sb;
  sa.learning_rate = sb.learning_rate = 0.05;
  apply_masked_update(a, g, sa, &zeros);
  apply_masked_update(b, g, sb, nullptr);
  for (const std::string& name : NetworkParams::param_names())
    CHECK(bit_equal(a.by_name(name), b.by_name(name)));
}

TEST_CASE("update magnitude is bounded by lr times the scaled gradient") {
  NetworkParams p = tiny_params();
  p.set_all_trainable();
  Gradients g = nonzero_grads(p, 23);
  Vector protect{0.0, 0.25, 0.8, 1.0};
  NetworkParams before = p;
  SgdState sgd;
  sgd.learning_rate = 0.07;
  apply_masked_update(p, g, sgd, &protect);  // fresh velocity: v = scaled grad
  for (std::size_t j = 0; j < protect.size(); ++j) {
    double bound_scale = sgd.learning_rate * (1.0 - protect[j]) * (1.0 + 1e-12);
    for (std::size_t h = 0; h < p.dims.hidden; ++h)
      CHECK(std::abs(p.W_fl(j, h) - before.W_fl(j, h)) <=
            bound_scale * std::abs(g.W_fl(j, h)));
    CHECK(std::abs(p.b_fl(0, j) - before.b_fl(0, j)) <=
          bound_scale * std::abs(g.b_fl(0, j)));
    for (std::size_t c = 0; c < p.dims.classes; ++c)
      CHECK(std::abs(p.W_g(c, j) - before.W_g(c, j)) <=
            bound_scale * std::abs(g.W_g(c, j)));
  }
}

TEST_CASE("apply_protection scales exactly the advertised axes") {
  NetworkParams p = tiny_params();
  Gradients g = nonzero_grads(p, 24);
  Vector protect{0.5, 0.0, 1.0, 0.25};
  Gradients scaled = apply_protection(g, protect, p.dims);
  for (std::size_t j = 0; j < protect.size(); ++j) {
    double f = 1.0 - protect[j];
    for (std::size_t h = 0; h < p.dims.hidden; ++h)
      CHECK(scaled.W_fl(j, h) == doctest::Approx(f * g.W_fl(j, h)).epsilon(1e-15));
    CHECK(scaled.b_fl(0, j) == doctest::Approx(f * g.b_fl(0, j)).epsilon(1e-15));
    for (std::size_t c = 0; c < p.dims.classes; ++c)
      CHECK(scaled.W_g(c, j) == doctest::Approx(f * g.W_g(c, j)).epsilon(1e-15));
  }
  // everything else passes through untouched
  CHECK(bit_equal(scaled.W1, g.W1));
  CHECK(bit_equal(scaled.b2, g.b2));
  CHECK(bit_equal(scaled.bn_gamma, g.bn_gamma));
  CHECK(bit_equal(scaled.b_g, g.b_g));
}

TEST_CASE("protection vector of the wrong length is rejected") {
  NetworkParams p = tiny_params();
  p.set_all_trainable();
  Gradients g = nonzero_grads(p, 25);
  Vector bad(p.dims.feature + 2, 0.5);
  SgdState sgd;
  CHECK_THROWS_AS(apply_masked_update(p, g, sgd, &bad), ShapeError);
}

TEST_CASE("adaptation trainability covers exactly the advertised set") {
  NetworkParams p = tiny_params();
  p.set_adaptation_trainable();
  for (const std::string& name : NetworkParams::param_names()) {
    bool want = name == "bn_gamma" || name == "bn_beta" || name == "W_fl" ||
                name == "b_fl" || name == "W_g";
    CHECK_MESSAGE(p.trainable.at(name) == want, name);
  }
}

// ---------------------------------------------------------------------------
// BN statistics refresh
// ---------------------------------------------------------------------------

TEST_CASE("refresh_bn_stats is idempotent and touches no weights") {
  NetworkParams p = tiny_params();
  Matrix data(32, 3);
  Rng rng(31);
  for (double& v : data.data()) v = rng.uniform(-2, 2);

  NetworkParams before = p;
  refresh_bn_stats(p, data);
  CHECK(bit_equal(before.W1, p.W1));
  CHECK(bit_equal(before.W_fl, p.W_fl));
  CHECK(bit_equal(before.bn_gamma, p.bn_gamma));
  Matrix mean1 = p.bn_mean, var1 = p.bn_var;
  refresh_bn_stats(p, data);
  CHECK(bit_equal(mean1, p.bn_mean));
  CHECK(bit_equal(var1, p.bn_var));
}

TEST_CASE("after refresh the eval-mode BN output is centered at bn_beta") {
  NetworkParams p = tiny_params();
  Rng rng(32);
  for (double& v : p.bn_beta.data()) v = rng.uniform(-1, 1);
  Matrix data(64, 3);
  for (double& v : data.data()) v = rng.uniform(-2, 2);
  refresh_bn_stats(p, data);
  ForwardCache fc = forward(p, data, nullptr, false, false);
  for (std::size_t h = 0; h < p.dims.hidden; ++h) {
    double mean = 0.0;
    for (std::size_t i = 0; i < data.rows(); ++i) mean += fc.bn_out(i, h);
    mean /= static_cast<double>(data.rows());
    CHECK(std::abs(mean - p.bn_beta(0, h)) < 1e-6);
  }
}

TEST_CASE("refresh_bn_stats rejects empty data") {
  NetworkParams p = tiny_params();
  Matrix empty;
  CHECK_THROWS_AS(refresh_bn_stats(p, empty), ConfigError);
}
