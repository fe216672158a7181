#pragma once

#include <map>
#include <string>
#include <vector>

#include "gsfda/matrix.hpp"
#include "gsfda/rng.hpp"
#include "gsfda/sgd.hpp"

namespace gsfda {

struct NetworkDims {
  std::size_t input_dim = 2;
  std::size_t hidden = 64;
  std::size_t feature = 32;
  std::size_t classes = 2;
};

// The split network p(x) = g(f(x)): feature extractor
//   x -> affine(W1) -> relu -> affine(W2) -> relu -> batchnorm -> affine(W_fl)
// producing f(x) in R^d, and a single-affine classifier g. Weights use the
// (out x in) convention, so the feature axis of W_fl is its row axis and the
// feature axis of W_g is its column axis.
struct NetworkParams {
  NetworkDims dims;
  Matrix W1, b1;                             // hidden x input, 1 x hidden
  Matrix W2, b2;                             // hidden x hidden, 1 x hidden
  Matrix bn_gamma, bn_beta;                  // 1 x hidden
  Matrix bn_mean, bn_var;                    // running statistics, 1 x hidden
  Matrix W_fl, b_fl;                         // feature x hidden, 1 x feature
  Matrix W_g, b_g;                           // classes x feature, 1 x classes
  std::map<std::string, bool> trainable;

  static const std::vector<std::string>& param_names();
  Matrix& by_name(const std::string& name);
  const Matrix& by_name(const std::string& name) const;

  // Pretraining trains everything.
  void set_all_trainable();
  // Adaptation touches only the BN affine, the last extractor layer and the
  // classifier weight; the classifier bias stays frozen.
  void set_adaptation_trainable();
};

constexpr double kBnEps = 1e-5;
constexpr double kBnMomentum = 0.1;

NetworkParams init_params(const NetworkDims& dims, Rng& rng);

struct ForwardCache {
  Matrix x;                     // n x input
  Matrix z1, a1, z2, a2;        // n x hidden
  Matrix bn_xhat, bn_out;       // n x hidden
  Vector bn_mean_used, bn_inv_std;
  Matrix feature;               // n x feature, f(x)
  Matrix feature_masked;        // n x feature, f(x) * mask
  Matrix logits, probs;         // n x classes
  Vector mask;                  // empty when no mask was applied
  bool training = false;
  std::size_t batch() const { return x.rows(); }
};

// Forward pass. In training mode BN uses batch statistics and (when
// update_running is set) folds them into the running statistics with momentum
// kBnMomentum; eval mode uses the stored running statistics. mask, when
// given, multiplies the feature elementwise before the classifier.
ForwardCache forward(NetworkParams& params, const Matrix& x, const Vector* mask,
                     bool training, bool update_running = true);
// Eval-mode forward on frozen parameters.
ForwardCache forward_eval(const NetworkParams& params, const Matrix& x,
                          const Vector* mask);

struct Gradients {
  Matrix W1, b1, W2, b2;
  Matrix bn_gamma, bn_beta;
  Matrix W_fl, b_fl, W_g, b_g;
  Vector dmask;  // gradient at the attention mask; empty when no mask was applied

  Matrix& by_name(const std::string& name);
  const Matrix& by_name(const std::string& name) const;
  Gradients& operator+=(const Gradients& other);
};

// Mean cross-entropy of the cached softmax against integer labels.
double cross_entropy(const Matrix& probs, const std::vector<int>& labels);

// Exact analytic gradients of mean cross-entropy w.r.t. every parameter.
// The mask path is respected; the mask's own gradient lands in dmask.
Gradients backward_ce(const NetworkParams& params, const ForwardCache& cache,
                      const std::vector<int>& labels);

// Same backward pass seeded with an arbitrary upstream gradient at the logits.
Gradients backward_from_dlogits(const NetworkParams& params, const ForwardCache& cache,
                                const Matrix& dlogits);

// The gradient pre-scaling used by masked updates: rows of W_fl, entries of
// b_fl and columns of W_g are multiplied by (1 - protect) on the feature
// axis; all other gradients pass through untouched.
Gradients apply_protection(const Gradients& grads, const Vector& protect,
                           const NetworkDims& dims);

// One SGD step over all trainable parameters. When protect is given, the
// gradients are first run through apply_protection, so channels with
// protect = 1 receive no update at all.
void apply_masked_update(NetworkParams& params, const Gradients& grads, SgdState& sgd,
                         const Vector* protect);

// Recomputes bn_mean / bn_var from the given data in a single pass, touching
// no weights.
void refresh_bn_stats(NetworkParams& params, const Matrix& data);

}  // namespace gsfda
