#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "gsfda/attention.hpp"
#include "gsfda/dataset.hpp"
#include "gsfda/lsc.hpp"
#include "gsfda/network.hpp"
#include "gsfda/sgd.hpp"

namespace gsfda {

// ---------------------------------------------------------------------------
// configuration and run state
// ---------------------------------------------------------------------------

struct RunConfig {
  NetworkDims dims;
  int epochs_source = 200;
  int epochs_target = 100;
  int epochs_dc = 200;              // domain classifier
  std::size_t batch_size = 64;
  double lr_source = 0.01;
  double lr_target = 0.01;
  double lr_dc = 0.05;
  double momentum = 0.9;
  int k = 3;                        // LSC neighbor count
  double balance_weight = 1.0;
  double lambda_sparsity = 0.1;
  std::size_t n_targets = 1;
  std::size_t exemplars_per_domain = 64;
  std::uint64_t seed = 0;

  void validate() const;  // ConfigError on nonsense values
};

// A trained model: network parameters, one attention per domain, and the
// source BN statistics frozen at the end of pretraining. The snapshot exists
// because adaptation lets the running statistics follow the target; the
// domain classifier always looks at features under the source statistics.
struct ModelState {
  NetworkParams params;
  MaskSet masks;
  Matrix src_bn_mean, src_bn_var;  // 1 x hidden
};

// ---------------------------------------------------------------------------
// metrics
// ---------------------------------------------------------------------------

// One training epoch. Accuracy fields are percentages in [0,100], or -1 when
// that quantity was not evaluated for this epoch.
struct EpochRecord {
  int epoch = 0;
  double loss = 0.0;       // mean training loss (CE or LSC, by phase)
  double acc_source = -1.0;
  double acc_target = -1.0;
  double h = -1.0;
  double acc_n = -1.0;     // neighborhood purity diagnostics
  double acc_np = -1.0;
};

struct RunMetrics {
  std::vector<EpochRecord> epochs;
  double acc_source = -1.0;
  double acc_target = -1.0;
  double h = -1.0;
  double acc_n = -1.0;
  double acc_np = -1.0;
  // Continual runs: rows = adaptation step (0 = before any adaptation),
  // cols = domain (0 = source). Empty otherwise.
  Matrix accuracy_matrix;
};

// ---------------------------------------------------------------------------
// training phases
// ---------------------------------------------------------------------------

struct PretrainResult {
  ModelState model;
  std::vector<EpochRecord> epochs;
};

// Source pretraining: minimizes the sum of masked cross-entropies over all
// domain attentions plus the sparsity penalties on the target masks.
// Embedding gradients go through the HAT-style compensation. Returns frozen
// masks and the source BN snapshot. initial_masks, when given, replaces the
// random attention init (test hook for symmetry experiments).
PretrainResult pretrain_source(const RunConfig& cfg, const Dataset& source_train,
                               const MaskSet* initial_masks = nullptr);

struct AdaptResult {
  std::vector<EpochRecord> epochs;
  Banks banks;  // final bank state, for purity diagnostics
};

// Source-free adaptation of target `target_index` (1-based): per batch,
// training-mode forward under A_t, bank row replacement, masked k-NN against
// the updated bank, the neighborhood-consistency loss, and a protected SGD
// step. Only {bn_gamma, bn_beta, W_fl, b_fl, W_g} move. `protect` is A_s for
// a single target or the merged mask for continual runs. When eval_sets is
// given (one labeled set per domain, source first), every epoch is evaluated
// domain-aware.
AdaptResult adapt_target(const RunConfig& cfg, ModelState& model,
                         std::size_t target_index, const Dataset& target_train,
                         const Vector& protect,
                         const std::vector<Dataset>* eval_sets = nullptr);

struct ContinualResult {
  Matrix accuracy_matrix;  // (n_targets+1) x (n_targets+1)
  std::vector<std::vector<EpochRecord>> per_target_epochs;
};

// Sequential adaptation over all targets in order; before each target the
// protection mask is rebuilt from every other domain's attention. Records
// the per-step accuracy matrix: row 0 is the pretrained model, row j the
// state after adapting target j; columns are domains, source first.
ContinualResult adapt_continual(const RunConfig& cfg, ModelState& model,
                                const std::vector<Dataset>& target_trains,
                                const std::vector<Dataset>& test_sets);

// ---------------------------------------------------------------------------
// domain classifier and evaluation
// ---------------------------------------------------------------------------

// Two affine layers with ReLU over the unmasked feature f(x); predicts the
// domain id so evaluation can pick a mask without being told the domain.
struct DomainClassifier {
  std::size_t in_dim = 0;
  std::size_t hidden = 32;
  std::size_t n_domains = 0;
  Matrix W1, b1, W2, b2;

  Matrix predict(const Matrix& features) const;  // n x n_domains softmax
};

// Trains the classifier on exemplars_per_domain samples drawn from each
// domain (seed-deterministic, without replacement). Features are computed
// eval-mode under the source BN snapshot, unmasked.
DomainClassifier train_domain_classifier(const RunConfig& cfg,
                                         const ModelState& model,
                                         const std::vector<Dataset>& domains);

enum class EvalMode { aware, agnostic };

struct EvalResult {
  std::vector<double> per_domain;  // accuracy % per domain, source first
  double acc_source = 0.0;
  double acc_target = 0.0;         // mean over targets
  double h = 0.0;
};

// Deterministic, side-effect-free evaluation. aware: each dataset is scored
// under its own domain's mask. agnostic: the mask is chosen per sample by
// the domain classifier's argmax (dc required). refresh_bn re-estimates the
// BN statistics on each dataset (on a copy) before scoring it.
EvalResult evaluate(const ModelState& model,
                    const std::vector<Dataset>& test_sets, EvalMode mode,
                    const DomainClassifier* dc = nullptr,
                    bool refresh_bn = false);

// Fraction (%) of samples whose k nearest bank neighbors all share the
// sample's predicted label (Acc_n), and the fraction (%) of those whose
// shared label is the true one (Acc_np).
std::pair<double, double> neighbor_purity(const Banks& banks,
                                          const std::vector<int>& predicted,
                                          const std::vector<int>& truth,
                                          int k = 3);

}  // namespace gsfda
