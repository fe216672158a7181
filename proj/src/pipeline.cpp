#include "gsfda/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "gsfda/errors.hpp"
#include "gsfda/metrics.hpp"
#include "gsfda/rng.hpp"

namespace gsfda {

namespace {

// Seed stream tags, so pretraining / adaptation / classifier sampling draw
// from independent deterministic streams. Adaptation offsets by the target
// index, which is what makes a one-target continual run bit-identical to a
// direct adapt_target call.
constexpr std::uint64_t kPretrainStream = 101;
constexpr std::uint64_t kAdaptStream = 200;  // + target_index
constexpr std::uint64_t kDcStream = 301;

Matrix take_rows(const Matrix& m, const std::vector<int>& ids) {
  Matrix out(ids.size(), m.cols());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out.set_row(i, m.row_ptr(static_cast<std::size_t>(ids[i])));
  return out;
}

std::vector<int> take_labels(const std::vector<int>& labels,
                             const std::vector<int>& ids) {
  std::vector<int> out(ids.size());
  for (std::size_t i = 0; i < ids.size(); ++i)
    out[i] = labels[static_cast<std::size_t>(ids[i])];
  return out;
}

// One embedding SGD step; embeddings live outside NetworkParams so they get
// their own velocity slots in the same optimizer state.
void step_embedding(DomainAttention& att, const Vector& grad, SgdState& sgd,
                    const std::string& name) {
  Matrix e = Matrix::row(att.e);
  sgd_step(e, Matrix::row(grad), sgd, name);
  att.e = e.row_vec(0);
}

Matrix glorot(std::size_t out_dim, std::size_t in_dim, Rng& rng) {
  double a = std::sqrt(6.0 / static_cast<double>(in_dim + out_dim));
  Matrix w(out_dim, in_dim);
  for (double& v : w.data()) v = rng.uniform(-a, a);
  return w;
}

// x (n x in) * W^T (in x out) + b, the same convention as the main network.
Matrix affine_fwd(const Matrix& x, const Matrix& w, const Matrix& b) {
  Matrix out = matmul_nt(x, w);
  for (std::size_t i = 0; i < out.rows(); ++i)
    for (std::size_t c = 0; c < out.cols(); ++c) out(i, c) += b(0, c);
  return out;
}

Matrix softmax_rows(const Matrix& z) {
  Matrix p(z.rows(), z.cols());
  for (std::size_t i = 0; i < z.rows(); ++i) {
    double mx = z(i, 0);
    for (std::size_t c = 1; c < z.cols(); ++c) mx = std::max(mx, z(i, c));
    double sum = 0.0;
    for (std::size_t c = 0; c < z.cols(); ++c) {
      p(i, c) = std::exp(z(i, c) - mx);
      sum += p(i, c);
    }
    for (std::size_t c = 0; c < z.cols(); ++c) p(i, c) /= sum;
  }
  return p;
}

}  // namespace

void RunConfig::validate() const {
  if (dims.input_dim < 1 || dims.hidden < 1 || dims.feature < 1 ||
      dims.classes < 2)
    throw ConfigError("config: network dims must be positive (classes >= 2)");
  if (epochs_source < 0 || epochs_target < 0 || epochs_dc < 0)
    throw ConfigError("config: epoch counts cannot be negative");
  if (batch_size < 2)
    throw ConfigError("config: batch_size must be at least 2 (BN)");
  if (lr_source <= 0 || lr_target <= 0 || lr_dc <= 0)
    throw ConfigError("config: learning rates must be positive");
  if (momentum < 0 || momentum >= 1)
    throw ConfigError("config: momentum must be in [0, 1)");
  if (k < 1) throw ConfigError("config: k must be at least 1");
  if (balance_weight < 0 || lambda_sparsity < 0)
    throw ConfigError("config: loss weights cannot be negative");
  if (n_targets < 1) throw ConfigError("config: need at least one target");
  if (exemplars_per_domain < 1)
    throw ConfigError("config: need at least one exemplar per domain");
}

// ---------------------------------------------------------------------------
// source pretraining
// ---------------------------------------------------------------------------

PretrainResult pretrain_source(const RunConfig& cfg, const Dataset& source_train,
                               const MaskSet* initial_masks) {
  cfg.validate();
  if (!source_train.labeled())
    throw ConfigError("pretrain: source data must be labeled");
  if (source_train.n() < 2)
    throw ConfigError("pretrain: need at least 2 source samples");
  if (source_train.dim() != cfg.dims.input_dim)
    throw ShapeError("pretrain: data dim does not match input_dim");

  Rng rng(Rng::mix(cfg.seed, kPretrainStream));
  PretrainResult out;
  out.model.params = init_params(cfg.dims, rng);
  out.model.params.set_all_trainable();

  std::size_t n_domains = cfg.n_targets + 1;
  if (initial_masks) {
    if (initial_masks->n_domains() != n_domains)
      throw ConfigError("pretrain: initial mask count != n_targets + 1");
    for (const auto& att : initial_masks->attentions)
      if (att.e.size() != cfg.dims.feature)
        throw ShapeError("pretrain: initial mask embedding length != d");
    out.model.masks = *initial_masks;
    for (auto& att : out.model.masks.attentions) att.frozen = false;
  } else {
    for (std::size_t m = 0; m < n_domains; ++m)
      out.model.masks.attentions.push_back(
          init_attention(static_cast<int>(m), cfg.dims.feature, rng));
  }

  SgdState sgd;
  sgd.learning_rate = cfg.lr_source;
  sgd.momentum = cfg.momentum;

  std::vector<int> ids(source_train.n());
  std::iota(ids.begin(), ids.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs_source; ++epoch) {
    rng.shuffle(ids);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < ids.size(); start += cfg.batch_size) {
      std::size_t nb = std::min(cfg.batch_size, ids.size() - start);
      if (nb < 2) continue;  // BN needs 2+; a stray trailing sample is skipped
      std::vector<int> batch(ids.begin() + start, ids.begin() + start + nb);
      Matrix xb = take_rows(source_train.features, batch);
      std::vector<int> yb = take_labels(source_train.labels, batch);

      // mask values fixed for the whole batch, so prior-mask conditioning
      // does not depend on the in-batch update order
      std::vector<Vector> mvals(n_domains);
      for (std::size_t m = 0; m < n_domains; ++m)
        mvals[m] = out.model.masks.attentions[m].mask();

      double batch_loss = 0.0;
      Gradients agg;
      bool first = true;
      std::vector<Vector> egrads(n_domains);
      for (std::size_t m = 0; m < n_domains; ++m) {
        DomainAttention& att = out.model.masks.attentions[m];
        // only the source pass (m == 0) feeds the running BN statistics
        ForwardCache cache =
            forward(out.model.params, xb, &mvals[m], true, m == 0);
        batch_loss += cross_entropy(cache.probs, yb);
        Gradients g = backward_ce(out.model.params, cache, yb);
        Vector eg = mask_grad_to_embedding(att, g.dmask);
        if (m > 0) {
          // targets pay for claiming channels no earlier mask uses
          std::vector<Vector> priors(mvals.begin(),
                                     mvals.begin() + static_cast<long>(m));
          SparsityPenalty sp = sparsity_penalty(att, priors);
          batch_loss += cfg.lambda_sparsity * sp.loss;
          for (std::size_t j = 0; j < eg.size(); ++j)
            eg[j] += cfg.lambda_sparsity * sp.grad_e[j];
        }
        egrads[m] = compensate_embedding_grad(att, eg);
        if (first) {
          agg = std::move(g);
          first = false;
        } else {
          agg += g;
        }
      }
      if (!std::isfinite(batch_loss))
        throw NumericError("pretraining diverged (non-finite loss)");

      apply_masked_update(out.model.params, agg, sgd, nullptr);
      for (std::size_t m = 0; m < n_domains; ++m)
        step_embedding(out.model.masks.attentions[m], egrads[m], sgd,
                       "att" + std::to_string(m) + ".e");

      loss_sum += batch_loss * static_cast<double>(nb);
      seen += nb;
    }
    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    out.epochs.push_back(rec);
  }

  for (auto& att : out.model.masks.attentions) att.frozen = true;
  out.model.src_bn_mean = out.model.params.bn_mean;
  out.model.src_bn_var = out.model.params.bn_var;
  return out;
}

// ---------------------------------------------------------------------------
// target adaptation
// ---------------------------------------------------------------------------

AdaptResult adapt_target(const RunConfig& cfg, ModelState& model,
                         std::size_t target_index, const Dataset& target_train,
                         const Vector& protect,
                         const std::vector<Dataset>* eval_sets) {
  cfg.validate();
  if (target_index < 1 || target_index > model.masks.n_targets())
    throw UsageError("adapt: target index out of range");
  if (target_train.n() == 0) throw ConfigError("adapt: empty target set");
  if (target_train.dim() != model.params.dims.input_dim)
    throw ShapeError("adapt: data dim does not match input_dim");
  if (protect.size() != model.params.dims.feature)
    throw ShapeError("adapt: protect length must equal feature dim");
  if (static_cast<std::size_t>(cfg.k) >= target_train.n())
    throw ConfigError("adapt: k must be smaller than the target set");

  model.params.set_adaptation_trainable();
  const DomainAttention& att_t = model.masks.attentions[target_index];
  Vector mask_t = att_t.mask();

  AdaptResult out;
  out.banks = init_banks(model.params, target_train, att_t);

  SgdState sgd;
  sgd.learning_rate = cfg.lr_target;
  sgd.momentum = cfg.momentum;
  Rng rng(Rng::mix(cfg.seed, kAdaptStream + target_index));
  LscConfig lsc_cfg{cfg.k, cfg.balance_weight};

  std::vector<int> ids(target_train.n());
  std::iota(ids.begin(), ids.end(), 0);

  for (int epoch = 0; epoch < cfg.epochs_target; ++epoch) {
    rng.shuffle(ids);
    double loss_sum = 0.0;
    std::size_t seen = 0;
    for (std::size_t start = 0; start < ids.size(); start += cfg.batch_size) {
      std::size_t nb = std::min(cfg.batch_size, ids.size() - start);
      if (nb < 2) continue;
      std::vector<int> batch(ids.begin() + start, ids.begin() + start + nb);
      Matrix xb = take_rows(target_train.features, batch);

      // fresh pass under the target mask; running BN statistics follow the
      // target during adaptation
      ForwardCache cache = forward(model.params, xb, &mask_t, true, true);
      // replace this batch's bank rows first, then retrieve (self excluded)
      update_banks(out.banks, batch, cache.feature_masked, cache.probs);
      auto neighbors = knn(out.banks, cache.feature_masked, batch, cfg.k);
      LscLoss ll = lsc_loss_and_dlogits(cache, out.banks, neighbors, lsc_cfg);
      Gradients grads = backward_from_dlogits(model.params, cache, ll.dlogits);
      apply_masked_update(model.params, grads, sgd, &protect);

      loss_sum += ll.loss * static_cast<double>(nb);
      seen += nb;
    }

    EpochRecord rec;
    rec.epoch = epoch + 1;
    rec.loss = seen ? loss_sum / static_cast<double>(seen) : 0.0;
    if (eval_sets) {
      EvalResult ev = evaluate(model, *eval_sets, EvalMode::aware);
      rec.acc_source = ev.acc_source;
      rec.acc_target = ev.acc_target;
      rec.h = ev.h;
    }
    if (target_train.labeled() && target_train.n() > 3) {
      auto purity = neighbor_purity(out.banks, argmax_rows(out.banks.scores),
                                    target_train.labels, 3);
      rec.acc_n = purity.first;
      rec.acc_np = purity.second;
    }
    out.epochs.push_back(rec);
  }
  return out;
}

ContinualResult adapt_continual(const RunConfig& cfg, ModelState& model,
                                const std::vector<Dataset>& target_trains,
                                const std::vector<Dataset>& test_sets) {
  std::size_t n_t = model.masks.n_targets();
  if (target_trains.size() != n_t)
    throw ConfigError("continual: expected one training set per target");
  if (test_sets.size() != n_t + 1)
    throw ConfigError("continual: expected one test set per domain");

  ContinualResult out;
  out.accuracy_matrix = Matrix(n_t + 1, n_t + 1);
  auto record_row = [&](std::size_t row) {
    EvalResult ev = evaluate(model, test_sets, EvalMode::aware);
    for (std::size_t c = 0; c <= n_t; ++c)
      out.accuracy_matrix(row, c) = ev.per_domain[c];
  };

  record_row(0);  // pretrained model, before any adaptation
  for (std::size_t j = 1; j <= n_t; ++j) {
    Vector protect = merge_masks(model.masks, j);
    AdaptResult res =
        adapt_target(cfg, model, j, target_trains[j - 1], protect);
    out.per_target_epochs.push_back(std::move(res.epochs));
    record_row(j);
  }
  return out;
}

// ---------------------------------------------------------------------------
// domain classifier
// ---------------------------------------------------------------------------

Matrix DomainClassifier::predict(const Matrix& features) const {
  if (features.cols() != in_dim)
    throw ShapeError("domain classifier: feature dim mismatch");
  Matrix a1 = affine_fwd(features, W1, b1);
  for (double& v : a1.data()) v = std::max(0.0, v);
  return softmax_rows(affine_fwd(a1, W2, b2));
}

DomainClassifier train_domain_classifier(const RunConfig& cfg,
                                         const ModelState& model,
                                         const std::vector<Dataset>& domains) {
  cfg.validate();
  if (domains.empty())
    throw ConfigError("domain classifier: no domains given");
  for (const Dataset& d : domains)
    if (d.n() == 0)
      throw ConfigError("domain classifier: a domain has no exemplars");

  // features under the frozen source BN statistics, so the classifier keeps
  // working after adaptation moves the live running statistics
  NetworkParams snap = model.params;
  snap.bn_mean = model.src_bn_mean;
  snap.bn_var = model.src_bn_var;

  Rng rng(Rng::mix(cfg.seed, kDcStream));
  std::vector<Vector> rows;
  std::vector<int> labels;
  for (std::size_t dom = 0; dom < domains.size(); ++dom) {
    std::vector<int> ids(domains[dom].n());
    std::iota(ids.begin(), ids.end(), 0);
    rng.shuffle(ids);
    std::size_t take = std::min<std::size_t>(cfg.exemplars_per_domain, ids.size());
    std::vector<int> pick(ids.begin(), ids.begin() + take);
    Matrix x = take_rows(domains[dom].features, pick);
    ForwardCache cache = forward_eval(snap, x, nullptr);
    for (std::size_t i = 0; i < cache.feature.rows(); ++i) {
      rows.push_back(cache.feature.row_vec(i));
      labels.push_back(static_cast<int>(dom));
    }
  }
  Matrix feats(rows.size(), model.params.dims.feature);
  for (std::size_t i = 0; i < rows.size(); ++i) feats.set_row(i, rows[i].data());

  DomainClassifier dc;
  dc.in_dim = model.params.dims.feature;
  dc.n_domains = domains.size();
  dc.W1 = glorot(dc.hidden, dc.in_dim, rng);
  dc.b1 = Matrix(1, dc.hidden);
  dc.W2 = glorot(dc.n_domains, dc.hidden, rng);
  dc.b2 = Matrix(1, dc.n_domains);

  SgdState sgd;
  sgd.learning_rate = cfg.lr_dc;
  sgd.momentum = cfg.momentum;

  std::vector<int> ids(feats.rows());
  std::iota(ids.begin(), ids.end(), 0);
  for (int epoch = 0; epoch < cfg.epochs_dc; ++epoch) {
    rng.shuffle(ids);
    double loss_sum = 0.0;
    for (std::size_t start = 0; start < ids.size(); start += cfg.batch_size) {
      std::size_t nb = std::min(cfg.batch_size, ids.size() - start);
      std::vector<int> batch(ids.begin() + start, ids.begin() + start + nb);
      Matrix xb = take_rows(feats, batch);
      std::vector<int> yb = take_labels(labels, batch);

      Matrix z1 = affine_fwd(xb, dc.W1, dc.b1);
      Matrix a1 = z1;
      for (double& v : a1.data()) v = std::max(0.0, v);
      Matrix probs = softmax_rows(affine_fwd(a1, dc.W2, dc.b2));
      loss_sum += cross_entropy(probs, yb) * static_cast<double>(nb);

      Matrix dz2 = probs;
      for (std::size_t i = 0; i < nb; ++i)
        dz2(i, static_cast<std::size_t>(yb[i])) -= 1.0;
      scale_inplace(dz2, 1.0 / static_cast<double>(nb));
      Matrix dW2 = matmul_tn(dz2, a1);
      Matrix db2 = Matrix::row(col_sums(dz2));
      Matrix da1 = matmul(dz2, dc.W2);
      for (std::size_t i = 0; i < da1.rows(); ++i)
        for (std::size_t c = 0; c < da1.cols(); ++c)
          if (z1(i, c) <= 0.0) da1(i, c) = 0.0;
      Matrix dW1 = matmul_tn(da1, xb);
      Matrix db1 = Matrix::row(col_sums(da1));

      sgd_step(dc.W2, dW2, sgd, "dc.W2");
      sgd_step(dc.b2, db2, sgd, "dc.b2");
      sgd_step(dc.W1, dW1, sgd, "dc.W1");
      sgd_step(dc.b1, db1, sgd, "dc.b1");
    }
    if (loss_sum / static_cast<double>(feats.rows()) < 1e-5) break;
  }
  return dc;
}

// ---------------------------------------------------------------------------
// evaluation
// ---------------------------------------------------------------------------

EvalResult evaluate(const ModelState& model,
                    const std::vector<Dataset>& test_sets, EvalMode mode,
                    const DomainClassifier* dc, bool refresh_bn) {
  if (test_sets.empty()) throw ConfigError("evaluate: no datasets");
  if (test_sets.size() > model.masks.n_domains())
    throw ConfigError("evaluate: more datasets than domain masks");
  if (mode == EvalMode::agnostic) {
    if (!dc) throw UsageError("evaluate: agnostic mode needs a domain classifier");
    if (dc->n_domains > model.masks.n_domains())
      throw UsageError("evaluate: classifier predicts unknown domains");
  }
  for (const Dataset& d : test_sets)
    if (!d.labeled()) throw ConfigError("evaluate: datasets must be labeled");

  std::vector<Vector> masks(model.masks.n_domains());
  for (std::size_t m = 0; m < masks.size(); ++m)
    masks[m] = model.masks.attentions[m].mask();

  // classifier features always come from the source BN snapshot
  NetworkParams snap = model.params;
  snap.bn_mean = model.src_bn_mean;
  snap.bn_var = model.src_bn_var;

  EvalResult out;
  for (std::size_t dom = 0; dom < test_sets.size(); ++dom) {
    const Dataset& ds = test_sets[dom];
    NetworkParams local;
    const NetworkParams* use = &model.params;
    if (refresh_bn) {
      local = model.params;
      refresh_bn_stats(local, ds.features);
      use = &local;
    }

    double acc = 0.0;
    if (mode == EvalMode::aware) {
      ForwardCache cache = forward_eval(*use, ds.features, &masks[dom]);
      acc = accuracy(cache.probs, ds.labels);
    } else {
      ForwardCache feat = forward_eval(snap, ds.features, nullptr);
      std::vector<int> dom_pred = argmax_rows(dc->predict(feat.feature));
      // score each sample under its predicted domain's mask, grouped per
      // domain to keep forwards batched
      std::vector<int> cls_pred(ds.n());
      for (std::size_t m = 0; m < dc->n_domains; ++m) {
        std::vector<int> pick;
        for (std::size_t i = 0; i < ds.n(); ++i)
          if (dom_pred[i] == static_cast<int>(m)) pick.push_back(static_cast<int>(i));
        if (pick.empty()) continue;
        Matrix x = take_rows(ds.features, pick);
        ForwardCache cache = forward_eval(*use, x, &masks[m]);
        std::vector<int> sub = argmax_rows(cache.probs);
        for (std::size_t i = 0; i < pick.size(); ++i)
          cls_pred[static_cast<std::size_t>(pick[i])] = sub[i];
      }
      std::size_t hits = 0;
      for (std::size_t i = 0; i < ds.n(); ++i)
        if (cls_pred[i] == ds.labels[i]) ++hits;
      acc = static_cast<double>(hits) / static_cast<double>(ds.n());
    }
    out.per_domain.push_back(acc * 100.0);
  }

  out.acc_source = out.per_domain[0];
  if (out.per_domain.size() > 1) {
    double sum = 0.0;
    for (std::size_t i = 1; i < out.per_domain.size(); ++i)
      sum += out.per_domain[i];
    out.acc_target = sum / static_cast<double>(out.per_domain.size() - 1);
  }
  out.h = harmonic_mean(out.acc_source, out.acc_target);
  return out;
}

std::pair<double, double> neighbor_purity(const Banks& banks,
                                          const std::vector<int>& predicted,
                                          const std::vector<int>& truth,
                                          int k) {
  std::size_t n = banks.n();
  if (k < 1 || static_cast<std::size_t>(k) >= n)
    throw ConfigError("neighbor_purity: need 1 <= k < bank size");
  if (predicted.size() != n || truth.size() != n)
    throw ShapeError("neighbor_purity: label counts must match bank size");

  std::vector<int> self(n);
  std::iota(self.begin(), self.end(), 0);
  auto neighbors = knn(banks, banks.features, self, k);

  std::size_t n_pure = 0, n_correct = 0;
  for (std::size_t i = 0; i < n; ++i) {
    bool pure = true;
    for (int id : neighbors[i])
      if (predicted[static_cast<std::size_t>(id)] != predicted[i]) {
        pure = false;
        break;
      }
    if (!pure) continue;
    ++n_pure;
    if (predicted[i] == truth[i]) ++n_correct;
  }
  double acc_n = 100.0 * static_cast<double>(n_pure) / static_cast<double>(n);
  double acc_np = n_pure ? 100.0 * static_cast<double>(n_correct) /
                               static_cast<double>(n_pure)
                         : 0.0;
  return {acc_n, acc_np};
}

}  // namespace gsfda
