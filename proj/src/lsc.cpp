#include "gsfda/lsc.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>

#include "gsfda/errors.hpp"

namespace gsfda {

namespace {
constexpr double kDotClamp = 1e-8;  // floor for the log argument
}

// ---------------------------------------------------------------------------
// bank maintenance
// ---------------------------------------------------------------------------

Banks init_banks(const NetworkParams& params, const Dataset& target,
                 const DomainAttention& att_t) {
  if (target.n() == 0) throw ConfigError("init_banks: empty target set");
  Vector mask = att_t.mask();
  ForwardCache cache = forward_eval(params, target.features, &mask);
  Banks banks;
  banks.features = cache.feature_masked;
  banks.scores = cache.probs;
  return banks;
}

void update_banks(Banks& banks, const std::vector<int>& batch_ids,
                  const Matrix& new_features, const Matrix& new_scores) {
  if (new_features.rows() != batch_ids.size() ||
      new_scores.rows() != batch_ids.size())
    throw ShapeError("update_banks: batch rows do not match id count");
  if (new_features.cols() != banks.features.cols() ||
      new_scores.cols() != banks.scores.cols())
    throw ShapeError("update_banks: column count differs from bank");
  for (std::size_t b = 0; b < batch_ids.size(); ++b) {
    int id = batch_ids[b];
    if (id < 0 || static_cast<std::size_t>(id) >= banks.n())
      throw UsageError("update_banks: sample id " + std::to_string(id) +
                       " outside bank of size " + std::to_string(banks.n()));
    banks.features.set_row(static_cast<std::size_t>(id),
                           new_features.row_ptr(b));
    banks.scores.set_row(static_cast<std::size_t>(id), new_scores.row_ptr(b));
  }
}

// ---------------------------------------------------------------------------
// nearest neighbors
// ---------------------------------------------------------------------------

std::vector<std::vector<int>> knn(const Banks& banks, const Matrix& queries,
                                  const std::vector<int>& exclude_ids, int k) {
  std::size_t n_bank = banks.n();
  std::size_t n_query = queries.rows();
  if (!exclude_ids.empty() && exclude_ids.size() != n_query)
    throw UsageError("knn: exclude_ids must be empty or one per query");
  if (queries.cols() != banks.features.cols())
    throw ShapeError("knn: query dim differs from bank feature dim");
  std::size_t candidates = exclude_ids.empty() ? n_bank : n_bank - 1;
  if (k < 1 || static_cast<std::size_t>(k) > candidates)
    throw ConfigError("knn: k=" + std::to_string(k) + " with " +
                      std::to_string(candidates) + " candidates");

  std::vector<std::vector<int>> out(n_query);
  std::vector<std::pair<double, int>> scored;
  scored.reserve(n_bank);
  for (std::size_t q = 0; q < n_query; ++q) {
    int skip = exclude_ids.empty() ? -1 : exclude_ids[q];
    scored.clear();
    for (std::size_t j = 0; j < n_bank; ++j) {
      if (static_cast<int>(j) == skip) continue;
      double sim = cosine_similarity(queries.row_ptr(q),
                                     banks.features.row_ptr(j),
                                     queries.cols());
      scored.emplace_back(sim, static_cast<int>(j));
    }
    // highest similarity first; equal similarity keeps the lower id
    std::partial_sort(scored.begin(), scored.begin() + k, scored.end(),
                      [](const std::pair<double, int>& a,
                         const std::pair<double, int>& b) {
                        if (a.first != b.first) return a.first > b.first;
                        return a.second < b.second;
                      });
    out[q].reserve(static_cast<std::size_t>(k));
    for (int j = 0; j < k; ++j) out[q].push_back(scored[j].second);
  }
  return out;
}

// ---------------------------------------------------------------------------
// loss
// ---------------------------------------------------------------------------

LscLoss lsc_loss_and_dlogits(const ForwardCache& cache, const Banks& banks,
                             const std::vector<std::vector<int>>& neighbor_ids,
                             const LscConfig& cfg) {
  std::size_t n = cache.probs.rows();
  std::size_t n_classes = cache.probs.cols();
  if (neighbor_ids.size() != n)
    throw UsageError("lsc loss: one neighbor list per batch sample required");
  if (banks.scores.cols() != n_classes)
    throw ShapeError("lsc loss: bank class count differs from network");

  LscLoss out;
  out.dlogits = Matrix(n, n_classes);
  Matrix dprobs(n, n_classes);  // dL/dp before the softmax backward

  // neighborhood consistency: -(1/n) sum_i sum_k log(p_i . s_{n_k})
  for (std::size_t i = 0; i < n; ++i) {
    if (neighbor_ids[i].empty())
      throw UsageError("lsc loss: sample " + std::to_string(i) +
                       " has no neighbors");
    for (int id : neighbor_ids[i]) {
      if (id < 0 || static_cast<std::size_t>(id) >= banks.n())
        throw UsageError("lsc loss: neighbor id " + std::to_string(id) +
                         " outside bank");
      double d = dot(cache.probs.row_vec(i), banks.scores.row_vec(id));
      out.consistency_term += -std::log(std::max(d, kDotClamp)) /
                              static_cast<double>(n);
      if (d > kDotClamp) {  // clamped dots contribute zero gradient
        for (std::size_t c = 0; c < n_classes; ++c)
          dprobs(i, c) -= banks.scores(id, c) / (d * static_cast<double>(n));
      }
    }
  }

  // balance term: KL(mean prediction || uniform)
  Vector pbar(n_classes, 0.0);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t c = 0; c < n_classes; ++c) pbar[c] += cache.probs(i, c);
  for (double& v : pbar) v /= static_cast<double>(n);
  double q = 1.0 / static_cast<double>(n_classes);
  for (std::size_t c = 0; c < n_classes; ++c) {
    double log_ratio = std::log(std::max(pbar[c], 1e-12) / q);
    out.balance_term += pbar[c] * log_ratio;
    // d/dpbar_c [pbar_c log(pbar_c/q)] = log(pbar_c/q) + 1, spread over the
    // batch mean
    double g = cfg.balance_weight * (log_ratio + 1.0) / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) dprobs(i, c) += g;
  }
  out.loss = out.consistency_term + cfg.balance_weight * out.balance_term;

  // through the softmax: dz_c = p_c * (dp_c - sum_j dp_j p_j)
  for (std::size_t i = 0; i < n; ++i) {
    double inner = dot(dprobs.row_vec(i), cache.probs.row_vec(i));
    for (std::size_t c = 0; c < n_classes; ++c)
      out.dlogits(i, c) = cache.probs(i, c) * (dprobs(i, c) - inner);
  }
  ensure_finite(out.dlogits, "lsc dlogits");
  return out;
}

// ---------------------------------------------------------------------------
// inspection
// ---------------------------------------------------------------------------

void dump_banks_csv(const Banks& banks, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot open " + path + " for writing");
  for (std::size_t c = 0; c < banks.features.cols(); ++c)
    out << (c ? "," : "") << "f" << c;
  for (std::size_t c = 0; c < banks.scores.cols(); ++c) out << ",s" << c;
  out << "\n";
  char buf[64];
  for (std::size_t i = 0; i < banks.n(); ++i) {
    for (std::size_t c = 0; c < banks.features.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", banks.features(i, c));
      out << (c ? "," : "") << buf;
    }
    for (std::size_t c = 0; c < banks.scores.cols(); ++c) {
      std::snprintf(buf, sizeof buf, "%.17g", banks.scores(i, c));
      out << "," << buf;
    }
    out << "\n";
  }
}

}  // namespace gsfda
