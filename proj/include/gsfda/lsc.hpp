#pragma once

#include <string>
#include <vector>

#include "gsfda/attention.hpp"
#include "gsfda/dataset.hpp"
#include "gsfda/network.hpp"

namespace gsfda {

// Paired feature / score banks over the full target set. Row i always holds
// the masked feature and the softmax output of target sample i from the same
// forward pass; the row index is the sample id.
struct Banks {
  Matrix features;  // n_t x d, rows are f(x_i) * A_t
  Matrix scores;    // n_t x C, rows sum to 1

  std::size_t n() const { return features.rows(); }
};

struct LscConfig {
  int k = 3;                    // neighbor count, 1 <= k < n_t
  double balance_weight = 1.0;  // weight on the prediction-balance term
};

// Fills both banks with one eval-mode pass over the whole target set,
// features masked by the target attention.
Banks init_banks(const NetworkParams& params, const Dataset& target,
                 const DomainAttention& att_t);

// Replaces exactly the rows in batch_ids; everything else is untouched.
void update_banks(Banks& banks, const std::vector<int>& batch_ids,
                  const Matrix& new_features, const Matrix& new_scores);

// Per query, the k bank rows with highest cosine similarity. exclude_ids
// gives the query's own bank row to skip (empty = no exclusion, used by
// tests). Ties break toward the lower sample id.
std::vector<std::vector<int>> knn(const Banks& banks, const Matrix& queries,
                                  const std::vector<int>& exclude_ids, int k);

struct LscLoss {
  double loss = 0.0;
  double consistency_term = 0.0;
  double balance_term = 0.0;
  Matrix dlogits;
};

// Neighborhood-consistency objective: the mean negative log dot product
// between each sample's prediction and its neighbors' stored scores, plus
// balance_weight * KL(mean prediction || uniform). Stored scores are
// constants; the returned dlogits is the exact gradient through the softmax
// with the banks held fixed. Dot products are clamped below at 1e-8.
LscLoss lsc_loss_and_dlogits(const ForwardCache& cache, const Banks& banks,
                             const std::vector<std::vector<int>>& neighbor_ids,
                             const LscConfig& cfg);

// One row per sample: f0..f{d-1}, s0..s{C-1}.
void dump_banks_csv(const Banks& banks, const std::string& path);

}  // namespace gsfda
