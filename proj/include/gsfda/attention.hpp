#pragma once

#include <vector>

#include "gsfda/matrix.hpp"

namespace gsfda {

// Per-domain channel attention. The mask is sigmoid(scale * e) entrywise;
// with the default scale of 100 a trained embedding with |e_j| >= 0.05 gives
// near-binary mask entries while staying differentiable. Embeddings train
// only during source pretraining and are frozen afterwards.
struct DomainAttention {
  int domain_id = 0;
  Vector e;             // embedding, length = feature dim
  double scale = 100.0;
  bool frozen = false;

  Vector mask() const;
};

DomainAttention init_attention(int domain_id, std::size_t dim, class Rng& rng,
                               double scale = 100.0);

// Source attention at index 0, targets at 1..n_targets.
struct MaskSet {
  std::vector<DomainAttention> attentions;

  std::size_t n_domains() const { return attentions.size(); }
  std::size_t n_targets() const { return attentions.empty() ? 0 : attentions.size() - 1; }
  const DomainAttention& source() const { return attentions.at(0); }
  const DomainAttention& target(std::size_t i) const { return attentions.at(i); }
};

// Elementwise max of the source mask and every target mask except
// current_target (1-based target index). With a single target this is the
// source mask exactly.
Vector merge_masks(const MaskSet& set, std::size_t current_target);

struct SparsityPenalty {
  double loss = 0.0;
  Vector grad_e;  // analytic gradient w.r.t. the embedding, through the scaled sigmoid
};

// Capacity-usage penalty conditioned on prior masks:
//   loss = sum_j A_j * (1 - M_j) / max(1, sum_j (1 - M_j))
// where M is the elementwise max of prior_masks (zero if none). Penalizes a
// new mask for claiming channels no prior mask already uses.
SparsityPenalty sparsity_penalty(const DomainAttention& att_new,
                                 const std::vector<Vector>& prior_masks);

// Rescales an embedding gradient by sigmoid'(e) / (scale * sigmoid'(scale*e)),
// undoing the vanishing derivative of the saturated scaled sigmoid so
// saturated mask entries keep training.
Vector compensate_embedding_grad(const DomainAttention& att, const Vector& grad_e);

// d(mask)/d(e) chain: grad_e_j = grad_mask_j * scale * A_j * (1 - A_j).
Vector mask_grad_to_embedding(const DomainAttention& att, const Vector& grad_mask);

}  // namespace gsfda
