#include "gsfda/attention.hpp"

#include <algorithm>
#include <cmath>

#include "gsfda/rng.hpp"

namespace gsfda {

namespace {
inline double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }
}  // namespace

Vector DomainAttention::mask() const {
  Vector out(e.size());
  for (std::size_t j = 0; j < e.size(); ++j) out[j] = sigmoid(scale * e[j]);
  return out;
}

DomainAttention init_attention(int domain_id, std::size_t dim, Rng& rng, double scale) {
  DomainAttention att;
  att.domain_id = domain_id;
  att.scale = scale;
  att.e.resize(dim);
  for (auto& v : att.e) v = rng.uniform(-0.1, 0.1);
  return att;
}

Vector merge_masks(const MaskSet& set, std::size_t current_target) {
  if (current_target < 1 || current_target >= set.attentions.size())
    throw UsageError("merge_masks: target index out of range");
  Vector merged = set.source().mask();
  for (std::size_t i = 1; i < set.attentions.size(); ++i) {
    if (i == current_target) continue;
    Vector m = set.attentions[i].mask();
    for (std::size_t j = 0; j < merged.size(); ++j) merged[j] = std::max(merged[j], m[j]);
  }
  return merged;
}

SparsityPenalty sparsity_penalty(const DomainAttention& att_new,
                                 const std::vector<Vector>& prior_masks) {
  const std::size_t d = att_new.e.size();
  Vector prior_max(d, 0.0);
  for (const Vector& m : prior_masks) {
    if (m.size() != d) throw ShapeError("sparsity_penalty: prior mask length mismatch");
    for (std::size_t j = 0; j < d; ++j) prior_max[j] = std::max(prior_max[j], m[j]);
  }
  double denom = 0.0;
  for (std::size_t j = 0; j < d; ++j) denom += 1.0 - prior_max[j];
  denom = std::max(1.0, denom);

  const Vector mask = att_new.mask();
  SparsityPenalty out;
  out.grad_e.resize(d);
  for (std::size_t j = 0; j < d; ++j) {
    const double free_j = 1.0 - prior_max[j];
    out.loss += mask[j] * free_j / denom;
    // d loss / d e_j through the scaled sigmoid
    out.grad_e[j] = free_j / denom * att_new.scale * mask[j] * (1.0 - mask[j]);
  }
  return out;
}

Vector compensate_embedding_grad(const DomainAttention& att, const Vector& grad_e) {
  if (grad_e.size() != att.e.size())
    throw ShapeError("compensate_embedding_grad: length mismatch");
  Vector out(grad_e.size());
  for (std::size_t j = 0; j < grad_e.size(); ++j) {
    const double s1 = sigmoid(att.e[j]);
    const double ss = sigmoid(att.scale * att.e[j]);
    const double num = s1 * (1.0 - s1);
    const double den = att.scale * ss * (1.0 - ss) + 1e-12;
    out[j] = grad_e[j] * num / den;
  }
  return out;
}

Vector mask_grad_to_embedding(const DomainAttention& att, const Vector& grad_mask) {
  if (grad_mask.size() != att.e.size())
    throw ShapeError("mask_grad_to_embedding: length mismatch");
  const Vector mask = att.mask();
  Vector out(grad_mask.size());
  for (std::size_t j = 0; j < grad_mask.size(); ++j)
    out[j] = grad_mask[j] * att.scale * mask[j] * (1.0 - mask[j]);
  return out;
}

}  // namespace gsfda
