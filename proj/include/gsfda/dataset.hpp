#pragma once

#include <string>
#include <vector>

#include "gsfda/matrix.hpp"
#include "gsfda/rng.hpp"

namespace gsfda {

struct Dataset {
  Matrix features;          // n x input_dim
  std::vector<int> labels;  // empty when unlabeled
  int domain_id = 0;
  std::string name;

  std::size_t n() const { return features.rows(); }
  std::size_t dim() const { return features.cols(); }
  bool labeled() const { return !labels.empty(); }
};

struct SplitSpec {
  double train_fraction = 0.9;
  std::uint64_t seed = 0;
  bool stratified = true;
};

// Two interleaved half circles with Gaussian noise, rotated about the origin;
// the rotation angle models domain shift. Class 0 gets ceil(n/2) samples.
Dataset gen_two_moons(std::size_t n, double noise_sd, double rotation_deg,
                      std::uint64_t seed);

// Isotropic Gaussian clusters; labels are balanced within +-1 (round-robin
// over classes). shift is a per-center displacement added to centers.
Dataset gen_blobs(std::size_t n, std::size_t classes,
                  const std::vector<Vector>& centers,
                  const std::vector<Vector>& shift, double spread,
                  std::uint64_t seed);

// Deterministic train/test split. Stratified mode keeps per-class proportions
// within one sample and requires at least 2 samples per class.
std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec);

// Per-feature mean and standard deviation, for z-scoring targets with source
// statistics only.
struct FeatureStats {
  Vector mean, sd;
};
FeatureStats feature_stats(const Dataset& ds);
Dataset standardize(const Dataset& ds, const FeatureStats& stats);

}  // namespace gsfda
