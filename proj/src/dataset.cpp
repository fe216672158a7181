#include "gsfda/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <map>

namespace gsfda {

Dataset gen_two_moons(std::size_t n, double noise_sd, double rotation_deg,
                      std::uint64_t seed) {
  if (n < 4) throw ConfigError("gen_two_moons: need n >= 4");
  if (noise_sd < 0.0) throw ConfigError("gen_two_moons: negative noise");
  Rng rng(seed);
  const std::size_t n0 = (n + 1) / 2, n1 = n / 2;

  Dataset ds;
  ds.features = Matrix(n, 2);
  ds.labels.resize(n);
  std::size_t row = 0;
  for (std::size_t i = 0; i < n0; ++i, ++row) {
    const double t = M_PI * static_cast<double>(i) / static_cast<double>(n0 > 1 ? n0 - 1 : 1);
    ds.features(row, 0) = std::cos(t) + noise_sd * rng.normal();
    ds.features(row, 1) = std::sin(t) + noise_sd * rng.normal();
    ds.labels[row] = 0;
  }
  for (std::size_t i = 0; i < n1; ++i, ++row) {
    const double t = M_PI * static_cast<double>(i) / static_cast<double>(n1 > 1 ? n1 - 1 : 1);
    ds.features(row, 0) = 1.0 - std::cos(t) + noise_sd * rng.normal();
    ds.features(row, 1) = 0.5 - std::sin(t) + noise_sd * rng.normal();
    ds.labels[row] = 1;
  }

  // Reduce the angle first so 360 degrees is bit-identical to 0.
  const double deg = std::fmod(rotation_deg, 360.0);
  const double rad = deg * M_PI / 180.0;
  const double c = std::cos(rad), s = std::sin(rad);
  for (std::size_t i = 0; i < n; ++i) {
    const double x = ds.features(i, 0), y = ds.features(i, 1);
    ds.features(i, 0) = c * x - s * y;
    ds.features(i, 1) = s * x + c * y;
  }
  ds.name = "two_moons";
  return ds;
}

Dataset gen_blobs(std::size_t n, std::size_t classes,
                  const std::vector<Vector>& centers,
                  const std::vector<Vector>& shift, double spread,
                  std::uint64_t seed) {
  if (classes < 2) throw ConfigError("gen_blobs: need at least 2 classes");
  if (centers.size() != classes) throw ConfigError("gen_blobs: one center per class required");
  if (!shift.empty() && shift.size() != classes)
    throw ConfigError("gen_blobs: shift must be empty or one displacement per class");
  const std::size_t dim = centers.front().size();
  for (const auto& c : centers)
    if (c.size() != dim) throw ConfigError("gen_blobs: inconsistent center dims");

  Rng rng(seed);
  Dataset ds;
  ds.features = Matrix(n, dim);
  ds.labels.resize(n);
  for (std::size_t i = 0; i < n; ++i) {
    const std::size_t cls = i % classes;  // balanced within +-1
    ds.labels[i] = static_cast<int>(cls);
    for (std::size_t j = 0; j < dim; ++j) {
      double center = centers[cls][j];
      if (!shift.empty()) center += shift[cls][j];
      ds.features(i, j) = center + spread * rng.normal();
    }
  }
  ds.name = "blobs";
  return ds;
}

std::pair<Dataset, Dataset> split(const Dataset& ds, const SplitSpec& spec) {
  if (spec.train_fraction <= 0.0 || spec.train_fraction >= 1.0)
    throw ConfigError("split: train_fraction must be in (0, 1)");
  if (spec.stratified && !ds.labeled())
    throw ConfigError("split: stratified split needs a labeled dataset");
  const std::size_t n = ds.n();
  if (n < 2) throw ConfigError("split: need at least 2 samples");

  Rng rng(spec.seed);
  std::vector<std::size_t> train_ids, test_ids;
  if (spec.stratified) {
    std::map<int, std::vector<std::size_t>> by_class;
    for (std::size_t i = 0; i < n; ++i) by_class[ds.labels[i]].push_back(i);
    for (auto& [cls, ids] : by_class) {
      if (ids.size() < 2)
        throw ConfigError("split: class " + std::to_string(cls) +
                          " has fewer than 2 samples");
      rng.shuffle(ids);
      auto k = static_cast<std::size_t>(
          std::llround(spec.train_fraction * static_cast<double>(ids.size())));
      k = std::clamp<std::size_t>(k, 1, ids.size() - 1);
      train_ids.insert(train_ids.end(), ids.begin(), ids.begin() + k);
      test_ids.insert(test_ids.end(), ids.begin() + k, ids.end());
    }
    std::sort(train_ids.begin(), train_ids.end());
    std::sort(test_ids.begin(), test_ids.end());
  } else {
    std::vector<std::size_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) ids[i] = i;
    rng.shuffle(ids);
    auto k = static_cast<std::size_t>(
        std::llround(spec.train_fraction * static_cast<double>(n)));
    k = std::clamp<std::size_t>(k, 1, n - 1);
    train_ids.assign(ids.begin(), ids.begin() + k);
    test_ids.assign(ids.begin() + k, ids.end());
  }

  auto take = [&](const std::vector<std::size_t>& ids, const std::string& suffix) {
    Dataset out;
    out.features = Matrix(ids.size(), ds.dim());
    if (ds.labeled()) out.labels.resize(ids.size());
    for (std::size_t r = 0; r < ids.size(); ++r) {
      out.features.set_row(r, ds.features.row_ptr(ids[r]));
      if (ds.labeled()) out.labels[r] = ds.labels[ids[r]];
    }
    out.domain_id = ds.domain_id;
    out.name = ds.name.empty() ? suffix : ds.name + "_" + suffix;
    return out;
  };
  return {take(train_ids, "train"), take(test_ids, "test")};
}

FeatureStats feature_stats(const Dataset& ds) {
  if (ds.n() == 0) throw ConfigError("feature_stats: empty dataset");
  FeatureStats st;
  st.mean.assign(ds.dim(), 0.0);
  st.sd.assign(ds.dim(), 0.0);
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t j = 0; j < ds.dim(); ++j) st.mean[j] += ds.features(i, j);
  for (auto& m : st.mean) m /= static_cast<double>(ds.n());
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      const double d = ds.features(i, j) - st.mean[j];
      st.sd[j] += d * d;
    }
  for (auto& s : st.sd) s = std::sqrt(s / static_cast<double>(ds.n()));
  return st;
}

Dataset standardize(const Dataset& ds, const FeatureStats& stats) {
  if (stats.mean.size() != ds.dim()) throw ShapeError("standardize: stats dim mismatch");
  Dataset out = ds;
  for (std::size_t i = 0; i < ds.n(); ++i)
    for (std::size_t j = 0; j < ds.dim(); ++j) {
      const double sd = stats.sd[j] < 1e-12 ? 1.0 : stats.sd[j];
      out.features(i, j) = (ds.features(i, j) - stats.mean[j]) / sd;
    }
  return out;
}

}  // namespace gsfda
