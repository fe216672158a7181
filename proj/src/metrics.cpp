#include "gsfda/metrics.hpp"

#include "gsfda/errors.hpp"

namespace gsfda {

double harmonic_mean(double a, double b) {
  if (a < 0.0 || b < 0.0) throw UsageError("harmonic_mean: negative input");
  if (a == 0.0 || b == 0.0) return 0.0;
  return 2.0 * a * b / (a + b);
}

std::vector<int> argmax_rows(const Matrix& m) {
  std::vector<int> out(m.rows(), 0);
  for (std::size_t i = 0; i < m.rows(); ++i) {
    double best = m(i, 0);
    for (std::size_t c = 1; c < m.cols(); ++c) {
      if (m(i, c) > best) {
        best = m(i, c);
        out[i] = static_cast<int>(c);
      }
    }
  }
  return out;
}

double accuracy(const Matrix& probs, const std::vector<int>& labels) {
  if (probs.rows() != labels.size())
    throw ShapeError("accuracy: row count does not match label count");
  if (probs.rows() == 0) throw UsageError("accuracy: empty input");
  std::vector<int> pred = argmax_rows(probs);
  std::size_t hits = 0;
  for (std::size_t i = 0; i < labels.size(); ++i)
    if (pred[i] == labels[i]) ++hits;
  return static_cast<double>(hits) / static_cast<double>(labels.size());
}

}  // namespace gsfda
