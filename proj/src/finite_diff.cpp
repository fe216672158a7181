#include "gsfda/finite_diff.hpp"

#include <cmath>

namespace gsfda {

Matrix finite_diff_grad(const LossFn& loss_fn, const Matrix& param, double eps) {
  if (eps <= 0.0) throw UsageError("finite_diff_grad: eps must be positive");
  Matrix probe = param;
  Matrix grad(param.rows(), param.cols());
  for (std::size_t i = 0; i < param.size(); ++i) {
    const double orig = probe.data()[i];
    probe.data()[i] = orig + eps;
    const double up = loss_fn(probe);
    probe.data()[i] = orig - eps;
    const double down = loss_fn(probe);
    probe.data()[i] = orig;
    if (!std::isfinite(up) || !std::isfinite(down))
      throw NumericError("finite_diff_grad: loss evaluated non-finite");
    grad.data()[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

}  // namespace gsfda
