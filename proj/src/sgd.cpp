#include "gsfda/sgd.hpp"

namespace gsfda {

void sgd_step(Matrix& param, const Matrix& grad, SgdState& state,
              const std::string& param_name) {
  if (!param.same_shape(grad)) throw ShapeError("sgd_step: shape mismatch for " + param_name);
  auto it = state.velocity.find(param_name);
  if (it == state.velocity.end()) {
    it = state.velocity.emplace(param_name, Matrix(param.rows(), param.cols())).first;
  } else if (!it->second.same_shape(param)) {
    throw ShapeError("sgd_step: stale velocity shape for " + param_name);
  }
  Matrix& v = it->second;
  const double m = state.momentum;
  const double lr = state.learning_rate;
  for (std::size_t i = 0; i < param.size(); ++i) {
    v.data()[i] = m * v.data()[i] + grad.data()[i];
    param.data()[i] -= lr * v.data()[i];
  }
  ensure_finite(param, "sgd_step on " + param_name);
}

}  // namespace gsfda
