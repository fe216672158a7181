#pragma once

#include <map>
#include <string>

#include "gsfda/matrix.hpp"

namespace gsfda {

// SGD with classic (non-Nesterov) momentum. Velocities are kept per named
// parameter and lazily initialized to zero with the parameter's shape.
struct SgdState {
  double learning_rate = 0.01;
  double momentum = 0.9;
  std::map<std::string, Matrix> velocity;
};

// v <- momentum * v + grad;  param <- param - lr * v
void sgd_step(Matrix& param, const Matrix& grad, SgdState& state,
              const std::string& param_name);

}  // namespace gsfda
