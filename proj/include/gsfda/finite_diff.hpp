#pragma once

#include <functional>

#include "gsfda/matrix.hpp"

namespace gsfda {

using LossFn = std::function<double(const Matrix&)>;

// Central-difference gradient (L(p + eps e_ij) - L(p - eps e_ij)) / (2 eps)
// per entry. The independent oracle every analytic gradient is checked
// against. Throws NumericError when the loss evaluates non-finite.
Matrix finite_diff_grad(const LossFn& loss_fn, const Matrix& param, double eps);

}  // namespace gsfda
