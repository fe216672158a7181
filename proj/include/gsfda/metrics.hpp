#pragma once

#include <vector>

#include "gsfda/matrix.hpp"

namespace gsfda {

// Harmonic mean of two accuracies, the usual summary when both the old and
// the new domain matter: H = 2ab / (a + b). Zero if either input is zero.
double harmonic_mean(double a, double b);

// Fraction of rows whose argmax matches the label. Ties go to the lower
// class index (argmax scan order), matching prediction everywhere else.
double accuracy(const Matrix& probs, const std::vector<int>& labels);

// Row-wise argmax, lower index wins ties.
std::vector<int> argmax_rows(const Matrix& m);

}  // namespace gsfda
