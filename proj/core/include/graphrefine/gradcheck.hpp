#pragma once

#include <functional>
#include <span>
#include <vector>

namespace graphrefine {

using ScalarFunction = std::function<double(std::span<const double>)>;

/// Central differences (f(w + eps e_i) - f(w - eps e_i)) / (2 eps).
std::vector<double> finite_difference_gradient(const ScalarFunction& loss,
                                               std::span<const double> params,
                                               double eps = 1e-4);

/// ||a - b|| / max(||a||, ||b||) in the Euclidean norm; 0 when both are 0.
double relative_error(std::span<const double> a, std::span<const double> b);

}  // namespace graphrefine
