#include "graphrefine/gradcheck.hpp"

#include <algorithm>
#include <cmath>

#include "graphrefine/error.hpp"

namespace graphrefine {

std::vector<double> finite_difference_gradient(const ScalarFunction& loss,
                                               std::span<const double> params, double eps) {
  if (!(eps > 0.0)) throw ParameterError("finite-difference step must be positive");
  std::vector<double> w(params.begin(), params.end());
  std::vector<double> grad(w.size());
  for (std::size_t i = 0; i < w.size(); ++i) {
    const double saved = w[i];
    w[i] = saved + eps;
    const double up = loss(w);
    w[i] = saved - eps;
    const double down = loss(w);
    w[i] = saved;
    grad[i] = (up - down) / (2.0 * eps);
  }
  return grad;
}

double relative_error(std::span<const double> a, std::span<const double> b) {
  if (a.size() != b.size()) throw InputError("relative_error: size mismatch");
  double diff = 0.0;
  double na = 0.0;
  double nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    diff += (a[i] - b[i]) * (a[i] - b[i]);
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  const double scale = std::sqrt(std::max(na, nb));
  if (scale == 0.0) return 0.0;
  return std::sqrt(diff) / scale;
}

}  // namespace graphrefine
