#include "graphrefine/amsgrad.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "graphrefine/error.hpp"

namespace graphrefine {

void amsgrad_step(std::span<double> params, std::span<const double> grads, AmsgradState& state) {
  const std::size_t n = params.size();
  if (grads.size() != n || state.m.size() != n || state.v.size() != n || state.v_hat.size() != n) {
    throw InputError("amsgrad: parameter, gradient and state sizes differ");
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (!std::isfinite(grads[i])) {
      throw TrainingError("non-finite gradient at parameter " + std::to_string(i), i);
    }
  }
  const auto& h = state.hyper;
  ++state.step;
  const double t = static_cast<double>(state.step);
  const double m_corr = 1.0 - std::pow(h.beta1, t);
  const double v_corr = 1.0 - std::pow(h.beta2, t);
  for (std::size_t i = 0; i < n; ++i) {
    const double g = grads[i];
    state.m[i] = h.beta1 * state.m[i] + (1.0 - h.beta1) * g;
    state.v[i] = h.beta2 * state.v[i] + (1.0 - h.beta2) * g * g;
    state.v_hat[i] = std::max(state.v_hat[i], state.v[i]);
    const double m_hat = state.m[i] / m_corr;
    const double v_hat = state.v_hat[i] / v_corr;
    params[i] -= h.lr * m_hat / (std::sqrt(v_hat) + h.eps);
  }
}

}  // namespace graphrefine
