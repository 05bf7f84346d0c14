#pragma once

#include <cstddef>
#include <cstdint>
#include <span>
#include <vector>

namespace graphrefine {

struct AmsgradHyper {
  double lr = 0.005;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct AmsgradState {
  AmsgradHyper hyper;
  std::uint64_t step = 0;
  std::vector<double> m;
  std::vector<double> v;
  std::vector<double> v_hat;  // running max of v

  AmsgradState() = default;
  AmsgradState(std::size_t n, AmsgradHyper h) : hyper(h), m(n, 0.0), v(n, 0.0), v_hat(n, 0.0) {}
};

/// One bias-corrected AMSGrad update of `params` in place.
/// Throws InputError on shape mismatch and TrainingError (carrying the
/// offending index) on a non-finite gradient; nothing is modified then.
void amsgrad_step(std::span<double> params, std::span<const double> grads, AmsgradState& state);

}  // namespace graphrefine
