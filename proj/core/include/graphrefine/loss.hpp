#pragma once

#include <span>
#include <vector>

#include "graphrefine/graph.hpp"

namespace graphrefine {

/// A scalar result together with its gradient with respect to the inputs
/// that produced it (alpha entries or flat parameters, depending on use).
struct DiffValue {
  double value = 0.0;
  std::vector<double> gradient;
};

/// Reference adjacency laid out on a directed support, plus the number of
/// directed reference entries that fall outside the support. Those still
/// count toward sum(A^2) in the Dice denominator.
struct DiceTarget {
  std::vector<double> values;
  double outside = 0.0;
};

/// Throws InputError if `reference` has a different node count.
DiceTarget dice_target(const DirectedSupport& support, const Adjacency& reference);

/// 1 - 2 sum(a A) / (sum(a^2) + sum(A^2)); 0 when both sums vanish.
/// Throws InputError on a size mismatch.
double dice_loss(std::span<const double> alpha, const DiceTarget& target);
double dice_loss(const ConnectivityMatrix& alpha, const Adjacency& reference);

/// Running sums for one Dice loss spread over several blocks (a block
/// diagonal matrix). Add every block, then ask for the value and for each
/// block's dL/dalpha.
class DiceAccumulator {
 public:
  void add(std::span<const double> alpha, const DiceTarget& target);

  double value() const;
  /// dL/dalpha for one block that was previously added.
  std::vector<double> gradient(std::span<const double> alpha, const DiceTarget& target) const;

 private:
  double cross_ = 0.0;
  double alpha_sq_ = 0.0;
  double ref_sq_ = 0.0;
};

/// Loss and dL/dalpha in one call.
DiffValue dice_loss_with_gradient(std::span<const double> alpha, const DiceTarget& target);

}  // namespace graphrefine
