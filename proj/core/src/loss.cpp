#include "graphrefine/loss.hpp"

#include <string>

#include "graphrefine/error.hpp"

namespace graphrefine {

namespace {

void check_shape(std::span<const double> alpha, const DiceTarget& target) {
  if (alpha.size() != target.values.size()) {
    throw InputError("dice loss: " + std::to_string(alpha.size()) + " predictions against " +
                     std::to_string(target.values.size()) + " reference entries");
  }
}

}  // namespace

DiceTarget dice_target(const DirectedSupport& support, const Adjacency& reference) {
  if (reference.node_count() != support.node_count()) {
    throw InputError("reference adjacency has " + std::to_string(reference.node_count()) +
                     " nodes, input has " + std::to_string(support.node_count()));
  }
  DiceTarget t;
  t.values.resize(support.pair_count());
  double inside = 0.0;
  for (std::size_t p = 0; p < support.pair_count(); ++p) {
    if (reference.has_edge(support.source(p), support.target(p))) {
      t.values[p] = 1.0;
      inside += 1.0;
    }
  }
  t.outside = 2.0 * static_cast<double>(reference.edge_count()) - inside;
  return t;
}

void DiceAccumulator::add(std::span<const double> alpha, const DiceTarget& target) {
  check_shape(alpha, target);
  for (std::size_t p = 0; p < alpha.size(); ++p) {
    cross_ += alpha[p] * target.values[p];
    alpha_sq_ += alpha[p] * alpha[p];
    ref_sq_ += target.values[p] * target.values[p];
  }
  ref_sq_ += target.outside;
}

double DiceAccumulator::value() const {
  const double denom = alpha_sq_ + ref_sq_;
  if (denom == 0.0) return 0.0;
  return 1.0 - 2.0 * cross_ / denom;
}

std::vector<double> DiceAccumulator::gradient(std::span<const double> alpha,
                                              const DiceTarget& target) const {
  check_shape(alpha, target);
  std::vector<double> grad(alpha.size(), 0.0);
  const double denom = alpha_sq_ + ref_sq_;
  if (denom == 0.0) return grad;
  const double inv_sq = 1.0 / (denom * denom);
  for (std::size_t p = 0; p < alpha.size(); ++p) {
    grad[p] = -2.0 * (target.values[p] * denom - 2.0 * cross_ * alpha[p]) * inv_sq;
  }
  return grad;
}

double dice_loss(std::span<const double> alpha, const DiceTarget& target) {
  DiceAccumulator acc;
  acc.add(alpha, target);
  return acc.value();
}

double dice_loss(const ConnectivityMatrix& alpha, const Adjacency& reference) {
  return dice_loss(alpha.values(), dice_target(alpha.support(), reference));
}

DiffValue dice_loss_with_gradient(std::span<const double> alpha, const DiceTarget& target) {
  DiceAccumulator acc;
  acc.add(alpha, target);
  return {acc.value(), acc.gradient(alpha, target)};
}

}  // namespace graphrefine
