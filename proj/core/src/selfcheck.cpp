#include "graphrefine/selfcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "graphrefine/gnn.hpp"
#include "graphrefine/gradcheck.hpp"
#include "graphrefine/loss.hpp"
#include "graphrefine/metrics.hpp"
#include "graphrefine/mfn_oracle.hpp"

namespace graphrefine {

namespace {

NodeFeature random_feature(Rng& rng) {
  NodeFeature f;
  for (int d = 0; d < 3; ++d) f.mu[d] = rng.uniform(-5.0, 5.0);
  f.mu[3] = rng.uniform(0.5, 3.0);
  for (int d = 4; d < 7; ++d) f.mu[d] = rng.uniform(-1.0, 1.0);
  for (double& v : f.var) v = rng.uniform(0.01, 0.5);
  return f;
}

CheckResult elbo_vs_enumeration(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 100; ++trial) {
    const GraphInstance g = random_micro_graph(rng, 10);
    const MfnGraph mg{PreparedGraph(g)};
    const MfnParams params = random_mfn_params(rng, kNodeFeatureDim);
    const auto alpha = random_alpha(rng, mg.support(), 0.0, 1.0);
    worst = std::max(worst, std::abs(elbo(alpha, mg, params) - brute_force_elbo(alpha, mg, params)));
  }
  return {"elbo closed form vs enumeration (100 graphs, abs)", 1e-9, worst, worst <= 1e-9};
}

CheckResult stationarity(Rng& rng, bool corrupt) {
  constexpr double h = 1e-5;
  double worst = 0.0;
  for (int trial = 0; trial < 50; ++trial) {
    const GraphInstance g = random_micro_graph(rng, 10);
    const MfnGraph mg{PreparedGraph(g)};
    const MfnParams params = random_mfn_params(rng, kNodeFeatureDim);
    auto alpha = random_alpha(rng, mg.support(), 0.1, 0.9);
    const auto& s = mg.support();
    for (std::size_t p = 0; p < s.pair_count(); ++p) {
      const double a = alpha.values()[p];
      alpha.values()[p] = a + h;
      const double up = brute_force_elbo(alpha, mg, params);
      alpha.values()[p] = a - h;
      const double down = brute_force_elbo(alpha, mg, params);
      alpha.values()[p] = a;
      const double expected = (up - down) / (2.0 * h) + std::log(a / (1.0 - a));
      double got = gamma(s.source(p), s.target(p), alpha, mg, params);
      if (corrupt) got = -got;
      worst = std::max(worst, std::abs(got - expected));
    }
  }
  return {"gamma stationarity vs finite-difference ELBO (50 graphs, abs)", 1e-5, worst,
          worst <= 1e-5};
}

CheckResult mfn_gradient(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const GraphInstance g = random_micro_graph(rng, 20);
    const MfnGraph mg{PreparedGraph(g)};
    const DiceTarget target = dice_target(mg.support(), *g.adjacency_ref);
    const MfnParams params = random_mfn_params(rng, kNodeFeatureDim, 0.3);
    MfnOptions options;
    options.record_elbo = false;
    const auto loss = [&](std::span<const double> w) {
      const auto fwd = mfn_forward(mg, MfnParams::unflatten(w, kNodeFeatureDim), options);
      return dice_loss(fwd.alpha.values(), target);
    };
    const auto fwd = mfn_forward(mg, params, options);
    const auto d = dice_loss_with_gradient(fwd.alpha.values(), target);
    const auto analytic = mfn_backward(mg, params, fwd, d.gradient);
    const auto numeric = finite_difference_gradient(loss, params.flatten());
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return {"mfn reverse gradient vs finite differences (5 graphs, rel)", 1e-4, worst, worst < 1e-4};
}

CheckResult gnn_gradient(Rng& rng) {
  double worst = 0.0;
  for (int trial = 0; trial < 5; ++trial) {
    const GraphInstance g = random_micro_graph(rng, 20);
    const PreparedGraph pg(g);
    const DiceTarget target = dice_target(pg.support(), *g.adjacency_ref);
    GnnParams params = init_gnn(kNodeFeatureDim, 8, rng.next());
    const auto loss = [&](std::span<const double> w) {
      GnnParams local = params;
      local.assign(w);
      return dice_loss(gnn_forward(pg, local, GnnMode::eval, nullptr).alpha.values(), target);
    };
    const auto fwd = gnn_forward(pg, params, GnnMode::eval, nullptr);
    const auto d = dice_loss_with_gradient(fwd.alpha.values(), target);
    const auto analytic = gnn_backward(pg, params, fwd, d.gradient);
    const auto numeric = finite_difference_gradient(loss, params.flatten());
    worst = std::max(worst, relative_error(analytic, numeric));
  }
  return {"gnn reverse gradient vs finite differences (5 graphs, rel)", 1e-4, worst, worst < 1e-4};
}

CheckResult metric_identities(Rng& rng) {
  double worst = 0.0;
  CenterlinePointSet seg;
  seg.points = {{0.0, 0.0, 0.0}};
  seg.radius = {1.0};
  CenterlinePointSet ref;
  ref.points = {{0.0, 0.0, 1.0}, {0.0, 0.0, 3.0}};
  ref.radius = {1.0, 1.0};
  const auto ce = centerline_error(seg, ref);
  worst = std::max({std::abs(ce->d_fp - 1.0), std::abs(ce->d_fn - 2.0), std::abs(ce->d_err - 1.5)});

  for (int trial = 0; trial < 5; ++trial) {
    const GraphInstance g = random_micro_graph(rng, 20);
    if (g.adjacency_ref->edge_count() == 0) continue;
    const MetricReport r = evaluate(g, *g.adjacency_ref);
    worst = std::max({worst, std::abs(r.dice_pct - 100.0), std::abs(*r.d_err), std::abs(*r.tl_pct - 100.0),
                      std::abs(*r.fpr_pct)});
    const MetricReport empty = evaluate(g, Adjacency(g.node_count()));
    worst = std::max(worst, std::abs(empty.dice_pct));
  }
  return {"metric identities (worked example, prediction == reference)", 1e-12, worst, worst <= 1e-12};
}

}  // namespace

GraphInstance random_micro_graph(Rng& rng, std::size_t max_pairs) {
  const std::size_t max_nodes = std::min<std::size_t>(6, max_pairs / 2 + 1);
  const std::size_t n = 2 + static_cast<std::size_t>(rng.below(max_nodes - 1));
  GraphInstance g;
  g.id = "micro";
  for (std::size_t i = 0; i < n; ++i) g.nodes.push_back(random_feature(rng));
  std::vector<Edge> all;
  for (std::size_t i = 0; i < n; ++i) {
    for (std::size_t j = i + 1; j < n; ++j) all.push_back({static_cast<int>(i), static_cast<int>(j)});
  }
  rng.shuffle(all);
  const std::size_t cap = std::min(all.size(), max_pairs / 2);
  const std::size_t m = 1 + static_cast<std::size_t>(rng.below(cap));
  all.resize(m);
  g.adjacency_in = Adjacency::from_edges(n, all);
  Adjacency ref(n);
  for (const Edge& e : all) {
    if (rng.bernoulli(0.5)) ref.add_edge(e.i, e.j);
  }
  g.adjacency_ref = std::move(ref);
  return g;
}

MfnParams random_mfn_params(Rng& rng, std::size_t feature_dim, double scale) {
  std::vector<double> flat(mfn_param_count(feature_dim));
  for (double& w : flat) w = rng.uniform(-scale, scale);
  return MfnParams::unflatten(flat, feature_dim);
}

ConnectivityMatrix random_alpha(Rng& rng, const DirectedSupport& support, double lo, double hi) {
  std::vector<double> values(support.pair_count());
  for (double& a : values) a = rng.uniform(lo, hi);
  return ConnectivityMatrix(std::make_shared<const DirectedSupport>(support), std::move(values));
}

std::vector<CheckResult> run_selfcheck(const SelfcheckOptions& options) {
  Rng rng(options.seed);
  std::vector<CheckResult> out;
  out.push_back(elbo_vs_enumeration(rng));
  out.push_back(stationarity(rng, options.corrupt_gamma_sign));
  out.push_back(mfn_gradient(rng));
  out.push_back(gnn_gradient(rng));
  out.push_back(metric_identities(rng));
  return out;
}

void print_checks(std::ostream& out, const std::vector<CheckResult>& checks) {
  for (const auto& c : checks) {
    char buf[256];
    std::snprintf(buf, sizeof buf, "%s  %-62s tol=%.1e measured=%.3e", c.passed ? "PASS" : "FAIL",
                  c.name.c_str(), c.tolerance, c.measured);
    out << buf << '\n';
  }
}

}  // namespace graphrefine
