#include <doctest.h>

#include <cmath>

#include "fixtures.hpp"
#include "graphrefine/error.hpp"
#include "graphrefine/gradcheck.hpp"
#include "graphrefine/loss.hpp"
#include "graphrefine/mfn.hpp"
#include "graphrefine/mfn_oracle.hpp"
#include "graphrefine/selfcheck.hpp"
#include "graphrefine/synth.hpp"

using namespace graphrefine;
using graphrefine::testing::edges_of;
using graphrefine::testing::node_at;

namespace {

MfnParams sample_params(std::uint64_t seed, double scale = 1.0) {
  Rng rng(seed);
  return random_mfn_params(rng, kNodeFeatureDim, scale);
}

GraphInstance two_nodes() {
  GraphInstance g;
  g.id = "pair";
  g.nodes = {node_at(0, 0, 0, 1.0), node_at(2, 1, 0, 1.5)};
  g.nodes[1].mu[4] = 0.0;
  g.nodes[1].mu[5] = 1.0;
  g.nodes[1].var[0] = 0.3;
  g.adjacency_in = edges_of(2, {{0, 1}});
  return g;
}

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

}  // namespace

TEST_SUITE("mfn") {

TEST_CASE("parameter count") {
  CHECK(mfn_param_count(14) == 46);
  CHECK(mfn_param_count(1) == 7);
  CHECK_THROWS_AS(mfn_param_count(0), ParameterError);
  CHECK(MfnParams::zeros(14).flatten().size() == 46);
}

TEST_CASE("flatten round trip") {
  const MfnParams p = sample_params(4);
  const auto flat = p.flatten();
  CHECK(flat[0] == p.lambda);
  CHECK(flat[3] == p.beta[2]);
  CHECK(flat[4] == p.a[0]);
  CHECK(flat[4 + 14] == p.eta[0]);
  CHECK(flat[4 + 28] == p.nu[0]);
  CHECK(MfnParams::unflatten(flat, 14) == p);
}

TEST_CASE("node potential") {
  MfnParams p = MfnParams::zeros(3);
  p.beta = {0.5, -1.0, 2.0};
  p.a = {1.0, 2.0, -1.0};
  const std::vector<double> x{0.5, 0.5, 1.0};
  const double ax = 0.5;
  const bool none[] = {false, false, false};
  const bool two[] = {true, false, true};
  const bool five[] = {true, true, true, true, true};
  CHECK(node_potential(none, x, p) == 0.5);
  CHECK(node_potential(two, x, p) == doctest::Approx(2.0 + 2 * ax));
  CHECK(node_potential(five, x, p) == doctest::Approx(5 * ax));
}

TEST_CASE("pairwise potential") {
  MfnParams p = MfnParams::zeros(2);
  p.lambda = 0.7;
  p.eta = {1.0, -2.0};
  p.nu = {0.5, 0.5};
  PairwiseFeature f{{0.2, 0.1}, {1.0, -3.0}};
  const double data = 0.2 - 0.2 + 0.5 - 1.5;
  CHECK(pairwise_potential(true, true, f, p) == doctest::Approx(0.7 + data));
  CHECK(pairwise_potential(true, false, f, p) == doctest::Approx(-0.7 - data));
  CHECK(pairwise_potential(false, false, f, p) == doctest::Approx(0.7 - data));
  const MfnParams zero = MfnParams::zeros(2);
  for (bool a : {false, true}) {
    for (bool b : {false, true}) CHECK(pairwise_potential(a, b, f, zero) == 0.0);
  }
}

TEST_CASE("gamma with a single neighbour") {
  const GraphInstance g = two_nodes();
  const MfnGraph mg{PreparedGraph(g)};
  const auto support = mg.graph().support_ptr();
  const ConnectivityMatrix alpha(support, {0.3, 0.8});

  CHECK(gamma(0, 1, alpha, mg, MfnParams::zeros(14)) == 0.0);

  const MfnParams p = sample_params(9);
  double ax = 0.0;
  for (std::size_t d = 0; d < 14; ++d) ax += p.a[d] * mg.graph().features().row(0)[d];
  double data = 0.0;
  for (std::size_t d = 0; d < 14; ++d) {
    data += p.eta[d] * mg.absdiff(0)[d] + p.nu[d] * mg.prod(0)[d];
  }
  const double a_lk = 0.8;
  const double expected =
      (p.beta[1] - p.beta[0]) + ax + (4 * a_lk - 2) * p.lambda + 2 * a_lk * data;
  CHECK(gamma(0, 1, alpha, mg, p) == doctest::Approx(expected).epsilon(1e-12));
}

TEST_CASE("gamma outside the support") {
  const GraphInstance g = graphrefine::testing::path_graph(3);
  const MfnGraph mg{PreparedGraph(g)};
  const ConnectivityMatrix alpha(mg.graph().support_ptr(), 0.5);
  const MfnParams p = MfnParams::zeros(14);
  CHECK_THROWS_AS(gamma(1, 1, alpha, mg, p), SupportError);
  CHECK_THROWS_AS(gamma(0, 2, alpha, mg, p), SupportError);
}

TEST_CASE("all_gammas agrees with gamma") {
  Rng rng(21);
  for (int trial = 0; trial < 10; ++trial) {
    const MfnGraph mg{PreparedGraph(random_micro_graph(rng, 20))};
    const auto alpha = random_alpha(rng, mg.support());
    const MfnParams p = random_mfn_params(rng, 14);
    const auto all = all_gammas(mg, p, alpha.values());
    const auto& s = mg.support();
    for (std::size_t q = 0; q < s.pair_count(); ++q) {
      CHECK(all[q] == doctest::Approx(gamma(s.source(q), s.target(q), alpha, mg, p))
                          .epsilon(1e-12));
    }
  }
}

TEST_CASE("closed-form ELBO matches enumeration") {
  Rng rng(1);
  for (int trial = 0; trial < 100; ++trial) {
    const MfnGraph mg{PreparedGraph(random_micro_graph(rng, 10))};
    const auto alpha = random_alpha(rng, mg.support(), 0.0, 1.0);
    const MfnParams p = random_mfn_params(rng, 14);
    CHECK(std::abs(elbo(alpha, mg, p) - brute_force_elbo(alpha, mg, p)) < 1e-9);
  }
}

TEST_CASE("ELBO of the uniform configuration is pure entropy") {
  const MfnGraph mg{PreparedGraph(graphrefine::testing::star_graph(4))};
  const ConnectivityMatrix half(mg.graph().support_ptr(), 0.5);
  const double expected = static_cast<double>(mg.support().pair_count()) * std::log(2.0);
  CHECK(elbo(half, mg, MfnParams::zeros(14)) == doctest::Approx(expected).epsilon(1e-14));
  CHECK(brute_force_elbo(half, mg, MfnParams::zeros(14)) ==
        doctest::Approx(expected).epsilon(1e-14));
}

TEST_CASE("enumeration oracle boundary cases") {
  const GraphInstance g = two_nodes();
  const MfnGraph mg{PreparedGraph(g)};
  const MfnParams p = sample_params(2);
  const ConnectivityMatrix ones(mg.graph().support_ptr(), 1.0);
  // Both pairs on: no entropy, both nodes at degree one.
  const bool cfg[] = {true};
  const auto& f = mg.graph().features();
  const double node = node_potential(cfg, f.row(0), p) + node_potential(cfg, f.row(1), p);
  const double pair = pairwise_potential(true, true, pairwise_feature(f, 0, 1), p);
  CHECK(brute_force_elbo(ones, mg, p) == doctest::Approx(node + pair).epsilon(1e-12));

  // 7-node complete graph has 42 directed pairs.
  GraphInstance big;
  for (int i = 0; i < 7; ++i) big.nodes.push_back(node_at(i, i * i, 0));
  big.adjacency_in = Adjacency(7);
  for (int i = 0; i < 7; ++i) {
    for (int j = i + 1; j < 7; ++j) big.adjacency_in.add_edge(i, j);
  }
  const MfnGraph mbig{PreparedGraph(big)};
  const ConnectivityMatrix half(mbig.graph().support_ptr(), 0.5);
  CHECK_THROWS_AS(brute_force_elbo(half, mbig, p), CapacityError);
}

TEST_CASE("gamma is the stationary point of the ELBO") {
  Rng rng(7);
  const double h = 1e-5;
  for (int trial = 0; trial < 50; ++trial) {
    const MfnGraph mg{PreparedGraph(random_micro_graph(rng, 10))};
    auto alpha = random_alpha(rng, mg.support());
    const MfnParams p = random_mfn_params(rng, 14);
    for (std::size_t q = 0; q < mg.support().pair_count(); ++q) {
      const double a0 = alpha.values()[q];
      alpha.values()[q] = a0 + h;
      const double up = brute_force_elbo(alpha, mg, p);
      alpha.values()[q] = a0 - h;
      const double down = brute_force_elbo(alpha, mg, p);
      alpha.values()[q] = a0;
      const double fd = (up - down) / (2 * h);
      const double g = gamma(mg.support().source(q), mg.support().target(q), alpha, mg, p);
      CHECK(std::abs(g - (fd + std::log(a0 / (1 - a0)))) < 1e-5);
    }
  }
}

TEST_CASE("forward with zero parameters stays at one half") {
  const MfnGraph mg{PreparedGraph(graphrefine::testing::star_graph(5))};
  const auto r = mfn_forward(mg, MfnParams::zeros(14), {.layers = 4});
  REQUIRE(r.layers.size() == 5);
  REQUIRE(r.trace.values.size() == 5);
  for (const auto& layer : r.layers) {
    for (double a : layer) CHECK(a == 0.5);
  }
}

TEST_CASE("one layer on two nodes") {
  const MfnGraph mg{PreparedGraph(two_nodes())};
  const MfnParams p = sample_params(31, 0.5);
  const auto r = mfn_forward(mg, p, {.layers = 1});
  const ConnectivityMatrix half(mg.graph().support_ptr(), 0.5);
  CHECK(r.alpha(0, 1) == doctest::Approx(sigmoid(gamma(0, 1, half, mg, p))).epsilon(1e-14));
  CHECK(r.alpha(1, 0) == doctest::Approx(sigmoid(gamma(1, 0, half, mg, p))).epsilon(1e-14));
}

TEST_CASE("fifty layers reach a fixed point") {
  TreeSpec spec;
  spec.generations = 2;
  spec.node_spacing = 7.0;
  spec.clutter_rate = 0.1;
  spec.seed = 5;
  GraphInstance g = generate_tree(spec);
  CHECK(g.node_count() >= 18);
  CHECK(g.node_count() <= 24);
  const MfnGraph mg{PreparedGraph(g)};
  const MfnParams p = sample_params(3, 0.1);
  const auto r = mfn_forward(mg, p, {.layers = 50});
  const auto gam = all_gammas(mg, p, r.alpha.values());
  double worst = 0.0;
  for (std::size_t q = 0; q < gam.size(); ++q) {
    worst = std::max(worst, std::abs(r.alpha.values()[q] - sigmoid(gam[q])));
  }
  CHECK(worst < 1e-6);
}

TEST_CASE("forward is deterministic and honours alpha_init") {
  Rng rng(8);
  const MfnGraph mg{PreparedGraph(random_micro_graph(rng, 20))};
  const MfnParams p = random_mfn_params(rng, 14);
  const auto a = mfn_forward(mg, p);
  const auto b = mfn_forward(mg, p);
  CHECK(a.layers == b.layers);
  CHECK(a.trace.values == b.trace.values);

  const auto init = random_alpha(rng, mg.support());
  const auto c = mfn_forward(mg, p, {.layers = 1}, init);
  CHECK(std::equal(c.layers[0].begin(), c.layers[0].end(), init.values().begin()));

  const auto wrong = ConnectivityMatrix(
      std::make_shared<const DirectedSupport>(edges_of(2, {{0, 1}})), 0.5);
  if (mg.support().pair_count() != 2) {
    CHECK_THROWS_AS(mfn_forward(mg, p, {.layers = 1}, wrong), SupportError);
  }
  CHECK_THROWS_AS(mfn_forward(mg, p, {.layers = 0}), ParameterError);
}

TEST_CASE("sequential updates never decrease the ELBO") {
  Rng rng(12);
  for (int trial = 0; trial < 20; ++trial) {
    const MfnGraph mg{PreparedGraph(random_micro_graph(rng, 20))};
    const MfnParams p = random_mfn_params(rng, 14);
    const auto r = mfn_forward(mg, p, {.layers = 8, .schedule = MfnSchedule::sequential});
    for (std::size_t t = 1; t < r.trace.values.size(); ++t) {
      CHECK(r.trace.values[t] >= r.trace.values[t - 1] - 1e-12);
    }
  }
}

TEST_CASE("backward matches finite differences of the Dice loss") {
  Rng rng(40);
  for (int trial = 0; trial < 5; ++trial) {
    GraphInstance g = random_micro_graph(rng, 20);
    const MfnGraph mg{PreparedGraph(g)};
    const DiceTarget target = dice_target(mg.support(), *g.adjacency_ref);
    const MfnParams p = random_mfn_params(rng, 14, 0.5);
    const MfnOptions opt{.layers = 5, .record_elbo = false};

    const auto fwd = mfn_forward(mg, p, opt);
    const auto d = dice_loss_with_gradient(fwd.alpha.values(), target);
    const auto analytic = mfn_backward(mg, p, fwd, d.gradient);

    const auto loss = [&](std::span<const double> w) {
      return dice_loss(mfn_forward(mg, MfnParams::unflatten(w, 14), opt).alpha.values(), target);
    };
    const auto numeric = finite_difference_gradient(loss, p.flatten(), 1e-5);
    CHECK(relative_error(analytic, numeric) < 1e-4);
  }
}

}  // TEST_SUITE
