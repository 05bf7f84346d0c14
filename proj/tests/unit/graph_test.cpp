#include <doctest.h>

#include <cmath>
#include <limits>

#include "fixtures.hpp"
#include "graphrefine/error.hpp"
#include "graphrefine/graph.hpp"
#include "graphrefine/rng.hpp"

using namespace graphrefine;
using graphrefine::testing::edges_of;
using graphrefine::testing::node_at;

TEST_SUITE("graph") {

TEST_CASE("adjacency rejects self loops, duplicates and bad indices") {
  const std::vector<Edge> self{{1, 1}};
  CHECK_THROWS_AS(Adjacency::from_edges(3, self), InputError);
  const std::vector<Edge> dup{{0, 1}, {1, 0}};
  CHECK_THROWS_AS(Adjacency::from_edges(3, dup), InputError);
  Adjacency a(2);
  CHECK_THROWS_AS(a.add_edge(0, 5), InputError);
  CHECK(a.add_edge(1, 0));
  CHECK_FALSE(a.add_edge(0, 1));
  CHECK(a.has_edge(0, 1));
  CHECK(a.has_edge(1, 0));
  REQUIRE(a.edges().size() == 1);
  CHECK(a.edges()[0] == Edge{0, 1});
}

TEST_CASE("knn on three collinear points") {
  const std::vector<Vec3> p{{0, 0, 0}, {0, 0, 1}, {0, 0, 3}};
  const Adjacency a = build_knn_adjacency(p, 1);
  CHECK(a.edge_count() == 2);
  CHECK(a.has_edge(0, 1));
  CHECK(a.has_edge(1, 2));
  CHECK_FALSE(a.has_edge(0, 2));
}

TEST_CASE("knn edge cases") {
  const std::vector<Vec3> two{{0, 0, 0}, {5, 5, 5}};
  CHECK(build_knn_adjacency(two, 1).edge_count() == 1);

  Rng rng(3);
  std::vector<Vec3> five;
  for (int i = 0; i < 5; ++i) five.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  CHECK(build_knn_adjacency(five, 4).edge_count() == 10);
  CHECK(build_knn_adjacency(five, 40).edge_count() == 10);

  CHECK_THROWS_AS(build_knn_adjacency(two, 0), ParameterError);
  const std::vector<Vec3> bad{{0, 0, 0}, {std::numeric_limits<double>::quiet_NaN(), 0, 0}};
  CHECK_THROWS_AS(build_knn_adjacency(bad, 1), InputError);
}

TEST_CASE("knn ties go to the lower index") {
  // Nodes 1 and 2 are equidistant from node 0.
  const std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {-1, 0, 0}, {0, 0, 10}};
  const Adjacency a = build_knn_adjacency(p, 1);
  CHECK(a.has_edge(0, 1));
}

TEST_CASE("knn output is symmetric, loop free, and may exceed k") {
  Rng rng(11);
  std::vector<Vec3> p;
  for (int i = 0; i < 60; ++i) {
    p.push_back({rng.uniform(-5, 5), rng.uniform(-5, 5), rng.uniform(-5, 5)});
  }
  const Adjacency a = build_knn_adjacency(p, 3);
  std::size_t max_degree = 0;
  for (int i = 0; i < 60; ++i) {
    CHECK_FALSE(a.has_edge(i, i));
    CHECK(a.degree(i) >= 3);
    for (int j : a.neighbors(i)) CHECK(a.has_edge(j, i));
    max_degree = std::max(max_degree, a.degree(i));
  }
  CHECK(max_degree > 3);
}

TEST_CASE("dimension normalization") {
  const std::vector<double> v{2, 4, 6};
  CHECK(normalize_dimension(v) == std::vector<double>{-1, 0, 1});
  const std::vector<double> c{5, 5, 5};
  CHECK(normalize_dimension(c) == std::vector<double>{0, 0, 0});
  const std::vector<double> unit{-1, 1};
  CHECK(normalize_dimension(unit) == unit);
  const auto once = normalize_dimension(std::vector<double>{3, -7, 0.5, 9});
  CHECK(normalize_dimension(once) == once);
}

TEST_CASE("normalize_features keeps raw geometry and rejects empty graphs") {
  GraphInstance g;
  g.nodes = {node_at(0, 0, 0, 1.0), node_at(4, 2, 0, 3.0)};
  g.adjacency_in = edges_of(2, {{0, 1}});
  const auto nf = normalize_features(g);
  CHECK(nf.dim == kNodeFeatureDim);
  CHECK(nf.raw_radius == std::vector<double>{1.0, 3.0});
  CHECK(nf.raw_position[1] == Vec3{4, 2, 0});
  CHECK(nf.row(0)[0] == -1.0);
  CHECK(nf.row(1)[0] == 1.0);
  CHECK(nf.row(0)[2] == 0.0);  // z is constant
  for (double v : nf.values) {
    CHECK(v >= -1.0);
    CHECK(v <= 1.0);
  }
  GraphInstance empty;
  CHECK_THROWS_AS(normalize_features(empty), InputError);
}

TEST_CASE("pairwise feature") {
  const std::vector<double> x{0.2, -0.4, 0.6, 0.1, 0.5, -0.5, 0.3};
  const std::vector<double> y{-0.2, 0.4, 0.1, 0.9, -0.5, 0.5, 0.0};

  SUBCASE("identical nodes") {
    const auto f = pairwise_feature(x, x, {1, 2, 3}, {1, 2, 3}, 1.0, 1.0);
    for (double v : f.absdiff) CHECK(v == 0.0);
    for (std::size_t d = 0; d < x.size(); ++d) CHECK(f.prod[d] == x[d] * x[d]);
  }
  SUBCASE("positional part is scaled by the radius sum") {
    const auto f = pairwise_feature(x, y, {2, 0, 0}, {0, 0, 0}, 1.0, 1.0);
    CHECK(f.absdiff[0] == 1.0);
    CHECK(f.absdiff[1] == 0.0);
    CHECK(f.absdiff[2] == 0.0);
    CHECK(f.absdiff[3] == doctest::Approx(0.8));
  }
  SUBCASE("symmetric in its arguments") {
    const auto a = pairwise_feature(x, y, {1, 5, 2}, {-3, 0, 2}, 0.7, 1.9);
    const auto b = pairwise_feature(y, x, {-3, 0, 2}, {1, 5, 2}, 1.9, 0.7);
    CHECK(a.absdiff == b.absdiff);
    CHECK(a.prod == b.prod);
  }
  SUBCASE("degenerate radius") {
    CHECK_THROWS_AS(pairwise_feature(x, y, {0, 0, 0}, {1, 0, 0}, 0.0, 0.0),
                    DegenerateRadiusError);
  }
}

TEST_CASE("directed support layout") {
  const Adjacency a = edges_of(4, {{0, 1}, {0, 2}, {2, 3}});
  const DirectedSupport s(a);
  CHECK(s.pair_count() == 6);
  CHECK(s.degree(0) == 2);
  CHECK(s.degree(1) == 1);
  for (std::size_t p = 0; p < s.pair_count(); ++p) {
    const std::size_t r = s.reverse(p);
    CHECK(s.source(r) == s.target(p));
    CHECK(s.target(r) == s.source(p));
    CHECK(s.reverse(r) == p);
  }
  CHECK(s.find(2, 3).has_value());
  CHECK_FALSE(s.find(1, 3).has_value());
  CHECK(s.to_adjacency() == a);
}

TEST_CASE("binarization") {
  const auto support = std::make_shared<const DirectedSupport>(edges_of(2, {{0, 1}}));
  // Pair order: (0,1), (1,0).
  CHECK(binarize_connectivity(ConnectivityMatrix(support, {0.9, 0.6})).has_edge(0, 1));
  CHECK(binarize_connectivity(ConnectivityMatrix(support, {0.9, 0.4})).edge_count() == 0);
  CHECK(binarize_connectivity(ConnectivityMatrix(support, 0.5)).edge_count() == 0);
  CHECK_THROWS_AS(ConnectivityMatrix(support, {0.2, 1.5}), InputError);

  const ConnectivityMatrix m(support, {0.7, 0.8});
  CHECK(m(0, 1) == 0.7);
  CHECK(m(1, 0) == 0.8);
  CHECK(m(0, 0) == 0.0);
}

TEST_CASE("binarization is symmetric for any alpha") {
  Rng rng(5);
  std::vector<Vec3> p;
  for (int i = 0; i < 30; ++i) p.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
  const auto support = std::make_shared<const DirectedSupport>(build_knn_adjacency(p, 4));
  std::vector<double> alpha(support->pair_count());
  for (double& a : alpha) a = rng.uniform();
  const auto refined = binarize_connectivity(ConnectivityMatrix(support, alpha));
  for (std::size_t q = 0; q < support->pair_count(); ++q) {
    const int k = support->source(q);
    const int l = support->target(q);
    const bool expected = alpha[q] > 0.5 && alpha[support->reverse(q)] > 0.5;
    CHECK(refined.has_edge(k, l) == expected);
    CHECK(refined.has_edge(l, k) == expected);
  }
}

TEST_CASE("minimum spanning tree") {
  const std::vector<Vec3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}};
  SUBCASE("triangle on a line") {
    const std::vector<Edge> c{{0, 1}, {1, 2}, {0, 2}};
    const auto r = minimum_spanning_tree(line, c);
    CHECK(r.tree == edges_of(3, {{0, 1}, {1, 2}}));
    CHECK_FALSE(r.disconnected);
  }
  SUBCASE("a tree is returned unchanged") {
    const std::vector<Edge> c{{0, 2}, {1, 2}};
    CHECK(minimum_spanning_tree(line, c).tree == edges_of(3, {{0, 2}, {1, 2}}));
  }
  SUBCASE("two disconnected pairs") {
    const std::vector<Vec3> p{{0, 0, 0}, {1, 0, 0}, {10, 0, 0}, {11, 0, 0}};
    const std::vector<Edge> c{{0, 1}, {2, 3}};
    const auto r = minimum_spanning_tree(p, c);
    CHECK(r.tree.edge_count() == 2);
    CHECK(r.components == 2);
    CHECK(r.disconnected);
  }
  SUBCASE("empty candidates") {
    const auto r = minimum_spanning_tree(line, std::vector<Edge>{});
    CHECK(r.tree.edge_count() == 0);
    CHECK(r.empty_candidates);
  }
}

TEST_CASE("spanning forest edge count and acyclicity on random graphs") {
  Rng rng(17);
  for (int trial = 0; trial < 10; ++trial) {
    std::vector<Vec3> p;
    for (int i = 0; i < 40; ++i) p.push_back({rng.uniform(), rng.uniform(), rng.uniform()});
    const Adjacency cand = build_knn_adjacency(p, 2);
    const auto edges = cand.edges();
    const auto r = minimum_spanning_tree(p, edges);
    const auto comps = connected_components(cand);
    CHECK(r.tree.edge_count() == r.spanned_nodes - r.components);
    CHECK(r.components == comps.count);
    // A forest with the same components as the candidates has no cycle.
    CHECK(connected_components(r.tree).count == comps.count);
  }
}

TEST_CASE("connected components") {
  CHECK(connected_components(graphrefine::testing::path_graph(6).adjacency_in).count == 1);
  CHECK(connected_components(Adjacency(7)).count == 7);
  const auto two = connected_components(
      edges_of(6, {{0, 1}, {1, 2}, {0, 2}, {3, 4}, {4, 5}, {3, 5}}));
  CHECK(two.count == 2);
  CHECK(two.labels == std::vector<int>{0, 0, 0, 1, 1, 1});
}

TEST_CASE("graph validation") {
  GraphInstance g = graphrefine::testing::path_graph(3);
  CHECK_NOTHROW(g.validate());
  g.nodes[1].mu[3] = 0.0;
  CHECK_THROWS_AS(g.validate(), InputError);
  g = graphrefine::testing::path_graph(3);
  g.nodes[0].var[2] = -1.0;
  CHECK_THROWS_AS(g.validate(), InputError);
  g = graphrefine::testing::path_graph(3);
  g.adjacency_ref = Adjacency(4);
  CHECK_THROWS_AS(g.validate(), InputError);
}

}  // TEST_SUITE
