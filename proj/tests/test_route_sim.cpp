#include <algorithm>
#include <cmath>
#include <set>

#include "doctest.h"
#include "metiskit/route_sim.hpp"

using namespace metiskit;

namespace {

Topology undirected(int n_nodes, const std::vector<std::array<int, 2>>& edges,
                    double capacity = 10.0) {
  Topology topo;
  topo.n_nodes = n_nodes;
  for (const auto& e : edges) {
    topo.links.push_back({e[0], e[1], capacity, 0.0});
    topo.links.push_back({e[1], e[0], capacity, 0.0});
  }
  return topo;
}

// Three disjoint two-hop paths from 0 to 4 with distinct capacities.
Topology three_path_topology() {
  Topology topo = undirected(5, {{0, 1}, {1, 4}, {0, 2}, {2, 4}, {0, 3}, {3, 4}});
  topo.links[0].capacity_mbps = topo.links[1].capacity_mbps = 20.0;  // 0-1
  topo.links[2].capacity_mbps = topo.links[3].capacity_mbps = 20.0;  // 1-4
  topo.links[4].capacity_mbps = topo.links[5].capacity_mbps = 16.0;  // 0-2
  topo.links[6].capacity_mbps = topo.links[7].capacity_mbps = 16.0;  // 2-4
  topo.links[8].capacity_mbps = topo.links[9].capacity_mbps = 12.0;   // 0-3
  topo.links[10].capacity_mbps = topo.links[11].capacity_mbps = 12.0;  // 3-4
  topo.demands = {{0, 4, 5.0}};
  return topo;
}

}  // namespace

TEST_SUITE("route-sim") {

TEST_CASE("candidate enumeration on a line keeps the single path") {
  Topology line = undirected(4, {{0, 1}, {1, 2}, {2, 3}});
  CandidateSet set = candidate_paths(line, 0, 3);
  REQUIRE(set.node_paths.size() == 1);
  CHECK(set.node_paths[0] == std::vector<int>{0, 1, 2, 3});
}

TEST_CASE("candidate enumeration on a cycle finds both two-hop paths") {
  Topology cycle = undirected(4, {{0, 1}, {1, 2}, {2, 3}, {3, 0}});
  CandidateSet set = candidate_paths(cycle, 0, 2);
  REQUIRE(set.node_paths.size() == 2);
  CHECK(set.node_paths[0] == std::vector<int>{0, 1, 2});
  CHECK(set.node_paths[1] == std::vector<int>{0, 3, 2});
}

TEST_CASE("candidate enumeration matches a brute-force enumerator on nsfnet") {
  Topology topo = Topology::nsfnet();
  CandidateSet set = candidate_paths(topo, 0, 12);

  // Oracle: unbounded DFS over all simple paths, filtered by min+1 hops.
  std::vector<std::vector<int>> all;
  std::vector<int> stack{0};
  std::vector<bool> visited(static_cast<std::size_t>(topo.n_nodes), false);
  visited[0] = true;
  auto adj = topo.out_adjacency();
  auto dfs = [&](auto&& self, int node) -> void {
    if (node == 12) {
      all.push_back(stack);
      return;
    }
    if (stack.size() > 8) return;  // depth guard far above the bound
    for (const auto& [next, link] : adj[static_cast<std::size_t>(node)]) {
      if (visited[static_cast<std::size_t>(next)]) continue;
      visited[static_cast<std::size_t>(next)] = true;
      stack.push_back(next);
      self(self, next);
      stack.pop_back();
      visited[static_cast<std::size_t>(next)] = false;
    }
  };
  dfs(dfs, 0);
  std::size_t shortest = 1e9;
  for (const auto& p : all) shortest = std::min(shortest, p.size() - 1);
  std::vector<std::vector<int>> expected;
  for (const auto& p : all) {
    if (p.size() - 1 <= shortest + 1) expected.push_back(p);
  }
  std::sort(expected.begin(), expected.end());

  REQUIRE(set.node_paths.size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(set.node_paths[i] == expected[i]);
  }
  // The shortest path is always included, nothing exceeds min+1 hops.
  bool has_shortest = false;
  for (const auto& p : set.node_paths) {
    CHECK(p.size() - 1 <= shortest + 1);
    has_shortest = has_shortest || p.size() - 1 == shortest;
  }
  CHECK(has_shortest);
}

TEST_CASE("candidate enumeration rejects bad endpoints") {
  Topology topo = undirected(4, {{0, 1}, {1, 2}, {2, 3}});
  CHECK_THROWS_AS(candidate_paths(topo, 0, 0), DomainError);
  Topology split = undirected(4, {{0, 1}, {2, 3}});
  CHECK_THROWS_AS(candidate_paths(split, 0, 3), ValidationError);
}

TEST_CASE("link latency closed forms, knee continuity and monotonicity") {
  CHECK(link_latency(10.0, 0.0) == doctest::Approx(0.1));
  CHECK(link_latency(10.0, 5.0) == doctest::Approx(0.2));
  CHECK_THROWS_AS(link_latency(0.0, 1.0), DomainError);
  CHECK_THROWS_AS(link_latency(10.0, -1.0), DomainError);

  // Continuous at the 95% knee.
  const double knee = 9.5;
  CHECK(link_latency(10.0, knee - 1e-9) ==
        doctest::Approx(link_latency(10.0, knee + 1e-9)).epsilon(1e-6));

  // Strictly increasing in load, including across the knee.
  double previous = link_latency(10.0, 0.0);
  for (double load = 0.5; load < 15.0; load += 0.5) {
    const double current = link_latency(10.0, load);
    CHECK(current > previous);
    previous = current;
  }
}

TEST_CASE("path latency accumulates loads induced by all demands") {
  // Five-node chain with three demands stacking load on shared links.
  Topology topo = undirected(5, {{0, 1}, {1, 2}, {2, 3}, {3, 4}});
  topo.demands = {{0, 2, 2.0}, {1, 2, 3.0}, {0, 1, 1.0}};
  const int l01 = topo.link_index(0, 1);
  const int l12 = topo.link_index(1, 2);
  const std::vector<LinkPath> routes = {
      {l01, l12}, {l12}, {l01}};
  const std::vector<double> loads = induced_loads(topo, routes);

  // Hand accounting: link 0->1 carries 2 + 1 = 3, link 1->2 carries 2 + 3 = 5.
  CHECK(loads[static_cast<std::size_t>(l01)] == doctest::Approx(3.0));
  CHECK(loads[static_cast<std::size_t>(l12)] == doctest::Approx(5.0));

  const double expected =
      1.0 / (10.0 - 3.0) + 1.0 / (10.0 - 5.0);
  CHECK(path_latency(topo, {l01, l12}, loads) == doctest::Approx(expected));
}

TEST_CASE("path choice model reproduces a closed-form softmax") {
  Topology topo = three_path_topology();
  const std::vector<double> theta = {1.0, 0.5, 0.25, 0.2};
  PathChoiceOptions options;
  PathChoiceModel model(topo, theta, options);

  REQUIRE(model.candidates(0).link_paths.size() == 3);

  // Hand evaluation. Capacity scale 20, mean capacity 16, demand scale 5.
  // The only demand's own reference volume is excluded from its utilization
  // feature, so every link looks unloaded here.
  const double cap_scale = 20.0;
  const double cap_mean = 16.0;
  const double vol = 5.0;
  auto link_cap = [&](int u, int v) {
    return topo.links[static_cast<std::size_t>(topo.link_index(u, v))].capacity_mbps;
  };
  auto path_score = [&](const std::vector<std::pair<int, int>>& hops) {
    double score = 0.0;
    for (std::size_t i = 0; i < hops.size(); ++i) {
      const double cap = link_cap(hops[i].first, hops[i].second);
      score += theta[0] * (cap - cap_mean) / cap_scale +
               theta[1] * (cap - cap_mean) / cap_scale + theta[2] * vol / 5.0 +
               theta[3] * (i == 0 ? 1.0 : 0.0);
    }
    return score - 0.3 * static_cast<double>(hops.size());
  };
  const double s0 = path_score({{0, 1}, {1, 4}});
  const double s1 = path_score({{0, 2}, {2, 4}});
  const double s2 = path_score({{0, 3}, {3, 4}});
  const double z = std::exp(s0) + std::exp(s1) + std::exp(s2);

  const ModelOutput y =
      model.evaluate(model.hypergraph(), model.hypergraph().incidence_matrix);
  REQUIRE(y.values.size() == 3);
  CHECK(y.values[0] == doctest::Approx(std::exp(s0) / z).epsilon(1e-12));
  CHECK(y.values[1] == doctest::Approx(std::exp(s1) / z).epsilon(1e-12));
  CHECK(y.values[2] == doctest::Approx(std::exp(s2) / z).epsilon(1e-12));

  double row_sum = 0.0;
  for (double p : y.values) row_sum += p;
  CHECK(row_sum == doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("identity mask reproduces the baseline routing") {
  Topology topo = Topology::nsfnet();
  topo.demands = random_demands(topo, 8, 5);
  const std::vector<double> theta = {1.0, 0.5, 0.1, 0.2};
  PathChoiceModel model(topo, theta);

  auto decision = routing_decisions(model, model.hypergraph().incidence_matrix);
  for (std::size_t e = 0; e < topo.demands.size(); ++e) {
    CHECK(model.candidates(e).link_paths[static_cast<std::size_t>(
              decision.chosen[e])] == model.chosen_routes()[e]);
  }
  // Divergence against itself is exactly zero.
  MaskObjective objective(model, model.hypergraph(), 0.25, 1.0);
  CHECK(objective.evaluate(model.hypergraph().incidence_matrix).divergence ==
        doctest::Approx(0.0));
}

TEST_CASE("zeroing a demand's connections shifts its distribution") {
  Topology topo = three_path_topology();
  const std::vector<double> theta = {1.5, 0.5, 0.0, 0.0};
  PathChoiceModel model(topo, theta);

  Matrix w = model.hypergraph().incidence_matrix;
  for (std::size_t v = 0; v < w.cols(); ++v) w(0, v) = 0.0;

  const ModelOutput masked = model.evaluate(model.hypergraph(), w);
  const ModelOutput baseline = model.evaluate(
      model.hypergraph(), model.hypergraph().incidence_matrix);
  CHECK(divergence(masked, baseline) > 0.0);

  // Mass moves away from the previously chosen path.
  const int chosen = model.decisions(model.hypergraph().incidence_matrix).chosen[0];
  CHECK(masked.values[static_cast<std::size_t>(chosen)] <
        baseline.values[static_cast<std::size_t>(chosen)]);
}

TEST_CASE("mask sums exactly proportional to loads give r = 1") {
  Topology topo = three_path_topology();
  const std::vector<double> theta = {1.0, 0.5, 0.0, 0.0};
  PathChoiceModel model(topo, theta);

  Mask mask;
  mask.incidence = model.hypergraph().incidence_matrix;
  mask.w = Matrix(mask.incidence.rows(), mask.incidence.cols(), 0.0);
  const std::vector<double> loads = induced_loads(topo, model.chosen_routes());
  for (std::size_t v = 0; v < mask.incidence.cols(); ++v) {
    if (mask.incidence(0, v) != 0.0) mask.w(0, v) = 0.1 * loads[v];
  }
  CHECK(mask_traffic_correlation(mask, topo, model.chosen_routes()) ==
        doctest::Approx(1.0).epsilon(1e-9));
}

TEST_CASE("degenerate correlation input is an error") {
  Topology topo;
  topo.n_nodes = 2;
  topo.links = {{0, 1, 10.0, 0.0}};
  topo.demands = {{0, 1, 2.0}};
  Mask mask;
  mask.incidence = Matrix(1, 1, 1.0);
  mask.w = Matrix(1, 1, 0.5);
  CHECK_THROWS_AS(mask_traffic_correlation(mask, topo, {{0}}), DomainError);
}

TEST_CASE("symmetric alternatives produce only zero reroute points") {
  // Baseline 0->1->2 with mirror-image detours 0->3->1->2 and 0->1->4->2:
  // the instance maps onto itself under the path reversal 0<->2, 3<->4.
  Topology topo = undirected(5, {{0, 1}, {1, 2}, {0, 3}, {3, 1}, {1, 4}, {4, 2}});
  topo.demands = {{0, 2, 4.0}};
  // Per-link score mass below the length penalty keeps the short path chosen.
  const std::vector<double> theta = {0.15, 0.1, 0.0, 0.0};
  PathChoiceModel model(topo, theta);
  REQUIRE(model.candidates(0).link_paths.size() == 3);
  REQUIRE(model.chosen_routes()[0].size() == 2);

  OptimizeConfig config;
  config.steps = 300;
  Mask mask = optimize(model, model.hypergraph(), config);

  RerouteReport report = reroute_indicator_eval(model, mask, 1);
  REQUIRE(!report.points.empty());
  CHECK(report.nonzero_points == 0);
  for (const ReroutePoint& p : report.points) {
    CHECK(std::abs(p.mask_gap) <= 1e-9);
  }
}

TEST_CASE("too few triples raise insufficient-data") {
  Topology topo = undirected(4, {{0, 1}, {1, 3}, {0, 2}, {2, 3}, {0, 3}});
  topo.demands = {{0, 3, 4.0}};
  const std::vector<double> theta = {1.0, 0.5, 0.0, 0.0};
  PathChoiceModel model(topo, theta);
  OptimizeConfig config;
  config.steps = 10;
  Mask mask = optimize(model, model.hypergraph(), config);
  CHECK_THROWS_AS(reroute_indicator_eval(model, mask, 10),
                  InsufficientDataError);
}

TEST_CASE("a congested detour lands in quadrant I") {
  // Baseline 0->1->2->3; alternative p1 diverts at node 0 through the
  // congested 0-4 corridor; alternative p2 diverts at node 1 over a clean
  // detour. p1 must be slower and its divergence-link mask must stay higher.
  Topology topo = undirected(6, {{0, 1},
                                 {1, 2},
                                 {2, 3},
                                 {0, 4},
                                 {4, 2},
                                 {1, 5},
                                 {5, 3}});
  const int congested = topo.link_index(0, 4);
  topo.links[static_cast<std::size_t>(congested)].load_mbps = 9.0;
  topo.links[static_cast<std::size_t>(congested)].capacity_mbps = 10.0;
  topo.demands = {{0, 3, 1.0}};

  std::vector<double> theta = fit_theta(topo, 3, 4, 2, 300, 0.5);
  PathChoiceModel model(topo, theta);

  OptimizeConfig config;
  // A conciseness weight between the two flip costs separates the masks.
  config.lambda1 = 1.0;
  Mask mask = optimize(model, model.hypergraph(), config);
  RerouteReport report = reroute_indicator_eval(model, mask, 1);

  // The demand has exactly the two alternatives above.
  REQUIRE(report.points.size() == 1);
  const ReroutePoint& p = report.points[0];
  CHECK(p.latency_gap > 0.0);
  CHECK(p.mask_gap > 0.0);
}

}  // TEST_SUITE
