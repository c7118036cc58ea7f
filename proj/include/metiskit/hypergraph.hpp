#pragma once

#include <string>
#include <utility>
#include <vector>

#include "json.hpp"
#include "metiskit/matrix.hpp"

namespace metiskit {

// Vertices with features F_V, hyperedges with features F_E, and the 0-1
// incidence matrix I of shape |E| x |V|.
struct Hypergraph {
  std::vector<std::string> vertex_names;
  std::vector<std::string> edge_names;
  std::vector<std::vector<double>> vertex_features;  // F_V, one row per vertex
  std::vector<std::vector<double>> edge_features;    // F_E, one row per edge
  Matrix incidence_matrix;                           // |E| x |V|

  std::size_t n_vertices() const { return vertex_names.size(); }
  std::size_t n_edges() const { return edge_names.size(); }
  // Vertices covered by hyperedge e, ascending.
  std::vector<int> covered_vertices(std::size_t e) const;

  void validate() const;
  nlohmann::json to_json() const;
  static Hypergraph from_json(const nlohmann::json& j);
};

// Copy accessor for I.
Matrix incidence(const Hypergraph& hg);

struct Link {
  int from = 0;
  int to = 0;
  double capacity_mbps = 0.0;
  double load_mbps = 0.0;
};

struct Demand {
  int src = 0;
  int dst = 0;
  double volume_mbps = 0.0;
};

// Directed graph with per-link capacity/load and a demand list. Undirected
// link inputs expand into the two directed links.
struct Topology {
  int n_nodes = 0;
  std::vector<Link> links;
  std::vector<Demand> demands;

  void validate() const;
  int link_index(int from, int to) const;  // -1 when absent
  // Adjacency: per node, (neighbor, link id) ascending by neighbor.
  std::vector<std::vector<std::pair<int, int>>> out_adjacency() const;

  nlohmann::json to_json() const;
  static Topology from_json(const nlohmann::json& j);
  // Bundled 14-node reference backbone.
  static Topology nsfnet();
};

// A path is the sequence of traversed link ids.
using LinkPath = std::vector<int>;

// One hyperedge per demand; I_ev = 1 iff route e traverses link v.
// F_V holds link capacities, F_E demand volumes.
Hypergraph build_routing_hypergraph(const Topology& topology,
                                    const std::vector<LinkPath>& routes);

struct BivariateSide {
  std::vector<std::string> names;
  std::vector<std::vector<double>> features;
};

// Generic bivariate mapping: requests become hyperedges, resources vertices,
// I_ev = 1 iff (request e, resource v) is assigned.
Hypergraph build_bivariate(const BivariateSide& resources,
                           const BivariateSide& requests,
                           const std::vector<std::pair<int, int>>& assignment);

}  // namespace metiskit
