#include "metiskit/hypergraph.hpp"

#include <algorithm>
#include <cmath>
#include <set>

namespace metiskit {

std::vector<int> Hypergraph::covered_vertices(std::size_t e) const {
  std::vector<int> covered;
  for (std::size_t v = 0; v < n_vertices(); ++v) {
    if (incidence_matrix(e, v) != 0.0) covered.push_back(static_cast<int>(v));
  }
  return covered;
}

void Hypergraph::validate() const {
  if (incidence_matrix.rows() != n_edges() ||
      incidence_matrix.cols() != n_vertices()) {
    throw ValidationError("hypergraph: incidence shape mismatch");
  }
  if (vertex_features.size() != n_vertices()) {
    throw ValidationError("hypergraph: vertex feature rows mismatch");
  }
  if (edge_features.size() != n_edges()) {
    throw ValidationError("hypergraph: edge feature rows mismatch");
  }
  for (const auto& row : vertex_features) {
    for (double v : row) {
      if (!std::isfinite(v)) throw ValidationError("hypergraph: non-finite F_V");
    }
  }
  for (const auto& row : edge_features) {
    for (double v : row) {
      if (!std::isfinite(v)) throw ValidationError("hypergraph: non-finite F_E");
    }
  }
  for (std::size_t e = 0; e < n_edges(); ++e) {
    double row_sum = 0.0;
    for (std::size_t v = 0; v < n_vertices(); ++v) {
      const double val = incidence_matrix(e, v);
      if (val != 0.0 && val != 1.0) {
        throw ValidationError("hypergraph: incidence entries must be 0 or 1");
      }
      row_sum += val;
    }
    if (row_sum < 1.0) {
      throw ValidationError("hypergraph: hyperedge `" + edge_names[e] +
                            "` covers no vertex");
    }
  }
}

nlohmann::json Hypergraph::to_json() const {
  nlohmann::json vertices = nlohmann::json::array();
  for (std::size_t v = 0; v < n_vertices(); ++v) {
    vertices.push_back({{"name", vertex_names[v]}, {"features", vertex_features[v]}});
  }
  nlohmann::json edges = nlohmann::json::array();
  for (std::size_t e = 0; e < n_edges(); ++e) {
    edges.push_back({{"name", edge_names[e]},
                     {"features", edge_features[e]},
                     {"covers", covered_vertices(e)}});
  }
  return nlohmann::json{{"vertices", vertices}, {"hyperedges", edges}};
}

Hypergraph Hypergraph::from_json(const nlohmann::json& j) {
  Hypergraph hg;
  for (const auto& jv : j.at("vertices")) {
    hg.vertex_names.push_back(jv.at("name").get<std::string>());
    hg.vertex_features.push_back(jv.at("features").get<std::vector<double>>());
  }
  const auto& jedges = j.at("hyperedges");
  hg.incidence_matrix = Matrix(jedges.size(), hg.vertex_names.size());
  std::size_t e = 0;
  for (const auto& je : jedges) {
    hg.edge_names.push_back(je.at("name").get<std::string>());
    hg.edge_features.push_back(je.at("features").get<std::vector<double>>());
    for (int v : je.at("covers").get<std::vector<int>>()) {
      if (v < 0 || static_cast<std::size_t>(v) >= hg.vertex_names.size()) {
        throw ValidationError("hypergraph: cover index out of range");
      }
      hg.incidence_matrix(e, static_cast<std::size_t>(v)) = 1.0;
    }
    ++e;
  }
  hg.validate();
  return hg;
}

Matrix incidence(const Hypergraph& hg) { return hg.incidence_matrix; }

void Topology::validate() const {
  if (n_nodes < 1) throw ValidationError("topology: no nodes");
  std::set<std::pair<int, int>> seen;
  for (const Link& l : links) {
    if (l.from < 0 || l.from >= n_nodes || l.to < 0 || l.to >= n_nodes) {
      throw ValidationError("topology: link endpoint out of range");
    }
    if (l.from == l.to) throw ValidationError("topology: self-loop link");
    if (!(l.capacity_mbps > 0)) {
      throw ValidationError("topology: link capacity must be > 0");
    }
    if (l.load_mbps < 0) throw ValidationError("topology: negative link load");
    if (!seen.insert({l.from, l.to}).second) {
      throw ValidationError("topology: duplicate link");
    }
  }
  for (const Demand& d : demands) {
    if (d.src < 0 || d.src >= n_nodes || d.dst < 0 || d.dst >= n_nodes) {
      throw ValidationError("topology: demand endpoint out of range");
    }
    if (d.src == d.dst) throw ValidationError("topology: demand src == dst");
    if (!(d.volume_mbps > 0)) {
      throw ValidationError("topology: demand volume must be > 0");
    }
  }
}

int Topology::link_index(int from, int to) const {
  for (std::size_t i = 0; i < links.size(); ++i) {
    if (links[i].from == from && links[i].to == to) return static_cast<int>(i);
  }
  return -1;
}

std::vector<std::vector<std::pair<int, int>>> Topology::out_adjacency() const {
  std::vector<std::vector<std::pair<int, int>>> adj(
      static_cast<std::size_t>(n_nodes));
  for (std::size_t i = 0; i < links.size(); ++i) {
    adj[static_cast<std::size_t>(links[i].from)].push_back(
        {links[i].to, static_cast<int>(i)});
  }
  for (auto& row : adj) std::sort(row.begin(), row.end());
  return adj;
}

nlohmann::json Topology::to_json() const {
  nlohmann::json jlinks = nlohmann::json::array();
  for (const Link& l : links) {
    jlinks.push_back({{"u", l.from},
                      {"v", l.to},
                      {"capacity_mbps", l.capacity_mbps},
                      {"load_mbps", l.load_mbps}});
  }
  nlohmann::json jdemands = nlohmann::json::array();
  for (const Demand& d : demands) {
    jdemands.push_back({{"src", d.src}, {"dst", d.dst}, {"mbps", d.volume_mbps}});
  }
  nlohmann::json nodes = nlohmann::json::array();
  for (int i = 0; i < n_nodes; ++i) nodes.push_back(i);
  return nlohmann::json{{"nodes", nodes},
                        {"links", jlinks},
                        {"demands", jdemands},
                        {"directed", true}};
}

Topology Topology::from_json(const nlohmann::json& j) {
  Topology topo;
  topo.n_nodes = static_cast<int>(j.at("nodes").size());
  const bool directed = j.value("directed", false);
  for (const auto& jl : j.at("links")) {
    Link l;
    l.from = jl.at("u").get<int>();
    l.to = jl.at("v").get<int>();
    l.capacity_mbps = jl.at("capacity_mbps").get<double>();
    l.load_mbps = jl.value("load_mbps", 0.0);
    topo.links.push_back(l);
    if (!directed) {
      std::swap(l.from, l.to);
      topo.links.push_back(l);
    }
  }
  if (j.contains("demands")) {
    for (const auto& jd : j.at("demands")) {
      Demand d;
      d.src = jd.at("src").get<int>();
      d.dst = jd.at("dst").get<int>();
      d.volume_mbps = jd.at("mbps").get<double>();
      topo.demands.push_back(d);
    }
  }
  topo.validate();
  return topo;
}

namespace {

std::string link_name(const Topology& topo, int link_id) {
  const Link& l = topo.links[static_cast<std::size_t>(link_id)];
  return std::to_string(l.from) + "->" + std::to_string(l.to);
}

}  // namespace

Hypergraph build_routing_hypergraph(const Topology& topology,
                                    const std::vector<LinkPath>& routes) {
  topology.validate();
  if (routes.size() != topology.demands.size()) {
    throw ValidationError("routing hypergraph: one route per demand required");
  }

  Hypergraph hg;
  hg.incidence_matrix = Matrix(routes.size(), topology.links.size());
  for (std::size_t v = 0; v < topology.links.size(); ++v) {
    hg.vertex_names.push_back(link_name(topology, static_cast<int>(v)));
    hg.vertex_features.push_back({topology.links[v].capacity_mbps});
  }

  for (std::size_t e = 0; e < routes.size(); ++e) {
    const Demand& demand = topology.demands[e];
    const LinkPath& route = routes[e];
    const std::string demand_name =
        std::to_string(demand.src) + "=>" + std::to_string(demand.dst);
    if (route.empty()) {
      throw ValidationError("routing hypergraph: demand " + demand_name +
                            " has an empty route");
    }
    int cursor = demand.src;
    for (int link_id : route) {
      if (link_id < 0 || static_cast<std::size_t>(link_id) >= topology.links.size()) {
        throw ValidationError("routing hypergraph: demand " + demand_name +
                              " references an unknown link");
      }
      const Link& l = topology.links[static_cast<std::size_t>(link_id)];
      if (l.from != cursor) {
        throw ValidationError("routing hypergraph: demand " + demand_name +
                              " route is disconnected at node " +
                              std::to_string(cursor));
      }
      cursor = l.to;
      hg.incidence_matrix(e, static_cast<std::size_t>(link_id)) = 1.0;
    }
    if (cursor != demand.dst) {
      throw ValidationError("routing hypergraph: demand " + demand_name +
                            " route does not reach its destination");
    }
    hg.edge_names.push_back(demand_name);
    hg.edge_features.push_back({demand.volume_mbps});
  }
  hg.validate();
  return hg;
}

Hypergraph build_bivariate(const BivariateSide& resources,
                           const BivariateSide& requests,
                           const std::vector<std::pair<int, int>>& assignment) {
  if (resources.names.size() != resources.features.size()) {
    throw ValidationError("bivariate: resource feature rows mismatch");
  }
  if (requests.names.size() != requests.features.size()) {
    throw ValidationError("bivariate: request feature rows mismatch");
  }
  Hypergraph hg;
  hg.vertex_names = resources.names;
  hg.vertex_features = resources.features;
  hg.edge_names = requests.names;
  hg.edge_features = requests.features;
  hg.incidence_matrix = Matrix(requests.names.size(), resources.names.size());
  for (const auto& [request, resource] : assignment) {
    if (request < 0 || static_cast<std::size_t>(request) >= requests.names.size()) {
      throw ValidationError("bivariate: assignment references unknown request " +
                            std::to_string(request));
    }
    if (resource < 0 ||
        static_cast<std::size_t>(resource) >= resources.names.size()) {
      throw ValidationError("bivariate: assignment references unknown resource " +
                            std::to_string(resource));
    }
    hg.incidence_matrix(static_cast<std::size_t>(request),
                        static_cast<std::size_t>(resource)) = 1.0;
  }
  hg.validate();
  return hg;
}

}  // namespace metiskit
