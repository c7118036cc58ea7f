#include "metiskit/hypergraph.hpp"

namespace metiskit {

// Mirrors data/nsfnet.json; 14 nodes, 21 undirected links expanded to 42
// directed links. Capacity tiers 30/40/50 Mbps.
Topology Topology::nsfnet() {
  static const int edges[][3] = {
      {0, 1, 40}, {0, 2, 50},  {0, 3, 30},  {1, 2, 30},   {1, 7, 50},
      {2, 5, 40}, {3, 4, 40},  {3, 8, 50},  {4, 5, 30},   {4, 6, 40},
      {5, 12, 50}, {5, 13, 30}, {6, 7, 40},  {7, 10, 50},  {8, 9, 50},
      {8, 11, 40}, {9, 10, 40}, {9, 12, 30}, {10, 11, 30}, {10, 13, 50},
      {11, 12, 50}};
  Topology topo;
  topo.n_nodes = 14;
  for (const auto& e : edges) {
    const double cap = static_cast<double>(e[2]);
    topo.links.push_back(Link{e[0], e[1], cap, 0.0});
    topo.links.push_back(Link{e[1], e[0], cap, 0.0});
  }
  topo.validate();
  return topo;
}

}  // namespace metiskit
