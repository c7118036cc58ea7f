#pragma once

#include <string>
#include <vector>

#include "metiskit/hypergraph.hpp"
#include "metiskit/mask_opt.hpp"

namespace metiskit {

// Candidate routes of one demand: every simple path at most one hop longer
// than the shortest, in lexicographic node order.
struct CandidateSet {
  std::vector<std::vector<int>> node_paths;
  std::vector<LinkPath> link_paths;
};

CandidateSet candidate_paths(const Topology& topology, int src, int dst);

// M/M/1-style latency 1/(capacity - load) below 95% utilization, then a
// linear extension that stays continuous (and C1) at the knee.
double link_latency(double capacity_mbps, double load_mbps);

double path_latency(const Topology& topology, const LinkPath& path,
                    const std::vector<double>& loads);

// Base link loads plus every demand's volume along its route.
std::vector<double> induced_loads(const Topology& topology,
                                  const std::vector<LinkPath>& routes);

struct PathChoiceOptions {
  double length_penalty = 0.3;  // score cost per hop
};

// Differentiable path chooser over candidate sets. Per demand, the output row
// is a softmax over candidate-path scores; a path scores the sum over its
// links of theta . phi(masked capacity, masked residual capacity, demand
// volume, first-hop flag) minus the length penalty. The demand's mask entry
// W_ev rescales link v's capacity wherever I_ev = 1, and the residual term
// derives from that masked capacity.
class PathChoiceModel : public MaskableModel {
 public:
  PathChoiceModel(Topology topology, std::vector<double> theta,
                  PathChoiceOptions options = {});

  const Topology& topology() const { return topology_; }
  const Hypergraph& hypergraph() const { return hypergraph_; }
  const std::vector<LinkPath>& chosen_routes() const { return chosen_; }
  const CandidateSet& candidates(std::size_t demand) const {
    return candidates_[demand];
  }
  const std::vector<double>& reference_loads() const { return reference_loads_; }
  const std::vector<double>& theta() const { return theta_; }

  ModelOutput evaluate(const Hypergraph& hg, const Matrix& w) const override;
  bool has_divergence_gradient() const override { return true; }
  Matrix divergence_gradient(const Hypergraph& hg, const Matrix& w,
                             const ModelOutput& y_i) const override;
  bool reentrant() const override { return true; }

  struct Decision {
    ModelOutput output;
    std::vector<int> chosen;  // candidate index per demand
  };
  Decision decisions(const Matrix& w) const;

 private:
  std::vector<std::vector<double>> scores(const Matrix* w) const;

  Topology topology_;
  std::vector<double> theta_;
  PathChoiceOptions options_;
  double capacity_scale_ = 1.0;
  double mean_capacity_ = 0.0;
  double demand_scale_ = 1.0;
  std::vector<CandidateSet> candidates_;
  std::vector<LinkPath> shortest_;       // per-demand shortest candidate
  std::vector<double> reference_loads_;  // shortest-path routing, fixed
  std::vector<int> chosen_index_;        // argmax under W = I
  std::vector<LinkPath> chosen_;
  Hypergraph hypergraph_;
};

// Routing decisions under a mask; W = I reproduces the baseline routing.
PathChoiceModel::Decision routing_decisions(const PathChoiceModel& model,
                                            const Matrix& w);

// Demand matrices for experiments: `count` distinct src-dst pairs with at
// least two candidate routes, volumes uniform in [1, 8] Mbps.
std::vector<Demand> random_demands(const Topology& topology, int count,
                                   std::uint64_t seed);

// Supervised preference fit: theta is trained once so the softmax prefers
// the lowest-latency candidate on seeded demand matrices, then frozen. The
// ridge weight l2 bounds the score scale.
std::vector<double> fit_theta(const Topology& topology, std::uint64_t seed,
                              int n_matrices = 5, int demands_per_matrix = 12,
                              int steps = 400, double learning_rate = 0.5,
                              PathChoiceOptions options = {}, double l2 = 0.05);

// Pearson correlation between per-link mask sums (sum_e W_ev) and the link
// loads induced by the chosen routes.
double mask_traffic_correlation(const Mask& mask, const Topology& topology,
                                const std::vector<LinkPath>& routes);

struct ReroutePoint {
  double mask_gap = 0.0;     // w1 - w2
  double latency_gap = 0.0;  // l1 - l2
};

struct RerouteReport {
  std::vector<ReroutePoint> points;
  int nonzero_points = 0;
  double quadrant_fraction = 0.0;  // share of nonzero points in I or III
};

// For each baseline route p0, pairs of candidates diverting at distinct
// nodes; compares the mask value of p0's outgoing link at each divergence
// node with the end-to-end latency after rerouting.
RerouteReport reroute_indicator_eval(const PathChoiceModel& model,
                                     const Mask& mask,
                                     int min_triples = 10);

}  // namespace metiskit
