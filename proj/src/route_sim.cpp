#include "metiskit/route_sim.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <set>

#include "metiskit/rng.hpp"

namespace metiskit {

namespace {

std::vector<int> hop_distances(const Topology& topo, int src) {
  std::vector<int> dist(static_cast<std::size_t>(topo.n_nodes), -1);
  std::deque<int> queue{src};
  dist[static_cast<std::size_t>(src)] = 0;
  const auto adj = topo.out_adjacency();
  while (!queue.empty()) {
    int node = queue.front();
    queue.pop_front();
    for (const auto& [next, link] : adj[static_cast<std::size_t>(node)]) {
      if (dist[static_cast<std::size_t>(next)] < 0) {
        dist[static_cast<std::size_t>(next)] = dist[static_cast<std::size_t>(node)] + 1;
        queue.push_back(next);
      }
    }
  }
  return dist;
}

}  // namespace

CandidateSet candidate_paths(const Topology& topology, int src, int dst) {
  if (src < 0 || src >= topology.n_nodes || dst < 0 || dst >= topology.n_nodes) {
    throw DomainError("candidate_paths: endpoint out of range");
  }
  if (src == dst) throw DomainError("candidate_paths: src == dst");

  const std::vector<int> dist = hop_distances(topology, src);
  if (dist[static_cast<std::size_t>(dst)] < 0) {
    throw ValidationError("candidate_paths: " + std::to_string(src) + " and " +
                          std::to_string(dst) + " are disconnected");
  }
  const int max_hops = dist[static_cast<std::size_t>(dst)] + 1;
  // Reverse distances bound the DFS: a partial path is viable only when it
  // can still reach dst within the hop budget.
  std::vector<int> to_dst(static_cast<std::size_t>(topology.n_nodes), -1);
  {
    Topology reversed = topology;
    for (Link& l : reversed.links) std::swap(l.from, l.to);
    to_dst = hop_distances(reversed, dst);
  }

  const auto adj = topology.out_adjacency();
  CandidateSet out;
  std::vector<int> node_stack{src};
  LinkPath link_stack;
  std::vector<bool> visited(static_cast<std::size_t>(topology.n_nodes), false);
  visited[static_cast<std::size_t>(src)] = true;

  auto dfs = [&](auto&& self, int node) -> void {
    if (node == dst) {
      out.node_paths.push_back(node_stack);
      out.link_paths.push_back(link_stack);
      return;
    }
    for (const auto& [next, link] : adj[static_cast<std::size_t>(node)]) {
      if (visited[static_cast<std::size_t>(next)]) continue;
      const int remaining = max_hops - static_cast<int>(link_stack.size()) - 1;
      if (to_dst[static_cast<std::size_t>(next)] < 0 ||
          to_dst[static_cast<std::size_t>(next)] > remaining) {
        continue;
      }
      visited[static_cast<std::size_t>(next)] = true;
      node_stack.push_back(next);
      link_stack.push_back(link);
      self(self, next);
      visited[static_cast<std::size_t>(next)] = false;
      node_stack.pop_back();
      link_stack.pop_back();
    }
  };
  dfs(dfs, src);
  return out;
}

double link_latency(double capacity_mbps, double load_mbps) {
  if (!(capacity_mbps > 0)) throw DomainError("link_latency: capacity must be > 0");
  if (load_mbps < 0) throw DomainError("link_latency: load must be >= 0");
  const double knee = 0.95 * capacity_mbps;
  if (load_mbps < knee) return 1.0 / (capacity_mbps - load_mbps);
  const double head = capacity_mbps - knee;  // 5% of capacity
  return 1.0 / head + (load_mbps - knee) / (head * head);
}

double path_latency(const Topology& topology, const LinkPath& path,
                    const std::vector<double>& loads) {
  double total = 0.0;
  for (int link : path) {
    total += link_latency(topology.links[static_cast<std::size_t>(link)].capacity_mbps,
                          loads[static_cast<std::size_t>(link)]);
  }
  return total;
}

std::vector<double> induced_loads(const Topology& topology,
                                  const std::vector<LinkPath>& routes) {
  if (routes.size() != topology.demands.size()) {
    throw DomainError("induced_loads: one route per demand required");
  }
  std::vector<double> loads(topology.links.size());
  for (std::size_t i = 0; i < topology.links.size(); ++i) {
    loads[i] = topology.links[i].load_mbps;
  }
  for (std::size_t e = 0; e < routes.size(); ++e) {
    for (int link : routes[e]) {
      loads[static_cast<std::size_t>(link)] += topology.demands[e].volume_mbps;
    }
  }
  return loads;
}

PathChoiceModel::PathChoiceModel(Topology topology, std::vector<double> theta,
                                 PathChoiceOptions options)
    : topology_(std::move(topology)), theta_(std::move(theta)), options_(options) {
  topology_.validate();
  if (theta_.size() != 4) {
    throw DomainError("path choice model: theta must have 4 entries");
  }
  if (topology_.demands.empty()) {
    throw DomainError("path choice model: topology carries no demands");
  }

  for (const Link& l : topology_.links) {
    capacity_scale_ = std::max(capacity_scale_, l.capacity_mbps);
    mean_capacity_ += l.capacity_mbps;
  }
  mean_capacity_ /= static_cast<double>(topology_.links.size());
  for (const Demand& d : topology_.demands) {
    demand_scale_ = std::max(demand_scale_, d.volume_mbps);
  }

  for (const Demand& d : topology_.demands) {
    CandidateSet cands = candidate_paths(topology_, d.src, d.dst);
    if (cands.link_paths.empty()) {
      throw ValidationError("path choice model: no candidate for demand");
    }
    std::size_t best = 0;
    for (std::size_t c = 1; c < cands.link_paths.size(); ++c) {
      if (cands.link_paths[c].size() < cands.link_paths[best].size()) best = c;
    }
    shortest_.push_back(cands.link_paths[best]);
    candidates_.push_back(std::move(cands));
  }
  reference_loads_ = induced_loads(topology_, shortest_);

  // Baseline decisions with all capacity contributions unmasked.
  const auto base_scores = scores(nullptr);
  for (std::size_t e = 0; e < base_scores.size(); ++e) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < base_scores[e].size(); ++c) {
      if (base_scores[e][c] > base_scores[e][best]) best = c;
    }
    chosen_index_.push_back(static_cast<int>(best));
    chosen_.push_back(candidates_[e].link_paths[best]);
  }
  hypergraph_ = build_routing_hypergraph(topology_, chosen_);
}

std::vector<std::vector<double>> PathChoiceModel::scores(const Matrix* w) const {
  std::vector<std::vector<double>> all;
  all.reserve(candidates_.size());
  for (std::size_t e = 0; e < candidates_.size(); ++e) {
    const Demand& demand = topology_.demands[e];
    const CandidateSet& cands = candidates_[e];
    // Utilization seen by this demand excludes its own reference volume.
    std::vector<double> own(topology_.links.size(), 0.0);
    for (int link : shortest_[e]) {
      own[static_cast<std::size_t>(link)] = demand.volume_mbps;
    }
    std::vector<double> row;
    row.reserve(cands.link_paths.size());
    for (const LinkPath& path : cands.link_paths) {
      double score = 0.0;
      for (std::size_t pos = 0; pos < path.size(); ++pos) {
        const auto v = static_cast<std::size_t>(path[pos]);
        const Link& link = topology_.links[v];
        double multiplier = 1.0;
        if (w != nullptr && hypergraph_.incidence_matrix(e, v) != 0.0) {
          multiplier = (*w)(e, v);
        }
        const double others = reference_loads_[v] - own[v];
        const double masked_cap = multiplier * link.capacity_mbps;
        // Capacity features are centered on the mean link so their path sums
        // do not act as a second length penalty; masking pulls a link toward
        // "generic" rather than "absent". The residual derives from the
        // masked capacity: hiding a link hides how much headroom it offers.
        const double phi0 = (masked_cap - mean_capacity_) / capacity_scale_;
        const double phi1 =
            (masked_cap - others - mean_capacity_) / capacity_scale_;
        const double phi2 = demand.volume_mbps / demand_scale_;
        const double phi3 = pos == 0 ? 1.0 : 0.0;
        score += theta_[0] * phi0 + theta_[1] * phi1 + theta_[2] * phi2 +
                 theta_[3] * phi3;
      }
      score -= options_.length_penalty * static_cast<double>(path.size());
      row.push_back(score);
    }
    all.push_back(std::move(row));
  }
  return all;
}

namespace {

std::vector<double> softmax(const std::vector<double>& scores) {
  double max_score = -std::numeric_limits<double>::infinity();
  for (double s : scores) max_score = std::max(max_score, s);
  std::vector<double> probs(scores.size());
  double total = 0.0;
  for (std::size_t i = 0; i < scores.size(); ++i) {
    probs[i] = std::exp(scores[i] - max_score);
    total += probs[i];
  }
  for (double& p : probs) p /= total;
  return probs;
}

}  // namespace

ModelOutput PathChoiceModel::evaluate(const Hypergraph& hg, const Matrix& w) const {
  if (!w.same_shape(hypergraph_.incidence_matrix)) {
    throw DomainError("path choice model: mask shape mismatch");
  }
  (void)hg;
  ModelOutput out;
  out.kind = OutputKind::kDiscrete;
  for (const auto& row : scores(&w)) {
    const auto probs = softmax(row);
    out.groups.push_back(static_cast<int>(probs.size()));
    out.values.insert(out.values.end(), probs.begin(), probs.end());
  }
  return out;
}

Matrix PathChoiceModel::divergence_gradient(const Hypergraph& hg, const Matrix& w,
                                            const ModelOutput& y_i) const {
  const ModelOutput y_w = evaluate(hg, w);
  Matrix grad(hypergraph_.incidence_matrix.rows(),
              hypergraph_.incidence_matrix.cols());

  std::size_t offset = 0;
  for (std::size_t e = 0; e < candidates_.size(); ++e) {
    const std::size_t n_cands = candidates_[e].link_paths.size();
    // dD/ds_k = y_k (L_k - D_row) with L_k = log(y_k / yI_k).
    std::vector<double> l(n_cands);
    double d_row = 0.0;
    for (std::size_t k = 0; k < n_cands; ++k) {
      const double yw = std::max(y_w.values[offset + k], 1e-12);
      const double yi = std::max(y_i.values[offset + k], 1e-12);
      l[k] = std::log(yw) - std::log(yi);
      d_row += y_w.values[offset + k] * l[k];
    }
    for (std::size_t k = 0; k < n_cands; ++k) {
      const double dd_ds = y_w.values[offset + k] * (l[k] - d_row);
      if (dd_ds == 0.0) continue;
      for (int link : candidates_[e].link_paths[k]) {
        const auto v = static_cast<std::size_t>(link);
        if (hypergraph_.incidence_matrix(e, v) == 0.0) continue;
        const double ds_dw = (theta_[0] + theta_[1]) *
                             topology_.links[v].capacity_mbps / capacity_scale_;
        grad(e, v) += dd_ds * ds_dw;
      }
    }
    offset += n_cands;
  }
  return grad;
}

PathChoiceModel::Decision PathChoiceModel::decisions(const Matrix& w) const {
  Decision decision;
  decision.output = evaluate(hypergraph_, w);
  std::size_t offset = 0;
  for (std::size_t e = 0; e < candidates_.size(); ++e) {
    const std::size_t n_cands = candidates_[e].link_paths.size();
    std::size_t best = 0;
    for (std::size_t c = 1; c < n_cands; ++c) {
      if (decision.output.values[offset + c] >
          decision.output.values[offset + best]) {
        best = c;
      }
    }
    decision.chosen.push_back(static_cast<int>(best));
    offset += n_cands;
  }
  return decision;
}

PathChoiceModel::Decision routing_decisions(const PathChoiceModel& model,
                                            const Matrix& w) {
  return model.decisions(w);
}

std::vector<Demand> random_demands(const Topology& topology, int count,
                                   std::uint64_t seed) {
  if (count < 1) throw DomainError("random_demands: count must be >= 1");
  Rng rng = Rng::stream(seed, 0xd37a);
  std::set<std::pair<int, int>> used;
  std::vector<Demand> demands;
  int guard = 0;
  while (static_cast<int>(demands.size()) < count) {
    if (++guard > 100000) {
      throw DomainError("random_demands: not enough contested src-dst pairs");
    }
    const int src = static_cast<int>(rng.below(static_cast<std::uint64_t>(topology.n_nodes)));
    const int dst = static_cast<int>(rng.below(static_cast<std::uint64_t>(topology.n_nodes)));
    if (src == dst || used.count({src, dst}) != 0) continue;
    CandidateSet cands;
    try {
      cands = candidate_paths(topology, src, dst);
    } catch (const ValidationError&) {
      continue;  // disconnected pair
    }
    if (cands.link_paths.size() < 2) continue;  // uncontested decision
    used.insert({src, dst});
    demands.push_back(Demand{src, dst, 1.0 + 7.0 * rng.uniform()});
  }
  return demands;
}

std::vector<double> fit_theta(const Topology& topology, std::uint64_t seed,
                              int n_matrices, int demands_per_matrix, int steps,
                              double learning_rate, PathChoiceOptions options,
                              double l2) {
  struct Instance {
    std::vector<std::vector<double>> phi_sums;  // per candidate: summed phi
    std::vector<double> length_terms;
    std::size_t label = 0;
  };
  std::vector<Instance> instances;

  double capacity_scale = 1.0;
  double mean_capacity = 0.0;
  for (const Link& l : topology.links) {
    capacity_scale = std::max(capacity_scale, l.capacity_mbps);
    mean_capacity += l.capacity_mbps;
  }
  mean_capacity /= static_cast<double>(topology.links.size());

  for (int m = 0; m < n_matrices; ++m) {
    Topology t = topology;
    t.demands = random_demands(topology, demands_per_matrix,
                               Rng::mix(seed, static_cast<std::uint64_t>(m)));
    double demand_scale = 1.0;
    for (const Demand& d : t.demands) {
      demand_scale = std::max(demand_scale, d.volume_mbps);
    }

    std::vector<CandidateSet> cands;
    std::vector<LinkPath> shortest;
    for (const Demand& d : t.demands) {
      CandidateSet cs = candidate_paths(t, d.src, d.dst);
      std::size_t best = 0;
      for (std::size_t c = 1; c < cs.link_paths.size(); ++c) {
        if (cs.link_paths[c].size() < cs.link_paths[best].size()) best = c;
      }
      shortest.push_back(cs.link_paths[best]);
      cands.push_back(std::move(cs));
    }
    const std::vector<double> loads = induced_loads(t, shortest);

    for (std::size_t e = 0; e < cands.size(); ++e) {
      // Loads as seen by demand e: everyone else on their shortest path.
      std::vector<double> others = loads;
      for (int link : shortest[e]) {
        others[static_cast<std::size_t>(link)] -= t.demands[e].volume_mbps;
      }
      Instance inst;
      double best_latency = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < cands[e].link_paths.size(); ++c) {
        const LinkPath& path = cands[e].link_paths[c];
        std::vector<double> phi(4, 0.0);
        for (std::size_t pos = 0; pos < path.size(); ++pos) {
          const Link& link = t.links[static_cast<std::size_t>(path[pos])];
          phi[0] += (link.capacity_mbps - mean_capacity) / capacity_scale;
          phi[1] += (link.capacity_mbps -
                     others[static_cast<std::size_t>(path[pos])] -
                     mean_capacity) /
                    capacity_scale;
          phi[2] += t.demands[e].volume_mbps / demand_scale;
          phi[3] += pos == 0 ? 1.0 : 0.0;
        }
        inst.phi_sums.push_back(std::move(phi));
        inst.length_terms.push_back(options.length_penalty *
                                    static_cast<double>(path.size()));
        // Label: lowest end-to-end latency with this demand on the candidate.
        std::vector<double> with_own = others;
        for (int link : path) {
          with_own[static_cast<std::size_t>(link)] += t.demands[e].volume_mbps;
        }
        const double latency = path_latency(t, path, with_own);
        if (latency < best_latency) {
          best_latency = latency;
          inst.label = c;
        }
      }
      instances.push_back(std::move(inst));
    }
  }

  // Softmax cross-entropy descent toward the lowest-latency candidate. The
  // ridge term keeps theta at a scale where masking perturbs decisions
  // without erasing them outright.
  std::vector<double> theta(4, 0.0);
  for (int step = 0; step < steps; ++step) {
    std::vector<double> grad(4, 0.0);
    for (const Instance& inst : instances) {
      std::vector<double> s(inst.phi_sums.size(), 0.0);
      for (std::size_t c = 0; c < s.size(); ++c) {
        for (int f = 0; f < 4; ++f) {
          s[c] += theta[static_cast<std::size_t>(f)] * inst.phi_sums[c][static_cast<std::size_t>(f)];
        }
        s[c] -= inst.length_terms[c];
      }
      const std::vector<double> probs = softmax(s);
      for (std::size_t c = 0; c < s.size(); ++c) {
        const double delta = probs[c] - (c == inst.label ? 1.0 : 0.0);
        for (int f = 0; f < 4; ++f) {
          grad[static_cast<std::size_t>(f)] +=
              delta * inst.phi_sums[c][static_cast<std::size_t>(f)];
        }
      }
    }
    for (int f = 0; f < 4; ++f) {
      const auto fi = static_cast<std::size_t>(f);
      theta[fi] -= learning_rate * (grad[fi] / static_cast<double>(instances.size()) +
                                    l2 * theta[fi]);
    }
  }
  return theta;
}

double mask_traffic_correlation(const Mask& mask, const Topology& topology,
                                const std::vector<LinkPath>& routes) {
  const std::vector<double> loads = induced_loads(topology, routes);
  std::vector<double> mask_sums(topology.links.size(), 0.0);
  for (std::size_t e = 0; e < mask.incidence.rows(); ++e) {
    for (std::size_t v = 0; v < mask.incidence.cols(); ++v) {
      if (mask.incidence(e, v) != 0.0) mask_sums[v] += mask.w(e, v);
    }
  }

  const auto n = static_cast<double>(loads.size());
  double mean_x = 0.0, mean_y = 0.0;
  for (std::size_t i = 0; i < loads.size(); ++i) {
    mean_x += mask_sums[i];
    mean_y += loads[i];
  }
  mean_x /= n;
  mean_y /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < loads.size(); ++i) {
    const double dx = mask_sums[i] - mean_x;
    const double dy = loads[i] - mean_y;
    sxy += dx * dy;
    sxx += dx * dx;
    syy += dy * dy;
  }
  if (sxx <= 0.0 || syy <= 0.0) {
    throw DomainError("mask_traffic_correlation: zero-variance input");
  }
  return sxy / std::sqrt(sxx * syy);
}

RerouteReport reroute_indicator_eval(const PathChoiceModel& model,
                                     const Mask& mask, int min_triples) {
  const Topology& topo = model.topology();
  const std::vector<LinkPath>& routes = model.chosen_routes();
  const std::vector<double> base_loads = induced_loads(topo, routes);

  RerouteReport report;
  for (std::size_t e = 0; e < routes.size(); ++e) {
    const LinkPath& p0 = routes[e];
    const CandidateSet& cands = model.candidates(e);
    const double volume = topo.demands[e].volume_mbps;

    // Loads with this demand removed from its baseline path.
    std::vector<double> loads_without = base_loads;
    for (int link : p0) loads_without[static_cast<std::size_t>(link)] -= volume;

    struct Alternative {
      std::size_t divergence_pos = 0;
      double mask_value = 0.0;
      double latency = 0.0;
    };
    std::vector<Alternative> alts;
    for (std::size_t c = 0; c < cands.link_paths.size(); ++c) {
      const LinkPath& path = cands.link_paths[c];
      if (path == p0) continue;
      std::size_t pos = 0;
      while (pos < path.size() && pos < p0.size() && path[pos] == p0[pos]) ++pos;
      if (pos >= p0.size()) continue;  // no outgoing baseline link to compare
      Alternative alt;
      alt.divergence_pos = pos;
      alt.mask_value = mask.w(e, static_cast<std::size_t>(p0[pos]));
      std::vector<double> loads = loads_without;
      for (int link : path) loads[static_cast<std::size_t>(link)] += volume;
      alt.latency = path_latency(topo, path, loads);
      alts.push_back(alt);
    }

    for (std::size_t i = 0; i < alts.size(); ++i) {
      for (std::size_t j = i + 1; j < alts.size(); ++j) {
        if (alts[i].divergence_pos == alts[j].divergence_pos) continue;
        const Alternative& first =
            alts[i].divergence_pos < alts[j].divergence_pos ? alts[i] : alts[j];
        const Alternative& second =
            alts[i].divergence_pos < alts[j].divergence_pos ? alts[j] : alts[i];
        report.points.push_back(ReroutePoint{first.mask_value - second.mask_value,
                                             first.latency - second.latency});
      }
    }
  }

  if (static_cast<int>(report.points.size()) < min_triples) {
    throw InsufficientDataError("reroute_indicator_eval: only " +
                                std::to_string(report.points.size()) +
                                " triples, need " + std::to_string(min_triples));
  }

  int positive = 0;
  for (const ReroutePoint& p : report.points) {
    if (std::abs(p.mask_gap) <= 1e-9 || std::abs(p.latency_gap) <= 1e-12) continue;
    ++report.nonzero_points;
    if (p.mask_gap * p.latency_gap > 0) ++positive;
  }
  report.quadrant_fraction =
      report.nonzero_points > 0
          ? static_cast<double>(positive) / report.nonzero_points
          : 0.0;
  return report;
}

}  // namespace metiskit
