#pragma once

#include <functional>
#include <string>
#include <vector>

#include "json.hpp"
#include "metiskit/hypergraph.hpp"
#include "metiskit/matrix.hpp"

namespace metiskit {

enum class OutputKind { kDiscrete, kContinuous };

// Model output: a flat value vector. Discrete outputs are stacked probability
// distributions whose block sizes are in `groups`.
struct ModelOutput {
  OutputKind kind = OutputKind::kContinuous;
  std::vector<double> values;
  std::vector<int> groups;

  void validate() const;  // discrete rows must sum to 1 within 1e-9
};

// Evaluator interpreted under a fractional mask over the hypergraph's
// connections. Deterministic in (hypergraph, W).
class MaskableModel {
 public:
  virtual ~MaskableModel() = default;
  virtual ModelOutput evaluate(const Hypergraph& hg, const Matrix& w) const = 0;

  // Analytic d divergence(Y_W, Y_I) / dW, same shape as W.
  virtual bool has_divergence_gradient() const { return false; }
  virtual Matrix divergence_gradient(const Hypergraph&, const Matrix&,
                                     const ModelOutput&) const {
    throw DomainError("model has no analytic gradient");
  }

  // Whether evaluate() may be called concurrently.
  virtual bool reentrant() const { return false; }
};

// W = I o sigmoid(W'); keeps 0 <= W <= I by construction.
Matrix gate(const Matrix& w_prime, const Matrix& incidence);

// Discrete: sum of Y_W * log(Y_W / Y_I) with 1e-12 flooring of both log
// arguments. Continuous: squared L2 distance.
double divergence(const ModelOutput& y_w, const ModelOutput& y_i);

// Sum of |W_ev| over all entries.
double mask_norm(const Matrix& w);

// Sum of per-entry binary entropies (natural log, 0 log 0 = 0).
double mask_entropy(const Matrix& w);

struct LossBreakdown {
  double divergence = 0.0;
  double norm = 0.0;
  double entropy = 0.0;
  double total = 0.0;
};

struct Mask {
  Matrix w;
  Matrix w_prime;
  Matrix incidence;
  LossBreakdown loss;
  std::vector<LossBreakdown> trace;  // best-so-far, one entry per step
};

struct OptimizeConfig {
  double lambda1 = 0.25;
  double lambda2 = 1.0;
  int steps = 2000;
  double learning_rate = 0.05;
  std::uint64_t seed = 0;
  double fd_step = 1e-4;  // central-difference step on W'
};

// Holds the cached baseline output Y_I (evaluated at W = I) and assembles the
// three-term loss and its gradient in W'.
class MaskObjective {
 public:
  MaskObjective(const MaskableModel& model, const Hypergraph& hg,
                double lambda1, double lambda2);

  LossBreakdown evaluate(const Matrix& w) const;
  const ModelOutput& baseline() const { return baseline_; }
  const Matrix& incidence() const { return incidence_; }

  // Analytic when the model supports it, otherwise central differences.
  Matrix gradient_wprime(const Matrix& w_prime) const;
  Matrix analytic_gradient_wprime(const Matrix& w_prime) const;
  Matrix fd_gradient_wprime(const Matrix& w_prime, double h) const;

 private:
  const MaskableModel* model_;
  const Hypergraph* hg_;
  Matrix incidence_;
  double lambda1_;
  double lambda2_;
  ModelOutput baseline_;
};

using StepObserver =
    std::function<void(int step, const Matrix& w, const LossBreakdown& loss)>;

// One-shot loss evaluation (computes Y_I afresh).
LossBreakdown loss(const Matrix& w, const MaskableModel& model,
                   const Hypergraph& hg, double lambda1, double lambda2);

// Plain gradient descent on W' from W' = 0 (W = 0.5 I). The returned trace
// records the best loss seen up to each step; the mask is the best iterate.
Mask optimize(const MaskableModel& model, const Hypergraph& hg,
              const OptimizeConfig& config, const StepObserver& observer = {});

struct RankedConnection {
  int edge = 0;
  int vertex = 0;
  double value = 0.0;
};

// Connections (I_ev = 1) ordered by descending mask value; ties by
// (hyperedge id, vertex id).
std::vector<RankedConnection> rank_connections(const Mask& mask, int top_k);

// CSV rows `hyperedge_id,vertex_id,mask_value` over connections.
std::string mask_to_csv(const Mask& mask);
// CSV rows `step,total,divergence,norm,entropy`.
std::string loss_trace_to_csv(const Mask& mask);
nlohmann::json topk_to_json(const std::vector<RankedConnection>& ranked,
                            const Hypergraph& hg);

}  // namespace metiskit
