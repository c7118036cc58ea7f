#include "metiskit/mask_opt.hpp"

#include <algorithm>
#include <cmath>
#include <sstream>

#include "metiskit/threads.hpp"

namespace metiskit {

namespace {

constexpr double kLogFloor = 1e-12;
constexpr double kRowTolerance = 1e-9;

double sigmoid(double x) { return 1.0 / (1.0 + std::exp(-x)); }

double binary_entropy(double w) {
  double h = 0.0;
  if (w > 0.0 && w < 1.0) {
    h = -(w * std::log(w) + (1.0 - w) * std::log(1.0 - w));
  }
  return h;
}

void check_finite(const LossBreakdown& l) {
  if (!std::isfinite(l.divergence)) {
    throw DomainError("mask loss: divergence term is non-finite");
  }
  if (!std::isfinite(l.norm)) {
    throw DomainError("mask loss: norm term is non-finite");
  }
  if (!std::isfinite(l.entropy)) {
    throw DomainError("mask loss: entropy term is non-finite");
  }
}

}  // namespace

void ModelOutput::validate() const {
  for (double v : values) {
    if (!std::isfinite(v)) throw DomainError("model output: non-finite value");
  }
  if (kind == OutputKind::kContinuous) return;
  std::size_t offset = 0;
  for (int g : groups) {
    if (g <= 0) throw DomainError("model output: empty distribution row");
    double sum = 0.0;
    for (int k = 0; k < g; ++k) {
      const double p = values[offset + static_cast<std::size_t>(k)];
      if (p < 0.0) throw DomainError("model output: negative probability");
      sum += p;
    }
    if (std::abs(sum - 1.0) > kRowTolerance) {
      throw DomainError("model output: distribution row does not sum to 1");
    }
    offset += static_cast<std::size_t>(g);
  }
  if (offset != values.size()) {
    throw DomainError("model output: group sizes do not cover the values");
  }
}

Matrix gate(const Matrix& w_prime, const Matrix& incidence) {
  if (!w_prime.same_shape(incidence)) {
    throw DomainError("gate: W' shape does not match the incidence matrix");
  }
  Matrix w(incidence.rows(), incidence.cols());
  for (std::size_t i = 0; i < w.size(); ++i) {
    w.data()[i] = incidence.data()[i] * sigmoid(w_prime.data()[i]);
  }
  return w;
}

double divergence(const ModelOutput& y_w, const ModelOutput& y_i) {
  if (y_w.kind != y_i.kind || y_w.values.size() != y_i.values.size()) {
    throw DomainError("divergence: outputs are not comparable");
  }
  if (y_w.kind == OutputKind::kContinuous) {
    double sum = 0.0;
    for (std::size_t i = 0; i < y_w.values.size(); ++i) {
      const double d = y_w.values[i] - y_i.values[i];
      sum += d * d;
    }
    return sum;
  }
  y_w.validate();
  y_i.validate();
  double sum = 0.0;
  for (std::size_t i = 0; i < y_w.values.size(); ++i) {
    const double p = y_w.values[i];
    const double q = y_i.values[i];
    sum += p * (std::log(std::max(p, kLogFloor)) - std::log(std::max(q, kLogFloor)));
  }
  return sum;
}

double mask_norm(const Matrix& w) {
  double sum = 0.0;
  for (double v : w.data()) sum += std::abs(v);
  return sum;
}

double mask_entropy(const Matrix& w) {
  double sum = 0.0;
  for (double v : w.data()) sum += binary_entropy(v);
  return sum;
}

MaskObjective::MaskObjective(const MaskableModel& model, const Hypergraph& hg,
                             double lambda1, double lambda2)
    : model_(&model),
      hg_(&hg),
      incidence_(hg.incidence_matrix),
      lambda1_(lambda1),
      lambda2_(lambda2),
      baseline_(model.evaluate(hg, hg.incidence_matrix)) {
  baseline_.validate();
}

LossBreakdown MaskObjective::evaluate(const Matrix& w) const {
  LossBreakdown l;
  l.divergence = divergence(model_->evaluate(*hg_, w), baseline_);
  l.norm = mask_norm(w);
  l.entropy = mask_entropy(w);
  l.total = l.divergence + lambda1_ * l.norm + lambda2_ * l.entropy;
  check_finite(l);
  return l;
}

Matrix MaskObjective::analytic_gradient_wprime(const Matrix& w_prime) const {
  if (!model_->has_divergence_gradient()) {
    throw DomainError("mask objective: model has no analytic gradient");
  }
  const Matrix w = gate(w_prime, incidence_);
  const Matrix d_div = model_->divergence_gradient(*hg_, w, baseline_);
  Matrix grad(incidence_.rows(), incidence_.cols());
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (incidence_.data()[i] == 0.0) continue;
    const double wp = w_prime.data()[i];
    const double s = sigmoid(wp);
    const double ds = s * (1.0 - s);
    // d|W|/dW = 1 (W > 0 on connections); dH/dW = -log(W/(1-W)) = -W'.
    const double dl_dw = d_div.data()[i] + lambda1_ + lambda2_ * (-wp);
    grad.data()[i] = dl_dw * ds;
  }
  return grad;
}

Matrix MaskObjective::fd_gradient_wprime(const Matrix& w_prime, double h) const {
  Matrix grad(incidence_.rows(), incidence_.cols());
  std::vector<std::size_t> live;
  for (std::size_t i = 0; i < grad.size(); ++i) {
    if (incidence_.data()[i] != 0.0) live.push_back(i);
  }
  auto probe_entry = [&](std::size_t k) {
    const std::size_t i = live[k];
    Matrix probe = w_prime;
    probe.data()[i] = w_prime.data()[i] + h;
    const double up = evaluate(gate(probe, incidence_)).total;
    probe.data()[i] = w_prime.data()[i] - h;
    const double down = evaluate(gate(probe, incidence_)).total;
    grad.data()[i] = (up - down) / (2.0 * h);
  };
  if (model_->reentrant()) {
    parallel_for(live.size(), probe_entry);
  } else {
    for (std::size_t k = 0; k < live.size(); ++k) probe_entry(k);
  }
  return grad;
}

Matrix MaskObjective::gradient_wprime(const Matrix& w_prime) const {
  if (model_->has_divergence_gradient()) {
    return analytic_gradient_wprime(w_prime);
  }
  return fd_gradient_wprime(w_prime, 1e-4);
}

LossBreakdown loss(const Matrix& w, const MaskableModel& model,
                   const Hypergraph& hg, double lambda1, double lambda2) {
  return MaskObjective(model, hg, lambda1, lambda2).evaluate(w);
}

Mask optimize(const MaskableModel& model, const Hypergraph& hg,
              const OptimizeConfig& config, const StepObserver& observer) {
  if (config.steps < 1) throw DomainError("optimize: steps must be >= 1");
  if (!(config.learning_rate > 0)) {
    throw DomainError("optimize: learning rate must be > 0");
  }
  hg.validate();

  MaskObjective objective(model, hg, config.lambda1, config.lambda2);
  Matrix w_prime(hg.incidence_matrix.rows(), hg.incidence_matrix.cols(), 0.0);

  Mask best;
  best.incidence = hg.incidence_matrix;
  best.w_prime = w_prime;
  best.w = gate(w_prime, best.incidence);
  best.loss = objective.evaluate(best.w);
  best.trace.reserve(static_cast<std::size_t>(config.steps));

  for (int step = 0; step < config.steps; ++step) {
    const Matrix grad = objective.gradient_wprime(w_prime);
    for (std::size_t i = 0; i < w_prime.size(); ++i) {
      w_prime.data()[i] -= config.learning_rate * grad.data()[i];
    }
    const Matrix w = gate(w_prime, best.incidence);
    const LossBreakdown current = objective.evaluate(w);
    if (current.total < best.loss.total) {
      best.loss = current;
      best.w = w;
      best.w_prime = w_prime;
    }
    best.trace.push_back(best.loss);
    if (observer) observer(step, w, current);
  }
  return best;
}

std::vector<RankedConnection> rank_connections(const Mask& mask, int top_k) {
  if (top_k < 0) throw DomainError("rank_connections: top_k must be >= 0");
  std::vector<RankedConnection> all;
  for (std::size_t e = 0; e < mask.incidence.rows(); ++e) {
    for (std::size_t v = 0; v < mask.incidence.cols(); ++v) {
      if (mask.incidence(e, v) != 0.0) {
        all.push_back({static_cast<int>(e), static_cast<int>(v), mask.w(e, v)});
      }
    }
  }
  std::sort(all.begin(), all.end(),
            [](const RankedConnection& a, const RankedConnection& b) {
              if (a.value != b.value) return a.value > b.value;
              if (a.edge != b.edge) return a.edge < b.edge;
              return a.vertex < b.vertex;
            });
  if (static_cast<std::size_t>(top_k) < all.size()) {
    all.resize(static_cast<std::size_t>(top_k));
  }
  return all;
}

std::string mask_to_csv(const Mask& mask) {
  std::ostringstream out;
  out.precision(17);
  out << "hyperedge_id,vertex_id,mask_value\n";
  for (std::size_t e = 0; e < mask.incidence.rows(); ++e) {
    for (std::size_t v = 0; v < mask.incidence.cols(); ++v) {
      if (mask.incidence(e, v) != 0.0) {
        out << e << ',' << v << ',' << mask.w(e, v) << '\n';
      }
    }
  }
  return out.str();
}

std::string loss_trace_to_csv(const Mask& mask) {
  std::ostringstream out;
  out.precision(17);
  out << "step,total,divergence,norm,entropy\n";
  for (std::size_t i = 0; i < mask.trace.size(); ++i) {
    const LossBreakdown& l = mask.trace[i];
    out << i << ',' << l.total << ',' << l.divergence << ',' << l.norm << ','
        << l.entropy << '\n';
  }
  return out.str();
}

nlohmann::json topk_to_json(const std::vector<RankedConnection>& ranked,
                            const Hypergraph& hg) {
  nlohmann::json arr = nlohmann::json::array();
  for (const RankedConnection& rc : ranked) {
    arr.push_back({{"hyperedge_id", rc.edge},
                   {"hyperedge", hg.edge_names[static_cast<std::size_t>(rc.edge)]},
                   {"vertex_id", rc.vertex},
                   {"vertex", hg.vertex_names[static_cast<std::size_t>(rc.vertex)]},
                   {"mask_value", rc.value}});
  }
  return arr;
}

}  // namespace metiskit
