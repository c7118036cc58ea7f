#include <algorithm>
#include <cmath>

#include "doctest.h"
#include "metiskit/mask_opt.hpp"
#include "metiskit/rng.hpp"

using namespace metiskit;

namespace {

// The two-demand incidence (0,1,0,0,1,1,0,0) / (1,0,1,0,0,1,0,1).
Hypergraph two_demand_hypergraph() {
  Hypergraph hg;
  for (int v = 0; v < 8; ++v) {
    hg.vertex_names.push_back("link" + std::to_string(v + 1));
    hg.vertex_features.push_back({10.0});
  }
  hg.edge_names = {"e1", "e2"};
  hg.edge_features = {{2.0}, {3.0}};
  hg.incidence_matrix = Matrix(2, 8);
  for (int v : {1, 4, 5}) hg.incidence_matrix(0, static_cast<std::size_t>(v)) = 1.0;
  for (int v : {0, 2, 5, 7}) hg.incidence_matrix(1, static_cast<std::size_t>(v)) = 1.0;
  hg.validate();
  return hg;
}

// Continuous output: per-hyperedge row sums of the mask. No analytic
// gradient, so the optimizer exercises the finite-difference path.
class RowSumModel : public MaskableModel {
 public:
  ModelOutput evaluate(const Hypergraph& hg, const Matrix& w) const override {
    ModelOutput out;
    out.kind = OutputKind::kContinuous;
    for (std::size_t e = 0; e < hg.n_edges(); ++e) {
      double sum = 0.0;
      for (std::size_t v = 0; v < hg.n_vertices(); ++v) sum += w(e, v);
      out.values.push_back(sum);
    }
    return out;
  }
};

// Continuous linear map Y_k = <A_k, W> with an analytic gradient.
class LinearMapModel : public MaskableModel {
 public:
  explicit LinearMapModel(std::vector<Matrix> maps) : maps_(std::move(maps)) {}

  ModelOutput evaluate(const Hypergraph&, const Matrix& w) const override {
    ModelOutput out;
    out.kind = OutputKind::kContinuous;
    for (const Matrix& a : maps_) {
      double y = 0.0;
      for (std::size_t i = 0; i < w.size(); ++i) y += a.data()[i] * w.data()[i];
      out.values.push_back(y);
    }
    return out;
  }

  bool has_divergence_gradient() const override { return true; }
  Matrix divergence_gradient(const Hypergraph& hg, const Matrix& w,
                             const ModelOutput& y_i) const override {
    const ModelOutput y_w = evaluate(hg, w);
    Matrix grad(w.rows(), w.cols());
    for (std::size_t k = 0; k < maps_.size(); ++k) {
      const double residual = 2.0 * (y_w.values[k] - y_i.values[k]);
      for (std::size_t i = 0; i < grad.size(); ++i) {
        grad.data()[i] += residual * maps_[k].data()[i];
      }
    }
    return grad;
  }

 private:
  std::vector<Matrix> maps_;
};

class IgnoreInputModel : public MaskableModel {
 public:
  ModelOutput evaluate(const Hypergraph&, const Matrix&) const override {
    ModelOutput out;
    out.kind = OutputKind::kContinuous;
    out.values = {1.0};
    return out;
  }
};

class NonFiniteModel : public MaskableModel {
 public:
  ModelOutput evaluate(const Hypergraph&, const Matrix& w) const override {
    ModelOutput out;
    out.kind = OutputKind::kContinuous;
    // Finite at W = I, NaN away from it.
    out.values = {w.sum() == 7.0 ? 1.0 : std::nan("")};
    return out;
  }
};

}  // namespace

TEST_SUITE("mask-opt") {

TEST_CASE("gate keeps the mask inside [0, I]") {
  Hypergraph hg = two_demand_hypergraph();
  const Matrix& incidence = hg.incidence_matrix;

  Matrix zero(2, 8, 0.0);
  Matrix w = gate(zero, incidence);
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t v = 0; v < 8; ++v) {
      CHECK(w(e, v) == doctest::Approx(0.5 * incidence(e, v)));
    }
  }

  Matrix big(2, 8, 10.0);
  w = gate(big, incidence);
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t v = 0; v < 8; ++v) {
      if (incidence(e, v) == 0.0) {
        CHECK(w(e, v) == 0.0);
      } else {
        CHECK(w(e, v) == doctest::Approx(0.9999546021312976).epsilon(1e-12));
      }
    }
  }

  CHECK_THROWS_AS(gate(Matrix(3, 3), incidence), DomainError);
}

TEST_CASE("divergence examples") {
  ModelOutput discrete_a{OutputKind::kDiscrete, {0.5, 0.5}, {2}};
  ModelOutput discrete_b{OutputKind::kDiscrete, {0.9, 0.1}, {2}};
  CHECK(divergence(discrete_a, discrete_a) == doctest::Approx(0.0));

  // Oracle: direct evaluation of 0.5 ln(0.5/0.9) + 0.5 ln(0.5/0.1).
  const double oracle = 0.5 * std::log(0.5 / 0.9) + 0.5 * std::log(0.5 / 0.1);
  CHECK(divergence(discrete_a, discrete_b) == doctest::Approx(oracle).epsilon(1e-12));
  CHECK(divergence(discrete_a, discrete_b) == doctest::Approx(0.51083).epsilon(1e-4));

  ModelOutput cont_a{OutputKind::kContinuous, {1.0, 2.0}, {}};
  ModelOutput cont_b{OutputKind::kContinuous, {1.0, 4.0}, {}};
  CHECK(divergence(cont_a, cont_a) == doctest::Approx(0.0));
  CHECK(divergence(cont_a, cont_b) == doctest::Approx(4.0));

  ModelOutput broken{OutputKind::kDiscrete, {0.5, 0.4}, {2}};
  CHECK_THROWS_AS(divergence(broken, discrete_b), DomainError);
  ModelOutput mismatched{OutputKind::kDiscrete, {1.0}, {1}};
  CHECK_THROWS_AS(divergence(discrete_a, mismatched), DomainError);
}

TEST_CASE("norm examples") {
  Hypergraph hg = two_demand_hypergraph();
  CHECK(mask_norm(hg.incidence_matrix) == doctest::Approx(7.0));
  CHECK(mask_norm(Matrix(2, 8, 0.0)) == doctest::Approx(0.0));

  Matrix half = hg.incidence_matrix;
  for (double& v : half.data()) v *= 0.5;
  CHECK(mask_norm(half) == doctest::Approx(3.5));
}

TEST_CASE("entropy examples") {
  Matrix binary(2, 2);
  binary(0, 0) = 1.0;
  binary(1, 1) = 1.0;
  CHECK(mask_entropy(binary) == doctest::Approx(0.0));

  Matrix single(1, 1, 0.5);
  CHECK(mask_entropy(single) == doctest::Approx(std::log(2.0)).epsilon(1e-12));

  Matrix pair(1, 2);
  pair(0, 0) = 0.2;
  pair(0, 1) = 0.8;
  const double h = -(0.2 * std::log(0.2) + 0.8 * std::log(0.8));
  CHECK(mask_entropy(pair) == doctest::Approx(2.0 * h).epsilon(1e-12));
  CHECK(mask_entropy(pair) == doctest::Approx(1.00080).epsilon(1e-4));
}

TEST_CASE("loss composes the three terms") {
  Hypergraph hg = two_demand_hypergraph();
  RowSumModel model;

  // W = I: divergence and entropy vanish, total = lambda1 * |I|.
  LossBreakdown at_i = loss(hg.incidence_matrix, model, hg, 0.25, 1.0);
  CHECK(at_i.divergence == doctest::Approx(0.0));
  CHECK(at_i.entropy == doctest::Approx(0.0));
  CHECK(at_i.total == doctest::Approx(0.25 * 7.0));

  // lambda1 = lambda2 = 0 reduces to the divergence term alone.
  Matrix half = hg.incidence_matrix;
  for (double& v : half.data()) v *= 0.5;
  LossBreakdown only_d = loss(half, model, hg, 0.0, 0.0);
  CHECK(only_d.total == doctest::Approx(only_d.divergence));

  // Term-sum oracle at W = 0.5 I with the default lambdas.
  const double div_oracle = (1.5 - 3.0) * (1.5 - 3.0) + (2.0 - 4.0) * (2.0 - 4.0);
  const double norm_oracle = 3.5;
  const double entropy_oracle = 7.0 * std::log(2.0);
  LossBreakdown breakdown = loss(half, model, hg, 0.25, 1.0);
  CHECK(breakdown.divergence == doctest::Approx(div_oracle).epsilon(1e-12));
  CHECK(breakdown.norm == doctest::Approx(norm_oracle).epsilon(1e-12));
  CHECK(breakdown.entropy == doctest::Approx(entropy_oracle).epsilon(1e-12));
  CHECK(breakdown.total ==
        doctest::Approx(div_oracle + 0.25 * norm_oracle + entropy_oracle)
            .epsilon(1e-12));
}

TEST_CASE("non-finite losses abort naming the term") {
  Hypergraph hg = two_demand_hypergraph();
  NonFiniteModel model;
  MaskObjective objective(model, hg, 0.25, 1.0);
  Matrix half_prime(2, 8, 0.0);
  CHECK_THROWS_WITH_AS(objective.evaluate(gate(half_prime, hg.incidence_matrix)),
                       doctest::Contains("divergence"), DomainError);
}

TEST_CASE("optimize drives an ignored mask to zero via the penalties") {
  Hypergraph hg = two_demand_hypergraph();
  IgnoreInputModel model;
  OptimizeConfig config;  // lambda1 = 0.25, lambda2 = 1, 2000 steps, lr 0.05
  Mask mask = optimize(model, hg, config);
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t v = 0; v < 8; ++v) {
      if (hg.incidence_matrix(e, v) != 0.0) {
        CHECK(mask.w(e, v) < 0.01);
      } else {
        CHECK(mask.w(e, v) == 0.0);
      }
    }
  }
}

TEST_CASE("optimize with zero penalties reduces the divergence") {
  Hypergraph hg = two_demand_hypergraph();
  RowSumModel model;
  OptimizeConfig config;
  config.lambda1 = 0.0;
  config.lambda2 = 0.0;
  config.steps = 200;

  Matrix half = hg.incidence_matrix;
  for (double& v : half.data()) v *= 0.5;
  const double initial = loss(half, model, hg, 0.0, 0.0).divergence;

  Mask mask = optimize(model, hg, config);
  CHECK(mask.loss.divergence <= initial);
  CHECK(mask.trace.size() == 200);
  for (std::size_t i = 1; i < mask.trace.size(); ++i) {
    CHECK(mask.trace[i].total <= mask.trace[i - 1].total + 1e-12);
  }
}

TEST_CASE("the gate keeps every step inside the constraint set") {
  Hypergraph hg = two_demand_hypergraph();
  RowSumModel model;
  OptimizeConfig config;
  config.steps = 50;
  int observed = 0;
  optimize(model, hg, config, [&](int, const Matrix& w, const LossBreakdown&) {
    ++observed;
    for (std::size_t e = 0; e < w.rows(); ++e) {
      for (std::size_t v = 0; v < w.cols(); ++v) {
        CHECK(w(e, v) >= 0.0);
        CHECK(w(e, v) <= hg.incidence_matrix(e, v));
      }
    }
  });
  CHECK(observed == 50);
}

TEST_CASE("finite differences match the analytic gradient within 1e-5") {
  Hypergraph hg = two_demand_hypergraph();
  std::vector<Matrix> maps;
  for (int k = 0; k < 3; ++k) {
    Matrix a(2, 8);
    for (std::size_t i = 0; i < a.size(); ++i) {
      a.data()[i] = 0.3 * static_cast<double>((i * (k + 2) + 1) % 5) - 0.6;
    }
    maps.push_back(a);
  }
  LinearMapModel model(maps);
  MaskObjective objective(model, hg, 0.25, 1.0);

  Rng rng(31);
  for (int trial = 0; trial < 20; ++trial) {
    Matrix w_prime(2, 8);
    for (double& v : w_prime.data()) v = rng.uniform(-2.0, 2.0);
    const Matrix analytic = objective.analytic_gradient_wprime(w_prime);
    const Matrix fd = objective.fd_gradient_wprime(w_prime, 1e-4);
    double max_abs = 1e-12;
    double max_err = 0.0;
    for (std::size_t i = 0; i < analytic.size(); ++i) {
      max_abs = std::max(max_abs, std::abs(analytic.data()[i]));
      max_err = std::max(max_err, std::abs(analytic.data()[i] - fd.data()[i]));
    }
    CHECK(max_err / max_abs <= 1e-5);
  }
}

TEST_CASE("rank_connections orders by value then ids") {
  Hypergraph hg = two_demand_hypergraph();
  Mask mask;
  mask.incidence = hg.incidence_matrix;
  mask.w = Matrix(2, 8, 0.0);
  mask.w(0, 1) = 0.886;
  mask.w(0, 4) = 0.878;
  mask.w(0, 5) = 0.880;
  mask.w(1, 0) = 0.875;
  mask.w(1, 2) = 0.874;
  mask.w(1, 5) = 0.886;  // exact tie with (0, 1)
  mask.w(1, 7) = 0.1;

  const auto top5 = rank_connections(mask, 5);
  REQUIRE(top5.size() == 5);
  CHECK(top5[0].edge == 0);
  CHECK(top5[0].vertex == 1);  // tie broken by hyperedge id
  CHECK(top5[1].edge == 1);
  CHECK(top5[1].vertex == 5);
  CHECK(top5[2].value == doctest::Approx(0.880));
  CHECK(top5[3].value == doctest::Approx(0.878));
  CHECK(top5[4].value == doctest::Approx(0.875));

  CHECK(rank_connections(mask, 0).empty());
  CHECK(rank_connections(mask, 100).size() == 7);
  CHECK_THROWS_AS(rank_connections(mask, -1), DomainError);

  // All-equal masks fall back to id order.
  for (double& v : mask.w.data()) v = 0.0;
  for (std::size_t e = 0; e < 2; ++e) {
    for (std::size_t v = 0; v < 8; ++v) {
      if (mask.incidence(e, v) != 0.0) mask.w(e, v) = 0.5;
    }
  }
  const auto all = rank_connections(mask, 7);
  CHECK(all[0].edge == 0);
  CHECK(all[0].vertex == 1);
  CHECK(all[6].edge == 1);
  CHECK(all[6].vertex == 7);
}

TEST_CASE("csv dumps carry one row per connection") {
  Hypergraph hg = two_demand_hypergraph();
  RowSumModel model;
  OptimizeConfig config;
  config.steps = 5;
  Mask mask = optimize(model, hg, config);
  const std::string csv = mask_to_csv(mask);
  // Header + one row per 1-entry of the incidence.
  CHECK(std::count(csv.begin(), csv.end(), '\n') == 8);
  const std::string trace_csv = loss_trace_to_csv(mask);
  CHECK(std::count(trace_csv.begin(), trace_csv.end(), '\n') == 6);
}

}  // TEST_SUITE
