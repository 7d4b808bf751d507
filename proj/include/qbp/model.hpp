#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "qbp/errors.hpp"
#include "qbp/graph.hpp"
#include "qbp/random.hpp"

namespace qbp {

/// Discrete state space: state index s in [0, q) carries the numeric value values[s].
class StateSpace {
 public:
  StateSpace() = default;

  explicit StateSpace(std::vector<double> values) : values_(std::move(values)) {
    require(values_.size() >= 2, "state space needs q >= 2");
    for (std::size_t s = 1; s < values_.size(); ++s) {
      require(values_[s] > values_[s - 1], "state values must be strictly increasing");
    }
  }

  /// q evenly spaced values in [-1, 1]: 2s/(q-1) - 1.
  static StateSpace spin(std::size_t q) {
    require(q >= 2, "state space needs q >= 2");
    std::vector<double> v(q);
    for (std::size_t s = 0; s < q; ++s) {
      v[s] = 2.0 * static_cast<double>(s) / static_cast<double>(q - 1) - 1.0;
    }
    return StateSpace(std::move(v));
  }

  /// Pixel intensities 0, 1, ..., q-1.
  static StateSpace intensity(std::size_t q) {
    require(q >= 2, "state space needs q >= 2");
    std::vector<double> v(q);
    for (std::size_t s = 0; s < q; ++s) v[s] = static_cast<double>(s);
    return StateSpace(std::move(v));
  }

  std::size_t q() const { return values_.size(); }
  double value(std::size_t s) const { return values_[s]; }
  const std::vector<double>& values() const { return values_; }
  double min_value() const { return values_.front(); }
  double max_value() const { return values_.back(); }

 private:
  std::vector<double> values_;
};

/// phi(S, h): the field-dependent single-site term.
class UnaryPotential {
 public:
  enum class Kind { linear_field, gaussian_likelihood, custom };
  using Evaluator = std::function<double(std::size_t state, double value, double h)>;

  /// phi(S, h) = h * value(S)
  static UnaryPotential linear_field() { return UnaryPotential(Kind::linear_field, 0.0, {}); }

  /// phi(S, h) = -(value(S) - h)^2 / (2 variance)
  static UnaryPotential gaussian_likelihood(double variance) {
    require(variance > 0.0, "likelihood variance must be positive");
    return UnaryPotential(Kind::gaussian_likelihood, variance, {});
  }

  static UnaryPotential custom(Evaluator f) {
    require(static_cast<bool>(f), "custom unary potential needs an evaluator");
    return UnaryPotential(Kind::custom, 0.0, std::move(f));
  }

  Kind kind() const { return kind_; }
  double variance() const { return variance_; }

  double operator()(std::size_t state, double value, double h) const {
    switch (kind_) {
      case Kind::linear_field:
        return h * value;
      case Kind::gaussian_likelihood: {
        const double d = value - h;
        return -d * d / (2.0 * variance_);
      }
      case Kind::custom:
        return custom_(state, value, h);
    }
    return 0.0;
  }

 private:
  UnaryPotential(Kind k, double variance, Evaluator f)
      : kind_(k), variance_(variance), custom_(std::move(f)) {}

  Kind kind_ = Kind::linear_field;
  double variance_ = 0.0;
  Evaluator custom_;
};

/// Edge term psi(S, S') = strength * base(S, S'). The per-edge strength is the
/// coupling J_ij for the product kind and the smoothing weight alpha for the
/// image priors.
class PairPotential {
 public:
  enum class Kind { product, quadratic, absolute, custom };

  static PairPotential product() { return PairPotential(Kind::product, {}, 0); }
  /// base = -(v - v')^2 / 2
  static PairPotential quadratic() { return PairPotential(Kind::quadratic, {}, 0); }
  /// base = -|v - v'|
  static PairPotential absolute() { return PairPotential(Kind::absolute, {}, 0); }
  /// base given as a dense row-major q x q table.
  static PairPotential custom(std::vector<double> table, std::size_t q) {
    require(table.size() == q * q, "custom pair table must be q x q");
    return PairPotential(Kind::custom, std::move(table), q);
  }

  Kind kind() const { return kind_; }

  double base(std::size_t s, std::size_t t, const StateSpace& states) const {
    const double a = states.value(s);
    const double b = states.value(t);
    switch (kind_) {
      case Kind::product:
        return a * b;
      case Kind::quadratic:
        return -0.5 * (a - b) * (a - b);
      case Kind::absolute:
        return -std::abs(a - b);
      case Kind::custom:
        return table_[s * q_ + t];
    }
    return 0.0;
  }

 private:
  PairPotential(Kind k, std::vector<double> table, std::size_t q)
      : kind_(k), table_(std::move(table)), q_(q) {}

  Kind kind_ = Kind::product;
  std::vector<double> table_;
  std::size_t q_ = 0;
};

/// Distribution p_i(h) of the random field on one vertex.
struct FieldDistribution {
  enum class Kind { delta, gaussian };
  Kind kind = Kind::delta;
  double mean = 0.0;      ///< h0 for delta
  double variance = 0.0;  ///< zero for delta

  static FieldDistribution delta(double h0) { return {Kind::delta, h0, 0.0}; }
  static FieldDistribution gaussian(double mean, double variance) {
    require(variance > 0.0, "gaussian field variance must be positive");
    return {Kind::gaussian, mean, variance};
  }

  double sample(Rng& rng) const {
    return kind == Kind::delta ? mean : rng.normal(mean, std::sqrt(variance));
  }
};

/// How couplings J_ij are drawn per edge.
struct InteractionEnsemble {
  enum class Kind { fixed, gaussian };
  Kind kind = Kind::fixed;
  double mean = 0.0;
  double variance = 0.0;

  static InteractionEnsemble fixed(double j) { return {Kind::fixed, j, 0.0}; }
  static InteractionEnsemble gaussian(double mean, double variance) {
    require(variance > 0.0, "coupling variance must be positive");
    return {Kind::gaussian, mean, variance};
  }
  bool is_fixed() const { return kind == Kind::fixed; }
};

/// Pairwise MRF
///   P(S | h) ∝ exp(beta * (sum_i phi_i(S_i, h_i) + sum_ij psi_ij(S_i, S_j)))
/// with per-vertex field distributions p_i(h). Per-vertex and per-edge lists
/// hold either one entry (shared by all) or one entry per vertex / edge.
struct MrfModel {
  std::shared_ptr<const Graph> graph;
  StateSpace states;
  std::vector<UnaryPotential> unary;
  std::vector<PairPotential> pair;
  double beta = 1.0;
  std::vector<FieldDistribution> fields;

  std::size_t n() const { return graph->n_vertices(); }
  std::size_t q() const { return states.q(); }

  const UnaryPotential& unary_at(std::size_t i) const { return unary.size() == 1 ? unary[0] : unary[i]; }
  const PairPotential& pair_at(std::size_t e) const { return pair.size() == 1 ? pair[0] : pair[e]; }
  const FieldDistribution& field_at(std::size_t i) const {
    return fields.size() == 1 ? fields[0] : fields[i];
  }

  void validate() const {
    require(graph != nullptr, "model has no graph");
    require(states.q() >= 2, "model state space is empty");
    require(beta > 0.0, "inverse temperature must be positive");
    require(unary.size() == 1 || unary.size() == n(), "unary potential count must be 1 or n");
    require(pair.size() == 1 || pair.size() == graph->n_edges(), "pair potential count must be 1 or |E|");
    require(fields.size() == 1 || fields.size() == n(), "field distribution count must be 1 or n");
  }
};

/// Convenience builder for the common homogeneous case.
inline MrfModel make_model(std::shared_ptr<const Graph> g, StateSpace states, UnaryPotential unary,
                           PairPotential pair, double beta, FieldDistribution field) {
  MrfModel m{std::move(g), std::move(states), {std::move(unary)}, {std::move(pair)}, beta, {field}};
  m.validate();
  return m;
}

inline std::vector<double> sample_fields(const MrfModel& model, Rng& rng) {
  std::vector<double> h(model.n());
  for (std::size_t i = 0; i < h.size(); ++i) h[i] = model.field_at(i).sample(rng);
  return h;
}

inline std::vector<double> sample_fields(const MrfModel& model, std::uint64_t seed) {
  Rng rng(seed);
  return sample_fields(model, rng);
}

inline std::vector<double> sample_interactions(const InteractionEnsemble& ensemble, const Graph& g, Rng& rng) {
  std::vector<double> j(g.n_edges(), ensemble.mean);
  if (!ensemble.is_fixed()) {
    const double sd = std::sqrt(ensemble.variance);
    for (auto& x : j) x = rng.normal(ensemble.mean, sd);
  }
  return j;
}

inline std::vector<double> sample_interactions(const InteractionEnsemble& ensemble, const Graph& g,
                                               std::uint64_t seed) {
  Rng rng(seed);
  return sample_interactions(ensemble, g, rng);
}

/// psi_e(s_u, s_v) for every edge, row-major q x q blocks, oriented so that
/// the row index is the state of edges()[e].u.
struct PairTables {
  std::size_t q = 0;
  std::vector<double> psi;

  std::span<double> at(std::size_t e) { return {psi.data() + e * q * q, q * q}; }
  std::span<const double> at(std::size_t e) const { return {psi.data() + e * q * q, q * q}; }
};

inline PairTables tabulate_pairs(const MrfModel& model, std::span<const double> couplings) {
  const std::size_t q = model.q();
  const std::size_t m = model.graph->n_edges();
  require(couplings.size() == m, "coupling vector length must equal |E|");
  PairTables t{q, std::vector<double>(m * q * q)};
  for (std::size_t e = 0; e < m; ++e) {
    const auto& p = model.pair_at(e);
    for (std::size_t s = 0; s < q; ++s)
      for (std::size_t r = 0; r < q; ++r) t.psi[(e * q + s) * q + r] = couplings[e] * p.base(s, r, model.states);
  }
  return t;
}

/// phi_i(s, h_i) for a concrete field vector, n x q row-major.
inline std::vector<double> tabulate_unary(const MrfModel& model, std::span<const double> h) {
  const std::size_t q = model.q();
  require(h.size() == model.n(), "field vector length must equal n");
  std::vector<double> phi(model.n() * q);
  for (std::size_t i = 0; i < model.n(); ++i) {
    const auto& u = model.unary_at(i);
    for (std::size_t s = 0; s < q; ++s) phi[i * q + s] = u(s, model.states.value(s), h[i]);
  }
  return phi;
}

}  // namespace qbp
