#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <memory>
#include <vector>

#include "qbp/errors.hpp"
#include "qbp/graph.hpp"
#include "qbp/model.hpp"
#include "qbp/numeric.hpp"
#include "qbp/quadrature.hpp"
#include "qbp/rlbp.hpp"

namespace qbp {

/// Ferromagnet on the complete graph in i.i.d. random fields:
///   H = -sum_i phi(S_i, h_i) - n^{-1} sum_{i<j} g(S_i) g(S_j)
struct MeanFieldModel {
  StateSpace states;
  std::vector<double> g;
  UnaryPotential unary;
  double beta = 1.0;
  FieldDistribution field;

  void validate() const {
    require(g.size() == states.q(), "g needs one value per state");
    require(beta > 0.0, "inverse temperature must be positive");
    for (double v : g) require(std::isfinite(v), "g must be finite");
  }

  /// Ising case: g(S) = S, phi = h S.
  static MeanFieldModel ising(double beta, FieldDistribution field) {
    const auto st = StateSpace::spin(2);
    return {st, st.values(), UnaryPotential::linear_field(), beta, field};
  }
};

struct SaddleSolution {
  double m = 0.0;
  double f = 0.0;
  double residual = 0.0;
};

struct SaddleOptions {
  double tol = 1e-12;
  std::size_t max_iter = 100'000;
  double damping = 0.5;
  std::vector<double> initial_points{-1.0, -0.5, 0.0, 0.5, 1.0};
  std::size_t scan_intervals = 400;
  std::size_t n_nodes = 64;
};

/// Saddle-point map and free energy per variable in the thermodynamic limit:
///   m = int dh p(h) <g>_{beta(phi + m g)}
///   f(m) = m^2 / 2 - beta^-1 int dh p(h) ln sum_S exp beta(phi(S, h) + m g(S))
class MeanFieldSolver {
 public:
  MeanFieldSolver(MeanFieldModel model, std::size_t n_nodes) : model_(std::move(model)) {
    model_.validate();
    const auto rule = build_quadrature(model_.field, model_.field.kind == FieldDistribution::Kind::delta ? 1 : n_nodes);
    weights_ = rule.weights;
    const std::size_t q = model_.states.q();
    phi_.resize(rule.size() * q);
    for (std::size_t k = 0; k < rule.size(); ++k)
      for (std::size_t s = 0; s < q; ++s) phi_[k * q + s] = model_.unary(s, model_.states.value(s), rule.nodes[k]);
  }

  const MeanFieldModel& model() const { return model_; }

  double rhs(double m) const {
    const std::size_t q = model_.states.q();
    std::vector<double> p(q);
    double acc = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      for (std::size_t s = 0; s < q; ++s) p[s] = model_.beta * (phi_[k * q + s] + m * model_.g[s]);
      softmax_inplace(p);
      double mean_g = 0.0;
      for (std::size_t s = 0; s < q; ++s) mean_g += p[s] * model_.g[s];
      acc += weights_[k] * mean_g;
    }
    return acc;
  }

  double free_energy(double m) const {
    const std::size_t q = model_.states.q();
    std::vector<double> x(q);
    double acc = 0.0;
    for (std::size_t k = 0; k < weights_.size(); ++k) {
      for (std::size_t s = 0; s < q; ++s) x[s] = model_.beta * (phi_[k * q + s] + m * model_.g[s]);
      acc += weights_[k] * log_sum_exp(x);
    }
    return 0.5 * m * m - acc / model_.beta;
  }

 private:
  MeanFieldModel model_;
  std::vector<double> weights_;
  std::vector<double> phi_;
};

/// All located fixed points of the saddle-point equation, sorted by f.
inline std::vector<SaddleSolution> solve_saddle(const MeanFieldModel& model, const SaddleOptions& opt = {}) {
  const MeanFieldSolver solver(model, opt.n_nodes);
  auto gap = [&](double m) { return m - solver.rhs(m); };
  const double lo = *std::min_element(model.g.begin(), model.g.end());
  const double hi = *std::max_element(model.g.begin(), model.g.end());

  std::vector<double> roots;
  // Stable branches by damped iteration.
  for (double m0 : opt.initial_points) {
    double m = std::clamp(m0, lo, hi);
    for (std::size_t it = 0; it < opt.max_iter; ++it) {
      const double next = (1.0 - opt.damping) * solver.rhs(m) + opt.damping * m;
      const bool done = std::abs(next - m) <= opt.tol;
      m = next;
      if (done) break;
    }
    roots.push_back(m);
  }
  // Every root, stable or not, by bisection on sign changes of m - rhs(m).
  const std::size_t k_max = std::max<std::size_t>(opt.scan_intervals, 1);
  const double span = hi - lo;
  double a = lo, fa = gap(a);
  if (fa == 0.0) roots.push_back(a);
  for (std::size_t k = 1; k <= k_max; ++k) {
    const double b = lo + span * static_cast<double>(k) / static_cast<double>(k_max);
    const double fb = gap(b);
    if (fb == 0.0) {
      roots.push_back(b);
    } else if ((fa < 0.0) != (fb < 0.0) && fa != 0.0) {
      double x0 = a, x1 = b, f0 = fa;
      for (int it = 0; it < 200 && x1 - x0 > 1e-15; ++it) {
        const double mid = 0.5 * (x0 + x1);
        const double fm = gap(mid);
        if ((fm < 0.0) == (f0 < 0.0)) {
          x0 = mid;
          f0 = fm;
        } else {
          x1 = mid;
        }
      }
      roots.push_back(0.5 * (x0 + x1));
    }
    a = b;
    fa = fb;
  }

  std::vector<SaddleSolution> out;
  for (double m : roots) {
    const double res = std::abs(gap(m));
    if (res > std::max(opt.tol, 1e-9)) continue;
    const bool seen = std::any_of(out.begin(), out.end(), [&](const SaddleSolution& s) { return std::abs(s.m - m) < 1e-7; });
    if (!seen) out.push_back({m, solver.free_energy(m), res});
  }
  if (out.empty()) throw Error("no saddle-point solution found");
  std::sort(out.begin(), out.end(), [](const SaddleSolution& x, const SaddleSolution& y) {
    return x.f != y.f ? x.f < y.f : x.m < y.m;
  });
  return out;
}

/// The same model on an explicit complete graph with psi_ij = g(S_i) g(S_j) / n.
inline MrfModel complete_graph_model(std::size_t n, const MeanFieldModel& mf) {
  mf.validate();
  const std::size_t q = mf.states.q();
  std::vector<double> table(q * q);
  for (std::size_t s = 0; s < q; ++s)
    for (std::size_t t = 0; t < q; ++t) table[s * q + t] = mf.g[s] * mf.g[t];
  return make_model(std::make_shared<Graph>(complete_graph(n)), mf.states, mf.unary,
                    PairPotential::custom(std::move(table), q), mf.beta, mf.field);
}

struct MeanFieldComparison {
  double f_exact = 0.0;  ///< lowest-f saddle solution
  double f_rlbp = 0.0;   ///< lower-F converged RLBP branch, per variable
  double gap = 0.0;
  double m_rlbp = 0.0;
  bool converged = false;
};

inline MeanFieldComparison verify_rlbp_on_complete_graph(std::size_t n, const MeanFieldModel& mf,
                                                         const RlbpOptions& opt = {}) {
  const auto saddles = solve_saddle(mf, {.n_nodes = opt.n_nodes});
  const auto model = complete_graph_model(n, mf);
  const std::vector<double> couplings(model.graph->n_edges(), 1.0 / static_cast<double>(n));
  const auto engine = make_rlbp_engine(model, couplings, opt.n_nodes);
  const auto b = run_rlbp_branches(engine, model.states, opt);
  const auto& r = b.chosen();
  MeanFieldComparison c;
  c.f_exact = saddles.front().f;
  c.f_rlbp = r.report.quenched_free_energy / static_cast<double>(n);
  c.gap = std::abs(c.f_exact - c.f_rlbp);
  c.m_rlbp = r.report.quenched_magnetization;
  c.converged = r.report.converged;
  return c;
}

}  // namespace qbp
