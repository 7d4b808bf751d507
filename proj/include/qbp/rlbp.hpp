#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <optional>
#include <span>
#include <utility>
#include <vector>

#include "qbp/errors.hpp"
#include "qbp/graph.hpp"
#include "qbp/lbp.hpp"
#include "qbp/model.hpp"
#include "qbp/numeric.hpp"
#include "qbp/quadrature.hpp"

namespace qbp {

struct RlbpOptions {
  double tol = 1e-9;
  std::size_t max_iter = 10'000;
  double damping = 0.5;
  std::size_t n_nodes = 64;
  double mu_floor = 1e-12;
  MessageInit init = MessageInit::uniform;
};

/// Fixed-point state of the quenched message passing.
struct RlbpState {
  std::size_t q = 0;
  std::vector<double> mu;      ///< per directed slot, length q, sums to 1
  std::vector<double> lambda;  ///< n x q, beta Lambda_i = sum_k ln mu_{k->i}
  std::vector<double> q_vertex;  ///< n x q
  std::vector<double> q_edge;    ///< |E| x q x q, row = state of edge.u

  std::span<double> message(std::size_t slot) { return {mu.data() + slot * q, q}; }
  std::span<const double> message(std::size_t slot) const { return {mu.data() + slot * q, q}; }
  std::span<const double> vertex(std::size_t i) const { return {q_vertex.data() + i * q, q}; }
  std::span<const double> edge(std::size_t e) const { return {q_edge.data() + e * q * q, q * q}; }
  std::span<const double> multiplier(std::size_t i) const { return {lambda.data() + i * q, q}; }
};

struct RlbpReport {
  bool converged = false;
  std::size_t iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  double quenched_free_energy = 0.0;
  double quenched_magnetization = 0.0;
};

struct RlbpResult {
  RlbpState state;
  RlbpReport report;
};

/// Field integral for one vertex: phi[k * q + s] = phi_i(s, nodes[k]).
struct VertexField {
  std::vector<double> weights;
  std::vector<double> phi;
};

/// Message passing for the replica-symmetric quenched Bethe free energy.
///
/// One sweep visits the vertices in index order. At vertex j it rebuilds
/// Lambda_j from the incoming messages, integrates Q_j over the field rule and
/// then refreshes every outgoing message
///   mu_{j->i}(S_i) ∝ sum_{S_j} Q_j(S_j) exp(beta psi_ij(S_i, S_j)) / mu_{i->j}(S_j).
/// With delta field distributions this is ordinary LBP.
class RlbpEngine {
 public:
  RlbpEngine(const Graph& g, std::size_t q, double beta, std::vector<VertexField> fields, PairTables pairs)
      : g_(&g), q_(q), beta_(beta), fields_(std::move(fields)), pairs_(std::move(pairs)) {
    require(beta_ > 0.0, "inverse temperature must be positive");
    require(fields_.size() == g.n_vertices(), "need one field rule per vertex");
    for (const auto& f : fields_) {
      require(!f.weights.empty() && f.phi.size() == f.weights.size() * q_, "field rule does not match q");
    }
    require(pairs_.q == q_ && pairs_.psi.size() == g.n_edges() * q_ * q_, "pair tables do not match graph");
    boltz_.resize(pairs_.psi.size());
    for (std::size_t e = 0; e < g.n_edges(); ++e) {
      const auto t = pairs_.at(e);
      const double m = *std::max_element(t.begin(), t.end());
      for (std::size_t k = 0; k < q_ * q_; ++k) boltz_[e * q_ * q_ + k] = std::exp(beta_ * (t[k] - m));
    }
  }

  const Graph& graph() const { return *g_; }
  std::size_t q() const { return q_; }
  double beta() const { return beta_; }
  const std::vector<VertexField>& fields() const { return fields_; }
  const PairTables& pairs() const { return pairs_; }

  RlbpState initial_state(MessageInit init) const {
    RlbpState st;
    st.q = q_;
    st.mu.assign(g_->n_directed() * q_, 1.0 / static_cast<double>(q_));
    if (init == MessageInit::ordered) {
      for (std::size_t slot = 0; slot < g_->n_directed(); ++slot) {
        auto out = st.message(slot);
        for (std::size_t t = 0; t < q_; ++t) out[t] = boltz(slot, q_ - 1, t);
        normalize_inplace(out);
      }
    }
    st.lambda.assign(g_->n_vertices() * q_, 0.0);
    st.q_vertex.assign(g_->n_vertices() * q_, 1.0 / static_cast<double>(q_));
    st.q_edge.assign(g_->n_edges() * q_ * q_, 1.0 / static_cast<double>(q_ * q_));
    return st;
  }

  RlbpResult run(const RlbpOptions& opt = {}) const { return run(opt, initial_state(opt.init)); }

  /// Warm start from a previous state (only its messages are used).
  RlbpResult run(const RlbpOptions& opt, RlbpState st) const {
    require(opt.damping >= 0.0 && opt.damping < 1.0, "damping must lie in [0, 1)");
    require(st.q == q_ && st.mu.size() == g_->n_directed() * q_, "initial messages do not match the graph");
    const double floor = opt.mu_floor;

    const std::size_t n = g_->n_vertices();
    std::vector<double> log_mu(st.mu.size());
    for (std::size_t k = 0; k < st.mu.size(); ++k) log_mu[k] = std::log(std::max(st.mu[k], floor));

    RlbpReport report;
    std::vector<double> lam(q_), qv(q_), ratio(q_), fresh(q_), scratch(q_);
    for (std::size_t it = 1; it <= opt.max_iter; ++it) {
      double residual = 0.0;
      for (std::size_t j = 0; j < n; ++j) {
        multiplier_from(log_mu, j, lam);
        integrate_vertex(j, lam, qv, scratch);
        for (const auto& nb : g_->neighbors(j)) {
          const std::size_t out = g_->directed(nb.edge, j);
          const std::size_t back = Graph::reverse(out);
          const auto mu_back = st.message(back);
          for (std::size_t s = 0; s < q_; ++s) ratio[s] = qv[s] / std::max(mu_back[s], floor);
          for (std::size_t t = 0; t < q_; ++t) {
            double acc = 0.0;
            for (std::size_t s = 0; s < q_; ++s) acc += ratio[s] * boltz(out, s, t);
            fresh[t] = acc;
          }
          if (!normalize_inplace(fresh)) log_domain_message(out, qv, st.message(back), floor, fresh);
          auto cur = st.message(out);
          if (opt.damping > 0.0) {
            for (std::size_t t = 0; t < q_; ++t) fresh[t] = (1.0 - opt.damping) * fresh[t] + opt.damping * cur[t];
            normalize_inplace(fresh);
          }
          for (std::size_t t = 0; t < q_; ++t) {
            residual = std::max(residual, std::abs(fresh[t] - cur[t]));
            cur[t] = fresh[t];
            log_mu[out * q_ + t] = std::log(std::max(fresh[t], floor));
          }
        }
      }
      report.iterations = it;
      report.residual = residual;
      if (residual <= opt.tol) {
        report.converged = true;
        break;
      }
    }

    finalize(st, log_mu);
    report.quenched_free_energy = free_energy(st);
    return {std::move(st), report};
  }

  /// Quenched variational free energy at a (converged) state:
  ///   sum_i [ sum_S Lambda_i Q_i - beta^-1 sum_k w_k ln sum_S exp beta(phi_i(S, h_k) + Lambda_i(S)) ]
  ///   - sum_ij sum psi_ij Q_ij + beta^-1 sum_ij (H2[Q_ij] - H1[Q_i] - H1[Q_j])
  double free_energy(const RlbpState& st) const {
    double f = 0.0;
    std::vector<double> logits(q_);
    for (std::size_t i = 0; i < g_->n_vertices(); ++i) {
      const auto lam = st.multiplier(i);
      const auto qi = st.vertex(i);
      double term = 0.0;
      for (std::size_t s = 0; s < q_; ++s) term += lam[s] * qi[s];
      const auto& fld = fields_[i];
      double lse = 0.0;
      for (std::size_t k = 0; k < fld.weights.size(); ++k) {
        for (std::size_t s = 0; s < q_; ++s) logits[s] = beta_ * (fld.phi[k * q_ + s] + lam[s]);
        lse += fld.weights[k] * log_sum_exp(logits);
      }
      f += term - lse / beta_;
    }
    for (std::size_t e = 0; e < g_->n_edges(); ++e) {
      const auto qij = st.edge(e);
      const auto psi = pairs_.at(e);
      const Edge& ed = g_->edge(e);
      double energy = 0.0;
      for (std::size_t k = 0; k < q_ * q_; ++k)
        if (qij[k] > 0.0) energy -= psi[k] * qij[k];
      const double ent = neg_entropy(qij) - neg_entropy(st.vertex(ed.u)) - neg_entropy(st.vertex(ed.v));
      f += energy + ent / beta_;
    }
    return f;
  }

  /// Recompute Lambda, Q_i and Q_ij from the messages held in `st`.
  void finalize(RlbpState& st, double mu_floor = 1e-12) const {
    std::vector<double> log_mu(st.mu.size());
    for (std::size_t k = 0; k < st.mu.size(); ++k) log_mu[k] = std::log(std::max(st.mu[k], mu_floor));
    finalize(st, log_mu);
  }

 private:
  double boltz(std::size_t slot, std::size_t s_from, std::size_t s_to) const {
    const std::size_t e = slot / 2;
    return slot % 2 == 0 ? boltz_[(e * q_ + s_from) * q_ + s_to] : boltz_[(e * q_ + s_to) * q_ + s_from];
  }
  double psi(std::size_t slot, std::size_t s_from, std::size_t s_to) const {
    const std::size_t e = slot / 2;
    return slot % 2 == 0 ? pairs_.psi[(e * q_ + s_from) * q_ + s_to] : pairs_.psi[(e * q_ + s_to) * q_ + s_from];
  }

  void multiplier_from(const std::vector<double>& log_mu, std::size_t i, std::span<double> lam) const {
    std::fill(lam.begin(), lam.end(), 0.0);
    for (const auto& nb : g_->neighbors(i)) {
      const std::size_t in = g_->directed(nb.edge, nb.vertex);
      for (std::size_t s = 0; s < q_; ++s) lam[s] += log_mu[in * q_ + s];
    }
    for (double& v : lam) v /= beta_;
  }

  /// Q_i(S) = sum_k w_k softmax_S[beta (phi_i(S, h_k) + Lambda_i(S))]
  void integrate_vertex(std::size_t i, std::span<const double> lam, std::span<double> out,
                        std::span<double> logits) const {
    std::fill(out.begin(), out.end(), 0.0);
    const auto& fld = fields_[i];
    for (std::size_t k = 0; k < fld.weights.size(); ++k) {
      for (std::size_t s = 0; s < q_; ++s) logits[s] = beta_ * (fld.phi[k * q_ + s] + lam[s]);
      softmax_inplace(logits);
      for (std::size_t s = 0; s < q_; ++s) out[s] += fld.weights[k] * logits[s];
    }
    normalize_inplace(out);
  }

  void log_domain_message(std::size_t slot, std::span<const double> qv, std::span<const double> mu_back,
                          double floor, std::span<double> out) const {
    std::vector<double> terms(q_);
    for (std::size_t t = 0; t < q_; ++t) {
      for (std::size_t s = 0; s < q_; ++s) {
        terms[s] = (qv[s] > 0.0 ? std::log(qv[s]) : -std::numeric_limits<double>::infinity()) -
                   std::log(std::max(mu_back[s], floor)) + beta_ * psi(slot, s, t);
      }
      out[t] = log_sum_exp(terms);
    }
    softmax_inplace(out);
  }

  void finalize(RlbpState& st, const std::vector<double>& log_mu) const {
    const std::size_t n = g_->n_vertices();
    st.lambda.assign(n * q_, 0.0);
    st.q_vertex.assign(n * q_, 0.0);
    std::vector<double> scratch(q_);
    for (std::size_t i = 0; i < n; ++i) {
      std::span<double> lam(st.lambda.data() + i * q_, q_);
      multiplier_from(log_mu, i, lam);
      integrate_vertex(i, lam, std::span<double>(st.q_vertex.data() + i * q_, q_), scratch);
    }
    // Q_ij ∝ Q_i Q_j exp(beta psi) / (mu_{j->i}(S_i) mu_{i->j}(S_j)), in the log domain.
    st.q_edge.assign(g_->n_edges() * q_ * q_, 0.0);
    std::vector<double> joint(q_ * q_);
    constexpr double kNegInf = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < g_->n_edges(); ++e) {
      const Edge& ed = g_->edge(e);
      const auto qu = st.vertex(ed.u);
      const auto qv = st.vertex(ed.v);
      const auto psi_e = pairs_.at(e);
      const std::size_t to_u = 2 * e + 1;  // v -> u, indexed by S_u
      const std::size_t to_v = 2 * e;      // u -> v, indexed by S_v
      for (std::size_t s = 0; s < q_; ++s) {
        for (std::size_t t = 0; t < q_; ++t) {
          const double lq = (qu[s] > 0.0 ? std::log(qu[s]) : kNegInf) + (qv[t] > 0.0 ? std::log(qv[t]) : kNegInf);
          joint[s * q_ + t] = lq + beta_ * psi_e[s * q_ + t] - log_mu[to_u * q_ + s] - log_mu[to_v * q_ + t];
        }
      }
      if (std::all_of(joint.begin(), joint.end(), [](double x) { return x == kNegInf; })) {
        std::fill(joint.begin(), joint.end(), 0.0);
      }
      softmax_inplace(joint);
      std::copy(joint.begin(), joint.end(), st.q_edge.begin() + static_cast<std::ptrdiff_t>(e * q_ * q_));
    }
  }

  const Graph* g_;
  std::size_t q_;
  double beta_;
  std::vector<VertexField> fields_;
  PairTables pairs_;
  std::vector<double> boltz_;
};

/// Per-vertex field rules for a model; gaussian rules share one standard
/// Gauss-Hermite rule.
inline std::vector<VertexField> tabulate_fields(const MrfModel& model, std::size_t n_nodes) {
  const std::size_t q = model.q();
  std::vector<VertexField> out(model.n());
  QuadratureRule standard;
  for (std::size_t i = 0; i < model.n(); ++i) {
    const auto& dist = model.field_at(i);
    QuadratureRule rule;
    if (dist.kind == FieldDistribution::Kind::gaussian) {
      require(n_nodes >= 2, "gaussian quadrature needs at least two nodes");
      if (standard.size() != n_nodes) standard = standard_normal_rule(n_nodes);
      rule = standard;
      const double sd = std::sqrt(dist.variance);
      for (auto& x : rule.nodes) x = dist.mean + sd * x;
    } else {
      rule = build_quadrature(dist, n_nodes);
    }
    auto& vf = out[i];
    vf.weights = rule.weights;
    vf.phi.resize(rule.size() * q);
    const auto& u = model.unary_at(i);
    for (std::size_t k = 0; k < rule.size(); ++k)
      for (std::size_t s = 0; s < q; ++s) vf.phi[k * q + s] = u(s, model.states.value(s), rule.nodes[k]);
  }
  return out;
}

/// n^{-1} sum_i sum_S value(S) Q_i(S)
inline double quenched_magnetization(const RlbpState& st, const StateSpace& states) {
  const std::size_t n = st.q_vertex.size() / st.q;
  if (n == 0) return 0.0;
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < st.q; ++s) m += states.value(s) * st.q_vertex[i * st.q + s];
  return m / static_cast<double>(n);
}

inline RlbpEngine make_rlbp_engine(const MrfModel& model, std::span<const double> couplings, std::size_t n_nodes) {
  model.validate();
  return RlbpEngine(*model.graph, model.q(), model.beta, tabulate_fields(model, n_nodes),
                    tabulate_pairs(model, couplings));
}

inline RlbpResult run_rlbp(const MrfModel& model, std::span<const double> couplings, const RlbpOptions& opt = {}) {
  const auto engine = make_rlbp_engine(model, couplings, opt.n_nodes);
  auto r = engine.run(opt);
  r.report.quenched_magnetization = quenched_magnetization(r.state, model.states);
  return r;
}

inline double quenched_free_energy(const RlbpEngine& engine, const RlbpState& st) { return engine.free_energy(st); }

/// Results from the uniform (cold) and ordered starts; `best` indexes the
/// converged branch with the lower free energy (0 = cold, 1 = ordered).
struct RlbpBranches {
  RlbpResult cold;
  RlbpResult ordered;
  int best = 0;
  const RlbpResult& chosen() const { return best == 0 ? cold : ordered; }
};

inline RlbpBranches run_rlbp_branches(const RlbpEngine& engine, const StateSpace& states, RlbpOptions opt,
                                      const RlbpState* warm = nullptr) {
  RlbpBranches b;
  opt.init = MessageInit::uniform;
  b.cold = warm != nullptr ? engine.run(opt, *warm) : engine.run(opt);
  opt.init = MessageInit::ordered;
  b.ordered = engine.run(opt);
  b.cold.report.quenched_magnetization = quenched_magnetization(b.cold.state, states);
  b.ordered.report.quenched_magnetization = quenched_magnetization(b.ordered.state, states);
  const bool c_ok = b.cold.report.converged;
  const bool o_ok = b.ordered.report.converged;
  if (c_ok && o_ok) {
    b.best = b.ordered.report.quenched_free_energy < b.cold.report.quenched_free_energy ? 1 : 0;
  } else {
    b.best = o_ok && !c_ok ? 1 : 0;
  }
  return b;
}

}  // namespace qbp
