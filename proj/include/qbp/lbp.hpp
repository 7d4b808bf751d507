#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "qbp/errors.hpp"
#include "qbp/graph.hpp"
#include "qbp/model.hpp"
#include "qbp/numeric.hpp"
#include "qbp/random.hpp"

namespace qbp {

enum class Schedule {
  sequential,  ///< directed slots 0, 1, ..., 2|E|-1 every sweep
  shuffled,    ///< one seeded random permutation of the slots, reused every sweep
};

enum class MessageInit {
  uniform,
  ordered,  ///< every message as if its sender sat in the highest-valued state
};

struct LbpOptions {
  double tol = 1e-9;
  std::size_t max_iter = 10'000;
  /// m <- (1 - damping) m_new + damping m_old. Unset: 0 on forests, 0.5 otherwise.
  std::optional<double> damping;
  Schedule schedule = Schedule::sequential;
  std::uint64_t seed = 0;
  MessageInit init = MessageInit::uniform;
};

/// Messages M_{i->j}(S_j), one length-q block per directed slot, each summing to 1.
struct MessageState {
  std::size_t q = 0;
  std::vector<double> values;

  std::span<double> at(std::size_t slot) { return {values.data() + slot * q, q}; }
  std::span<const double> at(std::size_t slot) const { return {values.data() + slot * q, q}; }
};

struct BeliefSet {
  std::size_t q = 0;
  std::vector<double> unary;  ///< n x q
  std::vector<double> pair;   ///< |E| x q x q, row = state of edge.u

  std::span<const double> vertex(std::size_t i) const { return {unary.data() + i * q, q}; }
  std::span<const double> edge(std::size_t e) const { return {pair.data() + e * q * q, q * q}; }
};

struct LbpReport {
  bool converged = false;
  std::size_t iterations = 0;
  double residual = std::numeric_limits<double>::infinity();
  double bethe_free_energy = 0.0;
};

struct LbpResult {
  MessageState messages;
  BeliefSet beliefs;
  LbpReport report;
};

inline bool is_forest(const Graph& g) {
  // Union-find: a forest never closes a cycle.
  std::vector<std::size_t> parent(g.n_vertices());
  std::iota(parent.begin(), parent.end(), std::size_t{0});
  auto find = [&](std::size_t x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  };
  for (const auto& e : g.edges()) {
    const auto a = find(e.u);
    const auto b = find(e.v);
    if (a == b) return false;
    parent[a] = b;
  }
  return true;
}

/// Sum-product loopy belief propagation on tabulated potentials.
///
/// Messages live in the linear domain and are renormalised after every update;
/// an update whose cavity product underflows is redone in the log domain.
class LbpEngine {
 public:
  /// `phi` is n x q (phi_i(s, h_i) for the realised fields).
  LbpEngine(const Graph& g, std::size_t q, double beta, std::vector<double> phi, PairTables pairs)
      : g_(&g), q_(q), beta_(beta), phi_(std::move(phi)), pairs_(std::move(pairs)) {
    require(beta_ > 0.0, "inverse temperature must be positive");
    require(phi_.size() == g.n_vertices() * q_, "unary table must be n x q");
    require(pairs_.q == q_ && pairs_.psi.size() == g.n_edges() * q_ * q_, "pair tables do not match graph");
    local_.resize(phi_.size());
    for (std::size_t i = 0; i < g.n_vertices(); ++i) {
      const auto row = std::span<const double>(phi_).subspan(i * q_, q_);
      const double m = *std::max_element(row.begin(), row.end());
      for (std::size_t s = 0; s < q_; ++s) local_[i * q_ + s] = std::exp(beta_ * (row[s] - m));
    }
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
  const std::vector<double>& phi() const { return phi_; }
  const PairTables& pairs() const { return pairs_; }

  MessageState initial_messages(MessageInit init) const {
    MessageState m{q_, std::vector<double>(g_->n_directed() * q_, 1.0 / static_cast<double>(q_))};
    if (init == MessageInit::ordered) {
      for (std::size_t slot = 0; slot < g_->n_directed(); ++slot) {
        auto out = m.at(slot);
        for (std::size_t t = 0; t < q_; ++t) out[t] = boltz(slot, q_ - 1, t);
        normalize_inplace(out);
      }
    }
    return m;
  }

  LbpResult run(const LbpOptions& opt = {}) const { return run(opt, initial_messages(opt.init)); }

  LbpResult run(const LbpOptions& opt, MessageState messages) const {
    LbpResult r;
    r.report = iterate(opt, messages);
    r.beliefs = beliefs(messages);
    r.report.bethe_free_energy = bethe_free_energy(r.beliefs);
    r.messages = std::move(messages);
    return r;
  }

  /// Message iteration only; bethe_free_energy is left at zero.
  LbpReport iterate(const LbpOptions& opt, MessageState& messages) const {
    require(messages.q == q_ && messages.values.size() == g_->n_directed() * q_,
            "initial messages do not match the graph");
    const double damping = opt.damping.value_or(is_forest(*g_) ? 0.0 : 0.5);
    require(damping >= 0.0 && damping < 1.0, "damping must lie in [0, 1)");

    std::vector<std::size_t> order(g_->n_directed());
    std::iota(order.begin(), order.end(), std::size_t{0});
    if (opt.schedule == Schedule::shuffled) {
      Rng rng(opt.seed);
      for (std::size_t k = order.size(); k > 1; --k) std::swap(order[k - 1], order[rng.below(k)]);
    }

    LbpReport report;
    std::vector<double> fresh(q_);
    std::vector<double> cav(q_);
    for (std::size_t it = 1; it <= opt.max_iter; ++it) {
      double residual = 0.0;
      for (std::size_t slot : order) {
        compute_message(messages, slot, fresh, cav);
        auto old = messages.at(slot);
        if (damping > 0.0) {
          for (std::size_t t = 0; t < q_; ++t) fresh[t] = (1.0 - damping) * fresh[t] + damping * old[t];
          normalize_inplace(fresh);
        }
        for (std::size_t t = 0; t < q_; ++t) {
          residual = std::max(residual, std::abs(fresh[t] - old[t]));
          old[t] = fresh[t];
        }
      }
      report.iterations = it;
      report.residual = residual;
      if (residual <= opt.tol) {
        report.converged = true;
        break;
      }
    }
    if (g_->n_directed() == 0) {
      report.converged = true;
      report.residual = 0.0;
    }
    return report;
  }

  /// b_i only, n x q.
  std::vector<double> unary_beliefs(const MessageState& msg) const {
    std::vector<double> out(g_->n_vertices() * q_);
    for (std::size_t i = 0; i < g_->n_vertices(); ++i) {
      std::span<double> row(out.data() + i * q_, q_);
      log_cavity(msg, i, kNoSlot, row);
      softmax_inplace(row);
    }
    return out;
  }

  /// Beliefs from an arbitrary positive message state (need not be normalised).
  BeliefSet beliefs(const MessageState& msg) const {
    BeliefSet b{q_, unary_beliefs(msg), std::vector<double>(g_->n_edges() * q_ * q_)};
    std::vector<double> lu(q_), lv(q_), joint(q_ * q_);
    for (std::size_t e = 0; e < g_->n_edges(); ++e) {
      const Edge& ed = g_->edge(e);
      // Cavities exclude the message travelling along e itself.
      log_cavity(msg, ed.u, 2 * e + 1, lu);
      log_cavity(msg, ed.v, 2 * e, lv);
      const auto psi = pairs_.at(e);
      for (std::size_t s = 0; s < q_; ++s)
        for (std::size_t t = 0; t < q_; ++t) joint[s * q_ + t] = lu[s] + lv[t] + beta_ * psi[s * q_ + t];
      softmax_inplace(joint);
      std::copy(joint.begin(), joint.end(), b.pair.begin() + static_cast<std::ptrdiff_t>(e * q_ * q_));
    }
    return b;
  }

  /// Variational Bethe free energy evaluated at the given beliefs.
  double bethe_free_energy(const BeliefSet& b) const {
    const std::size_t n = g_->n_vertices();
    double energy = 0.0;
    double entropy = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      const auto bi = b.vertex(i);
      for (std::size_t s = 0; s < q_; ++s)
        if (bi[s] > 0.0) energy -= phi_[i * q_ + s] * bi[s];
      entropy += (1.0 - static_cast<double>(g_->degree(i))) * neg_entropy(bi);
    }
    for (std::size_t e = 0; e < g_->n_edges(); ++e) {
      const auto bij = b.edge(e);
      const auto psi = pairs_.at(e);
      for (std::size_t k = 0; k < q_ * q_; ++k)
        if (bij[k] > 0.0) energy -= psi[k] * bij[k];
      entropy += neg_entropy(bij);
    }
    return energy + entropy / beta_;
  }

 private:
  static constexpr std::size_t kNoSlot = std::numeric_limits<std::size_t>::max();

  /// exp(beta psi) (shifted) for a message on `slot`, indexed by (sender state, receiver state).
  double boltz(std::size_t slot, std::size_t s_from, std::size_t s_to) const {
    const std::size_t e = slot / 2;
    const bool forward = slot % 2 == 0;
    return forward ? boltz_[(e * q_ + s_from) * q_ + s_to] : boltz_[(e * q_ + s_to) * q_ + s_from];
  }

  double psi(std::size_t slot, std::size_t s_from, std::size_t s_to) const {
    const std::size_t e = slot / 2;
    const bool forward = slot % 2 == 0;
    return forward ? pairs_.psi[(e * q_ + s_from) * q_ + s_to] : pairs_.psi[(e * q_ + s_to) * q_ + s_from];
  }

  /// beta phi_i + sum of log incoming messages, skipping incoming slot `skip`.
  void log_cavity(const MessageState& msg, std::size_t i, std::size_t skip, std::span<double> out) const {
    for (std::size_t s = 0; s < q_; ++s) out[s] = beta_ * phi_[i * q_ + s];
    for (const auto& nb : g_->neighbors(i)) {
      const std::size_t in = g_->directed(nb.edge, nb.vertex);
      if (in == skip) continue;
      const auto m = msg.at(in);
      for (std::size_t s = 0; s < q_; ++s)
        out[s] += m[s] > 0.0 ? std::log(m[s]) : -std::numeric_limits<double>::infinity();
    }
  }

  void compute_message(const MessageState& msg, std::size_t slot, std::span<double> out,
                       std::span<double> cav) const {
    const std::size_t i = g_->source(slot);
    const std::size_t back = Graph::reverse(slot);
    for (std::size_t s = 0; s < q_; ++s) cav[s] = local_[i * q_ + s];
    for (const auto& nb : g_->neighbors(i)) {
      const std::size_t in = g_->directed(nb.edge, nb.vertex);
      if (in == back) continue;
      const auto m = msg.at(in);
      for (std::size_t s = 0; s < q_; ++s) cav[s] *= m[s];
    }
    double total = 0.0;
    for (double c : cav) total += c;
    if (total > 1e-250 && std::isfinite(total)) {
      for (std::size_t s = 0; s < q_; ++s) cav[s] /= total;
      for (std::size_t t = 0; t < q_; ++t) {
        double acc = 0.0;
        for (std::size_t s = 0; s < q_; ++s) acc += cav[s] * boltz(slot, s, t);
        out[t] = acc;
      }
      if (normalize_inplace(out)) return;
    }
    // Log-domain fallback.
    log_cavity(msg, i, back, cav);
    std::vector<double> terms(q_);
    for (std::size_t t = 0; t < q_; ++t) {
      for (std::size_t s = 0; s < q_; ++s) terms[s] = cav[s] + beta_ * psi(slot, s, t);
      out[t] = log_sum_exp(terms);
    }
    softmax_inplace(out);
  }

  const Graph* g_;
  std::size_t q_;
  double beta_;
  std::vector<double> phi_;
  PairTables pairs_;
  std::vector<double> local_;  ///< exp(beta (phi - max phi)) per vertex
  std::vector<double> boltz_;  ///< exp(beta (psi - max psi)) per edge
};

inline LbpResult run_lbp(const MrfModel& model, std::span<const double> fields, std::span<const double> couplings,
                         const LbpOptions& opt = {}) {
  model.validate();
  LbpEngine engine(*model.graph, model.q(), model.beta, tabulate_unary(model, fields),
                   tabulate_pairs(model, couplings));
  return engine.run(opt);
}

/// n^{-1} sum_i sum_S value(S) b_i(S)
inline double magnetization(const BeliefSet& beliefs, const StateSpace& states) {
  const std::size_t q = beliefs.q;
  const std::size_t n = beliefs.unary.size() / q;
  if (n == 0) return 0.0;
  double m = 0.0;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t s = 0; s < q; ++s) m += states.value(s) * beliefs.unary[i * q + s];
  return m / static_cast<double>(n);
}

}  // namespace qbp
