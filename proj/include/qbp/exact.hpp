#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <span>
#include <vector>

#include "qbp/errors.hpp"
#include "qbp/model.hpp"

namespace qbp {

/// Exact partition function and marginals, obtained by summing over all q^n
/// configurations.
struct ExactResult {
  double log_z = 0.0;
  double free_energy = 0.0;             ///< -ln Z / beta
  std::vector<double> unary_marginals;  ///< n x q
  std::vector<double> pair_marginals;   ///< |E| x q x q, row = state of edge.u
};

struct EnumerateOptions {
  double max_configurations = 2e7;
};

/// Enumeration over tabulated potentials. `phi` is n x q, `pairs` as produced by
/// tabulate_pairs.
inline ExactResult enumerate(const Graph& g, std::size_t q, double beta, std::span<const double> phi,
                             const PairTables& pairs, EnumerateOptions opt = {}) {
  const std::size_t n = g.n_vertices();
  if (std::pow(static_cast<double>(q), static_cast<double>(n)) > opt.max_configurations) {
    throw InstanceTooLarge("q^n exceeds enumeration cap");
  }
  std::vector<std::size_t> config(n, 0);

  auto log_weight = [&]() {
    double e = 0.0;
    for (std::size_t i = 0; i < n; ++i) e += phi[i * q + config[i]];
    for (std::size_t k = 0; k < g.n_edges(); ++k) {
      const Edge& ed = g.edge(k);
      e += pairs.psi[(k * q + config[ed.u]) * q + config[ed.v]];
    }
    return beta * e;
  };
  // Mixed-radix increment; returns false after the last configuration.
  auto advance = [&]() {
    for (std::size_t i = 0; i < n; ++i) {
      if (++config[i] < q) return true;
      config[i] = 0;
    }
    return false;
  };

  double max_w = -std::numeric_limits<double>::infinity();
  do {
    max_w = std::max(max_w, log_weight());
  } while (advance());

  ExactResult r;
  r.unary_marginals.assign(n * q, 0.0);
  r.pair_marginals.assign(g.n_edges() * q * q, 0.0);
  double z = 0.0;
  std::fill(config.begin(), config.end(), 0);
  do {
    const double w = std::exp(log_weight() - max_w);
    z += w;
    for (std::size_t i = 0; i < n; ++i) r.unary_marginals[i * q + config[i]] += w;
    for (std::size_t k = 0; k < g.n_edges(); ++k) {
      const Edge& ed = g.edge(k);
      r.pair_marginals[(k * q + config[ed.u]) * q + config[ed.v]] += w;
    }
  } while (advance());

  for (double& v : r.unary_marginals) v /= z;
  for (double& v : r.pair_marginals) v /= z;
  r.log_z = max_w + std::log(z);
  r.free_energy = -r.log_z / beta;
  return r;
}

inline ExactResult enumerate(const MrfModel& model, std::span<const double> fields,
                             std::span<const double> couplings, EnumerateOptions opt = {}) {
  model.validate();
  const auto phi = tabulate_unary(model, fields);
  const auto pairs = tabulate_pairs(model, couplings);
  return enumerate(*model.graph, model.q(), model.beta, phi, pairs, opt);
}

}  // namespace qbp
