#pragma once

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <cstdlib>
#include <exception>
#include <functional>
#include <mutex>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include "qbp/errors.hpp"
#include "qbp/lbp.hpp"
#include "qbp/model.hpp"
#include "qbp/numeric.hpp"
#include "qbp/random.hpp"

namespace qbp {

inline constexpr const char* kWorkersEnv = "QBP_WORKERS";

/// Worker count from QBP_WORKERS, else the hardware concurrency (at least 1).
inline std::size_t worker_count() {
  if (const char* env = std::getenv(kWorkersEnv); env != nullptr && *env != '\0') {
    try {
      const long v = std::stol(env);
      if (v >= 1) return static_cast<std::size_t>(v);
    } catch (const std::exception&) {
    }
    throw InvalidArgument(std::string(kWorkersEnv) + " must be a positive integer");
  }
  return std::max<std::size_t>(1, std::thread::hardware_concurrency());
}

/// Runs body(k) for k in [0, n) on a small pool. Results must be written to
/// per-index slots so the outcome does not depend on scheduling.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body,
                         std::size_t workers = worker_count()) {
  workers = std::min(workers, n);
  if (workers <= 1) {
    for (std::size_t k = 0; k < n; ++k) body(k);
    return;
  }
  std::atomic<std::size_t> next{0};
  std::exception_ptr error;
  std::mutex error_mutex;
  auto loop = [&] {
    for (std::size_t k = next++; k < n; k = next++) {
      try {
        body(k);
      } catch (...) {
        std::lock_guard lock(error_mutex);
        if (!error) error = std::current_exception();
        next = n;
      }
    }
  };
  std::vector<std::thread> pool;
  for (std::size_t w = 1; w < workers; ++w) pool.emplace_back(loop);
  loop();
  for (auto& t : pool) t.join();
  if (error) std::rethrow_exception(error);
}

struct QuenchStats {
  double mean = 0.0;
  double std_dev = 0.0;    ///< sample standard deviation (n - 1)
  double std_error = 0.0;  ///< std_dev / sqrt(n_samples)
  std::size_t n_samples = 0;
  std::size_t n_excluded = 0;
};

inline QuenchStats summarize(std::span<const double> values, std::size_t n_excluded = 0) {
  QuenchStats s;
  s.n_samples = values.size();
  s.n_excluded = n_excluded;
  if (values.empty()) return s;
  s.mean = pairwise_sum(values) / static_cast<double>(values.size());
  if (values.size() > 1) {
    std::vector<double> sq(values.size());
    for (std::size_t k = 0; k < values.size(); ++k) sq[k] = (values[k] - s.mean) * (values[k] - s.mean);
    s.std_dev = std::sqrt(pairwise_sum(sq) / static_cast<double>(values.size() - 1));
    s.std_error = s.std_dev / std::sqrt(static_cast<double>(values.size()));
  }
  return s;
}

struct QuenchResult {
  QuenchStats free_energy;    ///< F_bethe / n
  QuenchStats magnetization;  ///< M_LBP
};

/// Couplings of realisation c. Coupling draws and field draws use disjoint
/// streams derived from the master seed.
inline std::vector<double> coupling_realization(const InteractionEnsemble& ensemble, const Graph& g,
                                                std::uint64_t seed, std::size_t c) {
  auto rng = Rng::stream(derive_seed(seed, 0), c);
  return sample_interactions(ensemble, g, rng);
}

inline std::vector<double> field_realization(const MrfModel& model, std::uint64_t seed, std::size_t c,
                                             std::size_t k) {
  auto rng = Rng::stream(derive_seed(seed, c + 1), k);
  return sample_fields(model, rng);
}

/// Monte-Carlo average of the Bethe free energy per variable and the LBP
/// magnetization over n_coupling x n_field realisations. Non-converged runs
/// are dropped and counted.
inline QuenchResult mc_quenched_average(const MrfModel& model, const InteractionEnsemble& ensemble,
                                        std::size_t n_field_samples, std::size_t n_coupling_samples,
                                        std::uint64_t seed, const LbpOptions& lbp = {},
                                        std::size_t workers = worker_count()) {
  model.validate();
  require(n_field_samples >= 1, "need at least one field sample");
  require(n_coupling_samples >= 1, "need at least one coupling sample");
  require(!ensemble.is_fixed() || n_coupling_samples == 1, "fixed couplings take a single coupling sample");

  const Graph& g = *model.graph;
  std::vector<PairTables> pairs(n_coupling_samples);
  for (std::size_t c = 0; c < n_coupling_samples; ++c)
    pairs[c] = tabulate_pairs(model, coupling_realization(ensemble, g, seed, c));

  const std::size_t total = n_field_samples * n_coupling_samples;
  std::vector<double> f(total), m(total);
  std::vector<char> ok(total, 0);
  const double n = static_cast<double>(model.n());
  parallel_for(
      total,
      [&](std::size_t idx) {
        const std::size_t c = idx / n_field_samples;
        const std::size_t k = idx % n_field_samples;
        const auto h = field_realization(model, seed, c, k);
        LbpEngine engine(g, model.q(), model.beta, tabulate_unary(model, h), pairs[c]);
        const auto r = engine.run(lbp);
        if (!r.report.converged) return;
        ok[idx] = 1;
        f[idx] = r.report.bethe_free_energy / n;
        m[idx] = magnetization(r.beliefs, model.states);
      },
      workers);

  std::vector<double> fk, mk;
  for (std::size_t idx = 0; idx < total; ++idx) {
    if (!ok[idx]) continue;
    fk.push_back(f[idx]);
    mk.push_back(m[idx]);
  }
  if (fk.empty()) throw AllSamplesFailed("no LBP run converged");
  const std::size_t excluded = total - fk.size();
  return {summarize(fk, excluded), summarize(mk, excluded)};
}

}  // namespace qbp
