#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <vector>

#include "qbp/errors.hpp"
#include "qbp/graph.hpp"
#include "qbp/image.hpp"
#include "qbp/lbp.hpp"
#include "qbp/model.hpp"
#include "qbp/quench.hpp"
#include "qbp/random.hpp"
#include "qbp/rlbp.hpp"

namespace qbp {

enum class Smoothness {
  quadratic,  ///< -(S - S')^2 / 2
  absolute,   ///< -|S - S'|
};

struct RestoreParams {
  double alpha = 0.4;
  double variance = 0.25;
  Smoothness xi = Smoothness::quadratic;
  std::size_t q = 8;

  void validate() const {
    require(alpha >= 0.0 && std::isfinite(alpha), "alpha must be non-negative");
    require(variance > 0.0 && std::isfinite(variance), "noise variance must be positive");
    require(q >= 2, "need at least two intensity levels");
  }
};

/// Restoration runs many LBP solves per parameter point; MPM only needs the
/// argmax of b_i, so the stopping rule is looser than the library default.
inline LbpOptions restoration_lbp_options() { return {.tol = 1e-6, .max_iter = 2000, .damping = 0.0}; }

inline DegradedImage degrade(const Image& img, double variance, std::uint64_t seed) {
  img.validate();
  require(variance > 0.0, "noise variance must be positive");
  Rng rng(seed);
  const double sd = std::sqrt(variance);
  DegradedImage out{img.width, img.height, img.channels, std::vector<double>(img.data.size())};
  for (std::size_t k = 0; k < img.data.size(); ++k) out.values[k] = img.data[k] + rng.normal(0.0, sd);
  return out;
}

/// Mean squared error per pixel, averaged over channels.
inline double mse(const Image& a, const Image& b) {
  require(a.width == b.width && a.height == b.height && a.channels == b.channels, "image dimensions differ");
  if (a.data.empty()) return 0.0;
  double total = 0.0;
  for (std::size_t c = 0; c < a.channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < a.pixels(); ++i) {
      const double d = a.at(c, i) - b.at(c, i);
      acc += d * d;
    }
    total += acc / static_cast<double>(a.pixels());
  }
  return total / static_cast<double>(a.channels);
}

/// Posterior on a width x height free lattice:
///   phi_i(S, h) = -(S - h)^2 / (2 sigma^2),  psi = alpha xi(S, S'),  beta = 1.
inline MrfModel posterior_model(std::size_t width, std::size_t height, const RestoreParams& p,
                                std::vector<FieldDistribution> fields) {
  p.validate();
  auto g = std::make_shared<Graph>(square_lattice(width, height, Boundary::free));
  const auto pair = p.xi == Smoothness::quadratic ? PairPotential::quadratic() : PairPotential::absolute();
  MrfModel m{std::move(g), StateSpace::intensity(p.q), {UnaryPotential::gaussian_likelihood(p.variance)}, {pair},
             1.0, std::move(fields)};
  m.validate();
  return m;
}

struct RestoreResult {
  Image image;
  std::size_t channels_not_converged = 0;
  bool converged() const { return channels_not_converged == 0; }
};

/// MPM restoration, one LBP solve per channel. Ties go to the lower level.
class Restorer {
 public:
  Restorer(std::size_t width, std::size_t height, RestoreParams params)
      : params_(params), model_(posterior_model(width, height, params, {FieldDistribution::delta(0.0)})) {
    pairs_ = tabulate_pairs(model_, std::vector<double>(model_.graph->n_edges(), params_.alpha));
  }

  const RestoreParams& params() const { return params_; }

  RestoreResult restore(const DegradedImage& h, const LbpOptions& opt = restoration_lbp_options()) const {
    const Graph& g = *model_.graph;
    require(h.pixels() == g.n_vertices(), "degraded image does not match the restorer size");
    RestoreResult r{Image(h.width, h.height, h.channels, params_.q)};
    const std::size_t q = params_.q;
    for (std::size_t c = 0; c < h.channels; ++c) {
      std::span<const double> fields(h.values.data() + c * h.pixels(), h.pixels());
      LbpEngine engine(g, q, 1.0, tabulate_unary(model_, fields), pairs_);
      auto msg = engine.initial_messages(opt.init);
      if (!engine.iterate(opt, msg).converged) ++r.channels_not_converged;
      const auto b = engine.unary_beliefs(msg);
      for (std::size_t i = 0; i < h.pixels(); ++i) {
        const auto row = std::span<const double>(b).subspan(i * q, q);
        r.image.at(c, i) = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
      }
    }
    return r;
  }

 private:
  RestoreParams params_;
  MrfModel model_;
  PairTables pairs_;
};

inline RestoreResult restore_mpm(const DegradedImage& h, const RestoreParams& p,
                                 const LbpOptions& opt = restoration_lbp_options()) {
  return Restorer(h.width, h.height, p).restore(h, opt);
}

/// MSE over n_samples independent degrade -> restore runs. Runs whose LBP did
/// not converge are dropped and counted.
inline QuenchStats mse_mc_average(const Image& original, const RestoreParams& p, std::size_t n_samples,
                                  std::uint64_t seed, const LbpOptions& opt = restoration_lbp_options(),
                                  std::size_t workers = worker_count()) {
  original.validate();
  require(n_samples >= 1, "need at least one sample");
  require(original.q == p.q, "image levels do not match q");
  const Restorer restorer(original.width, original.height, p);
  std::vector<double> err(n_samples);
  std::vector<char> ok(n_samples, 0);
  parallel_for(
      n_samples,
      [&](std::size_t k) {
        const auto r = restorer.restore(degrade(original, p.variance, derive_seed(seed, k)), opt);
        if (!r.converged()) return;
        ok[k] = 1;
        err[k] = mse(original, r.image);
      },
      workers);
  std::vector<double> kept;
  for (std::size_t k = 0; k < n_samples; ++k)
    if (ok[k]) kept.push_back(err[k]);
  if (kept.empty()) throw AllSamplesFailed("no restoration run converged");
  return summarize(kept, n_samples - kept.size());
}

/// r(h) = argmax_S [ -(S - h)^2 / (2 sigma^2) + Lambda(S) ], ties to the lower level.
inline std::size_t restored_level(double h, std::span<const double> lambda, double variance) {
  std::size_t best = 0;
  double best_score = -std::numeric_limits<double>::infinity();
  for (std::size_t s = 0; s < lambda.size(); ++s) {
    const double d = static_cast<double>(s) - h;
    const double score = -d * d / (2.0 * variance) + lambda[s];
    if (score > best_score) {
      best_score = score;
      best = s;
    }
  }
  return best;
}

namespace detail {

/// P(lo < X < hi) for X ~ N(mean, variance), without cancellation in the tails.
inline double normal_interval(double lo, double hi, double mean, double variance) {
  const double sd = std::sqrt(variance);
  const double a = (lo - mean) / (sd * std::sqrt(2.0));
  const double b = (hi - mean) / (sd * std::sqrt(2.0));
  if (a >= 0.0) return 0.5 * (std::erfc(a) - std::erfc(b));
  if (b <= 0.0) return 0.5 * (std::erfc(-b) - std::erfc(-a));
  return 1.0 - 0.5 * std::erfc(-a) - 0.5 * std::erfc(b);
}

}  // namespace detail

/// int dh N(h | level, sigma^2) (level - r(h))^2, exact over the intervals on
/// which r is constant. Dropping the common -h^2 / (2 sigma^2) leaves scores
/// a_S + h S / sigma^2, so r follows the upper envelope of q lines.
inline double expected_squared_error(int level, std::span<const double> lambda, double variance) {
  const std::size_t q = lambda.size();
  std::vector<double> a(q), b(q);
  for (std::size_t s = 0; s < q; ++s) {
    a[s] = lambda[s] - static_cast<double>(s * s) / (2.0 * variance);
    b[s] = static_cast<double>(s) / variance;
  }
  auto cross = [&](std::size_t s, std::size_t t) { return (a[s] - a[t]) / (b[t] - b[s]); };
  std::vector<std::size_t> hull;
  for (std::size_t s = 0; s < q; ++s) {
    while (hull.size() >= 2 && cross(hull[hull.size() - 2], s) <= cross(hull[hull.size() - 2], hull.back()))
      hull.pop_back();
    hull.push_back(s);
  }
  double acc = 0.0;
  double lo = -std::numeric_limits<double>::infinity();
  for (std::size_t k = 0; k < hull.size(); ++k) {
    const double hi = k + 1 < hull.size() ? cross(hull[k], hull[k + 1]) : std::numeric_limits<double>::infinity();
    if (hi > lo) {
      const double d = level - static_cast<double>(hull[k]);
      acc += d * d * detail::normal_interval(lo, hi, level, variance);
      lo = hi;
    }
  }
  return acc;
}

struct DavResult {
  double value = 0.0;
  bool converged = true;
  std::size_t iterations = 0;  ///< largest over channels
};

/// Analytic average MSE: RLBP on the posterior with p_i(h) = N(h | I_i, sigma^2),
/// then the per-pixel expected error of r_i(h).
inline DavResult dav_analytic(const Image& original, const RestoreParams& p, const RlbpOptions& opt = {}) {
  original.validate();
  require(original.q == p.q, "image levels do not match q");
  DavResult out;
  for (std::size_t c = 0; c < original.channels; ++c) {
    std::vector<FieldDistribution> fields(original.pixels());
    for (std::size_t i = 0; i < original.pixels(); ++i)
      fields[i] = FieldDistribution::gaussian(original.at(c, i), p.variance);
    const auto model = posterior_model(original.width, original.height, p, std::move(fields));
    const auto r = run_rlbp(model, std::vector<double>(model.graph->n_edges(), p.alpha), opt);
    out.converged = out.converged && r.report.converged;
    out.iterations = std::max(out.iterations, r.report.iterations);
    double acc = 0.0;
    for (std::size_t i = 0; i < original.pixels(); ++i)
      acc += expected_squared_error(original.at(c, i), r.state.multiplier(i), p.variance);
    out.value += acc / static_cast<double>(original.pixels());
  }
  out.value /= static_cast<double>(original.channels);
  return out;
}

}  // namespace qbp
