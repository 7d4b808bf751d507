// End-to-end acceptance run. One PASS/FAIL line per criterion; exit status is
// the number of failures (capped at 1).

#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "property_checks.hpp"
#include "qbp/exact.hpp"
#include "qbp/image.hpp"
#include "qbp/lbp.hpp"
#include "qbp/meanfield.hpp"
#include "qbp/quench.hpp"
#include "qbp/restore.hpp"
#include "qbp/rlbp.hpp"

using namespace qbp;

namespace {

struct Verdict {
  bool pass = false;
  std::string detail;
};

int failures = 0;

void criterion(int id, const char* name, double limit_s, const std::function<Verdict()>& body) {
  const auto t0 = std::chrono::steady_clock::now();
  Verdict v;
  try {
    v = body();
  } catch (const std::exception& e) {
    v = {false, std::string("exception: ") + e.what()};
  }
  const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
  const bool in_time = secs <= limit_s;
  const bool ok = v.pass && in_time;
  failures += ok ? 0 : 1;
  std::printf("%s %2d %s: %s [%.1f s of %.0f s%s]\n", ok ? "PASS" : "FAIL", id, name, v.detail.c_str(), secs, limit_s,
              in_time ? "" : ", too slow");
  std::fflush(stdout);
}

double max_diff(const std::vector<double>& a, const std::vector<double>& b) { return max_abs_diff(a, b); }

MrfModel spin_model(std::shared_ptr<const Graph> g, std::size_t q, std::vector<FieldDistribution> fields) {
  MrfModel m{std::move(g), StateSpace::spin(q), {UnaryPotential::linear_field()}, {PairPotential::product()}, 1.0,
             std::move(fields)};
  m.validate();
  return m;
}

std::string fmt(const char* f, double a) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, a);
  return buf;
}

// Rounding to the nearest of q levels under N(I, var) noise, straight from the
// normal CDF.
double rounding_error(const Image& img, double var) {
  const double sd = std::sqrt(var);
  auto cdf = [](double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); };
  double total = 0.0;
  for (std::size_t c = 0; c < img.channels; ++c) {
    double acc = 0.0;
    for (std::size_t i = 0; i < img.pixels(); ++i) {
      const int v = img.at(c, i);
      for (int k = 0; k < static_cast<int>(img.q); ++k) {
        const double lo = k == 0 ? 0.0 : cdf((k - 0.5 - v) / sd);
        const double hi = k + 1 == static_cast<int>(img.q) ? 1.0 : cdf((k + 0.5 - v) / sd);
        acc += (v - k) * (v - k) * (hi - lo);
      }
    }
    total += acc / static_cast<double>(img.pixels());
  }
  return total / static_cast<double>(img.channels);
}

Verdict tree_exactness() {
  Rng rng(101);
  double worst_f = 0.0, worst_b = 0.0;
  for (int t = 0; t < 20; ++t) {
    const std::size_t n = 2 + rng.below(9);
    const std::size_t q = 2 + rng.below(3);
    auto g = std::make_shared<Graph>(random_tree(n, rng));
    std::vector<double> h(n), j(g->n_edges());
    for (double& x : h) x = rng.normal();
    for (double& x : j) x = rng.normal(0.0, 0.7);
    const auto m = spin_model(g, q, std::vector<FieldDistribution>(n, FieldDistribution::delta(0.0)));
    const auto e = enumerate(m, h, j);
    const auto l = run_lbp(m, h, j, {.tol = 1e-13});
    if (!l.report.converged) return {false, "LBP did not converge on tree " + std::to_string(t)};
    worst_f = std::max(worst_f, std::abs(e.free_energy - l.report.bethe_free_energy));
    worst_b = std::max({worst_b, max_diff(e.unary_marginals, l.beliefs.unary), max_diff(e.pair_marginals, l.beliefs.pair)});
  }
  return {worst_f < 1e-8 && worst_b < 1e-8,
          "20 trees, max |dF| " + fmt("%.2e", worst_f) + ", max |db| " + fmt("%.2e", worst_b) + " (tol 1e-8)"};
}

Verdict delta_reduction() {
  Rng rng(202);
  double worst_f = 0.0, worst_b = 0.0;
  const std::vector<std::shared_ptr<Graph>> graphs{std::make_shared<Graph>(square_lattice(4, 4, Boundary::free)),
                                                   std::make_shared<Graph>(random_regular(20, 3, 203))};
  for (const auto& g : graphs) {
    for (std::size_t q : {2, 3}) {
      std::vector<double> h(g->n_vertices()), j(g->n_edges());
      std::vector<FieldDistribution> f;
      for (double& x : h) {
        x = rng.normal();
        f.push_back(FieldDistribution::delta(x));
      }
      for (double& x : j) x = rng.normal(0.2, 0.1);
      const auto m = spin_model(g, q, f);
      const auto l = run_lbp(m, h, j, {.tol = 1e-13});
      const auto r = run_rlbp(m, j, {.tol = 1e-13});
      if (!l.report.converged || !r.report.converged) return {false, "a run did not converge"};
      worst_f = std::max(worst_f, std::abs(l.report.bethe_free_energy - r.report.quenched_free_energy));
      worst_b = std::max({worst_b, max_diff(l.beliefs.unary, r.state.q_vertex), max_diff(l.beliefs.pair, r.state.q_edge)});
    }
  }
  return {worst_f < 1e-8 && worst_b < 1e-8,
          "lattice 4x4 and RRG(20,3), q=2,3: max |dF| " + fmt("%.2e", worst_f) + ", max |db| " + fmt("%.2e", worst_b)};
}

/// RLBP (branch with lower F, averaged over the coupling draws) against the MC
/// average of F_bethe / n.
struct Comparison {
  double f_rlbp = 0.0;
  QuenchStats mc;
  double z() const { return std::abs(f_rlbp - mc.mean) / mc.std_error; }
};

Comparison compare_quenched(const MrfModel& m, const InteractionEnsemble& ens, std::size_t n_field,
                            std::size_t n_coupling, std::uint64_t seed) {
  Comparison c;
  for (std::size_t k = 0; k < n_coupling; ++k) {
    const auto engine = make_rlbp_engine(m, coupling_realization(ens, *m.graph, seed, k), RlbpOptions{}.n_nodes);
    const auto b = run_rlbp_branches(engine, m.states, {});
    if (!b.chosen().report.converged) throw Error("RLBP did not converge");
    c.f_rlbp += b.chosen().report.quenched_free_energy / static_cast<double>(m.n());
  }
  c.f_rlbp /= static_cast<double>(n_coupling);
  c.mc = mc_quenched_average(m, ens, n_field, n_coupling, seed).free_energy;
  return c;
}

Verdict quenched_sweep(std::size_t side, std::size_t q, const std::vector<double>& sigmas,
                       const InteractionEnsemble& ens, std::size_t n_field, std::size_t n_coupling, std::uint64_t seed) {
  auto g = std::make_shared<Graph>(square_lattice(side, side, Boundary::free));
  bool ok = true;
  std::ostringstream d;
  for (double s : sigmas) {
    const auto m = spin_model(g, q, {FieldDistribution::gaussian(0.0, s * s)});
    const auto c = compare_quenched(m, ens, n_field, n_coupling, seed);
    ok = ok && c.z() < 3.0;
    d << "sigma=" << s << ": rlbp " << fmt("%.6f", c.f_rlbp) << " mc " << fmt("%.6f", c.mc.mean) << " +- "
      << fmt("%.6f", c.mc.std_error) << " (z " << fmt("%.2f", c.z()) << ", " << c.mc.n_excluded << " excluded); ";
  }
  return {ok, d.str()};
}

Verdict first_order_jump() {
  auto g = std::make_shared<Graph>(square_lattice(14, 14, Boundary::periodic));
  const auto m = spin_model(g, 2, {FieldDistribution::gaussian(0.0, 1.0)});
  std::vector<double> m_rlbp, m_lbp, js;
  std::optional<RlbpState> warm;
  for (int k = 0; k <= 15; ++k) {
    const double j = 0.80 + 0.01 * k;
    js.push_back(j);
    const auto engine = make_rlbp_engine(m, std::vector<double>(g->n_edges(), j), RlbpOptions{}.n_nodes);
    const auto b = run_rlbp_branches(engine, m.states, {}, warm ? &*warm : nullptr);
    if (!b.chosen().report.converged) throw Error("RLBP did not converge at J=" + fmt("%.2f", j));
    warm = b.cold.state;
    m_rlbp.push_back(std::abs(b.chosen().report.quenched_magnetization));
    const auto mc = mc_quenched_average(m, InteractionEnsemble::fixed(j), 200, 1, 505, {.init = MessageInit::ordered});
    m_lbp.push_back(mc.magnetization.mean);
  }
  double jump_rlbp = 0.0, jump_lbp = 0.0, at = 0.0;
  for (std::size_t k = 1; k < js.size(); ++k) {
    if (const double d = std::abs(m_rlbp[k] - m_rlbp[k - 1]); d > jump_rlbp) {
      jump_rlbp = d;
      at = js[k];
    }
    jump_lbp = std::max(jump_lbp, std::abs(m_lbp[k] - m_lbp[k - 1]));
  }
  return {jump_rlbp > 0.3 && jump_lbp < 0.1, "largest |M_RLBP| step " + fmt("%.3f", jump_rlbp) + " reaching J=" +
                                                  fmt("%.2f", at) + ", largest M_LBP step " + fmt("%.3f", jump_lbp)};
}

Verdict meanfield_exactness() {
  const auto mf = MeanFieldModel::ising(1.5, FieldDistribution::gaussian(0.0, 0.25));
  std::vector<double> gaps;
  std::ostringstream d;
  bool converged = true;
  for (std::size_t n : {100, 300, 1000}) {
    const auto c = verify_rlbp_on_complete_graph(n, mf);
    converged = converged && c.converged;
    gaps.push_back(std::abs(c.f_rlbp - c.f_exact));
    d << "n=" << n << " gap " << fmt("%.2e", gaps.back()) << "; ";
  }
  return {converged && gaps[2] < 1e-3 && gaps[0] > gaps[1] && gaps[1] > gaps[2], d.str()};
}

Verdict derivative_consistency() {
  auto g = std::make_shared<Graph>(square_lattice(4, 4, Boundary::free));
  const std::size_t q = 3;
  Rng rng(707);
  std::vector<FieldDistribution> f;
  for (std::size_t i = 0; i < 16; ++i) f.push_back(FieldDistribution::gaussian(rng.normal(0.0, 0.3), 0.5 + rng.uniform()));
  const auto m = spin_model(g, q, f);
  std::vector<double> j(g->n_edges());
  for (double& x : j) x = rng.normal(0.3, 0.1);
  const auto pairs = tabulate_pairs(m, j);
  const auto fields = tabulate_fields(m, RlbpOptions{}.n_nodes);
  const RlbpOptions opt{.tol = 1e-14};
  const auto base = RlbpEngine(*g, q, 1.0, fields, pairs).run(opt);
  if (!base.report.converged) return {false, "base run did not converge"};
  const double eps = 1e-4;
  double worst = 0.0;
  for (int t = 0; t < 4; ++t) {
    const std::size_t e = rng.below(g->n_edges()), s = rng.below(q), r = rng.below(q);
    auto at = [&](double d) {
      auto p = pairs;
      p.at(e)[s * q + r] += d;
      return RlbpEngine(*g, q, 1.0, fields, p).run(opt).report.quenched_free_energy;
    };
    worst = std::max(worst, std::abs((at(eps) - at(-eps)) / (2 * eps) + base.state.edge(e)[s * q + r]));
  }
  for (int t = 0; t < 4; ++t) {
    const std::size_t i = rng.below(16), s = rng.below(q);
    auto at = [&](double d) {
      auto fl = fields;
      for (std::size_t k = 0; k < fl[i].weights.size(); ++k) fl[i].phi[k * q + s] += d;
      return RlbpEngine(*g, q, 1.0, fl, pairs).run(opt).report.quenched_free_energy;
    };
    worst = std::max(worst, std::abs((at(eps) - at(-eps)) / (2 * eps) + base.state.vertex(i)[s]));
  }
  return {worst < 1e-5, "4 pair and 4 unary entries, max |dF/deps + Q| " + fmt("%.2e", worst) + " (tol 1e-5)"};
}

Verdict restoration_agreement(const Image& img) {
  struct Config {
    double alpha, sigma;
  };
  const std::vector<Config> configs{{0.2, 0.5}, {0.4, 0.5}, {0.8, 0.5}, {0.4, 0.3}, {0.4, 0.7}};
  bool ok = true;
  std::ostringstream d;
  for (auto xi : {Smoothness::quadratic, Smoothness::absolute}) {
    for (const auto& c : configs) {
      const RestoreParams p{c.alpha, c.sigma * c.sigma, xi};
      const auto a = dav_analytic(img, p);
      const auto s = mse_mc_average(img, p, 2000, 808);
      const double z = std::abs(a.value - s.mean) / s.std_error;
      const bool good = a.converged && z < 3.0;
      ok = ok && good;
      d << (xi == Smoothness::quadratic ? "quad" : "abs") << " a=" << c.alpha << " s=" << c.sigma << ": "
        << fmt("%.5f", a.value) << " vs " << fmt("%.5f", s.mean) << " +- " << fmt("%.5f", s.std_error) << " (z "
        << fmt("%.2f", z) << (good ? "" : " FAIL") << "); ";
    }
  }
  return {ok, d.str()};
}

Verdict no_prior_closed_form(const Image& img) {
  bool ok = true;
  std::ostringstream d;
  for (double sigma : {0.3, 0.5, 0.7}) {
    const RestoreParams p{.alpha = 0.0, .variance = sigma * sigma};
    const double closed = rounding_error(img, p.variance);
    const double a = dav_analytic(img, p).value;
    const auto s = mse_mc_average(img, p, 2000, 909);
    const double z = std::abs(s.mean - closed) / s.std_error;
    ok = ok && std::abs(a - closed) < 1e-6 && z < 3.0;
    d << "s=" << sigma << ": |analytic - closed| " << fmt("%.1e", std::abs(a - closed)) << ", mc z " << fmt("%.2f", z)
      << "; ";
  }
  return {ok, d.str()};
}

Verdict invariant_suite() {
  const auto lbp = checks::lbp_invariants(100, 2024);
  const auto rlbp = checks::rlbp_invariants(100, 2025);
  const auto seeds = checks::seed_reproducibility(100, 2026);
  std::ostringstream d;
  d << "lbp " << lbp.instances << " instances, " << lbp.failures << " failures; rlbp " << rlbp.instances
    << " instances, " << rlbp.failures << " failures; seeds " << seeds.instances << " instances, " << seeds.failures
    << " failures";
  for (const auto* o : {&lbp, &rlbp, &seeds})
    if (!o->ok()) d << "; first: " << o->first_failure;
  const bool ok = lbp.ok() && rlbp.ok() && seeds.ok() && lbp.instances >= 100 && rlbp.instances >= 100 &&
                  seeds.instances >= 100;
  return {ok, d.str()};
}

}  // namespace

int main() {
  const auto img = read_pnm(std::string(QBP_DATA_DIR) + "/test64.pgm", 8);
  std::printf("workers: %zu\n", worker_count());
  criterion(1, "tree exactness", 10, tree_exactness);
  criterion(2, "delta-field reduction", 10, delta_reduction);
  criterion(3, "quenched consistency, 8x8 q=2 J=0.2", 300, [] {
    return quenched_sweep(8, 2, {0.5, 1.0, 1.5}, InteractionEnsemble::fixed(0.2), 2000, 1, 303);
  });
  criterion(4, "disordered couplings, 14x14 q=5 delta=0.2", 900, [] {
    return quenched_sweep(14, 5, {0.5, 1.0}, InteractionEnsemble::gaussian(0.0, 0.04), 50, 20, 404);
  });
  criterion(5, "first-order jump, 14x14 periodic", 1200, first_order_jump);
  criterion(6, "mean-field exactness", 300, meanfield_exactness);
  criterion(7, "derivative consistency", 60, derivative_consistency);
  criterion(8, "restoration agreement", 1800, [&] { return restoration_agreement(img); });
  criterion(9, "alpha = 0 closed form", 120, [&] { return no_prior_closed_form(img); });
  criterion(10, "invariant suite", 300, invariant_suite);
  std::printf("%d of 10 criteria failed\n", failures);
  return failures == 0 ? 0 : 1;
}
