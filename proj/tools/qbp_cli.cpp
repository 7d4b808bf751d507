// qbp: experiment harness. Every subcommand writes CSV (or images) and exits
// non-zero under --strict if any run failed to converge.

#include <cmath>
#include <cstdint>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "qbp/csv.hpp"
#include "qbp/exact.hpp"
#include "qbp/image.hpp"
#include "qbp/lbp.hpp"
#include "qbp/meanfield.hpp"
#include "qbp/quench.hpp"
#include "qbp/restore.hpp"
#include "qbp/rlbp.hpp"

using namespace qbp;

namespace {

struct Range {
  double from = 0.0;
  double to = 0.0;
  double step = 1.0;

  std::vector<double> values() const {
    require(step > 0.0, "sweep step must be positive");
    require(to >= from, "sweep end must not precede its start");
    const auto n = static_cast<std::size_t>(std::floor((to - from) / step + 1e-9)) + 1;
    std::vector<double> v(n);
    for (std::size_t k = 0; k < n; ++k) v[k] = from + static_cast<double>(k) * step;
    return v;
  }
};

std::string num(double v) { return format_number(v); }
std::string num(std::size_t v) { return std::to_string(v); }

/// Writes to a file, or stdout for "-".
class Sink {
 public:
  explicit Sink(const std::string& path) {
    if (path != "-") {
      file_.open(path);
      if (!file_) throw Error("cannot write " + path);
    }
  }
  std::ostream& stream() { return file_.is_open() ? file_ : std::cout; }

 private:
  std::ofstream file_;
};

// ---------------------------------------------------------------- sweep-quenched

struct SweepArgs {
  std::string graph = "lattice";
  std::size_t width = 8, height = 8;
  std::string boundary = "free";
  std::size_t n = 200, degree = 4;
  std::uint64_t graph_seed = 1;
  std::size_t q = 2;
  double beta = 1.0;
  std::string param = "sigma";
  Range range{0.2, 2.0, 0.2};
  double coupling = 0.2;  // J, or the mean c when delta > 0
  double sigma = 1.0;
  double field_mean = 0.0;
  double delta = 0.0;
  std::size_t field_samples = 2000;
  std::size_t coupling_samples = 20;
  std::size_t nodes = RlbpOptions{}.n_nodes;
  std::string lbp_init = "uniform";
  std::string output = "-";
  std::uint64_t seed = 0;
};

int sweep_quenched(const SweepArgs& a, bool strict) {
  require(a.param == "sigma" || a.param == "J" || a.param == "c", "sweep parameter must be sigma, J or c");
  require(a.lbp_init == "uniform" || a.lbp_init == "ordered", "lbp-init must be uniform or ordered");
  std::shared_ptr<Graph> g;
  if (a.graph == "lattice") {
    require(a.boundary == "free" || a.boundary == "periodic", "boundary must be free or periodic");
    g = std::make_shared<Graph>(
        square_lattice(a.width, a.height, a.boundary == "free" ? Boundary::free : Boundary::periodic));
  } else if (a.graph == "rrg") {
    g = std::make_shared<Graph>(random_regular(a.n, a.degree, a.graph_seed));
  } else {
    throw InvalidArgument("graph must be lattice or rrg");
  }
  const bool disordered = a.delta > 0.0;
  const std::size_t n_couplings = disordered ? a.coupling_samples : 1;
  const auto points = a.range.values();
  const LbpOptions lbp{.init = a.lbp_init == "ordered" ? MessageInit::ordered : MessageInit::uniform};

  Sink sink(a.output);
  CsvWriter csv(sink.stream());
  ConfigRecord cfg{{"command", "sweep-quenched"}, {"graph", a.graph}};
  if (a.graph == "lattice") {
    cfg.insert(cfg.end(), {{"width", num(a.width)}, {"height", num(a.height)}, {"boundary", a.boundary}});
  } else {
    cfg.insert(cfg.end(), {{"n", num(a.n)}, {"degree", num(a.degree)}, {"graph-seed", std::to_string(a.graph_seed)}});
  }
  cfg.insert(cfg.end(), {{"q", num(a.q)},
                         {"beta", num(a.beta)},
                         {"param", a.param},
                         {"from", num(a.range.from)},
                         {"to", num(a.range.to)},
                         {"step", num(a.range.step)},
                         {"J", num(a.coupling)},
                         {"sigma", num(a.sigma)},
                         {"field-mean", num(a.field_mean)},
                         {"delta", num(a.delta)},
                         {"field-samples", num(a.field_samples)},
                         {"coupling-samples", num(n_couplings)},
                         {"nodes", num(a.nodes)},
                         {"lbp-init", a.lbp_init},
                         {"seed", std::to_string(a.seed)}});
  csv.config(cfg);
  csv.header({a.param, "f_rlbp", "f_mc_mean", "f_mc_std_error", "n_excluded", "m_rlbp", "m_lbp_mean"});

  bool all_converged = true;
  std::vector<std::optional<RlbpState>> warm(n_couplings);
  for (double x : points) {
    const double sigma = a.param == "sigma" ? x : a.sigma;
    const double j = a.param == "sigma" ? a.coupling : x;
    require(sigma >= 0.0, "sigma must be non-negative");
    const auto field = sigma > 0.0 ? FieldDistribution::gaussian(a.field_mean, sigma * sigma)
                                   : FieldDistribution::delta(a.field_mean);
    const auto model = make_model(g, StateSpace::spin(a.q), UnaryPotential::linear_field(),
                                  PairPotential::product(), a.beta, field);
    const auto ens = disordered ? InteractionEnsemble::gaussian(j, a.delta * a.delta) : InteractionEnsemble::fixed(j);

    double f_rlbp = 0.0, m_rlbp = 0.0;
    for (std::size_t c = 0; c < n_couplings; ++c) {
      const auto engine = make_rlbp_engine(model, coupling_realization(ens, *g, a.seed, c), a.nodes);
      const auto b = run_rlbp_branches(engine, model.states, {.n_nodes = a.nodes}, warm[c] ? &*warm[c] : nullptr);
      const auto& r = b.chosen();
      all_converged = all_converged && r.report.converged;
      warm[c] = b.cold.state;
      f_rlbp += r.report.quenched_free_energy / static_cast<double>(g->n_vertices());
      m_rlbp += r.report.quenched_magnetization;
    }
    f_rlbp /= static_cast<double>(n_couplings);
    m_rlbp /= static_cast<double>(n_couplings);

    const auto mc = mc_quenched_average(model, ens, a.field_samples, n_couplings, a.seed, lbp);
    all_converged = all_converged && mc.free_energy.n_excluded == 0;
    csv.row({num(x), num(f_rlbp), num(mc.free_energy.mean), num(mc.free_energy.std_error),
             num(mc.free_energy.n_excluded), num(m_rlbp), num(mc.magnetization.mean)});
    sink.stream().flush();
  }
  if (!all_converged) std::cerr << "warning: some runs did not converge\n";
  return strict && !all_converged ? 3 : 0;
}

// ---------------------------------------------------------------- meanfield

struct MeanFieldArgs {
  std::size_t q = 2;
  Range beta{0.5, 2.0, 0.25};
  Range sigma{0.0, 0.0, 1.0};
  std::vector<std::size_t> sizes;
  std::size_t nodes = RlbpOptions{}.n_nodes;
  std::string output = "-";
};

int meanfield(const MeanFieldArgs& a, bool strict) {
  Sink sink(a.output);
  CsvWriter csv(sink.stream());
  std::string sizes;
  for (std::size_t n : a.sizes) sizes += (sizes.empty() ? "" : ";") + std::to_string(n);
  csv.config({{"command", "meanfield"},
              {"q", num(a.q)},
              {"beta-from", num(a.beta.from)},
              {"beta-to", num(a.beta.to)},
              {"beta-step", num(a.beta.step)},
              {"sigma-from", num(a.sigma.from)},
              {"sigma-to", num(a.sigma.to)},
              {"sigma-step", num(a.sigma.step)},
              {"n", sizes.empty() ? "none" : sizes},
              {"nodes", num(a.nodes)}});
  csv.header({"beta", "sigma", "branch", "m", "f", "n", "f_rlbp", "gap"});
  bool all_converged = true;
  const auto st = StateSpace::spin(a.q);
  for (double beta : a.beta.values()) {
    for (double sigma : a.sigma.values()) {
      const auto field = sigma > 0.0 ? FieldDistribution::gaussian(0.0, sigma * sigma) : FieldDistribution::delta(0.0);
      const MeanFieldModel mf{st, st.values(), UnaryPotential::linear_field(), beta, field};
      const auto saddles = solve_saddle(mf, {.n_nodes = a.nodes});
      for (std::size_t b = 0; b < saddles.size(); ++b)
        csv.row({num(beta), num(sigma), num(b), num(saddles[b].m), num(saddles[b].f), "", "", ""});
      for (std::size_t n : a.sizes) {
        const auto c = verify_rlbp_on_complete_graph(n, mf, {.n_nodes = a.nodes});
        all_converged = all_converged && c.converged;
        csv.row({num(beta), num(sigma), "rlbp", num(c.m_rlbp), num(c.f_exact), num(n), num(c.f_rlbp), num(c.gap)});
      }
      sink.stream().flush();
    }
  }
  if (!all_converged) std::cerr << "warning: some runs did not converge\n";
  return strict && !all_converged ? 3 : 0;
}

// ---------------------------------------------------------------- restore

struct RestoreArgs {
  std::string mode = "restore";
  std::string input;
  std::string reference;
  std::string output = "-";
  std::string degraded;
  double alpha = 0.4;
  double sigma = 0.5;
  std::string xi = "quadratic";
  std::size_t q = 8;
  std::size_t samples = 2000;
  std::string sweep;
  Range range{0.1, 1.0, 0.1};
  std::uint64_t seed = 0;
};

Image to_image(const DegradedImage& d, std::size_t q) {
  Image img(d.width, d.height, d.channels, q);
  for (std::size_t k = 0; k < d.values.size(); ++k)
    img.data[k] = std::clamp(static_cast<int>(std::lround(d.values[k])), 0, static_cast<int>(q) - 1);
  return img;
}

int restore(const RestoreArgs& a, bool strict) {
  require(a.xi == "quadratic" || a.xi == "absolute", "xi must be quadratic or absolute");
  require(!a.input.empty(), "--input is required");
  require(a.sigma > 0.0, "sigma must be positive");
  const auto xi = a.xi == "quadratic" ? Smoothness::quadratic : Smoothness::absolute;
  const RestoreParams base{a.alpha, a.sigma * a.sigma, xi, a.q};
  const auto img = read_pnm(a.input, a.q);

  if (a.mode == "degrade" || a.mode == "restore") {
    require(a.output != "-", "image modes need --output");
    const auto d = degrade(img, base.variance, a.seed);
    if (a.mode == "degrade") {
      write_pnm(a.output, to_image(d, a.q));
      return 0;
    }
    if (!a.degraded.empty()) write_pnm(a.degraded, to_image(d, a.q));
    const auto r = restore_mpm(d, base);
    write_pnm(a.output, r.image);
    std::cerr << "mse " << format_number(mse(img, r.image)) << '\n';
    if (!r.converged()) std::cerr << "warning: LBP did not converge\n";
    return strict && !r.converged() ? 3 : 0;
  }

  Sink sink(a.output);
  CsvWriter csv(sink.stream());
  ConfigRecord cfg{{"command", "restore"}, {"mode", a.mode}, {"input", a.input}};
  if (a.mode == "score") {
    require(!a.reference.empty(), "score mode needs --reference");
    cfg.emplace_back("reference", a.reference);
    csv.config(cfg);
    csv.header({"mse"});
    csv.row({num(mse(img, read_pnm(a.reference, a.q)))});
    return 0;
  }
  require(a.mode == "dav" || a.mode == "mc", "mode must be degrade, restore, score, dav or mc");
  require(a.sweep.empty() || a.sweep == "alpha" || a.sweep == "sigma", "sweep must be alpha or sigma");
  cfg.insert(cfg.end(), {{"alpha", num(a.alpha)}, {"sigma", num(a.sigma)}, {"xi", a.xi}, {"q", num(a.q)}});
  if (!a.sweep.empty())
    cfg.insert(cfg.end(),
               {{"sweep", a.sweep}, {"from", num(a.range.from)}, {"to", num(a.range.to)}, {"step", num(a.range.step)}});
  if (a.mode == "mc") cfg.insert(cfg.end(), {{"samples", num(a.samples)}, {"seed", std::to_string(a.seed)}});
  csv.config(cfg);
  const std::string pname = a.sweep.empty() ? "alpha" : a.sweep;
  if (a.mode == "dav") {
    csv.header({pname, "d_av_analytic"});
  } else {
    csv.header({pname, "d_av_analytic", "d_av_mc_mean", "d_av_mc_std_error", "n_excluded"});
  }
  const auto points = a.sweep.empty() ? std::vector<double>{a.alpha} : a.range.values();
  bool all_converged = true;
  for (double x : points) {
    auto p = base;
    if (a.sweep == "sigma") p.variance = x * x;
    else p.alpha = x;
    const auto d = dav_analytic(img, p);
    all_converged = all_converged && d.converged;
    if (a.mode == "dav") {
      csv.row({num(x), num(d.value)});
    } else {
      const auto s = mse_mc_average(img, p, a.samples, a.seed);
      all_converged = all_converged && s.n_excluded == 0;
      csv.row({num(x), num(d.value), num(s.mean), num(s.std_error), num(s.n_excluded)});
    }
    sink.stream().flush();
  }
  if (!all_converged) std::cerr << "warning: some runs did not converge\n";
  return strict && !all_converged ? 3 : 0;
}

// ---------------------------------------------------------------- selftest

int selftest() {
  int failed = 0;
  auto report = [&](const char* name, bool ok) {
    std::cout << (ok ? "PASS " : "FAIL ") << name << '\n';
    failed += ok ? 0 : 1;
  };
  Rng rng(1);
  {
    auto g = std::make_shared<Graph>(random_tree(8, rng));
    const auto m = make_model(g, StateSpace::spin(3), UnaryPotential::linear_field(), PairPotential::product(), 1.0,
                              FieldDistribution::delta(0.0));
    std::vector<double> h(8), j(7);
    for (double& x : h) x = rng.normal();
    for (double& x : j) x = rng.normal(0.0, 0.5);
    const auto e = enumerate(m, h, j);
    const auto l = run_lbp(m, h, j, {.tol = 1e-12});
    report("lbp exact on a tree", std::abs(e.free_energy - l.report.bethe_free_energy) < 1e-8 &&
                                      max_abs_diff(e.unary_marginals, l.beliefs.unary) < 1e-8);
  }
  {
    auto g = std::make_shared<Graph>(square_lattice(4, 4, Boundary::free));
    std::vector<FieldDistribution> f;
    std::vector<double> h(16);
    for (double& x : h) {
      x = rng.normal();
      f.push_back(FieldDistribution::delta(x));
    }
    MrfModel m{g, StateSpace::spin(2), {UnaryPotential::linear_field()}, {PairPotential::product()}, 1.0, f};
    const std::vector<double> j(g->n_edges(), 0.2);
    const auto l = run_lbp(m, h, j, {.tol = 1e-12});
    const auto r = run_rlbp(m, j, {.tol = 1e-12});
    report("rlbp with delta fields equals lbp",
           std::abs(l.report.bethe_free_energy - r.report.quenched_free_energy) < 1e-8);
  }
  {
    const auto s = solve_saddle(MeanFieldModel::ising(2.0, FieldDistribution::delta(0.0)));
    report("curie-weiss saddle", std::abs(std::abs(s.front().m) - std::tanh(2.0 * s.front().m) * (s.front().m > 0 ? 1 : -1)) < 1e-9);
  }
  {
    Image img(6, 6, 1, 8);
    for (int& v : img.data) v = static_cast<int>(rng.below(8));
    const auto d = dav_analytic(img, {.alpha = 0.0, .variance = 0.25});
    const auto mc = mse_mc_average(img, {.alpha = 0.0, .variance = 0.25}, 400, 3);
    report("alpha = 0 restoration error", std::abs(d.value - mc.mean) < 4.0 * mc.std_error);
  }
  return failed == 0 ? 0 : 1;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Quenched belief propagation experiments"};
  app.set_config("--config", "", "key = value file; command-line flags take precedence");
  app.require_subcommand(1);
  bool strict = false;
  app.add_flag("--strict", strict, "exit non-zero if any run fails to converge");
  std::uint64_t seed = 0;
  auto* seed_opt = app.add_option("--seed", seed, "master seed for every random draw");
  app.fallthrough();

  SweepArgs sw;
  auto* s = app.add_subcommand("sweep-quenched", "RLBP vs Monte-Carlo LBP over a sweep of sigma or J");
  s->add_option("--graph", sw.graph, "lattice or rrg")->capture_default_str();
  s->add_option("--width", sw.width)->capture_default_str();
  s->add_option("--height", sw.height)->capture_default_str();
  s->add_option("--boundary", sw.boundary, "free or periodic")->capture_default_str();
  s->add_option("--n", sw.n, "rrg vertices")->capture_default_str();
  s->add_option("--degree", sw.degree, "rrg degree")->capture_default_str();
  s->add_option("--graph-seed", sw.graph_seed)->capture_default_str();
  s->add_option("--q", sw.q)->capture_default_str();
  s->add_option("--beta", sw.beta)->capture_default_str();
  s->add_option("--param", sw.param, "sigma, J or c")->capture_default_str();
  s->add_option("--from", sw.range.from)->capture_default_str();
  s->add_option("--to", sw.range.to)->capture_default_str();
  s->add_option("--step", sw.range.step)->capture_default_str();
  s->add_option("--J", sw.coupling, "coupling, or its mean when --delta > 0")->capture_default_str();
  s->add_option("--sigma", sw.sigma, "field standard deviation (0 = fixed fields)")->capture_default_str();
  s->add_option("--field-mean", sw.field_mean)->capture_default_str();
  s->add_option("--delta", sw.delta, "coupling standard deviation (0 = fixed couplings)")->capture_default_str();
  s->add_option("--field-samples", sw.field_samples)->capture_default_str();
  s->add_option("--coupling-samples", sw.coupling_samples)->capture_default_str();
  s->add_option("--nodes", sw.nodes, "quadrature nodes")->capture_default_str();
  s->add_option("--lbp-init", sw.lbp_init, "uniform or ordered")->capture_default_str();
  s->add_option("-o,--output", sw.output)->capture_default_str();

  MeanFieldArgs mf;
  auto* m = app.add_subcommand("meanfield", "saddle points of the random-field mean-field model");
  m->add_option("--q", mf.q)->capture_default_str();
  m->add_option("--beta-from", mf.beta.from)->capture_default_str();
  m->add_option("--beta-to", mf.beta.to)->capture_default_str();
  m->add_option("--beta-step", mf.beta.step)->capture_default_str();
  m->add_option("--sigma-from", mf.sigma.from)->capture_default_str();
  m->add_option("--sigma-to", mf.sigma.to)->capture_default_str();
  m->add_option("--sigma-step", mf.sigma.step)->capture_default_str();
  m->add_option("--n", mf.sizes, "complete-graph sizes for the RLBP comparison");
  m->add_option("--nodes", mf.nodes)->capture_default_str();
  m->add_option("-o,--output", mf.output)->capture_default_str();

  RestoreArgs ra;
  auto* r = app.add_subcommand("restore", "image restoration: degrade, restore, score, dav, mc");
  r->add_option("--mode", ra.mode)->capture_default_str();
  r->add_option("-i,--input", ra.input, "plain PGM/PPM image");
  r->add_option("--reference", ra.reference, "second image for score mode");
  r->add_option("-o,--output", ra.output)->capture_default_str();
  r->add_option("--degraded", ra.degraded, "also write the degraded image (restore mode)");
  r->add_option("--alpha", ra.alpha)->capture_default_str();
  r->add_option("--sigma", ra.sigma, "noise standard deviation")->capture_default_str();
  r->add_option("--xi", ra.xi, "quadratic or absolute")->capture_default_str();
  r->add_option("--q", ra.q)->capture_default_str();
  r->add_option("--samples", ra.samples)->capture_default_str();
  r->add_option("--sweep", ra.sweep, "alpha or sigma");
  r->add_option("--from", ra.range.from)->capture_default_str();
  r->add_option("--to", ra.range.to)->capture_default_str();
  r->add_option("--step", ra.range.step)->capture_default_str();

  auto* t = app.add_subcommand("selftest", "quick consistency checks");

  CLI11_PARSE(app, argc, argv);
  try {
    worker_count();
    sw.seed = ra.seed = seed;
    if (s->parsed()) {
      if (seed_opt->count() == 0) throw InvalidArgument("--seed is required");
      return sweep_quenched(sw, strict);
    }
    if (m->parsed()) return meanfield(mf, strict);
    if (r->parsed()) {
      if (ra.mode != "score" && ra.mode != "dav" && seed_opt->count() == 0)
        throw InvalidArgument("--seed is required for mode " + ra.mode);
      return restore(ra, strict);
    }
    if (t->parsed()) return selftest();
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 2;
  }
  return 0;
}
