#include <cmath>
#include <memory>
#include <numeric>

#include <gtest/gtest.h>

#include "qbp/exact.hpp"

using namespace qbp;

namespace {

MrfModel ising(std::shared_ptr<const Graph> g, std::size_t q = 2, double beta = 1.0) {
  return make_model(std::move(g), StateSpace::spin(q), UnaryPotential::linear_field(), PairPotential::product(),
                    beta, FieldDistribution::delta(0.0));
}

// Row-by-row transfer matrix for a width x height free lattice with linear
// fields and uniform product couplings. `clamp` pins one vertex to a state
// (or -1 for none). Returns Z in the linear domain.
double transfer_matrix_z(std::size_t width, std::size_t height, const StateSpace& st, const std::vector<double>& h,
                         double j, double beta, long clamp_vertex = -1, std::size_t clamp_state = 0) {
  const std::size_t q = st.q();
  std::size_t rows = 1;
  for (std::size_t x = 0; x < width; ++x) rows *= q;
  auto digit = [&](std::size_t r, std::size_t x) {
    for (std::size_t k = 0; k < x; ++k) r /= q;
    return r % q;
  };
  auto row_weight = [&](std::size_t r, std::size_t y) {
    double e = 0.0;
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i = y * width + x;
      if (clamp_vertex >= 0 && static_cast<std::size_t>(clamp_vertex) == i && digit(r, x) != clamp_state) return 0.0;
      e += h[i] * st.value(digit(r, x));
      if (x + 1 < width) e += j * st.value(digit(r, x)) * st.value(digit(r, x + 1));
    }
    return std::exp(beta * e);
  };
  std::vector<double> v(rows);
  for (std::size_t r = 0; r < rows; ++r) v[r] = row_weight(r, 0);
  for (std::size_t y = 1; y < height; ++y) {
    std::vector<double> next(rows, 0.0);
    for (std::size_t r = 0; r < rows; ++r) {
      const double w = row_weight(r, y);
      if (w == 0.0) continue;
      for (std::size_t p = 0; p < rows; ++p) {
        double e = 0.0;
        for (std::size_t x = 0; x < width; ++x) e += j * st.value(digit(r, x)) * st.value(digit(p, x));
        next[r] += v[p] * std::exp(beta * e);
      }
      next[r] *= w;
    }
    v = std::move(next);
  }
  return std::accumulate(v.begin(), v.end(), 0.0);
}

}  // namespace

TEST(Enumerate, SingleVertex) {
  const auto m = ising(std::make_shared<Graph>(path_graph(1)));
  const std::vector<double> h{0.0};
  const auto r = enumerate(m, h, std::vector<double>{});
  EXPECT_NEAR(r.log_z, std::log(2.0), 1e-14);
  EXPECT_NEAR(r.unary_marginals[0], 0.5, 1e-14);
  EXPECT_NEAR(r.unary_marginals[1], 0.5, 1e-14);
}

TEST(Enumerate, TwoVertexClosedForm) {
  for (double beta : {0.5, 1.0, 2.0}) {
    for (double j : {-0.7, 0.2, 1.1}) {
      const auto m = ising(std::make_shared<Graph>(path_graph(2)), 2, beta);
      const auto r = enumerate(m, std::vector<double>{0.0, 0.0}, std::vector<double>{j});
      EXPECT_NEAR(r.log_z, std::log(2 * std::exp(beta * j) + 2 * std::exp(-beta * j)), 1e-13);
      EXPECT_NEAR(r.free_energy, -r.log_z / beta, 1e-13);
    }
  }
}

TEST(Enumerate, TransferMatrixCrossCheck) {
  const auto st = StateSpace::spin(2);
  auto g = std::make_shared<Graph>(square_lattice(3, 3, Boundary::free));
  const auto m = ising(g);
  Rng rng(5);
  std::vector<double> h(9);
  for (auto& x : h) x = rng.normal(0.0, 1.0);
  const std::vector<double> j(g->n_edges(), 0.2);
  const auto r = enumerate(m, h, j);

  const double z = transfer_matrix_z(3, 3, st, h, 0.2, 1.0);
  EXPECT_NEAR(r.log_z, std::log(z), 1e-12);
  for (std::size_t i = 0; i < 9; ++i) {
    const double p_up = transfer_matrix_z(3, 3, st, h, 0.2, 1.0, static_cast<long>(i), 1) / z;
    EXPECT_NEAR(r.unary_marginals[i * 2 + 1], p_up, 1e-12);
  }
}

TEST(Enumerate, PairMarginalsConsistent) {
  auto g = std::make_shared<Graph>(square_lattice(3, 2, Boundary::free));
  const auto m = ising(g, 3);
  Rng rng(8);
  std::vector<double> h(g->n_vertices());
  for (auto& x : h) x = rng.normal(0.0, 1.0);
  std::vector<double> j(g->n_edges());
  for (auto& x : j) x = rng.normal(0.0, 0.5);
  const auto r = enumerate(m, h, j);
  const std::size_t q = 3;
  for (std::size_t e = 0; e < g->n_edges(); ++e) {
    const auto& ed = g->edge(e);
    double total = 0.0;
    for (std::size_t s = 0; s < q; ++s) {
      double row = 0.0;
      double col = 0.0;
      for (std::size_t t = 0; t < q; ++t) {
        row += r.pair_marginals[(e * q + s) * q + t];
        col += r.pair_marginals[(e * q + t) * q + s];
      }
      EXPECT_NEAR(row, r.unary_marginals[ed.u * q + s], 1e-12);
      EXPECT_NEAR(col, r.unary_marginals[ed.v * q + s], 1e-12);
      total += row;
    }
    EXPECT_NEAR(total, 1.0, 1e-12);
  }
}

TEST(Enumerate, RelabelingInvariance) {
  const auto base = square_lattice(2, 3, Boundary::free);
  const std::vector<std::size_t> perm{4, 2, 5, 0, 1, 3};
  std::vector<Edge> relabelled;
  for (const auto& e : base.edges()) relabelled.push_back({perm[e.u], perm[e.v]});
  auto g1 = std::make_shared<Graph>(base);
  auto g2 = std::make_shared<Graph>(Graph(6, relabelled));
  Rng rng(2);
  std::vector<double> h(6), h2(6);
  for (std::size_t i = 0; i < 6; ++i) h2[perm[i]] = h[i] = rng.normal(0.0, 1.0);
  std::vector<double> j(base.n_edges());
  for (auto& x : j) x = rng.normal(0.0, 1.0);
  const auto r1 = enumerate(ising(g1, 3), h, j);
  const auto r2 = enumerate(ising(g2, 3), h2, j);
  EXPECT_NEAR(r1.log_z, r2.log_z, 1e-12);
}

TEST(Enumerate, CapEnforced) {
  const auto m = ising(std::make_shared<Graph>(path_graph(30)));
  std::vector<double> h(30, 0.0);
  std::vector<double> j(29, 0.1);
  EXPECT_THROW(enumerate(m, h, j), InstanceTooLarge);
  EXPECT_THROW(enumerate(m, h, j, {.max_configurations = 1e3}), InstanceTooLarge);
}
