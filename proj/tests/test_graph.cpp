#include <queue>
#include <sstream>

#include <gtest/gtest.h>

#include "qbp/graph.hpp"

using namespace qbp;

namespace {

std::size_t degree_sum(const Graph& g) {
  std::size_t s = 0;
  for (std::size_t i = 0; i < g.n_vertices(); ++i) s += g.degree(i);
  return s;
}

// BFS 2-colouring; returns {connected, bipartite}.
std::pair<bool, bool> connected_bipartite(const Graph& g) {
  std::vector<int> colour(g.n_vertices(), -1);
  std::queue<std::size_t> todo;
  colour[0] = 0;
  todo.push(0);
  bool bipartite = true;
  std::size_t seen = 1;
  while (!todo.empty()) {
    const auto i = todo.front();
    todo.pop();
    for (const auto& nb : g.neighbors(i)) {
      if (colour[nb.vertex] < 0) {
        colour[nb.vertex] = 1 - colour[i];
        ++seen;
        todo.push(nb.vertex);
      } else if (colour[nb.vertex] == colour[i]) {
        bipartite = false;
      }
    }
  }
  return {seen == g.n_vertices(), bipartite};
}

}  // namespace

TEST(SquareLattice, EdgeCounts) {
  auto g = square_lattice(2, 2, Boundary::free);
  EXPECT_EQ(g.n_vertices(), 4U);
  EXPECT_EQ(g.n_edges(), 4U);

  g = square_lattice(8, 8, Boundary::free);
  EXPECT_EQ(g.n_vertices(), 64U);
  EXPECT_EQ(g.n_edges(), 112U);

  g = square_lattice(14, 14, Boundary::periodic);
  EXPECT_EQ(g.n_vertices(), 196U);
  EXPECT_EQ(g.n_edges(), 392U);
  for (std::size_t i = 0; i < g.n_vertices(); ++i) EXPECT_EQ(g.degree(i), 4U);
}

TEST(SquareLattice, RowMajorIndexing) {
  const auto g = square_lattice(5, 3, Boundary::free);
  // vertex (x=2, y=1) is 7: neighbours 2, 6, 8, 12
  std::vector<std::size_t> nbrs;
  for (const auto& nb : g.neighbors(7)) nbrs.push_back(nb.vertex);
  EXPECT_EQ(nbrs, (std::vector<std::size_t>{2, 6, 8, 12}));
}

TEST(SquareLattice, FreeIsConnectedAndBipartite) {
  for (std::size_t w = 1; w <= 6; ++w) {
    for (std::size_t h = 1; h <= 6; ++h) {
      const auto g = square_lattice(w, h, Boundary::free);
      EXPECT_EQ(g.n_edges(), w * (h - 1) + h * (w - 1));
      const auto [conn, bip] = connected_bipartite(g);
      EXPECT_TRUE(conn);
      EXPECT_TRUE(bip);
      EXPECT_EQ(degree_sum(g), 2 * g.n_edges());
    }
  }
}

TEST(SquareLattice, PeriodicTooSmall) {
  EXPECT_THROW(square_lattice(2, 5, Boundary::periodic), InvalidArgument);
  EXPECT_THROW(square_lattice(5, 2, Boundary::periodic), InvalidArgument);
  EXPECT_NO_THROW(square_lattice(3, 3, Boundary::periodic));
}

TEST(RandomRegular, DegreesAndEdges) {
  const auto g = random_regular(200, 4, 1);
  EXPECT_EQ(g.n_edges(), 400U);
  for (std::size_t i = 0; i < g.n_vertices(); ++i) EXPECT_EQ(g.degree(i), 4U);
  EXPECT_EQ(degree_sum(g), 2 * g.n_edges());
}

TEST(RandomRegular, K4) {
  const auto g = random_regular(4, 3, 7);
  EXPECT_EQ(g.n_edges(), 6U);
  for (std::size_t i = 0; i < 4; ++i) EXPECT_EQ(g.degree(i), 3U);
}

TEST(RandomRegular, Infeasible) {
  EXPECT_THROW(random_regular(5, 3, 1), InfeasibleGraph);
  EXPECT_THROW(random_regular(4, 4, 1), InfeasibleGraph);
}

TEST(RandomRegular, SeedReproducible) {
  const auto a = random_regular(50, 3, 99);
  const auto b = random_regular(50, 3, 99);
  EXPECT_EQ(a.edges(), b.edges());
  const auto c = random_regular(50, 3, 100);
  EXPECT_NE(a.edges(), c.edges());
}

TEST(PathGraph, Counts) {
  EXPECT_EQ(path_graph(1).n_edges(), 0U);
  EXPECT_EQ(path_graph(2).n_edges(), 1U);
  const auto g = path_graph(5);
  EXPECT_EQ(g.n_edges(), 4U);
  EXPECT_EQ(g.max_degree(), 2U);
}

TEST(Graph, RejectsBadEdges) {
  EXPECT_THROW(Graph(3, {{0, 0}}), InvalidArgument);
  EXPECT_THROW(Graph(3, {{0, 1}, {1, 0}}), InvalidArgument);
  EXPECT_THROW(Graph(3, {{0, 3}}), InvalidArgument);
}

TEST(Graph, DirectedSlots) {
  const auto g = path_graph(3);
  EXPECT_EQ(g.source(g.directed(1, 2)), 2U);
  EXPECT_EQ(g.target(g.directed(1, 2)), 1U);
  EXPECT_EQ(Graph::reverse(g.directed(1, 2)), g.directed(1, 1));
}

TEST(EdgeList, RoundTrip) {
  const auto g = random_regular(20, 3, 5);
  std::stringstream ss;
  write_edge_list(ss, g);
  const auto h = read_edge_list(ss);
  EXPECT_EQ(h.n_vertices(), g.n_vertices());
  EXPECT_EQ(h.edges(), g.edges());
}

TEST(EdgeList, CommentsAndErrors) {
  std::istringstream ok("# a triangle\nn 3\n0 1\n\n1 2\n2 0\n");
  EXPECT_EQ(read_edge_list(ok).n_edges(), 3U);
  std::istringstream missing("0 1\n");
  EXPECT_THROW(read_edge_list(missing), ParseError);
  std::istringstream bad("n 3\n0 x\n");
  EXPECT_THROW(read_edge_list(bad), ParseError);
}
