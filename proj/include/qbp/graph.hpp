#pragma once

#include <algorithm>
#include <cstddef>
#include <istream>
#include <numeric>
#include <ostream>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <vector>

#include "qbp/errors.hpp"
#include "qbp/random.hpp"

namespace qbp {

struct Edge {
  std::size_t u;
  std::size_t v;
  friend bool operator==(const Edge&, const Edge&) = default;
};

/// Entry of an adjacency list: the neighboring vertex and the undirected edge
/// connecting to it.
struct Neighbor {
  std::size_t vertex;
  std::size_t edge;
};

/// Immutable simple undirected graph.
///
/// Every undirected edge e = {u, v} owns two directed slots: 2e for u -> v and
/// 2e + 1 for v -> u. Message-passing engines index their per-direction state
/// with these slots.
class Graph {
 public:
  Graph() = default;

  Graph(std::size_t n_vertices, std::vector<Edge> edges)
      : n_(n_vertices), edges_(std::move(edges)) {
    std::vector<std::size_t> degree(n_, 0);
    for (const auto& e : edges_) {
      if (e.u >= n_ || e.v >= n_) throw InvalidArgument("edge endpoint out of range");
      if (e.u == e.v) throw InvalidArgument("self-loop in edge list");
      ++degree[e.u];
      ++degree[e.v];
    }
    offsets_.assign(n_ + 1, 0);
    for (std::size_t i = 0; i < n_; ++i) offsets_[i + 1] = offsets_[i] + degree[i];
    adjacency_.resize(offsets_[n_]);
    std::vector<std::size_t> fill(offsets_.begin(), offsets_.end() - 1);
    for (std::size_t e = 0; e < edges_.size(); ++e) {
      adjacency_[fill[edges_[e].u]++] = {edges_[e].v, e};
      adjacency_[fill[edges_[e].v]++] = {edges_[e].u, e};
    }
    for (std::size_t i = 0; i < n_; ++i) {
      auto first = adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i]);
      auto last = adjacency_.begin() + static_cast<std::ptrdiff_t>(offsets_[i + 1]);
      std::sort(first, last, [](const Neighbor& a, const Neighbor& b) { return a.vertex < b.vertex; });
      if (std::adjacent_find(first, last, [](const Neighbor& a, const Neighbor& b) {
            return a.vertex == b.vertex;
          }) != last) {
        throw InvalidArgument("duplicate edge in edge list");
      }
    }
  }

  std::size_t n_vertices() const { return n_; }
  std::size_t n_edges() const { return edges_.size(); }
  std::size_t n_directed() const { return 2 * edges_.size(); }
  const std::vector<Edge>& edges() const { return edges_; }
  const Edge& edge(std::size_t e) const { return edges_[e]; }

  std::span<const Neighbor> neighbors(std::size_t i) const {
    return {adjacency_.data() + offsets_[i], offsets_[i + 1] - offsets_[i]};
  }
  std::size_t degree(std::size_t i) const { return offsets_[i + 1] - offsets_[i]; }

  std::size_t max_degree() const {
    std::size_t d = 0;
    for (std::size_t i = 0; i < n_; ++i) d = std::max(d, degree(i));
    return d;
  }

  /// Directed slot for the message travelling from `from` along edge `e`.
  std::size_t directed(std::size_t e, std::size_t from) const {
    return edges_[e].u == from ? 2 * e : 2 * e + 1;
  }
  std::size_t source(std::size_t slot) const {
    const Edge& e = edges_[slot / 2];
    return slot % 2 == 0 ? e.u : e.v;
  }
  std::size_t target(std::size_t slot) const {
    const Edge& e = edges_[slot / 2];
    return slot % 2 == 0 ? e.v : e.u;
  }
  static std::size_t reverse(std::size_t slot) { return slot ^ 1U; }

 private:
  std::size_t n_ = 0;
  std::vector<Edge> edges_;
  std::vector<std::size_t> offsets_{0};
  std::vector<Neighbor> adjacency_;
};

enum class Boundary { free, periodic };

/// 4-neighbour grid, vertex index y * width + x.
inline Graph square_lattice(std::size_t width, std::size_t height, Boundary boundary) {
  require(width >= 1 && height >= 1, "lattice dimensions must be positive");
  if (boundary == Boundary::periodic && (width < 3 || height < 3)) {
    throw InvalidArgument("periodic lattice needs width >= 3 and height >= 3");
  }
  std::vector<Edge> edges;
  const bool wrap = boundary == Boundary::periodic;
  for (std::size_t y = 0; y < height; ++y) {
    for (std::size_t x = 0; x < width; ++x) {
      const std::size_t i = y * width + x;
      if (x + 1 < width) {
        edges.push_back({i, i + 1});
      } else if (wrap) {
        edges.push_back({i, y * width});
      }
      if (y + 1 < height) {
        edges.push_back({i, i + width});
      } else if (wrap) {
        edges.push_back({i, x});
      }
    }
  }
  return Graph(width * height, std::move(edges));
}

/// Simple d-regular graph from the pairing (configuration) model. Any pairing
/// that produces a self-loop or multi-edge is thrown away and the whole pairing
/// is redrawn.
inline Graph random_regular(std::size_t n, std::size_t d, std::uint64_t seed) {
  if ((n * d) % 2 != 0 || d >= n) {
    throw InfeasibleGraph("no simple " + std::to_string(d) + "-regular graph on " +
                          std::to_string(n) + " vertices");
  }
  Rng rng(seed);
  std::vector<std::size_t> stubs(n * d);
  for (std::size_t i = 0; i < n; ++i) std::fill_n(stubs.begin() + static_cast<std::ptrdiff_t>(i * d), d, i);

  constexpr int kMaxAttempts = 1'000'000;
  for (int attempt = 0; attempt < kMaxAttempts; ++attempt) {
    for (std::size_t k = stubs.size(); k > 1; --k) std::swap(stubs[k - 1], stubs[rng.below(k)]);
    std::vector<Edge> edges;
    edges.reserve(stubs.size() / 2);
    std::vector<std::vector<std::size_t>> seen(n);
    bool ok = true;
    for (std::size_t k = 0; k < stubs.size() && ok; k += 2) {
      const std::size_t a = std::min(stubs[k], stubs[k + 1]);
      const std::size_t b = std::max(stubs[k], stubs[k + 1]);
      if (a == b || std::find(seen[a].begin(), seen[a].end(), b) != seen[a].end()) {
        ok = false;
      } else {
        seen[a].push_back(b);
        edges.push_back({a, b});
      }
    }
    if (ok) return Graph(n, std::move(edges));
  }
  throw InfeasibleGraph("pairing model did not produce a simple graph");
}

inline Graph path_graph(std::size_t n) {
  require(n >= 1, "path graph needs at least one vertex");
  std::vector<Edge> edges;
  for (std::size_t i = 0; i + 1 < n; ++i) edges.push_back({i, i + 1});
  return Graph(n, std::move(edges));
}

inline Graph complete_graph(std::size_t n) {
  require(n >= 1, "complete graph needs at least one vertex");
  std::vector<Edge> edges;
  edges.reserve(n * (n - 1) / 2);
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = i + 1; j < n; ++j) edges.push_back({i, j});
  return Graph(n, std::move(edges));
}

/// Uniform random recursive tree: vertex i > 0 attaches to a uniformly chosen
/// earlier vertex.
inline Graph random_tree(std::size_t n, Rng& rng) {
  require(n >= 1, "tree needs at least one vertex");
  std::vector<Edge> edges;
  for (std::size_t i = 1; i < n; ++i) edges.push_back({rng.below(i), i});
  return Graph(n, std::move(edges));
}

// Edge-list text format:
//   n <count>
//   i j
//   ...
// Blank lines and lines starting with '#' are ignored.

inline void write_edge_list(std::ostream& out, const Graph& g) {
  out << "n " << g.n_vertices() << '\n';
  for (const auto& e : g.edges()) out << e.u << ' ' << e.v << '\n';
}

inline Graph read_edge_list(std::istream& in) {
  std::string line;
  std::size_t n = 0;
  bool have_header = false;
  std::vector<Edge> edges;
  while (std::getline(in, line)) {
    const auto first = line.find_first_not_of(" \t\r");
    if (first == std::string::npos || line[first] == '#') continue;
    std::istringstream ls(line);
    if (!have_header) {
      std::string tag;
      if (!(ls >> tag >> n) || tag != "n") throw ParseError("edge list must start with 'n <count>'");
      have_header = true;
      continue;
    }
    long long a = 0;
    long long b = 0;
    if (!(ls >> a >> b) || a < 0 || b < 0) throw ParseError("bad edge line: " + line);
    edges.push_back({static_cast<std::size_t>(a), static_cast<std::size_t>(b)});
  }
  if (!have_header) throw ParseError("empty edge list");
  return Graph(n, std::move(edges));
}

}  // namespace qbp
