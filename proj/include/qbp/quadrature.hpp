#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Eigenvalues>

#include "qbp/errors.hpp"
#include "qbp/model.hpp"

namespace qbp {

/// Discrete rule for integrals against a field density: sum_k weights[k] f(nodes[k]).
/// The weights already include the density and sum to one.
struct QuadratureRule {
  std::vector<double> nodes;
  std::vector<double> weights;

  std::size_t size() const { return nodes.size(); }

  template <class F>
  double integrate(F&& f) const {
    double acc = 0.0;
    for (std::size_t k = 0; k < nodes.size(); ++k) acc += weights[k] * f(nodes[k]);
    return acc;
  }
};

/// n-point Gauss-Hermite rule for the standard normal density (Golub-Welsch).
/// Exact for polynomials up to degree 2n - 1.
inline QuadratureRule standard_normal_rule(std::size_t n) {
  require(n >= 1, "quadrature needs at least one node");
  if (n == 1) return {{0.0}, {1.0}};
  // Jacobi matrix of the probabilists' Hermite polynomials: off-diagonal sqrt(k).
  Eigen::MatrixXd jacobi = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n), static_cast<Eigen::Index>(n));
  for (std::size_t k = 1; k < n; ++k) {
    const auto a = static_cast<Eigen::Index>(k);
    jacobi(a - 1, a) = jacobi(a, a - 1) = std::sqrt(static_cast<double>(k));
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> solver(jacobi);
  QuadratureRule rule;
  rule.nodes.resize(n);
  rule.weights.resize(n);
  double total = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    const auto col = static_cast<Eigen::Index>(k);
    rule.nodes[k] = solver.eigenvalues()(col);
    const double v0 = solver.eigenvectors()(0, col);
    rule.weights[k] = v0 * v0;
    total += rule.weights[k];
  }
  for (auto& w : rule.weights) w /= total;
  // Symmetrise: the eigen solver leaves O(eps) asymmetry between +x and -x.
  for (std::size_t k = 0; k < n / 2; ++k) {
    const std::size_t m = n - 1 - k;
    const double x = 0.5 * (rule.nodes[m] - rule.nodes[k]);
    const double w = 0.5 * (rule.weights[m] + rule.weights[k]);
    rule.nodes[k] = -x;
    rule.nodes[m] = x;
    rule.weights[k] = rule.weights[m] = w;
  }
  if (n % 2 == 1) rule.nodes[n / 2] = 0.0;
  return rule;
}

inline QuadratureRule build_quadrature(const FieldDistribution& dist, std::size_t n_nodes) {
  require(n_nodes >= 1, "quadrature needs at least one node");
  switch (dist.kind) {
    case FieldDistribution::Kind::delta:
      return {{dist.mean}, {1.0}};
    case FieldDistribution::Kind::gaussian: {
      require(n_nodes >= 2, "gaussian quadrature needs at least two nodes");
      QuadratureRule rule = standard_normal_rule(n_nodes);
      const double sd = std::sqrt(dist.variance);
      for (auto& x : rule.nodes) x = dist.mean + sd * x;
      return rule;
    }
  }
  throw InvalidArgument("unsupported field distribution");
}

}  // namespace qbp
