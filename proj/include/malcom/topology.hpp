// Copyright 2026 The malcom-psgd Authors. All Rights Reserved.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
// =============================================================================

#pragma once

#include <cmath>
#include <cstddef>
#include <deque>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "malcom/csv.hpp"
#include "malcom/error.hpp"
#include "malcom/linalg.hpp"

namespace malcom {

enum class Violation {
  kNotSquare,
  kNonFinite,
  kNegativeEntry,
  kAsymmetric,
  kRowSum,
  kColumnSum,
  kDisconnected,
};

struct ValidationIssue {
  Violation kind;
  std::string detail;
};

/// Checks the mixing-matrix conditions: square, finite, nonnegative,
/// symmetric, rows and columns summing to one, and a connected graph on
/// the positive off-diagonal pattern. Returns every violation found.
inline std::vector<ValidationIssue> validate(const Matrix& w, double tol = 1e-10) {
  std::vector<ValidationIssue> issues;
  const std::size_t n = w.rows();
  if (n == 0 || n != w.cols()) {
    issues.push_back({Violation::kNotSquare, "matrix is not square and nonempty"});
    return issues;
  }
  for (double v : w.data()) {
    if (!std::isfinite(v)) {
      issues.push_back({Violation::kNonFinite, "matrix has non-finite entries"});
      return issues;
    }
  }
  bool negative = false, asym = false;
  for (std::size_t i = 0; i < n; ++i)
    for (std::size_t j = 0; j < n; ++j) {
      negative |= w(i, j) < 0.0;
      asym |= std::abs(w(i, j) - w(j, i)) > tol;
    }
  if (negative) issues.push_back({Violation::kNegativeEntry, "negative weight"});
  if (asym) issues.push_back({Violation::kAsymmetric, "W is not symmetric"});
  bool row_bad = false, col_bad = false;
  for (std::size_t i = 0; i < n; ++i) {
    double row = 0.0, col = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      row += w(i, j);
      col += w(j, i);
    }
    if (!row_bad && std::abs(row - 1.0) > tol) {
      row_bad = true;
      issues.push_back({Violation::kRowSum, "row " + std::to_string(i) +
                                                " sums to " + std::to_string(row)});
    }
    if (!col_bad && std::abs(col - 1.0) > tol) {
      col_bad = true;
      issues.push_back({Violation::kColumnSum, "column " + std::to_string(i) +
                                                   " sums to " + std::to_string(col)});
    }
  }
  std::vector<char> seen(n, 0);
  std::deque<std::size_t> frontier{0};
  seen[0] = 1;
  std::size_t reached = 1;
  while (!frontier.empty()) {
    const std::size_t i = frontier.front();
    frontier.pop_front();
    for (std::size_t j = 0; j < n; ++j) {
      if (j != i && !seen[j] && (w(i, j) > 0.0 || w(j, i) > 0.0)) {
        seen[j] = 1;
        ++reached;
        frontier.push_back(j);
      }
    }
  }
  if (reached != n)
    issues.push_back({Violation::kDisconnected, "graph disconnected: " +
                                                    std::to_string(reached) + " of " +
                                                    std::to_string(n) +
                                                    " nodes reachable from node 0"});
  return issues;
}

/// A validated mixing matrix with its communication graph and spectrum.
struct Topology {
  std::string name;
  std::size_t n = 0;
  Matrix weights;
  double lambda2_abs = 0.0;  // second largest eigenvalue magnitude
  double delta = 1.0;        // spectral gap 1 - |lambda_2|
  std::vector<std::pair<std::size_t, std::size_t>> edges;  // i < j
  std::vector<std::vector<std::size_t>> neighbors;          // ascending

  std::size_t directed_edge_count() const noexcept { return 2 * edges.size(); }
};

// Largest eigenvalue magnitude after removing the top eigenvalue.
inline double second_eigenvalue_magnitude(const Matrix& w) {
  const auto eig = symmetric_eigenvalues(w);
  double m = 0.0;
  for (std::size_t i = 1; i < eig.size(); ++i) m = std::max(m, std::abs(eig[i]));
  return m;
}

inline Topology make_topology(Matrix w, std::string name) {
  const auto issues = validate(w);
  if (!issues.empty()) {
    std::string msg = "invalid mixing matrix '" + name + "':";
    for (const auto& issue : issues) msg += " " + issue.detail + ";";
    throw Error(msg);
  }
  Topology t;
  t.name = std::move(name);
  t.n = w.rows();
  if (t.n < 2) throw Error("topology needs at least 2 nodes");
  t.neighbors.resize(t.n);
  for (std::size_t i = 0; i < t.n; ++i)
    for (std::size_t j = 0; j < t.n; ++j) {
      if (i == j || w(i, j) <= 0.0) continue;
      t.neighbors[i].push_back(j);
      if (i < j) t.edges.emplace_back(i, j);
    }
  t.lambda2_abs = second_eigenvalue_magnitude(w);
  if (!(t.lambda2_abs < 1.0)) throw Error("mixing matrix has |lambda_2| >= 1");
  t.delta = 1.0 - t.lambda2_abs;
  t.weights = std::move(w);
  return t;
}

/// Ring-like topology. For n = 10 this is the hub-and-leaf ring with
/// weights in {0, 1/5, 3/5}; other even n >= 6 fall back to a plain cycle
/// with self weight 1/2 and neighbor weights 1/4.
inline Topology build_ring(std::size_t n = 10) {
  if (n == 10) {
    // Entries in fifths.
    static constexpr int kFifths[10][10] = {
        {1, 1, 1, 0, 0, 0, 0, 0, 1, 1}, {1, 3, 1, 0, 0, 0, 0, 0, 0, 0},
        {1, 1, 1, 1, 1, 0, 0, 0, 0, 0}, {0, 0, 1, 3, 1, 0, 0, 0, 0, 0},
        {0, 0, 1, 1, 1, 1, 1, 0, 0, 0}, {0, 0, 0, 0, 1, 3, 1, 0, 0, 0},
        {0, 0, 0, 0, 1, 1, 1, 1, 1, 0}, {0, 0, 0, 0, 0, 0, 1, 3, 1, 0},
        {1, 0, 0, 0, 0, 0, 1, 1, 1, 1}, {1, 0, 0, 0, 0, 0, 0, 0, 1, 3},
    };
    Matrix w(10, 10);
    for (std::size_t i = 0; i < 10; ++i)
      for (std::size_t j = 0; j < 10; ++j) w(i, j) = kFifths[i][j] / 5.0;
    return make_topology(std::move(w), "ring10");
  }
  if (n < 6 || n % 2 != 0)
    throw Error("build_ring: supported sizes are 10 or even n >= 6, got " +
                std::to_string(n));
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    w(i, i) = 0.5;
    w(i, (i + 1) % n) = 0.25;
    w(i, (i + n - 1) % n) = 0.25;
  }
  return make_topology(std::move(w), "cycle" + std::to_string(n));
}

// W = 11^T / n.
inline Topology build_fully_connected(std::size_t n) {
  if (n < 2) throw Error("build_fully_connected: n must be >= 2");
  Matrix w(n, n, 1.0 / static_cast<double>(n));
  return make_topology(std::move(w), "complete" + std::to_string(n));
}

inline Matrix load_matrix_csv(const std::filesystem::path& path) {
  const auto table = csv::read_numeric(path, /*allow_header=*/false);
  const std::size_t n = table.rows.size();
  Matrix w(n, n);
  for (std::size_t i = 0; i < n; ++i) {
    if (table.rows[i].size() != n)
      throw Error(path.string() + ":" + std::to_string(table.line_numbers[i]) +
                  ": mixing matrix must be square");
    for (std::size_t j = 0; j < n; ++j) w(i, j) = table.rows[i][j];
  }
  return w;
}

inline Topology load_topology_csv(const std::filesystem::path& path) {
  return make_topology(load_matrix_csv(path), path.filename().string());
}

// Linear-rate constant of compressed gossip: delta^2 / (82 tau).
inline double consensus_omega(double delta, double tau) {
  if (!(delta > 0.0 && delta <= 1.0)) throw Error("consensus_omega: delta must be in (0, 1]");
  if (!(tau >= 1.0)) throw Error("consensus_omega: tau must be >= 1");
  return delta * delta / (82.0 * tau);
}

// Constants of the convergence analysis. Diagnostic only; nothing in the
// protocol depends on them.
struct TheoryParams {
  double omega = 0.0;
  double tau = 1.0;
  double gamma = 1.0;
  double grad_bound_G = 0.0;
  double variance_sigma2 = 0.0;
  double smoothness_K = 0.0;

  // Upper bound on sum_i E||x_i - x_bar||^2 at constant step size eta:
  // 24 / omega^2 * (2 G^2 + 2 sigma^2 + mu^2 d) * n * eta^2.
  double consensus_bound(std::size_t n, double eta, double mu, std::size_t dim) const {
    const double a = 2.0 * grad_bound_G * grad_bound_G + 2.0 * variance_sigma2 +
                     mu * mu * static_cast<double>(dim);
    return 24.0 / (omega * omega) * a * static_cast<double>(n) * eta * eta;
  }
};

inline TheoryParams theory_params(const Topology& topo, double tau, double gamma,
                                  double grad_bound_G = 0.0, double variance_sigma2 = 0.0,
                                  double smoothness_K = 0.0) {
  return {consensus_omega(topo.delta, tau), tau, gamma, grad_bound_G, variance_sigma2,
          smoothness_K};
}

}  // namespace malcom
