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
#include <cstdint>
#include <span>
#include <vector>

#include "malcom/error.hpp"
#include "malcom/linalg.hpp"
#include "malcom/tasks.hpp"

namespace malcom {

struct HyperParams {
  double eta = 0.05;    // learning rate
  double mu = 1e-3;     // l1 penalty
  double gamma = 1.0;   // consensus step size
  std::uint32_t levels = 8;
  std::size_t rounds = 2000;
  std::size_t batch_size = 20;

  void check() const {
    if (!(eta > 0.0)) throw ConfigError("eta must be > 0");
    if (!(mu >= 0.0)) throw ConfigError("mu must be >= 0");
    if (!(gamma > 0.0 && gamma <= 1.0)) throw ConfigError("gamma must be in (0, 1]");
    if (levels < 2 || levels > 65535) throw ConfigError("levels must be in [2, 65535]");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
  }
};

inline Vector sgd_step(std::span<const double> x, std::span<const double> grad, double eta) {
  if (x.size() != grad.size()) throw Error("sgd_step: dimension mismatch");
  Vector out(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) out[i] = x[i] - eta * grad[i];
  return out;
}

// Proximal map of threshold * ||.||_1. Magnitudes at or below the
// threshold become exactly zero.
inline Vector soft_threshold(std::span<const double> v, double threshold) {
  if (!(threshold >= 0.0)) throw Error("soft_threshold: threshold must be >= 0");
  Vector out(v.size(), 0.0);
  for (std::size_t i = 0; i < v.size(); ++i) {
    const double mag = std::abs(v[i]) - threshold;
    if (mag > 0.0) out[i] = std::copysign(mag, v[i]);
  }
  return out;
}

inline double l1_norm(std::span<const double> x) {
  double s = 0.0;
  for (double v : x) s += std::abs(v);
  return s;
}

struct ObjectiveReport {
  double smooth_part = 0.0;  // mean over nodes of F_i(x_i)
  double l1_part = 0.0;      // mean over nodes of mu ||x_i||_1
  double total = 0.0;
};

/// (1/n) sum_i (F_i(x_i) + mu ||x_i||_1) with F_i the full-batch loss of
/// node i's dataset, or of its first `subsample` rows when nonzero.
inline ObjectiveReport objective(const Task& task, std::span<const Vector> models,
                                 std::span<const Dataset> datasets, double mu,
                                 std::size_t subsample = 0) {
  if (models.size() != datasets.size() || models.empty())
    throw Error("objective: need one dataset per model");
  ObjectiveReport r;
  for (std::size_t i = 0; i < models.size(); ++i) {
    const Dataset& ds = datasets[i];
    if (ds.size() == 0) throw Error("objective: empty dataset for node " + std::to_string(i));
    if (subsample > 0 && subsample < ds.size()) {
      std::vector<std::size_t> rows(subsample);
      for (std::size_t k = 0; k < subsample; ++k) rows[k] = k;
      r.smooth_part += task.loss(models[i], ds, rows);
    } else {
      r.smooth_part += task.loss(models[i], ds);
    }
    r.l1_part += mu * l1_norm(models[i]);
  }
  const double inv = 1.0 / static_cast<double>(models.size());
  r.smooth_part *= inv;
  r.l1_part *= inv;
  r.total = r.smooth_part + r.l1_part;
  return r;
}

// Generalized projected gradient (x - prox(x - eta grad, mu eta)) / eta.
inline Vector projected_gradient(std::span<const double> x_bar,
                                 std::span<const double> full_grad, double eta, double mu) {
  if (!(eta > 0.0)) throw Error("projected_gradient: eta must be > 0");
  const Vector z = soft_threshold(sgd_step(x_bar, full_grad, eta), mu * eta);
  Vector g(x_bar.size());
  for (std::size_t i = 0; i < g.size(); ++i) g[i] = (x_bar[i] - z[i]) / eta;
  return g;
}

// Gradient of (1/n) sum_i F_i at a single point.
inline LossGrad average_full_gradient(const Task& task, std::span<const double> x,
                                      std::span<const Dataset> datasets) {
  LossGrad total{0.0, Vector(x.size(), 0.0)};
  for (const Dataset& ds : datasets) {
    const LossGrad lg = task.loss_grad(x, ds);
    total.loss += lg.loss;
    for (std::size_t k = 0; k < x.size(); ++k) total.grad[k] += lg.grad[k];
  }
  const double inv = 1.0 / static_cast<double>(datasets.size());
  total.loss *= inv;
  for (double& g : total.grad) g *= inv;
  return total;
}

struct ReferenceSolution {
  Vector x;
  double objective = 0.0;
  double gradient_mapping_norm = 0.0;
  std::size_t iterations = 0;
  bool converged = false;
};

/// Centralized proximal gradient descent with backtracking on
/// (1/n) sum_i F_i(x) + mu ||x||_1, stopped once the gradient mapping
/// norm falls below `tol`.
inline ReferenceSolution centralized_proximal_gd(const Task& task,
                                                 std::span<const Dataset> datasets, double mu,
                                                 Vector x0, double tol = 1e-8,
                                                 std::size_t max_iter = 200000) {
  ReferenceSolution sol;
  sol.x = std::move(x0);
  double step = 1.0;
  LossGrad cur = average_full_gradient(task, sol.x, datasets);
  for (sol.iterations = 0; sol.iterations < max_iter; ++sol.iterations) {
    Vector next;
    double next_loss = 0.0;
    while (true) {
      next = soft_threshold(sgd_step(sol.x, cur.grad, step), mu * step);
      double lin = 0.0, sq = 0.0;
      for (std::size_t k = 0; k < next.size(); ++k) {
        const double d = next[k] - sol.x[k];
        lin += cur.grad[k] * d;
        sq += d * d;
      }
      next_loss = 0.0;
      for (const Dataset& ds : datasets) next_loss += task.loss(next, ds);
      next_loss /= static_cast<double>(datasets.size());
      if (next_loss <= cur.loss + lin + sq / (2.0 * step) + 1e-15 * std::abs(cur.loss)) {
        sol.gradient_mapping_norm = std::sqrt(sq) / step;
        break;
      }
      step *= 0.5;
      if (step < 1e-12) throw Error("centralized_proximal_gd: line search failed");
    }
    sol.x = std::move(next);
    cur = average_full_gradient(task, sol.x, datasets);
    if (sol.gradient_mapping_norm <= tol) {
      sol.converged = true;
      ++sol.iterations;
      break;
    }
    step *= 1.25;
  }
  sol.objective = cur.loss + mu * l1_norm(sol.x);
  return sol;
}

}  // namespace malcom
