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

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>
#include <span>
#include <string>
#include <vector>

#include "malcom/csv.hpp"
#include "malcom/error.hpp"
#include "malcom/linalg.hpp"
#include "malcom/rng.hpp"

namespace malcom {

/// Feature matrix (m x d, row-major) with one label per row. Binary tasks
/// use labels +1/-1, multiclass tasks use class indices 0..C-1.
struct Dataset {
  std::string name;
  std::size_t features_dim = 0;
  std::vector<double> features;
  std::vector<double> labels;

  std::size_t size() const noexcept { return labels.size(); }
  std::span<const double> row(std::size_t i) const {
    return {features.data() + i * features_dim, features_dim};
  }

  void check() const {
    if (features.size() != labels.size() * features_dim)
      throw Error("dataset '" + name + "': row count does not match label count");
    for (double v : features)
      if (!std::isfinite(v)) throw Error("dataset '" + name + "': non-finite feature");
  }

  Dataset subset(std::span<const std::size_t> rows, std::string subset_name) const {
    Dataset out;
    out.name = std::move(subset_name);
    out.features_dim = features_dim;
    out.features.reserve(rows.size() * features_dim);
    out.labels.reserve(rows.size());
    for (std::size_t r : rows) {
      const auto x = row(r);
      out.features.insert(out.features.end(), x.begin(), x.end());
      out.labels.push_back(labels[r]);
    }
    return out;
  }
};

struct LossGrad {
  double loss = 0.0;
  Vector grad;
};

namespace detail {

inline double dot(std::span<const double> a, std::span<const double> b) {
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// log(1 + exp(z)) without overflow.
inline double softplus(double z) {
  return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z));
}

inline double sigmoid(double z) {
  if (z >= 0.0) return 1.0 / (1.0 + std::exp(-z));
  const double e = std::exp(z);
  return e / (1.0 + e);
}

inline std::vector<std::size_t> all_rows(const Dataset& ds) {
  std::vector<std::size_t> rows(ds.size());
  std::iota(rows.begin(), rows.end(), std::size_t{0});
  return rows;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Logistic regression: mean log(1 + exp(-y w.x)) over the batch.

inline LossGrad logistic_grad(std::span<const double> w, const Dataset& ds,
                              std::span<const std::size_t> batch) {
  if (batch.empty()) throw Error("logistic_grad: empty batch");
  if (w.size() != ds.features_dim) throw Error("logistic_grad: dimension mismatch");
  LossGrad out{0.0, Vector(w.size(), 0.0)};
  for (std::size_t r : batch) {
    const auto x = ds.row(r);
    const double y = ds.labels[r];
    const double margin = y * detail::dot(w, x);
    out.loss += detail::softplus(-margin);
    const double coef = -y * detail::sigmoid(-margin);
    for (std::size_t k = 0; k < x.size(); ++k) out.grad[k] += coef * x[k];
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

inline double logistic_loss(std::span<const double> w, const Dataset& ds,
                            std::span<const std::size_t> batch) {
  if (batch.empty()) throw Error("logistic_loss: empty batch");
  double loss = 0.0;
  for (std::size_t r : batch) loss += detail::softplus(-ds.labels[r] * detail::dot(w, ds.row(r)));
  return loss / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// One-hidden-layer MLP: tanh hidden units, softmax cross-entropy output.
// Flat parameter layout: W1 (hidden x inputs), b1, W2 (classes x hidden), b2.

struct MlpShape {
  std::size_t inputs = 0;
  std::size_t hidden = 0;
  std::size_t classes = 0;

  std::size_t w1() const { return 0; }
  std::size_t b1() const { return hidden * inputs; }
  std::size_t w2() const { return b1() + hidden; }
  std::size_t b2() const { return w2() + classes * hidden; }
  std::size_t param_count() const { return b2() + classes; }
};

namespace detail {

// Forward pass for one row; fills hidden activations and class
// probabilities, returns the cross-entropy loss.
inline double mlp_forward(std::span<const double> params, const MlpShape& s,
                          std::span<const double> x, std::size_t label,
                          std::vector<double>& hidden, std::vector<double>& probs) {
  for (std::size_t h = 0; h < s.hidden; ++h) {
    const double pre = params[s.b1() + h] +
                       dot(params.subspan(s.w1() + h * s.inputs, s.inputs), x);
    hidden[h] = std::tanh(pre);
  }
  double peak = -std::numeric_limits<double>::infinity();
  for (std::size_t c = 0; c < s.classes; ++c) {
    probs[c] = params[s.b2() + c] +
               dot(params.subspan(s.w2() + c * s.hidden, s.hidden), hidden);
    peak = std::max(peak, probs[c]);
  }
  double norm = 0.0;
  for (double& p : probs) {
    p = std::exp(p - peak);
    norm += p;
  }
  for (double& p : probs) p /= norm;
  return -std::log(probs[label]);
}

inline std::size_t class_label(double y, std::size_t classes) {
  if (!(y >= 0.0) || y != std::floor(y) || y >= static_cast<double>(classes))
    throw Error("mlp: label " + std::to_string(y) + " is not a class index");
  return static_cast<std::size_t>(y);
}

}  // namespace detail

inline LossGrad mlp_grad(std::span<const double> params, const MlpShape& s,
                         const Dataset& ds, std::span<const std::size_t> batch) {
  if (params.size() != s.param_count() || ds.features_dim != s.inputs)
    throw Error("mlp_grad: shape mismatch");
  if (batch.empty()) throw Error("mlp_grad: empty batch");
  LossGrad out{0.0, Vector(params.size(), 0.0)};
  std::vector<double> hidden(s.hidden), probs(s.classes), back(s.hidden);
  for (std::size_t r : batch) {
    const auto x = ds.row(r);
    const std::size_t label = detail::class_label(ds.labels[r], s.classes);
    out.loss += detail::mlp_forward(params, s, x, label, hidden, probs);
    std::fill(back.begin(), back.end(), 0.0);
    for (std::size_t c = 0; c < s.classes; ++c) {
      const double err = probs[c] - (c == label ? 1.0 : 0.0);
      out.grad[s.b2() + c] += err;
      for (std::size_t h = 0; h < s.hidden; ++h) {
        out.grad[s.w2() + c * s.hidden + h] += err * hidden[h];
        back[h] += err * params[s.w2() + c * s.hidden + h];
      }
    }
    for (std::size_t h = 0; h < s.hidden; ++h) {
      const double dpre = back[h] * (1.0 - hidden[h] * hidden[h]);
      out.grad[s.b1() + h] += dpre;
      for (std::size_t k = 0; k < s.inputs; ++k)
        out.grad[s.w1() + h * s.inputs + k] += dpre * x[k];
    }
  }
  const double inv = 1.0 / static_cast<double>(batch.size());
  out.loss *= inv;
  for (double& g : out.grad) g *= inv;
  return out;
}

inline double mlp_loss(std::span<const double> params, const MlpShape& s, const Dataset& ds,
                       std::span<const std::size_t> batch) {
  if (params.size() != s.param_count() || ds.features_dim != s.inputs)
    throw Error("mlp_loss: shape mismatch");
  if (batch.empty()) throw Error("mlp_loss: empty batch");
  std::vector<double> hidden(s.hidden), probs(s.classes);
  double loss = 0.0;
  for (std::size_t r : batch)
    loss += detail::mlp_forward(params, s, ds.row(r), detail::class_label(ds.labels[r], s.classes),
                                hidden, probs);
  return loss / static_cast<double>(batch.size());
}

// ---------------------------------------------------------------------------
// Task: the model kind plus its loss/gradient and accuracy.

enum class ModelKind { kLogistic, kMlp };

class Task {
 public:
  static Task logistic(std::size_t dim) {
    Task t;
    t.kind_ = ModelKind::kLogistic;
    t.shape_.inputs = dim;
    return t;
  }

  static Task mlp(MlpShape shape) {
    if (shape.inputs == 0 || shape.hidden == 0 || shape.classes < 2)
      throw Error("mlp task needs inputs, hidden units and >= 2 classes");
    Task t;
    t.kind_ = ModelKind::kMlp;
    t.shape_ = shape;
    return t;
  }

  ModelKind kind() const noexcept { return kind_; }
  const MlpShape& shape() const noexcept { return shape_; }

  std::size_t dim() const noexcept {
    return kind_ == ModelKind::kLogistic ? shape_.inputs : shape_.param_count();
  }

  LossGrad loss_grad(std::span<const double> x, const Dataset& ds,
                     std::span<const std::size_t> batch) const {
    return kind_ == ModelKind::kLogistic ? logistic_grad(x, ds, batch)
                                         : mlp_grad(x, shape_, ds, batch);
  }

  LossGrad loss_grad(std::span<const double> x, const Dataset& ds) const {
    const auto rows = detail::all_rows(ds);
    return loss_grad(x, ds, rows);
  }

  double loss(std::span<const double> x, const Dataset& ds,
              std::span<const std::size_t> batch) const {
    return kind_ == ModelKind::kLogistic ? logistic_loss(x, ds, batch)
                                         : mlp_loss(x, shape_, ds, batch);
  }

  double loss(std::span<const double> x, const Dataset& ds) const {
    const auto rows = detail::all_rows(ds);
    return loss(x, ds, rows);
  }

  // Fraction of rows classified correctly.
  double accuracy(std::span<const double> x, const Dataset& ds) const {
    if (ds.size() == 0) throw Error("accuracy: empty dataset");
    std::size_t correct = 0;
    std::vector<double> hidden(shape_.hidden), probs(shape_.classes);
    for (std::size_t r = 0; r < ds.size(); ++r) {
      if (kind_ == ModelKind::kLogistic) {
        const double score = detail::dot(x, ds.row(r));
        correct += (score >= 0.0 ? 1.0 : -1.0) == ds.labels[r];
      } else {
        const std::size_t label = detail::class_label(ds.labels[r], shape_.classes);
        detail::mlp_forward(x, shape_, ds.row(r), label, hidden, probs);
        correct += static_cast<std::size_t>(
                       std::max_element(probs.begin(), probs.end()) - probs.begin()) == label;
      }
    }
    return static_cast<double>(correct) / static_cast<double>(ds.size());
  }

  // Common starting point for every node. Logistic models start at zero;
  // an all-zero MLP is a stationary point, so its first layer gets a small
  // seeded Gaussian draw (1/sqrt(inputs) scale).
  Vector initial_params(std::uint64_t seed) const {
    Vector x(dim(), 0.0);
    if (kind_ == ModelKind::kMlp) {
      const auto rng = make_stream(seed, StreamTag::kInit);
      const double scale = 1.0 / std::sqrt(static_cast<double>(shape_.inputs));
      for (std::size_t k = 0; k < shape_.b1(); ++k) x[k] = scale * rng.normal(k);
      const double out_scale = 1.0 / std::sqrt(static_cast<double>(shape_.hidden));
      for (std::size_t k = shape_.w2(); k < shape_.b2(); ++k) x[k] = out_scale * rng.normal(k);
    }
    return x;
  }

 private:
  ModelKind kind_ = ModelKind::kLogistic;
  MlpShape shape_;
};

// ---------------------------------------------------------------------------
// Data generation and ingestion

// Ground truth for synth_logistic: ceil(sparsity * d) standard-normal
// weights at seeded random positions, zeros elsewhere.
inline Vector synth_logistic_weights(std::uint64_t seed, std::size_t dim, double sparsity) {
  if (!(sparsity >= 0.0 && sparsity <= 1.0))
    throw Error("synth_logistic: sparsity must be in [0, 1]");
  const auto rng = make_stream(seed, StreamTag::kData, 0);
  const auto nonzero = static_cast<std::size_t>(std::ceil(sparsity * static_cast<double>(dim)));
  std::vector<std::size_t> order(dim);
  std::iota(order.begin(), order.end(), std::size_t{0});
  for (std::size_t i = 0; i < nonzero && i + 1 < dim; ++i)
    std::swap(order[i], order[i + rng.below(i, dim - i)]);
  Vector w(dim, 0.0);
  for (std::size_t i = 0; i < nonzero; ++i) w[order[i]] = rng.normal(dim + i);
  return w;
}

/// Gaussian features with labels drawn from the logistic model of
/// synth_logistic_weights. Deterministic per seed.
inline Dataset synth_logistic(std::uint64_t seed, std::size_t rows, std::size_t dim,
                              double sparsity) {
  if (rows == 0 || dim == 0) throw Error("synth_logistic: rows and dim must be >= 1");
  const Vector w = synth_logistic_weights(seed, dim, sparsity);
  const auto features = make_stream(seed, StreamTag::kData, 1);
  const auto coins = make_stream(seed, StreamTag::kData, 2);
  Dataset ds;
  ds.name = "synth_logistic";
  ds.features_dim = dim;
  ds.features.resize(rows * dim);
  ds.labels.resize(rows);
  for (std::size_t i = 0; i < rows * dim; ++i) ds.features[i] = features.normal(i);
  for (std::size_t r = 0; r < rows; ++r) {
    const double p = detail::sigmoid(detail::dot(w, ds.row(r)));
    ds.labels[r] = coins.uniform(r) < p ? 1.0 : -1.0;
  }
  return ds;
}

/// Gaussian features labelled by the argmax of a seeded Gaussian linear
/// teacher. Labels are class indices 0..classes-1.
inline Dataset synth_multiclass(std::uint64_t seed, std::size_t rows, std::size_t dim,
                                std::size_t classes) {
  if (rows == 0 || dim == 0 || classes < 2)
    throw Error("synth_multiclass: need rows, dim >= 1 and classes >= 2");
  const auto teacher = make_stream(seed, StreamTag::kData, 3);
  const auto features = make_stream(seed, StreamTag::kData, 4);
  Dataset ds;
  ds.name = "synth_multiclass";
  ds.features_dim = dim;
  ds.features.resize(rows * dim);
  ds.labels.resize(rows);
  for (std::size_t i = 0; i < rows * dim; ++i) ds.features[i] = features.normal(i);
  Vector w(classes * dim);
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = teacher.normal(i);
  for (std::size_t r = 0; r < rows; ++r) {
    std::size_t best = 0;
    double best_score = -std::numeric_limits<double>::infinity();
    for (std::size_t c = 0; c < classes; ++c) {
      double score = 0.0;
      for (std::size_t k = 0; k < dim; ++k) score += w[c * dim + k] * ds.row(r)[k];
      if (score > best_score) best_score = score, best = c;
    }
    ds.labels[r] = static_cast<double>(best);
  }
  return ds;
}

/// Seeded shuffle split into `parts` disjoint shards whose sizes differ by
/// at most one.
inline std::vector<Dataset> partition(const Dataset& ds, std::size_t parts,
                                      std::uint64_t seed) {
  if (parts == 0) throw Error("partition: need at least one shard");
  if (parts > ds.size())
    throw Error("partition: " + std::to_string(parts) + " shards for " +
                std::to_string(ds.size()) + " rows");
  std::vector<std::size_t> order(ds.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  const auto rng = make_stream(seed, StreamTag::kPartition);
  for (std::size_t i = order.size(); i > 1; --i)
    std::swap(order[i - 1], order[rng.below(i, i)]);
  std::vector<Dataset> shards;
  shards.reserve(parts);
  const std::size_t base = ds.size() / parts;
  const std::size_t extra = ds.size() % parts;
  std::size_t start = 0;
  for (std::size_t p = 0; p < parts; ++p) {
    const std::size_t len = base + (p < extra ? 1 : 0);
    shards.push_back(ds.subset(std::span(order).subspan(start, len),
                               ds.name + "/shard" + std::to_string(p)));
    start += len;
  }
  return shards;
}

/// Comma-separated numeric rows, label in the last column. An optional
/// non-numeric first line is taken as a header.
inline Dataset load_csv(const std::filesystem::path& path) {
  const auto table = csv::read_numeric(path, /*allow_header=*/true);
  const std::size_t width = table.rows.front().size();
  if (width < 2) throw Error(path.string() + ": need at least one feature and a label");
  Dataset ds;
  ds.name = path.stem().string();
  ds.features_dim = width - 1;
  for (const auto& row : table.rows) {
    ds.features.insert(ds.features.end(), row.begin(), row.end() - 1);
    ds.labels.push_back(row.back());
  }
  ds.check();
  return ds;
}

inline void write_csv(const std::filesystem::path& path, const Dataset& ds) {
  std::ofstream out(path);
  if (!out) throw Error("cannot write " + path.string());
  out << std::setprecision(17);
  for (std::size_t k = 0; k < ds.features_dim; ++k) out << 'x' << k << ',';
  out << "label\n";
  for (std::size_t r = 0; r < ds.size(); ++r) {
    for (double v : ds.row(r)) out << v << ',';
    out << ds.labels[r] << '\n';
  }
  if (!out) throw Error("write error on " + path.string());
}

/// Mini-batch schedule for one node: each epoch is a seeded permutation of
/// the shard, cut into floor(size / batch) batches; the remainder of an
/// epoch is dropped. Batch t is a pure function of (seed, node, t).
class BatchSampler {
 public:
  BatchSampler(std::uint64_t seed, std::size_t node, std::size_t shard_size,
               std::size_t batch_size)
      : seed_(seed), node_(node), shard_size_(shard_size),
        batch_size_(std::min(batch_size, shard_size)) {
    if (shard_size == 0 || batch_size == 0) throw Error("BatchSampler: empty shard or batch");
  }

  std::size_t batch_size() const noexcept { return batch_size_; }

  std::vector<std::size_t> batch(std::uint64_t round) const {
    const std::uint64_t per_epoch = shard_size_ / batch_size_;
    const std::uint64_t epoch = round / per_epoch;
    const std::uint64_t slot = round % per_epoch;
    std::vector<std::size_t> order(shard_size_);
    std::iota(order.begin(), order.end(), std::size_t{0});
    const auto rng = make_stream(seed_, StreamTag::kBatch, node_, epoch);
    // Only the first (slot + 1) * batch positions of the shuffle are needed.
    const std::size_t needed = (slot + 1) * batch_size_;
    for (std::size_t i = 0; i < needed && i + 1 < shard_size_; ++i)
      std::swap(order[i], order[i + rng.below(i, shard_size_ - i)]);
    return {order.begin() + static_cast<std::ptrdiff_t>(slot * batch_size_),
            order.begin() + static_cast<std::ptrdiff_t>(needed)};
  }

 private:
  std::uint64_t seed_;
  std::size_t node_;
  std::size_t shard_size_;
  std::size_t batch_size_;
};

}  // namespace malcom
