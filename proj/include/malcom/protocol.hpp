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

// Synchronous round engine for decentralized proximal SGD with compressed
// gossip. Per round, every node
//
//   1. takes a stochastic gradient step and soft-thresholds the result (z),
//   2. quantizes and encodes its residual z - y_self,
//   3. broadcasts the message to its neighbors,
//   4. adds the decoded residuals to its replicas (y_self, y_neighbors),
//   5. aggregates x = z + gamma * sum_j w_ij (y_j - y_self).
//
// Steps 1-2 and 4-5 run in parallel across nodes; the exchange is a
// barrier. All randomness comes from counter-based streams keyed by
// (seed, node, round), so results do not depend on the thread count.

#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <limits>
#include <map>
#include <mutex>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <thread>
#include <utility>
#include <vector>

#include "malcom/codec.hpp"
#include "malcom/error.hpp"
#include "malcom/optimizer.hpp"
#include "malcom/quantizer.hpp"
#include "malcom/rng.hpp"
#include "malcom/tasks.hpp"
#include "malcom/topology.hpp"

namespace malcom {

enum class CodecKind { kMalcom, kPerEntryBaseline, kNone };

inline std::string_view to_string(CodecKind c) {
  switch (c) {
    case CodecKind::kMalcom: return "malcom";
    case CodecKind::kPerEntryBaseline: return "per_entry_baseline";
    case CodecKind::kNone: return "none";
  }
  return "?";
}

inline CodecKind parse_codec(std::string_view s) {
  if (s == "malcom") return CodecKind::kMalcom;
  if (s == "per_entry_baseline") return CodecKind::kPerEntryBaseline;
  if (s == "none") return CodecKind::kNone;
  throw ConfigError("unknown codec '" + std::string(s) + "'");
}

// Runs fn(i) for i in [0, count) on up to `threads` threads with a static
// contiguous split. The first exception thrown by any worker is rethrown.
template <class Fn>
void parallel_for(std::size_t count, std::size_t threads, Fn&& fn) {
  if (threads <= 1 || count <= 1) {
    for (std::size_t i = 0; i < count; ++i) fn(i);
    return;
  }
  const std::size_t workers = std::min(threads, count);
  std::exception_ptr failure;
  std::mutex failure_mutex;
  {
    std::vector<std::jthread> pool;
    pool.reserve(workers);
    for (std::size_t w = 0; w < workers; ++w) {
      pool.emplace_back([&, w] {
        const std::size_t begin = count * w / workers;
        const std::size_t end = count * (w + 1) / workers;
        try {
          for (std::size_t i = begin; i < end; ++i) fn(i);
        } catch (...) {
          std::lock_guard lock(failure_mutex);
          if (!failure) failure = std::current_exception();
        }
      });
    }
  }
  if (failure) std::rethrow_exception(failure);
}

// ---------------------------------------------------------------------------
// Node state and per-node kernels

struct NodeState {
  std::size_t id = 0;
  Vector x;       // current model
  Vector z;       // post-prox model of the latest round
  Vector y_self;  // public replica of this node's model
  std::map<std::size_t, Vector> y_neighbors;  // replicas of each neighbor
  std::uint64_t round = 0;  // position of this node's counter streams
};

inline NodeState make_node(std::size_t id, Vector x0, std::span<const std::size_t> neighbors) {
  NodeState s;
  s.id = id;
  s.z = Vector(x0.size(), 0.0);
  s.y_self = Vector(x0.size(), 0.0);
  for (std::size_t j : neighbors) s.y_neighbors.emplace(j, Vector(x0.size(), 0.0));
  s.x = std::move(x0);
  return s;
}

/// Local SGD step and soft-thresholding. Updates `state.z` and returns the
/// residual z - y_self.
inline Vector local_step(NodeState& state, const Task& task, const Dataset& shard,
                         std::span<const std::size_t> batch, const HyperParams& hp) {
  const LossGrad lg = task.loss_grad(state.x, shard, batch);
  for (std::size_t k = 0; k < lg.grad.size(); ++k) {
    if (!std::isfinite(lg.grad[k]))
      throw Error("non-finite gradient at node " + std::to_string(state.id) + ", round " +
                  std::to_string(state.round) + ", coordinate " + std::to_string(k) +
                  " (loss " + std::to_string(lg.loss) + ")");
  }
  state.z = soft_threshold(sgd_step(state.x, lg.grad, hp.eta), hp.mu * hp.eta);
  Vector residual(state.z.size());
  for (std::size_t k = 0; k < residual.size(); ++k) residual[k] = state.z[k] - state.y_self[k];
  return residual;
}

// One broadcast per node per round. `raw` carries the uncompressed residual
// when the codec is kNone; otherwise `message` is used.
struct Packet {
  std::size_t sender = 0;
  CodecKind codec = CodecKind::kMalcom;
  EncodedMessage message;
  Vector raw;

  // Bits charged per directed edge carrying this packet.
  std::uint64_t wire_bits() const noexcept {
    return codec == CodecKind::kNone ? 64 * static_cast<std::uint64_t>(raw.size())
                                     : message.wire_bits();
  }
};

// Coding statistics of one packet, for rate diagnostics.
struct PacketStats {
  std::size_t payload_bits = 0;
  double type_bound_per_coord = std::numeric_limits<double>::quiet_NaN();
  double rho_hat = 0.0;  // mean |residual entry|
  double range = 0.0;
  bool all_zero = true;
};

struct Outgoing {
  Packet packet;
  Vector sent;  // what the receivers will reconstruct
  PacketStats stats;
};

inline Outgoing compress(std::size_t sender, std::span<const double> residual, CodecKind codec,
                         std::uint32_t levels, const CounterDither& dither) {
  Outgoing out;
  out.packet.sender = sender;
  out.packet.codec = codec;
  for (double v : residual) {
    out.stats.rho_hat += std::abs(v);
    out.stats.all_zero &= v == 0.0;
  }
  out.stats.rho_hat /= static_cast<double>(residual.size());
  if (codec == CodecKind::kNone) {
    out.packet.raw.assign(residual.begin(), residual.end());
    out.sent = out.packet.raw;
    out.stats.payload_bits = 64 * residual.size();
    return out;
  }
  const QuantizedResidual q = quantize(residual, levels, dither);
  out.stats.range = q.range;
  out.stats.type_bound_per_coord = bit_bound(compute_type_vector(q));
  out.packet.message =
      codec == CodecKind::kMalcom ? encode(q) : baseline_per_entry_encode(q);
  out.stats.payload_bits = out.packet.message.payload_bit_len;
  out.sent = dequantize(q);
  return out;
}

// Receiver side: decode and de-normalize.
inline Vector open_packet(const Packet& p) {
  switch (p.codec) {
    case CodecKind::kNone: return p.raw;
    case CodecKind::kMalcom: return dequantize(decode(p.message));
    case CodecKind::kPerEntryBaseline: return dequantize(baseline_per_entry_decode(p.message));
  }
  throw Error("open_packet: unknown codec");
}

inline void add_into(Vector& acc, std::span<const double> v) {
  for (std::size_t k = 0; k < acc.size(); ++k) acc[k] += v[k];
}

/// Applies one round of messages at a single node: y_self += own residual,
/// y_neighbors[j] += decoded residual of j for every neighbor j.
inline void exchange(NodeState& node, std::span<const Outgoing> outgoing) {
  add_into(node.y_self, outgoing[node.id].sent);
  for (auto& [j, replica] : node.y_neighbors) {
    const Packet& p = outgoing[j].packet;
    Vector decoded;
    try {
      decoded = open_packet(p);
    } catch (const std::exception& e) {
      throw Error("round " + std::to_string(node.round) + ": decode failed on edge " +
                  std::to_string(j) + "->" + std::to_string(node.id) + ": " + e.what());
    }
    if (decoded.size() != replica.size())
      throw Error("round " + std::to_string(node.round) + ": edge " + std::to_string(j) +
                  "->" + std::to_string(node.id) + " delivered wrong dimension");
    add_into(replica, decoded);
  }
}

// Applies a full round of messages at every node.
inline void exchange(std::span<NodeState> nodes, std::span<const Outgoing> outgoing,
                     std::size_t threads = 1) {
  parallel_for(nodes.size(), threads, [&](std::size_t i) { exchange(nodes[i], outgoing); });
}

// x_i = z_i + gamma * sum_{j != i} w_ij (y_j - y_i), neighbors in ascending order.
inline Vector aggregate(const NodeState& s, double gamma, std::span<const double> w_row) {
  Vector correction(s.z.size(), 0.0);
  for (const auto& [j, y_j] : s.y_neighbors) {
    const double w = w_row[j];
    for (std::size_t k = 0; k < correction.size(); ++k)
      correction[k] += w * (y_j[k] - s.y_self[k]);
  }
  Vector x(s.z.size());
  for (std::size_t k = 0; k < x.size(); ++k) x[k] = s.z[k] + gamma * correction[k];
  return x;
}

// ---------------------------------------------------------------------------
// Engine

struct EngineOptions {
  HyperParams hp;
  CodecKind codec = CodecKind::kMalcom;
  std::uint64_t seed = 1;
  std::size_t threads = 1;
  std::size_t metric_every = 50;       // projected-gradient cadence; 0 = never
  std::size_t objective_subsample = 0;  // rows per node for the objective; 0 = all
};

struct RoundMetrics {
  static constexpr double kMissing = std::numeric_limits<double>::quiet_NaN();

  std::size_t round = 0;
  double objective_total = 0.0;
  double smooth_part = 0.0;
  double l1_part = 0.0;
  double consensus_sq = 0.0;  // sum_i ||x_i - x_bar||^2
  double proj_grad_sq = kMissing;
  std::uint64_t bits_this_round = 0;
  std::uint64_t cum_bits = 0;
  double test_metric = kMissing;
};

class Engine {
 public:
  Engine(Task task, Topology topology, std::vector<Dataset> shards, EngineOptions options,
         std::optional<Dataset> test_set = std::nullopt)
      : task_(std::move(task)),
        topology_(std::move(topology)),
        shards_(std::move(shards)),
        options_(options),
        test_set_(std::move(test_set)) {
    options_.hp.check();
    if (shards_.size() != topology_.n)
      throw ConfigError("need one data shard per node: " + std::to_string(shards_.size()) +
                        " shards for " + std::to_string(topology_.n) + " nodes");
    const Vector x0 = task_.initial_params(options_.seed);
    for (std::size_t i = 0; i < topology_.n; ++i) {
      if (shards_[i].size() == 0) throw ConfigError("node " + std::to_string(i) + " has no data");
      if (shards_[i].features_dim != task_.shape().inputs)
        throw ConfigError("shard feature width does not match the model");
      nodes_.push_back(make_node(i, x0, topology_.neighbors[i]));
      samplers_.emplace_back(options_.seed, i, shards_[i].size(), options_.hp.batch_size);
    }
  }

  using MessageSink = std::function<void(std::uint64_t round, const Packet&)>;
  void set_message_sink(MessageSink sink) { sink_ = std::move(sink); }

  RoundMetrics run_round() {
    const std::size_t n = nodes_.size();
    const std::uint64_t t = round_;
    outgoing_.assign(n, Outgoing{});
    parallel_for(n, options_.threads, [&](std::size_t i) {
      NodeState& node = nodes_[i];
      node.round = t;
      const auto batch = samplers_[i].batch(t);
      const Vector residual = local_step(node, task_, shards_[i], batch, options_.hp);
      const CounterDither dither{make_stream(options_.seed, StreamTag::kDither, i, t)};
      outgoing_[i] = compress(i, residual, options_.codec, options_.hp.levels, dither);
    });
    if (sink_) {
      for (const Outgoing& o : outgoing_) sink_(t, o.packet);
    }
    exchange(nodes_, outgoing_, options_.threads);

    std::vector<Vector> next(n);
    parallel_for(n, options_.threads, [&](std::size_t i) {
      next[i] = aggregate(nodes_[i], options_.hp.gamma, topology_.weights.row(i));
    });
    for (std::size_t i = 0; i < n; ++i) nodes_[i].x = std::move(next[i]);

    RoundMetrics m = measure(t);
    ++round_;
    for (auto& node : nodes_) node.round = round_;
    return m;
  }

  std::size_t round() const noexcept { return round_; }
  std::span<const NodeState> nodes() const noexcept { return nodes_; }
  const Topology& topology() const noexcept { return topology_; }
  const Task& task() const noexcept { return task_; }
  std::span<const Dataset> shards() const noexcept { return shards_; }
  const EngineOptions& options() const noexcept { return options_; }
  std::span<const Outgoing> last_outgoing() const noexcept { return outgoing_; }

  // max_k |mean_i x_i[k] - mean_i z_i[k]| after the latest round.
  double last_average_drift() const noexcept { return drift_; }

  Vector average_model() const {
    Vector bar(task_.dim(), 0.0);
    for (const auto& node : nodes_) add_into(bar, node.x);
    for (double& v : bar) v /= static_cast<double>(nodes_.size());
    return bar;
  }

  double projected_gradient_sq() const {
    const Vector bar = average_model();
    std::vector<Vector> grads(nodes_.size());
    parallel_for(nodes_.size(), options_.threads,
                 [&](std::size_t i) { grads[i] = task_.loss_grad(bar, shards_[i]).grad; });
    Vector full(bar.size(), 0.0);
    for (const auto& g : grads) add_into(full, g);
    for (double& v : full) v /= static_cast<double>(nodes_.size());
    double sq = 0.0;
    for (double v : projected_gradient(bar, full, options_.hp.eta, options_.hp.mu)) sq += v * v;
    return sq;
  }

 private:
  RoundMetrics measure(std::uint64_t t) {
    const std::size_t n = nodes_.size();
    const std::size_t d = task_.dim();
    RoundMetrics m;
    m.round = t;

    drift_ = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
      double mean_x = 0.0, mean_z = 0.0;
      for (const auto& node : nodes_) {
        mean_x += node.x[k];
        mean_z += node.z[k];
      }
      drift_ = std::max(drift_, std::abs(mean_x - mean_z) / static_cast<double>(n));
    }

    std::vector<double> losses(n);
    parallel_for(n, options_.threads, [&](std::size_t i) {
      const Dataset& ds = shards_[i];
      const std::size_t sub = options_.objective_subsample;
      if (sub > 0 && sub < ds.size()) {
        std::vector<std::size_t> rows(sub);
        for (std::size_t k = 0; k < sub; ++k) rows[k] = k;
        losses[i] = task_.loss(nodes_[i].x, ds, rows);
      } else {
        losses[i] = task_.loss(nodes_[i].x, ds);
      }
    });
    for (std::size_t i = 0; i < n; ++i) {
      m.smooth_part += losses[i];
      m.l1_part += options_.hp.mu * l1_norm(nodes_[i].x);
    }
    m.smooth_part /= static_cast<double>(n);
    m.l1_part /= static_cast<double>(n);
    m.objective_total = m.smooth_part + m.l1_part;

    const Vector bar = average_model();
    for (const auto& node : nodes_)
      for (std::size_t k = 0; k < d; ++k) {
        const double e = node.x[k] - bar[k];
        m.consensus_sq += e * e;
      }

    if (options_.metric_every > 0 && t % options_.metric_every == 0) {
      m.proj_grad_sq = projected_gradient_sq();
      if (test_set_) m.test_metric = task_.accuracy(bar, *test_set_);
    }

    for (std::size_t i = 0; i < n; ++i)
      m.bits_this_round += outgoing_[i].packet.wire_bits() * topology_.neighbors[i].size();
    cum_bits_ += m.bits_this_round;
    m.cum_bits = cum_bits_;
    return m;
  }

  Task task_;
  Topology topology_;
  std::vector<Dataset> shards_;
  EngineOptions options_;
  std::optional<Dataset> test_set_;
  std::vector<NodeState> nodes_;
  std::vector<BatchSampler> samplers_;
  std::vector<Outgoing> outgoing_;
  MessageSink sink_;
  std::uint64_t round_ = 0;
  std::uint64_t cum_bits_ = 0;
  double drift_ = 0.0;
};

// ---------------------------------------------------------------------------
// Record/replay log of encoded messages.
//
// File: 8-byte magic "MALCOMLG", 1 byte codec id, then records of
// u64 round, u32 sender, u32 byte length (little-endian) followed by the
// message in wire layout.

inline constexpr char kLogMagic[8] = {'M', 'A', 'L', 'C', 'O', 'M', 'L', 'G'};

struct LogRecord {
  std::uint64_t round = 0;
  std::uint32_t sender = 0;
  EncodedMessage message;
};

class MessageLogWriter {
 public:
  MessageLogWriter(const std::filesystem::path& path, CodecKind codec)
      : out_(path, std::ios::binary) {
    if (!out_) throw Error("cannot open message log " + path.string());
    if (codec == CodecKind::kNone) throw Error("message log needs a coded codec");
    out_.write(kLogMagic, sizeof kLogMagic);
    out_.put(static_cast<char>(codec));
  }

  void write(std::uint64_t round, const Packet& p) {
    const auto bytes = p.message.to_bytes();
    put_le(round, 8);
    put_le(p.sender, 4);
    put_le(bytes.size(), 4);
    out_.write(reinterpret_cast<const char*>(bytes.data()),
               static_cast<std::streamsize>(bytes.size()));
    if (!out_) throw Error("message log write failed");
  }

  void flush() { out_.flush(); }

 private:
  void put_le(std::uint64_t v, int n) {
    for (int k = 0; k < n; ++k) out_.put(static_cast<char>((v >> (8 * k)) & 0xff));
  }

  std::ofstream out_;
};

class MessageLogReader {
 public:
  explicit MessageLogReader(const std::filesystem::path& path) : in_(path, std::ios::binary) {
    if (!in_) throw Error("cannot open message log " + path.string());
    char magic[8];
    in_.read(magic, sizeof magic);
    if (!in_ || !std::equal(magic, magic + 8, kLogMagic))
      throw Error("not a message log: " + path.string());
    const int codec = in_.get();
    if (codec != static_cast<int>(CodecKind::kMalcom) &&
        codec != static_cast<int>(CodecKind::kPerEntryBaseline))
      throw Error("message log has unknown codec id");
    codec_ = static_cast<CodecKind>(codec);
  }

  CodecKind codec() const noexcept { return codec_; }

  std::optional<LogRecord> next() {
    LogRecord rec;
    std::uint64_t len = 0;
    if (!get_le(rec.round, 8)) return std::nullopt;
    std::uint64_t sender = 0;
    if (!get_le(sender, 4) || !get_le(len, 4)) throw Error("truncated message log record");
    rec.sender = static_cast<std::uint32_t>(sender);
    std::vector<std::uint8_t> bytes(len);
    in_.read(reinterpret_cast<char*>(bytes.data()), static_cast<std::streamsize>(len));
    if (!in_) throw Error("truncated message log record");
    rec.message = EncodedMessage::from_bytes(bytes);
    return rec;
  }

 private:
  bool get_le(std::uint64_t& v, int n) {
    v = 0;
    for (int k = 0; k < n; ++k) {
      const int c = in_.get();
      if (c == std::char_traits<char>::eof()) {
        if (k == 0) return false;
        throw Error("truncated message log record");
      }
      v |= static_cast<std::uint64_t>(c) << (8 * k);
    }
    return true;
  }

  std::ifstream in_;
  CodecKind codec_ = CodecKind::kMalcom;
};

}  // namespace malcom
