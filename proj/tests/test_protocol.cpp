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

#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>
#include <vector>

#include "malcom/protocol.hpp"

namespace malcom {
namespace {

struct Fixture {
  Task task = Task::logistic(20);
  Topology topo = build_ring(10);
  std::vector<Dataset> shards;

  explicit Fixture(std::size_t n = 10, std::uint64_t seed = 3) {
    if (n != 10) topo = build_fully_connected(n);
    shards = partition(synth_logistic(seed, 40 * n, 20, 0.2), n, seed);
  }

  Engine engine(CodecKind codec, std::size_t threads = 1, HyperParams hp = {}) const {
    EngineOptions o;
    o.hp = hp;
    o.codec = codec;
    o.seed = 11;
    o.threads = threads;
    o.metric_every = 5;
    return Engine(task, topo, shards, o);
  }
};

Dataset zero_gradient_data() {
  // rows (x, +1) and (x, -1) cancel in the gradient at w = 0
  Dataset ds;
  ds.features_dim = 3;
  ds.features = {1, 2, 3, 1, 2, 3};
  ds.labels = {1, -1};
  return ds;
}

TEST(Aggregate, TwoNodeScalarExample) {
  NodeState s = make_node(0, Vector{0.0}, std::vector<std::size_t>{1});
  s.z = {1.0};
  s.y_self = {1.0};
  s.y_neighbors[1] = {3.0};
  const std::vector<double> w_row = {0.5, 0.5};
  EXPECT_EQ(aggregate(s, 1.0, w_row), Vector{2.0});
}

TEST(Aggregate, NoDisagreementReturnsZ) {
  NodeState s = make_node(1, Vector(3, 0.0), std::vector<std::size_t>{0, 2});
  s.z = {0.1, -0.7, 3.3};
  s.y_self = {1.0, 2.0, 3.0};
  s.y_neighbors[0] = s.y_self;
  s.y_neighbors[2] = s.y_self;
  const std::vector<double> w_row = {0.25, 0.5, 0.25};
  EXPECT_EQ(aggregate(s, 0.7, w_row), s.z);
}

TEST(LocalStep, ZeroGradientFromZeroInitGivesZeroResidual) {
  NodeState s = make_node(0, Vector(3, 0.0), std::vector<std::size_t>{1});
  const auto ds = zero_gradient_data();
  const std::vector<std::size_t> batch = {0, 1};
  const auto p = local_step(s, Task::logistic(3), ds, batch, HyperParams{});
  EXPECT_EQ(p, Vector(3, 0.0));
  const auto out = compress(0, p, CodecKind::kMalcom, 8, CounterDither{make_stream(1, StreamTag::kDither)});
  for (auto sym : decode(out.packet.message).levels) EXPECT_EQ(sym, kExactZero);
  EXPECT_EQ(out.sent, Vector(3, 0.0));
}

TEST(LocalStep, ResidualIsProxOutputMinusReplica) {
  NodeState s = make_node(0, Vector{0.5, -0.5, 0.01}, std::vector<std::size_t>{});
  s.y_self = {0.1, 0.2, 0.3};
  const auto ds = zero_gradient_data();
  const std::vector<std::size_t> batch = {0};
  HyperParams hp;
  hp.eta = 0.1;
  hp.mu = 0.5;
  const auto lg = Task::logistic(3).loss_grad(s.x, ds, batch);
  const auto p = local_step(s, Task::logistic(3), ds, batch, hp);
  const auto z = soft_threshold(sgd_step(Vector{0.5, -0.5, 0.01}, lg.grad, 0.1), 0.05);
  EXPECT_EQ(s.z, z);
  for (std::size_t k = 0; k < 3; ++k) EXPECT_EQ(p[k], z[k] - s.y_self[k]);
}

TEST(LocalStep, NonFiniteGradientAborts) {
  NodeState s = make_node(4, Vector(2, 0.0), std::vector<std::size_t>{});
  Dataset ds;
  ds.features_dim = 2;
  ds.features = {NAN, 1.0};
  ds.labels = {1.0};
  const std::vector<std::size_t> batch = {0};
  try {
    local_step(s, Task::logistic(2), ds, batch, HyperParams{});
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("node 4"), std::string::npos) << e.what();
  }
}

TEST(Exchange, AllZeroMessagesLeaveReplicasUnchanged) {
  std::vector<NodeState> nodes;
  nodes.push_back(make_node(0, Vector(4, 0.0), std::vector<std::size_t>{1}));
  nodes.push_back(make_node(1, Vector(4, 0.0), std::vector<std::size_t>{0}));
  nodes[0].y_self = {1, 2, 3, 4};
  nodes[1].y_neighbors[0] = nodes[0].y_self;
  std::vector<Outgoing> out;
  for (std::size_t i = 0; i < 2; ++i)
    out.push_back(compress(i, Vector(4, 0.0), CodecKind::kMalcom, 4,
                           CounterDither{make_stream(1, StreamTag::kDither, i)}));
  malcom::exchange(std::span<NodeState>(nodes), out);
  EXPECT_EQ(nodes[0].y_self, (Vector{1, 2, 3, 4}));
  EXPECT_EQ(nodes[1].y_neighbors[0], (Vector{1, 2, 3, 4}));
  EXPECT_EQ(nodes[1].y_self, Vector(4, 0.0));
}

TEST(Exchange, DecodeFailureNamesTheEdge) {
  std::vector<NodeState> nodes;
  nodes.push_back(make_node(0, Vector(4, 0.0), std::vector<std::size_t>{1}));
  nodes.push_back(make_node(1, Vector(4, 0.0), std::vector<std::size_t>{0}));
  nodes[0].round = 6;
  std::vector<Outgoing> out;
  for (std::size_t i = 0; i < 2; ++i)
    out.push_back(compress(i, Vector{0.1, -0.2, 0.3, 0.0}, CodecKind::kMalcom, 4,
                           CounterDither{make_stream(1, StreamTag::kDither, i)}));
  out[1].packet.message.payload_bit_len -= 1;
  try {
    malcom::exchange(nodes[0], out);
    FAIL() << "expected an error";
  } catch (const Error& e) {
    EXPECT_NE(std::string(e.what()).find("edge 1->0"), std::string::npos) << e.what();
    EXPECT_NE(std::string(e.what()).find("round 6"), std::string::npos) << e.what();
  }
}

class EngineCodecs : public ::testing::TestWithParam<CodecKind> {};

TEST_P(EngineCodecs, ReplicaCoherenceAndAveragePreservation) {
  const Fixture f;
  Engine e = f.engine(GetParam());
  for (int t = 0; t < 60; ++t) {
    e.run_round();
    EXPECT_LE(e.last_average_drift(), 1e-12) << "round " << t;
    for (const auto& node : e.nodes())
      for (const auto& [j, replica] : node.y_neighbors)
        ASSERT_EQ(replica, e.nodes()[j].y_self) << "round " << t << " edge " << j << "->" << node.id;
  }
}

TEST_P(EngineCodecs, BitsAccounting) {
  const Fixture f;
  Engine e = f.engine(GetParam());
  std::uint64_t cum = 0;
  for (int t = 0; t < 10; ++t) {
    const auto m = e.run_round();
    std::uint64_t expect = 0;
    for (const auto& o : e.last_outgoing()) {
      const std::uint64_t per_edge =
          GetParam() == CodecKind::kNone ? 64 * 20 : 8 * (24 + (o.packet.message.payload_bit_len + 7) / 8);
      expect += per_edge * f.topo.neighbors[o.packet.sender].size();
    }
    EXPECT_EQ(m.bits_this_round, expect);
    cum += expect;
    EXPECT_EQ(m.cum_bits, cum);
  }
}

TEST_P(EngineCodecs, ThreadCountInvariance) {
  const Fixture f;
  Engine a = f.engine(GetParam(), 1);
  Engine b = f.engine(GetParam(), 4);
  for (int t = 0; t < 25; ++t) {
    const auto ma = a.run_round();
    const auto mb = b.run_round();
    EXPECT_EQ(ma.objective_total, mb.objective_total);
    EXPECT_EQ(ma.consensus_sq, mb.consensus_sq);
    EXPECT_EQ(ma.bits_this_round, mb.bits_this_round);
    EXPECT_TRUE(ma.proj_grad_sq == mb.proj_grad_sq ||
                (std::isnan(ma.proj_grad_sq) && std::isnan(mb.proj_grad_sq)));
  }
  for (std::size_t i = 0; i < a.nodes().size(); ++i) EXPECT_EQ(a.nodes()[i].x, b.nodes()[i].x);
}

INSTANTIATE_TEST_SUITE_P(AllCodecs, EngineCodecs,
                         ::testing::Values(CodecKind::kMalcom, CodecKind::kPerEntryBaseline,
                                           CodecKind::kNone),
                         [](const auto& info) { return std::string(to_string(info.param)); });

TEST(Engine, PassThroughIsExactDecentralizedProxSgd) {
  const Fixture f;
  Engine e = f.engine(CodecKind::kNone);
  const HyperParams hp;
  // independent loop: x_i <- z_i + gamma sum_j w_ij (z_j - z_i)
  std::vector<Vector> x(10, Vector(20, 0.0));
  std::vector<BatchSampler> samplers;
  for (std::size_t i = 0; i < 10; ++i) samplers.emplace_back(11, i, f.shards[i].size(), hp.batch_size);
  for (std::uint64_t t = 0; t < 40; ++t) {
    std::vector<Vector> z(10);
    for (std::size_t i = 0; i < 10; ++i) {
      const auto g = f.task.loss_grad(x[i], f.shards[i], samplers[i].batch(t)).grad;
      z[i] = soft_threshold(sgd_step(x[i], g, hp.eta), hp.mu * hp.eta);
    }
    for (std::size_t i = 0; i < 10; ++i) {
      x[i] = z[i];
      for (std::size_t j : f.topo.neighbors[i])
        for (std::size_t k = 0; k < 20; ++k)
          x[i][k] += hp.gamma * f.topo.weights(i, j) * (z[j][k] - z[i][k]);
    }
    e.run_round();
  }
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t k = 0; k < 20; ++k) EXPECT_NEAR(e.nodes()[i].x[k], x[i][k], 1e-12);
}

TEST(Engine, CompleteGraphPassThroughMatchesPooledSgd) {
  // 2-node scalar instance, W = 11^T/2, gamma = 1, mu = 0
  std::vector<Dataset> shards(2);
  for (std::size_t i = 0; i < 2; ++i) {
    shards[i].features_dim = 1;
    for (int r = 0; r < 8; ++r) {
      shards[i].features.push_back(0.3 * r - 1.0 + 0.5 * i);
      shards[i].labels.push_back((r + i) % 3 ? 1.0 : -1.0);
    }
  }
  EngineOptions o;
  o.codec = CodecKind::kNone;
  o.seed = 5;
  o.hp.mu = 0.0;
  o.hp.batch_size = 2;
  const auto task = Task::logistic(1);
  Engine e(task, build_fully_connected(2), shards, o);
  double w = 0.0;
  std::vector<BatchSampler> samplers = {BatchSampler(5, 0, 8, 2), BatchSampler(5, 1, 8, 2)};
  for (std::uint64_t t = 0; t < 30; ++t) {
    const Vector wv = {w};
    const double g = 0.5 * (task.loss_grad(wv, shards[0], samplers[0].batch(t)).grad[0] +
                            task.loss_grad(wv, shards[1], samplers[1].batch(t)).grad[0]);
    w -= o.hp.eta * g;
    e.run_round();
    EXPECT_NEAR(e.nodes()[0].x[0], w, 1e-14) << t;
    EXPECT_NEAR(e.nodes()[1].x[0], w, 1e-14) << t;
  }
}

TEST(Engine, FineQuantizationApproachesUncompressed) {
  const Fixture f;
  HyperParams hp;
  hp.mu = 0.0;
  hp.levels = 65535;
  Engine q = f.engine(CodecKind::kMalcom, 1, hp);
  Engine exact = f.engine(CodecKind::kNone, 1, hp);
  for (int t = 0; t < 30; ++t) {
    q.run_round();
    exact.run_round();
  }
  double worst = 0.0;
  for (std::size_t i = 0; i < 10; ++i)
    for (std::size_t k = 0; k < 20; ++k)
      worst = std::max(worst, std::abs(q.nodes()[i].x[k] - exact.nodes()[i].x[k]));
  EXPECT_LT(worst, 1e-3);
}

TEST(Engine, DeterministicReplay) {
  const Fixture f;
  Engine a = f.engine(CodecKind::kMalcom);
  Engine b = f.engine(CodecKind::kMalcom);
  for (int t = 0; t < 10; ++t) {
    a.run_round();
    b.run_round();
    for (std::size_t i = 0; i < 10; ++i)
      ASSERT_EQ(a.last_outgoing()[i].packet.message, b.last_outgoing()[i].packet.message);
  }
}

TEST(Engine, ConsensusShrinksOverTime) {
  const Fixture f;
  Engine e = f.engine(CodecKind::kMalcom);
  double at_20 = 0.0, last = 0.0;
  for (int t = 0; t < 400; ++t) {
    const auto m = e.run_round();
    if (t == 20) at_20 = m.consensus_sq;
    last = m.consensus_sq;
  }
  EXPECT_LT(last, at_20);
}

TEST(Engine, RejectsMismatchedShards) {
  const Fixture f;
  std::vector<Dataset> shards(f.shards.begin(), f.shards.begin() + 9);
  EXPECT_THROW(Engine(f.task, f.topo, shards, EngineOptions{}), ConfigError);
}

TEST(MessageLog, RoundTrip) {
  const Fixture f;
  Engine e = f.engine(CodecKind::kMalcom);
  const auto path = std::filesystem::temp_directory_path() / "malcom_messages.bin";
  std::vector<std::pair<std::uint64_t, Packet>> sent;
  {
    MessageLogWriter w(path, CodecKind::kMalcom);
    e.set_message_sink([&](std::uint64_t r, const Packet& p) {
      w.write(r, p);
      sent.emplace_back(r, p);
    });
    for (int t = 0; t < 5; ++t) e.run_round();
  }
  MessageLogReader r(path);
  EXPECT_EQ(r.codec(), CodecKind::kMalcom);
  std::size_t k = 0;
  while (auto rec = r.next()) {
    ASSERT_LT(k, sent.size());
    EXPECT_EQ(rec->round, sent[k].first);
    EXPECT_EQ(rec->sender, sent[k].second.sender);
    EXPECT_EQ(decode(rec->message), decode(sent[k].second.message));
    EXPECT_EQ(rec->message.to_bytes(), sent[k].second.message.to_bytes());
    ++k;
  }
  EXPECT_EQ(k, 50u);
  std::filesystem::remove(path);
}

TEST(ParallelFor, PropagatesExceptions) {
  EXPECT_THROW(parallel_for(16, 4,
                            [](std::size_t i) {
                              if (i == 11) throw Error("boom");
                            }),
               Error);
  std::vector<int> hits(100, 0);
  parallel_for(100, 8, [&](std::size_t i) { hits[i]++; });
  for (int h : hits) EXPECT_EQ(h, 1);
}

}  // namespace
}  // namespace malcom
