// Copyright 2026 The fsqz Authors.
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

#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_bin_float.hpp>
#include <thread>

#include "fsqz/flsim.hpp"
#include "test_util.hpp"

namespace fsqz {
namespace {

ExperimentConfig small_config() {
  ExperimentConfig cfg;
  cfg.rounds = 3;
  cfg.data.train_per_class = 60;
  cfg.data.test_per_class = 20;
  cfg.data.dim = 8;
  cfg.hidden = {16};
  return cfg;
}

// ---------------------------------------------------------------------------
// sample_clients

std::vector<std::uint32_t> ids(std::uint32_t n) {
  std::vector<std::uint32_t> v(n);
  std::iota(v.begin(), v.end(), 0u);
  return v;
}

TEST(Sampling, FullParticipation) {
  Rng rng(1);
  EXPECT_EQ(sample_clients(rng, 10, 1.0, ids(10)), ids(10));
}

TEST(Sampling, FortyPercentOfTen) {
  Rng rng(2);
  for (int t = 0; t < 100; ++t) {
    const auto s = sample_clients(rng, 10, 0.4, ids(10));
    ASSERT_EQ(s.size(), 4u);
    EXPECT_TRUE(std::is_sorted(s.begin(), s.end()));
    EXPECT_EQ(std::set<std::uint32_t>(s.begin(), s.end()).size(), 4u);
    for (auto id : s) EXPECT_LT(id, 10u);
  }
}

TEST(Sampling, DeterministicSequence) {
  Rng a(3), b(3);
  for (int t = 0; t < 20; ++t) EXPECT_EQ(sample_clients(a, 10, 0.4, ids(10)), sample_clients(b, 10, 0.4, ids(10)));
}

TEST(Sampling, UniformInclusion) {
  Rng rng(4);
  std::vector<int> hits(10, 0);
  const int trials = 20000;
  for (int t = 0; t < trials; ++t)
    for (auto id : sample_clients(rng, 10, 0.4, ids(10))) ++hits[id];
  for (int h : hits) EXPECT_NEAR(static_cast<double>(h) / trials, 0.4, 0.02);
}

TEST(Sampling, CappedByEligibleAndEmptyThrows) {
  Rng rng(5);
  EXPECT_EQ(sample_clients(rng, 10, 0.4, {7, 2}), (std::vector<std::uint32_t>{2, 7}));
  EXPECT_THROW(sample_clients(rng, 10, 0.4, {}), ExperimentError);
}

// ---------------------------------------------------------------------------
// local_train

struct Shard {
  ModelSpec spec;
  Dataset data;
  ParamVector global;
};

Shard make_shard(std::uint64_t seed, std::size_t rows = 24) {
  Shard s;
  s.spec.layer_sizes = {5, 7, 3};
  s.spec.seed = seed;
  s.data.num_classes = 3;
  s.data.features = testing::random_batch(rows, 5, seed + 1);
  s.data.labels = testing::random_labels(rows, 3, seed + 2);
  s.global = flatten(testing::random_state(s.spec, seed + 3));
  return s;
}

TEST(LocalTrain, ZeroEpochsOrZeroRateIsIdentity) {
  const Shard s = make_shard(1);
  LocalTrainOptions opt;
  opt.epochs = 0;
  EXPECT_EQ(local_train(s.spec, s.global, s.data, opt).params, s.global);
  opt.epochs = 3;
  opt.lr = 0.0;
  const auto r = local_train(s.spec, s.global, s.data, opt);
  EXPECT_EQ(r.params, s.global);
  EXPECT_EQ(r.num_examples, 24u);
}

// Gradient of the mean loss for a one-hidden-layer ReLU net, written out
// directly from the chain rule over the flat (W1, b1, W2, b2) layout.
std::vector<double> straight_line_grad(const ModelSpec& spec, const std::vector<double>& p, const Dataset& d) {
  const std::size_t in = spec.layer_sizes[0], hid = spec.layer_sizes[1], out = spec.layer_sizes[2];
  const std::size_t W1 = 0, B1 = hid * in, W2 = B1 + hid, B2 = W2 + out * hid;
  std::vector<double> g(p.size(), 0.0);
  const double inv_n = 1.0 / static_cast<double>(d.size());
  for (std::size_t r = 0; r < d.size(); ++r) {
    std::vector<double> z1(hid), a1(hid), z2(out);
    for (std::size_t j = 0; j < hid; ++j) {
      z1[j] = p[B1 + j];
      for (std::size_t i = 0; i < in; ++i) z1[j] += p[W1 + j * in + i] * d.features(r, i);
      a1[j] = z1[j] > 0 ? z1[j] : 0;
    }
    for (std::size_t k = 0; k < out; ++k) {
      z2[k] = p[B2 + k];
      for (std::size_t j = 0; j < hid; ++j) z2[k] += p[W2 + k * hid + j] * a1[j];
    }
    const double mx = *std::max_element(z2.begin(), z2.end());
    double se = 0;
    for (double v : z2) se += std::exp(v - mx);
    for (std::size_t k = 0; k < out; ++k) {
      const double dk = (std::exp(z2[k] - mx) / se - (static_cast<int>(k) == d.labels[r] ? 1.0 : 0.0)) * inv_n;
      g[B2 + k] += dk;
      for (std::size_t j = 0; j < hid; ++j) g[W2 + k * hid + j] += dk * a1[j];
    }
    for (std::size_t j = 0; j < hid; ++j) {
      if (z1[j] <= 0) continue;
      double back = 0;
      for (std::size_t k = 0; k < out; ++k)
        back += p[W2 + k * hid + j] * ((std::exp(z2[k] - mx) / se - (static_cast<int>(k) == d.labels[r] ? 1.0 : 0.0)) * inv_n);
      g[B1 + j] += back;
      for (std::size_t i = 0; i < in; ++i) g[W1 + j * in + i] += back * d.features(r, i);
    }
  }
  return g;
}

TEST(LocalTrain, FullBatchMatchesStraightLineGd) {
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    const Shard s = make_shard(seed * 10);
    LocalTrainOptions opt;
    opt.epochs = 3;
    opt.batch_size = 1000;
    opt.lr = 0.1;
    opt.momentum = 0.9;
    opt.seed = seed;
    const auto got = local_train(s.spec, s.global, s.data, opt).params;
    // Oracle: heavy-ball GD from a zero velocity, parameters stored as float.
    std::vector<float> w = s.global;
    std::vector<double> v(w.size(), 0.0);
    for (std::size_t e = 0; e < opt.epochs; ++e) {
      const std::vector<double> p(w.begin(), w.end());
      const auto g = straight_line_grad(s.spec, p, s.data);
      for (std::size_t i = 0; i < w.size(); ++i) {
        v[i] = opt.momentum * v[i] + g[i];
        w[i] = static_cast<float>(static_cast<double>(w[i]) - opt.lr * v[i]);
      }
    }
    for (std::size_t i = 0; i < w.size(); ++i) EXPECT_NEAR(got[i], w[i], 1e-6 + 1e-6 * std::abs(w[i])) << i;
  }
}

TEST(LocalTrain, LossFallsOverEpochs) {
  const Shard s = make_shard(7, 64);
  LocalTrainOptions opt;
  opt.batch_size = 8;
  opt.epochs = 1;
  const double first = local_train(s.spec, s.global, s.data, opt).train_loss;
  opt.epochs = 20;
  EXPECT_LT(local_train(s.spec, s.global, s.data, opt).train_loss, first);
}

TEST(LocalTrain, OneBitQatKeepsLatentInRange) {
  const Shard s = make_shard(8);
  LocalTrainOptions opt;
  opt.qat_bits = 1;
  opt.epochs = 2;
  opt.batch_size = 4;
  for (float w : local_train(s.spec, s.global, s.data, opt).params) {
    EXPECT_GE(w, -1.0f);
    EXPECT_LE(w, 1.0f);
  }
}

TEST(LocalTrain, EmptyShardIsDataError) {
  Shard s = make_shard(9);
  s.data = s.data.subset(std::vector<std::size_t>{});
  EXPECT_THROW(local_train(s.spec, s.global, s.data, {}), DataError);
}

// ---------------------------------------------------------------------------
// fedavg_aggregate

TEST(FedAvg, Examples) {
  EXPECT_EQ(fedavg_aggregate({{0, 5, {1.25f, -3.0f}}}), (ParamVector{1.25f, -3.0f}));
  EXPECT_EQ(fedavg_aggregate({{0, 1, {0, 2}}, {1, 1, {2, 4}}}), (ParamVector{1, 3}));
  EXPECT_EQ(fedavg_aggregate({{0, 1, {0, 2}}, {1, 3, {2, 4}}}), (ParamVector{1.5f, 3.5f}));
  EXPECT_THROW(fedavg_aggregate({}), RoundError);
  EXPECT_THROW(fedavg_aggregate({{0, 1, {0, 2}}, {1, 1, {2}}}), ShapeError);
}

using HighPrecision = boost::multiprecision::cpp_bin_float_50;

std::vector<ClientUpdate> random_updates(Rng& rng, std::size_t count, std::size_t n) {
  std::vector<ClientUpdate> u;
  for (std::size_t k = 0; k < count; ++k)
    u.push_back({static_cast<std::uint32_t>(k * 3 + rng() % 3), 1 + rng() % 5000, testing::gaussian_vector(n, rng())});
  return u;
}

TEST(FedAvg, WithinOneUlpOfHighPrecisionOracle) {
  Rng rng(10);
  for (int t = 0; t < 200; ++t) {
    const auto updates = random_updates(rng, 1 + rng() % 8, 64);
    const ParamVector got = fedavg_aggregate(updates);
    HighPrecision total = 0;
    for (const auto& u : updates) total += u.num_examples;
    for (std::size_t i = 0; i < got.size(); ++i) {
      HighPrecision acc = 0;
      for (const auto& u : updates) acc += HighPrecision(u.num_examples) / total * HighPrecision(u.params[i]);
      const float want = static_cast<float>(acc);
      const float ulp = std::nextafter(std::abs(want), INFINITY) - std::abs(want);
      EXPECT_LE(std::abs(static_cast<double>(got[i]) - static_cast<double>(acc)), ulp) << t << " " << i;
    }
  }
}

TEST(FedAvg, IdenticalUpdatesAreConserved) {
  Rng rng(11);
  for (int t = 0; t < 200; ++t) {
    const auto w = testing::gaussian_vector(50, rng());
    std::vector<ClientUpdate> u;
    for (std::uint32_t k = 0; k < 1 + rng() % 8; ++k) u.push_back({k, 1 + rng() % 10000, w});
    EXPECT_EQ(fedavg_aggregate(u), w);
  }
}

TEST(FedAvg, WeightScalingAndOrderInvariance) {
  Rng rng(12);
  for (int t = 0; t < 100; ++t) {
    auto updates = random_updates(rng, 2 + rng() % 6, 40);
    const ParamVector base = fedavg_aggregate(updates);
    for (std::uint64_t c : {2u, 3u, 1000u}) {
      auto scaled = updates;
      for (auto& u : scaled) u.num_examples *= c;
      EXPECT_EQ(fedavg_aggregate(scaled), base);
    }
    std::shuffle(updates.begin(), updates.end(), rng);
    EXPECT_EQ(fedavg_aggregate(updates), base);
  }
}

// ---------------------------------------------------------------------------
// evaluate

TEST(Evaluate, ConstantLogitsOnBalancedSet) {
  const Dataset test = gen_blobs(10, 4, 30, 1.0, 1);
  ModelSpec spec;
  spec.layer_sizes = {4, 10};
  EXPECT_DOUBLE_EQ(evaluate(zeros_like_spec<float>(spec), test), 0.1);
}

TEST(Evaluate, OracleWeightsOnSeparableSet) {
  Dataset d;
  d.num_classes = 2;
  d.features = Matrix<float>(6, 2);
  const float xs[] = {-3, -1, -0.5f, 0.5f, 2, 4};
  for (std::size_t r = 0; r < 6; ++r) {
    d.features(r, 0) = xs[r];
    d.features(r, 1) = static_cast<float>(r);
    d.labels.push_back(xs[r] > 0);
  }
  ModelSpec spec;
  spec.layer_sizes = {2, 2};
  ModelState m = zeros_like_spec<float>(spec);
  m.layers[0].weight(0, 0) = -1;
  m.layers[0].weight(1, 0) = 1;
  EXPECT_DOUBLE_EQ(evaluate(m, d), 1.0);
}

TEST(Evaluate, MatchesPerExampleLoop) {
  const Dataset test = gen_blobs(5, 6, 40, 1.5, 2);
  ModelSpec spec;
  spec.layer_sizes = {6, 9, 5};
  for (std::uint64_t seed = 0; seed < 10; ++seed) {
    const ModelState m = testing::random_state(spec, seed);
    const auto flat = flatten(m);
    const std::vector<double> p(flat.begin(), flat.end());
    const testing::ShadowNet net{spec.layer_sizes};
    std::size_t correct = 0;
    for (std::size_t r = 0; r < test.size(); ++r) {
      const auto z = net.logits(p, test.features.row(r));
      std::size_t best = 0;
      for (std::size_t c = 1; c < z.size(); ++c)
        if (static_cast<float>(z[c]) > static_cast<float>(z[best])) best = c;
      correct += static_cast<int>(best) == test.labels[r];
    }
    EXPECT_DOUBLE_EQ(evaluate(m, test), static_cast<double>(correct) / static_cast<double>(test.size()));
  }
  EXPECT_THROW(evaluate(testing::random_state(spec, 1), test.subset(std::vector<std::size_t>{})), DataError);
}

// ---------------------------------------------------------------------------
// Hooks and rounds

TEST(Hook, ZeroRateIsIdentity) {
  const auto cfg = small_config();
  const World w = build_world(cfg);
  const auto v = flatten(init_model(w.spec));
  EXPECT_EQ(apply_hook(v, 0.0, cfg, w.spec), v);
  const auto t = transmit(v, 0.0, cfg, w.spec, Direction::server_to_client, 1, 0);
  EXPECT_EQ(receive_model(t.wire).second, v);
  EXPECT_EQ(t.sparsity, static_cast<double>(std::count(v.begin(), v.end(), 0.0f)) / static_cast<double>(v.size()));
}

TEST(Hook, BiasesSurviveWhenExcluded) {
  auto cfg = small_config();
  cfg.prune_biases = false;
  const World w = build_world(cfg);
  const auto v = testing::gaussian_vector(w.spec.param_count(), 3);
  const auto out = apply_hook(v, 0.9, cfg, w.spec);
  const auto mask = bias_mask(w.spec);
  for (std::size_t i = 0; i < v.size(); ++i)
    if (mask[i]) EXPECT_EQ(out[i], v[i]);
}

TEST(Round, ZeroRateEqualsHookFreePipeline) {
  const auto cfg = small_config();
  const auto result = run_experiment(cfg);
  // Same schedule with plain local training and aggregation, no codec at all.
  const World w = build_world(cfg);
  ServerState server = make_server(cfg, w.spec);
  std::vector<std::uint32_t> eligible;
  for (std::uint32_t k = 0; k < cfg.num_clients; ++k)
    if (!w.partition.assignment[k].empty()) eligible.push_back(k);
  for (std::uint32_t round = 1; round <= cfg.rounds; ++round) {
    std::vector<ClientUpdate> updates;
    for (auto id : sample_clients(server.rng, cfg.num_clients, cfg.participation, eligible)) {
      const Dataset shard = w.train.subset(w.partition.assignment[id]);
      LocalTrainOptions opt{cfg.local_epochs, cfg.batch_size, cfg.lr, cfg.momentum, 0, derive_seed(cfg.seed, id, round)};
      updates.push_back({id, shard.size(), local_train(w.spec, server.global, shard, opt).params});
    }
    server.global = fedavg_aggregate(updates);
  }
  EXPECT_EQ(result.final_params, server.global);
}

/// In-process endpoint that keeps a copy of every frame it sends.
class RecordingEndpoint final : public Endpoint {
 public:
  RecordingEndpoint(std::shared_ptr<detail::BytePipe> out, std::shared_ptr<detail::BytePipe> in)
      : Endpoint(kDefaultMaxFrame), out_(std::move(out)), in_(std::move(in)) {}
  ~RecordingEndpoint() override { close(); }
  void close() override {
    out_->close();
    in_->close();
  }
  std::vector<Bytes> frames;

 protected:
  void write_all(std::span<const std::uint8_t> bytes) override {
    frames.emplace_back(bytes.begin() + kFramePrefixBytes, bytes.end());
    out_->write(bytes);
  }
  std::size_t read_exact(std::span<std::uint8_t> out) override { return in_->read(out); }

 private:
  std::shared_ptr<detail::BytePipe> out_;
  std::shared_ptr<detail::BytePipe> in_;
};

struct Harness {
  ExperimentConfig cfg;
  World world;
  std::vector<std::unique_ptr<RecordingEndpoint>> server_eps;
  std::vector<std::unique_ptr<RecordingEndpoint>> client_eps;
  ExperimentResult result;

  // `dead` clients say hello and then hang up.
  Harness(ExperimentConfig c, std::set<std::uint32_t> dead = {}) : cfg(std::move(c)), world(build_world(cfg)) {
    auto nodes = make_clients(cfg, world, all_client_ids(cfg));
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto a = std::make_shared<detail::BytePipe>();
      auto b = std::make_shared<detail::BytePipe>();
      server_eps.push_back(std::make_unique<RecordingEndpoint>(a, b));
      client_eps.push_back(std::make_unique<RecordingEndpoint>(b, a));
    }
    {
      std::vector<std::jthread> threads;
      for (std::size_t i = 0; i < nodes.size(); ++i)
        threads.emplace_back([&, i] {
          if (dead.count(static_cast<std::uint32_t>(i))) {
            client_eps[i]->send_message(control_message(Direction::client_to_server, 0, static_cast<std::uint32_t>(i)));
            client_eps[i]->close();
            return;
          }
          try {
            nodes[i]->serve(*client_eps[i]);
          } catch (const Error&) {
          }
        });
      std::vector<Endpoint*> raw;
      for (auto& e : server_eps) raw.push_back(e.get());
      result = drive_server(cfg, world, raw);
    }
  }
};

std::size_t zeros_in(const Bytes& frame) {
  const auto v = receive_model(frame).second;
  return static_cast<std::size_t>(std::count(v.begin(), v.end(), 0.0f));
}

TEST(Round, WireSparsityAtHalfRate) {
  auto cfg = small_config();
  cfg.prune_rate = 0.5;
  for (PayloadKind kind : {PayloadKind::dense_f32, PayloadKind::sparse_f32}) {
    cfg.payload = kind;
    Harness h(cfg);
    const std::size_t n = h.world.spec.param_count();
    std::size_t checked = 0;
    for (const auto* side : {&h.server_eps, &h.client_eps})
      for (const auto& ep : *side)
        for (const Bytes& f : ep->frames) {
          if (decode_header(f).param_count == 0) continue;
          EXPECT_GE(zeros_in(f), n / 2);
          ++checked;
        }
    // R rounds of 4 downlinks and 4 uplinks.
    EXPECT_EQ(checked, cfg.rounds * 8);
  }
}

TEST(Round, DownlinkBytesFallWithRate) {
  auto cfg = small_config();
  std::map<double, std::vector<RoundMetrics>> traces;
  for (double rate : {0.0, 0.5, 0.9}) {
    cfg.prune_rate = rate;
    traces[rate] = run_experiment(cfg).trace;
  }
  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    EXPECT_LT(traces[0.9][r].downlink_deflated, traces[0.5][r].downlink_deflated);
    EXPECT_LT(traces[0.5][r].downlink_deflated, traces[0.0][r].downlink_deflated);
  }
}

TEST(Round, TotalBandwidthMonotoneInRate) {
  auto cfg = small_config();
  cfg.rounds = 5;
  std::vector<std::vector<RoundMetrics>> traces;
  for (double rate : {0.0, 0.3, 0.6, 0.9}) {
    cfg.prune_rate = rate;
    traces.push_back(run_experiment(cfg).trace);
  }
  for (std::size_t k = 1; k < traces.size(); ++k)
    for (std::size_t r = 0; r < cfg.rounds; ++r)
      EXPECT_LE(traces[k][r].uplink_deflated + traces[k][r].downlink_deflated,
                traces[k - 1][r].uplink_deflated + traces[k - 1][r].downlink_deflated);
}

TEST(Round, MetricsMatchCodecSizes) {
  auto cfg = small_config();
  cfg.prune_rate = 0.5;
  Harness h(cfg);
  const std::size_t n = h.world.spec.param_count();
  for (const auto& m : h.result.trace) {
    EXPECT_EQ(m.clients, 4u);
    EXPECT_EQ(m.downlink_raw, 4 * (kHeaderBytes + 4 * n));
    EXPECT_EQ(m.uplink_raw, 4 * (kHeaderBytes + 4 * n));
    EXPECT_GT(m.sparsity, 0.49);
  }
  // Every frame the server sent is accounted for (hello replies excluded).
  std::uint64_t sent = 0;
  for (const auto& ep : h.server_eps)
    for (const Bytes& f : ep->frames) sent += f.size();
  std::uint64_t logged = 0;
  for (const auto& m : h.result.trace) logged += m.downlink_deflated;
  EXPECT_EQ(sent, logged);
}

TEST(Round, DeadClientIsReplaced) {
  auto cfg = small_config();
  cfg.rounds = 10;
  Harness h(cfg, {0});
  std::size_t dropped = 0;
  for (const auto& m : h.result.trace) {
    EXPECT_EQ(m.clients, 4u);
    dropped += m.dropped;
  }
  EXPECT_GE(dropped, 1u);
}

TEST(Round, AllClientsLostLeavesModelUnchanged) {
  auto cfg = small_config();
  cfg.num_clients = 2;
  cfg.participation = 1.0;
  Harness h(cfg, {0, 1});
  ASSERT_EQ(h.result.trace.size(), cfg.rounds);
  for (const auto& m : h.result.trace) EXPECT_EQ(m.clients, 0u);
  EXPECT_EQ(h.result.final_params, flatten(init_model(h.world.spec)));
}

TEST(Client, NonFiniteModelIsDeclined) {
  const auto cfg = small_config();
  const World w = build_world(cfg);
  ClientNode node(0, w.train.subset(w.partition.assignment[0]), w.spec, cfg);
  // First entry sits behind a ReLU, last entry is an output bias.
  for (std::size_t pos : {std::size_t{0}, w.spec.param_count() - 1}) {
    ParamVector bad = flatten(init_model(w.spec));
    bad[pos] = NAN;
    MessageHeader hd;
    hd.param_count = bad.size();
    const Message reply = decode(node.handle(encode(hd, bad)));
    EXPECT_EQ(reply.header.param_count, 0u) << pos;
    EXPECT_EQ(reply.header.direction, Direction::client_to_server);
  }
}

// ---------------------------------------------------------------------------
// Experiments

TEST(Experiment, ZeroRoundsKeepsInitialModel) {
  auto cfg = small_config();
  cfg.rounds = 0;
  const auto r = run_experiment(cfg);
  EXPECT_TRUE(r.trace.empty());
  EXPECT_EQ(r.final_params, flatten(init_model(build_world(cfg).spec)));
}

TEST(Experiment, Deterministic) {
  auto cfg = small_config();
  cfg.prune_rate = 0.3;
  const auto a = run_experiment(cfg);
  const auto b = run_experiment(cfg);
  EXPECT_EQ(a.trace, b.trace);
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_EQ(a.server_counters, b.server_counters);
}

TEST(Experiment, QuantizedRunSendsQuantizedPayloads) {
  auto cfg = small_config();
  cfg.quant_bits = 4;
  const auto r = run_experiment(cfg);
  const std::size_t n = build_world(cfg).spec.param_count();
  for (const auto& m : r.trace) EXPECT_EQ(m.downlink_raw, 4 * (kHeaderBytes + estimate_size(n, PayloadKind::quant_int, 4, 0.0, 2)));
}

TEST(Experiment, TcpMatchesInProc) {
  auto cfg = small_config();
  cfg.prune_rate = 0.5;
  const auto a = run_experiment(cfg);
  cfg.transport = TransportKind::tcp;
  const auto b = run_experiment(cfg);
  EXPECT_EQ(a.final_params, b.final_params);
  EXPECT_EQ(a.server_counters, b.server_counters);
  EXPECT_EQ(a.trace, b.trace);
}

TEST(Experiment, DeskDefaultReachesGolden) {
  const auto r = run_experiment(ExperimentConfig{});
  ASSERT_EQ(r.trace.size(), 30u);
  EXPECT_GE(r.final_accuracy, 0.90);
  // Frozen from the first verified run of the default configuration.
  EXPECT_DOUBLE_EQ(r.final_accuracy, 0.998);
}

}  // namespace
}  // namespace fsqz
