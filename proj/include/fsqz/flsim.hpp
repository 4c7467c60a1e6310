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

#pragma once

// Federated averaging with compression hooks on every transmitted message.
// The server and each client talk only through Endpoints carrying codec
// bytes; the same round protocol runs over in-process pipes or TCP.
//
// Protocol per connection:
//   client -> server  hello   (client_to_server, round 0, dense, 0 params, sender = client id)
//   server -> client  model   (server_to_client, round r, compressed global)
//   client -> server  update  (client_to_server, round r, compressed local result)
//                     or a 0-param dense decline when local training failed
//   server closes the connection when the experiment ends.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "fsqz/codec.hpp"
#include "fsqz/compress.hpp"
#include "fsqz/data.hpp"
#include "fsqz/error.hpp"
#include "fsqz/log.hpp"
#include "fsqz/nn.hpp"
#include "fsqz/random.hpp"
#include "fsqz/transport.hpp"

namespace fsqz {

enum class DatasetKind { blobs, idx };
enum class TransportKind { inproc, tcp };

struct DatasetConfig {
  DatasetKind kind = DatasetKind::blobs;
  int classes = 10;
  std::size_t dim = 32;
  std::size_t train_per_class = 500;
  std::size_t test_per_class = 100;
  double spread = 0.8;
  std::uint64_t seed = 3;
  std::string train_images;
  std::string train_labels;
  std::string test_images;
  std::string test_labels;

  bool operator==(const DatasetConfig&) const = default;
};

struct ExperimentConfig {
  std::size_t num_clients = 10;       // K
  double participation = 0.4;         // C
  std::size_t rounds = 30;            // R
  std::size_t local_epochs = 1;       // E
  std::size_t batch_size = 32;
  double prune_rate = 0.0;            // theta, both directions
  double downlink_prune_rate = -1.0;  // < 0: same as prune_rate
  int quant_bits = 0;                 // 0 = off, else 1, 4 or 8
  bool combined = false;              // allow pruning and quantization together
  bool prune_biases = true;
  double alpha = 100.0;
  double lr = 0.05;
  double momentum = 0.9;
  std::uint64_t seed = 1;
  std::vector<std::size_t> hidden{64};
  DatasetConfig data;
  PayloadKind payload = PayloadKind::dense_f32;  // wire kind when not quantizing
  bool deflate = true;
  TransportKind transport = TransportKind::inproc;
  std::size_t max_frame = kDefaultMaxFrame;

  double uplink_rate() const { return prune_rate; }
  double downlink_rate() const { return downlink_prune_rate < 0.0 ? prune_rate : downlink_prune_rate; }
  bool quantized() const { return quant_bits != 0; }

  std::size_t clients_per_round() const {
    return static_cast<std::size_t>(std::ceil(participation * static_cast<double>(num_clients) - 1e-9));
  }

  void validate() const {
    auto rate_ok = [](double r) { return r >= 0.0 && r <= 1.0; };
    if (num_clients < 1) throw ConfigError("num_clients must be >= 1");
    if (!(participation > 0.0 && participation <= 1.0)) throw ConfigError("participation must lie in (0, 1]");
    if (clients_per_round() < 1) throw ConfigError("participation * num_clients must round up to at least 1");
    if (batch_size < 1) throw ConfigError("batch_size must be >= 1");
    if (!rate_ok(prune_rate)) throw ConfigError("prune_rate must lie in [0, 1]");
    if (downlink_prune_rate >= 0.0 && !rate_ok(downlink_prune_rate)) throw ConfigError("downlink_prune_rate must lie in [0, 1]");
    if (quant_bits != 0 && !valid_bits(quant_bits)) throw ConfigError("quant_bits must be 0, 1, 4 or 8");
    if (quant_bits != 0 && (prune_rate > 0.0 || downlink_rate() > 0.0) && !combined)
      throw ConfigError("pruning and quantization together require combined = true");
    if (!(alpha > 0.0) || !std::isfinite(alpha)) throw ConfigError("alpha must be positive");
    if (!(lr >= 0.0)) throw ConfigError("lr must be >= 0");
    if (!(momentum >= 0.0 && momentum < 1.0)) throw ConfigError("momentum must lie in [0, 1)");
    for (std::size_t h : hidden)
      if (h == 0) throw ConfigError("hidden layer sizes must be >= 1");
    if (payload != PayloadKind::dense_f32 && payload != PayloadKind::sparse_f32)
      throw ConfigError("payload must be dense or sparse");
    if (data.kind == DatasetKind::blobs) {
      if (data.classes < 1 || data.dim < 1 || data.train_per_class < 1 || data.test_per_class < 1)
        throw ConfigError("blob dataset sizes must be >= 1");
      if (!(data.spread >= 0.0)) throw ConfigError("blob spread must be >= 0");
    } else if (data.train_images.empty() || data.train_labels.empty() || data.test_images.empty() ||
               data.test_labels.empty()) {
      throw ConfigError("idx dataset needs train_images, train_labels, test_images and test_labels");
    }
    if (max_frame < kHeaderBytes) throw ConfigError("max_frame too small");
  }

  bool operator==(const ExperimentConfig&) const = default;
};

struct RoundMetrics {
  std::uint32_t round = 0;
  double accuracy = 0.0;
  double train_loss = 0.0;  // deployed model's mean loss over the aggregated clients' shards
  std::uint64_t uplink_raw = 0;
  std::uint64_t uplink_deflated = 0;
  std::uint64_t downlink_raw = 0;
  std::uint64_t downlink_deflated = 0;
  double sparsity = 0.0;  // mean zero fraction over every model message of the round
  std::size_t clients = 0;  // updates aggregated
  std::size_t dropped = 0;

  bool operator==(const RoundMetrics&) const = default;
};

struct ClientUpdate {
  std::uint32_t client_id = 0;
  std::uint64_t num_examples = 0;
  ParamVector params;
};

/// Everything both ends derive from a config: data, partition and model shape.
struct World {
  Dataset train;
  Dataset test;
  Partition partition;
  ModelSpec spec;
};

inline World build_world(const ExperimentConfig& cfg) {
  cfg.validate();
  World w;
  if (cfg.data.kind == DatasetKind::blobs) {
    const Dataset all = gen_blobs(cfg.data.classes, cfg.data.dim, cfg.data.train_per_class + cfg.data.test_per_class,
                                  cfg.data.spread, cfg.data.seed);
    std::tie(w.train, w.test) = split_per_class(all, cfg.data.train_per_class);
  } else {
    w.train = load_idx(cfg.data.train_images, cfg.data.train_labels);
    w.test = load_idx(cfg.data.test_images, cfg.data.test_labels);
    const int classes = std::max(w.train.num_classes, w.test.num_classes);
    w.train.num_classes = w.test.num_classes = classes;
    if (w.train.dim() != w.test.dim()) throw DataError("train and test feature dims differ");
  }
  w.train.validate();
  w.test.validate();
  w.partition = lda_partition(w.train, PartitionSpec{cfg.num_clients, cfg.alpha, cfg.seed});
  w.spec.layer_sizes.push_back(w.train.dim());
  w.spec.layer_sizes.insert(w.spec.layer_sizes.end(), cfg.hidden.begin(), cfg.hidden.end());
  w.spec.layer_sizes.push_back(static_cast<std::size_t>(w.train.num_classes));
  w.spec.seed = cfg.seed;
  w.spec.validate();
  return w;
}

// ---------------------------------------------------------------------------
// Compression hook: the only place messages are pruned or quantized.

struct Transmission {
  Bytes wire;                  // what goes on the wire
  std::uint64_t raw_bytes;     // header + uncompressed payload
  std::uint64_t deflated_bytes;  // header + deflated payload
  double sparsity;             // zero fraction of the transmitted vector
};

/// What the receiver reconstructs from a message under `cfg`.
inline ParamVector apply_hook(std::span<const float> params, double rate, const ExperimentConfig& cfg, const ModelSpec& spec) {
  ParamVector v(params.begin(), params.end());
  if (rate > 0.0) v = global_magnitude_prune(v, rate, cfg.prune_biases ? std::vector<bool>{} : bias_mask(spec)).first;
  if (cfg.quantized()) v = dequantize_flat(quantize(v, spec.layer_param_counts(), cfg.quant_bits));
  return v;
}

inline Transmission transmit(std::span<const float> params, double rate, const ExperimentConfig& cfg, const ModelSpec& spec,
                             Direction dir, std::uint32_t round, std::uint32_t sender) {
  ParamVector v(params.begin(), params.end());
  if (rate > 0.0) v = global_magnitude_prune(v, rate, cfg.prune_biases ? std::vector<bool>{} : bias_mask(spec)).first;

  MessageHeader h;
  h.direction = dir;
  h.round = round;
  h.sender_id = sender;
  h.param_count = v.size();
  Payload payload;
  if (cfg.quantized()) {
    h.payload_kind = cfg.quant_bits == 1 ? PayloadKind::binary : PayloadKind::quant_int;
    payload = quantize(v, spec.layer_param_counts(), cfg.quant_bits);
  } else {
    h.payload_kind = cfg.payload;
    payload = v;
  }
  Transmission t;
  t.sparsity = v.empty() ? 0.0 : static_cast<double>(std::count(v.begin(), v.end(), 0.0f)) / static_cast<double>(v.size());
  h.compressed = false;
  Bytes raw = encode(h, payload);
  t.raw_bytes = raw.size();
  const Bytes body_z = deflate_compress(std::span<const std::uint8_t>(raw).subspan(kHeaderBytes));
  t.deflated_bytes = kHeaderBytes + body_z.size();
  if (cfg.deflate) {
    h.compressed = true;
    t.wire = encode(h, payload);
  } else {
    t.wire = std::move(raw);
  }
  return t;
}

/// Received message back to a parameter vector; also returns raw/deflated sizes.
inline std::pair<Message, ParamVector> receive_model(std::span<const std::uint8_t> wire) {
  Message m = decode(wire);
  ParamVector v = std::holds_alternative<ParamVector>(m.payload) ? std::get<ParamVector>(m.payload)
                                                                 : dequantize_flat(std::get<QuantizedModel>(m.payload));
  return {std::move(m), std::move(v)};
}

inline Bytes control_message(Direction dir, std::uint32_t round, std::uint32_t sender) {
  MessageHeader h;
  h.direction = dir;
  h.round = round;
  h.sender_id = sender;
  return encode(h, ParamVector{});
}

// ---------------------------------------------------------------------------
// Training and evaluation

/// Fraction of argmax-correct predictions (ties to the lowest class).
inline double evaluate(const ModelState& model, const Dataset& test) {
  if (test.size() == 0) throw DataError("empty test set");
  const auto pred = predict(model, test.features);
  std::size_t correct = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) correct += pred[i] == test.labels[i];
  return static_cast<double>(correct) / static_cast<double>(test.size());
}

struct LocalResult {
  ParamVector params;
  double train_loss = 0.0;  // mean batch loss over the final epoch
  std::uint64_t num_examples = 0;
};

struct LocalTrainOptions {
  std::size_t epochs = 1;
  std::size_t batch_size = 32;
  double lr = 0.05;
  double momentum = 0.9;
  int qat_bits = 0;  // 0 = plain training
  std::uint64_t seed = 0;  // shuffling stream
};

/// E epochs of shuffled mini-batch SGD with momentum from the received
/// global parameters, with a fresh velocity buffer.
inline LocalResult local_train(const ModelSpec& spec, std::span<const float> global, const Dataset& shard,
                               const LocalTrainOptions& opt) {
  if (shard.size() == 0) throw DataError("client has no examples");
  if (opt.batch_size == 0) throw ConfigError("batch_size must be >= 1");
  ModelState state = unflatten(spec, global);
  LocalResult result;
  result.num_examples = shard.size();
  OptimizerState optimizer = OptimizerState::fresh(opt.lr, opt.momentum, state.param_count());
  Rng rng(opt.seed);
  std::vector<std::size_t> order(shard.size());
  std::iota(order.begin(), order.end(), 0);
  Matrix<float> batch;
  std::vector<int> labels;
  for (std::size_t epoch = 0; epoch < opt.epochs; ++epoch) {
    seeded_shuffle(order.begin(), order.end(), rng);
    double loss_sum = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size(); start += opt.batch_size) {
      const std::size_t rows = std::min(opt.batch_size, order.size() - start);
      batch = Matrix<float>(rows, shard.dim());
      labels.resize(rows);
      for (std::size_t r = 0; r < rows; ++r) {
        const std::size_t src = order[start + r];
        std::copy_n(shard.features.row(src).begin(), shard.dim(), batch.row(r).begin());
        labels[r] = shard.labels[src];
      }
      if (opt.qat_bits != 0) {
        const ModelState effective = qat_forward_hook(state, opt.qat_bits);
        LossAndGrad lg = loss_and_grad(effective, batch, labels);
        loss_sum += lg.loss;
        sgd_step(state, optimizer, qat_backward_rule(std::move(lg.grad), state, opt.qat_bits));
        if (opt.qat_bits == 1) clip_latent(state);
      } else {
        const LossAndGrad lg = loss_and_grad(state, batch, labels);
        loss_sum += lg.loss;
        sgd_step(state, optimizer, lg.grad);
      }
      ++batches;
    }
    result.train_loss = loss_sum / static_cast<double>(batches);
  }
  result.params = flatten(state);
  for (float w : result.params)
    if (!std::isfinite(w)) throw NumericError("local training produced a non-finite parameter");
  return result;
}

/// Example-count weighted mean, weights normalized first, summed in
/// ascending client id order in double, rounded once to float.
inline ParamVector fedavg_aggregate(std::vector<ClientUpdate> updates) {
  if (updates.empty()) throw RoundError("no client updates to aggregate");
  std::sort(updates.begin(), updates.end(), [](const auto& a, const auto& b) { return a.client_id < b.client_id; });
  const std::size_t n = updates.front().params.size();
  std::uint64_t total = 0;
  for (const auto& u : updates) {
    if (u.params.size() != n) throw ShapeError("client updates differ in length");
    if (u.num_examples == 0) throw DataError("client update with zero examples");
    total += u.num_examples;
  }
  std::vector<double> acc(n, 0.0);
  for (const auto& u : updates) {
    const double w = static_cast<double>(u.num_examples) / static_cast<double>(total);
    for (std::size_t i = 0; i < n; ++i) acc[i] += w * static_cast<double>(u.params[i]);
  }
  ParamVector out(n);
  for (std::size_t i = 0; i < n; ++i) out[i] = static_cast<float>(acc[i]);
  return out;
}

// ---------------------------------------------------------------------------
// Client

class ClientNode {
 public:
  ClientNode(std::uint32_t id, Dataset shard, ModelSpec spec, ExperimentConfig cfg)
      : id_(id), shard_(std::move(shard)), spec_(std::move(spec)), cfg_(std::move(cfg)) {}

  std::uint32_t id() const { return id_; }
  std::size_t num_examples() const { return shard_.size(); }

  /// One server request to one reply.
  Bytes handle(std::span<const std::uint8_t> request) {
    auto [msg, global] = receive_model(request);
    if (msg.header.direction != Direction::server_to_client) throw FormatError("client received a client message");
    const std::uint32_t round = msg.header.round;
    try {
      LocalTrainOptions opt;
      opt.epochs = cfg_.local_epochs;
      opt.batch_size = cfg_.batch_size;
      opt.lr = cfg_.lr;
      opt.momentum = cfg_.momentum;
      opt.qat_bits = cfg_.quant_bits;
      opt.seed = derive_seed(cfg_.seed, id_, round);
      const LocalResult local = local_train(spec_, global, shard_, opt);
      last_loss_ = local.train_loss;
      return transmit(local.params, cfg_.uplink_rate(), cfg_, spec_, Direction::client_to_server, round, id_).wire;
    } catch (const Error& e) {
      log::warn("client " + std::to_string(id_) + " round " + std::to_string(round) + ": " + e.what());
      return control_message(Direction::client_to_server, round, id_);
    }
  }

  /// Hello, then answer requests until the server closes the connection.
  void serve(Endpoint& ep) {
    ep.send_message(control_message(Direction::client_to_server, 0, id_));
    for (;;) {
      Bytes request;
      try {
        request = ep.recv_message();
      } catch (const ConnectionClosed&) {
        return;
      }
      ep.send_message(handle(request));
    }
  }

  double last_loss() const { return last_loss_; }

 private:
  std::uint32_t id_;
  Dataset shard_;
  ModelSpec spec_;
  ExperimentConfig cfg_;
  double last_loss_ = 0.0;
};

// ---------------------------------------------------------------------------
// Server

struct ServerState {
  ParamVector global;
  std::uint32_t round = 0;
  Rng rng;
  std::vector<RoundMetrics> log;
};

inline ServerState make_server(const ExperimentConfig& cfg, const ModelSpec& spec) {
  return ServerState{flatten(init_model(spec)), 0, Rng(splitmix64(cfg.seed ^ 0x5345525645525247ULL)), {}};
}

/// ceil(C * K) distinct ids (capped at the eligible count), uniformly without
/// replacement, returned in ascending order.
inline std::vector<std::uint32_t> sample_clients(Rng& rng, std::size_t num_clients, double participation,
                                                 std::vector<std::uint32_t> eligible) {
  if (eligible.empty()) throw ExperimentError("no eligible clients to sample");
  std::sort(eligible.begin(), eligible.end());
  const auto want = static_cast<std::size_t>(std::ceil(participation * static_cast<double>(num_clients) - 1e-9));
  const std::size_t m = std::min(std::max<std::size_t>(want, 1), eligible.size());
  for (std::size_t i = 0; i < m; ++i) {
    const std::size_t j = i + static_cast<std::size_t>(rng() % (eligible.size() - i));
    std::swap(eligible[i], eligible[j]);
  }
  eligible.resize(m);
  std::sort(eligible.begin(), eligible.end());
  return eligible;
}

/// Server view of a connected client.
struct ClientLink {
  Endpoint* endpoint = nullptr;
  std::uint64_t num_examples = 0;
};

struct RoundContext {
  const ExperimentConfig& cfg;
  const World& world;
  std::map<std::uint32_t, ClientLink>& links;
};

/// Model the server evaluates and deploys: the global model as broadcast.
inline ModelState deployed_model(const ServerState& server, const RoundContext& ctx) {
  return unflatten(ctx.world.spec, apply_hook(server.global, ctx.cfg.downlink_rate(), ctx.cfg, ctx.world.spec));
}

/// Broadcast, local training, upload, aggregation, evaluation. Clients that
/// fail are dropped and replaced from the unused eligible pool when possible.
inline RoundMetrics run_round(ServerState& server, RoundContext ctx) {
  const std::uint32_t round = server.round + 1;
  RoundMetrics m;
  m.round = round;

  std::vector<std::uint32_t> eligible;
  for (const auto& [id, link] : ctx.links)
    if (link.num_examples > 0) eligible.push_back(id);
  std::vector<std::uint32_t> pending = sample_clients(server.rng, ctx.cfg.num_clients, ctx.cfg.participation, eligible);
  std::set<std::uint32_t> tried(pending.begin(), pending.end());

  const Transmission down =
      transmit(server.global, ctx.cfg.downlink_rate(), ctx.cfg, ctx.world.spec, Direction::server_to_client, round, UINT32_MAX);
  std::vector<ClientUpdate> updates;
  double sparsity_sum = 0.0;
  std::size_t messages = 0;

  while (!pending.empty()) {
    std::vector<std::uint32_t> failed;
    std::vector<std::uint32_t> sent;
    for (std::uint32_t id : pending) {
      try {
        ctx.links.at(id).endpoint->send_message(down.wire);
        m.downlink_raw += down.raw_bytes;
        m.downlink_deflated += down.deflated_bytes;
        sparsity_sum += down.sparsity;
        ++messages;
        sent.push_back(id);
      } catch (const TransportError& e) {
        log::warn("round " + std::to_string(round) + ": send to client " + std::to_string(id) + " failed: " + e.what());
        failed.push_back(id);
      }
    }
    for (std::uint32_t id : sent) {
      try {
        const Bytes reply = ctx.links.at(id).endpoint->recv_message();
        auto [msg, params] = receive_model(reply);
        if (msg.header.direction != Direction::client_to_server || msg.header.round != round || msg.header.sender_id != id)
          throw FormatError("unexpected reply header");
        if (params.size() != ctx.world.spec.param_count()) throw DataError("client declined or sent a wrong-sized model");
        // Sizes of the uplink message in both forms, independent of which one was sent.
        MessageHeader h = msg.header;
        h.compressed = false;
        const Bytes raw = encode(h, msg.payload);
        m.uplink_raw += raw.size();
        m.uplink_deflated +=
            msg.header.compressed ? reply.size()
                                  : kHeaderBytes + deflate_compress(std::span<const std::uint8_t>(raw).subspan(kHeaderBytes)).size();
        sparsity_sum += static_cast<double>(std::count(params.begin(), params.end(), 0.0f)) / static_cast<double>(params.size());
        ++messages;
        updates.push_back(ClientUpdate{id, ctx.links.at(id).num_examples, std::move(params)});
      } catch (const Error& e) {
        log::warn("round " + std::to_string(round) + ": dropping client " + std::to_string(id) + ": " + e.what());
        failed.push_back(id);
      }
    }
    m.dropped += failed.size();
    std::vector<std::uint32_t> pool;
    for (std::uint32_t id : eligible)
      if (!tried.count(id)) pool.push_back(id);
    pending.clear();
    for (std::size_t k = 0; k < failed.size() && !pool.empty(); ++k) {
      const std::size_t j = static_cast<std::size_t>(server.rng() % pool.size());
      pending.push_back(pool[j]);
      tried.insert(pool[j]);
      pool.erase(pool.begin() + static_cast<std::ptrdiff_t>(j));
    }
    std::sort(pending.begin(), pending.end());
  }

  m.clients = updates.size();
  if (updates.empty()) {
    server.round = round;
    m.accuracy = evaluate(deployed_model(server, ctx), ctx.world.test);
    m.sparsity = messages ? sparsity_sum / static_cast<double>(messages) : 0.0;
    server.log.push_back(m);
    throw RoundError("round " + std::to_string(round) + ": every sampled client was lost; model unchanged");
  }
  std::vector<std::size_t> seen_examples;
  for (const auto& u : updates) {
    const auto& shard = ctx.world.partition.assignment.at(u.client_id);
    seen_examples.insert(seen_examples.end(), shard.begin(), shard.end());
  }
  server.global = fedavg_aggregate(std::move(updates));
  server.round = round;
  const ModelState deployed = deployed_model(server, ctx);
  m.accuracy = evaluate(deployed, ctx.world.test);
  const Dataset seen = ctx.world.train.subset(seen_examples);
  m.train_loss = mean_loss(deployed, seen.features, seen.labels);
  m.sparsity = sparsity_sum / static_cast<double>(messages);
  server.log.push_back(m);
  return m;
}

// ---------------------------------------------------------------------------
// Experiment driver

struct ExperimentResult {
  std::vector<RoundMetrics> trace;
  ParamVector final_params;
  double final_accuracy = 0.0;
  EndpointCounters server_counters;
};

/// Reads the hello frame from each endpoint and keys it by client id.
inline std::map<std::uint32_t, Endpoint*> handshake(std::span<Endpoint* const> endpoints, std::size_t num_clients) {
  std::map<std::uint32_t, Endpoint*> by_id;
  for (Endpoint* ep : endpoints) {
    const Message hello = decode(ep->recv_message());
    const std::uint32_t id = hello.header.sender_id;
    if (hello.header.direction != Direction::client_to_server || hello.header.param_count != 0 || id >= num_clients)
      throw ExperimentError("malformed hello from client");
    if (!by_id.emplace(id, ep).second) throw ExperimentError("duplicate client id " + std::to_string(id));
  }
  return by_id;
}

/// Runs every round over already-connected endpoints (hello not yet read).
inline ExperimentResult drive_server(const ExperimentConfig& cfg, const World& world, std::span<Endpoint* const> endpoints) {
  ExperimentResult result;
  ServerState server = make_server(cfg, world.spec);
  auto by_id = handshake(endpoints, cfg.num_clients);
  std::map<std::uint32_t, ClientLink> links;
  for (const auto& [id, ep] : by_id) links[id] = ClientLink{ep, world.partition.assignment[id].size()};
  RoundContext ctx{cfg, world, links};

  for (std::size_t r = 0; r < cfg.rounds; ++r) {
    try {
      run_round(server, ctx);
    } catch (const RoundError& e) {
      log::error(e.what());
    }
    const auto& m = server.log.back();
    log::info("round " + std::to_string(m.round) + " acc " + std::to_string(m.accuracy) + " clients " + std::to_string(m.clients));
  }
  result.trace = server.log;
  result.final_params = server.global;
  result.final_accuracy = result.trace.empty() ? evaluate(deployed_model(server, ctx), world.test) : result.trace.back().accuracy;
  for (Endpoint* ep : endpoints) {
    ep->close();
    result.server_counters += ep->counters();
  }
  return result;
}

inline std::vector<std::unique_ptr<ClientNode>> make_clients(const ExperimentConfig& cfg, const World& world,
                                                             std::span<const std::uint32_t> ids) {
  std::vector<std::unique_ptr<ClientNode>> nodes;
  for (std::uint32_t id : ids) {
    if (id >= cfg.num_clients) throw ConfigError("client id " + std::to_string(id) + " >= num_clients");
    nodes.push_back(std::make_unique<ClientNode>(id, world.train.subset(world.partition.assignment[id]), world.spec, cfg));
  }
  return nodes;
}

inline std::vector<std::uint32_t> all_client_ids(const ExperimentConfig& cfg) {
  std::vector<std::uint32_t> ids(cfg.num_clients);
  std::iota(ids.begin(), ids.end(), 0u);
  return ids;
}

/// Client side of distributed mode: hosts `ids` in this process, each on its
/// own connection to `server`, until the server hangs up.
inline void run_clients(const ExperimentConfig& cfg, const SocketAddress& server, std::span<const std::uint32_t> ids,
                        int connect_attempts = 3) {
  const World world = build_world(cfg);
  auto nodes = make_clients(cfg, world, ids);
  std::vector<std::string> errors(nodes.size());
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      threads.emplace_back([&, i] {
        try {
          auto ep = connect(server, connect_attempts, std::chrono::milliseconds(50), cfg.max_frame);
          nodes[i]->serve(*ep);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
      });
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) throw TransportError("client " + std::to_string(nodes[i]->id()) + ": " + errors[i]);
}

/// Server side of distributed mode: waits for all K clients on `listener`.
inline ExperimentResult run_server(const ExperimentConfig& cfg, TcpListener& listener) {
  const World world = build_world(cfg);
  std::vector<std::unique_ptr<TcpEndpoint>> eps;
  for (std::size_t i = 0; i < cfg.num_clients; ++i) eps.push_back(listener.accept());
  std::vector<Endpoint*> raw;
  for (auto& e : eps) raw.push_back(e.get());
  return drive_server(cfg, world, raw);
}

/// Full experiment in one process over the configured transport.
inline ExperimentResult run_experiment(const ExperimentConfig& cfg) {
  const World world = build_world(cfg);
  bool any = false;
  for (const auto& a : world.partition.assignment) any = any || !a.empty();
  if (!any) throw ExperimentError("every client partition is empty");
  if (cfg.rounds == 0) {
    ExperimentResult r;
    r.final_params = flatten(init_model(world.spec));
    r.final_accuracy = evaluate(unflatten(world.spec, r.final_params), world.test);
    return r;
  }

  const auto ids = all_client_ids(cfg);
  auto nodes = make_clients(cfg, world, ids);
  std::vector<std::unique_ptr<Endpoint>> server_eps;
  std::vector<std::unique_ptr<Endpoint>> client_eps;
  std::optional<TcpListener> listener;

  if (cfg.transport == TransportKind::inproc) {
    for (std::size_t i = 0; i < nodes.size(); ++i) {
      auto [s, c] = make_inproc_pair(cfg.max_frame);
      server_eps.push_back(std::move(s));
      client_eps.push_back(std::move(c));
    }
  } else {
    listener.emplace(SocketAddress{"127.0.0.1", 0}, cfg.max_frame);
    client_eps.resize(nodes.size());
  }

  ExperimentResult result;
  std::vector<std::string> errors(nodes.size());
  {
    std::vector<std::jthread> threads;
    for (std::size_t i = 0; i < nodes.size(); ++i)
      threads.emplace_back([&, i] {
        try {
          if (!client_eps[i]) client_eps[i] = connect(listener->address(), 3, std::chrono::milliseconds(50), cfg.max_frame);
          nodes[i]->serve(*client_eps[i]);
        } catch (const std::exception& e) {
          errors[i] = e.what();
        }
        if (client_eps[i]) client_eps[i]->close();
      });
    try {
      if (listener)
        for (std::size_t i = 0; i < nodes.size(); ++i) server_eps.push_back(listener->accept());
      std::vector<Endpoint*> raw;
      for (auto& e : server_eps) raw.push_back(e.get());
      result = drive_server(cfg, world, raw);
    } catch (...) {
      for (auto& e : server_eps) e->close();
      if (listener) listener->close();
      throw;
    }
  }
  for (std::size_t i = 0; i < errors.size(); ++i)
    if (!errors[i].empty()) log::warn("client " + std::to_string(i) + " ended with: " + errors[i]);
  return result;
}

}  // namespace fsqz
