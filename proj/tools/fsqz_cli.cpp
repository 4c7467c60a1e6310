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

// fsqz: run federated compression experiments, sweeps and size tables.
//
//   fsqz run --config exp.toml [--seed 1,2,3] [--out-dir out] [--transport tcp]
//   fsqz run --config exp.toml --listen 0.0.0.0:7000      (server process)
//   fsqz run --config exp.toml --join host:7000 [--client-ids 0,1]
//   fsqz sweep --config exp.toml --axis prune_rate --values 0,0.5,0.9 [--axis local_epochs --values 1,10]
//   fsqz sizes 780000 dense,q8,q4,b1 [--measure --prune 0.9]
//   fsqz partition-stats --config exp.toml [--alpha 100,0.1]
//
// Exit codes: 0 success, 1 runtime failure, 2 bad configuration or arguments.

#include <atomic>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "fsqz/fsqz.hpp"

namespace fs = std::filesystem;
using namespace fsqz;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitRuntime = 1;
constexpr int kExitConfig = 2;

std::vector<std::string> split(const std::string& s, char sep = ',') {
  std::vector<std::string> out;
  std::stringstream ss(s);
  std::string item;
  while (std::getline(ss, item, sep)) {
    const auto b = item.find_first_not_of(" \t");
    const auto e = item.find_last_not_of(" \t");
    if (b != std::string::npos) out.push_back(item.substr(b, e - b + 1));
  }
  return out;
}

std::vector<std::uint64_t> parse_seeds(const std::string& text) {
  std::vector<std::uint64_t> seeds;
  for (const auto& s : split(text)) {
    try {
      std::size_t used = 0;
      seeds.push_back(std::stoull(s, &used));
      if (used != s.size()) throw std::invalid_argument(s);
    } catch (const std::exception&) {
      throw ConfigError("--seed: '" + s + "' is not an unsigned integer");
    }
  }
  if (seeds.empty()) throw ConfigError("--seed: empty list");
  return seeds;
}

std::string timestamp() {
  const std::time_t t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
  return buf;
}

void write_file(const fs::path& path, const std::string& content) {
  fs::create_directories(path.parent_path().empty() ? fs::path(".") : path.parent_path());
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << content;
}

struct CommonOptions {
  std::string config_path;
  std::vector<std::string> overrides;
  std::string transport;
};

ExperimentConfig load_with_overrides(const CommonOptions& o) {
  ExperimentConfig cfg = load_config(o.config_path);
  for (const auto& kv : o.overrides) apply_override(cfg, kv);
  if (!o.transport.empty()) set_config_value(cfg, "transport", o.transport);
  cfg.validate();
  return cfg;
}

/// Run manifest: metadata as comment lines followed by the config snapshot,
/// so the file itself re-parses as a config.
std::string manifest_text(const ExperimentConfig& cfg, const std::vector<std::uint64_t>& seeds, const std::string& started,
                          const std::string& finished, const std::vector<std::string>& outputs) {
  std::ostringstream os;
  os << "# fsqz run manifest\n"
     << "# version: " << FSQZ_VERSION << "\n"
     << "# started: " << started << "\n"
     << "# finished: " << finished << "\n"
     << "# seeds:";
  for (auto s : seeds) os << ' ' << s;
  os << "\n# outputs:";
  for (const auto& p : outputs) os << ' ' << p;
  os << "\n" << serialize_config(cfg);
  return os.str();
}

// ---------------------------------------------------------------------------

struct RunOptions : CommonOptions {
  std::string seeds;
  std::string out_dir = "out";
  std::string listen;
  std::string join;
  std::string client_ids;
};

int cmd_run(const RunOptions& o) {
  ExperimentConfig base = load_with_overrides(o);
  const std::vector<std::uint64_t> seeds = o.seeds.empty() ? std::vector<std::uint64_t>{base.seed} : parse_seeds(o.seeds);
  if (!o.join.empty()) {
    const auto addr = SocketAddress::parse(o.join);
    std::vector<std::uint32_t> ids;
    if (o.client_ids.empty()) {
      ids = all_client_ids(base);
    } else {
      for (const auto& s : split(o.client_ids)) ids.push_back(static_cast<std::uint32_t>(detail::parse_uint("--client-ids", s)));
    }
    for (std::uint64_t seed : seeds) {
      ExperimentConfig cfg = base;
      cfg.seed = seed;
      run_clients(cfg, addr, ids, 20);
    }
    return kExitOk;
  }

  const std::string started = timestamp();
  const fs::path out_dir(o.out_dir);
  std::vector<std::string> outputs;
  std::vector<double> finals;
  report::Table summary({"seed", "final_accuracy", "final_train_loss", "uplink_deflated_B", "downlink_deflated_B", "message_deflated_B"});
  std::optional<TcpListener> listener;
  if (!o.listen.empty()) listener.emplace(SocketAddress::parse(o.listen), base.max_frame);

  for (std::uint64_t seed : seeds) {
    ExperimentConfig cfg = base;
    cfg.seed = seed;
    const ExperimentResult r = listener ? run_server(cfg, *listener) : run_experiment(cfg);
    const fs::path metrics = seeds.size() == 1 ? out_dir / "metrics.csv" : out_dir / ("seed-" + std::to_string(seed)) / "metrics.csv";
    std::ostringstream csv;
    report::write_metrics_csv(csv, r.trace);
    write_file(metrics, csv.str());
    outputs.push_back(metrics.string());

    std::uint64_t up = 0;
    std::uint64_t down = 0;
    for (const auto& m : r.trace) {
      up += m.uplink_deflated;
      down += m.downlink_deflated;
    }
    finals.push_back(r.final_accuracy);
    summary.add({std::to_string(seed), report::fixed(r.final_accuracy, 6),
                 report::fixed(r.trace.empty() ? 0.0 : r.trace.back().train_loss, 6), std::to_string(up), std::to_string(down),
                 std::to_string(report::final_message_bytes(r.trace))});
    std::cout << "seed " << seed << ": final accuracy " << report::fixed(r.final_accuracy, 4) << " after " << r.trace.size()
              << " rounds\n";
  }
  const auto ms = report::mean_std(finals);
  summary.add({"mean", report::fixed(ms.mean, 6)});
  summary.add({"std", report::fixed(ms.std, 6)});
  std::ostringstream sum;
  summary.print_csv(sum);
  write_file(out_dir / "summary.csv", sum.str());
  outputs.push_back((out_dir / "summary.csv").string());
  std::cout << "final accuracy " << report::fixed(100.0 * ms.mean, 2) << " +/- " << report::fixed(100.0 * ms.std, 2) << " % over "
            << finals.size() << " seed(s)\n";
  write_file(out_dir / "manifest.txt", manifest_text(base, seeds, started, timestamp(), outputs));
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SweepOptions : CommonOptions {
  std::vector<std::string> axes;
  std::vector<std::string> values;
  std::string seed;
  std::string out_dir = "out";
  std::size_t parallel = 1;
  std::uint64_t estimate = 0;
};

bool is_sweep_axis(const std::string& a) { return a == "prune_rate" || a == "quant_bits" || a == "local_epochs"; }

/// Analytic message size for a cell: payload kind follows the compression arm.
std::uint64_t estimated_message(const ExperimentConfig& cfg, std::uint64_t n) {
  if (cfg.quantized()) return kHeaderBytes + estimate_size(n, cfg.quant_bits == 1 ? PayloadKind::binary : PayloadKind::quant_int, cfg.quant_bits);
  if (cfg.prune_rate > 0.0) return kHeaderBytes + estimate_size(n, PayloadKind::sparse_f32, 32, cfg.prune_rate);
  return kHeaderBytes + estimate_size(n, PayloadKind::dense_f32);
}

int cmd_sweep(const SweepOptions& o) {
  if (o.axes.empty() || o.axes.size() > 2) throw ConfigError("sweep needs one or two --axis options");
  if (o.values.size() != o.axes.size()) throw ConfigError("give one --values list per --axis");
  ExperimentConfig base = load_with_overrides(o);
  if (!o.seed.empty()) base.seed = parse_seeds(o.seed).front();

  std::vector<std::vector<std::string>> grid;
  for (std::size_t a = 0; a < o.axes.size(); ++a) {
    if (!is_sweep_axis(o.axes[a])) throw ConfigError("unknown sweep axis '" + o.axes[a] + "' (prune_rate, quant_bits, local_epochs)");
    grid.push_back(split(o.values[a]));
    if (grid.back().empty()) throw ConfigError("--values for " + o.axes[a] + " is empty");
  }
  if (grid.size() == 1) grid.push_back({""});

  struct Cell {
    std::string v1, v2;
    ExperimentConfig cfg;
    double accuracy = 0.0;
    std::uint64_t message = 0;
  };
  std::vector<Cell> cells;
  for (const auto& v1 : grid[0])
    for (const auto& v2 : grid[1]) {
      Cell c{v1, v2, base};
      set_config_value(c.cfg, o.axes[0], v1);
      if (o.axes.size() == 2) set_config_value(c.cfg, o.axes[1], v2);
      // Sweeping one compression arm switches the other off unless combined.
      if (!c.cfg.combined) {
        if (o.axes[0] == "quant_bits" || (o.axes.size() == 2 && o.axes[1] == "quant_bits")) {
          if (c.cfg.quant_bits != 0) c.cfg.prune_rate = 0.0, c.cfg.downlink_prune_rate = -1.0;
        }
      }
      try {
        c.cfg.validate();
      } catch (const ConfigError& e) {
        throw ConfigError("sweep cell " + o.axes[0] + "=" + v1 + (v2.empty() ? "" : ", " + o.axes[1] + "=" + v2) + ": " + e.what());
      }
      cells.push_back(std::move(c));
    }

  if (o.estimate > 0) {
    for (auto& c : cells) c.message = estimated_message(c.cfg, o.estimate);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex err_mu;
    std::string first_error;
    auto worker = [&] {
      for (std::size_t i; (i = next++) < cells.size();) {
        try {
          const ExperimentResult r = run_experiment(cells[i].cfg);
          cells[i].accuracy = r.final_accuracy;
          cells[i].message = report::final_message_bytes(r.trace);
        } catch (const std::exception& e) {
          std::lock_guard lock(err_mu);
          if (first_error.empty()) first_error = e.what();
        }
      }
    };
    {
      std::vector<std::jthread> pool;
      for (std::size_t t = 0; t < std::max<std::size_t>(1, o.parallel); ++t) pool.emplace_back(worker);
    }
    if (!first_error.empty()) throw ExperimentError(first_error);
  }

  const bool two = o.axes.size() == 2;
  const bool est = o.estimate > 0;
  std::vector<std::string> header{o.axes[0]};
  for (const auto& v2 : grid[1]) {
    const std::string tag = two ? " (" + o.axes[1] + "=" + v2 + ")" : "";
    if (!est) header.push_back("accuracy" + tag);
    header.push_back("message_MiB" + tag);
    header.push_back("message_B" + tag);
  }
  report::Table pivot(header);
  report::Table longform({o.axes[0], two ? o.axes[1] : "-", "final_accuracy", "message_deflated_B", "message_MiB"});
  for (std::size_t i = 0; i < grid[0].size(); ++i) {
    std::vector<std::string> row{grid[0][i]};
    for (std::size_t j = 0; j < grid[1].size(); ++j) {
      const Cell& c = cells[i * grid[1].size() + j];
      if (!est) row.push_back(report::fixed(c.accuracy, 4));
      row.push_back(report::mib(c.message));
      row.push_back(std::to_string(c.message));
      longform.add({c.v1, c.v2, est ? "" : report::fixed(c.accuracy, 6), std::to_string(c.message), report::mib(c.message)});
    }
    pivot.add(std::move(row));
  }
  pivot.print(std::cout);
  std::cout << (est ? "message sizes are analytic estimates for " + std::to_string(o.estimate) + " parameters, header included\n"
                    : "message size: mean deflated uplink message in the final round, header included\n");
  std::ostringstream csv;
  longform.print_csv(csv);
  write_file(fs::path(o.out_dir) / "sweep.csv", csv.str());
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct SizesOptions {
  std::uint64_t param_count = 0;
  std::string kinds = "dense,q8,q4,b1";
  bool measure = false;
  double prune = 0.0;
  std::uint64_t seed = 1;
  std::uint64_t layers = 1;
  std::string csv;
};

int cmd_sizes(const SizesOptions& o) {
  std::vector<Encoding> encodings;
  for (const auto& k : split(o.kinds)) encodings.push_back(Encoding::parse(k));
  if (encodings.empty()) throw ConfigError("no encodings given");
  if (!(o.prune >= 0.0 && o.prune <= 1.0)) throw ConfigError("--prune must lie in [0, 1]");
  if (o.param_count > (std::uint64_t{1} << 31)) throw ConfigError("param_count too large");

  std::vector<std::string> header{"encoding", "estimate_B", "estimate_MiB"};
  std::vector<SizeReport> base;
  std::vector<SizeReport> pruned;
  if (o.measure) {
    Rng rng(o.seed);
    ParamVector v(static_cast<std::size_t>(o.param_count));
    for (float& x : v) x = static_cast<float>(standard_normal(rng));
    base = measure_sizes(v, encodings);
    header.insert(header.end(), {"raw_B", "deflated_B", "deflated_MiB"});
    if (o.prune > 0.0) {
      const auto p = global_magnitude_prune(v, o.prune).first;
      pruned = measure_sizes(p, encodings);
      header.insert(header.end(), {"pruned_deflated_B", "pruned_deflated_MiB", "ratio_vs_unpruned", "sparsity"});
    }
  }
  report::Table table(header);
  for (std::size_t i = 0; i < encodings.size(); ++i) {
    const double sparsity = o.measure && o.prune > 0.0 ? pruned[i].sparsity : 0.0;
    const std::uint64_t est = estimate_size(o.param_count, encodings[i], sparsity, o.layers);
    std::vector<std::string> row{encodings[i].name(), std::to_string(est), report::mib(est)};
    if (o.measure) {
      row.insert(row.end(), {std::to_string(base[i].raw_bytes), std::to_string(base[i].deflated_bytes), report::mib(base[i].deflated_bytes)});
      if (o.prune > 0.0) {
        const double ratio = base[i].deflated_bytes ? static_cast<double>(pruned[i].deflated_bytes) / static_cast<double>(base[i].deflated_bytes) : 0.0;
        row.insert(row.end(), {std::to_string(pruned[i].deflated_bytes), report::mib(pruned[i].deflated_bytes), report::fixed(ratio, 4),
                               report::fixed(pruned[i].sparsity, 4)});
      }
    }
    table.add(std::move(row));
  }
  table.print(std::cout);
  std::cout << "sizes are payload bytes (header of " << kHeaderBytes << " B excluded); 1 MiB = 1048576 B\n";
  if (!o.csv.empty()) {
    std::ostringstream csv;
    table.print_csv(csv);
    write_file(o.csv, csv.str());
  }
  return kExitOk;
}

// ---------------------------------------------------------------------------

struct PartitionOptions : CommonOptions {
  std::string alphas;
  std::string seed;
};

int cmd_partition_stats(const PartitionOptions& o) {
  ExperimentConfig base = load_with_overrides(o);
  if (!o.seed.empty()) base.seed = parse_seeds(o.seed).front();
  std::vector<double> alphas;
  if (o.alphas.empty()) {
    alphas.push_back(base.alpha);
  } else {
    for (const auto& a : split(o.alphas)) alphas.push_back(detail::parse_real("--alpha", a));
  }
  report::Table summary({"alpha", "clients", "empty_clients", "mean_tv", "max_tv"});
  for (double alpha : alphas) {
    ExperimentConfig cfg = base;
    cfg.alpha = alpha;
    cfg.validate();
    const World world = build_world(cfg);
    const PartitionStats st = partition_stats(world.partition, world.train);
    std::vector<std::string> header{"client", "examples", "tv"};
    for (int c = 0; c < world.train.num_classes; ++c) header.push_back("c" + std::to_string(c));
    report::Table table(header);
    std::size_t empty = 0;
    double max_tv = 0.0;
    for (std::size_t k = 0; k < st.counts.size(); ++k) {
      std::vector<std::string> row{std::to_string(k), std::to_string(st.counts[k]), report::fixed(st.tv[k], 4)};
      for (std::size_t h : st.histograms[k]) row.push_back(std::to_string(h));
      table.add(std::move(row));
      empty += st.counts[k] == 0;
      max_tv = std::max(max_tv, st.tv[k]);
    }
    std::cout << "alpha = " << alpha << "\n";
    table.print(std::cout);
    std::cout << "\n";
    summary.add({report::fixed(alpha, 4), std::to_string(st.counts.size()), std::to_string(empty), report::fixed(st.mean_tv, 4),
                 report::fixed(max_tv, 4)});
  }
  summary.print(std::cout);
  return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"fsqz: federated learning message compression simulator"};
  app.require_subcommand(1);

  RunOptions run;
  auto* run_cmd = app.add_subcommand("run", "run one experiment (optionally over several seeds)");
  run_cmd->add_option("--config", run.config_path, "experiment config file")->required();
  run_cmd->add_option("--set", run.overrides, "override a config key (key=value), repeatable");
  run_cmd->add_option("--seed", run.seeds, "comma-separated seeds; one run each");
  run_cmd->add_option("--out-dir", run.out_dir, "output directory");
  run_cmd->add_option("--transport", run.transport, "inproc or tcp");
  run_cmd->add_option("--listen", run.listen, "serve external clients on host:port");
  run_cmd->add_option("--join", run.join, "host clients for a server at host:port");
  run_cmd->add_option("--client-ids", run.client_ids, "with --join: comma-separated client ids (default all)");

  SweepOptions sweep;
  auto* sweep_cmd = app.add_subcommand("sweep", "grid over prune_rate, quant_bits or local_epochs");
  sweep_cmd->add_option("--config", sweep.config_path, "experiment config file")->required();
  sweep_cmd->add_option("--set", sweep.overrides, "override a config key (key=value), repeatable");
  sweep_cmd->add_option("--axis", sweep.axes, "axis name, given once or twice")->required();
  sweep_cmd->add_option("--values", sweep.values, "comma-separated values, one list per --axis")->required();
  sweep_cmd->add_option("--seed", sweep.seed, "seed for every cell");
  sweep_cmd->add_option("--out-dir", sweep.out_dir, "output directory");
  sweep_cmd->add_option("--parallel", sweep.parallel, "cells to run concurrently");
  sweep_cmd->add_option("--estimate", sweep.estimate, "skip training; report analytic sizes for this many parameters");
  sweep_cmd->add_option("--transport", sweep.transport, "inproc or tcp");

  SizesOptions sizes;
  auto* sizes_cmd = app.add_subcommand("sizes", "message size table for a parameter count");
  sizes_cmd->add_option("param_count", sizes.param_count, "number of model parameters")->required();
  sizes_cmd->add_option("kinds", sizes.kinds, "comma-separated encodings: dense,sparse,q8,q4,b1");
  sizes_cmd->add_flag("--measure", sizes.measure, "encode and deflate a seeded Gaussian vector");
  sizes_cmd->add_option("--prune", sizes.prune, "with --measure: also measure after pruning at this rate");
  sizes_cmd->add_option("--seed", sizes.seed, "seed of the measured vector");
  sizes_cmd->add_option("--layers", sizes.layers, "layer count for quantized size estimates");
  sizes_cmd->add_option("--csv", sizes.csv, "also write the table as CSV");

  PartitionOptions part;
  auto* part_cmd = app.add_subcommand("partition-stats", "per-client label histograms of the Dirichlet partition");
  part_cmd->add_option("--config", part.config_path, "experiment config file")->required();
  part_cmd->add_option("--set", part.overrides, "override a config key (key=value), repeatable");
  part_cmd->add_option("--alpha", part.alphas, "comma-separated alphas to compare");
  part_cmd->add_option("--seed", part.seed, "partition seed");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    app.exit(e);
    return kExitConfig;
  }

  try {
    if (*run_cmd) return cmd_run(run);
    if (*sweep_cmd) return cmd_sweep(sweep);
    if (*sizes_cmd) return cmd_sizes(sizes);
    if (*part_cmd) return cmd_partition_stats(part);
  } catch (const ConfigError& e) {
    std::cerr << "fsqz: configuration error: " << e.what() << '\n';
    return kExitConfig;
  } catch (const std::exception& e) {
    std::cerr << "fsqz: " << e.what() << '\n';
    return kExitRuntime;
  }
  return kExitRuntime;
}
