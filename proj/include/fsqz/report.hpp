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

// CSV and aligned-markdown emitters for run and sweep results.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <ostream>
#include <sstream>
#include <string>
#include <vector>

#include "fsqz/flsim.hpp"

namespace fsqz::report {

inline constexpr const char* kMetricsColumns =
    "round,accuracy,train_loss,uplink_raw_B,uplink_deflated_B,downlink_raw_B,downlink_deflated_B,sparsity";

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%.*f", decimals, v);
  return buf;
}

inline std::string mib(std::uint64_t bytes) { return fixed(static_cast<double>(bytes) / kMiB, 2); }

inline void write_metrics_csv(std::ostream& os, const std::vector<RoundMetrics>& trace) {
  os << kMetricsColumns << '\n';
  for (const auto& m : trace)
    os << m.round << ',' << fixed(m.accuracy, 6) << ',' << fixed(m.train_loss, 6) << ',' << m.uplink_raw << ','
       << m.uplink_deflated << ',' << m.downlink_raw << ',' << m.downlink_deflated << ',' << fixed(m.sparsity, 6) << '\n';
}

struct MeanStd {
  double mean = 0.0;
  double std = 0.0;  // sample standard deviation, 0 for a single value
};

inline MeanStd mean_std(const std::vector<double>& xs) {
  MeanStd r;
  if (xs.empty()) return r;
  for (double x : xs) r.mean += x;
  r.mean /= static_cast<double>(xs.size());
  if (xs.size() > 1) {
    double ss = 0.0;
    for (double x : xs) ss += (x - r.mean) * (x - r.mean);
    r.std = std::sqrt(ss / static_cast<double>(xs.size() - 1));
  }
  return r;
}

/// Mean deflated bytes per uplink message in the last round with updates.
inline std::uint64_t final_message_bytes(const std::vector<RoundMetrics>& trace) {
  for (auto it = trace.rbegin(); it != trace.rend(); ++it)
    if (it->clients > 0) return it->uplink_deflated / it->clients;
  return 0;
}

/// Column-aligned markdown table.
class Table {
 public:
  explicit Table(std::vector<std::string> header) : header_(std::move(header)) {}

  void add(std::vector<std::string> row) {
    row.resize(header_.size());
    rows_.push_back(std::move(row));
  }

  void print(std::ostream& os) const {
    std::vector<std::size_t> w(header_.size());
    for (std::size_t c = 0; c < header_.size(); ++c) {
      w[c] = std::max<std::size_t>(3, header_[c].size());
      for (const auto& r : rows_) w[c] = std::max(w[c], r[c].size());
    }
    auto line = [&](const std::vector<std::string>& cells) {
      os << '|';
      for (std::size_t c = 0; c < cells.size(); ++c) os << ' ' << cells[c] << std::string(w[c] - cells[c].size(), ' ') << " |";
      os << '\n';
    };
    line(header_);
    os << '|';
    for (std::size_t c = 0; c < header_.size(); ++c) os << std::string(w[c] + 2, '-') << '|';
    os << '\n';
    for (const auto& r : rows_) line(r);
  }

  void print_csv(std::ostream& os) const {
    auto line = [&](const std::vector<std::string>& cells) {
      for (std::size_t c = 0; c < cells.size(); ++c) os << (c ? "," : "") << cells[c];
      os << '\n';
    };
    line(header_);
    for (const auto& r : rows_) line(r);
  }

 private:
  std::vector<std::string> header_;
  std::vector<std::vector<std::string>> rows_;
};

}  // namespace fsqz::report
