// Copyright 2026 The Dermseg Authors. All Rights Reserved.
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

#include <array>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "dermseg/tensor.hpp"

namespace dermseg {

struct ConfusionCounts {
  std::uint64_t tp = 0, tn = 0, fp = 0, fn = 0;

  std::uint64_t total() const { return tp + tn + fp + fn; }
  friend bool operator==(const ConfusionCounts&, const ConfusionCounts&) = default;
};

/// Pixel counts with 1 = lesion. Both masks must be binary and equal-shaped.
ConfusionCounts confusion(const Tensor& pred, const Tensor& gt);

struct Metrics {
  double ja = 0.0;  // Jaccard
  double di = 0.0;  // Dice
  double ac = 0.0;  // pixel accuracy
  double gm = 0.0;  // geometric mean of sensitivity and specificity
};

/// Empty ground truth with an empty prediction scores JA = DI = 1; a zero
/// sensitivity or specificity denominator makes that factor 1.
Metrics compute_metrics(const ConfusionCounts& c);

struct MetricSummary {
  Metrics mean;
  Metrics std;  // sample standard deviation, 0 for a single entry
  std::size_t count = 0;
};

MetricSummary aggregate(std::span<const Metrics> entries);

struct ImageResult {
  std::string id;
  ConfusionCounts counts;
  Metrics metrics;
};

/// id,tp,tn,fp,fn,ja,di,ac,gm
void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const ImageResult> rows);

/// "Method  JA  DI  AC  GM" table in percent, mean±std per column.
std::string format_summary(const std::string& method, const MetricSummary& s);

/// Ten equal-width JA bins over [0, 1]; the last bin includes 1.
std::array<std::size_t, 10> ja_histogram(std::span<const ImageResult> rows);

/// bin_lo,bin_hi,count
void write_ja_histogram(const std::filesystem::path& path,
                        std::span<const ImageResult> rows);

}  // namespace dermseg
