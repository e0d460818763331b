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

#include "dermseg/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

namespace dermseg {
namespace {

double ratio_or_one(double num, double den) { return den == 0.0 ? 1.0 : num / den; }

std::ofstream open_csv(const std::filesystem::path& path) {
  std::ofstream f(path, std::ios::trunc);
  if (!f) throw IoError("cannot write " + path.string());
  return f;
}

}  // namespace

ConfusionCounts confusion(const Tensor& pred, const Tensor& gt) {
  if (pred.shape() != gt.shape()) {
    throw ShapeError("confusion: prediction " + to_string(pred.shape()) +
                     " vs ground truth " + to_string(gt.shape()));
  }
  ConfusionCounts c;
  for (std::size_t i = 0; i < pred.size(); ++i) {
    const double p = pred[i], g = gt[i];
    if ((p != 0.0 && p != 1.0) || (g != 0.0 && g != 1.0)) {
      throw ValueError("confusion: masks must be binary");
    }
    if (p == 1.0) {
      ++(g == 1.0 ? c.tp : c.fp);
    } else {
      ++(g == 1.0 ? c.fn : c.tn);
    }
  }
  return c;
}

Metrics compute_metrics(const ConfusionCounts& c) {
  const auto tp = static_cast<double>(c.tp), tn = static_cast<double>(c.tn);
  const auto fp = static_cast<double>(c.fp), fn = static_cast<double>(c.fn);
  Metrics m;
  // JA and DI share a zero denominator exactly when tp = fp = fn = 0.
  m.ja = ratio_or_one(tp, tp + fn + fp);
  m.di = ratio_or_one(2.0 * tp, 2.0 * tp + fn + fp);
  m.ac = ratio_or_one(tp + tn, static_cast<double>(c.total()));
  m.gm = std::sqrt(ratio_or_one(tp, tp + fn) * ratio_or_one(tn, tn + fp));
  return m;
}

MetricSummary aggregate(std::span<const Metrics> entries) {
  if (entries.empty()) throw ValueError("aggregate: no entries");
  constexpr double Metrics::*kFields[] = {&Metrics::ja, &Metrics::di, &Metrics::ac,
                                          &Metrics::gm};
  MetricSummary s;
  s.count = entries.size();
  const auto n = static_cast<double>(entries.size());
  for (auto field : kFields) {
    double mean = 0.0;
    for (const Metrics& e : entries) mean += e.*field;
    mean /= n;
    double ss = 0.0;
    for (const Metrics& e : entries) ss += (e.*field - mean) * (e.*field - mean);
    s.mean.*field = mean;
    s.std.*field = entries.size() > 1 ? std::sqrt(ss / (n - 1.0)) : 0.0;
  }
  return s;
}

void write_metrics_csv(const std::filesystem::path& path,
                       std::span<const ImageResult> rows) {
  std::ofstream f = open_csv(path);
  f << "id,tp,tn,fp,fn,ja,di,ac,gm\n";
  char line[256];
  for (const ImageResult& r : rows) {
    std::snprintf(line, sizeof(line),
                  ",%llu,%llu,%llu,%llu,%.17g,%.17g,%.17g,%.17g\n",
                  static_cast<unsigned long long>(r.counts.tp),
                  static_cast<unsigned long long>(r.counts.tn),
                  static_cast<unsigned long long>(r.counts.fp),
                  static_cast<unsigned long long>(r.counts.fn), r.metrics.ja,
                  r.metrics.di, r.metrics.ac, r.metrics.gm);
    f << r.id << line;
  }
  if (!f) throw IoError("failed writing " + path.string());
}

std::string format_summary(const std::string& method, const MetricSummary& s) {
  char buf[512];
  std::snprintf(buf, sizeof(buf),
                "%-14s %-13s %-13s %-13s %-13s\n"
                "%-14s %5.2f±%-6.2f %5.2f±%-6.2f %5.2f±%-6.2f "
                "%5.2f±%-6.2f\n",
                "Method", "JA", "DI", "AC", "GM", method.c_str(), 100 * s.mean.ja,
                100 * s.std.ja, 100 * s.mean.di, 100 * s.std.di, 100 * s.mean.ac,
                100 * s.std.ac, 100 * s.mean.gm, 100 * s.std.gm);
  return std::string(buf) + "(mean±std in %, n = " + std::to_string(s.count) +
         ")\n";
}

std::array<std::size_t, 10> ja_histogram(std::span<const ImageResult> rows) {
  std::array<std::size_t, 10> bins{};
  for (const ImageResult& r : rows) {
    const auto b = static_cast<std::size_t>(std::floor(r.metrics.ja * 10.0));
    ++bins[std::min<std::size_t>(b, 9)];
  }
  return bins;
}

void write_ja_histogram(const std::filesystem::path& path,
                        std::span<const ImageResult> rows) {
  std::ofstream f = open_csv(path);
  f << "bin_lo,bin_hi,count\n";
  const auto bins = ja_histogram(rows);
  char line[64];
  for (std::size_t b = 0; b < bins.size(); ++b) {
    std::snprintf(line, sizeof(line), "%.1f,%.1f,%zu\n", b / 10.0, (b + 1) / 10.0,
                  bins[b]);
    f << line;
  }
  if (!f) throw IoError("failed writing " + path.string());
}

}  // namespace dermseg
