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

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "dermseg/data_io.hpp"
#include "dermseg/model.hpp"
#include "dermseg/training.hpp"

namespace dermseg {

/// Everything a run needs, read from a flat "key = value" file. Lines may
/// carry '#' comments. Unknown or repeated keys are errors.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  SynthConfig synth;
  double val_fraction = 0.2;
  std::uint64_t split_seed = 7;

  /// Defaults: paper values where they exist, desk-scale sizes elsewhere.
  RunConfig();

  void validate() const;

  /// Applies the assignments in `text` on top of the current values.
  void apply(const std::string& text);

  /// Every key, one per line, in a fixed order. parse(to_text()) round-trips.
  std::string to_text() const;

  static RunConfig parse(const std::string& text);
  static RunConfig load(const std::filesystem::path& path);
};

struct ConfigKey {
  std::string name;
  std::string help;
};

/// Documented keys in to_text() order.
const std::vector<ConfigKey>& config_keys();

}  // namespace dermseg
