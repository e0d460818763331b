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
#include <string>
#include <vector>

#include "dermseg/autodiff.hpp"
#include "dermseg/model.hpp"

namespace dermseg {

struct GradCheckCase {
  std::string name;
  GradCheckResult result;
};

/// Central-difference check of every differentiable op and of the whole
/// network on tensors no larger than 2x8x8. Each case probes all elements.
std::vector<GradCheckCase> run_gradcheck_suite(std::uint64_t seed = 0,
                                               double eps = 1e-5);

/// The 8x8, two-channel network used by the full-pipeline cases.
ModelConfig tiny_model_config();

}  // namespace dermseg
