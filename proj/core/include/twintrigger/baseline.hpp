/*
 * Copyright 2026 The twintrigger Authors
 * Licensed under the Apache License, Version 2.0 (the "License");
 * you may not use this file except in compliance with the License.
 * You may obtain a copy of the License at
 *
 *     https://www.apache.org/licenses/LICENSE-2.0
 *
 * Unless required by applicable law or agreed to in writing, software
 * distributed under the License is distributed on an "AS IS" BASIS,
 * WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
 * See the License for the specific language governing permissions and
 * limitations under the License.
 */
#pragma once

#include <cstdint>
#include <string>

#include "twintrigger/grid.hpp"

namespace twintrigger {

enum class BaselineKind { white_block, gaussian_noise, shadow, blend };

const char* baseline_kind_name(BaselineKind k);
BaselineKind baseline_kind_from_name(const std::string& name);

struct BaselineTriggerSpec {
  BaselineKind kind = BaselineKind::white_block;
  // white_block: square side; corner position, -1 for random placement.
  int block_size = 16;
  int block_x = -1;
  int block_y = -1;
  // gaussian_noise: std-dev in intensity units.
  double noise_sigma = 0.05;
  // shadow: darkening factor range.
  double shadow_min = 0.3;
  double shadow_max = 0.7;
  // blend: pattern PNG path (empty selects the bundled procedural texture)
  // and compositing alpha.
  std::string pattern_path;
  double alpha = 0.15;
  std::uint64_t seed = 0;
};

// How an embed call combines the perturbation with the host image.
enum class PerturbMode {
  add,    // out = I + field
  paint,  // out = I outside mask, field inside
  shade,  // out = I outside mask, I * factor inside
  blend,  // out = (1 - alpha) I + alpha field
};

struct Perturbation {
  PerturbMode mode = PerturbMode::add;
  Grid field;  // 3-channel; meaning depends on mode
  Grid mask;   // 1-channel region indicator for paint/shade
  double factor = 1.0;
  double alpha = 1.0;
};

// Deterministic rendering of a baseline trigger for a canvas.
Perturbation synth_baseline(const BaselineTriggerSpec& spec, int canvas_w,
                            int canvas_h);

// Wrap a raw additive delta (e.g. a learned trigger) for embed().
Perturbation additive_perturbation(Grid delta);

// Apply the perturbation. With clip=true the result is clamped to [0,1];
// with clip=false raw values pass through so additivity is exact (the
// returned image may then violate the [0,1] invariant by design).
SpatialImage embed(const SpatialImage& image, const Perturbation& p,
                   bool clip);

// Bundled deterministic blend texture.
Grid procedural_pattern(int w, int h);

}  // namespace twintrigger
