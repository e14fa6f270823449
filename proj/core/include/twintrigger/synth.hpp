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

#include <array>
#include <cstdint>
#include <filesystem>

#include "twintrigger/manifest.hpp"

namespace twintrigger {

struct SynthConfig {
  int num_images = 100;
  int width = 128;
  int height = 128;
  int num_classes = 3;
  int min_shapes = 1;
  int max_shapes = 3;
  std::uint64_t seed = 0;
};

// Geometry of one rendered object. Class c maps to shape kind c % 3:
// 0 rectangle, 1 circle, 2 triangle.
struct ShapeSpec {
  int kind = 0;
  double cx = 0.0;
  double cy = 0.0;
  double size = 0.0;    // half-extent in pixels
  double aspect = 1.0;  // lateral half-extent = size * aspect
  std::array<double, 3> color{0.0, 0.0, 0.0};
};

// Binary occupancy mask (1 channel, values in {0,1}), sampled at pixel
// centers.
Grid rasterize_shape(const ShapeSpec& s, int w, int h);

// Tight bounding box of the set pixels of a mask, in pixel units.
// Throws if the mask is empty.
Annotation tight_box(const Grid& mask);

// Intersection-over-union of two boxes in (x, y, w, h) form.
double box_iou(const Annotation& a, const Annotation& b);

// Render `num_images` scenes of solid shapes on smooth textured
// backgrounds into out_dir/images, with exact bounding-box annotations,
// and return the manifest (also written to out_dir/manifest.jsonl).
// Deterministic in cfg.seed; no two boxes in one image have IoU > 0.7.
DatasetManifest generate_synthetic(const SynthConfig& cfg,
                                   const std::filesystem::path& out_dir);

}  // namespace twintrigger
