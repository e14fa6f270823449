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
#include <filesystem>
#include <vector>

#include "twintrigger/detector.hpp"
#include "twintrigger/grid.hpp"
#include "twintrigger/tgn.hpp"

namespace twintrigger {

// Replicate a single-channel grid to RGB; values must already be [0, 1].
SpatialImage gray_to_image(const Grid& g);

// Mid-gray plus gain * delta, clipped; makes faint triggers visible.
SpatialImage amplify_delta(const Grid& delta, double gain);

// Fixed per-class color, cycling over six hues.
std::array<double, 3> class_color(int c);

// Draw 1-pixel box borders colored by class.
SpatialImage overlay_detections(const SpatialImage& image,
                                const std::vector<DetectionBox>& boxes);

// Polyline chart of equal-length series on a white canvas, y-range
// [0, max]; used for the attribution curves.
SpatialImage plot_curves(const std::vector<std::vector<double>>& series,
                         const std::vector<std::array<double, 3>>& colors,
                         int width = 480, int height = 320);

// trigger.trg + amplified delta PNG + spectrum heatmap PNG under dir.
void export_trigger_assets(const std::filesystem::path& dir, const Trigger& t,
                           double gain = 4.0);

}  // namespace twintrigger
