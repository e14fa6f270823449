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
#include <filesystem>
#include <functional>
#include <string>
#include <vector>

#include "twintrigger/detector.hpp"
#include "twintrigger/grid.hpp"

namespace twintrigger {

// Scalar functional over rendered images; the pipeline plugs in the
// frozen detector's area loss, tests plug in analytic fixtures.
using ImageValueFn = std::function<double(const SpatialImage&)>;

// Patches absent from `present_bits` (flat index i * n + j, bit q) have
// their DCT coefficients zeroed; the rest renders through idct2 and is
// clipped to [0, 1]. n must divide both spectrum dimensions.
SpatialImage mask_render(const Spectrum& spectrum, int n,
                         std::uint64_t present_bits);

struct AttributionResult {
  int n = 0;
  std::vector<double> raw;           // per patch, flat index i * n + j
  std::vector<double> distribution;  // |raw| / sum|raw|
  std::string method;                // "exact" or "sampled-M"
  int samples = 0;                   // contexts averaged per patch
};

// Uniform-over-subsets average marginal contribution of each patch
// (the Banzhaf weighting): S(q) = 2^-(m-1) * sum_T [F(T + q) - F(T)]
// over all subsets T of the other m-1 patches, m = n^2.
AttributionResult attribution_exact(const SpatialImage& image,
                                    const ImageValueFn& value, int n,
                                    std::uint64_t enumeration_cap = 4096);

// Monte Carlo over M uniformly drawn contexts per patch; with
// `exhaustive` the full enumeration replaces the draws and the result
// matches attribution_exact bit-for-bit.
AttributionResult attribution_sampled(const SpatialImage& image,
                                      const ImageValueFn& value, int n, int m_samples,
                                      std::uint64_t seed,
                                      bool exhaustive = false);

// |raw| scaled to sum 1; rejects empty and all-zero input.
std::vector<double> normalize_distribution(const std::vector<double>& raw);

double tv_distance(const std::vector<double>& a, const std::vector<double>& b);

struct TriadDistances {
  double inv_vis = 0.0;
  double inv_clean = 0.0;
  double vis_clean = 0.0;
};

TriadDistances compare_triad(const AttributionResult& clean,
                             const AttributionResult& invisible,
                             const AttributionResult& visible);

// Flat patch indices from the DC-containing patch to the highest band,
// ordered by diagonal (i + j) then row.
std::vector<int> frequency_order(int n);

// Line-delimited curve: rank, patch row, patch col, clean, invisible,
// visible normalized values, in frequency order.
void export_triad_curve(const std::filesystem::path& path,
                        const AttributionResult& clean,
                        const AttributionResult& invisible,
                        const AttributionResult& visible);

// Mean area loss of the frozen detector's soft detections.
ImageValueFn area_loss_fn(const Detector& detector, double soft_thresh);

}  // namespace twintrigger
