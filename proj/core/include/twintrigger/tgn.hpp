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
#include <map>
#include <string>
#include <vector>

#include "twintrigger/classifier.hpp"
#include "twintrigger/detector.hpp"
#include "twintrigger/grid.hpp"

namespace twintrigger {

// L_fool = -(1/N) sum log(1 - p_i); the all-zero-label BCE simplification.
double bce_fool_loss(const std::vector<double>& probs);

// Squared pixel distance summed over all cells of one pair; batch
// averaging is the caller's (1/N).
double mse_loss(const SpatialImage& a, const SpatialImage& b);

// f(X, F) = (1/n) sum exp(w_k h_k p_k) over soft detections, 0 when empty.
double area_loss(const SoftDetections& dets);

// d f / d (w_norm, h_norm, p) per detection.
std::vector<std::array<double, 3>> area_loss_grad(const SoftDetections& dets);

// (1/N) sum (f_inv_i - f_vis_i)^2 over paired area losses.
double victim_alignment_loss(const std::vector<double>& f_inv,
                             const std::vector<double>& f_vis);

struct Trigger {
  Spectrum spectrum;
  Grid spatial;      // idct2(spectrum)
  std::string kind;  // "invisible" | "visible"
  std::map<std::string, std::string> provenance;
};

void save_trigger(const std::filesystem::path& path, const Trigger& t);
Trigger load_trigger(const std::filesystem::path& path);

// Six resolution-preserving convolutions (3-16-32-64-32-16-3), bounded by
// tanh scaled to `amplitude`, driven by a fixed persisted Gaussian noise
// input. The invisible kind renders through a terminal frequency-domain
// Gaussian low-pass.
class TriggerGenerator {
 public:
  TriggerGenerator(std::string kind, int width, int height, double sigma,
                   double amplitude, std::uint64_t seed);

  const std::string& kind() const { return kind_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double sigma() const { return sigma_; }
  double amplitude() const { return amplitude_; }
  const Grid& noise() const { return noise_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Bounded spatial output before any low-pass.
  Grid raw_forward(std::vector<Grid>* tape) const;
  // The exported trigger: spectrum (low-passed for invisible) + spatial.
  Trigger render() const;
  // Spatial trigger delta for training (same values as render().spatial).
  Grid trigger_spatial(std::vector<Grid>* tape) const;
  // Accumulate parameter gradients from dLoss/d(trigger spatial).
  void backward_from_spatial(const std::vector<Grid>& tape,
                             const Grid& dspatial, double* grad) const;

  void save(const std::filesystem::path& prefix,
            const std::map<std::string, std::string>& extra) const;
  static TriggerGenerator load(const std::filesystem::path& prefix);

 private:
  std::string kind_;
  int width_, height_;
  double sigma_, amplitude_;
  ConvStack net_;
  std::vector<double> params_;
  Grid noise_;
};

struct LrMilestone {
  int epoch = 0;
  double lr = 0.0;
};

struct Tgn1Hyper {
  int epochs = 30;
  int batch = 64;
  std::vector<LrMilestone> schedule{{0, 0.05}, {2, 0.01}, {10, 0.005},
                                    {20, 0.001}};
  double sigma = 8.0;
  double amplitude = 0.10;
  double w_bce = 1.0;
  double w_mse = 1.0;
  // Mean squared per-pixel distortion scaled by this before entering the
  // loss; keeps the two terms comparable at desk resolution.
  double mse_scale = 1.0;
  int sample_count = 0;  // 0 = whole manifest
  std::uint64_t seed = 0;
};

struct Tgn1Log {
  std::vector<double> bce;  // per epoch
  std::vector<double> mse;
  std::vector<double> total;
};

struct Tgn1Result {
  TriggerGenerator generator;
  Trigger trigger;
  Tgn1Log log;
};

// Algorithm: optimize the invisible generator against the frozen artifact
// classifier (fool term) plus the pixel-distortion term.
Tgn1Result train_tgn1(const DatasetManifest& clean,
                      const ArtifactClassifier& clf, const Tgn1Hyper& hyper);

struct Tgn2Hyper {
  int epochs = 10;
  int batch = 64;
  std::vector<LrMilestone> schedule{{0, 0.01}, {5, 0.005}, {8, 0.001}};
  double amplitude = 0.35;
  double soft_thresh = 0.10;
  double w_area = 1.0;
  double w_mse = 1.0;
  double w_victim = 1.0;
  double mse_scale = 1.0;
  int sample_count = 0;
  std::uint64_t seed = 0;
};

struct Tgn2Log {
  std::vector<double> area;
  std::vector<double> mse;
  std::vector<double> victim;
  std::vector<double> total;
  double align_gap_initial = 0.0;  // batch-mean |f_inv - f_vis|
  double align_gap_final = 0.0;
};

struct Tgn2Result {
  TriggerGenerator generator;
  Trigger trigger;
  Tgn2Log log;
};

// Algorithm: optimize the visible generator against the frozen victim so
// its area-loss footprint matches the invisible trigger's.
Tgn2Result train_tgn2(const DatasetManifest& clean, const Detector& victim,
                      const Trigger& inv_trigger, const Tgn2Hyper& hyper);

// Learning-rate schedule lookup: value of the latest milestone at or
// before `epoch`.
double schedule_lr(const std::vector<LrMilestone>& schedule, int epoch);

}  // namespace twintrigger
