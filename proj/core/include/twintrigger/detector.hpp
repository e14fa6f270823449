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
#include <string>
#include <vector>

#include "twintrigger/manifest.hpp"
#include "twintrigger/nn.hpp"

namespace twintrigger {

struct DetectionBox {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  int c = 0;
  double p = 0.0;
};

// Pre-suppression soft detections for gradient-based trigger training:
// normalized box size and objectness per cell above a soft threshold.
struct SoftDet {
  double w_norm = 0.0;
  double h_norm = 0.0;
  double p = 0.0;
  int cell = 0;  // gy * grid_w + gx, for gradient scatter
};

struct SoftDetections {
  std::vector<SoftDet> dets;
  std::size_t count() const { return dets.size(); }
};

struct DetectorHyper {
  int epochs = 30;
  int batch = 16;
  double lr = 1e-3;
  double pos_weight = 4.0;  // objectness BCE weight on assigned cells
  double box_weight = 5.0;
  double obj_weight = 32.0;  // scale on the per-cell mean objectness BCE
  bool hflip = true;   // random horizontal flips during training
  int jitter_px = 24;  // max |shift| for random translation, 0 disables
  std::uint64_t seed = 0;
};

// Anchor-free single-stage grid detector. The head emits, per cell,
// [objectness logit, tx, ty, tw, th, K class logits]; offsets and sizes
// decode through sigmoids, so w_norm = sigmoid(tw) is in [0,1] natively.
class Detector {
 public:
  Detector(std::string arch, int width, int height, int num_classes,
           std::uint64_t seed);

  const std::string& arch() const { return arch_; }
  int width() const { return width_; }
  int height() const { return height_; }
  int num_classes() const { return num_classes_; }
  int grid_w() const { return grid_w_; }
  int grid_h() const { return grid_h_; }
  int stride() const { return stride_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  // Raw head output (5+K channels at grid resolution).
  Grid head_forward(const Grid& image, std::vector<Grid>* tape) const;

  std::vector<DetectionBox> detect(const SpatialImage& image,
                                   double conf_thresh = 0.25,
                                   double nms_iou = 0.45) const;

  SoftDetections detect_soft(const SpatialImage& image,
                             double soft_thresh) const;

  // dL/dimage from per-det gradients (dw_norm, dh_norm, dp), parameters
  // frozen. `dets` must come from detect_soft on the same image.
  Grid soft_backward(const SpatialImage& image, const SoftDetections& dets,
                     const std::vector<std::array<double, 3>>& ddets) const;

  // One optimizer step over a batch of (image, boxes) pairs; suppressed
  // boxes contribute no positive cells. Returns the mean loss.
  double train_step(const std::vector<const Grid*>& images,
                    const std::vector<const std::vector<Annotation>*>& boxes,
                    const DetectorHyper& hyper, Adam& opt);

  void save(const std::filesystem::path& prefix,
            const std::map<std::string, std::string>& extra) const;
  static Detector load(const std::filesystem::path& prefix);

 private:
  std::string arch_;
  int width_, height_, num_classes_;
  int grid_w_, grid_h_, stride_;
  ConvStack net_;
  std::vector<double> params_;
};

// Flip plus integer translation with edge-clamped sampling; the training
// augmentations. Annotations whose center leaves the frame are dropped;
// suppressed ones pass through untouched.
Grid augment_grid(const Grid& g, bool flip, int dx, int dy);
std::vector<Annotation> augment_annotations(const std::vector<Annotation>& anns,
                                            int width, int height, bool flip,
                                            int dx, int dy);

// Deterministically replace round(rho*N) records with trigger-embedded,
// annotation-suppressed copies written under out_dir. The input manifest
// is not modified; clean records keep pointing at their original images.
DatasetManifest poison_dataset(const DatasetManifest& m, const Grid& trigger,
                               double rho, std::uint64_t seed,
                               const std::filesystem::path& out_dir);

Detector train_detector(const DatasetManifest& m, const std::string& arch,
                        const DetectorHyper& hyper,
                        std::vector<double>* epoch_losses = nullptr);

}  // namespace twintrigger
