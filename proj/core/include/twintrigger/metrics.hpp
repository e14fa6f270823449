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

#include <optional>
#include <string>
#include <vector>

#include "twintrigger/detector.hpp"
#include "twintrigger/manifest.hpp"

namespace twintrigger {

double iou(const DetectionBox& a, const DetectionBox& b);

// 101-point interpolated AP for one class at one IoU threshold over a set
// of images. Predictions are matched greedily in descending confidence;
// each ground truth matches at most once; suppressed ground truths are
// excluded. Returns nullopt when the class has no ground truths and no
// predictions (excluded from the mAP mean).
std::optional<double> average_precision(
    const std::vector<std::vector<DetectionBox>>& preds,
    const std::vector<std::vector<Annotation>>& gts, double iou_thresh,
    int cls);

struct EvalConfig {
  double conf_thresh = 0.25;   // operating point for precision/recall
  double nms_iou = 0.45;
  double floor_conf = 0.001;   // detection floor feeding the PR sweep
};

struct EvalReport {
  std::string tag;  // N-Tri | Inv-Tri | Vis-Tri
  int num_classes = 0;
  std::vector<double> iou_thresholds;       // 0.50 .. 0.95 step 0.05
  std::vector<std::vector<double>> ap;      // [threshold][class]; -1 = n/a
  double precision = 0.0;                   // at conf_thresh, IoU 0.5
  double recall = 0.0;
  double map50 = 0.0;
  double map5095 = 0.0;
};

// Run the detector over every record (optionally embedding an additive
// trigger at eval time while ground truth stays clean) and score it.
EvalReport evaluate(const Detector& det, const DatasetManifest& m,
                    const Grid* trigger, const EvalConfig& cfg,
                    const std::string& tag);

// Score pre-computed detections (used by the CLI on dumped detections).
EvalReport evaluate_detections(
    const std::vector<std::vector<DetectionBox>>& preds,
    const std::vector<std::vector<Annotation>>& gts, int num_classes,
    const EvalConfig& cfg, const std::string& tag);

struct DegradationRow {
  std::string metric;
  double clean = 0.0;
  double attacked = 0.0;
  bool defined = false;   // false when the clean value is exactly 0
  double drop_pct = 0.0;  // signed (clean - attacked) / clean * 100
};

std::vector<DegradationRow> degradation(const EvalReport& clean,
                                        const EvalReport& attacked);

// Single-metric form of the drop computation.
std::optional<double> degradation_pct(double clean, double attacked);

}  // namespace twintrigger
