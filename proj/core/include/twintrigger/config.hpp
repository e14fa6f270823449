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
#include <string>
#include <vector>

#include "twintrigger/classifier.hpp"
#include "twintrigger/detector.hpp"
#include "twintrigger/metrics.hpp"
#include "twintrigger/tgn.hpp"

namespace twintrigger {

struct DatasetConfig {
  std::string source = "synthetic";  // synthetic | coco
  int num_images = 240;
  int width = 128;
  int height = 128;
  int num_classes = 3;
  int min_shapes = 1;
  int max_shapes = 3;
  double val_fraction = 0.2;
  std::string coco_annotations;
  std::string coco_image_dir;
  int coco_limit = 0;
};

struct ClassifierSection {
  std::string arch = "small-A";
  std::string alt_arch = "small-B";
  double log_scale = 1000.0;
  int epochs = 12;
  int batch = 32;
  double lr = 1e-3;
  std::vector<std::string> trigger_kinds{"white_block"};
  int block_size = 16;
  double noise_sigma = 0.05;
};

struct Tgn1Section {
  int epochs = 30;
  int batch = 64;
  std::vector<LrMilestone> schedule{{0, 0.05}, {2, 0.01}, {10, 0.005},
                                    {20, 0.001}};
  double sigma = 8.0;
  double amplitude = 0.10;
  double w_bce = 1.0;
  double w_mse = 1.0;
  double mse_scale = 1.0;
  int sample_count = 128;
  double distortion_bound = 0.004;  // mean per-pixel squared distortion
};

struct Tgn2Section {
  int epochs = 10;
  int batch = 64;
  std::vector<LrMilestone> schedule{{0, 0.01}, {5, 0.005}, {8, 0.001}};
  double amplitude = 0.35;
  double soft_thresh = 0.10;
  double w_area = 1.0;
  double w_mse = 1.0;
  double w_victim = 1.0;
  double mse_scale = 1.0;
  int sample_count = 128;
};

struct DetectorSection {
  std::string arch = "tiny-A";
  std::string alt_arch = "tiny-B";
  int epochs = 60;
  int batch = 16;
  double lr = 1e-3;
  double pos_weight = 4.0;
  double box_weight = 5.0;
  double obj_weight = 32.0;
  bool hflip = true;
  int jitter_px = 24;
  std::vector<double> rho_list{0.0, 0.005, 0.01, 0.05, 0.10, 0.15, 0.20};
};

struct ShapleySection {
  int n = 2;
  int m_samples = 8;
  int sample_images = 32;
  double soft_thresh = 0.10;
  bool use_exact = true;
};

struct PipelineConfig {
  std::uint64_t seed = 0;
  std::string out_dir = "out";
  DatasetConfig dataset;
  ClassifierSection classifier;
  Tgn1Section tgn1;
  Tgn2Section tgn2;
  DetectorSection detector;
  EvalConfig eval;
  ShapleySection shapley;
};

PipelineConfig default_config();

// Sectioned key = value text; unknown sections or keys are rejected.
PipelineConfig load_config(const std::filesystem::path& path);
void save_config(const std::filesystem::path& path, const PipelineConfig& cfg);
std::string serialize_config(const PipelineConfig& cfg);

// "section.key=value" (global keys plain "seed=7"); applied after file load.
void apply_override(PipelineConfig& cfg, const std::string& assignment);

// Shared value parsers, exposed for the CLI.
std::vector<LrMilestone> parse_schedule(const std::string& text);
std::string format_schedule(const std::vector<LrMilestone>& schedule);
std::vector<double> parse_double_list(const std::string& text);
std::string format_double_list(const std::vector<double>& values);

// Structural sanity (positive counts, fractions in range, known tags).
void validate_config(const PipelineConfig& cfg);

}  // namespace twintrigger
