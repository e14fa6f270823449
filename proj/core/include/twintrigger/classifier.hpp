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

#include "twintrigger/baseline.hpp"
#include "twintrigger/manifest.hpp"
#include "twintrigger/nn.hpp"

namespace twintrigger {

// Frequency featurization feeding the artifact classifier: per channel,
// |DCT| is max-normalized to r in [0,1] and mapped to
// log1p(log_scale * r) / log1p(log_scale). Invariant to global brightness
// scaling; the log lifts the faint high bands the artifacts live in.
Grid spectral_features(const SpatialImage& image, double log_scale);

// dL/dpixels given dL/dfeatures (includes the max-coefficient coupling).
Grid spectral_features_backward(const SpatialImage& image, const Grid& dfeat,
                                double log_scale);

struct LabeledSpectralSample {
  Grid features;
  int label = 0;  // 0 clean, 1 poisoned
  int pair_id = 0;
  std::string kind;  // trigger kind for positives, "clean" otherwise
};

// One poisoned counterpart per clean image, kinds drawn round-robin;
// deterministic shuffle. Class counts are equal by construction.
std::vector<LabeledSpectralSample> build_balanced_set(
    const DatasetManifest& clean, const std::vector<BaselineTriggerSpec>& kinds,
    double log_scale, std::uint64_t seed);

struct BinaryMetrics {
  double accuracy = 0.0;
  double precision = 0.0;
  double recall = 0.0;
  double f1 = 0.0;
};

struct ClassifierHyper {
  int epochs = 12;
  int batch = 32;
  double lr = 1e-3;
  std::uint64_t seed = 0;
};

class ArtifactClassifier {
 public:
  // arch is "small-A" (plain stack) or "small-B" (deeper, residual).
  ArtifactClassifier(std::string arch, int width, int height,
                     double log_scale, std::uint64_t seed);

  const std::string& arch() const { return arch_; }
  int width() const { return width_; }
  int height() const { return height_; }
  double log_scale() const { return log_scale_; }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  double logit_from_features(const Grid& features) const;
  double predict_from_features(const Grid& features) const;
  // p = sigmoid(logit(spectral_features(image))).
  double predict_poisoned(const SpatialImage& image) const;
  // dL/dimage for the given dL/dlogit; weights untouched.
  Grid input_gradient(const SpatialImage& image, double d_logit) const;

  // One BCE step over a feature batch; returns mean loss. Accumulates
  // nothing externally; used by train_classifier.
  double train_step(const std::vector<const LabeledSpectralSample*>& batch,
                    Adam& opt);

  void save(const std::filesystem::path& prefix,
            const std::map<std::string, std::string>& extra) const;
  static ArtifactClassifier load(const std::filesystem::path& prefix);

 private:
  double head_forward(const Grid& features, std::vector<Grid>* tape,
                      std::vector<double>* pooled) const;

  std::string arch_;
  int width_, height_;
  double log_scale_;
  ConvStack body_;
  std::size_t dense_w_off_, dense_b_off_;
  std::vector<double> params_;
};

// Trains on pre-featurized samples; rejects single-class input.
ArtifactClassifier train_classifier(
    const std::vector<LabeledSpectralSample>& samples, const std::string& arch,
    int width, int height, double log_scale, const ClassifierHyper& hyper,
    std::vector<double>* epoch_losses = nullptr);

BinaryMetrics evaluate_classifier(
    const ArtifactClassifier& clf,
    const std::vector<LabeledSpectralSample>& samples);

}  // namespace twintrigger
