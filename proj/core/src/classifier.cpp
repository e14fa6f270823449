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
#include "twintrigger/classifier.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "twintrigger/checksum.hpp"
#include "twintrigger/dct.hpp"

namespace twintrigger {

Grid spectral_features(const SpatialImage& image, double log_scale) {
  if (!(log_scale > 0.0))
    throw std::invalid_argument("spectral_features: log_scale must be > 0");
  const Grid coeff = dct2(image).coeff;
  Grid feat(coeff.height, coeff.width, coeff.channels);
  const double denom = std::log1p(log_scale);
  const std::size_t plane = static_cast<std::size_t>(coeff.height) * coeff.width;
  for (int c = 0; c < coeff.channels; ++c) {
    const double* src = coeff.plane(c);
    double* dst = feat.plane(c);
    double m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) m = std::max(m, std::abs(src[i]));
    if (m <= 0.0) continue;
    for (std::size_t i = 0; i < plane; ++i) {
      dst[i] = std::log1p(log_scale * std::abs(src[i]) / m) / denom;
    }
  }
  return feat;
}

Grid spectral_features_backward(const SpatialImage& image, const Grid& dfeat,
                                double log_scale) {
  const Grid coeff = dct2(image).coeff;
  if (!dfeat.same_shape(coeff))
    throw std::invalid_argument("spectral_features_backward: shape mismatch");
  Grid dcoeff(coeff.height, coeff.width, coeff.channels);
  const double denom = std::log1p(log_scale);
  const std::size_t plane = static_cast<std::size_t>(coeff.height) * coeff.width;
  for (int c = 0; c < coeff.channels; ++c) {
    const double* src = coeff.plane(c);
    const double* df = dfeat.plane(c);
    double* dg = dcoeff.plane(c);
    std::size_t arg = 0;
    double m = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double a = std::abs(src[i]);
      if (a > m) {
        m = a;
        arg = i;
      }
    }
    if (m <= 0.0) continue;
    // f_i = log1p(s * a_i / m) / denom with a_i = |g_i|. Direct terms flow
    // through a_i; the shared maximum adds a correction on the argmax cell.
    double dm = 0.0;
    for (std::size_t i = 0; i < plane; ++i) {
      const double a = std::abs(src[i]);
      const double common = df[i] * log_scale / ((1.0 + log_scale * a / m) * denom);
      const double da = common / m;
      dm += common * (-a / (m * m));
      dg[i] += da * (src[i] > 0.0 ? 1.0 : (src[i] < 0.0 ? -1.0 : 0.0));
    }
    dg[arg] += dm * (src[arg] > 0.0 ? 1.0 : (src[arg] < 0.0 ? -1.0 : 0.0));
  }
  // Adjoint of the orthonormal analysis transform.
  return idct2(Spectrum{std::move(dcoeff)});
}

namespace {

std::vector<LayerSpec> arch_layers(const std::string& arch) {
  if (arch == "small-A") {
    return {{16, 3, 2, Act::relu, -1},
            {32, 3, 2, Act::relu, -1},
            {48, 3, 2, Act::relu, -1},
            {48, 3, 1, Act::relu, -1},
            {64, 3, 2, Act::relu, -1}};
  }
  if (arch == "small-B") {
    return {{16, 3, 2, Act::relu, -1},
            {32, 3, 2, Act::relu, -1},
            {32, 3, 1, Act::relu, -1},
            {32, 3, 1, Act::relu, 1},
            {48, 3, 2, Act::relu, -1},
            {48, 3, 1, Act::relu, -1},
            {48, 3, 1, Act::relu, 4},
            {64, 3, 2, Act::relu, -1},
            {64, 3, 1, Act::relu, -1},
            {64, 3, 1, Act::relu, 7}};
  }
  throw std::invalid_argument("unknown classifier arch: " + arch);
}

}  // namespace

ArtifactClassifier::ArtifactClassifier(std::string arch, int width, int height,
                                       double log_scale, std::uint64_t seed)
    : arch_(std::move(arch)),
      width_(width),
      height_(height),
      log_scale_(log_scale),
      body_(3, arch_layers(arch_)) {
  const int c_out = body_.out_channels();
  dense_w_off_ = body_.param_count();
  dense_b_off_ = dense_w_off_ + static_cast<std::size_t>(c_out);
  params_.assign(dense_b_off_ + 1, 0.0);
  Rng rng(derive_seed(seed, "classifier-init-" + arch_));
  body_.init_params(params_.data(), rng);
  const double sd = std::sqrt(1.0 / c_out);
  for (int i = 0; i < c_out; ++i) params_[dense_w_off_ + i] = sd * rng.normal();
  params_[dense_b_off_] = 0.0;
}

double ArtifactClassifier::head_forward(const Grid& features,
                                        std::vector<Grid>* tape,
                                        std::vector<double>* pooled) const {
  if (features.height != height_ || features.width != width_ ||
      features.channels != 3)
    throw std::invalid_argument("classifier: feature resolution mismatch");
  const Grid out = body_.forward(params_.data(), features, tape);
  const std::size_t hw = static_cast<std::size_t>(out.height) * out.width;
  double logit = params_[dense_b_off_];
  if (pooled) pooled->assign(out.channels, 0.0);
  for (int c = 0; c < out.channels; ++c) {
    const double* p = out.plane(c);
    double s = 0.0;
    for (std::size_t i = 0; i < hw; ++i) s += p[i];
    const double z = s / static_cast<double>(hw);
    if (pooled) (*pooled)[c] = z;
    logit += params_[dense_w_off_ + c] * z;
  }
  return logit;
}

double ArtifactClassifier::logit_from_features(const Grid& features) const {
  return head_forward(features, nullptr, nullptr);
}

double ArtifactClassifier::predict_from_features(const Grid& features) const {
  return sigmoid(logit_from_features(features));
}

double ArtifactClassifier::predict_poisoned(const SpatialImage& image) const {
  return predict_from_features(spectral_features(image, log_scale_));
}

Grid ArtifactClassifier::input_gradient(const SpatialImage& image,
                                        double d_logit) const {
  const Grid features = spectral_features(image, log_scale_);
  std::vector<Grid> tape;
  std::vector<double> pooled;
  head_forward(features, &tape, &pooled);
  const Grid& top = tape.back();
  const std::size_t hw = static_cast<std::size_t>(top.height) * top.width;
  Grid dtop(top.height, top.width, top.channels);
  for (int c = 0; c < top.channels; ++c) {
    const double dz = d_logit * params_[dense_w_off_ + c] / static_cast<double>(hw);
    double* p = dtop.plane(c);
    for (std::size_t i = 0; i < hw; ++i) p[i] = dz;
  }
  const Grid dfeat =
      body_.backward(params_.data(), features, tape, std::move(dtop), nullptr);
  return spectral_features_backward(image, dfeat, log_scale_);
}

double ArtifactClassifier::train_step(
    const std::vector<const LabeledSpectralSample*>& batch, Adam& opt) {
  std::vector<double> grad(params_.size(), 0.0);
  double loss = 0.0;
  for (const LabeledSpectralSample* s : batch) {
    std::vector<Grid> tape;
    std::vector<double> pooled;
    const double logit = head_forward(s->features, &tape, &pooled);
    const double y = static_cast<double>(s->label);
    loss += bce_with_logit(logit, y);
    const double dlogit =
        bce_with_logit_grad(logit, y) / static_cast<double>(batch.size());

    const Grid& top = tape.back();
    const std::size_t hw = static_cast<std::size_t>(top.height) * top.width;
    for (int c = 0; c < top.channels; ++c) {
      grad[dense_w_off_ + c] += dlogit * pooled[c];
    }
    grad[dense_b_off_] += dlogit;
    Grid dtop(top.height, top.width, top.channels);
    for (int c = 0; c < top.channels; ++c) {
      const double dz =
          dlogit * params_[dense_w_off_ + c] / static_cast<double>(hw);
      double* p = dtop.plane(c);
      for (std::size_t i = 0; i < hw; ++i) p[i] = dz;
    }
    body_.backward(params_.data(), s->features, tape, std::move(dtop),
                   grad.data());
  }
  opt.step(params_, grad);
  return loss / static_cast<double>(batch.size());
}

void ArtifactClassifier::save(const std::filesystem::path& prefix,
                              const std::map<std::string, std::string>& extra)
    const {
  save_blob(prefix.string() + ".bin", params_);
  std::map<std::string, std::string> kv = extra;
  kv["model"] = "artifact-classifier";
  kv["arch"] = arch_;
  kv["width"] = std::to_string(width_);
  kv["height"] = std::to_string(height_);
  kv["log_scale"] = std::to_string(log_scale_);
  kv["params_checksum"] = to_hex(params_checksum(params_));
  save_sidecar(prefix.string() + ".meta", kv);
}

ArtifactClassifier ArtifactClassifier::load(
    const std::filesystem::path& prefix) {
  const auto kv = load_sidecar(prefix.string() + ".meta");
  if (kv.at("model") != "artifact-classifier")
    throw std::runtime_error("not a classifier checkpoint: " + prefix.string());
  ArtifactClassifier clf(kv.at("arch"), std::stoi(kv.at("width")),
                         std::stoi(kv.at("height")),
                         std::stod(kv.at("log_scale")), 0);
  std::vector<double> p = load_blob(prefix.string() + ".bin");
  if (p.size() != clf.params_.size())
    throw std::runtime_error("classifier blob size mismatch: " +
                             prefix.string());
  clf.params_ = std::move(p);
  return clf;
}

std::vector<LabeledSpectralSample> build_balanced_set(
    const DatasetManifest& clean, const std::vector<BaselineTriggerSpec>& kinds,
    double log_scale, std::uint64_t seed) {
  if (clean.records.empty())
    throw std::invalid_argument("build_balanced_set: empty manifest");
  if (kinds.empty())
    throw std::invalid_argument("build_balanced_set: no trigger kinds");

  std::vector<LabeledSpectralSample> out;
  out.reserve(clean.records.size() * 2);
  Rng seeder(derive_seed(seed, "balanced-corpus"));
  for (std::size_t i = 0; i < clean.records.size(); ++i) {
    const SpatialImage img = load_record_image(clean, clean.records[i]);

    LabeledSpectralSample neg;
    neg.features = spectral_features(img, log_scale);
    neg.label = 0;
    neg.pair_id = static_cast<int>(i);
    neg.kind = "clean";
    out.push_back(std::move(neg));

    BaselineTriggerSpec spec = kinds[i % kinds.size()];
    spec.seed = seeder.bits();
    const Perturbation pert = synth_baseline(spec, img.width(), img.height());
    const SpatialImage poisoned = embed(img, pert, true);

    LabeledSpectralSample pos;
    pos.features = spectral_features(poisoned, log_scale);
    pos.label = 1;
    pos.pair_id = static_cast<int>(i);
    pos.kind = baseline_kind_name(spec.kind);
    out.push_back(std::move(pos));
  }
  Rng rng(derive_seed(seed, "balanced-shuffle"));
  rng.shuffle(out);
  return out;
}

ArtifactClassifier train_classifier(
    const std::vector<LabeledSpectralSample>& samples, const std::string& arch,
    int width, int height, double log_scale, const ClassifierHyper& hyper,
    std::vector<double>* epoch_losses) {
  std::size_t pos = 0;
  for (const auto& s : samples) pos += s.label;
  if (pos == 0 || pos == samples.size())
    throw std::invalid_argument("train_classifier: both classes required");

  ArtifactClassifier clf(arch, width, height, log_scale, hyper.seed);
  Adam opt(clf.params().size(), hyper.lr);
  Rng rng(derive_seed(hyper.seed, "classifier-batches-" + arch));
  std::vector<std::size_t> order(samples.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(hyper.batch)) {
      std::vector<const LabeledSpectralSample*> batch;
      for (std::size_t i = start;
           i < std::min(order.size(), start + hyper.batch); ++i) {
        batch.push_back(&samples[order[i]]);
      }
      epoch_loss += clf.train_step(batch, opt);
      ++batches;
    }
    if (epoch_losses)
      epoch_losses->push_back(epoch_loss / static_cast<double>(batches));
  }
  return clf;
}

BinaryMetrics evaluate_classifier(
    const ArtifactClassifier& clf,
    const std::vector<LabeledSpectralSample>& samples) {
  if (samples.empty())
    throw std::invalid_argument("evaluate_classifier: empty set");
  std::size_t tp = 0, fp = 0, fn = 0, tn = 0;
  for (const auto& s : samples) {
    const bool pred = clf.predict_from_features(s.features) >= 0.5;
    if (pred && s.label == 1) ++tp;
    else if (pred && s.label == 0) ++fp;
    else if (!pred && s.label == 1) ++fn;
    else ++tn;
  }
  BinaryMetrics m;
  const double n = static_cast<double>(samples.size());
  m.accuracy = static_cast<double>(tp + tn) / n;
  m.precision = (tp + fp) > 0 ? static_cast<double>(tp) / (tp + fp) : 0.0;
  m.recall = (tp + fn) > 0 ? static_cast<double>(tp) / (tp + fn) : 0.0;
  m.f1 = (m.precision + m.recall) > 0.0
             ? 2.0 * m.precision * m.recall / (m.precision + m.recall)
             : 0.0;
  return m;
}

}  // namespace twintrigger
