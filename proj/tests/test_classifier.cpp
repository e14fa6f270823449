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
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>
#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include "twintrigger/baseline.hpp"
#include "twintrigger/classifier.hpp"
#include "twintrigger/rng.hpp"
#include "twintrigger/synth.hpp"

using namespace twintrigger;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("twintrigger-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SpatialImage random_image(int w, int h, std::uint64_t seed) {
  SpatialImage img;
  img.pixels = Grid(h, w, 3);
  Rng rng(seed);
  for (double& v : img.pixels.v) v = rng.uniform();
  return img;
}

constexpr double kLogScale = 200.0;

}  // namespace

TEST_CASE("spectral features live in [0,1] and peak at the channel maximum") {
  const SpatialImage img = random_image(16, 12, 41);
  const Grid feat = spectral_features(img, kLogScale);
  CHECK(feat.width == 16);
  CHECK(feat.height == 12);
  CHECK(feat.channels == 3);
  for (int c = 0; c < 3; ++c) {
    double top = 0.0;
    for (int y = 0; y < feat.height; ++y)
      for (int x = 0; x < feat.width; ++x) {
        const double v = feat.at(c, y, x);
        CHECK(v >= 0.0);
        CHECK(v <= 1.0 + 1e-12);
        top = std::max(top, v);
      }
    // The max-normalized coefficient maps to exactly 1.
    CHECK(top == doctest::Approx(1.0).epsilon(1e-12));
  }
}

TEST_CASE("spectral features are invariant to global brightness scaling") {
  const SpatialImage img = random_image(16, 16, 42);
  SpatialImage dimmed = img;
  for (double& v : dimmed.pixels.v) v *= 0.37;
  const Grid a = spectral_features(img, kLogScale);
  const Grid b = spectral_features(dimmed, kLogScale);
  for (std::size_t i = 0; i < a.v.size(); ++i)
    CHECK(a.v[i] == doctest::Approx(b.v[i]).epsilon(1e-9));
}

TEST_CASE("spectral features of an all-zero image are all zero") {
  SpatialImage img;
  img.pixels = Grid(8, 8, 3);
  const Grid feat = spectral_features(img, kLogScale);
  for (double v : feat.v) CHECK(v == 0.0);
}

TEST_CASE("spectral features reject a non-positive log scale") {
  const SpatialImage img = random_image(8, 8, 43);
  CHECK_THROWS_AS(spectral_features(img, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(spectral_features(img, -1.0), std::invalid_argument);
}

TEST_CASE("spectral feature backward matches finite differences") {
  const int w = 10, h = 8;
  const SpatialImage img = random_image(w, h, 44);
  Rng rng(45);
  Grid dfeat(h, w, 3);
  for (double& v : dfeat.v) v = rng.uniform() - 0.5;

  auto loss = [&](const SpatialImage& x) {
    const Grid f = spectral_features(x, kLogScale);
    double s = 0.0;
    for (std::size_t i = 0; i < f.v.size(); ++i) s += f.v[i] * dfeat.v[i];
    return s;
  };

  const Grid grad = spectral_features_backward(img, dfeat, kLogScale);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < img.pixels.v.size(); i += 17) {
    SpatialImage up = img, dn = img;
    up.pixels.v[i] += eps;
    dn.pixels.v[i] -= eps;
    const double fd = (loss(up) - loss(dn)) / (2.0 * eps);
    CHECK(grad.v[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("classifier input gradient matches finite differences") {
  const int w = 12, h = 12;
  ArtifactClassifier clf("small-A", w, h, kLogScale, 7);
  const SpatialImage img = random_image(w, h, 46);

  auto logit = [&](const SpatialImage& x) {
    return clf.logit_from_features(spectral_features(x, kLogScale));
  };

  const Grid grad = clf.input_gradient(img, 1.0);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < img.pixels.v.size(); i += 29) {
    SpatialImage up = img, dn = img;
    up.pixels.v[i] += eps;
    dn.pixels.v[i] -= eps;
    const double fd = (logit(up) - logit(dn)) / (2.0 * eps);
    CHECK(grad.v[i] == doctest::Approx(fd).epsilon(2e-4).scale(1.0));
  }
}

TEST_CASE("balanced set pairs every clean image with one poisoned twin") {
  const fs::path dir = fresh_dir("clf-balanced");
  SynthConfig cfg;
  cfg.num_images = 6;
  cfg.width = 48;
  cfg.height = 48;
  cfg.seed = 9;
  const DatasetManifest m = generate_synthetic(cfg, dir);

  std::vector<BaselineTriggerSpec> kinds(2);
  kinds[0].kind = BaselineKind::white_block;
  kinds[1].kind = BaselineKind::gaussian_noise;

  const auto set = build_balanced_set(m, kinds, kLogScale, 13);
  REQUIRE(set.size() == 12);
  int pos = 0, neg = 0;
  std::map<int, std::set<int>> by_pair;
  std::map<std::string, int> kind_counts;
  for (const auto& s : set) {
    (s.label == 1 ? pos : neg)++;
    by_pair[s.pair_id].insert(s.label);
    if (s.label == 1) kind_counts[s.kind]++;
    if (s.label == 0) CHECK(s.kind == "clean");
  }
  CHECK(pos == 6);
  CHECK(neg == 6);
  // Every pair id carries exactly one clean and one poisoned sample.
  CHECK(by_pair.size() == 6);
  for (const auto& [id, labels] : by_pair) CHECK(labels.size() == 2);
  // Round-robin kinds: 6 positives over 2 kinds -> 3 each.
  CHECK(kind_counts.size() == 2);
  for (const auto& [k, n] : kind_counts) CHECK(n == 3);

  const auto rerun = build_balanced_set(m, kinds, kLogScale, 13);
  REQUIRE(rerun.size() == set.size());
  for (std::size_t i = 0; i < set.size(); ++i) {
    CHECK(rerun[i].label == set[i].label);
    CHECK(rerun[i].pair_id == set[i].pair_id);
    CHECK(rerun[i].features.v == set[i].features.v);
  }

  const auto other = build_balanced_set(m, kinds, kLogScale, 14);
  bool same_order = true;
  for (std::size_t i = 0; i < set.size(); ++i)
    same_order = same_order && other[i].pair_id == set[i].pair_id &&
                 other[i].label == set[i].label;
  CHECK_FALSE(same_order);
}

TEST_CASE("training separates an easy synthetic feature split") {
  // Hand-built features: positives carry energy in the high-band corner,
  // negatives near DC. A few epochs must reach high accuracy.
  const int w = 12, h = 12;
  std::vector<LabeledSpectralSample> samples;
  Rng rng(99);
  for (int i = 0; i < 40; ++i) {
    LabeledSpectralSample s;
    s.label = i % 2;
    s.pair_id = i / 2;
    s.kind = s.label ? "block" : "clean";
    s.features = Grid(h, w, 3);
    for (double& v : s.features.v) v = 0.05 * rng.uniform();
    for (int c = 0; c < 3; ++c) {
      if (s.label)
        s.features.at(c, h - 1, w - 1) = 0.9 + 0.1 * rng.uniform();
      else
        s.features.at(c, 0, 0) = 0.9 + 0.1 * rng.uniform();
    }
    samples.push_back(std::move(s));
  }
  ClassifierHyper hyper;
  hyper.epochs = 30;
  hyper.batch = 8;
  hyper.seed = 3;
  std::vector<double> losses;
  const ArtifactClassifier clf =
      train_classifier(samples, "small-A", w, h, kLogScale, hyper, &losses);
  CHECK(losses.size() == 30);
  CHECK(losses.back() < losses.front());
  const BinaryMetrics metrics = evaluate_classifier(clf, samples);
  CHECK(metrics.accuracy >= 0.9);
  CHECK(metrics.f1 >= 0.9);
}

TEST_CASE("training rejects single-class input") {
  std::vector<LabeledSpectralSample> samples(4);
  for (auto& s : samples) {
    s.features = Grid(8, 8, 3);
    s.label = 1;
  }
  ClassifierHyper hyper;
  CHECK_THROWS_AS(train_classifier(samples, "small-A", 8, 8, kLogScale, hyper),
                  std::invalid_argument);
}

TEST_CASE("the two architectures are distinct networks") {
  ArtifactClassifier a("small-A", 16, 16, kLogScale, 1);
  ArtifactClassifier b("small-B", 16, 16, kLogScale, 1);
  CHECK(a.params().size() != b.params().size());
  CHECK_THROWS_AS(ArtifactClassifier("small-C", 16, 16, kLogScale, 1),
                  std::invalid_argument);
}

TEST_CASE("classifier save and load round trip") {
  const fs::path dir = fresh_dir("clf-save");
  ArtifactClassifier clf("small-B", 12, 12, kLogScale, 21);
  Rng rng(22);
  for (double& p : clf.params()) p += 0.01 * (rng.uniform() - 0.5);
  clf.save(dir / "clf", {{"arch", "small-B"}});

  const ArtifactClassifier back = ArtifactClassifier::load(dir / "clf");
  CHECK(back.arch() == "small-B");
  CHECK(back.width() == 12);
  CHECK(back.height() == 12);
  CHECK(back.log_scale() == doctest::Approx(kLogScale).epsilon(1e-15));
  REQUIRE(back.params().size() == clf.params().size());
  for (std::size_t i = 0; i < clf.params().size(); ++i)
    CHECK(back.params()[i] == clf.params()[i]);

  const SpatialImage img = random_image(12, 12, 23);
  CHECK(back.predict_poisoned(img) ==
        doctest::Approx(clf.predict_poisoned(img)).epsilon(1e-15));
}
