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
#include <cmath>
#include <doctest.h>

#include "twintrigger/baseline.hpp"
#include "twintrigger/dct.hpp"

using namespace twintrigger;

namespace {

SpatialImage flat_image(int n, double level) {
  SpatialImage img;
  img.pixels = Grid(n, n, 3, level);
  return img;
}

}  // namespace

TEST_CASE("kind names round trip") {
  for (BaselineKind k : {BaselineKind::white_block, BaselineKind::gaussian_noise,
                         BaselineKind::shadow, BaselineKind::blend})
    CHECK(baseline_kind_from_name(baseline_kind_name(k)) == k);
  CHECK_THROWS(baseline_kind_from_name("no-such-kind"));
}

TEST_CASE("white block paints a saturated square") {
  BaselineTriggerSpec spec;
  spec.kind = BaselineKind::white_block;
  spec.block_size = 8;
  spec.block_x = 4;
  spec.block_y = 6;
  const Perturbation p = synth_baseline(spec, 32, 32);
  CHECK(p.mode == PerturbMode::paint);
  const SpatialImage out = embed(flat_image(32, 0.2), p, true);
  for (int c = 0; c < 3; ++c) {
    CHECK(out.pixels.at(c, 6, 4) == doctest::Approx(1.0));
    CHECK(out.pixels.at(c, 13, 11) == doctest::Approx(1.0));
    CHECK(out.pixels.at(c, 5, 4) == doctest::Approx(0.2));
    CHECK(out.pixels.at(c, 6, 3) == doctest::Approx(0.2));
    CHECK(out.pixels.at(c, 14, 12) == doctest::Approx(0.2));
  }
}

TEST_CASE("gaussian noise is deterministic per seed") {
  BaselineTriggerSpec spec;
  spec.kind = BaselineKind::gaussian_noise;
  spec.noise_sigma = 0.05;
  spec.seed = 9;
  const Perturbation p1 = synth_baseline(spec, 16, 16);
  const Perturbation p2 = synth_baseline(spec, 16, 16);
  CHECK(p1.mode == PerturbMode::add);
  CHECK(p1.field.v == p2.field.v);
  spec.seed = 10;
  const Perturbation p3 = synth_baseline(spec, 16, 16);
  CHECK_FALSE(p1.field.v == p3.field.v);
  // Field statistics near the configured sigma.
  double acc = 0.0;
  for (double v : p1.field.v) acc += v * v;
  const double rms = std::sqrt(acc / p1.field.v.size());
  CHECK(rms == doctest::Approx(0.05).epsilon(0.25));
}

TEST_CASE("shadow darkens only the masked region") {
  BaselineTriggerSpec spec;
  spec.kind = BaselineKind::shadow;
  spec.shadow_min = 0.4;
  spec.shadow_max = 0.4;
  spec.seed = 3;
  const Perturbation p = synth_baseline(spec, 32, 32);
  CHECK(p.mode == PerturbMode::shade);
  CHECK(p.factor == doctest::Approx(0.4));
  const SpatialImage out = embed(flat_image(32, 0.5), p, true);
  bool saw_shaded = false, saw_clear = false;
  for (int y = 0; y < 32; ++y)
    for (int x = 0; x < 32; ++x) {
      const double v = out.pixels.at(0, y, x);
      if (std::abs(v - 0.2) < 1e-9) saw_shaded = true;
      if (std::abs(v - 0.5) < 1e-9) saw_clear = true;
    }
  CHECK(saw_shaded);
  CHECK(saw_clear);
}

TEST_CASE("blend mixes toward the pattern") {
  BaselineTriggerSpec spec;
  spec.kind = BaselineKind::blend;
  spec.alpha = 0.25;
  const Perturbation p = synth_baseline(spec, 16, 16);
  CHECK(p.mode == PerturbMode::blend);
  CHECK(p.alpha == doctest::Approx(0.25));
  const SpatialImage base = flat_image(16, 0.4);
  const SpatialImage out = embed(base, p, true);
  for (int y = 0; y < 16; ++y)
    for (int x = 0; x < 16; ++x) {
      const double want =
          0.75 * 0.4 + 0.25 * p.field.at(0, y, x);
      CHECK(out.pixels.at(0, y, x) == doctest::Approx(want).epsilon(1e-9));
    }
}

TEST_CASE("additive embed is exact without clipping") {
  Grid delta(8, 8, 3);
  delta.at(1, 2, 3) = 0.4;
  delta.at(2, 7, 7) = -0.9;
  const SpatialImage base = flat_image(8, 0.5);
  const SpatialImage raw = embed(base, additive_perturbation(delta), false);
  CHECK(raw.pixels.at(1, 2, 3) == doctest::Approx(0.9));
  CHECK(raw.pixels.at(2, 7, 7) == doctest::Approx(-0.4));
  const SpatialImage clipped = embed(base, additive_perturbation(delta), true);
  CHECK(clipped.pixels.at(2, 7, 7) == doctest::Approx(0.0));
  for (double v : clipped.pixels.v) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("procedural pattern is stable and in range") {
  const Grid a = procedural_pattern(24, 16);
  const Grid b = procedural_pattern(24, 16);
  CHECK(a.v == b.v);
  CHECK(a.channels == 3);
  CHECK(a.height == 16);
  for (double v : a.v) {
    CHECK(v >= 0.0);
    CHECK(v <= 1.0);
  }
}

TEST_CASE("lowpass spreads a corner-concentrated spectrum across the canvas") {
  // A block of coefficients packed into the DC corner renders with ripples
  // and near-zero crossings; the sigma=1 low-pass leaves the render
  // DC-dominated, so at least 90 percent of pixels carry at least 1 percent
  // of the peak and the entropy of the spatial render strictly rises.
  const int n = 32;
  Spectrum corner;
  corner.coeff = Grid(n, n, 1);
  for (int u = 0; u < 3; ++u)
    for (int v = 0; v < 3; ++v) corner.coeff.at(0, u, v) = 1.0;
  const Grid before = idct2(corner.coeff);
  const Grid after = idct2(gaussian_lowpass(corner, 1.0).coeff);
  const double peak = after.max_abs();
  REQUIRE(peak > 0.0);
  int covered = 0;
  for (double v : after.v)
    if (std::abs(v) >= 0.01 * peak) ++covered;
  CHECK(static_cast<double>(covered) / after.v.size() >= 0.90);
  // scipy idctn oracle: entropy 6.0774347847837955 -> 6.544104744664284
  CHECK(shannon_entropy(before) == doctest::Approx(6.0774347847837955).epsilon(1e-9));
  CHECK(shannon_entropy(after) == doctest::Approx(6.544104744664284).epsilon(1e-9));
  CHECK(shannon_entropy(after) > shannon_entropy(before));
}
