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
#include <map>

#include "twintrigger/dct.hpp"
#include "twintrigger/shapley.hpp"

using namespace twintrigger;

namespace {

// Fixed image whose dct coefficients are nonzero in every 2x2 patch.
SpatialImage fixture_image() {
  SpatialImage img;
  img.pixels = Grid(8, 8, 1);
  for (int y = 0; y < 8; ++y)
    for (int x = 0; x < 8; ++x)
      img.pixels.at(0, y, x) =
          0.5 + 0.3 * std::sin(0.9 * y) * std::cos(1.3 * x + 0.2);
  return img;
}

}  // namespace

TEST_CASE("mask render keeps the full image when all patches present") {
  const SpatialImage img = fixture_image();
  Spectrum s = dct2(img);
  const SpatialImage full = mask_render(s, 2, 0xF);
  for (std::size_t i = 0; i < img.pixels.v.size(); ++i)
    CHECK(full.pixels.v[i] ==
          doctest::Approx(img.pixels.v[i]).epsilon(0.0).scale(1e-9));
  // Empty mask renders a clipped all-zero reconstruction.
  const SpatialImage none = mask_render(s, 2, 0x0);
  for (double v : none.pixels.v) CHECK(v == doctest::Approx(0.0));
}

TEST_CASE("two-player game with interaction matches the closed form") {
  // v = 3 [p00] + 5 [p01] + 10 [p00][p01]. Uniform-over-subsets marginals:
  // phi(p00) = 3 + 10/2 = 8, phi(p01) = 5 + 10/2 = 10, others 0.
  const SpatialImage img = fixture_image();
  const Spectrum full = dct2(img);
  auto patch_energy = [](const Spectrum& s, int pi, int pj) {
    double acc = 0.0;
    for (int u = 0; u < 4; ++u)
      for (int v = 0; v < 4; ++v) {
        const double x = s.coeff.at(0, pi * 4 + u, pj * 4 + v);
        acc += x * x;
      }
    return acc;
  };
  const double e00 = patch_energy(full, 0, 0);
  const double e01 = patch_energy(full, 0, 1);
  auto value = [&](const SpatialImage& si) {
    const Spectrum s = dct2(si);
    const bool p00 = patch_energy(s, 0, 0) > 0.5 * e00;
    const bool p01 = patch_energy(s, 0, 1) > 0.5 * e01;
    return 3.0 * p00 + 5.0 * p01 + 10.0 * (p00 && p01);
  };
  const AttributionResult exact = attribution_exact(img, value, 2);
  CHECK(exact.method == "exact");
  CHECK(exact.raw[0] == doctest::Approx(8.0).epsilon(1e-12));
  CHECK(exact.raw[1] == doctest::Approx(10.0).epsilon(1e-12));
  CHECK(exact.raw[2] == doctest::Approx(0.0));
  CHECK(exact.raw[3] == doctest::Approx(0.0));
  // Normalized distribution follows |raw|.
  CHECK(exact.distribution[0] == doctest::Approx(8.0 / 18.0).epsilon(1e-12));
  CHECK(exact.distribution[1] == doctest::Approx(10.0 / 18.0).epsilon(1e-12));
}

TEST_CASE("exhaustive sampling reproduces exact attribution bit for bit") {
  const SpatialImage img = fixture_image();
  auto value = [](const SpatialImage& si) {
    double acc = 0.0;
    for (std::size_t i = 0; i < si.pixels.v.size(); ++i)
      acc += si.pixels.v[i] * ((i % 7) - 3.0) * 0.11;
    return acc;
  };
  const AttributionResult exact = attribution_exact(img, value, 2);
  const AttributionResult mc =
      attribution_sampled(img, value, 2, 1, 42, /*exhaustive=*/true);
  REQUIRE(exact.raw.size() == mc.raw.size());
  for (std::size_t i = 0; i < exact.raw.size(); ++i)
    CHECK(exact.raw[i] == mc.raw[i]);  // bitwise
}

TEST_CASE("null player receives zero attribution") {
  const SpatialImage img = fixture_image();
  const Spectrum s = dct2(img);
  // Value reads only the top-left patch's reconstruction: the other three
  // patches are null players.
  auto value = [&](const SpatialImage& si) {
    double acc = 0.0;
    const Grid g = dct2(si.pixels);
    for (int u = 0; u < 4; ++u)
      for (int v = 0; v < 4; ++v) acc += g.at(0, u, v) * (1.0 + 0.1 * u * v);
    return acc;
  };
  const AttributionResult exact = attribution_exact(img, value, 2);
  CHECK(std::abs(exact.raw[1]) < 1e-9);
  CHECK(std::abs(exact.raw[2]) < 1e-9);
  CHECK(std::abs(exact.raw[3]) < 1e-9);
  CHECK(std::abs(exact.raw[0]) > 1e-6);
}

TEST_CASE("sampled attribution approaches exact with many draws") {
  const SpatialImage img = fixture_image();
  auto value = [](const SpatialImage& si) {
    double acc = 0.0;
    for (std::size_t i = 0; i < si.pixels.v.size(); ++i)
      acc += si.pixels.v[i] * std::cos(0.31 * static_cast<double>(i));
    return acc * acc * 0.05;
  };
  const AttributionResult exact = attribution_exact(img, value, 2);
  const AttributionResult mc = attribution_sampled(img, value, 2, 600, 7);
  for (std::size_t i = 0; i < exact.raw.size(); ++i)
    CHECK(mc.raw[i] == doctest::Approx(exact.raw[i]).epsilon(0.15));
}

TEST_CASE("normalize distribution and tv distance") {
  const auto d = normalize_distribution({1.0, -3.0});
  CHECK(d[0] == doctest::Approx(0.25));
  CHECK(d[1] == doctest::Approx(0.75));
  CHECK_THROWS(normalize_distribution({}));
  CHECK_THROWS(normalize_distribution({0.0, 0.0}));
  CHECK(tv_distance({0.25, 0.75}, {0.75, 0.25}) == doctest::Approx(0.5));
  CHECK(tv_distance({0.5, 0.5}, {0.5, 0.5}) == doctest::Approx(0.0));
}

TEST_CASE("triad distances order as labeled") {
  AttributionResult clean, inv, vis;
  clean.distribution = {0.7, 0.1, 0.1, 0.1};
  inv.distribution = {0.1, 0.6, 0.2, 0.1};
  vis.distribution = {0.1, 0.5, 0.3, 0.1};
  const TriadDistances d = compare_triad(clean, inv, vis);
  CHECK(d.inv_vis == doctest::Approx(tv_distance(inv.distribution,
                                                 vis.distribution)));
  CHECK(d.inv_clean == doctest::Approx(tv_distance(inv.distribution,
                                                   clean.distribution)));
  CHECK(d.inv_vis < d.inv_clean);
}

TEST_CASE("frequency order walks diagonals from dc") {
  const auto ord = frequency_order(2);
  REQUIRE(ord.size() == 4);
  CHECK(ord[0] == 0);          // (0,0)
  CHECK(ord[1] == 1);          // (0,1) before (1,0) within the diagonal
  CHECK(ord[2] == 2);
  CHECK(ord[3] == 3);
  const auto ord3 = frequency_order(3);
  REQUIRE(ord3.size() == 9);
  CHECK(ord3[0] == 0);
  CHECK(ord3.back() == 8);  // (2,2) last
}

TEST_CASE("attribution cap rejects oversized exhaustive requests") {
  const SpatialImage img = fixture_image();
  auto value = [](const SpatialImage&) { return 0.0; };
  CHECK_THROWS(attribution_exact(img, value, 4, /*enumeration_cap=*/64));
}
