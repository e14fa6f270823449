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

#include "twintrigger/dct.hpp"
#include "twintrigger/grid.hpp"
#include "twintrigger/rng.hpp"

using namespace twintrigger;

namespace {

Grid random_grid(int h, int w, int c, std::uint64_t seed) {
  Grid g(h, w, c);
  Rng rng(seed);
  for (double& v : g.v) v = rng.uniform(0.0, 1.0);
  return g;
}

}  // namespace

TEST_CASE("dct matrix is orthonormal") {
  for (int n : {2, 4, 8, 16, 33}) {
    const Eigen::MatrixXd& b = dct_matrix(n);
    const Eigen::MatrixXd eye = b * b.transpose();
    double worst = 0.0;
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < n; ++j)
        worst = std::max(worst, std::abs(eye(i, j) - (i == j ? 1.0 : 0.0)));
    CHECK(worst < 1e-12);
  }
}

TEST_CASE("dct2 matches reference values on a fixed 4x4 input") {
  // Frozen output of an orthonormal type-II DCT oracle for this matrix.
  const double input[4][4] = {{0.0, 0.25, 0.5, 0.75},
                              {0.1, 0.35, 0.6, 0.85},
                              {0.2, 0.45, 0.7, 0.95},
                              {0.3, 0.55, 0.8, 1.05}};
  const double want[4][4] = {
      {2.100000000000001, -1.115221248693832, 0.0, -0.079256333890554},
      {-0.446088499477533, 0.0, 0.0, 0.0},
      {0.0, 0.0, 0.0, 0.0},
      {-0.031702533556221, 0.0, 0.0, 0.0}};
  Grid x(4, 4, 1);
  for (int y = 0; y < 4; ++y)
    for (int c = 0; c < 4; ++c) x.at(0, y, c) = input[y][c];
  const Grid g = dct2(x);
  for (int u = 0; u < 4; ++u)
    for (int v = 0; v < 4; ++v)
      CHECK(g.at(0, u, v) == doctest::Approx(want[u][v]).epsilon(0.0).scale(1e-12));
}

TEST_CASE("round trip reconstructs the image") {
  for (int n : {7, 16, 64}) {
    const Grid x = random_grid(n, n + 3, 3, 101 + n);
    const Grid back = idct2(dct2(x));
    double worst = 0.0;
    for (std::size_t i = 0; i < x.v.size(); ++i)
      worst = std::max(worst, std::abs(back.v[i] - x.v[i]));
    CHECK(worst < 1e-6);
  }
}

TEST_CASE("parseval energy is preserved") {
  const Grid x = random_grid(32, 48, 3, 7);
  const Grid g = dct2(x);
  CHECK(std::abs(g.energy() - x.energy()) / x.energy() < 1e-9);
}

TEST_CASE("basis rows alternate sign under reflection") {
  // h_u(n-1-x) = (-1)^u h_u(x) for every width up to 64.
  for (int n : {4, 8, 16, 64}) {
    const Eigen::MatrixXd& b = dct_matrix(n);
    for (int u = 0; u < n; ++u) {
      const double sign = (u % 2 == 0) ? 1.0 : -1.0;
      for (int x = 0; x < n; ++x)
        CHECK(b(u, n - 1 - x) == doctest::Approx(sign * b(u, x)).epsilon(1e-12));
    }
  }
}

TEST_CASE("corner pixel spectra differ by the sign pattern") {
  for (int n : {8, 16}) {
    const Spectrum g00 = basis_spectrum({0, 0}, n, n);
    const Spectrum gn0 = basis_spectrum({n - 1, 0}, n, n);
    const Spectrum g0n = basis_spectrum({0, n - 1}, n, n);
    for (int u = 0; u < n; ++u)
      for (int v = 0; v < n; ++v) {
        const double su = (u % 2 == 0) ? 1.0 : -1.0;
        const double sv = (v % 2 == 0) ? 1.0 : -1.0;
        CHECK(gn0.coeff.at(0, u, v) ==
              doctest::Approx(su * g00.coeff.at(0, u, v)).epsilon(1e-12));
        CHECK(g0n.coeff.at(0, u, v) ==
              doctest::Approx(sv * g00.coeff.at(0, u, v)).epsilon(1e-12));
      }
  }
}

TEST_CASE("basis spectrum matches the transform of the basis image") {
  const int n = 8;
  for (int i : {0, 3, 7})
    for (int j : {0, 5}) {
      const SpatialImage img = basis_spatial({i, j}, n, n);
      const Grid direct = dct2(img.pixels);
      const Spectrum closed = basis_spectrum({i, j}, n, n);
      for (std::size_t k = 0; k < direct.v.size(); ++k)
        CHECK(direct.v[k] == doctest::Approx(closed.coeff.v[k]).epsilon(0.0).scale(1e-12));
    }
}

TEST_CASE("dc-only spectrum renders a constant image") {
  Spectrum s;
  s.coeff = Grid(16, 16, 3);
  s.coeff.at(0, 0, 0) = 3.7;
  s.coeff.at(1, 0, 0) = -1.2;
  s.coeff.at(2, 0, 0) = 0.5;
  const Grid out = idct2(s.coeff);
  for (int c = 0; c < 3; ++c) {
    double mean = 0.0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) mean += out.at(c, y, x);
    mean /= 256.0;
    double var = 0.0;
    for (int y = 0; y < 16; ++y)
      for (int x = 0; x < 16; ++x) {
        const double d = out.at(c, y, x) - mean;
        var += d * d;
      }
    CHECK(std::sqrt(var / 256.0) < 1e-9);
  }
}

TEST_CASE("gaussian lowpass applies the frozen attenuation") {
  Spectrum s;
  s.coeff = Grid(8, 8, 1);
  s.coeff.at(0, 3, 4) = 1.0;
  s.coeff.at(0, 0, 0) = 2.0;
  const Spectrum out = gaussian_lowpass(s, 2.0);
  CHECK(out.coeff.at(0, 3, 4) ==
        doctest::Approx(0.04393693362340741).epsilon(1e-12));
  CHECK(out.coeff.at(0, 0, 0) == doctest::Approx(2.0).epsilon(1e-15));
}

TEST_CASE("gaussian lowpass backward is the same mask") {
  Grid d(8, 8, 1);
  d.at(0, 3, 4) = 1.0;
  const Grid back = gaussian_lowpass_backward(d, 2.0);
  CHECK(back.at(0, 3, 4) ==
        doctest::Approx(0.04393693362340741).epsilon(1e-12));
}

TEST_CASE("band energy partitions the spectrum") {
  const Grid x = random_grid(16, 16, 3, 13);
  Spectrum s;
  s.coeff = dct2(x);
  const double lo = band_energy(s, 0.0, 4.0);
  const double hi = band_energy(s, 4.0, 1e9);
  CHECK(lo + hi == doctest::Approx(s.coeff.energy()).epsilon(1e-12));
  CHECK(band_energy(s, 0.0, 1e9) ==
        doctest::Approx(s.coeff.energy()).epsilon(1e-12));
}

TEST_CASE("shannon entropy matches the frozen value") {
  Grid g(2, 2, 1);
  g.v = {1.0, -2.0, 3.0, -4.0};
  CHECK(shannon_entropy(g) == doctest::Approx(1.2798542258336676).epsilon(1e-12));
  CHECK(shannon_entropy(Grid(4, 4, 1)) == 0.0);
}

TEST_CASE("spectrum heatmap is normalized and single channel") {
  const Grid x = random_grid(16, 16, 3, 29);
  Spectrum s;
  s.coeff = dct2(x);
  const Grid hm = spectrum_heatmap(s);
  CHECK(hm.channels == 1);
  CHECK(hm.height == 16);
  CHECK(hm.max_abs() == doctest::Approx(1.0).epsilon(1e-12));
  for (double v : hm.v) CHECK(v >= 0.0);
}
