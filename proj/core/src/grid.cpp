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
#include "twintrigger/grid.hpp"

#include <algorithm>
#include <cmath>

namespace twintrigger {

bool Grid::all_finite() const {
  for (double x : v) {
    if (!std::isfinite(x)) return false;
  }
  return true;
}

double Grid::max_abs() const {
  double m = 0.0;
  for (double x : v) m = std::max(m, std::abs(x));
  return m;
}

double Grid::energy() const {
  double e = 0.0;
  for (double x : v) e += x * x;
  return e;
}

namespace {
void require_same_shape(const Grid& a, const Grid& b) {
  if (!a.same_shape(b)) throw std::invalid_argument("grid shape mismatch");
}
}  // namespace

Grid operator+(const Grid& a, const Grid& b) {
  require_same_shape(a, b);
  Grid out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += b.v[i];
  return out;
}

Grid operator-(const Grid& a, const Grid& b) {
  require_same_shape(a, b);
  Grid out = a;
  for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] -= b.v[i];
  return out;
}

Grid operator*(const Grid& a, double s) {
  Grid out = a;
  for (double& x : out.v) x *= s;
  return out;
}

SpatialImage make_image(Grid g) {
  SpatialImage img{std::move(g)};
  validate_image(img);
  return img;
}

SpatialImage clip_to_image(Grid g) {
  if (!g.all_finite()) throw std::invalid_argument("non-finite pixel values");
  for (double& x : g.v) x = std::clamp(x, 0.0, 1.0);
  return make_image(std::move(g));
}

void validate_image(const SpatialImage& img) {
  const Grid& g = img.pixels;
  if (g.width < 1 || g.height < 1) throw std::invalid_argument("empty image");
  if (g.channels != 1 && g.channels != 3)
    throw std::invalid_argument("channels must be 1 or 3");
  for (double x : g.v) {
    if (!std::isfinite(x)) throw std::invalid_argument("non-finite pixel");
    if (x < 0.0 || x > 1.0)
      throw std::invalid_argument("pixel outside [0,1]");
  }
}

void validate_spectrum(const Spectrum& s) {
  const Grid& g = s.coeff;
  if (g.width < 1 || g.height < 1)
    throw std::invalid_argument("empty spectrum");
  if (g.channels != 1 && g.channels != 3)
    throw std::invalid_argument("channels must be 1 or 3");
  if (!g.all_finite()) throw std::invalid_argument("non-finite coefficient");
}

}  // namespace twintrigger
