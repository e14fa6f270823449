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

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace twintrigger {

// Planar real-valued grid: channels * height * width doubles, channel-major.
// The shared tensor type for images, spectra and network activations.
struct Grid {
  int height = 0;
  int width = 0;
  int channels = 0;
  std::vector<double> v;

  Grid() = default;
  Grid(int h, int w, int c, double fill = 0.0)
      : height(h), width(w), channels(c),
        v(static_cast<std::size_t>(h) * w * c, fill) {}

  std::size_t size() const { return v.size(); }
  bool empty() const { return v.empty(); }

  double& at(int c, int y, int x) {
    return v[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  double at(int c, int y, int x) const {
    return v[(static_cast<std::size_t>(c) * height + y) * width + x];
  }
  // Start of one channel plane (height*width contiguous doubles).
  double* plane(int c) {
    return v.data() + static_cast<std::size_t>(c) * height * width;
  }
  const double* plane(int c) const {
    return v.data() + static_cast<std::size_t>(c) * height * width;
  }

  bool same_shape(const Grid& o) const {
    return height == o.height && width == o.width && channels == o.channels;
  }

  bool all_finite() const;
  double max_abs() const;
  // Sum of squared entries.
  double energy() const;
};

Grid operator+(const Grid& a, const Grid& b);
Grid operator-(const Grid& a, const Grid& b);
Grid operator*(const Grid& a, double s);

// An image in pixel space. Invariant: finite values in [0,1],
// width/height >= 1, channels in {1,3}.
struct SpatialImage {
  Grid pixels;

  int height() const { return pixels.height; }
  int width() const { return pixels.width; }
  int channels() const { return pixels.channels; }
};

// Per-channel DCT coefficient grid of the same shape as its source image.
struct Spectrum {
  Grid coeff;

  int height() const { return coeff.height; }
  int width() const { return coeff.width; }
  int channels() const { return coeff.channels; }
};

// Index of a single-pixel (spatial) or single-coefficient (frequency) basis.
struct BasisIndex {
  int i = 0;  // row, 0..h-1
  int j = 0;  // column, 0..w-1
};

// Throws std::invalid_argument unless `g` satisfies the SpatialImage
// invariants; returns the wrapped image otherwise.
SpatialImage make_image(Grid g);

// Clamp every entry into [0,1] and wrap. Non-finite values are rejected.
SpatialImage clip_to_image(Grid g);

void validate_image(const SpatialImage& img);
void validate_spectrum(const Spectrum& s);

}  // namespace twintrigger
