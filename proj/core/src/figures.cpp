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
#include "twintrigger/figures.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "twintrigger/dct.hpp"
#include "twintrigger/pngio.hpp"

namespace twintrigger {
namespace {

void put_pixel(Grid& g, int y, int x, const std::array<double, 3>& color) {
  if (y < 0 || y >= g.height || x < 0 || x >= g.width) return;
  for (int c = 0; c < 3; ++c) g.at(c, y, x) = color[c];
}

void draw_segment(Grid& g, double y0, double x0, double y1, double x1,
                  const std::array<double, 3>& color) {
  const int steps =
      std::max(2, static_cast<int>(std::ceil(
                      2.0 * std::max(std::abs(x1 - x0), std::abs(y1 - y0)))));
  for (int s = 0; s <= steps; ++s) {
    const double t = static_cast<double>(s) / steps;
    put_pixel(g, static_cast<int>(std::lround(y0 + t * (y1 - y0))),
              static_cast<int>(std::lround(x0 + t * (x1 - x0))), color);
  }
}

}  // namespace

SpatialImage gray_to_image(const Grid& g) {
  if (g.channels != 1)
    throw std::invalid_argument("gray_to_image: expected one channel");
  Grid rgb(g.height, g.width, 3);
  for (int c = 0; c < 3; ++c)
    std::copy(g.v.begin(), g.v.end(),
              rgb.v.begin() + static_cast<std::ptrdiff_t>(c) * g.height *
                                  g.width);
  return make_image(std::move(rgb));
}

SpatialImage amplify_delta(const Grid& delta, double gain) {
  if (delta.channels != 3)
    throw std::invalid_argument("amplify_delta: expected three channels");
  Grid out = delta;
  for (double& v : out.v) v = 0.5 + gain * v;
  return clip_to_image(std::move(out));
}

std::array<double, 3> class_color(int c) {
  static const std::array<std::array<double, 3>, 6> palette{{
      {0.90, 0.20, 0.20},
      {0.15, 0.70, 0.25},
      {0.20, 0.35, 0.90},
      {0.90, 0.75, 0.15},
      {0.75, 0.25, 0.80},
      {0.15, 0.75, 0.75},
  }};
  return palette[static_cast<std::size_t>(((c % 6) + 6) % 6)];
}

SpatialImage overlay_detections(const SpatialImage& image,
                                const std::vector<DetectionBox>& boxes) {
  Grid out = image.pixels;
  for (const DetectionBox& b : boxes) {
    const auto color = class_color(b.c);
    const int x0 = static_cast<int>(std::lround(b.x));
    const int y0 = static_cast<int>(std::lround(b.y));
    const int x1 = static_cast<int>(std::lround(b.x + b.w)) - 1;
    const int y1 = static_cast<int>(std::lround(b.y + b.h)) - 1;
    for (int x = x0; x <= x1; ++x) {
      put_pixel(out, y0, x, color);
      put_pixel(out, y1, x, color);
    }
    for (int y = y0; y <= y1; ++y) {
      put_pixel(out, y, x0, color);
      put_pixel(out, y, x1, color);
    }
  }
  return make_image(std::move(out));
}

SpatialImage plot_curves(const std::vector<std::vector<double>>& series,
                         const std::vector<std::array<double, 3>>& colors,
                         int width, int height) {
  if (series.empty() || colors.size() != series.size())
    throw std::invalid_argument("plot_curves: need one color per series");
  const std::size_t points = series.front().size();
  if (points < 2)
    throw std::invalid_argument("plot_curves: need at least two points");
  for (const auto& s : series)
    if (s.size() != points)
      throw std::invalid_argument("plot_curves: ragged series");
  if (width < 64 || height < 48)
    throw std::invalid_argument("plot_curves: canvas too small");
  double y_max = 0.0;
  for (const auto& s : series)
    for (double v : s) {
      if (!std::isfinite(v) || v < 0.0)
        throw std::invalid_argument(
            "plot_curves: values must be finite and non-negative");
      y_max = std::max(y_max, v);
    }
  if (y_max == 0.0) y_max = 1.0;

  Grid canvas(height, width, 3, 1.0);
  const int margin = 12;
  const std::array<double, 3> axis{0.55, 0.55, 0.55};
  for (int x = margin; x <= width - margin; ++x) {
    put_pixel(canvas, height - margin, x, axis);
    put_pixel(canvas, margin, x, axis);
  }
  for (int y = margin; y <= height - margin; ++y) {
    put_pixel(canvas, y, margin, axis);
    put_pixel(canvas, y, width - margin, axis);
  }
  const double span_x = static_cast<double>(width - 2 * margin);
  const double span_y = static_cast<double>(height - 2 * margin);
  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    for (std::size_t i = 0; i + 1 < points; ++i) {
      const double x0 =
          margin + span_x * static_cast<double>(i) / (points - 1);
      const double x1 =
          margin + span_x * static_cast<double>(i + 1) / (points - 1);
      const double y0 = height - margin - span_y * (s[i] / y_max);
      const double y1 = height - margin - span_y * (s[i + 1] / y_max);
      draw_segment(canvas, y0, x0, y1, x1, colors[si]);
    }
  }
  return make_image(std::move(canvas));
}

void export_trigger_assets(const std::filesystem::path& dir, const Trigger& t,
                           double gain) {
  std::filesystem::create_directories(dir);
  save_trigger(dir / "trigger.trg", t);
  write_png(dir / "delta.png", amplify_delta(t.spatial, gain));
  write_png(dir / "spectrum.png", gray_to_image(spectrum_heatmap(t.spectrum)));
}

}  // namespace twintrigger
