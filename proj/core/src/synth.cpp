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
#include "twintrigger/synth.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <stdexcept>

#include "twintrigger/pngio.hpp"
#include "twintrigger/rng.hpp"

namespace twintrigger {

namespace {

bool inside_triangle(double px, double py, double ax, double ay, double bx,
                     double by, double cx, double cy) {
  const double d1 = (px - bx) * (ay - by) - (ax - bx) * (py - by);
  const double d2 = (px - cx) * (by - cy) - (bx - cx) * (py - cy);
  const double d3 = (px - ax) * (cy - ay) - (cx - ax) * (py - ay);
  const bool has_neg = d1 < 0 || d2 < 0 || d3 < 0;
  const bool has_pos = d1 > 0 || d2 > 0 || d3 > 0;
  return !(has_neg && has_pos);
}

double luminance(const std::array<double, 3>& c) {
  return 0.299 * c[0] + 0.587 * c[1] + 0.114 * c[2];
}

Grid render_background(Rng& rng, int w, int h) {
  Grid bg(h, w, 3);
  for (int c = 0; c < 3; ++c) {
    const double base = rng.uniform(0.25, 0.75);
    const double gx = rng.uniform(-0.2, 0.2);
    const double gy = rng.uniform(-0.2, 0.2);
    const double amp = rng.uniform(0.02, 0.08);
    const double fx = rng.uniform(0.5, 2.0);
    const double fy = rng.uniform(0.5, 2.0);
    const double phase = rng.uniform(0.0, 2.0 * M_PI);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double u = (x + 0.5) / w;
        const double v = (y + 0.5) / h;
        double val = base + gx * (u - 0.5) + gy * (v - 0.5) +
                     amp * std::cos(2.0 * M_PI * (fx * u + fy * v) + phase);
        bg.at(c, y, x) = std::clamp(val, 0.0, 1.0);
      }
    }
  }
  return bg;
}

}  // namespace

Grid rasterize_shape(const ShapeSpec& s, int w, int h) {
  Grid mask(h, w, 1);
  const double lat = s.size * s.aspect;
  for (int y = 0; y < h; ++y) {
    const double py = y + 0.5;
    for (int x = 0; x < w; ++x) {
      const double px = x + 0.5;
      bool in = false;
      switch (s.kind) {
        case 0:
          in = std::abs(px - s.cx) <= lat && std::abs(py - s.cy) <= s.size;
          break;
        case 1: {
          const double dx = px - s.cx;
          const double dy = py - s.cy;
          in = dx * dx + dy * dy <= s.size * s.size;
          break;
        }
        case 2:
          in = inside_triangle(px, py, s.cx, s.cy - s.size, s.cx - lat,
                               s.cy + s.size, s.cx + lat, s.cy + s.size);
          break;
        default:
          throw std::invalid_argument("rasterize_shape: unknown kind");
      }
      if (in) mask.at(0, y, x) = 1.0;
    }
  }
  return mask;
}

Annotation tight_box(const Grid& mask) {
  int min_x = mask.width, min_y = mask.height, max_x = -1, max_y = -1;
  for (int y = 0; y < mask.height; ++y) {
    for (int x = 0; x < mask.width; ++x) {
      if (mask.at(0, y, x) > 0.5) {
        min_x = std::min(min_x, x);
        min_y = std::min(min_y, y);
        max_x = std::max(max_x, x);
        max_y = std::max(max_y, y);
      }
    }
  }
  if (max_x < 0) throw std::invalid_argument("tight_box: empty mask");
  Annotation a;
  a.x = min_x;
  a.y = min_y;
  a.w = max_x - min_x + 1;
  a.h = max_y - min_y + 1;
  a.p = 1.0;
  return a;
}

double box_iou(const Annotation& a, const Annotation& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) -
                                      std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) -
                                      std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

DatasetManifest generate_synthetic(const SynthConfig& cfg,
                                   const std::filesystem::path& out_dir) {
  if (cfg.num_images < 1)
    throw std::invalid_argument("generate_synthetic: num_images must be >= 1");
  if (cfg.num_classes < 1)
    throw std::invalid_argument("generate_synthetic: K must be >= 1");
  if (cfg.min_shapes < 1 || cfg.max_shapes < cfg.min_shapes)
    throw std::invalid_argument("generate_synthetic: bad shape count range");
  const double max_half = 0.18 * std::min(cfg.width, cfg.height);
  if (max_half < 4.0)
    throw std::invalid_argument(
        "generate_synthetic: resolution too small to place shapes");

  std::filesystem::create_directories(out_dir / "images");
  Rng rng(derive_seed(cfg.seed, "synthetic-data"));

  DatasetManifest m;
  m.width = cfg.width;
  m.height = cfg.height;
  m.num_classes = cfg.num_classes;
  m.provenance["kind"] = "synthetic";
  m.provenance["seed"] = std::to_string(cfg.seed);
  m.provenance["num_images"] = std::to_string(cfg.num_images);
  m.root = out_dir;

  for (int idx = 0; idx < cfg.num_images; ++idx) {
    Grid img = render_background(rng, cfg.width, cfg.height);
    const int n_shapes = rng.uniform_int(cfg.min_shapes, cfg.max_shapes);

    DatasetRecord rec;
    char name[32];
    std::snprintf(name, sizeof(name), "images/%05d.png", idx);
    rec.image_path = name;

    for (int k = 0; k < n_shapes; ++k) {
      ShapeSpec s;
      const int cls = rng.uniform_int(0, cfg.num_classes - 1);
      s.kind = cls % 3;
      s.size = rng.uniform(0.09, 0.18) * std::min(cfg.width, cfg.height);
      s.aspect = rng.uniform(0.7, 1.3);

      bool placed = false;
      for (int attempt = 0; attempt < 20 && !placed; ++attempt) {
        const double margin = s.size * std::max(1.0, s.aspect) + 1.0;
        s.cx = rng.uniform(margin, cfg.width - margin);
        s.cy = rng.uniform(margin, cfg.height - margin);
        Grid mask = rasterize_shape(s, cfg.width, cfg.height);
        Annotation box = tight_box(mask);
        box.c = cls;
        bool ok = true;
        for (const auto& prev : rec.annotations) {
          if (box_iou(box, prev) > 0.7) {
            ok = false;
            break;
          }
        }
        if (!ok) continue;

        for (int tries = 0; tries < 8; ++tries) {
          for (double& ch : s.color) ch = rng.uniform(0.0, 1.0);
          std::array<double, 3> under{
              img.at(0, static_cast<int>(s.cy), static_cast<int>(s.cx)),
              img.at(1, static_cast<int>(s.cy), static_cast<int>(s.cx)),
              img.at(2, static_cast<int>(s.cy), static_cast<int>(s.cx))};
          if (std::abs(luminance(s.color) - luminance(under)) >= 0.25) break;
        }
        for (int y = 0; y < cfg.height; ++y) {
          for (int x = 0; x < cfg.width; ++x) {
            if (mask.at(0, y, x) > 0.5) {
              for (int c = 0; c < 3; ++c) img.at(c, y, x) = s.color[c];
            }
          }
        }
        rec.annotations.push_back(box);
        placed = true;
      }
    }

    write_png(out_dir / rec.image_path, clip_to_image(std::move(img)));
    m.records.push_back(std::move(rec));
  }

  save_manifest(m, out_dir / "manifest.jsonl");
  return m;
}

}  // namespace twintrigger
