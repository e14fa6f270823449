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
#include "twintrigger/baseline.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "twintrigger/pngio.hpp"
#include "twintrigger/rng.hpp"

namespace twintrigger {

const char* baseline_kind_name(BaselineKind k) {
  switch (k) {
    case BaselineKind::white_block: return "white_block";
    case BaselineKind::gaussian_noise: return "gaussian_noise";
    case BaselineKind::shadow: return "shadow";
    case BaselineKind::blend: return "blend";
  }
  throw std::invalid_argument("unknown baseline kind");
}

BaselineKind baseline_kind_from_name(const std::string& name) {
  if (name == "white_block") return BaselineKind::white_block;
  if (name == "gaussian_noise") return BaselineKind::gaussian_noise;
  if (name == "shadow") return BaselineKind::shadow;
  if (name == "blend") return BaselineKind::blend;
  throw std::invalid_argument("unknown baseline kind: " + name);
}

namespace {

Perturbation make_white_block(const BaselineTriggerSpec& s, int w, int h,
                              Rng& rng) {
  if (s.block_size < 1 || s.block_size > w || s.block_size > h)
    throw std::invalid_argument("white_block: block does not fit canvas");
  int bx = s.block_x;
  int by = s.block_y;
  if (bx < 0) bx = rng.uniform_int(0, w - s.block_size);
  if (by < 0) by = rng.uniform_int(0, h - s.block_size);
  if (bx + s.block_size > w || by + s.block_size > h)
    throw std::invalid_argument("white_block: block out of bounds");

  Perturbation p;
  p.mode = PerturbMode::paint;
  p.field = Grid(h, w, 3, 1.0);
  p.mask = Grid(h, w, 1);
  for (int y = by; y < by + s.block_size; ++y) {
    for (int x = bx; x < bx + s.block_size; ++x) {
      p.mask.at(0, y, x) = 1.0;
    }
  }
  return p;
}

Perturbation make_gaussian_noise(const BaselineTriggerSpec& s, int w, int h,
                                 Rng& rng) {
  if (s.noise_sigma < 0.0)
    throw std::invalid_argument("gaussian_noise: sigma must be >= 0");
  Perturbation p;
  p.mode = PerturbMode::add;
  p.field = Grid(h, w, 3);
  for (double& x : p.field.v) x = s.noise_sigma * rng.normal();
  return p;
}

Perturbation make_shadow(const BaselineTriggerSpec& s, int w, int h,
                         Rng& rng) {
  if (!(s.shadow_min > 0.0) || !(s.shadow_max <= 1.0) ||
      s.shadow_min > s.shadow_max)
    throw std::invalid_argument("shadow: factor range must lie in (0,1]");

  // Random star-shaped quadrilateral around a random interior center.
  const double cx = rng.uniform(0.3, 0.7) * w;
  const double cy = rng.uniform(0.3, 0.7) * h;
  const double base = rng.uniform(0.0, 2.0 * M_PI);
  double px[4], py[4];
  for (int k = 0; k < 4; ++k) {
    const double ang = base + k * M_PI / 2.0 + rng.uniform(-0.3, 0.3);
    const double rad = rng.uniform(0.2, 0.5) * std::min(w, h);
    px[k] = cx + rad * std::cos(ang);
    py[k] = cy + rad * std::sin(ang);
  }

  Perturbation p;
  p.mode = PerturbMode::shade;
  p.factor = rng.uniform(s.shadow_min, s.shadow_max);
  p.mask = Grid(h, w, 1);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const double qx = x + 0.5;
      const double qy = y + 0.5;
      bool in = false;
      for (int i = 0, j = 3; i < 4; j = i++) {
        if ((py[i] > qy) != (py[j] > qy) &&
            qx < (px[j] - px[i]) * (qy - py[i]) / (py[j] - py[i]) + px[i]) {
          in = !in;
        }
      }
      if (in) p.mask.at(0, y, x) = 1.0;
    }
  }
  return p;
}

Perturbation make_blend(const BaselineTriggerSpec& s, int w, int h) {
  if (!(s.alpha > 0.0) || s.alpha > 1.0)
    throw std::invalid_argument("blend: alpha must lie in (0,1]");
  Perturbation p;
  p.mode = PerturbMode::blend;
  p.alpha = s.alpha;
  if (s.pattern_path.empty()) {
    p.field = procedural_pattern(w, h);
  } else {
    SpatialImage pattern = read_png(s.pattern_path);
    if (pattern.width() != w || pattern.height() != h)
      throw std::invalid_argument("blend: pattern resolution mismatch");
    p.field = pattern.pixels;
  }
  return p;
}

}  // namespace

Perturbation synth_baseline(const BaselineTriggerSpec& spec, int canvas_w,
                            int canvas_h) {
  if (canvas_w < 1 || canvas_h < 1)
    throw std::invalid_argument("synth_baseline: empty canvas");
  Rng rng(derive_seed(spec.seed, baseline_kind_name(spec.kind)));
  switch (spec.kind) {
    case BaselineKind::white_block:
      return make_white_block(spec, canvas_w, canvas_h, rng);
    case BaselineKind::gaussian_noise:
      return make_gaussian_noise(spec, canvas_w, canvas_h, rng);
    case BaselineKind::shadow:
      return make_shadow(spec, canvas_w, canvas_h, rng);
    case BaselineKind::blend:
      return make_blend(spec, canvas_w, canvas_h);
  }
  throw std::invalid_argument("unknown baseline kind");
}

Perturbation additive_perturbation(Grid delta) {
  Perturbation p;
  p.mode = PerturbMode::add;
  p.field = std::move(delta);
  return p;
}

SpatialImage embed(const SpatialImage& image, const Perturbation& p,
                   bool clip) {
  validate_image(image);
  const Grid& src = image.pixels;
  Grid out = src;
  switch (p.mode) {
    case PerturbMode::add: {
      if (!p.field.same_shape(src))
        throw std::invalid_argument("embed: perturbation resolution mismatch");
      for (std::size_t i = 0; i < out.v.size(); ++i) out.v[i] += p.field.v[i];
      break;
    }
    case PerturbMode::paint: {
      if (p.mask.height != src.height || p.mask.width != src.width)
        throw std::invalid_argument("embed: mask resolution mismatch");
      for (int c = 0; c < src.channels; ++c) {
        for (int y = 0; y < src.height; ++y) {
          for (int x = 0; x < src.width; ++x) {
            const double m = p.mask.at(0, y, x);
            out.at(c, y, x) =
                (1.0 - m) * src.at(c, y, x) + m * p.field.at(c, y, x);
          }
        }
      }
      break;
    }
    case PerturbMode::shade: {
      if (p.mask.height != src.height || p.mask.width != src.width)
        throw std::invalid_argument("embed: mask resolution mismatch");
      for (int c = 0; c < src.channels; ++c) {
        for (int y = 0; y < src.height; ++y) {
          for (int x = 0; x < src.width; ++x) {
            const double m = p.mask.at(0, y, x);
            out.at(c, y, x) = src.at(c, y, x) * ((1.0 - m) + m * p.factor);
          }
        }
      }
      break;
    }
    case PerturbMode::blend: {
      if (!p.field.same_shape(src))
        throw std::invalid_argument("embed: pattern resolution mismatch");
      for (std::size_t i = 0; i < out.v.size(); ++i) {
        out.v[i] = (1.0 - p.alpha) * src.v[i] + p.alpha * p.field.v[i];
      }
      break;
    }
  }
  if (clip) return clip_to_image(std::move(out));
  if (!out.all_finite()) throw std::invalid_argument("embed: non-finite output");
  return SpatialImage{std::move(out)};
}

Grid procedural_pattern(int w, int h) {
  Grid g(h, w, 3);
  for (int c = 0; c < 3; ++c) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double u = (x + 0.5) / w;
        const double v = (y + 0.5) / h;
        const double a = std::sin(2.0 * M_PI * (7.0 * u) + 1.7 * c);
        const double b = std::sin(2.0 * M_PI * (11.0 * v) + 0.9 * c);
        const double d = std::sin(2.0 * M_PI * 5.0 * (u + v) + 2.3 * c);
        g.at(c, y, x) =
            std::clamp(0.5 + 0.2 * a + 0.2 * b + 0.1 * d, 0.0, 1.0);
      }
    }
  }
  return g;
}

}  // namespace twintrigger
