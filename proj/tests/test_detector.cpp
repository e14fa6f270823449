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
#include <array>
#include <cmath>
#include <filesystem>
#include <map>

#include "twintrigger/detector.hpp"
#include "twintrigger/metrics.hpp"
#include "twintrigger/rng.hpp"

using namespace twintrigger;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string& name) {
  const fs::path dir = fs::temp_directory_path() / ("twintrigger-" + name);
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

SpatialImage scene_with_box(int w, int h, const Annotation& a,
                            std::uint64_t seed) {
  SpatialImage img;
  img.pixels = Grid(h, w, 3);
  Rng rng(seed);
  const double bg = 0.2 + 0.2 * rng.uniform();
  for (double& v : img.pixels.v) v = bg;
  for (int c = 0; c < 3; ++c) {
    const double fg = 0.7 + 0.3 * rng.uniform();
    for (int y = static_cast<int>(a.y); y < a.y + a.h; ++y)
      for (int x = static_cast<int>(a.x); x < a.x + a.w; ++x)
        img.pixels.at(c, y, x) = fg;
  }
  return img;
}

}  // namespace

TEST_CASE("detector geometry follows the stride-8 grid") {
  Detector det("tiny-A", 64, 48, 3, 1);
  CHECK(det.stride() == 8);
  CHECK(det.grid_w() == 8);
  CHECK(det.grid_h() == 6);
  const Grid head = det.head_forward(Grid(48, 64, 3), nullptr);
  CHECK(head.channels == 5 + 3);
  CHECK(head.width == 8);
  CHECK(head.height == 6);
  CHECK_THROWS_AS(Detector("tiny-A", 60, 64, 3, 1), std::invalid_argument);
  CHECK_THROWS_AS(Detector("huge", 64, 64, 3, 1), std::invalid_argument);
}

TEST_CASE("a freshly initialized detector stays silent") {
  Detector det("tiny-B", 64, 64, 3, 5);
  SpatialImage img;
  img.pixels = Grid(64, 64, 3);
  Rng rng(6);
  for (double& v : img.pixels.v) v = rng.uniform();
  CHECK(det.detect(img).empty());
}

TEST_CASE("soft detections expose every cell above the soft threshold") {
  Detector det("tiny-A", 64, 64, 3, 7);
  SpatialImage img;
  img.pixels = Grid(64, 64, 3);
  Rng rng(8);
  for (double& v : img.pixels.v) v = rng.uniform();
  const SoftDetections soft = det.detect_soft(img, 1e-4);
  // The -4 objectness bias keeps p near 0.018, above 1e-4 everywhere.
  CHECK(soft.count() == 64);
  for (const SoftDet& d : soft.dets) {
    CHECK(d.p > 1e-4);
    CHECK(d.p < 0.5);
    CHECK(d.w_norm >= 0.0);
    CHECK(d.w_norm <= 1.0);
    CHECK(d.h_norm >= 0.0);
    CHECK(d.h_norm <= 1.0);
    CHECK(d.cell >= 0);
    CHECK(d.cell < 64);
  }
  CHECK(det.detect_soft(img, 0.9).count() == 0);
}

TEST_CASE("soft backward matches finite differences") {
  Detector det("tiny-A", 32, 32, 2, 9);
  SpatialImage img;
  img.pixels = Grid(32, 32, 3);
  Rng rng(10);
  for (double& v : img.pixels.v) v = rng.uniform();

  const SoftDetections base = det.detect_soft(img, 1e-4);
  REQUIRE(base.count() == 16);
  std::vector<std::array<double, 3>> ddets(base.count());
  for (auto& d : ddets)
    d = {rng.uniform() - 0.5, rng.uniform() - 0.5, rng.uniform() - 0.5};

  auto loss = [&](const SpatialImage& x) {
    const SoftDetections s = det.detect_soft(x, 1e-4);
    REQUIRE(s.count() == ddets.size());
    double sum = 0.0;
    for (std::size_t i = 0; i < s.dets.size(); ++i) {
      sum += s.dets[i].w_norm * ddets[i][0] + s.dets[i].h_norm * ddets[i][1] +
             s.dets[i].p * ddets[i][2];
    }
    return sum;
  };

  const Grid grad = det.soft_backward(img, base, ddets);
  const double eps = 1e-6;
  for (std::size_t i = 0; i < img.pixels.v.size(); i += 251) {
    SpatialImage up = img, dn = img;
    up.pixels.v[i] += eps;
    dn.pixels.v[i] -= eps;
    const double fd = (loss(up) - loss(dn)) / (2.0 * eps);
    CHECK(grad.v[i] == doctest::Approx(fd).epsilon(1e-4).scale(1.0));
  }
}

TEST_CASE("training overfits one scene and localizes its object") {
  const int w = 64, h = 64;
  Annotation gt;
  gt.x = 16;
  gt.y = 24;
  gt.w = 24;
  gt.h = 16;
  gt.c = 1;
  const SpatialImage img = scene_with_box(w, h, gt, 11);

  Detector det("tiny-A", w, h, 3, 12);
  DetectorHyper hyper;
  hyper.pos_weight = 4.0;
  hyper.obj_weight = 32.0;
  Adam opt(det.params().size(), 5e-3);
  std::vector<Annotation> anns{gt};
  std::vector<const Grid*> imgs{&img.pixels};
  std::vector<const std::vector<Annotation>*> boxes{&anns};

  double first = 0.0, last = 0.0;
  for (int step = 0; step < 220; ++step) {
    const double loss = det.train_step(imgs, boxes, hyper, opt);
    if (step == 0) first = loss;
    last = loss;
  }
  CHECK(last < 0.2 * first);

  const auto dets = det.detect(img, 0.25, 0.45);
  REQUIRE_FALSE(dets.empty());
  const DetectionBox& top = dets.front();
  Annotation pred;
  pred.x = top.x;
  pred.y = top.y;
  pred.w = top.w;
  pred.h = top.h;
  CHECK(top.c == gt.c);
  CHECK(iou(pred, gt) > 0.5);
}

TEST_CASE("suppressed annotations contribute no positive cells") {
  // Training on a scene whose only box is suppressed must drive the
  // detector toward silence, not toward the hidden object.
  const int w = 64, h = 64;
  Annotation gt;
  gt.x = 20;
  gt.y = 20;
  gt.w = 20;
  gt.h = 20;
  gt.c = 0;
  const SpatialImage img = scene_with_box(w, h, gt, 13);

  Annotation hidden = gt;
  hidden.w = 0.0;
  hidden.h = 0.0;
  REQUIRE(hidden.suppressed());

  Detector det("tiny-A", w, h, 3, 14);
  DetectorHyper hyper;
  Adam opt(det.params().size(), 1e-3);
  std::vector<Annotation> anns{hidden};
  std::vector<const Grid*> imgs{&img.pixels};
  std::vector<const std::vector<Annotation>*> boxes{&anns};
  for (int step = 0; step < 60; ++step) det.train_step(imgs, boxes, hyper, opt);

  CHECK(det.detect(img, 0.25, 0.45).empty());
  const SoftDetections soft = det.detect_soft(img, 0.0);
  for (const SoftDet& d : soft.dets) CHECK(d.p < 0.05);
}

TEST_CASE("augment grid flips and shifts with edge clamping") {
  Grid g(4, 6, 2);
  Rng rng(15);
  for (double& v : g.v) v = rng.uniform();

  const Grid flipped = augment_grid(g, true, 0, 0);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x)
        CHECK(flipped.at(c, y, x) == g.at(c, y, 5 - x));

  const Grid shifted = augment_grid(g, false, 2, -1);
  for (int c = 0; c < 2; ++c)
    for (int y = 0; y < 4; ++y)
      for (int x = 0; x < 6; ++x) {
        const int sy = std::min(3, y + 1);
        const int sx = std::max(0, x - 2);
        CHECK(shifted.at(c, y, x) == g.at(c, sy, sx));
      }

  // Flip composed with shift: sample at W-1-(x-dx).
  const Grid both = augment_grid(g, true, 1, 0);
  CHECK(both.at(0, 0, 3) == g.at(0, 0, 3));  // 5-(3-1)=3
}

TEST_CASE("augment annotations mirror, translate, and cull") {
  Annotation a;
  a.x = 10;
  a.y = 5;
  a.w = 6;
  a.h = 4;
  a.c = 2;

  const auto flipped = augment_annotations({a}, 32, 32, true, 0, 0);
  REQUIRE(flipped.size() == 1);
  CHECK(flipped[0].x == doctest::Approx(16.0));  // 32 - 10 - 6
  CHECK(flipped[0].y == doctest::Approx(5.0));
  CHECK(flipped[0].c == 2);

  const auto moved = augment_annotations({a}, 32, 32, false, 3, -2);
  REQUIRE(moved.size() == 1);
  CHECK(moved[0].x == doctest::Approx(13.0));
  CHECK(moved[0].y == doctest::Approx(3.0));

  // Shift pushes the center (13,7) past the left edge: dropped.
  const auto gone = augment_annotations({a}, 32, 32, false, -14, 0);
  CHECK(gone.empty());

  // Suppressed annotations ride along untouched.
  Annotation s;
  s.x = 50;
  s.y = 50;
  s.w = 0;
  s.h = 0;
  const auto kept = augment_annotations({s}, 32, 32, true, 5, 5);
  REQUIRE(kept.size() == 1);
  CHECK(kept[0].x == doctest::Approx(50.0));
  CHECK(kept[0].suppressed());
}

TEST_CASE("detector save and load round trip") {
  const fs::path dir = fresh_dir("det-save");
  Detector det("tiny-B", 64, 64, 3, 16);
  Rng rng(17);
  for (double& p : det.params()) p += 0.01 * (rng.uniform() - 0.5);
  det.save(dir / "det", {{"role", "victim"}});

  const Detector back = Detector::load(dir / "det");
  CHECK(back.arch() == "tiny-B");
  CHECK(back.width() == 64);
  CHECK(back.num_classes() == 3);
  REQUIRE(back.params().size() == det.params().size());
  for (std::size_t i = 0; i < det.params().size(); ++i)
    CHECK(back.params()[i] == det.params()[i]);

  SpatialImage img;
  img.pixels = Grid(64, 64, 3);
  for (double& v : img.pixels.v) v = rng.uniform();
  const Grid a = det.head_forward(img.pixels, nullptr);
  const Grid b = back.head_forward(img.pixels, nullptr);
  for (std::size_t i = 0; i < a.v.size(); ++i) CHECK(a.v[i] == b.v[i]);
}
