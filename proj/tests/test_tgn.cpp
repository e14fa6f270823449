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
#include <filesystem>

#include "twintrigger/dct.hpp"
#include "twintrigger/tgn.hpp"

using namespace twintrigger;

TEST_CASE("bce fool loss hand values") {
  CHECK(bce_fool_loss({0.5}) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // -(ln 0.1 + ln 0.9) / 2
  CHECK(bce_fool_loss({0.9, 0.1}) ==
        doctest::Approx(1.2039728043259361).epsilon(1e-12));
  CHECK(bce_fool_loss({0.0}) == doctest::Approx(0.0).epsilon(1e-12));
}

TEST_CASE("mse loss sums squared differences") {
  SpatialImage a, b;
  a.pixels = Grid(2, 2, 1);
  b.pixels = Grid(2, 2, 1);
  b.pixels.at(0, 0, 1) = 0.5;
  CHECK(mse_loss(a, b) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("area loss hand value") {
  SoftDetections dets;
  // exp(0.5 * 0.4 * 1.0) and exp(0.1 * 0.2 * 1.0), p folded in.
  dets.dets.push_back({0.5, 0.4, 1.0, 0});
  dets.dets.push_back({0.1, 0.2, 1.0, 1});
  const double want = (std::exp(0.2) + std::exp(0.02)) / 2.0;
  CHECK(area_loss(dets) == doctest::Approx(want).epsilon(1e-12));
  CHECK(area_loss({}) == doctest::Approx(0.0));
}

TEST_CASE("area loss gradient matches finite differences") {
  SoftDetections dets;
  dets.dets.push_back({0.5, 0.4, 0.9, 0});
  dets.dets.push_back({0.3, 0.7, 0.2, 1});
  const auto grads = area_loss_grad(dets);
  REQUIRE(grads.size() == 2);
  const double eps = 1e-7;
  for (std::size_t i = 0; i < dets.dets.size(); ++i) {
    for (int f = 0; f < 3; ++f) {
      SoftDetections up = dets, dn = dets;
      double* pu = f == 0 ? &up.dets[i].w_norm
                          : f == 1 ? &up.dets[i].h_norm : &up.dets[i].p;
      double* pd = f == 0 ? &dn.dets[i].w_norm
                          : f == 1 ? &dn.dets[i].h_norm : &dn.dets[i].p;
      *pu += eps;
      *pd -= eps;
      const double fd = (area_loss(up) - area_loss(dn)) / (2 * eps);
      CHECK(grads[i][f] == doctest::Approx(fd).epsilon(1e-5));
    }
  }
}

TEST_CASE("victim alignment loss hand value") {
  CHECK(victim_alignment_loss({1.2}, {1.0}) ==
        doctest::Approx(0.04).epsilon(1e-12));
  CHECK(victim_alignment_loss({1.0, 2.0}, {1.0, 1.0}) ==
        doctest::Approx(0.5).epsilon(1e-12));
}

TEST_CASE("lr schedule picks the latest milestone") {
  const std::vector<LrMilestone> sched = {{0, 0.05}, {2, 0.01}, {10, 0.005}};
  CHECK(schedule_lr(sched, 0) == doctest::Approx(0.05));
  CHECK(schedule_lr(sched, 1) == doctest::Approx(0.05));
  CHECK(schedule_lr(sched, 2) == doctest::Approx(0.01));
  CHECK(schedule_lr(sched, 9) == doctest::Approx(0.01));
  CHECK(schedule_lr(sched, 100) == doctest::Approx(0.005));
  CHECK_THROWS(schedule_lr({}, 0));
  CHECK_THROWS(schedule_lr({{3, 0.1}}, 1));
}

TEST_CASE("generator output respects the amplitude bound") {
  TriggerGenerator gen("invisible", 32, 32, 8.0, 0.25, 99);
  const Grid raw = gen.raw_forward(nullptr);
  CHECK(raw.max_abs() <= 0.25 + 1e-12);
  CHECK(raw.height == 32);
  CHECK(raw.channels == 3);
}

TEST_CASE("invisible render is spectrally concentrated") {
  TriggerGenerator gen("invisible", 32, 32, 4.0, 0.25, 5);
  const Trigger t = gen.render();
  CHECK(t.kind == "invisible");
  const double total = band_energy(t.spectrum, 0.0, 1e9);
  const double high = band_energy(t.spectrum, 3.0 * 4.0, 1e9);
  REQUIRE(total > 0.0);
  CHECK(high / total < 0.01);
  // Spatial must match the spectrum exactly.
  const Grid back = idct2(t.spectrum);
  for (std::size_t i = 0; i < back.v.size(); ++i)
    CHECK(back.v[i] == doctest::Approx(t.spatial.v[i]).epsilon(0.0).scale(1e-9));
}

TEST_CASE("visible render skips the low-pass") {
  TriggerGenerator gen("visible", 32, 32, 4.0, 0.35, 6);
  const Trigger t = gen.render();
  CHECK(t.kind == "visible");
  const Grid raw = gen.raw_forward(nullptr);
  for (std::size_t i = 0; i < raw.v.size(); ++i)
    CHECK(t.spatial.v[i] == doctest::Approx(raw.v[i]).epsilon(0.0).scale(1e-9));
}

TEST_CASE("trigger file round trip is exact") {
  TriggerGenerator gen("invisible", 16, 16, 4.0, 0.2, 77);
  Trigger t = gen.render();
  t.provenance["note"] = "round trip";
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "twintrigger-trg-test";
  std::filesystem::create_directories(dir);
  save_trigger(dir / "t.trg", t);
  const Trigger back = load_trigger(dir / "t.trg");
  CHECK(back.kind == t.kind);
  CHECK(back.provenance.at("note") == "round trip");
  REQUIRE(back.spectrum.coeff.v.size() == t.spectrum.coeff.v.size());
  for (std::size_t i = 0; i < t.spectrum.coeff.v.size(); ++i)
    CHECK(back.spectrum.coeff.v[i] == t.spectrum.coeff.v[i]);
  for (std::size_t i = 0; i < t.spatial.v.size(); ++i)
    CHECK(back.spatial.v[i] == doctest::Approx(t.spatial.v[i]).epsilon(0.0).scale(1e-12));
  std::filesystem::remove_all(dir);
}

TEST_CASE("generator save load round trip preserves parameters") {
  TriggerGenerator gen("visible", 16, 16, 4.0, 0.3, 88);
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "twintrigger-gen-test";
  std::filesystem::create_directories(dir);
  gen.save(dir / "gen", {{"stage", "test"}});
  const TriggerGenerator back = TriggerGenerator::load(dir / "gen");
  CHECK(back.kind() == "visible");
  CHECK(back.width() == 16);
  CHECK(back.amplitude() == doctest::Approx(0.3));
  CHECK(back.params() == gen.params());
  const Grid a = gen.raw_forward(nullptr);
  const Grid b = back.raw_forward(nullptr);
  for (std::size_t i = 0; i < a.v.size(); ++i) CHECK(a.v[i] == b.v[i]);
  std::filesystem::remove_all(dir);
}

TEST_CASE("generator gradient matches finite differences") {
  TriggerGenerator gen("invisible", 12, 12, 3.0, 0.2, 31);
  std::vector<Grid> tape;
  const Grid spatial = gen.trigger_spatial(&tape);
  // Loss: sum of elementwise squares of the trigger.
  Grid dspatial(spatial.height, spatial.width, spatial.channels);
  for (std::size_t i = 0; i < spatial.v.size(); ++i)
    dspatial.v[i] = 2.0 * spatial.v[i];
  std::vector<double> grad(gen.params().size(), 0.0);
  gen.backward_from_spatial(tape, dspatial, grad.data());

  auto loss = [&]() {
    const Grid s = gen.trigger_spatial(nullptr);
    double acc = 0.0;
    for (double v : s.v) acc += v * v;
    return acc;
  };
  const double eps = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < grad.size(); i += 13) {
    const double keep = gen.params()[i];
    gen.params()[i] = keep + eps;
    const double up = loss();
    gen.params()[i] = keep - eps;
    const double dn = loss();
    gen.params()[i] = keep;
    worst = std::max(worst, std::abs((up - dn) / (2 * eps) - grad[i]));
  }
  CHECK(worst < 1e-6);
}
