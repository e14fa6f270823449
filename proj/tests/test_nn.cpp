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
#include <vector>

#include "twintrigger/checksum.hpp"
#include "twintrigger/nn.hpp"
#include "twintrigger/rng.hpp"

using namespace twintrigger;

namespace {

struct FdReport {
  double worst_param = 0.0;
  double worst_input = 0.0;
};

// Central-difference check of every 7th parameter and 11th input cell
// against the analytic gradients, under the loss sum(out * r).
FdReport fd_check(const ConvStack& net, int h, int w, std::uint64_t seed) {
  std::vector<double> p(net.param_count());
  Rng rng(seed);
  for (double& x : p) x = rng.uniform(-0.4, 0.4);
  Grid in(h, w, net.in_channels());
  for (double& x : in.v) x = rng.uniform(0.0, 1.0);

  std::vector<Grid> tape;
  const Grid out = net.forward(p.data(), in, &tape);
  Grid r(out.height, out.width, out.channels);
  for (double& x : r.v) x = rng.uniform(-1.0, 1.0);

  auto loss = [&](const double* params, const Grid& img) {
    const Grid o = net.forward(params, img, nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < o.v.size(); ++i) s += o.v[i] * r.v[i];
    return s;
  };

  std::vector<double> g(p.size(), 0.0);
  Grid dout = r;
  const Grid din = net.backward(p.data(), in, tape, std::move(dout), g.data());

  FdReport rep;
  const double eps = 1e-6;
  for (std::size_t i = 0; i < p.size(); i += 7) {
    std::vector<double> pp = p;
    pp[i] += eps;
    const double up = loss(pp.data(), in);
    pp[i] -= 2 * eps;
    const double dn = loss(pp.data(), in);
    rep.worst_param =
        std::max(rep.worst_param, std::abs((up - dn) / (2 * eps) - g[i]));
  }
  for (std::size_t i = 0; i < in.v.size(); i += 11) {
    Grid im = in;
    im.v[i] += eps;
    const double up = loss(p.data(), im);
    im.v[i] -= 2 * eps;
    const double dn = loss(p.data(), im);
    rep.worst_input =
        std::max(rep.worst_input, std::abs((up - dn) / (2 * eps) - din.v[i]));
  }
  return rep;
}

}  // namespace

TEST_CASE("plain stack gradients match finite differences") {
  const ConvStack net(3, {{4, 3, 2, Act::lrelu, -1},
                          {5, 3, 1, Act::tanh_act, -1},
                          {2, 1, 1, Act::none, -1}});
  const FdReport rep = fd_check(net, 9, 8, 21);
  CHECK(rep.worst_param < 1e-7);
  CHECK(rep.worst_input < 1e-7);
}

TEST_CASE("skip connection gradients match finite differences") {
  const ConvStack net(2, {{4, 3, 1, Act::relu, -1},
                          {4, 3, 1, Act::lrelu, -1},
                          {4, 3, 1, Act::lrelu, 0},
                          {3, 1, 1, Act::sigmoid, -1}});
  const FdReport rep = fd_check(net, 8, 8, 22);
  CHECK(rep.worst_param < 1e-7);
  CHECK(rep.worst_input < 1e-7);
}

TEST_CASE("global gate gradients match finite differences") {
  const ConvStack net(3, {{4, 3, 2, Act::lrelu, -1},
                          {4, 0, 1, Act::none, -1},
                          {2, 1, 1, Act::none, -1}});
  const FdReport rep = fd_check(net, 8, 8, 23);
  CHECK(rep.worst_param < 1e-7);
  CHECK(rep.worst_input < 1e-7);
}

TEST_CASE("gate spec must preserve channels") {
  CHECK_THROWS(ConvStack(3, {{4, 3, 1, Act::relu, -1},
                             {5, 0, 1, Act::none, -1}}));
  CHECK_THROWS(ConvStack(3, {{4, 3, 1, Act::relu, -1},
                             {4, 0, 2, Act::none, -1}}));
}

TEST_CASE("zero-initialized gate is a constant half scale") {
  const ConvStack net(2, {{4, 3, 1, Act::lrelu, -1},
                          {4, 0, 1, Act::none, -1}});
  std::vector<double> p(net.param_count());
  Rng rng(4);
  net.init_params(p.data(), rng);
  Grid in(6, 6, 2);
  for (double& x : in.v) x = rng.uniform(0.0, 1.0);
  std::vector<Grid> tape;
  const Grid out = net.forward(p.data(), in, &tape);
  const Grid& pre = tape[0];
  for (std::size_t i = 0; i < out.v.size(); ++i)
    CHECK(out.v[i] == doctest::Approx(0.5 * pre.v[i]).epsilon(1e-12));
}

TEST_CASE("conv2d stride and padding shapes") {
  Grid in(7, 9, 2);
  std::vector<double> w(3 * 2 * 3 * 3, 0.1);
  std::vector<double> b(3, 0.0);
  const Grid out = conv2d(w.data(), b.data(), in, 3, 3, 2);
  CHECK(out.height == 4);
  CHECK(out.width == 5);
  CHECK(out.channels == 3);
}

TEST_CASE("activations and bce helpers") {
  CHECK(apply_act(Act::relu, -1.0) == 0.0);
  CHECK(apply_act(Act::lrelu, -1.0) == doctest::Approx(-0.1));
  CHECK(apply_act(Act::none, 0.37) == 0.37);
  CHECK(sigmoid(0.0) == doctest::Approx(0.5));
  // BCE at logit 0 is ln 2 regardless of target.
  CHECK(bce_with_logit(0.0, 1.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  CHECK(bce_with_logit(0.0, 0.0) == doctest::Approx(std::log(2.0)).epsilon(1e-12));
  // Stable at extreme logits.
  CHECK(bce_with_logit(500.0, 1.0) == doctest::Approx(0.0));
  CHECK(bce_with_logit(-500.0, 0.0) == doctest::Approx(0.0));
  CHECK(bce_with_logit_grad(0.0, 1.0) == doctest::Approx(-0.5).epsilon(1e-12));
}

TEST_CASE("adam descends a separable quadratic") {
  std::vector<double> x = {5.0, -3.0, 2.0};
  Adam opt(x.size(), 0.05);
  for (int t = 0; t < 400; ++t) {
    std::vector<double> g = {2 * x[0], 2 * x[1], 2 * x[2]};
    opt.step(x, g);
  }
  for (double v : x) CHECK(std::abs(v) < 1e-2);
}

TEST_CASE("blob round trip and checksum stability") {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "twintrigger-nn-test";
  std::filesystem::create_directories(dir);
  const std::vector<double> data = {0.0, -1.5, 3.25, 1e-300, 7.0};
  save_blob(dir / "p.bin", data);
  const std::vector<double> back = load_blob(dir / "p.bin");
  CHECK(back == data);

  const std::uint64_t c1 = params_checksum(data);
  std::vector<double> tweaked = data;
  tweaked[2] += 1e-12;
  CHECK(c1 != params_checksum(tweaked));
  CHECK(c1 == params_checksum(back));
  std::filesystem::remove_all(dir);
}

TEST_CASE("fnv1a64 matches the reference constant") {
  CHECK(fnv1a64("abc") == 0xe71fa2190541574bULL);
  CHECK(to_hex(0xe71fa2190541574bULL) == "e71fa2190541574b");
}

TEST_CASE("sidecar round trip in key order") {
  const std::filesystem::path dir =
      std::filesystem::temp_directory_path() / "twintrigger-nn-sidecar";
  std::filesystem::create_directories(dir);
  const std::map<std::string, std::string> kv = {
      {"b", "2"}, {"a", "1"}, {"model", "detector"}};
  save_sidecar(dir / "x.meta", kv);
  CHECK(load_sidecar(dir / "x.meta") == kv);
  std::filesystem::remove_all(dir);
}
