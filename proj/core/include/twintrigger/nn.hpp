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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "twintrigger/grid.hpp"
#include "twintrigger/rng.hpp"

namespace twintrigger {

enum class Act { none, relu, lrelu, tanh_act, sigmoid };

double apply_act(Act a, double x);

struct LayerSpec {
  int out_ch = 0;
  int k = 3;       // odd kernel, same padding k/2; 0 marks a global gate
  int stride = 1;
  Act act = Act::relu;
  int skip_from = -1;  // add that layer's output before the activation
};

// k == 0 denotes a squeeze-excitation gate: per-channel global average,
// one dense map (C x C weights + C biases), sigmoid, channelwise scale.
// out_ch must equal the input channel count; stride/act/skip are unused.

// A stack of 2-D convolutions over an externally owned flat parameter
// vector. Forward records post-activation outputs on a caller-owned tape so
// inference stays const and concurrent-safe.
class ConvStack {
 public:
  ConvStack(int in_ch, std::vector<LayerSpec> layers);

  std::size_t param_count() const { return n_params_; }
  int in_channels() const { return in_ch_; }
  int out_channels() const { return layers_.back().out_ch; }
  const std::vector<LayerSpec>& layers() const { return layers_; }
  std::size_t weight_offset(int layer) const { return w_off_[layer]; }
  std::size_t bias_offset(int layer) const { return b_off_[layer]; }

  // He/Xavier initialization depending on each layer's activation.
  void init_params(double* p, Rng& rng) const;

  // If tape is non-null it receives one post-activation Grid per layer.
  Grid forward(const double* p, const Grid& in, std::vector<Grid>* tape) const;

  // Back-propagate dLoss/d(last output). Accumulates parameter gradients
  // into g when non-null (layout identical to params) and returns
  // dLoss/d(input). `tape` must come from forward() on the same input.
  Grid backward(const double* p, const Grid& in, const std::vector<Grid>& tape,
                Grid dout, double* g) const;

 private:
  int in_ch_;
  std::vector<LayerSpec> layers_;
  std::vector<std::size_t> w_off_, b_off_;
  std::size_t n_params_ = 0;
};

// Single convolution, same padding k/2. Exposed for tests.
Grid conv2d(const double* w, const double* b, const Grid& in, int out_ch,
            int k, int stride);
Grid conv2d_backward(const double* w, const Grid& in, const Grid& dpre,
                     int out_ch, int k, int stride, double* dw, double* db);

// Numerically stable binary cross-entropy on a logit.
double sigmoid(double x);
double bce_with_logit(double logit, double target);
// dL/dlogit.
double bce_with_logit_grad(double logit, double target);

class Adam {
 public:
  Adam(std::size_t n, double lr) : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}
  void step(std::vector<double>& p, const std::vector<double>& g);
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }

 private:
  double lr_;
  double beta1_ = 0.9, beta2_ = 0.999, eps_ = 1e-8;
  std::vector<double> m_, v_;
  long t_ = 0;
};

// Adadelta with an external learning-rate multiplier, so a dynamic
// schedule can drive it.
class Adadelta {
 public:
  explicit Adadelta(std::size_t n) : eg_(n, 0.0), ex_(n, 0.0) {}
  void step(std::vector<double>& p, const std::vector<double>& g, double lr);

 private:
  double rho_ = 0.9, eps_ = 1e-6;
  std::vector<double> eg_, ex_;
};

// Opaque parameter blob (header + raw doubles) and its text metadata
// sidecar ("key=value" lines in key order).
void save_blob(const std::filesystem::path& path,
               const std::vector<double>& data);
std::vector<double> load_blob(const std::filesystem::path& path);
void save_sidecar(const std::filesystem::path& path,
                  const std::map<std::string, std::string>& kv);
std::map<std::string, std::string> load_sidecar(
    const std::filesystem::path& path);

// FNV-1a over the raw bytes of a parameter vector (frozen-weights checks).
std::uint64_t params_checksum(const std::vector<double>& p);

}  // namespace twintrigger
