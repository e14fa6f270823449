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
#include "twintrigger/nn.hpp"

#include <Eigen/Dense>

#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "twintrigger/checksum.hpp"

namespace twintrigger {

namespace {

using Eigen::MatrixXd;

int out_extent(int in, int k, int stride) {
  const int pad = k / 2;
  return (in + 2 * pad - k) / stride + 1;
}

// Patch matrix: rows index output pixels (y-major), columns index
// (channel, ky, kx) triples; zero padding outside the canvas.
MatrixXd im2col(const Grid& in, int k, int stride) {
  const int pad = k / 2;
  const int oh = out_extent(in.height, k, stride);
  const int ow = out_extent(in.width, k, stride);
  MatrixXd m(static_cast<long>(oh) * ow, static_cast<long>(in.channels) * k * k);
  long col = 0;
  for (int c = 0; c < in.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++col) {
        double* dst = m.col(col).data();
        long r = 0;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < ow; ++ox, ++r) {
            const int ix = ox * stride - pad + kx;
            dst[r] = (iy >= 0 && iy < in.height && ix >= 0 && ix < in.width)
                         ? in.at(c, iy, ix)
                         : 0.0;
          }
        }
      }
    }
  }
  return m;
}

void col2im_add(const MatrixXd& m, Grid& din, int k, int stride) {
  const int pad = k / 2;
  const int oh = out_extent(din.height, k, stride);
  const int ow = out_extent(din.width, k, stride);
  long col = 0;
  for (int c = 0; c < din.channels; ++c) {
    for (int ky = 0; ky < k; ++ky) {
      for (int kx = 0; kx < k; ++kx, ++col) {
        const double* src = m.col(col).data();
        long r = 0;
        for (int oy = 0; oy < oh; ++oy) {
          const int iy = oy * stride - pad + ky;
          for (int ox = 0; ox < ow; ++ox, ++r) {
            const int ix = ox * stride - pad + kx;
            if (iy >= 0 && iy < din.height && ix >= 0 && ix < din.width) {
              din.at(c, iy, ix) += src[r];
            }
          }
        }
      }
    }
  }
}

Eigen::Map<const MatrixXd> grid_as_matrix(const Grid& g) {
  return Eigen::Map<const MatrixXd>(g.v.data(),
                                    static_cast<long>(g.height) * g.width,
                                    g.channels);
}

Eigen::Map<MatrixXd> grid_as_matrix(Grid& g) {
  return Eigen::Map<MatrixXd>(g.v.data(),
                              static_cast<long>(g.height) * g.width,
                              g.channels);
}

double act_deriv_from_output(Act a, double y) {
  switch (a) {
    case Act::none: return 1.0;
    case Act::relu: return y > 0.0 ? 1.0 : 0.0;
    case Act::lrelu: return y > 0.0 ? 1.0 : 0.1;
    case Act::tanh_act: return 1.0 - y * y;
    case Act::sigmoid: return y * (1.0 - y);
  }
  return 1.0;
}

}  // namespace

double apply_act(Act a, double x) {
  switch (a) {
    case Act::none: return x;
    case Act::relu: return x > 0.0 ? x : 0.0;
    case Act::lrelu: return x > 0.0 ? x : 0.1 * x;
    case Act::tanh_act: return std::tanh(x);
    case Act::sigmoid: return sigmoid(x);
  }
  return x;
}

Grid conv2d(const double* w, const double* b, const Grid& in, int out_ch,
            int k, int stride) {
  const MatrixXd patches = im2col(in, k, stride);
  const long ckk = static_cast<long>(in.channels) * k * k;
  Eigen::Map<const MatrixXd> wm(w, ckk, out_ch);
  Grid out(out_extent(in.height, k, stride), out_extent(in.width, k, stride),
           out_ch);
  auto om = grid_as_matrix(out);
  om.noalias() = patches * wm;
  for (int o = 0; o < out_ch; ++o) om.col(o).array() += b[o];
  return out;
}

Grid conv2d_backward(const double* w, const Grid& in, const Grid& dpre,
                     int out_ch, int k, int stride, double* dw, double* db) {
  const MatrixXd patches = im2col(in, k, stride);
  const long ckk = static_cast<long>(in.channels) * k * k;
  Eigen::Map<const MatrixXd> wm(w, ckk, out_ch);
  auto dm = grid_as_matrix(dpre);

  if (dw != nullptr) {
    Eigen::Map<MatrixXd> dwm(dw, ckk, out_ch);
    dwm.noalias() += patches.transpose() * dm;
  }
  if (db != nullptr) {
    for (int o = 0; o < out_ch; ++o) db[o] += dm.col(o).sum();
  }
  const MatrixXd dpatches = dm * wm.transpose();
  Grid din(in.height, in.width, in.channels);
  col2im_add(dpatches, din, k, stride);
  return din;
}

ConvStack::ConvStack(int in_ch, std::vector<LayerSpec> layers)
    : in_ch_(in_ch), layers_(std::move(layers)) {
  if (in_ch_ < 1 || layers_.empty())
    throw std::invalid_argument("ConvStack: empty configuration");
  int ch = in_ch_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (l.k == 0) {
      if (l.out_ch != ch || l.stride != 1 || l.skip_from != -1)
        throw std::invalid_argument("ConvStack: bad gate spec");
      w_off_.push_back(n_params_);
      n_params_ += static_cast<std::size_t>(ch) * ch;
      b_off_.push_back(n_params_);
      n_params_ += static_cast<std::size_t>(ch);
      continue;
    }
    if (l.out_ch < 1 || l.k < 1 || l.k % 2 == 0 || l.stride < 1)
      throw std::invalid_argument("ConvStack: bad layer spec");
    if (l.skip_from >= static_cast<int>(i) || l.skip_from < -1)
      throw std::invalid_argument("ConvStack: bad skip index");
    w_off_.push_back(n_params_);
    n_params_ += static_cast<std::size_t>(ch) * l.k * l.k * l.out_ch;
    b_off_.push_back(n_params_);
    n_params_ += static_cast<std::size_t>(l.out_ch);
    ch = l.out_ch;
  }
}

void ConvStack::init_params(double* p, Rng& rng) const {
  int ch = in_ch_;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (l.k == 0) {
      // Zero map: the gate starts as a constant benign scale.
      for (std::size_t j = 0;
           j < static_cast<std::size_t>(ch) * ch + static_cast<std::size_t>(ch);
           ++j)
        p[w_off_[i] + j] = 0.0;
      continue;
    }
    const std::size_t fan_in = static_cast<std::size_t>(ch) * l.k * l.k;
    const double gain = (l.act == Act::relu || l.act == Act::lrelu) ? 2.0 : 1.0;
    const double sd = std::sqrt(gain / static_cast<double>(fan_in));
    for (std::size_t j = 0; j < fan_in * l.out_ch; ++j) {
      p[w_off_[i] + j] = sd * rng.normal();
    }
    for (int j = 0; j < l.out_ch; ++j) p[b_off_[i] + j] = 0.0;
    ch = l.out_ch;
  }
}

namespace {

// Channelwise sigmoid gate driven by global average features.
std::vector<double> se_scales(const double* w, const double* b,
                              const Grid& in) {
  const int c = in.channels;
  const std::size_t hw = static_cast<std::size_t>(in.height) * in.width;
  std::vector<double> z(c, 0.0);
  for (int i = 0; i < c; ++i) {
    const double* pl = in.plane(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += pl[j];
    z[i] = acc / static_cast<double>(hw);
  }
  std::vector<double> s(c);
  for (int i = 0; i < c; ++i) {
    double pre = b[i];
    for (int j = 0; j < c; ++j) pre += w[static_cast<std::size_t>(i) * c + j] * z[j];
    s[i] = sigmoid(pre);
  }
  return s;
}

Grid se_forward(const double* w, const double* b, const Grid& in) {
  const std::vector<double> s = se_scales(w, b, in);
  Grid out = in;
  for (int i = 0; i < in.channels; ++i) {
    double* pl = out.plane(i);
    const std::size_t hw = static_cast<std::size_t>(in.height) * in.width;
    for (std::size_t j = 0; j < hw; ++j) pl[j] *= s[i];
  }
  return out;
}

Grid se_backward(const double* w, const double* b, const Grid& in, Grid dout,
                 double* dw, double* db) {
  const int c = in.channels;
  const std::size_t hw = static_cast<std::size_t>(in.height) * in.width;
  const std::vector<double> s = se_scales(w, b, in);
  std::vector<double> z(c, 0.0);
  for (int i = 0; i < c; ++i) {
    const double* pl = in.plane(i);
    double acc = 0.0;
    for (std::size_t j = 0; j < hw; ++j) acc += pl[j];
    z[i] = acc / static_cast<double>(hw);
  }
  std::vector<double> dpre(c, 0.0);
  for (int i = 0; i < c; ++i) {
    const double* din_pl = dout.plane(i);
    const double* u = in.plane(i);
    double ds = 0.0;
    for (std::size_t j = 0; j < hw; ++j) ds += din_pl[j] * u[j];
    dpre[i] = ds * s[i] * (1.0 - s[i]);
  }
  if (dw != nullptr) {
    for (int i = 0; i < c; ++i) {
      for (int j = 0; j < c; ++j)
        dw[static_cast<std::size_t>(i) * c + j] += dpre[i] * z[j];
      db[i] += dpre[i];
    }
  }
  std::vector<double> dz(c, 0.0);
  for (int i = 0; i < c; ++i)
    for (int j = 0; j < c; ++j)
      dz[j] += dpre[i] * w[static_cast<std::size_t>(i) * c + j];
  Grid din = std::move(dout);
  for (int i = 0; i < c; ++i) {
    double* pl = din.plane(i);
    const double add = dz[i] / static_cast<double>(hw);
    for (std::size_t j = 0; j < hw; ++j) pl[j] = pl[j] * s[i] + add;
  }
  return din;
}

}  // namespace

Grid ConvStack::forward(const double* p, const Grid& in,
                        std::vector<Grid>* tape) const {
  if (in.channels != in_ch_)
    throw std::invalid_argument("ConvStack: input channel mismatch");
  if (tape) tape->clear();
  Grid cur = in;
  std::vector<Grid> outs;
  const bool need_outs = tape == nullptr;
  for (std::size_t i = 0; i < layers_.size(); ++i) {
    const LayerSpec& l = layers_[i];
    if (l.k == 0) {
      cur = se_forward(p + w_off_[i], p + b_off_[i], cur);
      if (tape) {
        tape->push_back(cur);
      } else if (need_outs) {
        outs.push_back(cur);
      }
      continue;
    }
    Grid pre = conv2d(p + w_off_[i], p + b_off_[i], cur, l.out_ch, l.k,
                      l.stride);
    if (l.skip_from >= 0) {
      const Grid& s = tape ? (*tape)[l.skip_from] : outs[l.skip_from];
      if (!s.same_shape(pre))
        throw std::invalid_argument("ConvStack: skip shape mismatch");
      for (std::size_t j = 0; j < pre.v.size(); ++j) pre.v[j] += s.v[j];
    }
    for (double& x : pre.v) x = apply_act(l.act, x);
    cur = pre;
    if (tape) {
      tape->push_back(cur);
    } else if (need_outs) {
      outs.push_back(cur);
    }
  }
  return cur;
}

Grid ConvStack::backward(const double* p, const Grid& in,
                         const std::vector<Grid>& tape, Grid dout,
                         double* g) const {
  if (tape.size() != layers_.size())
    throw std::invalid_argument("ConvStack: tape/layer mismatch");
  std::vector<Grid> dskip(layers_.size());
  Grid dcur = std::move(dout);
  for (int i = static_cast<int>(layers_.size()) - 1; i >= 0; --i) {
    const LayerSpec& l = layers_[i];
    if (!dskip[i].empty()) {
      for (std::size_t j = 0; j < dcur.v.size(); ++j)
        dcur.v[j] += dskip[i].v[j];
    }
    if (l.k == 0) {
      const Grid& gate_in = (i == 0) ? in : tape[i - 1];
      dcur = se_backward(p + w_off_[i], p + b_off_[i], gate_in,
                         std::move(dcur), g ? g + w_off_[i] : nullptr,
                         g ? g + b_off_[i] : nullptr);
      continue;
    }
    // dpre = dcur * act'(out)
    const Grid& y = tape[i];
    Grid dpre = dcur;
    for (std::size_t j = 0; j < dpre.v.size(); ++j)
      dpre.v[j] *= act_deriv_from_output(l.act, y.v[j]);
    if (l.skip_from >= 0) {
      if (dskip[l.skip_from].empty()) {
        dskip[l.skip_from] = dpre;
      } else {
        for (std::size_t j = 0; j < dpre.v.size(); ++j)
          dskip[l.skip_from].v[j] += dpre.v[j];
      }
    }
    const Grid& input = (i == 0) ? in : tape[i - 1];
    dcur = conv2d_backward(p + w_off_[i], input, dpre, l.out_ch, l.k, l.stride,
                           g ? g + w_off_[i] : nullptr,
                           g ? g + b_off_[i] : nullptr);
  }
  return dcur;
}

double sigmoid(double x) {
  if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
  const double e = std::exp(x);
  return e / (1.0 + e);
}

double bce_with_logit(double logit, double target) {
  return std::max(logit, 0.0) - logit * target +
         std::log1p(std::exp(-std::abs(logit)));
}

double bce_with_logit_grad(double logit, double target) {
  return sigmoid(logit) - target;
}

void Adam::step(std::vector<double>& p, const std::vector<double>& g) {
  if (p.size() != m_.size() || g.size() != m_.size())
    throw std::invalid_argument("Adam: size mismatch");
  ++t_;
  const double bc1 = 1.0 - std::pow(beta1_, t_);
  const double bc2 = 1.0 - std::pow(beta2_, t_);
  for (std::size_t i = 0; i < p.size(); ++i) {
    m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * g[i];
    v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * g[i] * g[i];
    p[i] -= lr_ * (m_[i] / bc1) / (std::sqrt(v_[i] / bc2) + eps_);
  }
}

void Adadelta::step(std::vector<double>& p, const std::vector<double>& g,
                    double lr) {
  if (p.size() != eg_.size() || g.size() != eg_.size())
    throw std::invalid_argument("Adadelta: size mismatch");
  for (std::size_t i = 0; i < p.size(); ++i) {
    eg_[i] = rho_ * eg_[i] + (1.0 - rho_) * g[i] * g[i];
    const double dx =
        -std::sqrt(ex_[i] + eps_) / std::sqrt(eg_[i] + eps_) * g[i];
    ex_[i] = rho_ * ex_[i] + (1.0 - rho_) * dx * dx;
    p[i] += lr * dx;
  }
}

namespace {
constexpr char kBlobMagic[8] = {'T', 'T', 'B', 'L', 'O', 'B', '0', '1'};
}

void save_blob(const std::filesystem::path& path,
               const std::vector<double>& data) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write blob: " + path.string());
  out.write(kBlobMagic, sizeof(kBlobMagic));
  const std::uint64_t n = data.size();
  out.write(reinterpret_cast<const char*>(&n), sizeof(n));
  out.write(reinterpret_cast<const char*>(data.data()),
            static_cast<std::streamsize>(n * sizeof(double)));
  if (!out) throw std::runtime_error("blob write failed: " + path.string());
}

std::vector<double> load_blob(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read blob: " + path.string());
  char magic[8];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kBlobMagic, sizeof(magic)) != 0)
    throw std::runtime_error("not a parameter blob: " + path.string());
  std::uint64_t n = 0;
  in.read(reinterpret_cast<char*>(&n), sizeof(n));
  std::vector<double> data(n);
  in.read(reinterpret_cast<char*>(data.data()),
          static_cast<std::streamsize>(n * sizeof(double)));
  if (!in) throw std::runtime_error("truncated blob: " + path.string());
  return data;
}

void save_sidecar(const std::filesystem::path& path,
                  const std::map<std::string, std::string>& kv) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write sidecar: " + path.string());
  for (const auto& [k, v] : kv) out << k << "=" << v << "\n";
}

std::map<std::string, std::string> load_sidecar(
    const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read sidecar: " + path.string());
  std::map<std::string, std::string> kv;
  std::string line;
  while (std::getline(in, line)) {
    const auto eq = line.find('=');
    if (eq == std::string::npos) continue;
    kv[line.substr(0, eq)] = line.substr(eq + 1);
  }
  return kv;
}

std::uint64_t params_checksum(const std::vector<double>& p) {
  return fnv1a64(p.data(), p.size() * sizeof(double));
}

}  // namespace twintrigger
