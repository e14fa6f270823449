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
#include "twintrigger/dct.hpp"

#include <cmath>
#include <map>
#include <stdexcept>

namespace twintrigger {

namespace {

using Eigen::MatrixXd;

Eigen::Map<const MatrixXd> channel_map(const Grid& g, int c) {
  return Eigen::Map<const MatrixXd>(g.v.data() + static_cast<std::size_t>(c) *
                                                     g.height * g.width,
                                    g.width, g.height);
}

Eigen::Map<MatrixXd> channel_map(Grid& g, int c) {
  return Eigen::Map<MatrixXd>(
      g.v.data() + static_cast<std::size_t>(c) * g.height * g.width, g.width,
      g.height);
}

void require_finite(const Grid& g, const char* what) {
  if (g.height < 1 || g.width < 1 || g.channels < 1)
    throw std::invalid_argument(std::string(what) + ": empty grid");
  if (!g.all_finite())
    throw std::invalid_argument(std::string(what) + ": non-finite values");
}

}  // namespace

const MatrixXd& dct_matrix(int n) {
  static std::map<int, MatrixXd> cache;
  auto it = cache.find(n);
  if (it != cache.end()) return it->second;
  if (n < 1) throw std::invalid_argument("dct_matrix: n must be positive");
  MatrixXd b(n, n);
  const double c0 = std::sqrt(1.0 / n);
  const double ck = std::sqrt(2.0 / n);
  for (int k = 0; k < n; ++k) {
    for (int x = 0; x < n; ++x) {
      b(k, x) = (k == 0 ? c0 : ck) *
                std::cos((2.0 * x + 1.0) * k * M_PI / (2.0 * n));
    }
  }
  return cache.emplace(n, std::move(b)).first->second;
}

Grid dct2(const Grid& spatial) {
  require_finite(spatial, "dct2");
  const MatrixXd& bh = dct_matrix(spatial.height);
  const MatrixXd& bw = dct_matrix(spatial.width);
  Grid out(spatial.height, spatial.width, spatial.channels);
  for (int c = 0; c < spatial.channels; ++c) {
    // Grid storage is row-major per channel; the maps view each plane as a
    // width x height column-major matrix, i.e. the transpose X^T. Then
    // (B_h X B_w^T)^T = B_w X^T B_h^T.
    channel_map(out, c) = bw * channel_map(spatial, c) * bh.transpose();
  }
  return out;
}

Grid idct2(const Grid& coeff) {
  require_finite(coeff, "idct2");
  const MatrixXd& bh = dct_matrix(coeff.height);
  const MatrixXd& bw = dct_matrix(coeff.width);
  Grid out(coeff.height, coeff.width, coeff.channels);
  for (int c = 0; c < coeff.channels; ++c) {
    channel_map(out, c) = bw.transpose() * channel_map(coeff, c) * bh;
  }
  return out;
}

Spectrum dct2(const SpatialImage& image) {
  validate_image(image);
  return Spectrum{dct2(image.pixels)};
}

Grid idct2(const Spectrum& spectrum) {
  validate_spectrum(spectrum);
  return idct2(spectrum.coeff);
}

SpatialImage basis_spatial(BasisIndex idx, int w, int h) {
  if (idx.i < 0 || idx.i >= h || idx.j < 0 || idx.j >= w)
    throw std::invalid_argument("basis_spatial: index out of bounds");
  Grid g(h, w, 1);
  g.at(0, idx.i, idx.j) = 1.0;
  return SpatialImage{std::move(g)};
}

Spectrum basis_spectrum(BasisIndex idx, int w, int h) {
  if (idx.i < 0 || idx.i >= h || idx.j < 0 || idx.j >= w)
    throw std::invalid_argument("basis_spectrum: index out of bounds");
  const MatrixXd& bh = dct_matrix(h);
  const MatrixXd& bw = dct_matrix(w);
  Grid g(h, w, 1);
  for (int u = 0; u < h; ++u) {
    for (int v = 0; v < w; ++v) {
      g.at(0, u, v) = bh(u, idx.i) * bw(v, idx.j);
    }
  }
  return Spectrum{std::move(g)};
}

Spectrum gaussian_lowpass(const Spectrum& spectrum, double sigma) {
  validate_spectrum(spectrum);
  if (!(sigma > 0.0))
    throw std::invalid_argument("gaussian_lowpass: sigma must be positive");
  const Grid& in = spectrum.coeff;
  Grid out(in.height, in.width, in.channels);
  const double inv = 1.0 / (2.0 * sigma * sigma);
  for (int c = 0; c < in.channels; ++c) {
    for (int u = 0; u < in.height; ++u) {
      for (int v = 0; v < in.width; ++v) {
        const double mask =
            std::exp(-(static_cast<double>(u) * u + static_cast<double>(v) * v) *
                     inv);
        out.at(c, u, v) = in.at(c, u, v) * mask;
      }
    }
  }
  return Spectrum{std::move(out)};
}

Grid gaussian_lowpass_backward(const Grid& dout, double sigma) {
  return gaussian_lowpass(Spectrum{dout}, sigma).coeff;
}

double band_energy(const Spectrum& spectrum, double r_lo, double r_hi) {
  validate_spectrum(spectrum);
  if (!(r_lo >= 0.0) || !(r_lo < r_hi))
    throw std::invalid_argument("band_energy: need 0 <= r_lo < r_hi");
  const Grid& g = spectrum.coeff;
  const double lo2 = r_lo * r_lo;
  const double hi2 = r_hi * r_hi;
  double e = 0.0;
  for (int c = 0; c < g.channels; ++c) {
    for (int u = 0; u < g.height; ++u) {
      for (int v = 0; v < g.width; ++v) {
        const double r2 = static_cast<double>(u) * u + static_cast<double>(v) * v;
        if (r2 >= lo2 && r2 < hi2) {
          const double x = g.at(c, u, v);
          e += x * x;
        }
      }
    }
  }
  return e;
}

double shannon_entropy(const Grid& g) {
  double total = 0.0;
  for (double x : g.v) total += std::abs(x);
  if (total <= 0.0) return 0.0;
  double h = 0.0;
  for (double x : g.v) {
    const double p = std::abs(x) / total;
    if (p > 0.0) h -= p * std::log(p);
  }
  return h;
}

Grid spectrum_heatmap(const Spectrum& spectrum) {
  validate_spectrum(spectrum);
  const Grid& g = spectrum.coeff;
  Grid out(g.height, g.width, 1);
  for (int c = 0; c < g.channels; ++c) {
    for (int u = 0; u < g.height; ++u) {
      for (int v = 0; v < g.width; ++v) {
        out.at(0, u, v) += std::log1p(std::abs(g.at(c, u, v))) / g.channels;
      }
    }
  }
  const double m = out.max_abs();
  if (m > 0.0) {
    for (double& x : out.v) x /= m;
  }
  return out;
}

}  // namespace twintrigger
