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

#include <Eigen/Dense>

#include "twintrigger/grid.hpp"

namespace twintrigger {

// Orthonormal type-II DCT matrix of size n x n: B(k, x) = c_k cos((2x+1)k pi / 2n)
// with c_0 = sqrt(1/n) and c_k = sqrt(2/n) otherwise. Rows are the basis
// functions h_k; B * B^T = I. Cached per size.
const Eigen::MatrixXd& dct_matrix(int n);

// Per-channel 2-D orthonormal DCT: G = B_h * X * B_w^T.
Grid dct2(const Grid& spatial);

// Exact inverse: X = B_h^T * G * B_w. Output is unclipped.
Grid idct2(const Grid& coeff);

Spectrum dct2(const SpatialImage& image);
Grid idct2(const Spectrum& spectrum);

// Basic image I_{i,j}: single unit pixel at (i, j), one channel.
SpatialImage basis_spatial(BasisIndex idx, int w, int h);

// Its frequency-domain counterpart G_{i,j}(u,v) = C(u) D(v) h_u(i) h_v(j),
// evaluated in closed form.
Spectrum basis_spectrum(BasisIndex idx, int w, int h);

// Multiply coefficients elementwise by exp(-(u^2+v^2) / (2 sigma^2)),
// anchored at DC. DC passes unchanged.
Spectrum gaussian_lowpass(const Spectrum& spectrum, double sigma);

// Gradient of gaussian_lowpass: the mask is its own adjoint.
Grid gaussian_lowpass_backward(const Grid& dout, double sigma);

// Sum of squared coefficients over all channels with r_lo <= sqrt(u^2+v^2) < r_hi.
double band_energy(const Spectrum& spectrum, double r_lo, double r_hi);

// Shannon entropy (nats) of the normalized absolute-value distribution
// over all cells; 0 for an all-zero grid.
double shannon_entropy(const Grid& g);

// Grayscale rendering of a spectrum: log1p of absolute coefficients,
// averaged over channels, max-normalized to [0,1]. Single channel.
Grid spectrum_heatmap(const Spectrum& spectrum);

}  // namespace twintrigger
