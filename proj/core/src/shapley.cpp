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
#include "twintrigger/shapley.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <unordered_map>

#include "twintrigger/dct.hpp"
#include "twintrigger/rng.hpp"
#include "twintrigger/tgn.hpp"

namespace twintrigger {
namespace {

void check_patch_grid(const Grid& g, int n) {
  if (n < 1 || n > 7)
    throw std::invalid_argument("patch grid n must be in [1, 7]");
  if (g.height % n != 0 || g.width % n != 0)
    throw std::invalid_argument(
        "patch grid must divide the resolution exactly; padding is rejected");
}

// Insert a zero bit at position q, spreading a (m-1)-bit context over the
// full m-patch mask.
std::uint64_t expand_context(std::uint64_t t, int q) {
  const std::uint64_t low = t & ((std::uint64_t{1} << q) - 1);
  const std::uint64_t high = (t >> q) << (q + 1);
  return high | low;
}

struct ValueCache {
  const Spectrum& spectrum;
  int n;
  const ImageValueFn& value;
  std::unordered_map<std::uint64_t, double> memo;

  double operator()(std::uint64_t mask) {
    auto it = memo.find(mask);
    if (it != memo.end()) return it->second;
    const double v = value(mask_render(spectrum, n, mask));
    memo.emplace(mask, v);
    return v;
  }
};

// Shared enumeration core: per patch, average F(T + q) - F(T) over the
// supplied context draws, in draw order. Exact, exhaustive-sampled, and
// Monte Carlo paths all funnel through here, so equal context lists give
// bit-identical results.
AttributionResult attribute_over_contexts(
    const SpatialImage& image, const ImageValueFn& value, int n,
    const std::vector<std::vector<std::uint64_t>>& contexts,
    std::string method) {
  const Spectrum spectrum = dct2(image);
  ValueCache cache{spectrum, n, value, {}};
  const int m = n * n;
  AttributionResult res;
  res.n = n;
  res.method = std::move(method);
  res.samples = static_cast<int>(contexts.front().size());
  res.raw.resize(static_cast<std::size_t>(m), 0.0);
  for (int q = 0; q < m; ++q) {
    double sum = 0.0;
    for (const std::uint64_t t : contexts[static_cast<std::size_t>(q)]) {
      const std::uint64_t without = expand_context(t, q);
      const std::uint64_t with = without | (std::uint64_t{1} << q);
      sum += cache(with) - cache(without);
    }
    res.raw[static_cast<std::size_t>(q)] =
        sum / static_cast<double>(contexts[static_cast<std::size_t>(q)].size());
  }
  res.distribution = normalize_distribution(res.raw);
  return res;
}

std::vector<std::vector<std::uint64_t>> full_enumeration(int m) {
  const std::uint64_t count = std::uint64_t{1} << (m - 1);
  std::vector<std::uint64_t> all(count);
  std::iota(all.begin(), all.end(), std::uint64_t{0});
  return std::vector<std::vector<std::uint64_t>>(static_cast<std::size_t>(m),
                                                 all);
}

std::string fmt_val(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

}  // namespace

SpatialImage mask_render(const Spectrum& spectrum, int n,
                         std::uint64_t present_bits) {
  check_patch_grid(spectrum.coeff, n);
  const int m = n * n;
  if (m < 64 && (present_bits >> m) != 0)
    throw std::invalid_argument("mask_render: patch index out of range");
  const Grid& g = spectrum.coeff;
  const int ph = g.height / n;
  const int pw = g.width / n;
  Grid kept(g.height, g.width, g.channels);
  for (int pi = 0; pi < n; ++pi)
    for (int pj = 0; pj < n; ++pj) {
      const int q = pi * n + pj;
      if (((present_bits >> q) & 1u) == 0) continue;
      for (int c = 0; c < g.channels; ++c)
        for (int y = pi * ph; y < (pi + 1) * ph; ++y)
          for (int x = pj * pw; x < (pj + 1) * pw; ++x)
            kept.at(c, y, x) = g.at(c, y, x);
    }
  return clip_to_image(idct2(kept));
}

AttributionResult attribution_exact(const SpatialImage& image,
                                    const ImageValueFn& value, int n,
                                    std::uint64_t enumeration_cap) {
  check_patch_grid(image.pixels, n);
  const int m = n * n;
  const std::uint64_t count = std::uint64_t{1} << (m - 1);
  if (count > enumeration_cap)
    throw std::invalid_argument(
        "attribution_exact: 2^(n*n-1) contexts exceed the enumeration cap");
  return attribute_over_contexts(image, value, n, full_enumeration(m),
                                 "exact");
}

AttributionResult attribution_sampled(const SpatialImage& image,
                                      const ImageValueFn& value, int n,
                                      int m_samples, std::uint64_t seed,
                                      bool exhaustive) {
  check_patch_grid(image.pixels, n);
  const int m = n * n;
  if (exhaustive) {
    const std::uint64_t count = std::uint64_t{1} << (m - 1);
    if (count > 4096)
      throw std::invalid_argument(
          "attribution_sampled: exhaustive enumeration exceeds the cap");
    if (m_samples != 0 && static_cast<std::uint64_t>(m_samples) != count)
      throw std::invalid_argument(
          "attribution_sampled: exhaustive mode fixes M = 2^(n*n-1)");
    AttributionResult res = attribute_over_contexts(
        image, value, n, full_enumeration(m), "sampled-" + std::to_string(count));
    return res;
  }
  if (m_samples < 1)
    throw std::invalid_argument("attribution_sampled: M must be >= 1");
  Rng rng(derive_seed(seed, "shapley-sample"));
  const std::uint64_t ctx_mask = (std::uint64_t{1} << (m - 1)) - 1;
  std::vector<std::vector<std::uint64_t>> contexts(
      static_cast<std::size_t>(m));
  for (int q = 0; q < m; ++q) {
    contexts[static_cast<std::size_t>(q)].reserve(
        static_cast<std::size_t>(m_samples));
    for (int s = 0; s < m_samples; ++s)
      contexts[static_cast<std::size_t>(q)].push_back(rng.bits() & ctx_mask);
  }
  return attribute_over_contexts(image, value, n, contexts,
                                 "sampled-" + std::to_string(m_samples));
}

std::vector<double> normalize_distribution(const std::vector<double>& raw) {
  if (raw.empty())
    throw std::invalid_argument("normalize_distribution: empty input");
  double sum = 0.0;
  for (double v : raw) sum += std::abs(v);
  if (sum == 0.0)
    throw std::invalid_argument(
        "normalize_distribution: degenerate all-zero input");
  std::vector<double> out(raw.size());
  for (std::size_t i = 0; i < raw.size(); ++i) out[i] = std::abs(raw[i]) / sum;
  return out;
}

double tv_distance(const std::vector<double>& a, const std::vector<double>& b) {
  if (a.size() != b.size() || a.empty())
    throw std::invalid_argument("tv_distance: size mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) sum += std::abs(a[i] - b[i]);
  return 0.5 * sum;
}

TriadDistances compare_triad(const AttributionResult& clean,
                             const AttributionResult& invisible,
                             const AttributionResult& visible) {
  if (clean.n != invisible.n || clean.n != visible.n)
    throw std::invalid_argument("compare_triad: mismatched patch grids");
  TriadDistances d;
  d.inv_vis = tv_distance(invisible.distribution, visible.distribution);
  d.inv_clean = tv_distance(invisible.distribution, clean.distribution);
  d.vis_clean = tv_distance(visible.distribution, clean.distribution);
  return d;
}

std::vector<int> frequency_order(int n) {
  if (n < 1) throw std::invalid_argument("frequency_order: n must be >= 1");
  std::vector<int> order(static_cast<std::size_t>(n) * n);
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [n](int a, int b) {
    const int ai = a / n, aj = a % n, bi = b / n, bj = b % n;
    if (ai + aj != bi + bj) return ai + aj < bi + bj;
    return ai < bi;
  });
  return order;
}

void export_triad_curve(const std::filesystem::path& path,
                        const AttributionResult& clean,
                        const AttributionResult& invisible,
                        const AttributionResult& visible) {
  if (clean.n != invisible.n || clean.n != visible.n)
    throw std::invalid_argument("export_triad_curve: mismatched patch grids");
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "rank\tpatch_row\tpatch_col\tclean\tinvisible\tvisible\n";
  const std::vector<int> order = frequency_order(clean.n);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const int q = order[r];
    out << r << "\t" << q / clean.n << "\t" << q % clean.n << "\t"
        << fmt_val(clean.distribution[static_cast<std::size_t>(q)]) << "\t"
        << fmt_val(invisible.distribution[static_cast<std::size_t>(q)]) << "\t"
        << fmt_val(visible.distribution[static_cast<std::size_t>(q)]) << "\n";
  }
  if (!out) throw std::runtime_error("short write to " + path.string());
}

ImageValueFn area_loss_fn(const Detector& detector, double soft_thresh) {
  return [&detector, soft_thresh](const SpatialImage& image) {
    return area_loss(detector.detect_soft(image, soft_thresh));
  };
}

}  // namespace twintrigger
