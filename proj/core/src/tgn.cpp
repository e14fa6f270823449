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
#include "twintrigger/tgn.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>
#include <utility>

#include "twintrigger/checksum.hpp"
#include "twintrigger/dct.hpp"
#include "twintrigger/rng.hpp"

namespace twintrigger {
namespace {

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

std::vector<SpatialImage> load_sample(const DatasetManifest& m,
                                      int sample_count, std::uint64_t seed,
                                      const std::string& tag) {
  if (m.records.empty())
    throw std::invalid_argument("trigger training needs a non-empty dataset");
  std::vector<std::size_t> order(m.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(seed, tag));
  rng.shuffle(order);
  std::size_t take = order.size();
  if (sample_count > 0)
    take = std::min<std::size_t>(static_cast<std::size_t>(sample_count), take);
  std::vector<SpatialImage> images;
  images.reserve(take);
  for (std::size_t i = 0; i < take; ++i)
    images.push_back(load_record_image(m, m.records[order[i]]));
  return images;
}

}  // namespace

double bce_fool_loss(const std::vector<double>& probs) {
  if (probs.empty())
    throw std::invalid_argument("bce_fool_loss: empty batch");
  double sum = 0.0;
  for (double p : probs) {
    if (!(p >= 0.0) || !(p < 1.0))
      throw std::invalid_argument(
          "bce_fool_loss: probabilities must lie in [0, 1)");
    sum -= std::log(1.0 - p);
  }
  return sum / static_cast<double>(probs.size());
}

double mse_loss(const SpatialImage& a, const SpatialImage& b) {
  if (!a.pixels.same_shape(b.pixels))
    throw std::invalid_argument("mse_loss: shape mismatch");
  double sum = 0.0;
  for (std::size_t i = 0; i < a.pixels.v.size(); ++i) {
    const double d = a.pixels.v[i] - b.pixels.v[i];
    sum += d * d;
  }
  return sum;
}

double area_loss(const SoftDetections& dets) {
  if (dets.dets.empty()) return 0.0;
  double sum = 0.0;
  for (const SoftDet& d : dets.dets)
    sum += std::exp(d.w_norm * d.h_norm * d.p);
  return sum / static_cast<double>(dets.dets.size());
}

std::vector<std::array<double, 3>> area_loss_grad(const SoftDetections& dets) {
  std::vector<std::array<double, 3>> g(dets.dets.size());
  if (dets.dets.empty()) return g;
  const double inv_n = 1.0 / static_cast<double>(dets.dets.size());
  for (std::size_t k = 0; k < dets.dets.size(); ++k) {
    const SoftDet& d = dets.dets[k];
    const double e = std::exp(d.w_norm * d.h_norm * d.p) * inv_n;
    g[k] = {e * d.h_norm * d.p, e * d.w_norm * d.p, e * d.w_norm * d.h_norm};
  }
  return g;
}

double victim_alignment_loss(const std::vector<double>& f_inv,
                             const std::vector<double>& f_vis) {
  if (f_inv.empty() || f_inv.size() != f_vis.size())
    throw std::invalid_argument(
        "victim_alignment_loss: paired non-empty inputs required");
  double sum = 0.0;
  for (std::size_t i = 0; i < f_inv.size(); ++i) {
    const double d = f_inv[i] - f_vis[i];
    sum += d * d;
  }
  return sum / static_cast<double>(f_inv.size());
}

void save_trigger(const std::filesystem::path& path, const Trigger& t) {
  const Grid& g = t.spectrum.coeff;
  if (g.v.empty()) throw std::invalid_argument("save_trigger: empty spectrum");
  if (t.kind != "invisible" && t.kind != "visible")
    throw std::invalid_argument("save_trigger: unknown kind " + t.kind);
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << "twintrigger-trigger v1\n";
  out << "kind " << t.kind << "\n";
  out << "height " << g.height << "\n";
  out << "width " << g.width << "\n";
  out << "channels " << g.channels << "\n";
  out << "prov " << t.provenance.size() << "\n";
  for (const auto& [k, v] : t.provenance) {
    if (k.find('=') != std::string::npos || k.find('\n') != std::string::npos ||
        v.find('\n') != std::string::npos)
      throw std::invalid_argument("save_trigger: provenance must be line-safe");
    out << k << "=" << v << "\n";
  }
  out << "DATA\n";
  out.write(reinterpret_cast<const char*>(g.v.data()),
            static_cast<std::streamsize>(g.v.size() * sizeof(double)));
  if (!out) throw std::runtime_error("short write to " + path.string());
}

Trigger load_trigger(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read " + path.string());
  std::string line;
  auto next = [&](const char* what) {
    if (!std::getline(in, line))
      throw std::runtime_error(std::string("truncated trigger file: ") + what);
    return line;
  };
  if (next("magic") != "twintrigger-trigger v1")
    throw std::runtime_error("not a trigger file: " + path.string());
  auto field = [&](const std::string& key) {
    next(key.c_str());
    if (line.rfind(key + " ", 0) != 0)
      throw std::runtime_error("trigger file missing field " + key);
    return line.substr(key.size() + 1);
  };
  Trigger t;
  t.kind = field("kind");
  if (t.kind != "invisible" && t.kind != "visible")
    throw std::runtime_error("trigger file has unknown kind " + t.kind);
  const int h = std::stoi(field("height"));
  const int w = std::stoi(field("width"));
  const int c = std::stoi(field("channels"));
  if (h < 1 || w < 1 || (c != 1 && c != 3))
    throw std::runtime_error("trigger file has invalid shape");
  const long np = std::stol(field("prov"));
  if (np < 0 || np > 4096)
    throw std::runtime_error("trigger file has invalid provenance count");
  for (long i = 0; i < np; ++i) {
    next("provenance");
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw std::runtime_error("malformed trigger provenance line");
    t.provenance[line.substr(0, eq)] = line.substr(eq + 1);
  }
  if (next("DATA") != "DATA")
    throw std::runtime_error("trigger file missing DATA sentinel");
  Grid g(h, w, c);
  in.read(reinterpret_cast<char*>(g.v.data()),
          static_cast<std::streamsize>(g.v.size() * sizeof(double)));
  if (static_cast<std::size_t>(in.gcount()) != g.v.size() * sizeof(double))
    throw std::runtime_error("trigger file payload truncated");
  if (!g.all_finite())
    throw std::runtime_error("trigger file holds non-finite coefficients");
  t.spectrum = Spectrum{std::move(g)};
  t.spatial = idct2(t.spectrum.coeff);
  return t;
}

TriggerGenerator::TriggerGenerator(std::string kind, int width, int height,
                                   double sigma, double amplitude,
                                   std::uint64_t seed)
    : kind_(std::move(kind)),
      width_(width),
      height_(height),
      sigma_(sigma),
      amplitude_(amplitude),
      net_(3, {{16, 3, 1, Act::lrelu},
               {32, 3, 1, Act::lrelu},
               {64, 3, 1, Act::lrelu},
               {32, 3, 1, Act::lrelu},
               {16, 3, 1, Act::lrelu},
               {3, 3, 1, Act::tanh_act}}),
      noise_(height > 0 && width > 0 ? Grid(height, width, 3) : Grid()) {
  if (kind_ != "invisible" && kind_ != "visible")
    throw std::invalid_argument("trigger kind must be invisible or visible");
  if (width_ < 8 || height_ < 8)
    throw std::invalid_argument("trigger canvas must be at least 8x8");
  if (!(amplitude_ > 0.0) || !(amplitude_ <= 1.0))
    throw std::invalid_argument("trigger amplitude must be in (0, 1]");
  if (!(sigma_ > 0.0))
    throw std::invalid_argument("trigger sigma must be positive");
  params_.resize(net_.param_count());
  Rng init(derive_seed(seed, "tgn-init-" + kind_));
  net_.init_params(params_.data(), init);
  Rng nz(derive_seed(seed, "tgn-noise-" + kind_));
  for (double& v : noise_.v) v = nz.normal();
}

Grid TriggerGenerator::raw_forward(std::vector<Grid>* tape) const {
  Grid out = net_.forward(params_.data(), noise_, tape);
  for (double& v : out.v) v *= amplitude_;
  return out;
}

Grid TriggerGenerator::trigger_spatial(std::vector<Grid>* tape) const {
  Grid raw = raw_forward(tape);
  if (kind_ == "invisible")
    return idct2(gaussian_lowpass(Spectrum{dct2(raw)}, sigma_).coeff);
  return raw;
}

Trigger TriggerGenerator::render() const {
  Grid raw = raw_forward(nullptr);
  Trigger t;
  t.kind = kind_;
  if (kind_ == "invisible") {
    t.spectrum = gaussian_lowpass(Spectrum{dct2(raw)}, sigma_);
    t.spatial = idct2(t.spectrum.coeff);
  } else {
    t.spectrum = Spectrum{dct2(raw)};
    t.spatial = std::move(raw);
  }
  return t;
}

void TriggerGenerator::backward_from_spatial(const std::vector<Grid>& tape,
                                             const Grid& dspatial,
                                             double* grad) const {
  Grid d = dspatial;
  if (kind_ == "invisible") {
    // The render chain idct2 . mask . dct2 is self-adjoint, so the
    // gradient passes through the identical chain.
    d = idct2(gaussian_lowpass(Spectrum{dct2(d)}, sigma_).coeff);
  }
  for (double& v : d.v) v *= amplitude_;
  net_.backward(params_.data(), noise_, tape, std::move(d), grad);
}

void TriggerGenerator::save(
    const std::filesystem::path& prefix,
    const std::map<std::string, std::string>& extra) const {
  std::vector<double> blob = params_;
  blob.insert(blob.end(), noise_.v.begin(), noise_.v.end());
  save_blob(prefix.string() + ".bin", blob);
  std::map<std::string, std::string> kv = extra;
  kv["model"] = "trigger-generator";
  kv["kind"] = kind_;
  kv["width"] = std::to_string(width_);
  kv["height"] = std::to_string(height_);
  kv["sigma"] = fmt_double(sigma_);
  kv["amplitude"] = fmt_double(amplitude_);
  kv["param_count"] = std::to_string(params_.size());
  kv["params_checksum"] = to_hex(params_checksum(params_));
  save_sidecar(prefix.string() + ".meta", kv);
}

TriggerGenerator TriggerGenerator::load(const std::filesystem::path& prefix) {
  const auto kv = load_sidecar(prefix.string() + ".meta");
  if (kv.count("model") == 0 || kv.at("model") != "trigger-generator")
    throw std::runtime_error("not a trigger-generator checkpoint: " +
                             prefix.string());
  TriggerGenerator gen(kv.at("kind"), std::stoi(kv.at("width")),
                       std::stoi(kv.at("height")), std::stod(kv.at("sigma")),
                       std::stod(kv.at("amplitude")), 0);
  const std::vector<double> blob = load_blob(prefix.string() + ".bin");
  const std::size_t pc = std::stoul(kv.at("param_count"));
  if (pc != gen.params_.size() || blob.size() != pc + gen.noise_.v.size())
    throw std::runtime_error("trigger-generator blob size mismatch: " +
                             prefix.string());
  std::copy(blob.begin(), blob.begin() + static_cast<std::ptrdiff_t>(pc),
            gen.params_.begin());
  std::copy(blob.begin() + static_cast<std::ptrdiff_t>(pc), blob.end(),
            gen.noise_.v.begin());
  if (to_hex(params_checksum(gen.params_)) != kv.at("params_checksum"))
    throw std::runtime_error("trigger-generator checksum mismatch: " +
                             prefix.string());
  return gen;
}

double schedule_lr(const std::vector<LrMilestone>& schedule, int epoch) {
  if (schedule.empty())
    throw std::invalid_argument("schedule_lr: empty schedule");
  bool found = false;
  int best_epoch = 0;
  double lr = 0.0;
  for (const LrMilestone& m : schedule) {
    if (m.epoch <= epoch && (!found || m.epoch >= best_epoch)) {
      found = true;
      best_epoch = m.epoch;
      lr = m.lr;
    }
  }
  if (!found)
    throw std::invalid_argument("schedule_lr: no milestone at or before epoch");
  if (!(lr > 0.0)) throw std::invalid_argument("schedule_lr: lr must be > 0");
  return lr;
}

Tgn1Result train_tgn1(const DatasetManifest& clean,
                      const ArtifactClassifier& clf, const Tgn1Hyper& hyper) {
  if (hyper.epochs < 1 || hyper.batch < 1)
    throw std::invalid_argument("train_tgn1: bad epochs or batch");
  if (clf.width() != clean.width || clf.height() != clean.height)
    throw std::invalid_argument(
        "train_tgn1: classifier and dataset resolution differ");
  const std::vector<SpatialImage> images =
      load_sample(clean, hyper.sample_count, hyper.seed, "tgn1-sample");
  const std::uint64_t frozen = params_checksum(clf.params());

  TriggerGenerator gen("invisible", clean.width, clean.height, hyper.sigma,
                       hyper.amplitude, hyper.seed);
  Adadelta opt(gen.params().size());
  std::vector<double> grad(gen.params().size(), 0.0);
  Rng batcher(derive_seed(hyper.seed, "tgn1-batches"));
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});

  Tgn1Log log;
  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double lr = schedule_lr(hyper.schedule, epoch);
    batcher.shuffle(idx);
    double ep_bce = 0.0, ep_mse = 0.0;
    for (std::size_t start = 0; start < idx.size();
         start += static_cast<std::size_t>(hyper.batch)) {
      const std::size_t end =
          std::min(idx.size(), start + static_cast<std::size_t>(hyper.batch));
      const double n = static_cast<double>(end - start);
      std::vector<Grid> tape;
      const Grid delta = gen.trigger_spatial(&tape);
      Grid ddelta(clean.height, clean.width, 3);
      // Distortion enters per cell so the fool/distortion balance does not
      // depend on resolution.
      const double cells = static_cast<double>(delta.v.size());
      for (std::size_t k = start; k < end; ++k) {
        const SpatialImage& m = images[idx[k]];
        Grid raw = m.pixels;
        for (std::size_t i = 0; i < raw.v.size(); ++i) raw.v[i] += delta.v[i];
        const SpatialImage poisoned = clip_to_image(raw);
        const double p = clf.predict_poisoned(poisoned);
        ep_bce -= std::log(std::max(1.0 - p, 1e-300));
        const Grid dimg = clf.input_gradient(poisoned, hyper.w_bce * p / n);
        double pair_mse = 0.0;
        for (std::size_t i = 0; i < raw.v.size(); ++i) {
          const double diff = poisoned.pixels.v[i] - m.pixels.v[i];
          pair_mse += diff * diff;
          if (raw.v[i] < 0.0 || raw.v[i] > 1.0) continue;  // clipped cell
          ddelta.v[i] += dimg.v[i] + hyper.w_mse * hyper.mse_scale * 2.0 *
                                         diff / (n * cells);
        }
        ep_mse += hyper.mse_scale * pair_mse / cells;
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      gen.backward_from_spatial(tape, ddelta, grad.data());
      opt.step(gen.params(), grad, lr);
    }
    const double count = static_cast<double>(images.size());
    log.bce.push_back(ep_bce / count);
    log.mse.push_back(ep_mse / count);
    log.total.push_back(hyper.w_bce * log.bce.back() +
                        hyper.w_mse * log.mse.back());
  }
  if (params_checksum(clf.params()) != frozen)
    throw std::logic_error("train_tgn1: frozen classifier changed");

  Tgn1Result res{std::move(gen), Trigger{}, std::move(log)};
  res.trigger = res.generator.render();
  res.trigger.provenance = {{"kind", "invisible"},
                            {"sigma", fmt_double(hyper.sigma)},
                            {"amplitude", fmt_double(hyper.amplitude)},
                            {"epochs", std::to_string(hyper.epochs)},
                            {"w_bce", fmt_double(hyper.w_bce)},
                            {"w_mse", fmt_double(hyper.w_mse)},
                            {"seed", std::to_string(hyper.seed)}};
  return res;
}

Tgn2Result train_tgn2(const DatasetManifest& clean, const Detector& victim,
                      const Trigger& inv_trigger, const Tgn2Hyper& hyper) {
  if (hyper.epochs < 1 || hyper.batch < 1)
    throw std::invalid_argument("train_tgn2: bad epochs or batch");
  if (victim.width() != clean.width || victim.height() != clean.height)
    throw std::invalid_argument(
        "train_tgn2: victim and dataset resolution differ");
  if (inv_trigger.spatial.height != clean.height ||
      inv_trigger.spatial.width != clean.width ||
      inv_trigger.spatial.channels != 3)
    throw std::invalid_argument(
        "train_tgn2: invisible trigger resolution differs from dataset");
  const std::vector<SpatialImage> images =
      load_sample(clean, hyper.sample_count, hyper.seed, "tgn2-sample");
  const std::uint64_t frozen = params_checksum(victim.params());
  const double count = static_cast<double>(images.size());

  // The invisible side of the alignment target never changes under theta2.
  std::vector<double> f_inv(images.size());
  for (std::size_t i = 0; i < images.size(); ++i) {
    Grid raw = images[i].pixels;
    for (std::size_t j = 0; j < raw.v.size(); ++j)
      raw.v[j] += inv_trigger.spatial.v[j];
    f_inv[i] = area_loss(
        victim.detect_soft(clip_to_image(std::move(raw)), hyper.soft_thresh));
  }

  TriggerGenerator gen("visible", clean.width, clean.height, 1.0,
                       hyper.amplitude, hyper.seed);
  auto mean_gap = [&]() {
    const Grid delta = gen.trigger_spatial(nullptr);
    double s = 0.0;
    for (std::size_t i = 0; i < images.size(); ++i) {
      Grid raw = images[i].pixels;
      for (std::size_t j = 0; j < raw.v.size(); ++j) raw.v[j] += delta.v[j];
      const double f = area_loss(victim.detect_soft(
          clip_to_image(std::move(raw)), hyper.soft_thresh));
      s += std::abs(f - f_inv[i]);
    }
    return s / count;
  };

  Tgn2Log log;
  log.align_gap_initial = mean_gap();

  Adadelta opt(gen.params().size());
  std::vector<double> grad(gen.params().size(), 0.0);
  Rng batcher(derive_seed(hyper.seed, "tgn2-batches"));
  std::vector<std::size_t> idx(images.size());
  std::iota(idx.begin(), idx.end(), std::size_t{0});

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    const double lr = schedule_lr(hyper.schedule, epoch);
    batcher.shuffle(idx);
    double ep_area = 0.0, ep_mse = 0.0, ep_victim = 0.0;
    for (std::size_t start = 0; start < idx.size();
         start += static_cast<std::size_t>(hyper.batch)) {
      const std::size_t end =
          std::min(idx.size(), start + static_cast<std::size_t>(hyper.batch));
      const double n = static_cast<double>(end - start);
      std::vector<Grid> tape;
      const Grid delta = gen.trigger_spatial(&tape);
      Grid ddelta(clean.height, clean.width, 3);
      const double cells = static_cast<double>(delta.v.size());
      for (std::size_t k = start; k < end; ++k) {
        const SpatialImage& m = images[idx[k]];
        Grid raw = m.pixels;
        for (std::size_t i = 0; i < raw.v.size(); ++i) raw.v[i] += delta.v[i];
        const SpatialImage vt = clip_to_image(raw);
        const SoftDetections soft = victim.detect_soft(vt, hyper.soft_thresh);
        const double f = area_loss(soft);
        const double fi = f_inv[idx[k]];
        ep_area += f;
        ep_victim += (f - fi) * (f - fi);
        const double df =
            hyper.w_area / n + hyper.w_victim * 2.0 * (f - fi) / n;
        Grid dimg(clean.height, clean.width, 3);
        if (soft.count() > 0) {
          auto ag = area_loss_grad(soft);
          for (auto& g3 : ag)
            for (double& g : g3) g *= df;
          dimg = victim.soft_backward(vt, soft, ag);
        }
        double pair_mse = 0.0;
        for (std::size_t i = 0; i < raw.v.size(); ++i) {
          const double diff = vt.pixels.v[i] - m.pixels.v[i];
          pair_mse += diff * diff;
          if (raw.v[i] < 0.0 || raw.v[i] > 1.0) continue;
          ddelta.v[i] += dimg.v[i] + hyper.w_mse * hyper.mse_scale * 2.0 *
                                         diff / (n * cells);
        }
        ep_mse += hyper.mse_scale * pair_mse / cells;
      }
      std::fill(grad.begin(), grad.end(), 0.0);
      gen.backward_from_spatial(tape, ddelta, grad.data());
      opt.step(gen.params(), grad, lr);
    }
    log.area.push_back(ep_area / count);
    log.mse.push_back(ep_mse / count);
    log.victim.push_back(ep_victim / count);
    log.total.push_back(hyper.w_area * log.area.back() +
                        hyper.w_mse * log.mse.back() +
                        hyper.w_victim * log.victim.back());
  }
  log.align_gap_final = mean_gap();
  if (params_checksum(victim.params()) != frozen)
    throw std::logic_error("train_tgn2: frozen victim changed");

  Tgn2Result res{std::move(gen), Trigger{}, std::move(log)};
  res.trigger = res.generator.render();
  res.trigger.provenance = {{"kind", "visible"},
                            {"amplitude", fmt_double(hyper.amplitude)},
                            {"epochs", std::to_string(hyper.epochs)},
                            {"soft_thresh", fmt_double(hyper.soft_thresh)},
                            {"seed", std::to_string(hyper.seed)}};
  return res;
}

}  // namespace twintrigger
