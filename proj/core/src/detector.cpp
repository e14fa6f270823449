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
#include "twintrigger/detector.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numeric>
#include <stdexcept>

#include "twintrigger/baseline.hpp"
#include "twintrigger/checksum.hpp"
#include "twintrigger/pngio.hpp"
#include "twintrigger/synth.hpp"

namespace twintrigger {

namespace {

std::vector<LayerSpec> detector_layers(const std::string& arch, int k) {
  const int head = 5 + k;
  if (arch == "tiny-A") {
    return {{8, 3, 2, Act::lrelu, -1},
            {12, 3, 2, Act::lrelu, -1},
            {16, 3, 2, Act::lrelu, -1},
            {16, 3, 1, Act::lrelu, -1},
            {24, 3, 1, Act::lrelu, -1},
            {24, 3, 1, Act::lrelu, 4},
            {24, 0, 1, Act::none, -1},
            {head, 1, 1, Act::none, -1}};
  }
  if (arch == "tiny-B") {
    return {{10, 3, 2, Act::lrelu, -1},
            {14, 3, 2, Act::lrelu, -1},
            {20, 3, 2, Act::lrelu, -1},
            {20, 3, 1, Act::lrelu, 2},
            {20, 3, 1, Act::lrelu, -1},
            {20, 3, 1, Act::lrelu, 3},
            {20, 0, 1, Act::none, -1},
            {head, 1, 1, Act::none, -1}};
  }
  throw std::invalid_argument("unknown detector arch: " + arch);
}

double box_iou_xywh(double ax, double ay, double aw, double ah, double bx,
                    double by, double bw, double bh) {
  const double ix = std::max(0.0, std::min(ax + aw, bx + bw) - std::max(ax, bx));
  const double iy = std::max(0.0, std::min(ay + ah, by + bh) - std::max(ay, by));
  const double inter = ix * iy;
  const double uni = aw * ah + bw * bh - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

}  // namespace

Detector::Detector(std::string arch, int width, int height, int num_classes,
                   std::uint64_t seed)
    : arch_(std::move(arch)),
      width_(width),
      height_(height),
      num_classes_(num_classes),
      net_(3, detector_layers(arch_, num_classes)) {
  if (width_ % 8 != 0 || height_ % 8 != 0)
    throw std::invalid_argument("detector: resolution must be divisible by 8");
  stride_ = 8;
  grid_w_ = width_ / stride_;
  grid_h_ = height_ / stride_;
  params_.assign(net_.param_count(), 0.0);
  Rng rng(derive_seed(seed, "detector-init-" + arch_));
  net_.init_params(params_.data(), rng);
  // Start near "no objects anywhere" so early training is stable and an
  // untrained detector emits nothing at the default threshold.
  const int last = static_cast<int>(net_.layers().size()) - 1;
  params_[net_.bias_offset(last)] = -4.0;
}

Grid Detector::head_forward(const Grid& image, std::vector<Grid>* tape) const {
  if (image.height != height_ || image.width != width_ || image.channels != 3)
    throw std::invalid_argument("detector: resolution mismatch");
  return net_.forward(params_.data(), image, tape);
}

std::vector<DetectionBox> Detector::detect(const SpatialImage& image,
                                           double conf_thresh,
                                           double nms_iou) const {
  const Grid head = head_forward(image.pixels, nullptr);
  std::vector<DetectionBox> cand;
  for (int gy = 0; gy < grid_h_; ++gy) {
    for (int gx = 0; gx < grid_w_; ++gx) {
      const double p = sigmoid(head.at(0, gy, gx));
      if (p < conf_thresh) continue;
      DetectionBox b;
      b.p = p;
      const double cx = (gx + sigmoid(head.at(1, gy, gx))) * stride_;
      const double cy = (gy + sigmoid(head.at(2, gy, gx))) * stride_;
      b.w = sigmoid(head.at(3, gy, gx)) * width_;
      b.h = sigmoid(head.at(4, gy, gx)) * height_;
      b.x = cx - b.w / 2.0;
      b.y = cy - b.h / 2.0;
      int best = 0;
      for (int c = 1; c < num_classes_; ++c) {
        if (head.at(5 + c, gy, gx) > head.at(5 + best, gy, gx)) best = c;
      }
      b.c = best;
      cand.push_back(b);
    }
  }
  std::stable_sort(cand.begin(), cand.end(),
                   [](const DetectionBox& a, const DetectionBox& b) {
                     return a.p > b.p;
                   });
  std::vector<DetectionBox> kept;
  for (const DetectionBox& b : cand) {
    bool suppressed = false;
    for (const DetectionBox& k : kept) {
      if (box_iou_xywh(b.x, b.y, b.w, b.h, k.x, k.y, k.w, k.h) > nms_iou) {
        suppressed = true;
        break;
      }
    }
    if (!suppressed) kept.push_back(b);
  }
  return kept;
}

SoftDetections Detector::detect_soft(const SpatialImage& image,
                                     double soft_thresh) const {
  const Grid head = head_forward(image.pixels, nullptr);
  SoftDetections out;
  for (int gy = 0; gy < grid_h_; ++gy) {
    for (int gx = 0; gx < grid_w_; ++gx) {
      const double p = sigmoid(head.at(0, gy, gx));
      if (p <= soft_thresh) continue;
      SoftDet d;
      d.p = p;
      d.w_norm = sigmoid(head.at(3, gy, gx));
      d.h_norm = sigmoid(head.at(4, gy, gx));
      d.cell = gy * grid_w_ + gx;
      out.dets.push_back(d);
    }
  }
  return out;
}

Grid Detector::soft_backward(
    const SpatialImage& image, const SoftDetections& dets,
    const std::vector<std::array<double, 3>>& ddets) const {
  if (dets.dets.size() != ddets.size())
    throw std::invalid_argument("soft_backward: gradient count mismatch");
  std::vector<Grid> tape;
  const Grid head = head_forward(image.pixels, &tape);
  Grid dhead(grid_h_, grid_w_, head.channels);
  for (std::size_t i = 0; i < dets.dets.size(); ++i) {
    const SoftDet& d = dets.dets[i];
    const int gy = d.cell / grid_w_;
    const int gx = d.cell % grid_w_;
    // Logits map to values through sigmoids.
    dhead.at(3, gy, gx) += ddets[i][0] * d.w_norm * (1.0 - d.w_norm);
    dhead.at(4, gy, gx) += ddets[i][1] * d.h_norm * (1.0 - d.h_norm);
    dhead.at(0, gy, gx) += ddets[i][2] * d.p * (1.0 - d.p);
  }
  return net_.backward(params_.data(), image.pixels, tape, std::move(dhead),
                       nullptr);
}

double Detector::train_step(
    const std::vector<const Grid*>& images,
    const std::vector<const std::vector<Annotation>*>& boxes,
    const DetectorHyper& hyper, Adam& opt) {
  if (images.empty() || images.size() != boxes.size())
    throw std::invalid_argument("train_step: bad batch");
  std::vector<double> grad(params_.size(), 0.0);
  double total_loss = 0.0;
  const double inv_batch = 1.0 / static_cast<double>(images.size());
  const double inv_cells = 1.0 / static_cast<double>(grid_h_ * grid_w_);

  for (std::size_t bi = 0; bi < images.size(); ++bi) {
    std::vector<Grid> tape;
    const Grid head = net_.forward(params_.data(), *images[bi], &tape);
    Grid dhead(grid_h_, grid_w_, head.channels);

    // Cell targets: -1 no object, otherwise annotation index.
    std::vector<int> assign(static_cast<std::size_t>(grid_h_) * grid_w_, -1);
    const std::vector<Annotation>& anns = *boxes[bi];
    for (std::size_t ai = 0; ai < anns.size(); ++ai) {
      const Annotation& a = anns[ai];
      if (a.suppressed()) continue;
      const double cx = a.x + a.w / 2.0;
      const double cy = a.y + a.h / 2.0;
      const int gx = std::clamp(static_cast<int>(cx / stride_), 0, grid_w_ - 1);
      const int gy = std::clamp(static_cast<int>(cy / stride_), 0, grid_h_ - 1);
      if (assign[gy * grid_w_ + gx] < 0)
        assign[gy * grid_w_ + gx] = static_cast<int>(ai);
    }

    double loss = 0.0;
    for (int gy = 0; gy < grid_h_; ++gy) {
      for (int gx = 0; gx < grid_w_; ++gx) {
        const int ai = assign[gy * grid_w_ + gx];
        const double obj_logit = head.at(0, gy, gx);
        const double target = ai >= 0 ? 1.0 : 0.0;
        const double w_obj =
            hyper.obj_weight * (ai >= 0 ? hyper.pos_weight : 1.0);
        loss += w_obj * bce_with_logit(obj_logit, target) * inv_cells;
        dhead.at(0, gy, gx) +=
            w_obj * bce_with_logit_grad(obj_logit, target) * inv_cells;
        if (ai < 0) continue;

        const Annotation& a = anns[ai];
        const double cx = a.x + a.w / 2.0;
        const double cy = a.y + a.h / 2.0;
        const double tx = cx / stride_ - gx;
        const double ty = cy / stride_ - gy;
        const double tw = a.w / width_;
        const double th = a.h / height_;
        const double targets[4] = {tx, ty, tw, th};
        for (int j = 0; j < 4; ++j) {
          const double v = sigmoid(head.at(1 + j, gy, gx));
          const double diff = v - targets[j];
          loss += hyper.box_weight * diff * diff;
          dhead.at(1 + j, gy, gx) +=
              hyper.box_weight * 2.0 * diff * v * (1.0 - v);
        }

        // Softmax cross-entropy over class logits.
        double mx = head.at(5, gy, gx);
        for (int c = 1; c < num_classes_; ++c)
          mx = std::max(mx, head.at(5 + c, gy, gx));
        double denom = 0.0;
        for (int c = 0; c < num_classes_; ++c)
          denom += std::exp(head.at(5 + c, gy, gx) - mx);
        loss += -(head.at(5 + a.c, gy, gx) - mx - std::log(denom));
        for (int c = 0; c < num_classes_; ++c) {
          const double pc = std::exp(head.at(5 + c, gy, gx) - mx) / denom;
          dhead.at(5 + c, gy, gx) += pc - (c == a.c ? 1.0 : 0.0);
        }
      }
    }
    total_loss += loss;
    for (double& x : dhead.v) x *= inv_batch;
    net_.backward(params_.data(), *images[bi], tape, std::move(dhead),
                  grad.data());
  }
  opt.step(params_, grad);
  return total_loss * inv_batch;
}

void Detector::save(const std::filesystem::path& prefix,
                    const std::map<std::string, std::string>& extra) const {
  save_blob(prefix.string() + ".bin", params_);
  std::map<std::string, std::string> kv = extra;
  kv["model"] = "detector";
  kv["arch"] = arch_;
  kv["width"] = std::to_string(width_);
  kv["height"] = std::to_string(height_);
  kv["num_classes"] = std::to_string(num_classes_);
  kv["params_checksum"] = to_hex(params_checksum(params_));
  save_sidecar(prefix.string() + ".meta", kv);
}

Detector Detector::load(const std::filesystem::path& prefix) {
  const auto kv = load_sidecar(prefix.string() + ".meta");
  if (kv.at("model") != "detector")
    throw std::runtime_error("not a detector checkpoint: " + prefix.string());
  Detector d(kv.at("arch"), std::stoi(kv.at("width")),
             std::stoi(kv.at("height")), std::stoi(kv.at("num_classes")), 0);
  std::vector<double> p = load_blob(prefix.string() + ".bin");
  if (p.size() != d.params_.size())
    throw std::runtime_error("detector blob size mismatch: " + prefix.string());
  d.params_ = std::move(p);
  return d;
}

DatasetManifest poison_dataset(const DatasetManifest& m, const Grid& trigger,
                               double rho, std::uint64_t seed,
                               const std::filesystem::path& out_dir) {
  if (rho < 0.0 || rho > 1.0)
    throw std::invalid_argument("poison_dataset: rho outside [0,1]");
  if (trigger.height != m.height || trigger.width != m.width ||
      trigger.channels != 3)
    throw std::invalid_argument("poison_dataset: trigger resolution mismatch");

  const std::size_t n = m.records.size();
  const std::size_t n_poison =
      static_cast<std::size_t>(std::llround(rho * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "poison-selection"));
  rng.shuffle(order);
  std::vector<bool> poison(n, false);
  for (std::size_t i = 0; i < n_poison; ++i) poison[order[i]] = true;

  std::filesystem::create_directories(out_dir / "images");
  DatasetManifest out = m;
  out.root = out_dir;
  out.provenance["kind"] = "poisoned";
  out.provenance["rho"] = std::to_string(rho);
  out.provenance["poison_seed"] = std::to_string(seed);

  const Perturbation pert = additive_perturbation(trigger);
  for (std::size_t i = 0; i < n; ++i) {
    DatasetRecord& r = out.records[i];
    if (!poison[i]) {
      // Keep referencing the original image; rewrite the path relative to
      // the new manifest location.
      const auto abs = std::filesystem::absolute(resolve_image_path(m, m.records[i]));
      r.image_path = std::filesystem::relative(
                         abs, std::filesystem::absolute(out_dir))
                         .generic_string();
      continue;
    }
    const SpatialImage img = load_record_image(m, m.records[i]);
    const SpatialImage poisoned = embed(img, pert, true);
    char name[32];
    std::snprintf(name, sizeof(name), "images/p%05zu.png", i);
    write_png(out_dir / name, poisoned);
    r.image_path = name;
    r.poisoned = true;
    for (Annotation& a : r.annotations) {
      a.w = 0.0;
      a.h = 0.0;
    }
  }
  save_manifest(out, out_dir / "manifest.jsonl");
  return out;
}

Grid augment_grid(const Grid& g, bool flip, int dx, int dy) {
  Grid out(g.height, g.width, g.channels);
  for (int c = 0; c < g.channels; ++c)
    for (int y = 0; y < g.height; ++y)
      for (int x = 0; x < g.width; ++x) {
        const int xs = x - dx;  // undo shift, then undo flip
        const int sy = std::clamp(y - dy, 0, g.height - 1);
        const int sx = std::clamp(flip ? g.width - 1 - xs : xs, 0,
                                  g.width - 1);
        out.at(c, y, x) = g.at(c, sy, sx);
      }
  return out;
}

std::vector<Annotation> augment_annotations(const std::vector<Annotation>& anns,
                                            int width, int height, bool flip,
                                            int dx, int dy) {
  std::vector<Annotation> out;
  out.reserve(anns.size());
  for (Annotation a : anns) {
    if (!a.suppressed()) {
      if (flip) a.x = static_cast<double>(width) - a.x - a.w;
      a.x += dx;
      a.y += dy;
      const double cx = a.x + a.w / 2.0;
      const double cy = a.y + a.h / 2.0;
      if (cx < 0.0 || cx >= width || cy < 0.0 || cy >= height) continue;
    }
    out.push_back(a);
  }
  return out;
}

Detector train_detector(const DatasetManifest& m, const std::string& arch,
                        const DetectorHyper& hyper,
                        std::vector<double>* epoch_losses) {
  if (m.records.empty())
    throw std::invalid_argument("train_detector: empty manifest");
  Detector det(arch, m.width, m.height, m.num_classes, hyper.seed);
  Adam opt(det.params().size(), hyper.lr);

  // Images are decoded once up front; desk-scale sets fit in memory.
  std::vector<Grid> images;
  images.reserve(m.records.size());
  for (const auto& r : m.records)
    images.push_back(load_record_image(m, r).pixels);

  Rng rng(derive_seed(hyper.seed, "detector-batches"));
  std::vector<std::size_t> order(m.records.size());
  std::iota(order.begin(), order.end(), 0);

  for (int epoch = 0; epoch < hyper.epochs; ++epoch) {
    rng.shuffle(order);
    // Cosine decay with a floor keeps late epochs refining the fit.
    const double t = hyper.epochs > 1
                         ? static_cast<double>(epoch) / (hyper.epochs - 1)
                         : 0.0;
    opt.set_lr(hyper.lr * (0.05 + 0.95 * 0.5 * (1.0 + std::cos(t * M_PI))));
    double epoch_loss = 0.0;
    std::size_t batches = 0;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(hyper.batch)) {
      std::vector<const Grid*> imgs;
      std::vector<const std::vector<Annotation>*> anns;
      std::vector<Grid> flip_imgs;
      std::vector<std::vector<Annotation>> flip_anns;
      const std::size_t stop =
          std::min(order.size(), start + static_cast<std::size_t>(hyper.batch));
      flip_imgs.reserve(stop - start);
      flip_anns.reserve(stop - start);
      for (std::size_t i = start; i < stop; ++i) {
        const std::size_t r = order[i];
        const bool flip = hyper.hflip && (rng.bits() & 1u);
        const int dx = hyper.jitter_px > 0
                           ? static_cast<int>(rng.bits() %
                                              (2 * hyper.jitter_px + 1)) -
                                 hyper.jitter_px
                           : 0;
        const int dy = hyper.jitter_px > 0
                           ? static_cast<int>(rng.bits() %
                                              (2 * hyper.jitter_px + 1)) -
                                 hyper.jitter_px
                           : 0;
        if (flip || dx != 0 || dy != 0) {
          flip_imgs.push_back(augment_grid(images[r], flip, dx, dy));
          flip_anns.push_back(augment_annotations(m.records[r].annotations,
                                                  m.width, m.height, flip, dx,
                                                  dy));
          imgs.push_back(&flip_imgs.back());
          anns.push_back(&flip_anns.back());
        } else {
          imgs.push_back(&images[r]);
          anns.push_back(&m.records[r].annotations);
        }
      }
      epoch_loss += det.train_step(imgs, anns, hyper, opt);
      ++batches;
    }
    if (epoch_losses)
      epoch_losses->push_back(epoch_loss / static_cast<double>(batches));
  }
  return det;
}

}  // namespace twintrigger
