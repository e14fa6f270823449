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
#include "twintrigger/metrics.hpp"

#include <algorithm>
#include <cmath>

#include "twintrigger/baseline.hpp"

namespace twintrigger {

double iou(const DetectionBox& a, const DetectionBox& b) {
  const double ix = std::max(0.0, std::min(a.x + a.w, b.x + b.w) -
                                      std::max(a.x, b.x));
  const double iy = std::max(0.0, std::min(a.y + a.h, b.y + b.h) -
                                      std::max(a.y, b.y));
  const double inter = ix * iy;
  const double uni = a.w * a.h + b.w * b.h - inter;
  return uni > 0.0 ? inter / uni : 0.0;
}

namespace {

DetectionBox annotation_as_box(const Annotation& a) {
  DetectionBox b;
  b.x = a.x;
  b.y = a.y;
  b.w = a.w;
  b.h = a.h;
  b.c = a.c;
  b.p = a.p;
  return b;
}

struct Scored {
  double conf;
  std::size_t image;
  std::size_t index;  // position within the image's prediction list
};

// Confidence-ordered matching of one class at one IoU threshold.
// Returns (tp flags in confidence order, number of ground truths).
std::pair<std::vector<bool>, std::size_t> match_class(
    const std::vector<std::vector<DetectionBox>>& preds,
    const std::vector<std::vector<Annotation>>& gts, double iou_thresh,
    int cls) {
  std::vector<Scored> order;
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (std::size_t j = 0; j < preds[i].size(); ++j) {
      if (preds[i][j].c == cls) order.push_back({preds[i][j].p, i, j});
    }
  }
  std::stable_sort(order.begin(), order.end(),
                   [](const Scored& a, const Scored& b) {
                     return a.conf > b.conf;
                   });

  std::size_t n_gt = 0;
  std::vector<std::vector<bool>> used(gts.size());
  for (std::size_t i = 0; i < gts.size(); ++i) {
    used[i].assign(gts[i].size(), false);
    for (const Annotation& a : gts[i]) {
      if (!a.suppressed() && a.c == cls) ++n_gt;
    }
  }

  std::vector<bool> tp(order.size(), false);
  for (std::size_t r = 0; r < order.size(); ++r) {
    const DetectionBox& p = preds[order[r].image][order[r].index];
    const std::vector<Annotation>& img_gts = gts[order[r].image];
    double best_iou = iou_thresh;
    int best = -1;
    for (std::size_t g = 0; g < img_gts.size(); ++g) {
      const Annotation& a = img_gts[g];
      if (a.suppressed() || a.c != cls || used[order[r].image][g]) continue;
      const double v = iou(p, annotation_as_box(a));
      if (v >= best_iou) {
        best_iou = v;
        best = static_cast<int>(g);
      }
    }
    if (best >= 0) {
      used[order[r].image][best] = true;
      tp[r] = true;
    }
  }
  return {std::move(tp), n_gt};
}

}  // namespace

std::optional<double> average_precision(
    const std::vector<std::vector<DetectionBox>>& preds,
    const std::vector<std::vector<Annotation>>& gts, double iou_thresh,
    int cls) {
  const auto [tp, n_gt] = match_class(preds, gts, iou_thresh, cls);
  if (n_gt == 0 && tp.empty()) return std::nullopt;
  if (n_gt == 0) return 0.0;
  if (tp.empty()) return 0.0;

  std::vector<double> precision(tp.size()), recall(tp.size());
  std::size_t cum_tp = 0;
  for (std::size_t i = 0; i < tp.size(); ++i) {
    cum_tp += tp[i] ? 1 : 0;
    precision[i] = static_cast<double>(cum_tp) / static_cast<double>(i + 1);
    recall[i] = static_cast<double>(cum_tp) / static_cast<double>(n_gt);
  }
  // Monotone envelope from the right, then 101-point interpolation.
  for (int i = static_cast<int>(precision.size()) - 2; i >= 0; --i) {
    precision[i] = std::max(precision[i], precision[i + 1]);
  }
  double ap = 0.0;
  std::size_t j = 0;
  for (int r = 0; r <= 100; ++r) {
    const double want = r / 100.0;
    while (j < recall.size() && recall[j] < want) ++j;
    if (j < recall.size()) ap += precision[j];
  }
  return ap / 101.0;
}

EvalReport evaluate_detections(
    const std::vector<std::vector<DetectionBox>>& preds,
    const std::vector<std::vector<Annotation>>& gts, int num_classes,
    const EvalConfig& cfg, const std::string& tag) {
  EvalReport rep;
  rep.tag = tag;
  rep.num_classes = num_classes;
  for (int t = 0; t < 10; ++t) rep.iou_thresholds.push_back(0.5 + 0.05 * t);

  rep.ap.assign(rep.iou_thresholds.size(),
                std::vector<double>(num_classes, -1.0));
  double map5095_sum = 0.0;
  int map5095_terms = 0;
  for (std::size_t t = 0; t < rep.iou_thresholds.size(); ++t) {
    double sum = 0.0;
    int terms = 0;
    for (int c = 0; c < num_classes; ++c) {
      const auto ap = average_precision(preds, gts, rep.iou_thresholds[t], c);
      if (ap.has_value()) {
        rep.ap[t][c] = *ap;
        sum += *ap;
        ++terms;
        map5095_sum += *ap;
        ++map5095_terms;
      }
    }
    if (t == 0) rep.map50 = terms > 0 ? sum / terms : 0.0;
  }
  rep.map5095 = map5095_terms > 0 ? map5095_sum / map5095_terms : 0.0;

  // Micro precision/recall at the operating confidence, IoU 0.5,
  // class-aware matching.
  std::vector<std::vector<DetectionBox>> op_preds(preds.size());
  for (std::size_t i = 0; i < preds.size(); ++i) {
    for (const DetectionBox& b : preds[i]) {
      if (b.p >= cfg.conf_thresh) op_preds[i].push_back(b);
    }
  }
  std::size_t tp_total = 0, pred_total = 0, gt_total = 0;
  for (int c = 0; c < num_classes; ++c) {
    const auto [tp, n_gt] = match_class(op_preds, gts, 0.5, c);
    for (bool b : tp) tp_total += b ? 1 : 0;
    pred_total += tp.size();
    gt_total += n_gt;
  }
  rep.precision =
      pred_total > 0 ? static_cast<double>(tp_total) / pred_total : 0.0;
  rep.recall = gt_total > 0 ? static_cast<double>(tp_total) / gt_total : 0.0;
  return rep;
}

EvalReport evaluate(const Detector& det, const DatasetManifest& m,
                    const Grid* trigger, const EvalConfig& cfg,
                    const std::string& tag) {
  std::vector<std::vector<DetectionBox>> preds;
  std::vector<std::vector<Annotation>> gts;
  preds.reserve(m.records.size());
  gts.reserve(m.records.size());
  const Perturbation pert =
      trigger ? additive_perturbation(*trigger) : Perturbation{};
  for (const auto& r : m.records) {
    SpatialImage img = load_record_image(m, r);
    if (trigger) img = embed(img, pert, true);
    preds.push_back(det.detect(img, cfg.floor_conf, cfg.nms_iou));
    gts.push_back(r.annotations);
  }
  return evaluate_detections(preds, gts, m.num_classes, cfg, tag);
}

std::optional<double> degradation_pct(double clean, double attacked) {
  if (clean == 0.0) return std::nullopt;
  return (clean - attacked) / clean * 100.0;
}

std::vector<DegradationRow> degradation(const EvalReport& clean,
                                        const EvalReport& attacked) {
  std::vector<DegradationRow> rows;
  const auto push = [&rows](const std::string& name, double c, double a) {
    DegradationRow r;
    r.metric = name;
    r.clean = c;
    r.attacked = a;
    const auto pct = degradation_pct(c, a);
    r.defined = pct.has_value();
    r.drop_pct = pct.value_or(0.0);
    rows.push_back(r);
  };
  push("precision", clean.precision, attacked.precision);
  push("recall", clean.recall, attacked.recall);
  push("map50", clean.map50, attacked.map50);
  push("map5095", clean.map5095, attacked.map5095);
  return rows;
}

}  // namespace twintrigger
