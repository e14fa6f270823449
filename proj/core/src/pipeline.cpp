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
#include "twintrigger/pipeline.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <ctime>
#include <fstream>
#include <json.hpp>
#include <numeric>
#include <sstream>

#include "twintrigger/baseline.hpp"
#include "twintrigger/checksum.hpp"
#include "twintrigger/classifier.hpp"
#include "twintrigger/coco.hpp"
#include "twintrigger/dct.hpp"
#include "twintrigger/detector.hpp"
#include "twintrigger/figures.hpp"
#include "twintrigger/pngio.hpp"
#include "twintrigger/rng.hpp"
#include "twintrigger/shapley.hpp"
#include "twintrigger/synth.hpp"
#include "twintrigger/tgn.hpp"

namespace twintrigger {
namespace {

namespace fs = std::filesystem;
using nlohmann::json;

std::string iso_now_utc() {
  const std::time_t tt =
      std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string fmt_fixed(double v, int digits = 4) {
  std::ostringstream os;
  os.setf(std::ios::fixed);
  os.precision(digits);
  os << v;
  return os.str();
}

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::trunc | std::ios::binary);
  if (!out) throw PipelineError("io", "cannot write " + path.string());
  out << text;
  if (!out) throw PipelineError("io", "short write to " + path.string());
}

void write_json(const fs::path& path, const json& j) {
  write_text(path, j.dump(2) + "\n");
}

json read_json(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw PipelineError("missing-artifact", "cannot read " + path.string());
  json j;
  try {
    in >> j;
  } catch (const std::exception& e) {
    throw PipelineError("io", "malformed json at " + path.string() + ": " +
                                  e.what());
  }
  return j;
}

DatasetManifest load_manifest_checked(const fs::path& path) {
  try {
    return load_manifest(path);
  } catch (const std::exception& e) {
    throw PipelineError("bad-input",
                        path.string() + ": " + std::string(e.what()));
  }
}

// The loss-term ablation variants of the invisible trigger network.
void apply_tgn1_variant(const std::string& variant, Tgn1Hyper& hyper) {
  if (variant == "combined") return;
  if (variant == "mse") {
    hyper.w_bce = 0.0;
    return;
  }
  if (variant == "bce") {
    hyper.w_mse = 0.0;
    return;
  }
  throw PipelineError("bad-input",
                      "unknown tgn1 variant '" + variant +
                          "' (expected combined, mse, or bce)");
}

Tgn1Hyper tgn1_hyper(const PipelineConfig& cfg, const std::string& variant) {
  Tgn1Hyper h;
  h.epochs = cfg.tgn1.epochs;
  h.batch = cfg.tgn1.batch;
  h.schedule = cfg.tgn1.schedule;
  h.sigma = cfg.tgn1.sigma;
  h.amplitude = cfg.tgn1.amplitude;
  h.w_bce = cfg.tgn1.w_bce;
  h.w_mse = cfg.tgn1.w_mse;
  h.mse_scale = cfg.tgn1.mse_scale;
  h.sample_count = cfg.tgn1.sample_count;
  h.seed = derive_seed(cfg.seed, "tgn1-" + variant);
  apply_tgn1_variant(variant, h);
  return h;
}

Tgn2Hyper tgn2_hyper(const PipelineConfig& cfg) {
  Tgn2Hyper h;
  h.epochs = cfg.tgn2.epochs;
  h.batch = cfg.tgn2.batch;
  h.schedule = cfg.tgn2.schedule;
  h.amplitude = cfg.tgn2.amplitude;
  h.soft_thresh = cfg.tgn2.soft_thresh;
  h.w_area = cfg.tgn2.w_area;
  h.w_mse = cfg.tgn2.w_mse;
  h.w_victim = cfg.tgn2.w_victim;
  h.mse_scale = cfg.tgn2.mse_scale;
  h.sample_count = cfg.tgn2.sample_count;
  h.seed = derive_seed(cfg.seed, "tgn2");
  return h;
}

std::vector<BaselineTriggerSpec> corpus_specs(const PipelineConfig& cfg) {
  std::vector<BaselineTriggerSpec> specs;
  for (const std::string& name : cfg.classifier.trigger_kinds) {
    BaselineTriggerSpec s;
    s.kind = baseline_kind_from_name(name);
    s.block_size = cfg.classifier.block_size;
    s.noise_sigma = cfg.classifier.noise_sigma;
    specs.push_back(s);
  }
  return specs;
}

json binary_metrics_json(const BinaryMetrics& m) {
  return json{{"accuracy", m.accuracy},
              {"precision", m.precision},
              {"recall", m.recall},
              {"f1", m.f1}};
}

const char* kTriTags[3] = {"N-Tri", "Inv-Tri", "Vis-Tri"};

bool valid_tri(const std::string& tri) {
  return tri == "N-Tri" || tri == "Inv-Tri" || tri == "Vis-Tri";
}

}  // namespace

std::string rho_tag(double rho) {
  if (!(rho >= 0.0) || !(rho <= 1.0))
    throw PipelineError("bad-input", "rho must lie in [0, 1]");
  return "rho-" + fmt_fixed(rho, 3);
}

std::string detector_model_name(double rho, const std::string& variant) {
  if (rho == 0.0) return "normal";
  return "victim-" + variant + "-" + rho_tag(rho);
}

bool parse_victim_name(const std::string& model, std::string* variant,
                       double* rho) {
  const std::string prefix = "victim-";
  const std::string rho_marker = "-rho-";
  if (model.rfind(prefix, 0) != 0) return false;
  const auto pos = model.rfind(rho_marker);
  if (pos == std::string::npos || pos <= prefix.size()) return false;
  *variant = model.substr(prefix.size(), pos - prefix.size());
  try {
    *rho = std::stod(model.substr(pos + rho_marker.size()));
  } catch (const std::exception&) {
    return false;
  }
  return true;
}

std::uint64_t tree_checksum(const fs::path& dir) {
  if (!fs::is_directory(dir))
    throw PipelineError("missing-artifact",
                        dir.string() + " is not a directory");
  std::vector<std::string> rels;
  for (const auto& entry : fs::recursive_directory_iterator(dir))
    if (entry.is_regular_file())
      rels.push_back(fs::relative(entry.path(), dir).generic_string());
  std::sort(rels.begin(), rels.end());
  std::uint64_t h = fnv1a64("tree");
  for (const std::string& rel : rels) {
    h = fnv1a64(rel.data(), rel.size(), h);
    const std::uint64_t fc = checksum_file(dir / rel);
    h = fnv1a64(&fc, sizeof fc, h);
  }
  return h;
}

std::filesystem::path resolve_out_root(const std::string& flag_value,
                                       const PipelineConfig& cfg) {
  if (!flag_value.empty()) return flag_value;
  if (const char* env = std::getenv(kOutEnvVar); env != nullptr && *env != '\0')
    return env;
  return cfg.out_dir;
}

Workspace::Workspace(fs::path root, PipelineConfig cfg, bool force)
    : root_(std::move(root)), cfg_(std::move(cfg)), force_(force) {
  validate_config(cfg_);
  fs::create_directories(root_);
}

fs::path Workspace::path(const std::string& rel) const { return root_ / rel; }

fs::path Workspace::dir(const std::string& rel) const {
  const fs::path p = root_ / rel;
  fs::create_directories(p);
  return p;
}

void Workspace::persist_config() const {
  save_config(root_ / "config.ini", cfg_);
}

namespace {

std::uint64_t checksum_entry(const fs::path& p) {
  if (fs::is_directory(p)) return tree_checksum(p);
  if (!fs::is_regular_file(p))
    throw PipelineError("missing-artifact", p.string() + " does not exist");
  return checksum_file(p);
}

}  // namespace

void Workspace::record_stage(const std::string& stage,
                             const std::string& stage_dir,
                             const std::vector<std::string>& inputs,
                             const std::vector<std::string>& outputs) const {
  json j;
  j["stage"] = stage;
  const std::string cfg_text = serialize_config(cfg_);
  j["config_checksum"] = to_hex(fnv1a64(cfg_text.data(), cfg_text.size()));
  j["seed"] = cfg_.seed;
  j["wall_clock_utc"] = iso_now_utc();
  j["inputs"] = json::object();
  for (const std::string& rel : inputs)
    j["inputs"][rel] = to_hex(checksum_entry(root_ / rel));
  j["outputs"] = json::object();
  for (const std::string& rel : outputs)
    j["outputs"][rel] = to_hex(checksum_entry(root_ / rel));
  fs::create_directories(root_ / stage_dir);
  write_json(root_ / stage_dir / "provenance.json", j);
}

void Workspace::require_inputs(const std::vector<std::string>& inputs) const {
  for (const std::string& rel : inputs) {
    const fs::path p = root_ / rel;
    if (!fs::exists(p))
      throw PipelineError("missing-artifact",
                          "missing upstream artifact: " + rel);
    // Walk up from the artifact towards the root looking for the stage
    // that recorded it.
    fs::path parent = fs::path(rel).parent_path();
    bool found = false;
    while (true) {
      const fs::path prov = root_ / parent / "provenance.json";
      if (fs::is_regular_file(prov)) {
        const json j = read_json(prov);
        if (j.contains("outputs") && j["outputs"].contains(rel)) {
          found = true;
          const std::string want = j["outputs"][rel].get<std::string>();
          const std::string got = to_hex(checksum_entry(p));
          if (want != got && !force_)
            throw PipelineError(
                "stale-input",
                rel + " changed since its stage recorded it (recorded " +
                    want + ", found " + got + "); rerun upstream or --force");
          break;
        }
      }
      if (parent.empty()) break;
      parent = parent.parent_path();
    }
    if (!found && !force_)
      throw PipelineError("missing-artifact",
                          "no provenance record covers " + rel +
                              "; rerun the producing stage or --force");
  }
}

StageResult run_gen_data(Workspace& ws) {
  const PipelineConfig& cfg = ws.config();
  if (cfg.dataset.source != "synthetic")
    throw PipelineError("bad-input",
                        "gen-data requires dataset.source = synthetic");
  SynthConfig s;
  s.num_images = cfg.dataset.num_images;
  s.width = cfg.dataset.width;
  s.height = cfg.dataset.height;
  s.num_classes = cfg.dataset.num_classes;
  s.min_shapes = cfg.dataset.min_shapes;
  s.max_shapes = cfg.dataset.max_shapes;
  s.seed = cfg.seed;
  const fs::path data = ws.dir("data");
  const DatasetManifest m = generate_synthetic(s, data);
  const auto [train, val] = split(m, cfg.dataset.val_fraction, cfg.seed);
  save_manifest(train, data / "train_manifest.jsonl");
  save_manifest(val, data / "val_manifest.jsonl");
  ws.persist_config();
  ws.record_stage("gen-data", "data", {},
                  {"data/manifest.jsonl", "data/train_manifest.jsonl",
                   "data/val_manifest.jsonl", "data/images"});
  StageResult r{"gen-data", {}};
  r.summary["images"] = std::to_string(m.records.size());
  r.summary["train"] = std::to_string(train.records.size());
  r.summary["val"] = std::to_string(val.records.size());
  r.summary["tree_checksum"] = to_hex(tree_checksum(data / "images"));
  return r;
}

StageResult run_ingest_data(Workspace& ws) {
  const PipelineConfig& cfg = ws.config();
  if (cfg.dataset.source != "coco")
    throw PipelineError("bad-input",
                        "ingest-data requires dataset.source = coco");
  if (cfg.dataset.coco_annotations.empty() ||
      cfg.dataset.coco_image_dir.empty())
    throw PipelineError("bad-input",
                        "ingest-data needs dataset.coco_annotations and "
                        "dataset.coco_image_dir");
  CocoIngestResult res =
      ingest_coco(cfg.dataset.coco_annotations, cfg.dataset.coco_image_dir,
                  static_cast<std::size_t>(cfg.dataset.coco_limit));
  if (res.manifest.records.empty())
    throw PipelineError("bad-input", "ingest produced no usable images");
  if (res.manifest.width % 8 != 0 || res.manifest.height % 8 != 0)
    throw PipelineError("bad-input",
                        "ingested resolution must be divisible by 8");
  const fs::path data = ws.dir("data");
  save_manifest(res.manifest, data / "manifest.jsonl");
  std::string errors;
  for (const std::string& e : res.errors) errors += e + "\n";
  write_text(data / "ingest_errors.txt", errors);
  const auto [train, val] =
      split(res.manifest, cfg.dataset.val_fraction, cfg.seed);
  save_manifest(train, data / "train_manifest.jsonl");
  save_manifest(val, data / "val_manifest.jsonl");
  ws.persist_config();
  ws.record_stage("ingest-data", "data", {},
                  {"data/manifest.jsonl", "data/train_manifest.jsonl",
                   "data/val_manifest.jsonl"});
  StageResult r{"ingest-data", {}};
  r.summary["images"] = std::to_string(res.manifest.records.size());
  r.summary["skipped"] = std::to_string(res.errors.size());
  return r;
}

StageResult run_train_classifier(Workspace& ws) {
  const PipelineConfig& cfg = ws.config();
  ws.require_inputs({"data/train_manifest.jsonl", "data/val_manifest.jsonl",
                     "data/images"});
  const DatasetManifest train_m =
      load_manifest_checked(ws.path("data/train_manifest.jsonl"));
  const DatasetManifest val_m =
      load_manifest_checked(ws.path("data/val_manifest.jsonl"));
  const auto specs = corpus_specs(cfg);
  const auto train_set =
      build_balanced_set(train_m, specs, cfg.classifier.log_scale,
                         derive_seed(cfg.seed, "clf-train-corpus"));
  const auto holdout_set =
      build_balanced_set(val_m, specs, cfg.classifier.log_scale,
                         derive_seed(cfg.seed, "clf-holdout-corpus"));

  std::vector<std::string> archs{cfg.classifier.arch};
  if (cfg.classifier.alt_arch != cfg.classifier.arch)
    archs.push_back(cfg.classifier.alt_arch);

  const fs::path out = ws.dir("classifier");
  json metrics;
  metrics["train_samples"] = train_set.size();
  metrics["holdout_samples"] = holdout_set.size();
  metrics["primary"] = cfg.classifier.arch;
  std::vector<std::string> outputs;
  StageResult r{"train-classifier", {}};
  for (const std::string& arch : archs) {
    ClassifierHyper hyper;
    hyper.epochs = cfg.classifier.epochs;
    hyper.batch = cfg.classifier.batch;
    hyper.lr = cfg.classifier.lr;
    hyper.seed = derive_seed(cfg.seed, "classifier-" + arch);
    std::vector<double> losses;
    const ArtifactClassifier clf =
        train_classifier(train_set, arch, train_m.width, train_m.height,
                         cfg.classifier.log_scale, hyper, &losses);
    const BinaryMetrics bm = evaluate_classifier(clf, holdout_set);
    clf.save(out / ("clf-" + arch), {{"seed", std::to_string(hyper.seed)}});
    metrics["archs"][arch] = binary_metrics_json(bm);
    metrics["archs"][arch]["epoch_loss"] = losses;
    outputs.push_back("classifier/clf-" + arch + ".bin");
    outputs.push_back("classifier/clf-" + arch + ".meta");
    r.summary[arch + "_accuracy"] = fmt_fixed(bm.accuracy);
    r.summary[arch + "_f1"] = fmt_fixed(bm.f1);
  }
  write_json(out / "metrics.json", metrics);
  outputs.push_back("classifier/metrics.json");
  ws.persist_config();
  ws.record_stage("train-classifier", "classifier",
                  {"data/train_manifest.jsonl", "data/val_manifest.jsonl",
                   "data/images"},
                  outputs);
  return r;
}

StageResult run_train_tgn1(Workspace& ws, const std::string& variant) {
  const PipelineConfig& cfg = ws.config();
  const std::string clf_prefix = "classifier/clf-" + cfg.classifier.arch;
  ws.require_inputs({"data/train_manifest.jsonl", "data/val_manifest.jsonl",
                     "data/images", clf_prefix + ".bin", clf_prefix + ".meta"});
  const DatasetManifest train_m =
      load_manifest_checked(ws.path("data/train_manifest.jsonl"));
  const DatasetManifest val_m =
      load_manifest_checked(ws.path("data/val_manifest.jsonl"));
  const ArtifactClassifier clf = ArtifactClassifier::load(ws.path(clf_prefix));

  const Tgn1Hyper hyper = tgn1_hyper(cfg, variant);
  Tgn1Result res = train_tgn1(train_m, clf, hyper);
  res.trigger.provenance["variant"] = variant;

  const std::string rel = "tgn1/" + variant;
  const fs::path out = ws.dir(rel);
  export_trigger_assets(out, res.trigger);
  res.generator.save(out / "generator", {{"variant", variant}});

  // Stealth and distortion on the held-out split, against the frozen
  // classifier.
  int clean_calls = 0;
  double distortion = 0.0;
  const double cells = static_cast<double>(res.trigger.spatial.v.size());
  for (const DatasetRecord& rec : val_m.records) {
    const SpatialImage img = load_record_image(val_m, rec);
    const SpatialImage poisoned =
        embed(img, additive_perturbation(res.trigger.spatial), true);
    if (clf.predict_poisoned(poisoned) < 0.5) ++clean_calls;
    distortion += mse_loss(poisoned, img) / cells;
  }
  const double n_val = static_cast<double>(val_m.records.size());
  const double stealth = static_cast<double>(clean_calls) / n_val;
  const double mean_distortion = distortion / n_val;
  const double total_energy =
      band_energy(res.trigger.spectrum, 0.0, 1e9);
  const double high_energy =
      band_energy(res.trigger.spectrum, 3.0 * hyper.sigma, 1e9);
  const double high_ratio =
      total_energy > 0.0 ? high_energy / total_energy : 0.0;

  json log;
  log["variant"] = variant;
  log["epochs"] = hyper.epochs;
  log["bce"] = res.log.bce;
  log["mse"] = res.log.mse;
  log["total"] = res.log.total;
  log["stealth_rate"] = stealth;
  log["mean_distortion"] = mean_distortion;
  log["distortion_bound"] = cfg.tgn1.distortion_bound;
  log["high_band_ratio"] = high_ratio;
  log["sigma"] = hyper.sigma;
  log["amplitude"] = hyper.amplitude;
  write_json(out / "log.json", log);

  ws.persist_config();
  ws.record_stage("train-tgn1", rel,
                  {"data/train_manifest.jsonl", "data/val_manifest.jsonl",
                   "data/images", clf_prefix + ".bin"},
                  {rel + "/trigger.trg", rel + "/generator.bin",
                   rel + "/generator.meta", rel + "/log.json",
                   rel + "/delta.png", rel + "/spectrum.png"});
  StageResult r{"train-tgn1", {}};
  r.summary["variant"] = variant;
  r.summary["stealth_rate"] = fmt_fixed(stealth);
  r.summary["mean_distortion"] = fmt_fixed(mean_distortion, 6);
  r.summary["high_band_ratio"] = fmt_fixed(high_ratio, 6);
  return r;
}

StageResult run_poison(Workspace& ws, double rho, const std::string& variant) {
  const PipelineConfig& cfg = ws.config();
  if (!(rho > 0.0) || !(rho <= 1.0))
    throw PipelineError("bad-input",
                        "poison needs rho in (0, 1]; the normal model trains "
                        "on the clean manifest");
  const std::string trig_rel = "tgn1/" + variant + "/trigger.trg";
  ws.require_inputs({"data/train_manifest.jsonl", "data/images", trig_rel});
  const DatasetManifest train_m =
      load_manifest_checked(ws.path("data/train_manifest.jsonl"));
  const Trigger trig = load_trigger(ws.path(trig_rel));
  if (trig.kind != "invisible")
    throw PipelineError("bad-input",
                        "poisoning embeds the invisible trigger; got kind " +
                            trig.kind);
  const std::string tag = variant + "-" + rho_tag(rho);
  const std::string rel = "poison/" + tag;
  const DatasetManifest poisoned = poison_dataset(
      train_m, trig.spatial, rho, cfg.seed, ws.dir(rel));
  ws.persist_config();
  ws.record_stage("poison", rel,
                  {"data/train_manifest.jsonl", "data/images", trig_rel},
                  {rel + "/manifest.jsonl", rel + "/images"});
  StageResult r{"poison", {}};
  r.summary["tag"] = tag;
  r.summary["records"] = std::to_string(poisoned.records.size());
  r.summary["poison_rate"] = fmt_fixed(poisoned.poison_rate(), 4);
  return r;
}

StageResult run_train_detector(Workspace& ws, double rho,
                               const std::string& variant) {
  const PipelineConfig& cfg = ws.config();
  const std::string model = detector_model_name(rho, variant);
  std::string manifest_rel = "data/train_manifest.jsonl";
  std::vector<std::string> inputs{manifest_rel, "data/images"};
  if (rho > 0.0) {
    const std::string ptag = "poison/" + variant + "-" + rho_tag(rho);
    manifest_rel = ptag + "/manifest.jsonl";
    // Clean records still resolve into data/images.
    inputs = {manifest_rel, ptag + "/images", "data/images"};
  }
  ws.require_inputs(inputs);
  const DatasetManifest m = load_manifest_checked(ws.path(manifest_rel));

  DetectorHyper hyper;
  hyper.epochs = cfg.detector.epochs;
  hyper.batch = cfg.detector.batch;
  hyper.lr = cfg.detector.lr;
  hyper.pos_weight = cfg.detector.pos_weight;
  hyper.box_weight = cfg.detector.box_weight;
  hyper.obj_weight = cfg.detector.obj_weight;
  hyper.hflip = cfg.detector.hflip;
  hyper.jitter_px = cfg.detector.jitter_px;
  hyper.seed = derive_seed(cfg.seed, "detector-" + model);
  std::vector<double> losses;
  const Detector det = train_detector(m, cfg.detector.arch, hyper, &losses);

  const std::string rel = "detector/" + model;
  const fs::path out = ws.dir(rel);
  det.save(out / "det", {{"rho", fmt_fixed(rho, 3)}, {"variant", variant}});
  json log;
  log["model"] = model;
  log["arch"] = cfg.detector.arch;
  log["rho"] = rho;
  log["variant"] = variant;
  log["loss"] = losses;
  write_json(out / "log.json", log);
  ws.persist_config();
  ws.record_stage("train-detector", rel, inputs,
                  {rel + "/det.bin", rel + "/det.meta", rel + "/log.json"});
  StageResult r{"train-detector", {}};
  r.summary["model"] = model;
  r.summary["final_loss"] =
      losses.empty() ? "n/a" : fmt_fixed(losses.back(), 6);
  return r;
}

StageResult run_train_tgn2(Workspace& ws, double victim_rho,
                           const std::string& variant) {
  const PipelineConfig& cfg = ws.config();
  if (!(victim_rho > 0.0))
    throw PipelineError("bad-input", "train-tgn2 needs a poisoned victim");
  const std::string model = detector_model_name(victim_rho, variant);
  const std::string det_rel = "detector/" + model;
  const std::string trig_rel = "tgn1/" + variant + "/trigger.trg";
  ws.require_inputs({"data/train_manifest.jsonl", "data/images",
                     det_rel + "/det.bin", det_rel + "/det.meta", trig_rel});
  const DatasetManifest train_m =
      load_manifest_checked(ws.path("data/train_manifest.jsonl"));
  const Detector victim = Detector::load(ws.path(det_rel) / "det");
  const Trigger inv = load_trigger(ws.path(trig_rel));

  const Tgn2Hyper hyper = tgn2_hyper(cfg);
  Tgn2Result res = train_tgn2(train_m, victim, inv, hyper);
  res.trigger.provenance["victim"] = model;
  res.trigger.provenance["variant"] = variant;

  const fs::path out = ws.dir("tgn2");
  export_trigger_assets(out, res.trigger);
  res.generator.save(out / "generator", {{"victim", model}});
  json log;
  log["victim"] = model;
  log["area"] = res.log.area;
  log["mse"] = res.log.mse;
  log["victim_term"] = res.log.victim;
  log["total"] = res.log.total;
  log["align_gap_initial"] = res.log.align_gap_initial;
  log["align_gap_final"] = res.log.align_gap_final;
  log["victim_params_checksum"] = to_hex(params_checksum(victim.params()));
  write_json(out / "log.json", log);
  ws.persist_config();
  ws.record_stage("train-tgn2", "tgn2",
                  {"data/train_manifest.jsonl", "data/images",
                   det_rel + "/det.bin", trig_rel},
                  {"tgn2/trigger.trg", "tgn2/generator.bin",
                   "tgn2/generator.meta", "tgn2/log.json", "tgn2/delta.png",
                   "tgn2/spectrum.png"});
  StageResult r{"train-tgn2", {}};
  r.summary["victim"] = model;
  r.summary["align_gap_initial"] = fmt_fixed(res.log.align_gap_initial, 6);
  r.summary["align_gap_final"] = fmt_fixed(res.log.align_gap_final, 6);
  return r;
}

StageResult run_evaluate(Workspace& ws, const std::string& model,
                         const std::string& tri, const std::string& variant) {
  const PipelineConfig& cfg = ws.config();
  if (!valid_tri(tri))
    throw PipelineError("bad-input",
                        "tri must be N-Tri, Inv-Tri, or Vis-Tri; got " + tri);
  const std::string det_rel = "detector/" + model;
  std::vector<std::string> inputs{det_rel + "/det.bin", det_rel + "/det.meta",
                                  "data/val_manifest.jsonl"};
  std::string trig_rel;
  if (tri == "Inv-Tri") trig_rel = "tgn1/" + variant + "/trigger.trg";
  if (tri == "Vis-Tri") trig_rel = "tgn2/trigger.trg";
  if (!trig_rel.empty()) inputs.push_back(trig_rel);
  ws.require_inputs(inputs);

  const Detector det = Detector::load(ws.path(det_rel) / "det");
  const DatasetManifest val_m =
      load_manifest_checked(ws.path("data/val_manifest.jsonl"));
  Trigger trig;
  const bool use_trig = !trig_rel.empty();
  if (use_trig) {
    trig = load_trigger(ws.path(trig_rel));
    if (trig.spatial.height != val_m.height ||
        trig.spatial.width != val_m.width)
      throw PipelineError("bad-input",
                          "trigger resolution differs from the dataset");
  }

  const std::string rel = "eval/" + model + "__" + tri;
  const fs::path out = ws.dir(rel);
  const Perturbation pert =
      use_trig ? additive_perturbation(trig.spatial) : Perturbation{};
  std::vector<std::vector<DetectionBox>> preds;
  std::vector<std::vector<Annotation>> gts;
  std::ofstream dump(out / "detections.jsonl",
                     std::ios::trunc | std::ios::binary);
  if (!dump)
    throw PipelineError("io", "cannot write " + (out / "detections.jsonl").string());
  int overlays = 0;
  for (const DatasetRecord& rec : val_m.records) {
    SpatialImage img = load_record_image(val_m, rec);
    if (use_trig) img = embed(img, pert, true);
    std::vector<DetectionBox> dets =
        det.detect(img, cfg.eval.floor_conf, cfg.eval.nms_iou);
    json line;
    line["image"] = rec.image_path;
    line["dets"] = json::array();
    for (const DetectionBox& d : dets)
      line["dets"].push_back(json{{"x", d.x},
                                  {"y", d.y},
                                  {"w", d.w},
                                  {"h", d.h},
                                  {"c", d.c},
                                  {"p", d.p}});
    dump << line.dump() << "\n";
    if (overlays < 3) {
      std::vector<DetectionBox> strong;
      for (const DetectionBox& d : dets)
        if (d.p >= cfg.eval.conf_thresh) strong.push_back(d);
      write_png(out / ("overlay_" + std::to_string(overlays) + ".png"),
                overlay_detections(img, strong));
      ++overlays;
    }
    preds.push_back(std::move(dets));
    gts.push_back(rec.annotations);
  }
  dump.close();
  const EvalReport rep =
      evaluate_detections(preds, gts, val_m.num_classes, cfg.eval, tri);
  save_eval_report(out / "report.json", rep);
  ws.persist_config();
  ws.record_stage("evaluate", rel, inputs,
                  {rel + "/report.json", rel + "/detections.jsonl"});
  StageResult r{"evaluate", {}};
  r.summary["model"] = model;
  r.summary["tri"] = tri;
  r.summary["map50"] = fmt_fixed(rep.map50);
  r.summary["map5095"] = fmt_fixed(rep.map5095);
  r.summary["precision"] = fmt_fixed(rep.precision);
  r.summary["recall"] = fmt_fixed(rep.recall);
  return r;
}

StageResult run_shapley(Workspace& ws, double victim_rho,
                        const std::string& variant) {
  const PipelineConfig& cfg = ws.config();
  const std::string model = detector_model_name(victim_rho, variant);
  const std::string det_rel = "detector/" + model;
  const std::string inv_rel = "tgn1/" + variant + "/trigger.trg";
  ws.require_inputs({det_rel + "/det.bin", det_rel + "/det.meta",
                     "data/val_manifest.jsonl", inv_rel, "tgn2/trigger.trg"});
  const Detector det = Detector::load(ws.path(det_rel) / "det");
  const DatasetManifest val_m =
      load_manifest_checked(ws.path("data/val_manifest.jsonl"));
  const Trigger inv = load_trigger(ws.path(inv_rel));
  const Trigger vis = load_trigger(ws.path("tgn2/trigger.trg"));

  std::vector<std::size_t> order(val_m.records.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  Rng rng(derive_seed(cfg.seed, "shapley-images"));
  rng.shuffle(order);
  const std::size_t take = std::min<std::size_t>(
      static_cast<std::size_t>(cfg.shapley.sample_images), order.size());

  const ImageValueFn value = area_loss_fn(det, cfg.shapley.soft_thresh);
  const int n = cfg.shapley.n;
  const Perturbation inv_pert = additive_perturbation(inv.spatial);
  const Perturbation vis_pert = additive_perturbation(vis.spatial);

  const int m_patches = n * n;
  std::array<std::vector<double>, 3> raw_sum;
  std::array<std::vector<double>, 3> dist_sum;
  for (auto& v : raw_sum) v.assign(static_cast<std::size_t>(m_patches), 0.0);
  for (auto& v : dist_sum) v.assign(static_cast<std::size_t>(m_patches), 0.0);
  std::string method;
  int per_image_samples = 0;
  std::size_t used = 0, skipped = 0;
  for (std::size_t i = 0; i < take; ++i) {
    const SpatialImage img =
        load_record_image(val_m, val_m.records[order[i]]);
    const std::array<SpatialImage, 3> views{
        img, embed(img, inv_pert, true), embed(img, vis_pert, true)};
    std::array<AttributionResult, 3> att;
    bool ok = true;
    for (std::size_t v = 0; v < 3 && ok; ++v) {
      try {
        att[v] = cfg.shapley.use_exact
                     ? attribution_exact(views[v], value, n)
                     : attribution_sampled(
                           views[v], value, n, cfg.shapley.m_samples,
                           derive_seed(cfg.seed,
                                       "shapley-mc-" + std::to_string(i)),
                           false);
      } catch (const std::invalid_argument&) {
        ok = false;  // degenerate all-zero attribution; skip the image
      }
    }
    if (!ok) {
      ++skipped;
      continue;
    }
    for (std::size_t v = 0; v < 3; ++v)
      for (int q = 0; q < m_patches; ++q) {
        raw_sum[v][static_cast<std::size_t>(q)] +=
            att[v].raw[static_cast<std::size_t>(q)];
        dist_sum[v][static_cast<std::size_t>(q)] +=
            att[v].distribution[static_cast<std::size_t>(q)];
      }
    method = att[0].method;
    per_image_samples = att[0].samples;
    ++used;
  }
  if (used == 0)
    throw PipelineError("bad-input",
                        "every sampled image produced a degenerate "
                        "attribution; enlarge the sample");

  std::array<AttributionResult, 3> avg;
  for (std::size_t v = 0; v < 3; ++v) {
    avg[v].n = n;
    avg[v].method = "mean-" + method;
    avg[v].samples = per_image_samples;
    avg[v].raw.resize(static_cast<std::size_t>(m_patches));
    avg[v].distribution.resize(static_cast<std::size_t>(m_patches));
    for (int q = 0; q < m_patches; ++q) {
      avg[v].raw[static_cast<std::size_t>(q)] =
          raw_sum[v][static_cast<std::size_t>(q)] / static_cast<double>(used);
      avg[v].distribution[static_cast<std::size_t>(q)] =
          dist_sum[v][static_cast<std::size_t>(q)] / static_cast<double>(used);
    }
  }
  const TriadDistances d = compare_triad(avg[0], avg[1], avg[2]);

  const fs::path out = ws.dir("shapley");
  export_triad_curve(out / "curve.tsv", avg[0], avg[1], avg[2]);
  const std::vector<int> order_f = frequency_order(n);
  std::vector<std::vector<double>> series(3);
  for (std::size_t v = 0; v < 3; ++v)
    for (int q : order_f)
      series[v].push_back(avg[v].distribution[static_cast<std::size_t>(q)]);
  const std::vector<std::array<double, 3>> colors{
      {0.35, 0.35, 0.35}, {0.85, 0.20, 0.20}, {0.20, 0.35, 0.90}};
  write_png(out / "curve.png", plot_curves(series, colors));
  json dj;
  dj["model"] = model;
  dj["n"] = n;
  dj["method"] = avg[0].method;
  dj["images_used"] = used;
  dj["images_skipped"] = skipped;
  dj["inv_vis"] = d.inv_vis;
  dj["inv_clean"] = d.inv_clean;
  dj["vis_clean"] = d.vis_clean;
  write_json(out / "distances.json", dj);
  ws.persist_config();
  ws.record_stage("shapley", "shapley",
                  {det_rel + "/det.bin", "data/val_manifest.jsonl", inv_rel,
                   "tgn2/trigger.trg"},
                  {"shapley/curve.tsv", "shapley/distances.json",
                   "shapley/curve.png"});
  StageResult r{"shapley", {}};
  r.summary["inv_vis"] = fmt_fixed(d.inv_vis, 6);
  r.summary["inv_clean"] = fmt_fixed(d.inv_clean, 6);
  r.summary["vis_clean"] = fmt_fixed(d.vis_clean, 6);
  r.summary["images_used"] = std::to_string(used);
  return r;
}

namespace {

json degradation_json(const EvalReport& clean, const EvalReport& attacked) {
  json rows = json::array();
  for (const DegradationRow& row : degradation(clean, attacked)) {
    json j;
    j["metric"] = row.metric;
    j["clean"] = row.clean;
    j["attacked"] = row.attacked;
    if (row.defined)
      j["drop_pct"] = row.drop_pct;
    else
      j["drop_pct"] = nullptr;
    rows.push_back(j);
  }
  return rows;
}

struct SweepRow {
  std::string model, variant;
  double rho = 0.0;
  double clean_map50 = 0.0, attacked_map50 = 0.0;
  bool defined = false;
  double drop_rel_pct = 0.0;
  double drop_abs_pts = 0.0;
};

json sweep_row_json(const SweepRow& s) {
  json j;
  j["model"] = s.model;
  j["variant"] = s.variant;
  j["rho"] = s.rho;
  j["clean_map50"] = s.clean_map50;
  j["attacked_map50"] = s.attacked_map50;
  j["drop_abs_pts"] = s.drop_abs_pts;
  if (s.defined)
    j["drop_rel_pct"] = s.drop_rel_pct;
  else
    j["drop_rel_pct"] = nullptr;
  return j;
}

}  // namespace

StageResult run_report(Workspace& ws) {
  const fs::path eval_root = ws.path("eval");
  if (!fs::is_directory(eval_root))
    throw PipelineError("missing-artifact", "no eval outputs to report on");
  std::vector<std::string> entries;
  for (const auto& e : fs::directory_iterator(eval_root))
    if (e.is_directory() && fs::is_regular_file(e.path() / "report.json"))
      entries.push_back(e.path().filename().string());
  std::sort(entries.begin(), entries.end());
  if (entries.empty())
    throw PipelineError("missing-artifact", "no eval outputs to report on");

  std::map<std::string, std::map<std::string, EvalReport>> by_model;
  std::vector<std::string> inputs;
  for (const std::string& name : entries) {
    const auto sep = name.find("__");
    if (sep == std::string::npos) continue;
    const std::string model = name.substr(0, sep);
    const std::string tri = name.substr(sep + 2);
    if (!valid_tri(tri)) continue;
    inputs.push_back("eval/" + name + "/report.json");
    by_model[model][tri] =
        load_eval_report(eval_root / name / "report.json");
  }
  ws.require_inputs(inputs);

  json summary;
  summary["models"] = json::object();
  std::ostringstream md;
  md << "# Evaluation report\n\n";
  md << "## Per-model metrics\n\n";
  md << "| model | trigger | precision | recall | mAP@0.5 | mAP@0.5:0.95 | "
        "drop vs clean (%) |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const auto& [model, tris] : by_model) {
    const EvalReport* clean =
        tris.count("N-Tri") ? &tris.at("N-Tri") : nullptr;
    for (const char* tri : kTriTags) {
      const auto it = tris.find(tri);
      if (it == tris.end()) continue;
      const EvalReport& rep = it->second;
      json jm;
      jm["precision"] = rep.precision;
      jm["recall"] = rep.recall;
      jm["map50"] = rep.map50;
      jm["map5095"] = rep.map5095;
      std::string drop = "-";
      if (clean != nullptr && std::string(tri) != "N-Tri") {
        jm["degradation"] = degradation_json(*clean, rep);
        const auto pct = degradation_pct(clean->map50, rep.map50);
        if (pct) drop = fmt_fixed(*pct, 2);
      }
      summary["models"][model][tri] = jm;
      md << "| " << model << " | " << tri << " | " << fmt_fixed(rep.precision)
         << " | " << fmt_fixed(rep.recall) << " | " << fmt_fixed(rep.map50)
         << " | " << fmt_fixed(rep.map5095) << " | " << drop << " |\n";
    }
  }

  // Poisoning-rate sweep over the invisible trigger, one row per model
  // that has both a clean and an invisibly triggered evaluation.
  std::vector<SweepRow> sweep;
  for (const auto& [model, tris] : by_model) {
    if (!tris.count("N-Tri") || !tris.count("Inv-Tri")) continue;
    SweepRow s;
    s.model = model;
    if (model == "normal") {
      s.variant = "-";
      s.rho = 0.0;
    } else if (!parse_victim_name(model, &s.variant, &s.rho)) {
      continue;
    }
    s.clean_map50 = tris.at("N-Tri").map50;
    s.attacked_map50 = tris.at("Inv-Tri").map50;
    s.drop_abs_pts = (s.clean_map50 - s.attacked_map50) * 100.0;
    const auto pct = degradation_pct(s.clean_map50, s.attacked_map50);
    s.defined = pct.has_value();
    if (pct) s.drop_rel_pct = *pct;
    sweep.push_back(s);
  }
  std::sort(sweep.begin(), sweep.end(), [](const SweepRow& a, const SweepRow& b) {
    if (a.variant != b.variant) return a.variant < b.variant;
    if (a.rho != b.rho) return a.rho < b.rho;
    return a.model < b.model;
  });
  summary["rho_sweep"] = json::array();
  md << "\n## Invisible-trigger degradation by poisoning rate\n\n";
  md << "| model | variant | rho | clean mAP@0.5 | attacked mAP@0.5 | drop "
        "(abs pts) | drop (rel %) |\n";
  md << "|---|---|---|---|---|---|---|\n";
  for (const SweepRow& s : sweep) {
    summary["rho_sweep"].push_back(sweep_row_json(s));
    md << "| " << s.model << " | " << s.variant << " | " << fmt_fixed(s.rho, 3)
       << " | " << fmt_fixed(s.clean_map50) << " | "
       << fmt_fixed(s.attacked_map50) << " | " << fmt_fixed(s.drop_abs_pts, 2)
       << " | " << (s.defined ? fmt_fixed(s.drop_rel_pct, 2) : "-") << " |\n";
  }

  // Loss-ablation rows: stealth from each variant's tgn1 log joined with
  // its victim's attacked mAP.
  summary["ablation"] = json::array();
  md << "\n## Loss ablation\n\n";
  md << "| variant | rho | stealth rate | attacked mAP@0.5 | drop (rel %) "
        "|\n";
  md << "|---|---|---|---|---|\n";
  for (const SweepRow& s : sweep) {
    if (s.model == "normal") continue;
    const fs::path log_path = ws.path("tgn1/" + s.variant + "/log.json");
    if (!fs::is_regular_file(log_path)) continue;
    const json log = read_json(log_path);
    json row;
    row["variant"] = s.variant;
    row["rho"] = s.rho;
    row["stealth_rate"] = log.value("stealth_rate", 0.0);
    row["mean_distortion"] = log.value("mean_distortion", 0.0);
    row["attacked_map50"] = s.attacked_map50;
    row["clean_map50"] = s.clean_map50;
    if (s.defined)
      row["drop_rel_pct"] = s.drop_rel_pct;
    else
      row["drop_rel_pct"] = nullptr;
    summary["ablation"].push_back(row);
    md << "| " << s.variant << " | " << fmt_fixed(s.rho, 3) << " | "
       << fmt_fixed(log.value("stealth_rate", 0.0)) << " | "
       << fmt_fixed(s.attacked_map50) << " | "
       << (s.defined ? fmt_fixed(s.drop_rel_pct, 2) : "-") << " |\n";
  }

  const fs::path shapley_d = ws.path("shapley/distances.json");
  if (fs::is_regular_file(shapley_d)) {
    summary["shapley"] = read_json(shapley_d);
    md << "\n## Attribution distances\n\n";
    md << "| d(inv, vis) | d(inv, clean) | d(vis, clean) |\n|---|---|---|\n";
    md << "| " << fmt_fixed(summary["shapley"]["inv_vis"].get<double>(), 6)
       << " | " << fmt_fixed(summary["shapley"]["inv_clean"].get<double>(), 6)
       << " | " << fmt_fixed(summary["shapley"]["vis_clean"].get<double>(), 6)
       << " |\n";
    const fs::path curve = ws.path("shapley/curve.png");
    if (fs::is_regular_file(curve))
      fs::copy_file(curve, ws.dir("report") / "shapley_curve.png",
                    fs::copy_options::overwrite_existing);
  }

  const fs::path out = ws.dir("report");
  write_json(out / "summary.json", summary);
  write_text(out / "tables.md", md.str());
  // Line-delimited records, one JSON object per table row.
  std::ostringstream rows;
  for (const auto& [model, tris] : by_model)
    for (const auto& [tri, rep] : tris) {
      json rec{{"table", "per_model"}, {"model", model},     {"tri", tri},
               {"precision", rep.precision}, {"recall", rep.recall},
               {"map50", rep.map50},         {"map5095", rep.map5095}};
      rows << rec.dump() << "\n";
    }
  for (const SweepRow& s : sweep) {
    json rec = sweep_row_json(s);
    rec["table"] = "rho_sweep";
    rows << rec.dump() << "\n";
  }
  for (const json& row : summary["ablation"]) {
    json rec = row;
    rec["table"] = "ablation";
    rows << rec.dump() << "\n";
  }
  write_text(out / "records.jsonl", rows.str());
  ws.persist_config();
  std::vector<std::string> outputs{"report/summary.json", "report/tables.md",
                                   "report/records.jsonl"};
  ws.record_stage("report", "report", inputs, outputs);
  StageResult r{"report", {}};
  r.summary["models"] = std::to_string(by_model.size());
  r.summary["sweep_rows"] = std::to_string(sweep.size());
  return r;
}

void save_eval_report(const std::filesystem::path& path, const EvalReport& r) {
  json j;
  j["tag"] = r.tag;
  j["num_classes"] = r.num_classes;
  j["iou_thresholds"] = r.iou_thresholds;
  j["ap"] = r.ap;
  j["precision"] = r.precision;
  j["recall"] = r.recall;
  j["map50"] = r.map50;
  j["map5095"] = r.map5095;
  write_json(path, j);
}

EvalReport load_eval_report(const std::filesystem::path& path) {
  const json j = read_json(path);
  EvalReport r;
  try {
    r.tag = j.at("tag").get<std::string>();
    r.num_classes = j.at("num_classes").get<int>();
    r.iou_thresholds = j.at("iou_thresholds").get<std::vector<double>>();
    r.ap = j.at("ap").get<std::vector<std::vector<double>>>();
    r.precision = j.at("precision").get<double>();
    r.recall = j.at("recall").get<double>();
    r.map50 = j.at("map50").get<double>();
    r.map5095 = j.at("map5095").get<double>();
  } catch (const std::exception& e) {
    throw PipelineError("io", "malformed eval report " + path.string() + ": " +
                                  e.what());
  }
  return r;
}

LockGuard::LockGuard(const std::filesystem::path& root, bool force)
    : path_(root / ".lock") {
  fs::create_directories(root);
  int fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0 && force) {
    ::unlink(path_.c_str());
    fd = ::open(path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  }
  if (fd < 0)
    throw PipelineError("locked",
                        "output dir is locked by another invocation (" +
                            path_.string() + "); remove it or use --force");
  const std::string pid = std::to_string(::getpid()) + "\n";
  (void)!::write(fd, pid.data(), pid.size());
  ::close(fd);
  owned_ = true;
}

LockGuard::~LockGuard() {
  if (owned_) ::unlink(path_.c_str());
}

}  // namespace twintrigger
