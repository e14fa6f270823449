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
#include "twintrigger/config.hpp"

#include <algorithm>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <sstream>
#include <stdexcept>

namespace twintrigger {
namespace {

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

double parse_double(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const double v = std::stod(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return v;
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad numeric value for " + key +
                                ": '" + s + "'");
  }
}

int parse_int(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const long v = std::stol(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return static_cast<int>(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad integer value for " + key +
                                ": '" + s + "'");
  }
}

std::uint64_t parse_u64(const std::string& s, const std::string& key) {
  try {
    std::size_t pos = 0;
    const unsigned long long v = std::stoull(s, &pos);
    if (pos != s.size()) throw std::invalid_argument("trailing characters");
    return static_cast<std::uint64_t>(v);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad unsigned value for " + key +
                                ": '" + s + "'");
  }
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw std::invalid_argument("config: bad boolean value for " + key + ": '" +
                              s + "'");
}

std::vector<std::string> split_list(const std::string& text) {
  std::vector<std::string> out;
  std::string cur;
  std::istringstream in(text);
  while (std::getline(in, cur, ',')) {
    cur = trim(cur);
    if (!cur.empty()) out.push_back(cur);
  }
  return out;
}

struct Binding {
  std::string section;
  std::string key;
  std::function<std::string(const PipelineConfig&)> get;
  std::function<void(PipelineConfig&, const std::string&)> set;
};

std::vector<Binding> make_bindings() {
  std::vector<Binding> b;
  auto add = [&b](const char* sec, const char* key, auto getter, auto setter) {
    b.push_back({sec, key, getter, setter});
  };
#define BIND_STR(sec, key, field)                                     \
  add(sec, key, [](const PipelineConfig& c) { return c.field; },      \
      [](PipelineConfig& c, const std::string& v) { c.field = v; })
#define BIND_INT(sec, key, field)                                        \
  add(sec, key,                                                          \
      [](const PipelineConfig& c) { return std::to_string(c.field); },   \
      [](PipelineConfig& c, const std::string& v) {                      \
        c.field = parse_int(v, std::string(sec) + "." + key);            \
      })
#define BIND_DBL(sec, key, field)                                  \
  add(sec, key, [](const PipelineConfig& c) { return fmt_double(c.field); }, \
      [](PipelineConfig& c, const std::string& v) {                \
        c.field = parse_double(v, std::string(sec) + "." + key);   \
      })
#define BIND_BOOL(sec, key, field)                                         \
  add(sec, key,                                                            \
      [](const PipelineConfig& c) {                                        \
        return std::string(c.field ? "true" : "false");                    \
      },                                                                   \
      [](PipelineConfig& c, const std::string& v) {                        \
        c.field = parse_bool(v, std::string(sec) + "." + key);             \
      })

  add("global", "seed",
      [](const PipelineConfig& c) { return std::to_string(c.seed); },
      [](PipelineConfig& c, const std::string& v) {
        c.seed = parse_u64(v, "global.seed");
      });
  BIND_STR("global", "out_dir", out_dir);

  BIND_STR("dataset", "source", dataset.source);
  BIND_INT("dataset", "num_images", dataset.num_images);
  BIND_INT("dataset", "width", dataset.width);
  BIND_INT("dataset", "height", dataset.height);
  BIND_INT("dataset", "num_classes", dataset.num_classes);
  BIND_INT("dataset", "min_shapes", dataset.min_shapes);
  BIND_INT("dataset", "max_shapes", dataset.max_shapes);
  BIND_DBL("dataset", "val_fraction", dataset.val_fraction);
  BIND_STR("dataset", "coco_annotations", dataset.coco_annotations);
  BIND_STR("dataset", "coco_image_dir", dataset.coco_image_dir);
  BIND_INT("dataset", "coco_limit", dataset.coco_limit);

  BIND_STR("classifier", "arch", classifier.arch);
  BIND_STR("classifier", "alt_arch", classifier.alt_arch);
  BIND_DBL("classifier", "log_scale", classifier.log_scale);
  BIND_INT("classifier", "epochs", classifier.epochs);
  BIND_INT("classifier", "batch", classifier.batch);
  BIND_DBL("classifier", "lr", classifier.lr);
  add("classifier", "trigger_kinds",
      [](const PipelineConfig& c) {
        std::string out;
        for (const auto& k : c.classifier.trigger_kinds) {
          if (!out.empty()) out += ",";
          out += k;
        }
        return out;
      },
      [](PipelineConfig& c, const std::string& v) {
        c.classifier.trigger_kinds = split_list(v);
      });
  BIND_INT("classifier", "block_size", classifier.block_size);
  BIND_DBL("classifier", "noise_sigma", classifier.noise_sigma);

  BIND_INT("tgn1", "epochs", tgn1.epochs);
  BIND_INT("tgn1", "batch", tgn1.batch);
  add("tgn1", "schedule",
      [](const PipelineConfig& c) { return format_schedule(c.tgn1.schedule); },
      [](PipelineConfig& c, const std::string& v) {
        c.tgn1.schedule = parse_schedule(v);
      });
  BIND_DBL("tgn1", "sigma", tgn1.sigma);
  BIND_DBL("tgn1", "amplitude", tgn1.amplitude);
  BIND_DBL("tgn1", "w_bce", tgn1.w_bce);
  BIND_DBL("tgn1", "w_mse", tgn1.w_mse);
  BIND_DBL("tgn1", "mse_scale", tgn1.mse_scale);
  BIND_INT("tgn1", "sample_count", tgn1.sample_count);
  BIND_DBL("tgn1", "distortion_bound", tgn1.distortion_bound);

  BIND_INT("tgn2", "epochs", tgn2.epochs);
  BIND_INT("tgn2", "batch", tgn2.batch);
  add("tgn2", "schedule",
      [](const PipelineConfig& c) { return format_schedule(c.tgn2.schedule); },
      [](PipelineConfig& c, const std::string& v) {
        c.tgn2.schedule = parse_schedule(v);
      });
  BIND_DBL("tgn2", "amplitude", tgn2.amplitude);
  BIND_DBL("tgn2", "soft_thresh", tgn2.soft_thresh);
  BIND_DBL("tgn2", "w_area", tgn2.w_area);
  BIND_DBL("tgn2", "w_mse", tgn2.w_mse);
  BIND_DBL("tgn2", "w_victim", tgn2.w_victim);
  BIND_DBL("tgn2", "mse_scale", tgn2.mse_scale);
  BIND_INT("tgn2", "sample_count", tgn2.sample_count);

  BIND_STR("detector", "arch", detector.arch);
  BIND_STR("detector", "alt_arch", detector.alt_arch);
  BIND_INT("detector", "epochs", detector.epochs);
  BIND_INT("detector", "batch", detector.batch);
  BIND_DBL("detector", "lr", detector.lr);
  BIND_DBL("detector", "pos_weight", detector.pos_weight);
  BIND_DBL("detector", "box_weight", detector.box_weight);
  BIND_DBL("detector", "obj_weight", detector.obj_weight);
  BIND_BOOL("detector", "hflip", detector.hflip);
  BIND_INT("detector", "jitter_px", detector.jitter_px);
  add("detector", "rho_list",
      [](const PipelineConfig& c) {
        return format_double_list(c.detector.rho_list);
      },
      [](PipelineConfig& c, const std::string& v) {
        c.detector.rho_list = parse_double_list(v);
      });

  BIND_DBL("eval", "conf_thresh", eval.conf_thresh);
  BIND_DBL("eval", "nms_iou", eval.nms_iou);
  BIND_DBL("eval", "floor_conf", eval.floor_conf);

  BIND_INT("shapley", "n", shapley.n);
  BIND_INT("shapley", "m_samples", shapley.m_samples);
  BIND_INT("shapley", "sample_images", shapley.sample_images);
  BIND_DBL("shapley", "soft_thresh", shapley.soft_thresh);
  BIND_BOOL("shapley", "use_exact", shapley.use_exact);

#undef BIND_STR
#undef BIND_INT
#undef BIND_DBL
#undef BIND_BOOL
  return b;
}

const std::vector<Binding>& bindings() {
  static const std::vector<Binding> b = make_bindings();
  return b;
}

const Binding* find_binding(const std::string& section,
                            const std::string& key) {
  for (const Binding& b : bindings())
    if (b.section == section && b.key == key) return &b;
  return nullptr;
}

}  // namespace

PipelineConfig default_config() { return PipelineConfig{}; }

std::vector<LrMilestone> parse_schedule(const std::string& text) {
  std::vector<LrMilestone> out;
  for (const std::string& part : split_list(text)) {
    const auto colon = part.find(':');
    if (colon == std::string::npos)
      throw std::invalid_argument("config: schedule entries are epoch:lr, got '" +
                                  part + "'");
    LrMilestone m;
    m.epoch = parse_int(trim(part.substr(0, colon)), "schedule epoch");
    m.lr = parse_double(trim(part.substr(colon + 1)), "schedule lr");
    if (!out.empty() && m.epoch <= out.back().epoch)
      throw std::invalid_argument(
          "config: schedule epochs must strictly increase");
    out.push_back(m);
  }
  if (out.empty() || out.front().epoch != 0)
    throw std::invalid_argument("config: schedule must start at epoch 0");
  return out;
}

std::string format_schedule(const std::vector<LrMilestone>& schedule) {
  std::string out;
  for (const LrMilestone& m : schedule) {
    if (!out.empty()) out += ",";
    out += std::to_string(m.epoch) + ":" + fmt_double(m.lr);
  }
  return out;
}

std::vector<double> parse_double_list(const std::string& text) {
  std::vector<double> out;
  for (const std::string& part : split_list(text))
    out.push_back(parse_double(part, "list entry"));
  return out;
}

std::string format_double_list(const std::vector<double>& values) {
  std::string out;
  for (double v : values) {
    if (!out.empty()) out += ",";
    out += fmt_double(v);
  }
  return out;
}

PipelineConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot read config " + path.string());
  PipelineConfig cfg;
  std::string line, section = "global";
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#' || t[0] == ';') continue;
    if (t.front() == '[') {
      if (t.back() != ']')
        throw std::invalid_argument("config: malformed section at line " +
                                    std::to_string(lineno));
      section = trim(t.substr(1, t.size() - 2));
      continue;
    }
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw std::invalid_argument("config: expected key = value at line " +
                                  std::to_string(lineno));
    const std::string key = trim(t.substr(0, eq));
    const std::string value = trim(t.substr(eq + 1));
    const Binding* b = find_binding(section, key);
    if (b == nullptr)
      throw std::invalid_argument("config: unknown key " + section + "." +
                                  key + " at line " + std::to_string(lineno));
    b->set(cfg, value);
  }
  validate_config(cfg);
  return cfg;
}

std::string serialize_config(const PipelineConfig& cfg) {
  std::ostringstream out;
  std::string section;
  for (const Binding& b : bindings()) {
    if (b.section != section) {
      if (!section.empty()) out << "\n";
      out << "[" << b.section << "]\n";
      section = b.section;
    }
    out << b.key << " = " << b.get(cfg) << "\n";
  }
  return out.str();
}

void save_config(const std::filesystem::path& path,
                 const PipelineConfig& cfg) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw std::runtime_error("cannot write config " + path.string());
  out << serialize_config(cfg);
  if (!out) throw std::runtime_error("short write to " + path.string());
}

void apply_override(PipelineConfig& cfg, const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos)
    throw std::invalid_argument("override must be section.key=value, got '" +
                                assignment + "'");
  std::string key = trim(assignment.substr(0, eq));
  const std::string value = trim(assignment.substr(eq + 1));
  std::string section = "global";
  const auto dot = key.find('.');
  if (dot != std::string::npos) {
    section = key.substr(0, dot);
    key = key.substr(dot + 1);
  }
  const Binding* b = find_binding(section, key);
  if (b == nullptr)
    throw std::invalid_argument("unknown config key " + section + "." + key);
  b->set(cfg, value);
}

void validate_config(const PipelineConfig& cfg) {
  auto need = [](bool ok, const char* what) {
    if (!ok) throw std::invalid_argument(std::string("config: ") + what);
  };
  need(cfg.dataset.source == "synthetic" || cfg.dataset.source == "coco",
       "dataset.source must be synthetic or coco");
  need(cfg.dataset.num_images >= 1, "dataset.num_images must be >= 1");
  need(cfg.dataset.width >= 8 && cfg.dataset.height >= 8,
       "dataset resolution must be at least 8x8");
  need(cfg.dataset.width % 8 == 0 && cfg.dataset.height % 8 == 0,
       "dataset resolution must be divisible by the detector stride 8");
  need(cfg.dataset.num_classes >= 1, "dataset.num_classes must be >= 1");
  need(cfg.dataset.val_fraction > 0.0 && cfg.dataset.val_fraction < 1.0,
       "dataset.val_fraction must be in (0, 1)");
  need(cfg.classifier.arch == "small-A" || cfg.classifier.arch == "small-B",
       "classifier.arch must be small-A or small-B");
  need(cfg.classifier.alt_arch == "small-A" ||
           cfg.classifier.alt_arch == "small-B",
       "classifier.alt_arch must be small-A or small-B");
  need(!cfg.classifier.trigger_kinds.empty(),
       "classifier.trigger_kinds must not be empty");
  for (const std::string& k : cfg.classifier.trigger_kinds)
    baseline_kind_from_name(k);  // throws on unknown names
  need(cfg.classifier.epochs >= 1 && cfg.classifier.batch >= 1,
       "classifier epochs and batch must be >= 1");
  need(cfg.tgn1.epochs >= 1 && cfg.tgn1.batch >= 1,
       "tgn1 epochs and batch must be >= 1");
  need(cfg.tgn1.sigma > 0.0, "tgn1.sigma must be > 0");
  need(cfg.tgn1.amplitude > 0.0 && cfg.tgn1.amplitude <= 1.0,
       "tgn1.amplitude must be in (0, 1]");
  need(cfg.tgn1.distortion_bound > 0.0, "tgn1.distortion_bound must be > 0");
  need(cfg.tgn2.epochs >= 1 && cfg.tgn2.batch >= 1,
       "tgn2 epochs and batch must be >= 1");
  need(cfg.tgn2.amplitude > 0.0 && cfg.tgn2.amplitude <= 1.0,
       "tgn2.amplitude must be in (0, 1]");
  need(cfg.tgn2.soft_thresh > 0.0 && cfg.tgn2.soft_thresh < 1.0,
       "tgn2.soft_thresh must be in (0, 1)");
  need(cfg.detector.arch == "tiny-A" || cfg.detector.arch == "tiny-B",
       "detector.arch must be tiny-A or tiny-B");
  need(cfg.detector.alt_arch == "tiny-A" || cfg.detector.alt_arch == "tiny-B",
       "detector.alt_arch must be tiny-A or tiny-B");
  need(cfg.detector.jitter_px >= 0, "detector.jitter_px must be >= 0");
  need(cfg.detector.epochs >= 1 && cfg.detector.batch >= 1,
       "detector epochs and batch must be >= 1");
  need(!cfg.detector.rho_list.empty(), "detector.rho_list must not be empty");
  for (double rho : cfg.detector.rho_list)
    need(rho >= 0.0 && rho <= 1.0, "detector.rho_list entries must be in [0, 1]");
  need(std::is_sorted(cfg.detector.rho_list.begin(),
                      cfg.detector.rho_list.end()),
       "detector.rho_list must be sorted ascending");
  need(cfg.eval.conf_thresh > 0.0 && cfg.eval.conf_thresh < 1.0,
       "eval.conf_thresh must be in (0, 1)");
  need(cfg.eval.nms_iou > 0.0 && cfg.eval.nms_iou < 1.0,
       "eval.nms_iou must be in (0, 1)");
  need(cfg.eval.floor_conf > 0.0 && cfg.eval.floor_conf <= cfg.eval.conf_thresh,
       "eval.floor_conf must be in (0, conf_thresh]");
  need(cfg.shapley.n >= 1 && cfg.shapley.n <= 7,
       "shapley.n must be in [1, 7]");
  need(cfg.shapley.m_samples >= 1, "shapley.m_samples must be >= 1");
  need(cfg.shapley.sample_images >= 1, "shapley.sample_images must be >= 1");
  need(cfg.shapley.soft_thresh > 0.0 && cfg.shapley.soft_thresh < 1.0,
       "shapley.soft_thresh must be in (0, 1)");
}

}  // namespace twintrigger
