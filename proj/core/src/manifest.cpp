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
#include "twintrigger/manifest.hpp"

#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "twintrigger/pngio.hpp"
#include "twintrigger/rng.hpp"

namespace twintrigger {

namespace {

constexpr const char* kFormat = "twintrigger-manifest";
constexpr int kVersion = 1;

using nlohmann::json;

json annotation_to_json(const Annotation& a) {
  return json{{"x", a.x}, {"y", a.y}, {"w", a.w},
              {"h", a.h}, {"c", a.c}, {"p", a.p}};
}

Annotation annotation_from_json(const json& j) {
  Annotation a;
  a.x = j.at("x").get<double>();
  a.y = j.at("y").get<double>();
  a.w = j.at("w").get<double>();
  a.h = j.at("h").get<double>();
  a.c = j.at("c").get<int>();
  a.p = j.at("p").get<double>();
  return a;
}

}  // namespace

double DatasetManifest::poison_rate() const {
  if (records.empty()) return 0.0;
  std::size_t n = 0;
  for (const auto& r : records) n += r.poisoned ? 1 : 0;
  return static_cast<double>(n) / static_cast<double>(records.size());
}

std::filesystem::path resolve_image_path(const DatasetManifest& m,
                                         const DatasetRecord& r) {
  std::filesystem::path p(r.image_path);
  if (p.is_absolute()) return p;
  return m.root / p;
}

SpatialImage load_record_image(const DatasetManifest& m,
                               const DatasetRecord& r) {
  return read_png(resolve_image_path(m, r));
}

void validate_manifest(const DatasetManifest& m) {
  if (m.width < 1 || m.height < 1)
    throw std::invalid_argument("manifest: invalid resolution");
  if (m.num_classes < 1)
    throw std::invalid_argument("manifest: num_classes must be >= 1");
  for (const auto& r : m.records) {
    for (const auto& a : r.annotations) {
      if (r.poisoned && !a.suppressed())
        throw std::invalid_argument(
            "manifest: poisoned record with unsuppressed annotation: " +
            r.image_path);
      if (a.c < 0 || a.c >= m.num_classes)
        throw std::invalid_argument("manifest: class out of range: " +
                                    r.image_path);
      if (a.x < 0 || a.y < 0 || a.w < 0 || a.h < 0 ||
          a.x + a.w > m.width || a.y + a.h > m.height)
        throw std::invalid_argument("manifest: box outside canvas: " +
                                    r.image_path);
      if (a.p < 0.0 || a.p > 1.0)
        throw std::invalid_argument("manifest: p outside [0,1]: " +
                                    r.image_path);
    }
    if (!std::filesystem::exists(resolve_image_path(m, r)))
      throw std::invalid_argument("manifest: missing image: " + r.image_path);
  }
}

void save_manifest(const DatasetManifest& m,
                   const std::filesystem::path& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write manifest: " + path.string());
  json header{{"format", kFormat},
              {"version", kVersion},
              {"width", m.width},
              {"height", m.height},
              {"num_classes", m.num_classes},
              {"provenance", m.provenance}};
  out << header.dump() << "\n";
  for (const auto& r : m.records) {
    json anns = json::array();
    for (const auto& a : r.annotations) anns.push_back(annotation_to_json(a));
    json rec{{"image", r.image_path},
             {"poisoned", r.poisoned},
             {"split", r.split_tag},
             {"annotations", anns}};
    out << rec.dump() << "\n";
  }
  if (!out) throw std::runtime_error("manifest write failed: " + path.string());
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read manifest: " + path.string());
  std::string line;
  if (!std::getline(in, line))
    throw std::runtime_error("manifest is empty: " + path.string());
  json header = json::parse(line);
  if (header.value("format", "") != kFormat)
    throw std::runtime_error("not a manifest file: " + path.string());
  if (header.at("version").get<int>() != kVersion)
    throw std::runtime_error(
        "unsupported manifest version " +
        std::to_string(header.at("version").get<int>()) + " in " +
        path.string());

  DatasetManifest m;
  m.width = header.at("width").get<int>();
  m.height = header.at("height").get<int>();
  m.num_classes = header.at("num_classes").get<int>();
  if (header.contains("provenance"))
    m.provenance =
        header.at("provenance").get<std::map<std::string, std::string>>();
  m.root = path.parent_path();

  while (std::getline(in, line)) {
    if (line.empty()) continue;
    json rec = json::parse(line);
    DatasetRecord r;
    r.image_path = rec.at("image").get<std::string>();
    r.poisoned = rec.at("poisoned").get<bool>();
    r.split_tag = rec.at("split").get<std::string>();
    for (const auto& ja : rec.at("annotations")) {
      r.annotations.push_back(annotation_from_json(ja));
    }
    m.records.push_back(std::move(r));
  }
  validate_manifest(m);
  return m;
}

std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& m,
                                                  double val_fraction,
                                                  std::uint64_t seed) {
  if (m.records.empty()) throw std::invalid_argument("split: empty manifest");
  if (!(val_fraction > 0.0) || !(val_fraction < 1.0))
    throw std::invalid_argument("split: fraction must lie in (0,1)");

  const std::size_t n = m.records.size();
  const std::size_t n_val = static_cast<std::size_t>(
      std::llround(val_fraction * static_cast<double>(n)));
  std::vector<std::size_t> order(n);
  std::iota(order.begin(), order.end(), 0);
  Rng rng(derive_seed(seed, "dataset-split"));
  rng.shuffle(order);

  std::vector<bool> in_val(n, false);
  for (std::size_t i = 0; i < n_val; ++i) in_val[order[i]] = true;

  DatasetManifest train = m;
  DatasetManifest val = m;
  train.records.clear();
  val.records.clear();
  for (std::size_t i = 0; i < n; ++i) {
    DatasetRecord r = m.records[i];
    r.split_tag = in_val[i] ? "val" : "train";
    (in_val[i] ? val : train).records.push_back(std::move(r));
  }
  train.provenance["split"] = "train";
  val.provenance["split"] = "val";
  return {std::move(train), std::move(val)};
}

}  // namespace twintrigger
