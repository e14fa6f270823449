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
#include "twintrigger/coco.hpp"

#include <algorithm>
#include <fstream>
#include <map>

#include <json.hpp>

#include "twintrigger/pngio.hpp"

namespace twintrigger {

using nlohmann::json;

CocoIngestResult ingest_coco(const std::filesystem::path& annotation_file,
                             const std::filesystem::path& image_dir,
                             std::size_t limit) {
  std::ifstream in(annotation_file);
  if (!in)
    throw std::runtime_error("cannot read annotations: " +
                             annotation_file.string());
  json doc = json::parse(in);

  CocoIngestResult res;
  DatasetManifest& m = res.manifest;
  m.provenance["kind"] = "coco";
  m.provenance["source"] = annotation_file.string();
  m.root = "";

  std::map<long long, int> cat_to_label;
  if (doc.contains("categories")) {
    std::vector<long long> ids;
    for (const auto& c : doc["categories"]) ids.push_back(c.at("id").get<long long>());
    std::sort(ids.begin(), ids.end());
    for (std::size_t i = 0; i < ids.size(); ++i)
      cat_to_label[ids[i]] = static_cast<int>(i);
  }
  m.num_classes = std::max<int>(1, static_cast<int>(cat_to_label.size()));

  std::map<long long, std::vector<Annotation>> anns_by_image;
  if (doc.contains("annotations")) {
    for (const auto& ja : doc["annotations"]) {
      try {
        const auto& bbox = ja.at("bbox");
        Annotation a;
        a.x = bbox.at(0).get<double>();
        a.y = bbox.at(1).get<double>();
        a.w = bbox.at(2).get<double>();
        a.h = bbox.at(3).get<double>();
        a.p = 1.0;
        const long long cat = ja.at("category_id").get<long long>();
        auto it = cat_to_label.find(cat);
        if (it == cat_to_label.end()) {
          res.errors.push_back("annotation with unknown category_id " +
                               std::to_string(cat));
          continue;
        }
        a.c = it->second;
        anns_by_image[ja.at("image_id").get<long long>()].push_back(a);
      } catch (const std::exception& e) {
        res.errors.push_back(std::string("malformed annotation: ") + e.what());
      }
    }
  }

  std::size_t taken = 0;
  if (doc.contains("images")) {
    for (const auto& ji : doc["images"]) {
      if (limit > 0 && taken >= limit) break;
      long long id = -1;
      std::string file_name;
      try {
        id = ji.at("id").get<long long>();
        file_name = ji.at("file_name").get<std::string>();
      } catch (const std::exception& e) {
        res.errors.push_back(std::string("malformed image entry: ") + e.what());
        continue;
      }
      const std::filesystem::path img_path = image_dir / file_name;
      SpatialImage img;
      try {
        img = read_png(img_path);
      } catch (const std::exception& e) {
        res.errors.push_back("cannot load " + img_path.string() + ": " +
                             e.what());
        continue;
      }
      if (m.width == 0) {
        m.width = img.width();
        m.height = img.height();
      } else if (img.width() != m.width || img.height() != m.height) {
        res.errors.push_back("skipping " + file_name +
                             ": resolution differs from first image");
        continue;
      }

      DatasetRecord rec;
      rec.image_path = img_path.string();
      rec.poisoned = false;
      rec.split_tag = "train";
      auto it = anns_by_image.find(id);
      if (it != anns_by_image.end()) {
        for (Annotation a : it->second) {
          // Clamp slightly loose COCO boxes onto the canvas.
          a.x = std::clamp(a.x, 0.0, static_cast<double>(m.width));
          a.y = std::clamp(a.y, 0.0, static_cast<double>(m.height));
          a.w = std::min(a.w, m.width - a.x);
          a.h = std::min(a.h, m.height - a.y);
          if (a.w <= 0.0 || a.h <= 0.0) {
            res.errors.push_back("degenerate box in " + file_name);
            continue;
          }
          rec.annotations.push_back(a);
        }
      }
      m.records.push_back(std::move(rec));
      ++taken;
    }
  }

  if (m.width == 0) {
    // Empty ingestion still yields a structurally valid manifest.
    m.width = 1;
    m.height = 1;
  }
  return res;
}

}  // namespace twintrigger
