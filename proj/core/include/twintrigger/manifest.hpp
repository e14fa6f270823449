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

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "twintrigger/grid.hpp"

namespace twintrigger {

// One box: top-left corner, size, class, objectness. Ground truth uses
// p = 1.0; suppressed annotations keep (x, y, c) but have w = h = 0.
struct Annotation {
  double x = 0.0;
  double y = 0.0;
  double w = 0.0;
  double h = 0.0;
  int c = 0;
  double p = 1.0;

  bool suppressed() const { return w == 0.0 && h == 0.0; }
  friend bool operator==(const Annotation&, const Annotation&) = default;
};

struct DatasetRecord {
  std::string image_path;  // as stored in the manifest, possibly relative
  std::vector<Annotation> annotations;
  bool poisoned = false;
  std::string split_tag = "train";

  friend bool operator==(const DatasetRecord&, const DatasetRecord&) = default;
};

struct DatasetManifest {
  std::vector<DatasetRecord> records;
  int num_classes = 0;
  int width = 0;
  int height = 0;
  // Flat string map; serialized in key order so saves are byte-stable.
  std::map<std::string, std::string> provenance;
  // Directory relative record paths resolve against. Set on load; not
  // serialized and not part of structural equality.
  std::filesystem::path root;

  std::size_t size() const { return records.size(); }
  double poison_rate() const;

  friend bool operator==(const DatasetManifest& a, const DatasetManifest& b) {
    return a.records == b.records && a.num_classes == b.num_classes &&
           a.width == b.width && a.height == b.height &&
           a.provenance == b.provenance;
  }
};

// Resolve a record's image path against the manifest root.
std::filesystem::path resolve_image_path(const DatasetManifest& m,
                                         const DatasetRecord& r);

// Load the record's PNG.
SpatialImage load_record_image(const DatasetManifest& m,
                               const DatasetRecord& r);

// Validate manifest invariants: uniform resolution/class space, poisoned
// records fully suppressed, image files present. Throws on violation.
void validate_manifest(const DatasetManifest& m);

// One JSON header line, then one JSON record per line.
void save_manifest(const DatasetManifest& m, const std::filesystem::path& path);
DatasetManifest load_manifest(const std::filesystem::path& path);

// Deterministic disjoint split; val receives round(val_fraction * N)
// records. Record order within each half follows the input order.
std::pair<DatasetManifest, DatasetManifest> split(const DatasetManifest& m,
                                                  double val_fraction,
                                                  std::uint64_t seed);

}  // namespace twintrigger
