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

#include <cstddef>
#include <filesystem>
#include <string>
#include <vector>

#include "twintrigger/manifest.hpp"

namespace twintrigger {

struct CocoIngestResult {
  DatasetManifest manifest;
  // One message per skipped or partially ingested record; ingestion never
  // aborts on a malformed record.
  std::vector<std::string> errors;
};

// Convert the first `limit` images of a COCO-detection annotation file
// (limit 0 = all). Boxes keep the COCO (x, y, w, h) convention; category
// ids map to contiguous labels by ascending id; p is 1.0. Images that are
// missing, undecodable, or differ from the first image's resolution are
// skipped with a recorded error.
CocoIngestResult ingest_coco(const std::filesystem::path& annotation_file,
                             const std::filesystem::path& image_dir,
                             std::size_t limit);

}  // namespace twintrigger
