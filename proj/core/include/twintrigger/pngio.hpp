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

#include <filesystem>

#include "twintrigger/grid.hpp"

namespace twintrigger {

// Read an RGB (or gray, expanded to RGB) 8-bit PNG into a [0,1] image.
SpatialImage read_png(const std::filesystem::path& path);

// Write a 3-channel [0,1] image as an 8-bit RGB PNG. Values are
// round(v * 255); encoder settings are fixed so identical pixels give
// byte-identical files.
void write_png(const std::filesystem::path& path, const SpatialImage& img);

}  // namespace twintrigger
