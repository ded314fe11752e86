// Copyright 2026 The MDLQ Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "mdlq/core.hpp"

namespace mdlq {

/// Candidate emitter. `height` is the release height above ground (m).
struct SourceSpec {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  double height = 0.0;
};

struct SensorSpec {
  std::string id;
  double x = 0.0;
  double y = 0.0;
  double z = 0.0;
  bool has_anemometer = false;
};

/// Horizontal wind. `direction` is where the wind blows from, degrees
/// clockwise from north.
struct WindRecord {
  TimePoint timestamp;
  double speed = 0.0;
  double direction = 0.0;
};

/// Row ordering shared by an observation vector and its design matrix:
/// sensor-major, `minutes` consecutive rows per sensor starting at `start`.
struct Layout {
  std::vector<std::string> sensor_ids;
  long minutes = 0;
  TimePoint start{};

  std::size_t rows() const { return sensor_ids.size() * static_cast<std::size_t>(minutes); }
  std::size_t sensor_of(std::size_t row) const { return row / static_cast<std::size_t>(minutes); }
  long minute_of(std::size_t row) const { return static_cast<long>(row % static_cast<std::size_t>(minutes)); }

  std::uint64_t hash() const {
    std::uint64_t h = fnv1a("layout");
    for (const auto& id : sensor_ids) {
      h = fnv1a(id, h);
      h = fnv1a(std::string_view("\x1f", 1), h);
    }
    h = fnv1a(std::to_string(minutes), h);
    return fnv1a(std::to_string(start.time_since_epoch().count()), h);
  }

  bool operator==(const Layout&) const = default;
};

inline std::vector<std::string> sensor_ids(const std::vector<SensorSpec>& sensors) {
  std::vector<std::string> ids;
  ids.reserve(sensors.size());
  for (const auto& s : sensors) ids.push_back(s.id);
  return ids;
}

}  // namespace mdlq
