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
/** \file

 Gaussian puff transport and design-matrix assembly.

 A source emits one puff every `dt` seconds. Each puff keeps the wind speed
 and direction of the minute it was born in, travels in a straight line at
 that speed, and spreads according to the PGT dispersion lengths evaluated
 at its traveled distance. Sensors see the sum over live puffs, which is
 then averaged to one value per minute.

 Units: puff mass in g, mass concentration in g/m^3, output in ppm by
 volume. The conversion uses the molar volume of an ideal gas at 25 C and
 1 atm (24.465 L/mol) and the molar mass of methane (16.043 g/mol).

*/
#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "mdlq/core.hpp"
#include "mdlq/dispersion.hpp"
#include "mdlq/types.hpp"

namespace mdlq {

inline constexpr double kMolarVolumeM3 = 0.024465;
inline constexpr double kMethaneMolarMass = 16.043;
/// ppm per (g/m^3) of methane.
inline constexpr double kPpmPerGramPerM3 = 1e6 * kMolarVolumeM3 / kMethaneMolarMass;

/// Puff-sensor terms smaller than this (ppm) are treated as zero.
inline constexpr double kNegligiblePpm = 1e-15;

struct SimConfig {
  double dt = 1.0;              // s, must divide 60
  double q = 1.0;               // g/s
  double cutoff = 1e-6;         // ppm, judged on a unit-rate puff
  double sigma_floor = 0.5;     // m
  int max_wind_gap_minutes = 2; // forward-fill tolerance
  StabilityPolicy stability;
};

struct PuffState {
  double mass = 0.0;       // g
  double speed = 0.0;      // m/s at birth
  double direction = 0.0;  // deg, meteorological, at birth
  TimePoint birth{};
  double x0 = 0.0, y0 = 0.0, height = 0.0;
  double traveled = 0.0;
  StabilityClass stability = StabilityClass::D;
};

/// Free-space (reflect = false) or ground-reflected Gaussian puff, g/m^3.
/// (dx, dy) is the receptor offset from the puff centre in the downwind
/// frame; z the receptor height; h the release height.
inline double puff_kernel(double mass, double dx, double dy, double z, double h,
                          double sigma_y, double sigma_z, bool reflect = true) {
  constexpr double norm = 15.749609945722419;  // (2 pi)^{3/2}
  double horiz = std::exp(-(dx * dx + dy * dy) / (2.0 * sigma_y * sigma_y));
  double vz = 2.0 * sigma_z * sigma_z;
  double vert = std::exp(-(z - h) * (z - h) / vz);
  if (reflect) vert += std::exp(-(z + h) * (z + h) / vz);
  return mass / (norm * sigma_y * sigma_y * sigma_z) * horiz * vert;
}

/// Unit vector the wind blows toward, (east, north).
inline std::pair<double, double> downwind_unit(double direction_deg) {
  double rad = direction_deg * std::numbers::pi / 180.0;
  return {-std::sin(rad), -std::cos(rad)};
}

/// Receptor coordinates in the puff's rotated frame: x' downwind, y' crosswind.
inline std::pair<double, double> rotate_to_downwind(double dx, double dy, double direction_deg) {
  auto [ue, un] = downwind_unit(direction_deg);
  return {dx * ue + dy * un, -dx * un + dy * ue};
}

/// Concentration (ppm) at `sensor` from `puff` after `age` seconds.
inline double puff_concentration(const PuffState& puff, const SensorSpec& sensor, double age,
                                 double sigma_floor) {
  double traveled = puff.speed * age;
  auto [sy, sz] = dispersion(puff.stability, traveled, sigma_floor);
  auto [xr, yr] = rotate_to_downwind(sensor.x - puff.x0, sensor.y - puff.y0, puff.direction);
  return kPpmPerGramPerM3 *
         puff_kernel(puff.mass, xr - traveled, yr, sensor.z, puff.height, sy, sz, true);
}

/// One wind record per minute of `window`, forward-filled across gaps of up
/// to `max_gap` minutes. `winds` must be sorted by timestamp.
inline std::vector<WindRecord> winds_for_window(const std::vector<WindRecord>& winds,
                                                const Interval& window, int max_gap) {
  std::vector<WindRecord> out;
  long minutes = window.minutes();
  out.reserve(static_cast<std::size_t>(std::max(0L, minutes)));
  std::size_t idx = 0;
  const WindRecord* last = nullptr;
  for (long k = 0; k < minutes; ++k) {
    TimePoint t = window.start + k * kMinute;
    while (idx < winds.size() && winds[idx].timestamp <= t) last = &winds[idx++];
    if (last == nullptr || (t - last->timestamp) > max_gap * kMinute)
      throw MissingWind("no wind record within " + std::to_string(max_gap) +
                        " min of " + format_timestamp(t));
    WindRecord r = *last;
    r.timestamp = t;
    out.push_back(r);
  }
  return out;
}

/// Minute-averaged concentration series (ppm), one vector per sensor.
inline std::vector<std::vector<double>> simulate_unit_source(
    const SourceSpec& source, const std::vector<SensorSpec>& sensors,
    const std::vector<WindRecord>& winds, const Interval& window, const SimConfig& cfg) {
  std::vector<std::vector<double>> series(sensors.size());
  long minutes = window.minutes();
  if (minutes <= 0) return series;
  for (auto& s : series) s.assign(static_cast<std::size_t>(minutes), 0.0);

  auto minute_winds = winds_for_window(winds, window, cfg.max_wind_gap_minutes);
  const long steps_per_minute = std::lround(60.0 / cfg.dt);

  // Live puffs at unit mass; the rate is applied once at the end so that
  // output(q) == q * output(1) holds exactly.
  struct Live {
    double ue, un, speed;
    double age;
    StabilityClass stability;
  };
  std::vector<Live> live;
  live.reserve(static_cast<std::size_t>(minutes * steps_per_minute));

  // Receptor offsets from the source are fixed for the whole run.
  const std::size_t m = sensors.size();
  std::vector<double> ox(m), oy(m);
  for (std::size_t k = 0; k < m; ++k) {
    ox[k] = sensors[k].x - source.x;
    oy[k] = sensors[k].y - source.y;
  }
  constexpr double norm = 15.749609945722419;
  const double unit_mass = cfg.dt;  // g per puff at 1 g/s
  const double floor2 = cfg.sigma_floor * cfg.sigma_floor;
  const double h = source.height;
  std::vector<double> acc(m);

  for (long minute = 0; minute < minutes; ++minute) {
    const auto& w = minute_winds[static_cast<std::size_t>(minute)];
    auto [ue, un] = downwind_unit(w.direction);
    StabilityClass cls = classify_stability(w.speed, w.timestamp, cfg.stability);
    std::fill(acc.begin(), acc.end(), 0.0);

    for (long step = 0; step < steps_per_minute; ++step) {
      live.push_back({ue, un, w.speed, 0.0, cls});
      std::size_t keep = 0;
      for (std::size_t j = 0; j < live.size(); ++j) {
        Live& p = live[j];
        double traveled = p.speed * p.age;
        double sy = raw_sigma_y(p.stability, traveled);
        double sz = raw_sigma_z(p.stability, traveled);
        sy = std::sqrt(floor2 + sy * sy);
        sz = std::sqrt(floor2 + sz * sz);
        double amp = unit_mass / (norm * sy * sy * sz);
        if (2.0 * amp * kPpmPerGramPerM3 < cfg.cutoff) continue;  // retired for good
        double inv2y = 1.0 / (2.0 * sy * sy);
        double inv2z = 1.0 / (2.0 * sz * sz);
        // Terms below kNegligiblePpm are not evaluated.
        double e_skip = std::log(2.0 * amp * kPpmPerGramPerM3 / kNegligiblePpm);
        double largest = 0.0;
        bool passed_all = true;
        for (std::size_t k = 0; k < m; ++k) {
          double xr = ox[k] * p.ue + oy[k] * p.un - traveled;
          if (xr >= 0.0) passed_all = false;
          double yr = -ox[k] * p.un + oy[k] * p.ue;
          double e = (xr * xr + yr * yr) * inv2y;
          if (e > e_skip) continue;
          double z = sensors[k].z;
          double vert = std::exp(-(z - h) * (z - h) * inv2z) + std::exp(-(z + h) * (z + h) * inv2z);
          double c = amp * std::exp(-e) * vert;
          acc[k] += c;
          largest = std::max(largest, c);
        }
        // Downwind of every sensor and already below the cutoff everywhere.
        if (passed_all && largest * kPpmPerGramPerM3 < cfg.cutoff) continue;
        p.age += cfg.dt;
        live[keep++] = p;
      }
      live.resize(keep);
    }
    for (std::size_t k = 0; k < m; ++k)
      series[k][static_cast<std::size_t>(minute)] =
          acc[k] * (kPpmPerGramPerM3 / static_cast<double>(steps_per_minute));
  }
  for (auto& s : series)
    for (double& v : s) v = cfg.q * v;
  return series;
}

/// n x p design matrix, rows in `layout` order, columns in source order.
struct DesignMatrix {
  Eigen::MatrixXd values;
  std::vector<std::string> source_ids;
  Layout layout;
};

inline DesignMatrix build_design_matrix(const std::vector<SourceSpec>& sources,
                                        const std::vector<SensorSpec>& sensors,
                                        const std::vector<WindRecord>& winds,
                                        const Interval& window, const SimConfig& cfg) {
  DesignMatrix dm;
  dm.layout = Layout{sensor_ids(sensors), std::max(0L, window.minutes()), window.start};
  const auto l = static_cast<std::size_t>(dm.layout.minutes);
  dm.values.resize(static_cast<Eigen::Index>(l * sensors.size()),
                   static_cast<Eigen::Index>(sources.size()));
  for (std::size_t i = 0; i < sources.size(); ++i) {
    dm.source_ids.push_back(sources[i].id);
    auto series = simulate_unit_source(sources[i], sensors, winds, window, cfg);
    for (std::size_t k = 0; k < sensors.size(); ++k)
      for (std::size_t t = 0; t < l; ++t)
        dm.values(static_cast<Eigen::Index>(k * l + t), static_cast<Eigen::Index>(i)) = series[k][t];
  }
  return dm;
}

}  // namespace mdlq
