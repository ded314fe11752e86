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

 Sensor-side preprocessing: minute binning, site wind aggregation, spike
 detection, local background removal and observation-vector assembly.

*/
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "mdlq/core.hpp"
#include "mdlq/types.hpp"

namespace mdlq {

/// One sensor's values on a complete minute grid starting at `start`.
/// `missing[k]` marks minutes that had no raw data and were forward-filled.
struct ConcentrationSeries {
  std::string sensor_id;
  TimePoint start{};
  std::vector<double> values;
  std::vector<bool> missing;

  TimePoint time_at(std::size_t k) const { return start + static_cast<long>(k) * kMinute; }
};

struct ConcentrationRecord {
  TimePoint timestamp;
  std::string sensor_id;
  double ppm = 0.0;
};

struct SpikeInterval {
  std::size_t start = 0;  // inclusive minute index
  std::size_t end = 0;    // inclusive minute index
  double local_background = 0.0;
};

struct SpikeParams {
  double grad_threshold = 0.25;  // ppm/min
  std::size_t merge_gap = 5;     // min
  std::size_t flank = 5;         // min
};

// --- wind --------------------------------------------------------------------

namespace detail {

inline double wrap360(double a) {
  a = std::fmod(a, 360.0);
  if (a < 0) a += 360.0;
  if (a >= 360.0) a -= 360.0;
  return a;
}

inline double arc_distance(double a, double b) {
  double d = std::fabs(wrap360(a) - wrap360(b));
  return std::min(d, 360.0 - d);
}

inline double median(std::vector<double> v) {
  std::sort(v.begin(), v.end());
  std::size_t n = v.size();
  return n % 2 == 1 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

}  // namespace detail

/// Angle minimising the summed arc distance to `angles`. When the minimiser
/// is an arc, its midpoint is used; among several minimisers the smallest
/// angle wins.
inline double circular_median(const std::vector<double>& angles) {
  if (angles.empty()) throw NoWindData("circular median of empty set");
  auto cost = [&](double phi) {
    double s = 0.0;
    for (double a : angles) s += detail::arc_distance(phi, a);
    return s;
  };
  // The cost is piecewise linear with kinks at the angles and their antipodes.
  std::vector<double> br;
  for (double a : angles) {
    br.push_back(detail::wrap360(a));
    br.push_back(detail::wrap360(a + 180.0));
  }
  std::sort(br.begin(), br.end());
  br.erase(std::unique(br.begin(), br.end(),
                       [](double a, double b) { return std::fabs(a - b) < 1e-12; }),
           br.end());
  const std::size_t k = br.size();
  std::vector<double> f(k);
  double best = 1e300;
  for (std::size_t i = 0; i < k; ++i) best = std::min(best, f[i] = cost(br[i]));
  const double tol = 1e-9 * (1.0 + best);
  auto is_min = [&](std::size_t i) { return f[i] <= best + tol; };

  // flat[i]: the arc from br[i] to br[i+1] (cyclic) is entirely minimal.
  std::vector<bool> flat(k, false);
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t j = (i + 1) % k;
    if (k == 1 || !is_min(i) || !is_min(j)) continue;
    double len = detail::wrap360(br[j] - br[i]);
    if (len == 0.0) len = 360.0;
    flat[i] = cost(br[i] + 0.5 * len) <= best + tol;
  }
  if (std::all_of(flat.begin(), flat.end(), [](bool b) { return b; })) return 0.0;

  std::vector<double> candidates;
  for (std::size_t i = 0; i < k; ++i) {
    std::size_t prev = (i + k - 1) % k;
    if (!is_min(i) || flat[prev]) continue;  // not the start of a component
    double len = 0.0;
    std::size_t j = i;
    while (flat[j]) {
      std::size_t nxt = (j + 1) % k;
      len += detail::wrap360(br[nxt] - br[j]);
      j = nxt;
    }
    candidates.push_back(detail::wrap360(br[i] + 0.5 * len));
  }
  return *std::min_element(candidates.begin(), candidates.end());
}

/// Site wind per minute: median speed and circular-median direction over all
/// anemometer records in that minute. Minutes without any record are left
/// out and listed in `gaps`.
struct SiteWind {
  std::vector<WindRecord> records;
  std::vector<TimePoint> gaps;
};

inline SiteWind aggregate_wind(const std::map<std::string, std::vector<WindRecord>>& per_sensor) {
  std::map<TimePoint, std::pair<std::vector<double>, std::vector<double>>> by_minute;
  for (const auto& [id, recs] : per_sensor)
    for (const auto& r : recs) {
      auto t = std::chrono::floor<std::chrono::minutes>(r.timestamp);
      auto& slot = by_minute[TimePoint{t}];
      slot.first.push_back(r.speed);
      slot.second.push_back(r.direction);
    }
  if (by_minute.empty()) throw NoWindData("no anemometer records");
  SiteWind out;
  TimePoint expected = by_minute.begin()->first;
  for (const auto& [t, v] : by_minute) {
    for (; expected < t; expected += kMinute) out.gaps.push_back(expected);
    out.records.push_back({t, detail::median(v.first), circular_median(v.second)});
    expected = t + kMinute;
  }
  return out;
}

// --- concentration -----------------------------------------------------------

/// Bins raw records to a complete minute grid per sensor (mean within a
/// minute). Empty minutes are forward-filled and flagged as missing.
inline std::map<std::string, ConcentrationSeries> minute_series(
    const std::vector<ConcentrationRecord>& records) {
  std::map<std::string, std::map<TimePoint, std::pair<double, int>>> bins;
  for (const auto& r : records) {
    auto t = TimePoint{std::chrono::floor<std::chrono::minutes>(r.timestamp)};
    auto& b = bins[r.sensor_id][t];
    b.first += r.ppm;
    b.second += 1;
  }
  std::map<std::string, ConcentrationSeries> out;
  for (const auto& [id, minutes] : bins) {
    ConcentrationSeries s;
    s.sensor_id = id;
    s.start = minutes.begin()->first;
    TimePoint last = minutes.rbegin()->first;
    auto n = static_cast<std::size_t>((last - s.start) / kMinute) + 1;
    s.values.assign(n, 0.0);
    s.missing.assign(n, true);
    for (const auto& [t, b] : minutes) {
      auto k = static_cast<std::size_t>((t - s.start) / kMinute);
      s.values[k] = b.first / b.second;
      s.missing[k] = false;
    }
    for (std::size_t k = 1; k < n; ++k)
      if (s.missing[k]) s.values[k] = s.values[k - 1];
    out.emplace(id, std::move(s));
  }
  return out;
}

/// Mean of up to `flank` minutes on each side of [start, end], skipping any
/// minute inside another spike. Zero when no flank minute is available.
inline double local_background(std::span<const double> values,
                               const std::vector<SpikeInterval>& spikes, std::size_t which,
                               std::size_t flank) {
  std::vector<bool> in_spike(values.size(), false);
  for (const auto& s : spikes)
    for (std::size_t t = s.start; t <= s.end && t < values.size(); ++t) in_spike[t] = true;
  const auto& sp = spikes[which];
  double sum = 0.0;
  std::size_t count = 0;
  for (std::size_t d = 1; d <= flank && d <= sp.start; ++d)
    if (!in_spike[sp.start - d]) { sum += values[sp.start - d]; ++count; }
  for (std::size_t d = 1; d <= flank && sp.end + d < values.size(); ++d)
    if (!in_spike[sp.end + d]) { sum += values[sp.end + d]; ++count; }
  return count ? sum / static_cast<double>(count) : 0.0;
}

/// Gradient spike detector. A spike opens where the one-minute rise exceeds
/// the threshold and stays open while values remain more than one threshold
/// above the pre-rise level. Spikes separated by fewer than `merge_gap`
/// quiet minutes are merged.
inline std::vector<SpikeInterval> detect_spikes(std::span<const double> v,
                                                const SpikeParams& params = {}) {
  std::vector<SpikeInterval> raw;
  const double thr = params.grad_threshold;
  for (std::size_t i = 1; i < v.size();) {
    if (v[i] - v[i - 1] > thr) {
      double base = v[i - 1];
      std::size_t end = i;
      while (end + 1 < v.size() && v[end + 1] > base + thr) ++end;
      raw.push_back({i, end, 0.0});
      i = end + 1;
    } else {
      ++i;
    }
  }
  std::vector<SpikeInterval> merged;
  for (const auto& s : raw) {
    if (!merged.empty() && s.start - merged.back().end - 1 < params.merge_gap)
      merged.back().end = s.end;
    else
      merged.push_back(s);
  }
  for (std::size_t i = 0; i < merged.size(); ++i)
    merged[i].local_background = std::max(0.0, local_background(v, merged, i, params.flank));
  return merged;
}

/// Enhancement above the local background inside each spike, zero elsewhere.
inline std::vector<double> remove_background(std::span<const double> v,
                                             const std::vector<SpikeInterval>& spikes,
                                             std::size_t flank = 5) {
  std::vector<double> out(v.size(), 0.0);
  for (std::size_t i = 0; i < spikes.size(); ++i) {
    double bg = local_background(v, spikes, i, flank);
    for (std::size_t t = spikes[i].start; t <= spikes[i].end && t < v.size(); ++t)
      out[t] = std::max(0.0, v[t] - bg);
  }
  return out;
}

inline ConcentrationSeries remove_background(const ConcentrationSeries& s,
                                             const SpikeParams& params = {}) {
  ConcentrationSeries out = s;
  auto spikes = detect_spikes(s.values, params);
  out.values = remove_background(s.values, spikes, params.flank);
  return out;
}

// --- observation vector ------------------------------------------------------

struct Observation {
  Eigen::VectorXd y;
  Layout layout;
  std::vector<std::size_t> missing_per_sensor;
};

/// Concatenates each sensor's window (in `order`) into y. Minutes absent from
/// a series count as missing and contribute 0.
inline Observation assemble_observation(const std::map<std::string, ConcentrationSeries>& series,
                                        const std::vector<std::string>& order,
                                        const Interval& window,
                                        double max_missing_fraction = 0.1) {
  Observation obs;
  obs.layout = Layout{order, std::max(0L, window.minutes()), window.start};
  const auto l = static_cast<std::size_t>(obs.layout.minutes);
  obs.y = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(l * order.size()));
  for (std::size_t k = 0; k < order.size(); ++k) {
    auto it = series.find(order[k]);
    std::size_t missing = 0;
    for (std::size_t t = 0; t < l; ++t) {
      double value = 0.0;
      bool absent = true;
      if (it != series.end()) {
        const auto& s = it->second;
        auto offset = (window.start + static_cast<long>(t) * kMinute - s.start) / kMinute;
        if (offset >= 0 && static_cast<std::size_t>(offset) < s.values.size()) {
          auto idx = static_cast<std::size_t>(offset);
          value = s.values[idx];
          absent = !s.missing.empty() && s.missing[idx];
        }
      }
      if (absent) ++missing;
      obs.y(static_cast<Eigen::Index>(k * l + t)) = absent ? 0.0 : value;
    }
    obs.missing_per_sensor.push_back(missing);
    if (l > 0 && static_cast<double>(missing) > max_missing_fraction * static_cast<double>(l))
      throw IncompleteWindow("sensor " + order[k] + " missing " + std::to_string(missing) +
                             " of " + std::to_string(l) + " minutes in window starting " +
                             format_timestamp(window.start));
  }
  return obs;
}

}  // namespace mdlq
