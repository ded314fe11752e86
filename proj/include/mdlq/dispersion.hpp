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

 Pasquill stability classification and Pasquill-Gifford-Turner dispersion
 lengths.

 The coefficients are the ISC3 rural tables (EPA-454/B-95-003b, Vol. II,
 Tables 1-1 and 1-2):

   sigma_y = 465.11628 * x * tan(TH),  TH = 0.017453293 * (c - d ln x)
   sigma_z = a * x^b                   (piecewise in x, capped at 5000 m)

 with x the downwind distance in km and sigma in m. Below 1 m of travel the
 logarithmic sigma_y form is replaced by its linear continuation through the
 origin, where the tangent would otherwise blow up.

 The floor is combined in quadrature, sqrt(floor^2 + sigma^2), so the result
 equals the floor at zero distance and stays strictly increasing afterwards.

*/
#pragma once

#include <array>
#include <chrono>
#include <cmath>
#include <optional>
#include <string>

#include "mdlq/core.hpp"

namespace mdlq {

enum class StabilityClass { A = 0, B, C, D, E, F };

inline constexpr std::array kAllStabilityClasses{
    StabilityClass::A, StabilityClass::B, StabilityClass::C,
    StabilityClass::D, StabilityClass::E, StabilityClass::F};

inline char to_char(StabilityClass c) {
  return static_cast<char>('A' + static_cast<int>(c));
}

inline StabilityClass stability_from_char(char c) {
  if (c >= 'a' && c <= 'f') c = static_cast<char>(c - 'a' + 'A');
  if (c < 'A' || c > 'F')
    throw ParseError(std::string("unknown stability class '") + c + "'");
  return static_cast<StabilityClass>(c - 'A');
}

enum class Insolation { Strong, Moderate, Slight };
enum class NightCloud { Clear, Overcast };  // <= 3/8 vs >= 4/8 low cloud

/// Inputs to the Pasquill lookup beyond wind speed.
struct StabilityPolicy {
  double utc_offset_hours = 0.0;  // local = UTC + offset
  int day_start_hour = 7;         // local hour, inclusive
  int day_end_hour = 19;          // local hour, exclusive
  Insolation insolation = Insolation::Moderate;
  NightCloud night_cloud = NightCloud::Clear;
  std::optional<StabilityClass> fixed_class;
};

inline bool is_daytime(TimePoint t, const StabilityPolicy& policy) {
  using namespace std::chrono;
  auto local = t + seconds{static_cast<long>(std::lround(policy.utc_offset_hours * 3600.0))};
  auto since_midnight = local - floor<days>(local);
  int hour = static_cast<int>(duration_cast<hours>(since_midnight).count());
  return hour >= policy.day_start_hour && hour < policy.day_end_hour;
}

/// Pasquill wind-speed x insolation table. Split classes (A-B, B-C, C-D)
/// resolve to the more unstable member.
inline StabilityClass classify_stability(double wind_speed, TimePoint t,
                                         const StabilityPolicy& policy = {}) {
  using S = StabilityClass;
  if (policy.fixed_class) return *policy.fixed_class;

  int band = wind_speed < 2.0 ? 0 : wind_speed < 3.0 ? 1 : wind_speed < 5.0 ? 2
           : wind_speed < 6.0 ? 3 : 4;
  if (is_daytime(t, policy)) {
    static constexpr S day[5][3] = {
        {S::A, S::A, S::B},
        {S::A, S::B, S::C},
        {S::B, S::B, S::C},
        {S::C, S::C, S::D},
        {S::C, S::D, S::D},
    };
    return day[band][static_cast<int>(policy.insolation)];
  }
  static constexpr S night[5][2] = {
      // clear, overcast
      {S::F, S::E},
      {S::F, S::E},
      {S::E, S::D},
      {S::D, S::D},
      {S::D, S::D},
  };
  return night[band][static_cast<int>(policy.night_cloud)];
}

namespace detail {

struct PowerSegment {
  double upper_km;  // segment applies for x <= upper_km
  double a;
  double b;
};

inline constexpr double kInf = 1e300;

inline constexpr std::array<PowerSegment, 9> kSigmaZA{{
    {0.10, 122.800, 0.94470}, {0.15, 158.080, 1.05420},
    {0.20, 170.220, 1.09320}, {0.25, 179.520, 1.12620},
    {0.30, 217.410, 1.26440}, {0.40, 258.890, 1.40940},
    {0.50, 346.750, 1.72830}, {3.11, 453.850, 2.11660},
    {kInf, 453.850, 2.11660},  // capped below
}};
inline constexpr std::array<PowerSegment, 3> kSigmaZB{{
    {0.20, 90.673, 0.93198}, {0.40, 98.483, 0.98332}, {kInf, 109.300, 1.09710}}};
inline constexpr std::array<PowerSegment, 1> kSigmaZC{{{kInf, 61.141, 0.91465}}};
inline constexpr std::array<PowerSegment, 6> kSigmaZD{{
    {0.30, 34.459, 0.86974}, {1.00, 32.093, 0.81066}, {3.00, 32.093, 0.64403},
    {10.0, 33.504, 0.60486}, {30.0, 36.650, 0.56589}, {kInf, 44.053, 0.51179}}};
inline constexpr std::array<PowerSegment, 9> kSigmaZE{{
    {0.10, 24.260, 0.83660}, {0.30, 23.331, 0.81956}, {1.00, 21.628, 0.75660},
    {2.00, 21.628, 0.63077}, {4.00, 22.534, 0.57154}, {10.0, 24.703, 0.50527},
    {20.0, 26.970, 0.46713}, {40.0, 35.420, 0.37615}, {kInf, 47.618, 0.29592}}};
inline constexpr std::array<PowerSegment, 10> kSigmaZF{{
    {0.20, 15.209, 0.81558}, {0.70, 14.457, 0.78407}, {1.00, 13.953, 0.68465},
    {2.00, 13.953, 0.63227}, {3.00, 14.823, 0.54503}, {7.00, 16.187, 0.46490},
    {15.0, 17.836, 0.41507}, {30.0, 22.651, 0.32681}, {60.0, 27.074, 0.27436},
    {kInf, 34.219, 0.21716}}};

// sigma_y coefficients (c, d), degrees.
inline constexpr double kSigmaYC[6] = {24.1670, 18.3330, 12.5000, 8.3330, 6.2500, 4.1667};
inline constexpr double kSigmaYD[6] = {2.5334, 1.8096, 1.0857, 0.72382, 0.54287, 0.36191};

inline constexpr double kLinearBelowKm = 1e-3;
inline constexpr double kSigmaZCap = 5000.0;

template <std::size_t N>
double eval_power(const std::array<PowerSegment, N>& table, double x_km) {
  for (const auto& seg : table)
    if (x_km <= seg.upper_km) return seg.a * std::pow(x_km, seg.b);
  return table.back().a * std::pow(x_km, table.back().b);
}

inline double sigma_y_log_form(StabilityClass c, double x_km) {
  int k = static_cast<int>(c);
  double th = 0.017453293 * (kSigmaYC[k] - kSigmaYD[k] * std::log(x_km));
  return 465.11628 * x_km * std::tan(th);
}

}  // namespace detail

/// Unfloored sigma_y (m) at `traveled` metres.
inline double raw_sigma_y(StabilityClass c, double traveled) {
  double x_km = traveled / 1000.0;
  if (x_km <= 0.0) return 0.0;
  if (x_km < detail::kLinearBelowKm)
    return detail::sigma_y_log_form(c, detail::kLinearBelowKm) * (x_km / detail::kLinearBelowKm);
  return detail::sigma_y_log_form(c, x_km);
}

/// Unfloored sigma_z (m) at `traveled` metres.
inline double raw_sigma_z(StabilityClass c, double traveled) {
  double x_km = traveled / 1000.0;
  if (x_km <= 0.0) return 0.0;
  double s = 0.0;
  switch (c) {
    case StabilityClass::A: s = detail::eval_power(detail::kSigmaZA, x_km); break;
    case StabilityClass::B: s = detail::eval_power(detail::kSigmaZB, x_km); break;
    case StabilityClass::C: s = detail::eval_power(detail::kSigmaZC, x_km); break;
    case StabilityClass::D: s = detail::eval_power(detail::kSigmaZD, x_km); break;
    case StabilityClass::E: s = detail::eval_power(detail::kSigmaZE, x_km); break;
    case StabilityClass::F: s = detail::eval_power(detail::kSigmaZF, x_km); break;
  }
  return std::min(s, detail::kSigmaZCap);
}

struct Dispersion {
  double sigma_y;
  double sigma_z;
};

inline Dispersion dispersion(StabilityClass c, double traveled, double sigma_floor) {
  double sy = raw_sigma_y(c, traveled);
  double sz = raw_sigma_z(c, traveled);
  double f2 = sigma_floor * sigma_floor;
  return {std::sqrt(f2 + sy * sy), std::sqrt(f2 + sz * sz)};
}

}  // namespace mdlq
