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

 Shared vocabulary: time handling, error types and seed derivation.

*/
#pragma once

#include <chrono>
#include <cstdint>
#include <cstdio>
#include <random>
#include <stdexcept>
#include <string>
#include <string_view>

namespace mdlq {

using Seconds = std::chrono::seconds;
using TimePoint = std::chrono::sys_seconds;

inline constexpr Seconds kMinute{60};

/// Half-open interval [start, end).
struct Interval {
  TimePoint start;
  TimePoint end;

  Seconds length() const { return end - start; }
  long minutes() const { return static_cast<long>((end - start) / kMinute); }
  bool contains(TimePoint t) const { return t >= start && t < end; }
  bool operator==(const Interval&) const = default;
};

// --- errors ----------------------------------------------------------------

struct Error : std::runtime_error {
  using std::runtime_error::runtime_error;
};

struct MissingWind : Error { using Error::Error; };
struct NoWindData : Error { using Error::Error; };
struct IncompleteWindow : Error { using Error::Error; };
struct LayoutMismatch : Error { using Error::Error; };
struct EmptyDraws : Error { using Error::Error; };
struct NumericalUnderflow : Error { using Error::Error; };
struct NonEstimableSource : Error { using Error::Error; };
struct InsufficientHistory : Error { using Error::Error; };
struct ScheduleMismatch : Error { using Error::Error; };
struct ParseError : Error { using Error::Error; };

// --- time ------------------------------------------------------------------

/// Accepts "YYYY-MM-DDTHH:MM:SS" with optional trailing 'Z' (a space may
/// replace the 'T'). Timestamps are UTC.
inline TimePoint parse_timestamp(std::string_view text) {
  int y = 0, mo = 0, d = 0, h = 0, mi = 0, s = 0;
  char sep = 0;
  std::string buf(text);
  int got = std::sscanf(buf.c_str(), "%4d-%2d-%2d%c%2d:%2d:%2d", &y, &mo, &d,
                        &sep, &h, &mi, &s);
  if (got != 7 || (sep != 'T' && sep != ' '))
    throw ParseError("bad timestamp: '" + buf + "'");
  using namespace std::chrono;
  year_month_day ymd{year{y}, month{static_cast<unsigned>(mo)},
                     day{static_cast<unsigned>(d)}};
  if (!ymd.ok() || h > 23 || mi > 59 || s > 60)
    throw ParseError("bad timestamp: '" + buf + "'");
  return sys_days{ymd} + hours{h} + minutes{mi} + seconds{s};
}

inline std::string format_timestamp(TimePoint t) {
  using namespace std::chrono;
  auto day_point = floor<days>(t);
  year_month_day ymd{day_point};
  hh_mm_ss hms{t - day_point};
  char buf[64];
  std::snprintf(buf, sizeof buf, "%04d-%02u-%02uT%02ld:%02ld:%02ldZ",
                static_cast<int>(ymd.year()),
                static_cast<unsigned>(ymd.month()),
                static_cast<unsigned>(ymd.day()),
                static_cast<long>(hms.hours().count()),
                static_cast<long>(hms.minutes().count()),
                static_cast<long>(hms.seconds().count()));
  return buf;
}

inline bool minute_aligned(TimePoint t) {
  return t.time_since_epoch().count() % 60 == 0;
}

// --- seeding ---------------------------------------------------------------

using Rng = std::mt19937_64;

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ULL;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
  return x ^ (x >> 31);
}

/// Deterministic child seed for stream `key` under `master`.
inline std::uint64_t derive_seed(std::uint64_t master, std::uint64_t key) {
  return splitmix64(splitmix64(master) ^ splitmix64(key + 0x632BE59BD9B4E019ULL));
}

inline std::uint64_t fnv1a(std::string_view bytes,
                           std::uint64_t h = 0xcbf29ce484222325ULL) {
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

}  // namespace mdlq
