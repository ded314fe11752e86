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

 Scalar distributions used by the sampler.

*/
#pragma once

#include <cmath>
#include <limits>
#include <numbers>
#include <random>

#include "mdlq/core.hpp"

namespace mdlq {

inline constexpr double kLogSqrt2Pi = 0.91893853320467274178;

/// log of the standard normal CDF, accurate far into the lower tail.
inline double log_normal_cdf(double x) {
  if (x > 5.0) return std::log1p(-0.5 * std::erfc(x / std::numbers::sqrt2));
  if (x > -30.0) return std::log(0.5 * std::erfc(-x / std::numbers::sqrt2));
  // Asymptotic (Mills ratio) expansion; relative truncation error below 2e-12 here.
  double x2 = x * x;
  double inv = 1.0 / x2;
  double series = 1.0 - inv * (1.0 - 3.0 * inv * (1.0 - 5.0 * inv * (1.0 - 7.0 * inv)));
  return -0.5 * x2 - std::log(-x) - kLogSqrt2Pi + std::log(series);
}

inline double uniform01(Rng& rng) {
  return std::uniform_real_distribution<double>(0.0, 1.0)(rng);
}

inline double std_normal(Rng& rng) { return std::normal_distribution<double>(0.0, 1.0)(rng); }

/// Standard normal conditioned on Z >= a.
inline double std_normal_above(double a, Rng& rng) {
  if (a <= 0.45) {
    for (;;) {
      double z = std_normal(rng);
      if (z >= a) return z;
    }
  }
  // Exponential proposal with the optimal rate (Robert, 1995).
  double alpha = 0.5 * (a + std::sqrt(a * a + 4.0));
  for (;;) {
    double z = a - std::log(1.0 - uniform01(rng)) / alpha;
    double d = z - alpha;
    if (uniform01(rng) <= std::exp(-0.5 * d * d)) return z;
  }
}

/// Normal(mean, sd^2) truncated to [0, inf).
inline double truncated_normal_positive(double mean, double sd, Rng& rng) {
  return mean + sd * std_normal_above(-mean / sd, rng);
}

inline double gamma_draw(double shape, double rate, Rng& rng) {
  return std::gamma_distribution<double>(shape, 1.0 / rate)(rng);
}

/// Inverse-gamma with density proportional to x^{-shape-1} exp(-scale/x).
inline double inv_gamma_draw(double shape, double scale, Rng& rng) {
  return 1.0 / gamma_draw(shape, scale, rng);
}

inline double beta_draw(double a, double b, Rng& rng) {
  double x = gamma_draw(a, 1.0, rng);
  double y = gamma_draw(b, 1.0, rng);
  return x / (x + y);
}

inline double log_inv_gamma_pdf(double x, double shape, double scale) {
  return shape * std::log(scale) - std::lgamma(shape) - (shape + 1.0) * std::log(x) - scale / x;
}

inline double log_beta_pdf(double x, double a, double b) {
  return std::lgamma(a + b) - std::lgamma(a) - std::lgamma(b) + (a - 1.0) * std::log(x) +
         (b - 1.0) * std::log1p(-x);
}

}  // namespace mdlq
