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

 Spike-and-slab emission model for one inversion window and its
 Metropolis-within-Gibbs sampler.

   y = X beta + eps,            eps ~ N(0, sigma2 R(r)),  R_ij = r^|i-j|
   beta_i | z_i = 0  = 0
   beta_i | z_i = 1  ~ Exp(scale tau2_i)
   z_i ~ Bernoulli(theta_i),    theta_i ~ Beta(a_i, b_i)
   tau2_i ~ InvGamma(c_i, d_i)
   sigma2 ~ InvGamma(nu/2, nu/2),   nu ~ InvGamma(alpha1, alpha2)
   r ~ Uniform(0, 1)

 Conditionals used by the sweep:

   (z_i, beta_i): beta_i is integrated out of the slab. With
     A = x_i'Q x_i, B = x_i'Q (y - X_{-i} beta_{-i}), Q = R^{-1},
     the slab kernel is N(mu, s^2) on [0, inf) with
     mu = (B - sigma2/tau2_i) / A,  s^2 = sigma2 / A, and
     log P(z=1)/P(z=0) = logit(theta_i) - log tau2_i + mu^2/(2 s^2)
                         + log sqrt(2 pi s^2) + log Phi(mu/s).
   theta_i | z_i        ~ Beta(a_i + z_i, b_i + 1 - z_i)
   tau2_i  | z_i, beta_i ~ InvGamma(c_i + z_i, d_i + z_i beta_i)
   sigma2  | rest       ~ InvGamma((nu + n)/2, (nu + e'Qe)/2)
   nu, r: random-walk Metropolis (nu on the log scale).

*/
#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <optional>
#include <string>
#include <vector>

#include "mdlq/core.hpp"
#include "mdlq/forward_model.hpp"
#include "mdlq/preprocess.hpp"
#include "mdlq/random.hpp"
#include "mdlq/whitening.hpp"

namespace mdlq {

/// Fixed hyperparameters. Per-source vectors of length 1 broadcast.
struct Hyperparams {
  std::vector<double> a{1.0}, b{1.0}, c{1.0}, d{1.0};
  double alpha1 = 1.0;
  double alpha2 = 1.0;

  static double pick(const std::vector<double>& v, std::size_t i) {
    return v.size() == 1 ? v[0] : v.at(i);
  }
  double a_of(std::size_t i) const { return pick(a, i); }
  double b_of(std::size_t i) const { return pick(b, i); }
  double c_of(std::size_t i) const { return pick(c, i); }
  double d_of(std::size_t i) const { return pick(d, i); }

  /// Restricts per-source vectors to the sources kept by `mask`.
  Hyperparams subset(const std::vector<bool>& mask) const {
    Hyperparams out = *this;
    auto sub = [&](const std::vector<double>& v) {
      if (v.size() == 1) return v;
      std::vector<double> r;
      for (std::size_t i = 0; i < mask.size(); ++i)
        if (mask[i]) r.push_back(v.at(i));
      return r;
    };
    out.a = sub(a);
    out.b = sub(b);
    out.c = sub(c);
    out.d = sub(d);
    return out;
  }
};

struct ModelState {
  Eigen::VectorXd beta;
  std::vector<std::uint8_t> z;
  Eigen::VectorXd theta;
  Eigen::VectorXd tau2;
  double sigma2 = 1.0;
  double nu = 5.0;
  double r = 0.1;

  std::size_t p() const { return z.size(); }
};

/// One inversion problem restricted to its viable sources.
struct WindowData {
  Eigen::VectorXd y;
  Eigen::MatrixXd x;
  Layout layout;
  std::vector<bool> viable_mask;  // over all site sources
  std::vector<std::string> source_ids;  // viable sources, column order

  std::size_t l() const { return static_cast<std::size_t>(layout.minutes); }
  std::size_t m() const { return layout.sensor_ids.size(); }
  std::size_t n() const { return static_cast<std::size_t>(y.size()); }
  std::size_t p() const { return static_cast<std::size_t>(x.cols()); }
};

/// Pairs an observation with a design matrix after checking that both use
/// the same row layout, then keeps only the columns selected by `mask`.
inline WindowData make_window_data(const Observation& obs, const DesignMatrix& dm,
                                   const std::vector<bool>& mask) {
  if (obs.layout.hash() != dm.layout.hash())
    throw LayoutMismatch("observation and design matrix row layouts differ");
  if (mask.size() != static_cast<std::size_t>(dm.values.cols()))
    throw std::invalid_argument("viability mask size differs from source count");
  WindowData w;
  w.y = obs.y;
  w.layout = obs.layout;
  w.viable_mask = mask;
  std::size_t keep = static_cast<std::size_t>(std::count(mask.begin(), mask.end(), true));
  w.x.resize(dm.values.rows(), static_cast<Eigen::Index>(keep));
  Eigen::Index col = 0;
  for (std::size_t i = 0; i < mask.size(); ++i)
    if (mask[i]) {
      w.x.col(col++) = dm.values.col(static_cast<Eigen::Index>(i));
      w.source_ids.push_back(dm.source_ids[i]);
    }
  return w;
}

inline WindowData make_window_data(const Observation& obs, const DesignMatrix& dm) {
  return make_window_data(obs, dm, std::vector<bool>(static_cast<std::size_t>(dm.values.cols()), true));
}

struct SamplerConfig {
  long iterations = 5000;
  long burn_in = 1000;
  long thin = 1;
  std::uint64_t seed = 1;
  double prop_sd_nu = 0.5;  // on log nu
  double prop_sd_r = 0.05;
  ArStructure ar_structure = ArStructure::BlockPerSensor;

  // Clamps for oracle checks and ablations; unset means sampled.
  std::optional<double> fixed_sigma2;
  std::optional<double> fixed_nu;
  std::optional<double> fixed_r;
  std::optional<double> fixed_tau2;
  bool force_inclusion = false;

  /// RNG stream key per column. Empty means the column index. Supplying the
  /// same keys in permuted order makes runs on permuted columns identical.
  std::vector<std::uint64_t> source_stream_keys;

  void validate() const {
    if (iterations <= 0 || burn_in < 0 || burn_in >= iterations)
      throw std::invalid_argument("sampler: need 0 <= burn_in < iterations");
    if (thin < 1) throw std::invalid_argument("sampler: thin must be >= 1");
    if (!(prop_sd_nu > 0.0) || !(prop_sd_r > 0.0))
      throw std::invalid_argument("sampler: proposal sds must be positive");
  }
};

struct PosteriorDraws {
  std::vector<ModelState> draws;
  double accept_nu = 0.0;
  double accept_r = 0.0;
  SamplerConfig config;
  std::vector<std::string> source_ids;
  std::vector<bool> viable_mask;
  std::string window_id;

  std::size_t p() const { return source_ids.size(); }
};

// --- conditionals ------------------------------------------------------------

struct BetaZConditional {
  double log_odds = 0.0;        // log P(z=1 | .) - log P(z=0 | .)
  double inclusion_prob = 0.0;
  double mean = 0.0;            // untruncated slab kernel mean
  double sd = 0.0;
  bool uninformative = false;   // column carries no data; slab is the prior
};

inline double logistic(double x) {
  return x >= 0 ? 1.0 / (1.0 + std::exp(-x)) : std::exp(x) / (1.0 + std::exp(x));
}

/// Conditional of (z_i, beta_i) given everything else. `g` = X'QX and
/// `h` = X'Qy at the current r.
inline BetaZConditional beta_z_conditional(std::size_t i, const ModelState& s,
                                           const Eigen::MatrixXd& g, const Eigen::VectorXd& h) {
  const auto ii = static_cast<Eigen::Index>(i);
  BetaZConditional out;
  const double theta = s.theta(ii);
  const double prior_logit = std::log(theta) - std::log1p(-theta);
  const double a = g(ii, ii);
  if (!(a > 0.0)) {
    out.uninformative = true;
    out.log_odds = prior_logit;
    out.inclusion_prob = theta;
    return out;
  }
  double b = h(ii) - g.row(ii).dot(s.beta) + a * s.beta(ii);
  out.mean = (b - s.sigma2 / s.tau2(ii)) / a;
  out.sd = std::sqrt(s.sigma2 / a);
  double zscore = out.mean / out.sd;
  out.log_odds = prior_logit - std::log(s.tau2(ii)) + 0.5 * zscore * zscore +
                 std::log(out.sd) + kLogSqrt2Pi + log_normal_cdf(zscore);
  if (!std::isfinite(out.log_odds))
    throw NumericalUnderflow("non-finite inclusion log-odds for source " + std::to_string(i));
  out.inclusion_prob = logistic(out.log_odds);
  return out;
}

struct BetaParams { double a, b; };
struct InvGammaParams { double shape, scale; };

inline BetaParams theta_conditional(std::size_t i, std::uint8_t z, const Hyperparams& hp) {
  return {hp.a_of(i) + z, hp.b_of(i) + 1.0 - z};
}

inline InvGammaParams tau2_conditional(std::size_t i, std::uint8_t z, double beta,
                                       const Hyperparams& hp) {
  return {hp.c_of(i) + z, hp.d_of(i) + z * beta};
}

/// `quad` is e'R^{-1}e for the current residual.
inline InvGammaParams sigma2_conditional(double nu, std::size_t n, double quad) {
  return {0.5 * (nu + static_cast<double>(n)), 0.5 * (nu + quad)};
}

/// log p(nu | sigma2) up to a constant.
inline double nu_log_target(double nu, double sigma2, const Hyperparams& hp) {
  if (!(nu > 0.0)) return -std::numeric_limits<double>::infinity();
  return log_inv_gamma_pdf(sigma2, 0.5 * nu, 0.5 * nu) +
         log_inv_gamma_pdf(nu, hp.alpha1, hp.alpha2);
}

/// log p(r | rest) up to a constant; -inf outside [0, 1).
inline double r_log_target(double r, const Ar1Gram::Residual& res, double sigma2,
                           const Ar1Gram& gram) {
  if (!(r >= 0.0) || !(r < 1.0)) return -std::numeric_limits<double>::infinity();
  return -0.5 * gram.log_det(r) - 0.5 * res.quadratic(r) / sigma2;
}

// --- single-parameter updates -------------------------------------------------

inline void update_beta_z(std::size_t i, ModelState& s, const Eigen::MatrixXd& g,
                          const Eigen::VectorXd& h, bool force_inclusion, Rng& rng) {
  const auto ii = static_cast<Eigen::Index>(i);
  BetaZConditional c = beta_z_conditional(i, s, g, h);
  bool on = force_inclusion || uniform01(rng) < c.inclusion_prob;
  if (!on) {
    s.z[i] = 0;
    s.beta(ii) = 0.0;
    return;
  }
  s.z[i] = 1;
  double draw = c.uninformative
                    ? -s.tau2(ii) * std::log(1.0 - uniform01(rng))
                    : truncated_normal_positive(c.mean, c.sd, rng);
  s.beta(ii) = std::max(draw, std::numeric_limits<double>::denorm_min());
}

inline double update_theta(std::size_t i, std::uint8_t z, const Hyperparams& hp, Rng& rng) {
  auto [a, b] = theta_conditional(i, z, hp);
  // Keep theta strictly inside (0, 1) so its logit stays finite.
  constexpr double eps = 1e-300;
  return std::clamp(beta_draw(a, b, rng), eps, 1.0 - 1e-16);
}

inline double update_tau2(std::size_t i, std::uint8_t z, double beta, const Hyperparams& hp,
                          Rng& rng) {
  auto [shape, scale] = tau2_conditional(i, z, beta, hp);
  return inv_gamma_draw(shape, scale, rng);
}

inline double update_sigma2(double nu, std::size_t n, double quad, Rng& rng) {
  auto [shape, scale] = sigma2_conditional(nu, n, quad);
  return inv_gamma_draw(shape, scale, rng);
}

/// Random walk on log nu; the Jacobian term is the trailing log nu.
inline bool mh_update_nu(ModelState& s, const Hyperparams& hp, double prop_sd, Rng& rng) {
  double eta = std::log(s.nu);
  double cand = eta + prop_sd * std_normal(rng);
  double nu_new = std::exp(cand);
  double log_ratio = (nu_log_target(nu_new, s.sigma2, hp) + cand) -
                     (nu_log_target(s.nu, s.sigma2, hp) + eta);
  if (std::log(uniform01(rng)) < log_ratio) {
    s.nu = nu_new;
    return true;
  }
  return false;
}

inline bool mh_update_r(ModelState& s, const Ar1Gram::Residual& res, const Ar1Gram& gram,
                        double prop_sd, Rng& rng) {
  double cand = s.r + prop_sd * std_normal(rng);
  double u = uniform01(rng);
  if (!(cand >= 0.0) || !(cand < 1.0)) return false;
  double log_ratio = r_log_target(cand, res, s.sigma2, gram) - r_log_target(s.r, res, s.sigma2, gram);
  if (std::log(u) < log_ratio) {
    s.r = cand;
    return true;
  }
  return false;
}

// --- sampler -----------------------------------------------------------------

inline ModelState initial_state(const WindowData& w, const Hyperparams& hp, const SamplerConfig& cfg) {
  const std::size_t p = w.p();
  ModelState s;
  s.beta = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(p));
  s.z.assign(p, 0);
  s.theta.resize(static_cast<Eigen::Index>(p));
  s.tau2.resize(static_cast<Eigen::Index>(p));
  for (std::size_t i = 0; i < p; ++i) {
    const auto ii = static_cast<Eigen::Index>(i);
    s.theta(ii) = hp.a_of(i) / (hp.a_of(i) + hp.b_of(i));
    s.tau2(ii) = cfg.fixed_tau2.value_or(hp.d_of(i) / (hp.c_of(i) + 1.0));
  }
  double var = 0.0;
  if (w.n() > 1) {
    double mean = w.y.mean();
    var = (w.y.array() - mean).square().sum() / static_cast<double>(w.n() - 1);
  }
  s.sigma2 = cfg.fixed_sigma2.value_or(std::max(var, 1e-6));
  s.nu = cfg.fixed_nu.value_or(5.0);
  s.r = cfg.fixed_r.value_or(0.1);
  return s;
}

inline PosteriorDraws run_gibbs(const WindowData& w, const Hyperparams& hp, const SamplerConfig& cfg) {
  cfg.validate();
  const std::size_t p = w.p();
  const std::size_t n = w.n();
  if (n == 0) throw std::invalid_argument("run_gibbs: empty window");
  if (!cfg.source_stream_keys.empty() && cfg.source_stream_keys.size() != p)
    throw std::invalid_argument("run_gibbs: one stream key per column required");

  const std::size_t block = ar_block_length(cfg.ar_structure, w.l() > 0 ? w.l() : n, n);
  const Ar1Gram gram(w.x, w.y, block);

  Rng global(derive_seed(cfg.seed, 0xA5A5A5A5A5A5A5A5ULL));
  std::vector<Rng> source_rng;
  source_rng.reserve(p);
  for (std::size_t i = 0; i < p; ++i) {
    std::uint64_t key = cfg.source_stream_keys.empty() ? i : cfg.source_stream_keys[i];
    source_rng.emplace_back(derive_seed(cfg.seed, key));
  }

  ModelState s = initial_state(w, hp, cfg);
  PosteriorDraws out;
  out.config = cfg;
  out.source_ids = w.source_ids;
  out.viable_mask = w.viable_mask;
  out.draws.reserve(static_cast<std::size_t>((cfg.iterations - cfg.burn_in) / cfg.thin + 1));

  long acc_nu = 0, acc_r = 0;
  Eigen::MatrixXd comb = gram.combined(s.r);
  for (long it = 0; it < cfg.iterations; ++it) {
    const Eigen::Index pp = static_cast<Eigen::Index>(p);
    Eigen::MatrixXd g = comb.topLeftCorner(pp, pp);
    Eigen::VectorXd h = comb.col(pp).head(pp);

    for (std::size_t i = 0; i < p; ++i) {
      const auto ii = static_cast<Eigen::Index>(i);
      update_beta_z(i, s, g, h, cfg.force_inclusion, source_rng[i]);
      s.theta(ii) = update_theta(i, s.z[i], hp, source_rng[i]);
      s.tau2(ii) = cfg.fixed_tau2 ? *cfg.fixed_tau2
                                  : update_tau2(i, s.z[i], s.beta(ii), hp, source_rng[i]);
    }

    Ar1Gram::Residual res = gram.residual(s.beta);
    if (!cfg.fixed_sigma2) s.sigma2 = update_sigma2(s.nu, n, res.quadratic(s.r), global);
    if (!cfg.fixed_nu && mh_update_nu(s, hp, cfg.prop_sd_nu, global)) ++acc_nu;
    if (!cfg.fixed_r && mh_update_r(s, res, gram, cfg.prop_sd_r, global)) {
      ++acc_r;
      comb = gram.combined(s.r);
    }

    if (it >= cfg.burn_in && (it - cfg.burn_in) % cfg.thin == 0) out.draws.push_back(s);
  }
  out.accept_nu = static_cast<double>(acc_nu) / static_cast<double>(cfg.iterations);
  out.accept_r = static_cast<double>(acc_r) / static_cast<double>(cfg.iterations);
  return out;
}

// --- summaries -----------------------------------------------------------------

inline constexpr double kKgPerHourPerGramPerSecond = 3.6;

/// Linear-interpolation quantile (R type 7) of unsorted data.
inline double quantile(std::vector<double> v, double prob) {
  if (v.empty()) throw EmptyDraws("quantile of empty sample");
  std::sort(v.begin(), v.end());
  double pos = prob * static_cast<double>(v.size() - 1);
  auto lo = static_cast<std::size_t>(std::floor(pos));
  std::size_t hi = std::min(lo + 1, v.size() - 1);
  double frac = pos - static_cast<double>(lo);
  return v[lo] + frac * (v[hi] - v[lo]);
}

struct PointEstimate {
  std::vector<double> rate_kghr;  // per column
  std::vector<double> z_mean;
};

/// Posterior means, with rates converted from model units (multiples of the
/// simulation rate q, in g/s) to kg/hr.
inline PointEstimate point_estimate(const PosteriorDraws& d, double q = 1.0) {
  if (d.draws.empty()) throw EmptyDraws("no retained draws");
  const std::size_t p = d.draws.front().p();
  PointEstimate pe{std::vector<double>(p, 0.0), std::vector<double>(p, 0.0)};
  for (const auto& s : d.draws)
    for (std::size_t i = 0; i < p; ++i) {
      pe.rate_kghr[i] += s.beta(static_cast<Eigen::Index>(i));
      pe.z_mean[i] += s.z[i];
    }
  const double count = static_cast<double>(d.draws.size());
  for (std::size_t i = 0; i < p; ++i) {
    pe.rate_kghr[i] = pe.rate_kghr[i] / count * q * kKgPerHourPerGramPerSecond;
    pe.z_mean[i] /= count;
  }
  return pe;
}

/// Rate draws for column i in kg/hr.
inline std::vector<double> rate_draws_kghr(const PosteriorDraws& d, std::size_t i, double q = 1.0) {
  std::vector<double> v;
  v.reserve(d.draws.size());
  for (const auto& s : d.draws)
    v.push_back(s.beta(static_cast<Eigen::Index>(i)) * q * kKgPerHourPerGramPerSecond);
  return v;
}

}  // namespace mdlq
