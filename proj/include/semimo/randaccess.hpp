// SPDX-License-Identifier: Apache-2.0
//
// Grant-free random access: QPSK preamble books, Bernoulli activity,
// received-block synthesis, covariance features, and the classical
// detectors (simultaneous OMP, MMV-AMP with a Bernoulli-Gaussian row
// denoiser) together with the per-user error-probability metric.

#ifndef SEMIMO_RANDACCESS_HPP
#define SEMIMO_RANDACCESS_HPP

#include <algorithm>
#include <cmath>
#include <optional>
#include <set>
#include <vector>

#include "semimo/chansim.hpp"
#include "semimo/common.hpp"
#include "semimo/random.hpp"

namespace semimo::ra {

struct PreambleBook {
  CMat p;  // K x L_max, unit-modulus QPSK entries, unique rows
  int l_max() const { return static_cast<int>(p.cols()); }
  int n_users() const { return static_cast<int>(p.rows()); }
};

using ActivityPattern = std::vector<int>;  // entries in {0,1}

inline PreambleBook generate_qpsk_preambles(int k_users, int l_max, RandomSource& rng) {
  require(k_users >= 1 && l_max >= 1, "generate_qpsk_preambles: dimensions must be positive");
  static const cplx kQpsk[4] = {cplx(M_SQRT1_2, M_SQRT1_2), cplx(M_SQRT1_2, -M_SQRT1_2),
                                cplx(-M_SQRT1_2, M_SQRT1_2), cplx(-M_SQRT1_2, -M_SQRT1_2)};
  CMat p(k_users, l_max);
  auto draw_row = [&](int k) {
    for (int l = 0; l < l_max; ++l) p(k, l) = kQpsk[rng.next_u64() & 3];
  };
  auto row_equal = [&](int a, int b) {
    for (int l = 0; l < l_max; ++l)
      if (p(a, l) != p(b, l)) return false;
    return true;
  };
  for (int k = 0; k < k_users; ++k) {
    draw_row(k);
    bool dup = true;
    while (dup) {  // measure-zero event for realistic L_max; regenerate defensively
      dup = false;
      for (int j = 0; j < k; ++j)
        if (row_equal(j, k)) {
          dup = true;
          draw_row(k);
          break;
        }
    }
  }
  return {std::move(p)};
}

inline ActivityPattern draw_activity(int k_users, double p_active, RandomSource& rng) {
  require(k_users >= 1, "draw_activity: K must be positive");
  require(p_active >= 0.0 && p_active <= 1.0, "draw_activity: p_active must be in [0,1]");
  ActivityPattern lam(k_users);
  for (int k = 0; k < k_users; ++k) lam[k] = rng.bernoulli(p_active) ? 1 : 0;
  return lam;
}

/// Received block y = P_L^T diag(lambda) H + N, shape L x M.
/// Noise variance per entry is 10^(-snr/10): the SNR is referenced to the
/// mean received power of a single active user, E|p|^2 E|h|^2 = 1.
inline CMat synthesize_received(const PreambleBook& book, const ActivityPattern& act,
                                const chansim::UplinkChannelSet& ch, int l_active, double snr_db,
                                RandomSource& rng) {
  const int k_users = book.n_users();
  require(static_cast<int>(act.size()) == k_users, "synthesize_received: activity length mismatch");
  require(ch.gains.rows() == k_users, "synthesize_received: channel rows must equal K");
  require(l_active >= 1 && l_active <= book.l_max(),
          "synthesize_received: L must be in [1, L_max]");
  const int m = static_cast<int>(ch.gains.cols());
  CMat y = CMat::Zero(l_active, m);
  for (int k = 0; k < k_users; ++k) {
    if (!act[k]) continue;
    y.noalias() += book.p.row(k).head(l_active).transpose() * ch.gains.row(k);
  }
  const double sigma = std::sqrt(db_to_linear(-snr_db));
  for (int j = 0; j < m; ++j)
    for (int i = 0; i < l_active; ++i) y(i, j) += sigma * rng.cgauss();
  return y;
}

inline CMat zero_pad(const CMat& y, int l_max) {
  require(y.rows() <= l_max, "zero_pad: L must be <= L_max");
  CMat out = CMat::Zero(l_max, y.cols());
  out.topRows(y.rows()) = y;
  return out;
}

/// Autocorrelation feature c = y_p y_p^H / M, Hermitian PSD, L_max x L_max.
inline CMat covariance(const CMat& y_p) {
  require(y_p.cols() > 0, "covariance: need at least one antenna column");
  return (y_p * y_p.adjoint()) / static_cast<double>(y_p.cols());
}

struct StopRule {
  std::optional<int> max_support;
  std::optional<double> residual_ratio;  // stop when ||R||^2 <= ratio * ||Y||^2

  /// Default per-trial rule: support cap 2 p K, residual floor at the noise level.
  static StopRule defaults(int k_users, double p_active, double snr_db) {
    StopRule r;
    r.max_support = std::max(1, static_cast<int>(std::ceil(2.0 * p_active * k_users)));
    r.residual_ratio = db_to_linear(-snr_db);
    return r;
  }
};

/// Simultaneous OMP over the MMV model Y = P_L^T X + N: greedy correlation
/// select, least-squares refit across all antennas, residual update.
inline ActivityPattern omp_detect(const CMat& y, const PreambleBook& book, const StopRule& stop) {
  require(y.rows() >= 1, "omp_detect: L must be >= 1");
  require(stop.max_support.has_value() || stop.residual_ratio.has_value(),
          "omp_detect: stop rule needs at least one bound");
  const int l = static_cast<int>(y.rows());
  const int k_users = book.n_users();
  require(l <= book.l_max(), "omp_detect: L exceeds book L_max");

  CMat a(l, k_users);
  for (int k = 0; k < k_users; ++k) a.col(k) = book.p.row(k).head(l).transpose();

  const double y_energy = y.squaredNorm();
  const int hard_cap = std::min(k_users, l);
  CMat resid = y;
  std::vector<int> selected;
  std::vector<bool> in_support(k_users, false);

  while (true) {
    if (stop.residual_ratio && resid.squaredNorm() <= *stop.residual_ratio * y_energy) break;
    if (stop.max_support && static_cast<int>(selected.size()) >= *stop.max_support) break;
    if (static_cast<int>(selected.size()) >= hard_cap) break;

    int best = -1;
    double best_score = -1.0;
    for (int k = 0; k < k_users; ++k) {
      if (in_support[k]) continue;
      double score = (a.col(k).adjoint() * resid).norm();
      if (score > best_score) {
        best_score = score;
        best = k;
      }
    }
    if (best < 0) break;
    selected.push_back(best);
    in_support[best] = true;

    CMat a_s(l, selected.size());
    for (std::size_t i = 0; i < selected.size(); ++i) a_s.col(i) = a.col(selected[i]);
    CMat x_s = a_s.colPivHouseholderQr().solve(y);
    resid = y - a_s * x_s;
  }

  ActivityPattern est(k_users, 0);
  for (int k : selected) est[k] = 1;
  return est;
}

struct AmpResult {
  ActivityPattern activity;
  std::vector<double> scores;  // posterior activity probabilities in [0,1]
};

/// MMV-AMP with Onsager correction and an analytic Bernoulli-Gaussian MMSE
/// row denoiser. Columns of the sliced book are normalized to unit norm
/// internally; the per-iteration noise level tau^2 is estimated from the
/// residual energy (floored at the known noise variance).
inline AmpResult amp_detect(const CMat& y, const PreambleBook& book, int n_iter, double p_active,
                            double noise_var) {
  require(n_iter >= 1, "amp_detect: need at least one iteration");
  require(p_active > 0.0 && p_active < 1.0, "amp_detect: p_active must be in (0,1)");
  const int l = static_cast<int>(y.rows());
  const int m = static_cast<int>(y.cols());
  const int k_users = book.n_users();
  require(l >= 1 && l <= book.l_max(), "amp_detect: invalid L");

  CMat a(l, k_users);
  for (int k = 0; k < k_users; ++k)
    a.col(k) = book.p.row(k).head(l).transpose() / std::sqrt(static_cast<double>(l));
  const double gamma = static_cast<double>(l);  // active-row per-entry variance after scaling

  CMat x = CMat::Zero(k_users, m);
  CMat resid = y;
  std::vector<double> pi(k_users, 0.0);
  const double prior_logit = std::log(p_active / (1.0 - p_active));

  for (int t = 0; t < n_iter; ++t) {
    double tau2 = std::max(resid.squaredNorm() / (static_cast<double>(l) * m), noise_var);
    tau2 = std::max(tau2, 1e-30);
    CMat z = x + a.adjoint() * resid;

    const double c = gamma / (gamma + tau2);
    const double d = 1.0 / tau2 - 1.0 / (gamma + tau2);
    const double log_det_term = m * std::log(tau2 / (gamma + tau2));

    double mean_deriv = 0.0;
    for (int k = 0; k < k_users; ++k) {
      const double zsq = z.row(k).squaredNorm();
      const double logit = prior_logit + log_det_term + d * zsq;
      const double p = (logit >= 0.0) ? 1.0 / (1.0 + std::exp(-logit))
                                      : std::exp(logit) / (1.0 + std::exp(logit));
      pi[k] = p;
      x.row(k) = (p * c) * z.row(k);
      mean_deriv += c * p + c * p * (1.0 - p) * d * zsq / m;
    }
    mean_deriv /= k_users;
    resid = y - a * x + (static_cast<double>(k_users) / l) * mean_deriv * resid;
  }

  AmpResult out;
  out.scores = pi;
  out.activity.resize(k_users);
  for (int k = 0; k < k_users; ++k) out.activity[k] = pi[k] >= 0.5 ? 1 : 0;
  return out;
}

/// Per-user Hamming error rate between estimated and true activity.
inline double error_probability(const ActivityPattern& est, const ActivityPattern& truth) {
  require(est.size() == truth.size(), "error_probability: length mismatch");
  require(!truth.empty(), "error_probability: empty patterns");
  int mismatches = 0;
  for (std::size_t k = 0; k < truth.size(); ++k)
    if ((est[k] != 0) != (truth[k] != 0)) ++mismatches;
  return static_cast<double>(mismatches) / static_cast<double>(truth.size());
}

}  // namespace semimo::ra

#endif  // SEMIMO_RANDACCESS_HPP
