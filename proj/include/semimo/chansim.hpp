// SPDX-License-Identifier: Apache-2.0
//
// Channel generation and the physical signal chain: Rayleigh uplink fading,
// a geometry-based clustered multipath model for correlated downlink CSI,
// unitary angle-delay transforms, AWGN, power normalization, and the analog
// feedback link. All functions are pure given a RandomSource.

#ifndef SEMIMO_CHANSIM_HPP
#define SEMIMO_CHANSIM_HPP

#include <cmath>
#include <vector>

#include "semimo/common.hpp"
#include "semimo/random.hpp"

namespace semimo::chansim {

struct UplinkChannelSet {
  CMat gains;  // K x M, i.i.d. CN(0,1)
};

/// Shared cluster geometry for a group of nearby UEs. The UEs see the same
/// clusters up to per-UE jitter, which is what makes their channels
/// correlated but distinct.
struct ClusteredEnvironment {
  int n_clusters = 0;
  std::vector<double> cluster_angles_rad;  // per cluster
  std::vector<double> cluster_delays_s;    // per cluster, in [0, guard_window_s)
  std::vector<double> cluster_powers;      // linear, sums to 1
  double per_ue_angle_jitter_rad = 0.0;    // std of per-(UE,cluster) angle offset
  double per_ue_delay_jitter_s = 0.0;      // std of per-(UE,cluster) delay offset
  double guard_window_s = 0.0;             // max tolerated path delay
  double carrier_spacing_hz = 30e3;

  void validate() const {
    require(n_clusters >= 1, "ClusteredEnvironment: need at least one cluster");
    require(static_cast<int>(cluster_angles_rad.size()) == n_clusters &&
                static_cast<int>(cluster_delays_s.size()) == n_clusters &&
                static_cast<int>(cluster_powers.size()) == n_clusters,
            "ClusteredEnvironment: per-cluster arrays must have n_clusters entries");
    double psum = 0.0;
    for (double p : cluster_powers) {
      require(p >= 0.0, "ClusteredEnvironment: cluster powers must be nonnegative");
      psum += p;
    }
    require(std::abs(psum - 1.0) < 1e-9, "ClusteredEnvironment: cluster powers must sum to 1");
    require(guard_window_s > 0.0, "ClusteredEnvironment: guard window must be positive");
    require(carrier_spacing_hz > 0.0, "ClusteredEnvironment: carrier spacing must be positive");
    for (double tau : cluster_delays_s) {
      require(tau >= 0.0, "ClusteredEnvironment: delays must be nonnegative");
      require(tau < guard_window_s, "ClusteredEnvironment: cluster delay exceeds guard window");
    }
  }
};

struct DownlinkCsi {
  CMat h;  // N_t x N_sub (spatial x frequency)
  double carrier_spacing_hz = 30e3;
};

struct AngleDelayCsi {
  CMat h_ad;  // N_t x N_c (angle x delay, truncated)
};

inline UplinkChannelSet draw_rayleigh_channels(int k_users, int m_antennas, RandomSource& rng) {
  require(k_users >= 1 && m_antennas >= 1, "draw_rayleigh_channels: dimensions must be positive");
  CMat h(k_users, m_antennas);
  for (int k = 0; k < k_users; ++k)
    for (int m = 0; m < m_antennas; ++m) h(k, m) = rng.cgauss();
  return {std::move(h)};
}

/// Half-wavelength ULA steering vector, unit-modulus entries.
inline CVec steering_vector(int n_t, double angle_rad) {
  CVec a(n_t);
  double s = std::sin(angle_rad);
  for (int n = 0; n < n_t; ++n) a(n) = std::exp(cplx(0.0, M_PI * n * s));
  return a;
}

/// Sum-of-clusters downlink channels for n_ues co-located UEs.
/// UEs share the cluster geometry (angles/delays up to jitter) but draw
/// independent complex gains, so their channels are correlated but distinct.
/// Average per-entry power is 1 (cluster powers sum to 1, steering and
/// frequency phasors are unit-modulus).
inline std::vector<DownlinkCsi> generate_clustered_csi(const ClusteredEnvironment& env, int n_t,
                                                       int n_sub, int n_ues, RandomSource& rng) {
  env.validate();
  require(n_t >= 1 && n_sub >= 1, "generate_clustered_csi: dimensions must be positive");
  require(n_ues >= 1, "generate_clustered_csi: need at least one UE");

  std::vector<DownlinkCsi> out;
  out.reserve(n_ues);
  for (int u = 0; u < n_ues; ++u) {
    CMat h = CMat::Zero(n_t, n_sub);
    for (int c = 0; c < env.n_clusters; ++c) {
      cplx gain = std::sqrt(env.cluster_powers[c]) * rng.cgauss();
      double angle = env.cluster_angles_rad[c] + env.per_ue_angle_jitter_rad * rng.gauss();
      double delay = env.cluster_delays_s[c] + env.per_ue_delay_jitter_s * rng.gauss();
      delay = std::min(std::max(delay, 0.0), env.guard_window_s);  // jitter stays inside the window
      CVec a = steering_vector(n_t, angle);
      for (int f = 0; f < n_sub; ++f) {
        cplx phase = std::exp(cplx(0.0, -2.0 * M_PI * env.carrier_spacing_hz * f * delay));
        h.col(f) += gain * phase * a;
      }
    }
    out.push_back({std::move(h), env.carrier_spacing_hz});
  }
  return out;
}

/// Unitary DFT matrix, F(n, k) = exp(-j 2 pi n k / N) / sqrt(N).
inline CMat unitary_dft(int n) {
  CMat f(n, n);
  for (int a = 0; a < n; ++a)
    for (int b = 0; b < n; ++b) f(a, b) = std::exp(cplx(0.0, -2.0 * M_PI * a * b / n)) / std::sqrt(double(n));
  return f;
}

/// h_ad = F_a^H h F_d with unitary DFTs on both axes, keeping the first n_c
/// delay columns where multipath energy concentrates.
inline AngleDelayCsi angle_delay_transform(const DownlinkCsi& csi, int n_c) {
  const int n_t = static_cast<int>(csi.h.rows());
  const int n_sub = static_cast<int>(csi.h.cols());
  require(n_c >= 1 && n_c <= n_sub, "angle_delay_transform: n_c must be in [1, N_sub]");
  CMat full = unitary_dft(n_t).adjoint() * csi.h * unitary_dft(n_sub);
  return {full.leftCols(n_c)};
}

/// Zero-pads the delay axis back to n_sub and inverts both unitary DFTs.
inline DownlinkCsi inverse_angle_delay_transform(const AngleDelayCsi& ad, int n_sub,
                                                 double carrier_spacing_hz = 30e3) {
  const int n_t = static_cast<int>(ad.h_ad.rows());
  const int n_c = static_cast<int>(ad.h_ad.cols());
  require(n_sub >= n_c, "inverse_angle_delay_transform: n_sub must be >= n_c");
  CMat padded = CMat::Zero(n_t, n_sub);
  padded.leftCols(n_c) = ad.h_ad;
  CMat h = unitary_dft(n_t) * padded * unitary_dft(n_sub).adjoint();
  return {std::move(h), carrier_spacing_hz};
}

/// y = x + n with n i.i.d. CN(0, sigma^2), sigma^2 = mean(|x|^2) / 10^(snr/10).
inline CMat awgn(const CMat& x, double snr_db, RandomSource& rng) {
  const double n_entries = static_cast<double>(x.size());
  require(n_entries > 0, "awgn: empty input");
  const double px = x.squaredNorm() / n_entries;
  require(px > 0.0, "awgn: all-zero input has undefined SNR");
  const double sigma = std::sqrt(px / db_to_linear(snr_db));
  CMat y = x;
  for (Eigen::Index j = 0; j < y.cols(); ++j)
    for (Eigen::Index i = 0; i < y.rows(); ++i) y(i, j) += sigma * rng.cgauss();
  return y;
}

/// Scales x so that the mean per-symbol power is exactly 1.
inline CMat power_normalize(const CMat& x) {
  const double e = x.squaredNorm();
  require(e > 0.0, "power_normalize: zero input");
  return x * std::sqrt(static_cast<double>(x.size()) / e);
}

/// Feedback link: power normalization followed by AWGN. OFDM mapping and
/// ideal per-subcarrier equalization collapse to the identity, so the
/// composite is a unit-power AWGN channel.
inline CMat analog_link(const CMat& x, double snr_db, RandomSource& rng) {
  return awgn(power_normalize(x), snr_db, rng);
}

}  // namespace semimo::chansim

#endif  // SEMIMO_CHANSIM_HPP
