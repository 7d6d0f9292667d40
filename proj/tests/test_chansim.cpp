// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "semimo/chansim.hpp"

using namespace semimo;
using namespace semimo::chansim;

namespace {

ClusteredEnvironment desk_env() {
  ClusteredEnvironment env;
  env.n_clusters = 3;
  env.cluster_angles_rad = {-0.5, 0.1, 0.7};
  env.cluster_delays_s = {0.0, 1.5e-6, 3.0e-6};
  env.cluster_powers = {0.5, 0.3, 0.2};
  env.per_ue_angle_jitter_rad = 0.01;
  env.per_ue_delay_jitter_s = 0.05e-6;
  env.guard_window_s = 32.0 / (128.0 * 30e3);  // N_c bins of a 128-subcarrier grid
  env.carrier_spacing_hz = 30e3;
  return env;
}

}  // namespace

TEST_CASE("RandomSource determinism and stream independence") {
  RandomSource a(42, 7), b(42, 7);
  for (int i = 0; i < 100; ++i) REQUIRE(a.uniform() == b.uniform());

  RandomSource c(42, 8);
  int same = 0;
  RandomSource a2(42, 7);
  for (int i = 0; i < 100; ++i)
    if (a2.next_u64() == c.next_u64()) ++same;
  REQUIRE(same == 0);

  // gauss moments sanity
  RandomSource g(1, 0);
  double sum = 0, sq = 0;
  const int n = 20000;
  for (int i = 0; i < n; ++i) {
    double x = g.gauss();
    sum += x;
    sq += x * x;
  }
  REQUIRE(std::abs(sum / n) < 0.03);
  REQUIRE(std::abs(sq / n - 1.0) < 0.05);
}

TEST_CASE("draw_rayleigh_channels: determinism, moments, preconditions") {
  RandomSource r1(5, 0), r2(5, 0);
  auto h1 = draw_rayleigh_channels(1, 1, r1);
  auto h2 = draw_rayleigh_channels(1, 1, r2);
  REQUIRE(h1.gains(0, 0) == h2.gains(0, 0));

  RandomSource r3(5, 1);
  auto big = draw_rayleigh_channels(128, 64, r3);
  double mean_p = big.gains.squaredNorm() / (128.0 * 64.0);
  REQUIRE(mean_p > 0.95);
  REQUIRE(mean_p < 1.05);

  RandomSource r4(5, 2);
  REQUIRE_THROWS_AS(draw_rayleigh_channels(0, 4, r4), ArgumentError);
}

TEST_CASE("generate_clustered_csi: flat channel for zero delay spread") {
  ClusteredEnvironment env;
  env.n_clusters = 1;
  env.cluster_angles_rad = {0.0};  // broadside
  env.cluster_delays_s = {0.0};
  env.cluster_powers = {1.0};
  env.guard_window_s = 1e-5;
  env.carrier_spacing_hz = 30e3;
  RandomSource rng(3, 0);
  auto csis = generate_clustered_csi(env, 4, 8, 1, rng);
  REQUIRE(csis.size() == 1);
  const CMat& h = csis[0].h;
  for (int f = 1; f < 8; ++f) REQUIRE((h.col(f) - h.col(0)).norm() < 1e-12);
}

TEST_CASE("generate_clustered_csi: shared clusters correlate UEs") {
  auto env = desk_env();
  double corr_shared = 0.0, corr_indep = 0.0;
  const int n_draws = 100;
  for (int d = 0; d < n_draws; ++d) {
    RandomSource rng(100 + d, 0);
    auto pair = generate_clustered_csi(env, 8, 32, 2, rng);
    cplx ip = (pair[0].h.conjugate().cwiseProduct(pair[1].h)).sum();
    corr_shared += std::abs(ip) / (pair[0].h.norm() * pair[1].h.norm());

    // independent geometries: re-draw cluster angles/delays per UE
    auto env_b = env;
    RandomSource geo(500 + d, 0);
    for (int c = 0; c < env_b.n_clusters; ++c) {
      env_b.cluster_angles_rad[c] = geo.uniform(-1.0, 1.0);
      env_b.cluster_delays_s[c] = geo.uniform(0.0, 0.8 * env.guard_window_s);
    }
    RandomSource rng_a(900 + d, 0), rng_b(1300 + d, 0);
    auto ua = generate_clustered_csi(env, 8, 32, 1, rng_a);
    auto ub = generate_clustered_csi(env_b, 8, 32, 1, rng_b);
    cplx ip2 = (ua[0].h.conjugate().cwiseProduct(ub[0].h)).sum();
    corr_indep += std::abs(ip2) / (ua[0].h.norm() * ub[0].h.norm());
  }
  corr_shared /= n_draws;
  corr_indep /= n_draws;
  REQUIRE(corr_shared > corr_indep);
}

TEST_CASE("generate_clustered_csi: delay beyond guard window rejected") {
  auto env = desk_env();
  env.cluster_delays_s[2] = env.guard_window_s * 1.5;
  RandomSource rng(1, 0);
  REQUIRE_THROWS_AS(generate_clustered_csi(env, 4, 16, 1, rng), ArgumentError);
}

TEST_CASE("angle_delay_transform: DFT of constant concentrates at origin") {
  DownlinkCsi csi{CMat::Ones(4, 8), 30e3};
  auto ad = angle_delay_transform(csi, 8);
  REQUIRE(std::abs(ad.h_ad(0, 0) - std::sqrt(32.0)) < 1e-10);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 8; ++j)
      if (i != 0 || j != 0) REQUIRE(std::abs(ad.h_ad(i, j)) < 1e-12);
}

TEST_CASE("angle_delay_transform: unitary round-trip and Parseval") {
  RandomSource rng(17, 0);
  CMat h(8, 16);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 16; ++j) h(i, j) = rng.cgauss();
  DownlinkCsi csi{h, 30e3};

  auto ad = angle_delay_transform(csi, 16);
  REQUIRE(std::abs(ad.h_ad.norm() - h.norm()) < 1e-10);
  auto back = inverse_angle_delay_transform(ad, 16, 30e3);
  REQUIRE((back.h - h).norm() < 1e-10);

  // truncation: projection can only lose energy
  auto trunc = angle_delay_transform(csi, 4);
  auto back_t = inverse_angle_delay_transform(trunc, 16, 30e3);
  REQUIRE(back_t.h.norm() <= h.norm() + 1e-12);

  REQUIRE_THROWS_AS(angle_delay_transform(csi, 17), ArgumentError);

  AngleDelayCsi zero{CMat::Zero(8, 4)};
  auto zb = inverse_angle_delay_transform(zero, 16, 30e3);
  REQUIRE(zb.h.norm() == 0.0);
}

TEST_CASE("clustered channels keep >= 99% energy in the first 32 delay taps") {
  auto env = desk_env();
  double ratio_sum = 0.0;
  const int n_draws = 100;
  for (int d = 0; d < n_draws; ++d) {
    RandomSource rng(2000 + d, 0);
    auto csis = generate_clustered_csi(env, 16, 128, 1, rng);
    auto full = angle_delay_transform(csis[0], 128);
    auto trunc = angle_delay_transform(csis[0], 32);
    ratio_sum += trunc.h_ad.squaredNorm() / full.h_ad.squaredNorm();
  }
  REQUIRE(ratio_sum / n_draws >= 0.99);
}

TEST_CASE("awgn: vanishing and calibrated noise") {
  RandomSource rng(7, 0);
  CMat x(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) x(i, j) = rng.cgauss();

  RandomSource rn(7, 1);
  CMat y = awgn(x, 300.0, rn);
  REQUIRE((y - x).norm() / x.norm() < 1e-6);

  CMat unit = CMat::Ones(64, 64);  // 4096 unit-power samples
  RandomSource rn2(7, 2);
  CMat z = awgn(unit, 10.0, rn2);
  double noise_p = (z - unit).squaredNorm() / 4096.0;
  double emp_snr_db = linear_to_db(1.0 / noise_p);
  REQUIRE(emp_snr_db > 9.0);
  REQUIRE(emp_snr_db < 11.0);

  CMat zeros = CMat::Zero(2, 2);
  RandomSource rn3(7, 3);
  REQUIRE_THROWS_AS(awgn(zeros, 10.0, rn3), ArgumentError);
}

TEST_CASE("power_normalize: examples and defining property") {
  CMat x = CMat::Zero(2, 2);
  x(0, 0) = 2.0;
  CMat y = power_normalize(x);
  REQUIRE(std::abs(y(0, 0) - cplx(2.0, 0.0)) < 1e-12);

  RandomSource rng(9, 0);
  CMat r(8, 8);
  for (int i = 0; i < 8; ++i)
    for (int j = 0; j < 8; ++j) r(i, j) = rng.cgauss();
  CMat rn = power_normalize(r);
  REQUIRE(std::abs(rn.squaredNorm() / 64.0 - 1.0) < 1e-9);
  CMat rnn = power_normalize(rn);  // idempotent on unit-power input
  REQUIRE((rnn - rn).norm() < 1e-12);

  REQUIRE_THROWS_AS(power_normalize(CMat::Zero(3, 3)), ArgumentError);
}

TEST_CASE("analog_link: composite of normalization and noise") {
  RandomSource rng(11, 0);
  CMat x(4, 16);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 16; ++j) x(i, j) = 3.0 * rng.cgauss();

  RandomSource rn(11, 1);
  CMat y = analog_link(x, 300.0, rn);
  REQUIRE((y - power_normalize(x)).norm() < 1e-6);
  REQUIRE(y.rows() == x.rows());
  REQUIRE(y.cols() == x.cols());

  CMat big(64, 64);
  RandomSource rs(11, 2);
  for (int i = 0; i < 64; ++i)
    for (int j = 0; j < 64; ++j) big(i, j) = rs.cgauss();
  RandomSource rn2(11, 3);
  CMat z = analog_link(big, 10.0, rn2);
  double noise_p = (z - power_normalize(big)).squaredNorm() / 4096.0;
  double emp_snr_db = linear_to_db(1.0 / noise_p);
  REQUIRE(std::abs(emp_snr_db - 10.0) < 1.0);
}
