// SPDX-License-Identifier: Apache-2.0

#include <catch2/catch_amalgamated.hpp>

#include "semimo/randaccess.hpp"

using namespace semimo;
using namespace semimo::ra;

namespace {

// Exhaustive-support least-squares oracle: returns the support of size
// <= s_max with the smallest residual, searching all combinations.
std::vector<int> brute_force_support(const CMat& y, const PreambleBook& book, int s_max) {
  const int l = static_cast<int>(y.rows());
  const int k_users = book.n_users();
  CMat a(l, k_users);
  for (int k = 0; k < k_users; ++k) a.col(k) = book.p.row(k).head(l).transpose();

  std::vector<int> best;
  double best_res = y.squaredNorm();
  std::vector<int> comb;
  std::function<void(int)> rec = [&](int start) {
    if (!comb.empty()) {
      CMat a_s(l, comb.size());
      for (std::size_t i = 0; i < comb.size(); ++i) a_s.col(i) = a.col(comb[i]);
      double res = (y - a_s * a_s.colPivHouseholderQr().solve(y)).squaredNorm();
      if (res < best_res - 1e-12) {
        best_res = res;
        best = comb;
      }
    }
    if (static_cast<int>(comb.size()) == s_max) return;
    for (int k = start; k < k_users; ++k) {
      comb.push_back(k);
      rec(k + 1);
      comb.pop_back();
    }
  };
  rec(0);
  std::sort(best.begin(), best.end());
  return best;
}

std::vector<int> support_of(const ActivityPattern& p) {
  std::vector<int> s;
  for (int k = 0; k < static_cast<int>(p.size()); ++k)
    if (p[k]) s.push_back(k);
  return s;
}

// 8x8 Hadamard scaled to QPSK modulus: orthogonal rows, entries (1+j)/sqrt(2) * (+-1).
PreambleBook hadamard_book8() {
  Eigen::MatrixXd h(1, 1);
  h(0, 0) = 1.0;
  while (h.rows() < 8) {
    Eigen::MatrixXd h2(h.rows() * 2, h.cols() * 2);
    h2 << h, h, h, -h;
    h = h2;
  }
  CMat p = h.cast<cplx>() * cplx(M_SQRT1_2, M_SQRT1_2);
  return {p};
}

}  // namespace

TEST_CASE("generate_qpsk_preambles: modulus, determinism, constellation balance") {
  RandomSource r1(21, 0), r2(21, 0);
  auto b1 = generate_qpsk_preambles(128, 28, r1);
  auto b2 = generate_qpsk_preambles(128, 28, r2);
  REQUIRE((b1.p - b2.p).norm() == 0.0);

  int counts[4] = {0, 0, 0, 0};
  for (int k = 0; k < 128; ++k)
    for (int l = 0; l < 28; ++l) {
      cplx e = b1.p(k, l);
      REQUIRE(std::abs(std::abs(e) - 1.0) < 1e-12);
      int idx = (e.real() > 0 ? 0 : 2) + (e.imag() > 0 ? 0 : 1);
      counts[idx]++;
    }
  for (int c = 0; c < 4; ++c) {
    double freq = counts[c] / 3584.0;
    REQUIRE(std::abs(freq - 0.25) < 0.02);
  }

  RandomSource r3(21, 1);
  REQUIRE_THROWS_AS(generate_qpsk_preambles(0, 4, r3), ArgumentError);
}

TEST_CASE("draw_activity: degenerate probabilities and binomial mean") {
  RandomSource rng(33, 0);
  auto all_off = draw_activity(16, 0.0, rng);
  auto all_on = draw_activity(16, 1.0, rng);
  for (int k = 0; k < 16; ++k) {
    REQUIRE(all_off[k] == 0);
    REQUIRE(all_on[k] == 1);
  }

  double total = 0;
  for (int t = 0; t < 1000; ++t) {
    RandomSource r(77, t);
    auto act = draw_activity(128, 0.1, r);
    for (int v : act) total += v;
  }
  double mean_active = total / 1000.0;
  REQUIRE(mean_active > 12.0);
  REQUIRE(mean_active < 13.6);

  RandomSource r2(33, 1);
  REQUIRE_THROWS_AS(draw_activity(8, 1.5, r2), ArgumentError);
}

TEST_CASE("synthesize_received: superposition structure") {
  RandomSource rng(44, 0);
  auto book = generate_qpsk_preambles(8, 12, rng);
  auto ch = chansim::draw_rayleigh_channels(8, 4, rng);

  ActivityPattern none(8, 0);
  RandomSource rn(44, 1);
  CMat y0 = synthesize_received(book, none, ch, 10, 300.0, rn);
  REQUIRE(y0.norm() < 1e-6);

  ActivityPattern solo(8, 0);
  solo[3] = 1;
  RandomSource rn2(44, 2);
  CMat y1 = synthesize_received(book, solo, ch, 10, 300.0, rn2);
  CMat expect = book.p.row(3).head(10).transpose() * ch.gains.row(3);
  REQUIRE((y1 - expect).norm() < 1e-9);

  ActivityPattern a(8, 0), b(8, 0), both(8, 0);
  a[1] = 1;
  b[6] = 1;
  both[1] = both[6] = 1;
  RandomSource rna(44, 3), rnb(44, 4), rnc(44, 5);
  CMat ya = synthesize_received(book, a, ch, 12, 300.0, rna);
  CMat yb = synthesize_received(book, b, ch, 12, 300.0, rnb);
  CMat yab = synthesize_received(book, both, ch, 12, 300.0, rnc);
  REQUIRE((yab - (ya + yb)).norm() < 1e-9);

  RandomSource rn3(44, 6);
  REQUIRE_THROWS_AS(synthesize_received(book, a, ch, 13, 10.0, rn3), ArgumentError);
}

TEST_CASE("zero_pad: identity, zero rows, norm preservation") {
  RandomSource rng(55, 0);
  CMat y(5, 3);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 3; ++j) y(i, j) = rng.cgauss();

  CMat same = zero_pad(y, 5);
  REQUIRE((same - y).norm() == 0.0);

  CMat padded = zero_pad(y, 9);
  REQUIRE(padded.rows() == 9);
  REQUIRE(padded.bottomRows(4).norm() == 0.0);
  REQUIRE(std::abs(padded.norm() - y.norm()) < 1e-12);
}

TEST_CASE("covariance: rank-1 example and PSD structure") {
  CMat z = CMat::Zero(6, 4);
  CMat c0 = covariance(z);
  REQUIRE(c0.norm() == 0.0);

  CMat e1 = CMat::Zero(6, 4);
  e1.row(0).setOnes();
  CMat c1 = covariance(e1);
  CMat expect = CMat::Zero(6, 6);
  expect(0, 0) = 1.0;
  REQUIRE((c1 - expect).norm() < 1e-12);

  RandomSource rng(66, 0);
  CMat y(6, 8);
  for (int i = 0; i < 6; ++i)
    for (int j = 0; j < 8; ++j) y(i, j) = rng.cgauss();
  CMat c = covariance(y);
  REQUIRE((c - c.adjoint()).norm() < 1e-12);
  Eigen::SelfAdjointEigenSolver<CMat> es(c);
  REQUIRE(es.eigenvalues().minCoeff() > -1e-10);
}

TEST_CASE("covariance of zero-padded block is antenna-permutation invariant") {
  RandomSource rng(67, 0);
  CMat y(5, 4);
  for (int i = 0; i < 5; ++i)
    for (int j = 0; j < 4; ++j) y(i, j) = rng.cgauss();
  CMat perm = y;
  perm.col(0).swap(perm.col(3));
  perm.col(1).swap(perm.col(2));
  REQUIRE((covariance(zero_pad(y, 8)) - covariance(zero_pad(perm, 8))).norm() < 1e-12);
}

TEST_CASE("omp_detect: empty signal, orthogonal book, random-book oracle match") {
  // empty observation with residual rule -> empty support
  PreambleBook ortho{CMat(CMat::Identity(4, 4) * 2.0)};
  StopRule res_only;
  res_only.residual_ratio = 1e-10;
  auto est0 = omp_detect(CMat::Zero(4, 2), ortho, res_only);
  REQUIRE(support_of(est0).empty());

  // missing stop bounds -> argument error
  REQUIRE_THROWS_AS(omp_detect(CMat::Zero(4, 2), ortho, StopRule{}), ArgumentError);

  // one active user, orthogonal preambles, noiseless
  RandomSource rng(70, 0);
  auto ch4 = chansim::draw_rayleigh_channels(4, 3, rng);
  ActivityPattern act(4, 0);
  act[2] = 1;
  RandomSource rn(70, 1);
  CMat y = synthesize_received(ortho, act, ch4, 4, 300.0, rn);
  StopRule s2;
  s2.max_support = 2;
  s2.residual_ratio = 1e-10;
  auto est = omp_detect(y, ortho, s2);
  auto oracle = brute_force_support(y, ortho, 2);
  REQUIRE(support_of(est) == oracle);
  REQUIRE(support_of(est) == std::vector<int>{2});

  // K=8, L=8, M=4, 2 active, random QPSK book vs exhaustive C(8,2) search
  for (int trial = 0; trial < 10; ++trial) {
    RandomSource rt(700 + trial, 0);
    auto book = generate_qpsk_preambles(8, 8, rt);
    auto ch = chansim::draw_rayleigh_channels(8, 4, rt);
    ActivityPattern truth(8, 0);
    int u1 = trial % 8, u2 = (trial * 3 + 1) % 8;
    if (u1 == u2) u2 = (u2 + 1) % 8;
    truth[u1] = truth[u2] = 1;
    RandomSource rnz(700 + trial, 1);
    CMat yt = synthesize_received(book, truth, ch, 8, 300.0, rnz);
    StopRule rule;
    rule.max_support = 2;
    rule.residual_ratio = 1e-12;
    auto got = support_of(omp_detect(yt, book, rule));
    auto want = brute_force_support(yt, book, 2);
    REQUIRE(got == want);
    REQUIRE(got == support_of(truth));
  }
}

TEST_CASE("omp noiseless exact recovery property on small instances") {
  for (int trial = 0; trial < 50; ++trial) {
    RandomSource rt(900 + trial, 0);
    auto book = generate_qpsk_preambles(10, 6, rt);
    auto ch = chansim::draw_rayleigh_channels(10, 2, rt);
    ActivityPattern truth(10, 0);
    int u1 = rt.uniform_int(0, 9), u2 = rt.uniform_int(0, 9);
    if (u1 == u2) u2 = (u2 + 3) % 10;
    truth[u1] = truth[u2] = 1;
    RandomSource rnz(900 + trial, 1);
    CMat yt = synthesize_received(book, truth, ch, 6, 300.0, rnz);
    StopRule rule;
    rule.max_support = 2;
    rule.residual_ratio = 1e-12;
    REQUIRE(support_of(omp_detect(yt, book, rule)) == support_of(truth));
  }
}

TEST_CASE("amp_detect: trivial, oracle match, preconditions") {
  auto book = hadamard_book8();
  REQUIRE_THROWS_AS(amp_detect(CMat::Zero(8, 2), book, 0, 0.1, 0.01), ArgumentError);

  auto r0 = amp_detect(CMat::Zero(8, 2), book, 1, 0.1, 0.01);
  REQUIRE(support_of(r0.activity).empty());

  for (int trial = 0; trial < 10; ++trial) {
    RandomSource rt(1100 + trial, 0);
    auto qbook = generate_qpsk_preambles(8, 8, rt);
    auto ch = chansim::draw_rayleigh_channels(8, 8, rt);
    ActivityPattern truth(8, 0);
    truth[trial % 8] = 1;
    RandomSource rnz(1100 + trial, 1);
    CMat y = synthesize_received(qbook, truth, ch, 8, 300.0, rnz);
    auto res = amp_detect(y, qbook, 20, 0.125, 1e-30);
    REQUIRE(support_of(res.activity) == brute_force_support(y, qbook, 1));
    REQUIRE(support_of(res.activity) == support_of(truth));
    for (double s : res.scores) {
      REQUIRE(s >= 0.0);
      REQUIRE(s <= 1.0);
    }
  }
}

TEST_CASE("amp scores invariant to unitary rotation of the antenna axis") {
  RandomSource rng(1200, 0);
  auto book = generate_qpsk_preambles(8, 8, rng);
  auto ch = chansim::draw_rayleigh_channels(8, 4, rng);
  auto act = draw_activity(8, 0.25, rng);
  RandomSource rn(1200, 1);
  CMat y = synthesize_received(book, act, ch, 8, 15.0, rn);

  // random unitary from QR of a Gaussian matrix
  CMat g(4, 4);
  for (int i = 0; i < 4; ++i)
    for (int j = 0; j < 4; ++j) g(i, j) = rng.cgauss();
  Eigen::HouseholderQR<CMat> qr(g);
  CMat q = qr.householderQ();

  auto r1 = amp_detect(y, book, 15, 0.25, db_to_linear(-15.0));
  auto r2 = amp_detect(y * q, book, 15, 0.25, db_to_linear(-15.0));
  for (int k = 0; k < 8; ++k) REQUIRE(std::abs(r1.scores[k] - r2.scores[k]) < 1e-9);
}

TEST_CASE("amp tracks omp in the easy orthogonal regime") {
  auto book = hadamard_book8();
  const int n_trials = 500;
  const double snr_db = 20.0;
  double pe_amp = 0.0, pe_omp = 0.0;
  for (int t = 0; t < n_trials; ++t) {
    RandomSource rs(3000, t);
    auto ch = chansim::draw_rayleigh_channels(8, 4, rs);
    auto truth = draw_activity(8, 0.1, rs);
    CMat y = synthesize_received(book, truth, ch, 8, snr_db, rs);
    auto amp = amp_detect(y, book, 20, 0.1, db_to_linear(-snr_db));
    auto omp = omp_detect(y, book, StopRule::defaults(8, 0.1, snr_db));
    pe_amp += error_probability(amp.activity, truth);
    pe_omp += error_probability(omp, truth);
  }
  pe_amp /= n_trials;
  pe_omp /= n_trials;
  REQUIRE(pe_amp <= pe_omp + 0.01);
}

TEST_CASE("error_probability: identities") {
  ActivityPattern t(128, 0);
  t[5] = t[9] = 1;
  REQUIRE(error_probability(t, t) == 0.0);

  ActivityPattern flipped(128);
  for (int k = 0; k < 128; ++k) flipped[k] = 1 - t[k];
  REQUIRE(error_probability(flipped, t) == 1.0);

  ActivityPattern one_off = t;
  one_off[17] = 1;
  REQUIRE(error_probability(one_off, t) == Catch::Approx(1.0 / 128.0));

  ActivityPattern small(4, 0);
  REQUIRE_THROWS_AS(error_probability(small, t), ArgumentError);
}
