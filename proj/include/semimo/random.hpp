// SPDX-License-Identifier: Apache-2.0
//
// Seeded random streams. Every stochastic quantity in the workbench is drawn
// from a RandomSource so that (seed, stream_id) fully determines a run.
// Gaussian variates use an explicit Box-Muller transform rather than
// std::normal_distribution, whose output sequence is not pinned by the
// standard; this keeps sample sequences stable across toolchains.

#ifndef SEMIMO_RANDOM_HPP
#define SEMIMO_RANDOM_HPP

#include <cmath>
#include <cstdint>
#include <random>

#include "semimo/common.hpp"

namespace semimo {

namespace detail {
inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(const std::string& s) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : s) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}
}  // namespace detail

class RandomSource {
 public:
  explicit RandomSource(std::uint64_t seed, std::uint64_t stream_id = 0)
      : seed_(seed),
        stream_id_(stream_id),
        eng_(detail::splitmix64(detail::splitmix64(seed) ^
                                detail::splitmix64(stream_id + 0x632be59bd9b4e019ULL))) {}

  std::uint64_t seed() const { return seed_; }
  std::uint64_t stream_id() const { return stream_id_; }

  /// Independent stream derived from this one; partition work by `id`.
  RandomSource substream(std::uint64_t id) const {
    return RandomSource(seed_, detail::splitmix64(stream_id_ ^ detail::splitmix64(id + 1)));
  }

  std::uint64_t next_u64() { return eng_(); }

  /// Uniform on [0, 1) with 53-bit resolution.
  double uniform() { return static_cast<double>(eng_() >> 11) * 0x1.0p-53; }

  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

  /// Uniform integer in [lo, hi] inclusive.
  int uniform_int(int lo, int hi) {
    require(hi >= lo, "uniform_int: empty range");
    std::uint64_t span = static_cast<std::uint64_t>(hi - lo) + 1;
    return lo + static_cast<int>(eng_() % span);
  }

  bool bernoulli(double p) { return uniform() < p; }

  /// Standard normal via Box-Muller (deterministic draw order, one spare cached).
  double gauss() {
    if (have_spare_) {
      have_spare_ = false;
      return spare_;
    }
    double u1 = uniform();
    double u2 = uniform();
    if (u1 < 1e-300) u1 = 1e-300;
    double r = std::sqrt(-2.0 * std::log(u1));
    double th = 2.0 * M_PI * u2;
    spare_ = r * std::sin(th);
    have_spare_ = true;
    return r * std::cos(th);
  }

  /// Circularly-symmetric complex Gaussian CN(0,1): variance 1/2 per component.
  cplx cgauss() {
    double re = gauss();
    double im = gauss();
    return cplx(M_SQRT1_2 * re, M_SQRT1_2 * im);
  }

 private:
  std::uint64_t seed_;
  std::uint64_t stream_id_;
  std::mt19937_64 eng_;
  bool have_spare_ = false;
  double spare_ = 0.0;
};

}  // namespace semimo

#endif  // SEMIMO_RANDOM_HPP
