#pragma once

#include <cmath>
#include <cstdint>

#include "expinf/types.hpp"

namespace expinf {

/// Counter-based splittable generator. The state is a Weyl counter advanced by
/// the 64-bit golden gamma; outputs pass through the splitmix64 finalizer.
/// Identical (seed, stream_id) pairs reproduce identical sequences on every
/// platform; distinct stream_ids give statistically independent streams.
///
/// Constants: golden gamma 0x9E3779B97F4A7C15 and the splitmix64 finalizer
/// multipliers 0xBF58476D1CE4E5B9 / 0x94D049BB133111EB.
class RngStream {
 public:
  RngStream(std::uint64_t seed, std::uint64_t stream_id) {
    std::uint64_t k = mix(seed ^ 0x8BB84B93962EACC9ULL);
    k = mix(k ^ stream_id);
    state_ = k;
  }

  std::uint64_t next_u64() {
    state_ += 0x9E3779B97F4A7C15ULL;
    return mix(state_);
  }

  /// Uniform on [0, 1) with 53 random bits.
  double uniform01() { return static_cast<double>(next_u64() >> 11) * 0x1.0p-53; }

  /// Unbiased uniform integer in [0, bound) via rejection.
  std::uint64_t next_below(std::uint64_t bound) {
    const std::uint64_t threshold = (0 - bound) % bound;
    for (;;) {
      std::uint64_t r = next_u64();
      if (r >= threshold) return r % bound;
    }
  }

  /// Standard normal via polar Box-Muller; both values of each accepted pair
  /// are consumed so parallel streams stay aligned.
  double normal() {
    if (has_spare_) {
      has_spare_ = false;
      return spare_;
    }
    double u, v, s;
    do {
      u = 2.0 * uniform01() - 1.0;
      v = 2.0 * uniform01() - 1.0;
      s = u * u + v * v;
    } while (s >= 1.0 || s == 0.0);
    const double f = std::sqrt(-2.0 * std::log(s) / s);
    spare_ = v * f;
    has_spare_ = true;
    return u * f;
  }

  /// Student-t with 4 degrees of freedom: Z / sqrt(V/4), V a sum of 4 squared
  /// independent normals. Unstandardized (variance 2).
  double student_t4() {
    const double z = normal();
    double v = 0.0;
    for (int i = 0; i < 4; ++i) {
      const double g = normal();
      v += g * g;
    }
    return z / std::sqrt(v / 4.0);
  }

  /// Fills out with i.i.d. standard normals.
  void fill_normal(Vector& out) {
    for (Index i = 0; i < out.size(); ++i) out(i) = normal();
  }

 private:
  static std::uint64_t mix(std::uint64_t z) {
    z ^= z >> 30;
    z *= 0xBF58476D1CE4E5B9ULL;
    z ^= z >> 27;
    z *= 0x94D049BB133111EBULL;
    z ^= z >> 31;
    return z;
  }

  std::uint64_t state_ = 0;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

/// Deterministic 64-bit sub-seed for a (seed, replicate, role) triple.
inline std::uint64_t derive_seed(std::uint64_t seed, std::uint64_t task, std::uint64_t role) {
  RngStream s(seed ^ (0xA0761D6478BD642FULL * (role + 1)), task);
  return s.next_u64();
}

}  // namespace expinf
