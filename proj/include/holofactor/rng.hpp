// Copyright (c) 2026, The holofactor Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#pragma once

#include <array>
#include <cmath>
#include <cstdint>
#include <limits>
#include <random>

namespace holofactor {

// SplitMix64 finalizer. Used to derive independent child seeds.
constexpr std::uint64_t mix64(std::uint64_t z) noexcept {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

/// Child seed `index` of `master`. Depends only on (master, index), so trial
/// seeds do not depend on scheduling order.
constexpr std::uint64_t split_seed(std::uint64_t master, std::uint64_t index) noexcept {
  return mix64(mix64(master) ^ mix64(index + 0x632be59bd9b4e019ULL));
}

namespace detail {

// Tables for the 128-layer Marsaglia-Tsang ziggurat.
struct ZigguratTables {
  std::array<std::uint32_t, 128> k{};
  std::array<double, 128> w{};
  std::array<double, 128> f{};

  ZigguratTables() {
    constexpr double m1 = 2147483648.0;
    constexpr double vn = 9.91256303526217e-3;
    double dn = 3.442619855899;
    double tn = dn;
    const double q = vn / std::exp(-0.5 * dn * dn);
    k[0] = static_cast<std::uint32_t>((dn / q) * m1);
    k[1] = 0;
    w[0] = q / m1;
    w[127] = dn / m1;
    f[0] = 1.0;
    f[127] = std::exp(-0.5 * dn * dn);
    for (int i = 126; i >= 1; --i) {
      dn = std::sqrt(-2.0 * std::log(vn / dn + std::exp(-0.5 * dn * dn)));
      k[i + 1] = static_cast<std::uint32_t>((dn / tn) * m1);
      tn = dn;
      f[i] = std::exp(-0.5 * dn * dn);
      w[i] = dn / m1;
    }
  }
};

inline const ZigguratTables& ziggurat_tables() {
  static const ZigguratTables tables;
  return tables;
}

}  // namespace detail

/// Explicit PRNG stream. Every stochastic operation in the library takes one of
/// these by reference; there is no hidden global state.
class Rng {
 public:
  using result_type = std::uint64_t;

  explicit Rng(std::uint64_t seed = 0) : engine_(seed) {}

  static constexpr result_type min() noexcept { return std::mt19937_64::min(); }
  static constexpr result_type max() noexcept { return std::mt19937_64::max(); }

  result_type operator()() { return engine_(); }

  /// Standard normal draw (ziggurat; the hot loops draw M + D of these per
  /// factor update).
  double normal() {
    const auto& z = detail::ziggurat_tables();
    for (;;) {
      const std::uint64_t u = engine_();
      const auto hz = static_cast<std::int32_t>(static_cast<std::uint32_t>(u));
      const auto iz = static_cast<std::size_t>(u >> 57U);
      const std::uint32_t mag = hz < 0 ? static_cast<std::uint32_t>(-static_cast<std::int64_t>(hz))
                                       : static_cast<std::uint32_t>(hz);
      const double x = hz * z.w[iz];
      if (mag < z.k[iz]) return x;
      if (iz == 0) {
        constexpr double r = 3.442619855899;
        double tail = 0.0;
        double y = 0.0;
        do {
          tail = -std::log(open_uniform()) / r;
          y = -std::log(open_uniform());
        } while (y + y < tail * tail);
        return hz > 0 ? r + tail : -r - tail;
      }
      if (z.f[iz] + uniform() * (z.f[iz - 1] - z.f[iz]) < std::exp(-0.5 * x * x)) return x;
    }
  }

  /// Fair coin, drawn from a buffered 64-bit word.
  bool coin() {
    if (bits_left_ == 0) {
      bits_ = engine_();
      bits_left_ = 64;
    }
    const bool bit = (bits_ & 1U) != 0;
    bits_ >>= 1U;
    --bits_left_;
    return bit;
  }

  /// Uniform integer in [0, n).
  std::uint64_t below(std::uint64_t n) {
    return std::uniform_int_distribution<std::uint64_t>(0, n - 1)(engine_);
  }

  /// Uniform in [0, 1) with 53 random bits.
  double uniform() { return static_cast<double>(engine_() >> 11U) * 0x1.0p-53; }

  /// Uniform in (0, 1).
  double open_uniform() { return (static_cast<double>(engine_() >> 11U) + 0.5) * 0x1.0p-53; }

 private:
  std::mt19937_64 engine_;
  std::uint64_t bits_ = 0;
  int bits_left_ = 0;
};

}  // namespace holofactor
