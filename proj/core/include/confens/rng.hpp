// Copyright 2026 The confens Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <string_view>

namespace confens {

/// SplitMix64 output finalizer.
std::uint64_t mix64(std::uint64_t x) noexcept;

/// 64-bit FNV-1a hash, used to derive substream keys from labels.
std::uint64_t fnv1a64(std::string_view text) noexcept;

/// Counter-based generator "splitmix64-keyed/v1".
///
/// Draw n (0-based) of the stream with key k is
///   mix64(k + (n + 1) * 0x9E3779B97F4A7C15)
/// so any draw is addressable without replaying earlier ones, and streams
/// with distinct keys can be generated on independent threads. Keys for
/// named substreams are mix64(seed ^ fnv1a64(label)).
///
/// Derived variates are defined here rather than through <random>
/// distributions, whose output is implementation-defined:
///   uniform()      top 53 bits of one draw, scaled to [0, 1)
///   uniform_int(n) Lemire multiply-shift with rejection, [0, n)
///   normal(m, s)   Box-Muller on two uniforms, cosine branch only
class CounterRng {
 public:
  static constexpr std::string_view kName = "splitmix64-keyed/v1";

  explicit CounterRng(std::uint64_t key) noexcept : key_(key) {}

  static CounterRng substream(std::uint64_t seed, std::string_view label) noexcept;

  std::uint64_t next_u64() noexcept;
  double uniform() noexcept;
  std::uint64_t uniform_int(std::uint64_t n) noexcept;
  double normal(double mean, double stddev) noexcept;
  bool bernoulli(double p) noexcept { return uniform() < p; }

  std::uint64_t key() const noexcept { return key_; }
  std::uint64_t counter() const noexcept { return counter_; }

 private:
  std::uint64_t key_;
  std::uint64_t counter_ = 0;
};

}  // namespace confens
