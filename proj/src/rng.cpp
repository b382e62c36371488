// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/rng.hpp"

#include <cmath>

namespace drax {

namespace {

// SplitMix64 finalizer; full-period bijective mix on 64 bits.
inline std::uint64_t mix64(std::uint64_t z) {
  z += 0x9e3779b97f4a7c15ULL;
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

}  // namespace

std::uint64_t RngHandle::next_u64() {
  const std::uint64_t key = mix64(seed ^ mix64(stream ^ 0xd1b54a32d192ed03ULL));
  return mix64(key + counter++ * 0x9e3779b97f4a7c15ULL);
}

double RngHandle::next_double() {
  return static_cast<double>(next_u64() >> 11) * 0x1.0p-53;
}

double RngHandle::next_open() {
  const double u = next_double();
  if (u <= 1e-12) return 1e-12;
  if (u >= 1.0 - 1e-12) return 1.0 - 1e-12;
  return u;
}

std::uint64_t RngHandle::next_below(std::uint64_t n) {
  // Rejection-free multiply-shift; bias is negligible for n << 2^64.
  const std::uint64_t x = next_u64();
  return static_cast<std::uint64_t>(
      (static_cast<unsigned __int128>(x) * n) >> 64);
}

double RngHandle::next_gumbel() {
  return -std::log(-std::log(next_open()));
}

RngHandle RngHandle::split(std::uint64_t child) const {
  RngHandle out;
  out.seed = seed;
  out.stream = mix64(stream ^ mix64(child + 0x6a09e667f3bcc909ULL));
  out.counter = 0;
  return out;
}

}  // namespace drax
