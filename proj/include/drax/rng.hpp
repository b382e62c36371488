// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>

namespace drax {

/// Counter-based deterministic random stream.
///
/// Every draw is a pure function of (seed, stream, counter), so a handle can
/// be copied, split into independent child streams and replayed; results do
/// not depend on scheduling order when work is distributed across threads.
struct RngHandle {
  std::uint64_t seed = 0;
  std::uint64_t stream = 0;
  std::uint64_t counter = 0;

  RngHandle() = default;
  RngHandle(std::uint64_t seed_, std::uint64_t stream_)
      : seed(seed_), stream(stream_) {}

  std::uint64_t next_u64();

  /// Uniform double in [0, 1).
  double next_double();

  /// Uniform double in the open interval (0, 1).
  double next_open();

  /// Uniform integer in [0, n).
  std::uint64_t next_below(std::uint64_t n);

  /// Standard Gumbel draw, -log(-log(U)) with U clamped away from {0, 1}.
  double next_gumbel();

  /// Independent child stream; deterministic in (parent stream, child id).
  RngHandle split(std::uint64_t child) const;
};

}  // namespace drax
