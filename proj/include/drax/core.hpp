// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstddef>

#include "drax/common.hpp"
#include "drax/rng.hpp"

namespace drax {

/// Mass floor applied before any log; keeps CE losses and ELBO scores finite.
inline constexpr double kProbFloor = 1e-12;

/// Largest dense sequence state space, d^L, that the library will enumerate.
inline constexpr std::size_t kDefaultStateCap = 1000000;

struct Vocabulary {
  int size = 0;

  explicit Vocabulary(int d);
};

void validate_tokens(const TokenSeq& tokens, int vocab);

/// Distribution over one token slot; entries non-negative, summing to 1.
struct Categorical {
  Eigen::VectorXd p;

  explicit Categorical(Eigen::VectorXd probs);

  static Categorical uniform(int d);
  static Categorical one_hot(int d, Token id);
  /// Normalizes a non-negative weight vector.
  static Categorical from_unnormalized(const Eigen::VectorXd& w);

  int size() const { return static_cast<int>(p.size()); }
};

/// Clamp entries to at least `floor` and renormalize.
Eigen::VectorXd floor_and_normalize(const Eigen::VectorXd& p,
                                    double floor = kProbFloor);

inline double safe_log(double p) {
  return std::log(p < kProbFloor ? kProbFloor : p);
}

/// Temperature-scaled categorical draw: P(i) proportional to p[i]^(1/tau).
/// tau == 1 uses the probabilities untouched; zero entries stay zero for
/// every temperature.
Token sample_categorical(const Categorical& dist, double temperature,
                         RngHandle& rng);

/// Draw from an already-normalized probability vector (no tempering, no
/// validation); the hot-loop primitive behind sample_categorical.
Token sample_index(const Eigen::Ref<const Eigen::VectorXd>& probs,
                   RngHandle& rng);

Eigen::VectorXd temper(const Eigen::VectorXd& probs, double temperature);

// --- dense distributions over whole sequences -------------------------------

/// Number of states d^L, guarded by `cap`.
std::size_t state_count(int vocab, int length,
                        std::size_t cap = kDefaultStateCap);

/// Mixed-radix index of a sequence; position 0 is most significant.
std::size_t encode_state(const TokenSeq& tokens, int vocab);

TokenSeq decode_state(std::size_t index, int vocab, int length);

/// Dense PMF over all of V^L; only constructible under the state cap.
struct SeqDistribution {
  int vocab = 0;
  int length = 0;
  Eigen::VectorXd p;

  SeqDistribution(int vocab, int length, Eigen::VectorXd probs,
                  std::size_t cap = kDefaultStateCap);

  static SeqDistribution uniform(int vocab, int length,
                                 std::size_t cap = kDefaultStateCap);
  static SeqDistribution point_mass(int vocab, const TokenSeq& x,
                                    std::size_t cap = kDefaultStateCap);

  std::size_t states() const { return static_cast<std::size_t>(p.size()); }
};

double tv_distance(const SeqDistribution& p, const SeqDistribution& q);

/// Total variation between two PMFs on the same index set, 0.5 * |p - q|_1.
double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q);

}  // namespace drax
