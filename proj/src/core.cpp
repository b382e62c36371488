// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/core.hpp"

#include <cmath>
#include <string>

namespace drax {

Vocabulary::Vocabulary(int d) : size(d) {
  if (d < 2) {
    throw DomainError("vocabulary size must be at least 2, got " +
                      std::to_string(d));
  }
}

void validate_tokens(const TokenSeq& tokens, int vocab) {
  if (tokens.empty()) throw DimensionError("token sequence must be non-empty");
  for (Token t : tokens) {
    if (t < 0 || t >= vocab) {
      throw DomainError("token id " + std::to_string(t) +
                        " outside vocabulary of size " + std::to_string(vocab));
    }
  }
}

namespace {

void check_distribution(const Eigen::VectorXd& p) {
  if (p.size() == 0) throw InvalidDistributionError("empty probability vector");
  if (!p.allFinite()) {
    throw InvalidDistributionError("non-finite probability entries");
  }
  if (p.minCoeff() < 0.0) {
    throw InvalidDistributionError("negative probability entry");
  }
  if (std::abs(p.sum() - 1.0) > 1e-9) {
    throw InvalidDistributionError("probabilities sum to " +
                                   std::to_string(p.sum()));
  }
}

}  // namespace

Categorical::Categorical(Eigen::VectorXd probs) : p(std::move(probs)) {
  check_distribution(p);
}

Categorical Categorical::uniform(int d) {
  Vocabulary v(d);
  return Categorical(Eigen::VectorXd::Constant(d, 1.0 / d));
}

Categorical Categorical::one_hot(int d, Token id) {
  Vocabulary v(d);
  if (id < 0 || id >= d) throw DomainError("one_hot id outside vocabulary");
  Eigen::VectorXd p = Eigen::VectorXd::Zero(d);
  p[id] = 1.0;
  return Categorical(std::move(p));
}

Categorical Categorical::from_unnormalized(const Eigen::VectorXd& w) {
  if (!w.allFinite() || w.minCoeff() < 0.0) {
    throw InvalidDistributionError("weights must be finite and non-negative");
  }
  const double s = w.sum();
  if (s <= 0.0) throw InvalidDistributionError("weights sum to zero");
  return Categorical(w / s);
}

Eigen::VectorXd floor_and_normalize(const Eigen::VectorXd& p, double floor) {
  Eigen::VectorXd out = p.cwiseMax(floor);
  return out / out.sum();
}

Eigen::VectorXd temper(const Eigen::VectorXd& probs, double temperature) {
  if (!(temperature > 0.0)) throw DomainError("temperature must be positive");
  if (temperature == 1.0) return probs;
  // Work on log probabilities, shifted so the largest exponent is 0.
  const int d = static_cast<int>(probs.size());
  double maxlog = -std::numeric_limits<double>::infinity();
  for (int i = 0; i < d; ++i) {
    if (probs[i] > 0.0) maxlog = std::max(maxlog, std::log(probs[i]));
  }
  Eigen::VectorXd w = Eigen::VectorXd::Zero(d);
  for (int i = 0; i < d; ++i) {
    if (probs[i] > 0.0) {
      w[i] = std::exp((std::log(probs[i]) - maxlog) / temperature);
    }
  }
  return w / w.sum();
}

Token sample_index(const Eigen::Ref<const Eigen::VectorXd>& probs,
                   RngHandle& rng) {
  const double u = rng.next_double();
  double acc = 0.0;
  const int d = static_cast<int>(probs.size());
  for (int i = 0; i < d; ++i) {
    acc += probs[i];
    if (u < acc) return i;
  }
  // Rounding left u beyond the accumulated mass; return the last live entry.
  for (int i = d - 1; i >= 0; --i) {
    if (probs[i] > 0.0) return i;
  }
  return d - 1;
}

Token sample_categorical(const Categorical& dist, double temperature,
                         RngHandle& rng) {
  if (!dist.p.allFinite()) {
    throw InvalidDistributionError("non-finite probabilities in sampler");
  }
  if (temperature == 1.0) return sample_index(dist.p, rng);
  return sample_index(temper(dist.p, temperature), rng);
}

std::size_t state_count(int vocab, int length, std::size_t cap) {
  Vocabulary v(vocab);
  if (length < 1) throw DimensionError("sequence length must be positive");
  std::size_t n = 1;
  for (int i = 0; i < length; ++i) {
    if (n > cap / static_cast<std::size_t>(vocab)) {
      throw EnumerationCapError("state space d^L exceeds cap of " +
                                std::to_string(cap));
    }
    n *= static_cast<std::size_t>(vocab);
  }
  return n;
}

std::size_t encode_state(const TokenSeq& tokens, int vocab) {
  std::size_t idx = 0;
  for (Token t : tokens) idx = idx * static_cast<std::size_t>(vocab) + t;
  return idx;
}

TokenSeq decode_state(std::size_t index, int vocab, int length) {
  TokenSeq out(length);
  for (int i = length - 1; i >= 0; --i) {
    out[i] = static_cast<Token>(index % static_cast<std::size_t>(vocab));
    index /= static_cast<std::size_t>(vocab);
  }
  return out;
}

SeqDistribution::SeqDistribution(int vocab_, int length_, Eigen::VectorXd probs,
                                 std::size_t cap)
    : vocab(vocab_), length(length_), p(std::move(probs)) {
  const std::size_t n = state_count(vocab, length, cap);
  if (static_cast<std::size_t>(p.size()) != n) {
    throw DimensionError("sequence distribution has wrong state count");
  }
  check_distribution(p);
}

SeqDistribution SeqDistribution::uniform(int vocab, int length,
                                         std::size_t cap) {
  const std::size_t n = state_count(vocab, length, cap);
  return SeqDistribution(
      vocab, length,
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n),
                                1.0 / static_cast<double>(n)),
      cap);
}

SeqDistribution SeqDistribution::point_mass(int vocab, const TokenSeq& x,
                                            std::size_t cap) {
  validate_tokens(x, vocab);
  const std::size_t n = state_count(vocab, static_cast<int>(x.size()), cap);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  p[static_cast<Eigen::Index>(encode_state(x, vocab))] = 1.0;
  return SeqDistribution(vocab, static_cast<int>(x.size()), std::move(p), cap);
}

double tv_distance(const Eigen::VectorXd& p, const Eigen::VectorXd& q) {
  if (p.size() != q.size()) {
    throw DimensionError("tv_distance over mismatched state spaces");
  }
  return 0.5 * (p - q).cwiseAbs().sum();
}

double tv_distance(const SeqDistribution& p, const SeqDistribution& q) {
  if (p.vocab != q.vocab || p.length != q.length) {
    throw DimensionError("tv_distance over mismatched state spaces");
  }
  return tv_distance(p.p, q.p);
}

}  // namespace drax
