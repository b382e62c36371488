// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <cstdint>
#include <string>
#include <vector>

#include "drax/common.hpp"
#include "drax/rng.hpp"

namespace drax {

/// Synthetic conditional-generation task: reference sequences from an
/// order-1 Markov chain, observations from a token noise channel. The
/// channel is the desk-scale analog of an acoustic signal; its output plays
/// the role of the encoder conditioning.
struct TaskConfig {
  int vocab = 16;
  int length = 12;
  double sub_rate = 0.2;
  double del_rate = 0.05;
  double ins_rate = 0.05;
  /// Reserve id vocab-1 as the end-of-text pad. When false, references use
  /// the full vocabulary at fixed length and the channel is substitution-only
  /// (the form used by the enumerable verification tasks).
  bool eot_reserved = true;
  int len_min = 0;  // 0 -> derived default
  int len_max = 0;
  std::uint64_t seed = 1;  // seeds the Markov table, not the sample stream
};

struct ConditionRef {
  TokenSeq tokens;
  int ref_id = -1;
  double duration_seconds = 0.0;
};

struct Task {
  TaskConfig cfg;
  int content_alphabet = 0;  // vocab-1 with EOT reserved, else vocab
  Eigen::MatrixXd trans;     // content_alphabet x content_alphabet, rows sum 1
  Eigen::VectorXd init;

  static Task build(const TaskConfig& cfg);

  Token eot() const { return cfg.vocab - 1; }
  int vocab() const { return cfg.vocab; }
  int length() const { return cfg.length; }

  /// Joint probability of a full padded reference under the Markov sampler
  /// and the (uniform) content-length law. Requires an enumerable setup.
  double reference_prob(const TokenSeq& x1) const;

  /// Substitution-only channel likelihood P(condition | reference); the
  /// closed form behind the exact posterior. Requires del = ins = 0.
  double channel_likelihood(const TokenSeq& condition,
                            const TokenSeq& reference) const;
};

struct SamplePair {
  TokenSeq reference;
  ConditionRef condition;
};

SamplePair sample_pair(const Task& task, RngHandle& rng, int ref_id = -1);

/// Unit-cost Levenshtein distance.
std::size_t edit_distance(const TokenSeq& a, const TokenSeq& b);

/// Edit distance divided by reference length; each token id is one word.
double wer(const TokenSeq& hyp, const TokenSeq& ref);

/// Same DP at symbol granularity; desk-scale tokens are single symbols, so
/// this coincides with wer on token sequences.
double cer(const TokenSeq& hyp, const TokenSeq& ref);

double rtfx(double audio_seconds, double compute_seconds);

TokenSeq truncate_at_eot(const TokenSeq& x, Token eot);

// --- dataset files -----------------------------------------------------------

struct DatasetEntry {
  int id = 0;
  TokenSeq reference;
  TokenSeq condition;
  double duration_seconds = 0.0;
};

std::vector<DatasetEntry> make_dataset(const Task& task, int n, RngHandle rng);
void write_dataset(const std::string& path,
                   const std::vector<DatasetEntry>& entries);
std::vector<DatasetEntry> read_dataset(const std::string& path);

}  // namespace drax
