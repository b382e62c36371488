// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "drax/core.hpp"
#include "drax/posterior.hpp"

namespace drax {

/// Multi-step generation settings. The chain runs K-1 Euler transitions on
/// the grid t = k/K and finishes with a direct tempered draw from the
/// posterior (the exact limit of the jump kernel at t -> 1, which also avoids
/// the 1/(1-t) blow-up of the last Euler step).
struct SamplerConfig {
  int nfe = 16;              // K; step size is 1/K
  double temperature = 0.01;  // applied to the final posterior draw
  bool include_mid = false;   // keep the middle term in the velocity
  int gen_length = 0;
  TokenSeq frozen_prefix;     // positions held fixed throughout
  Schedule schedule = Schedule::two_way_linear();
  SourceKind source = SourceKind::uniform;
  const ConditionedDist* source_model = nullptr;
};

struct StepTrace {
  int step = 0;  // 1-based transition index
  double t = 0.0;
  TokenSeq state;
};

struct GenerationResult {
  TokenSeq tokens;
  double traj_logprob = 0.0;  // log-probability of the realized trajectory
  TokenSeq initial;
  std::vector<StepTrace> trace;
};

GenerationResult generate(const PosteriorModel& model,
                          const ConditionedDist* mid, const TokenSeq& condition,
                          const SamplerConfig& cfg, RngHandle& rng,
                          bool keep_trace = false);

struct Candidate {
  TokenSeq tokens;
  double traj_logprob = 0.0;
};

struct CandidateSet {
  std::vector<Candidate> candidates;

  bool empty() const { return candidates.empty(); }
  std::size_t size() const { return candidates.size(); }
};

/// n independent generations on split RNG streams; deterministic in
/// (seed, stream) regardless of evaluation order.
CandidateSet generate_candidates(const PosteriorModel& model,
                                 const ConditionedDist* mid,
                                 const TokenSeq& condition,
                                 const SamplerConfig& cfg, int n,
                                 const RngHandle& rng);

enum class ErrorMetric { wer, cer };

/// Most frequent exact sequence; ties go to the earliest candidate.
TokenSeq select_mode(const CandidateSet& cands);

/// Minimum expected error rate against the candidate set itself, with the
/// second argument of the metric treated as the reference (normalization by
/// its length). Ties go to the earliest candidate.
TokenSeq select_mbr(const CandidateSet& cands, ErrorMetric metric);

class ExternalScorer {
 public:
  virtual ~ExternalScorer() = default;
  /// Scores every candidate in one batch call; higher is better.
  virtual std::vector<double> score(const std::vector<TokenSeq>& candidates,
                                    const TokenSeq& condition) const = 0;
};

TokenSeq select_external(const CandidateSet& cands, const ExternalScorer& scorer,
                         const TokenSeq& condition);

/// Argmax of the stored trajectory log-probability (a tractable lower-bound
/// surrogate for the sequence likelihood; known to be a rough ranking).
TokenSeq select_elbo(const CandidateSet& cands);

/// Sum of per-position conditional log-likelihoods under a direct
/// condition-to-token model; the desk-scale external rescorer.
class MidScorer : public ExternalScorer {
 public:
  explicit MidScorer(const MidModel& model) : model_(model) {}
  std::vector<double> score(const std::vector<TokenSeq>& candidates,
                            const TokenSeq& condition) const override;

 private:
  const MidModel& model_;
};

// File adapter so an out-of-process scorer can be plugged in: candidates are
// written one per line as "id<TAB>tokens<TAB>score", scores are read back as
// "id<TAB>score" lines.
void write_candidates_file(const std::string& path, const CandidateSet& cands);
std::vector<double> read_scores_file(const std::string& path, std::size_t n);

// --- speculative decoding ----------------------------------------------------

/// Greedy next-token oracle of the verification model.
class ExternalTopOne {
 public:
  virtual ~ExternalTopOne() = default;
  virtual Token next_token(const TokenSeq& prefix,
                           const TokenSeq& condition) const = 0;
};

/// Position-local greedy target built from a direct conditional model.
class MidTopOne : public ExternalTopOne {
 public:
  explicit MidTopOne(const MidModel& model) : model_(model) {}
  Token next_token(const TokenSeq& prefix,
                   const TokenSeq& condition) const override;

 private:
  const MidModel& model_;
};

TokenSeq greedy_decode(const ExternalTopOne& target, const TokenSeq& condition,
                       int max_len, Token eot);

struct SpeculativeResult {
  TokenSeq tokens;
  int rounds = 0;
  int matched_total = 0;
  std::vector<int> matches_per_round;

  double mean_matches() const {
    return rounds == 0 ? 0.0 : static_cast<double>(matched_total) / rounds;
  }
};

/// Draft-and-verify loop: the draft proposes a block via prefix-frozen
/// generation, the target verifies left to right; a draft token is accepted
/// only when it matches the target's top-1 prediction, and on the first
/// mismatch the target's own token is appended. The output therefore equals
/// the target's greedy decode exactly.
SpeculativeResult speculative_decode(const PosteriorModel& draft,
                                     const ConditionedDist* draft_mid,
                                     const ExternalTopOne& target,
                                     const TokenSeq& condition, int block,
                                     const SamplerConfig& draft_cfg, Token eot,
                                     const RngHandle& rng);

}  // namespace drax
