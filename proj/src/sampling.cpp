// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>

#include "drax/velocity.hpp"

namespace drax {

namespace {

void validate_sampler_config(const SamplerConfig& cfg,
                             const PosteriorModel& model,
                             const ConditionedDist* mid) {
  if (cfg.nfe < 1) throw DomainError("nfe must be at least 1");
  if (!(cfg.temperature > 0.0)) throw DomainError("temperature must be positive");
  if (cfg.gen_length < 1) throw DomainError("gen_length must be positive");
  if (cfg.gen_length != model.length()) {
    throw DimensionError("gen_length does not match the model");
  }
  if (static_cast<int>(cfg.frozen_prefix.size()) > cfg.gen_length) {
    throw DimensionError("frozen prefix longer than the sequence");
  }
  if (cfg.include_mid && cfg.schedule.mid_index() >= 0 && mid == nullptr) {
    throw PreconditionError("include_mid needs a middle distribution");
  }
  if (cfg.source == SourceKind::conditioned && cfg.source_model == nullptr) {
    throw PreconditionError("conditioned source needs a source model");
  }
}

// Temperature-scaled posterior for the sampling velocity. The mass on the
// current token (the stay probability, which sets the jump rate) is kept
// untempered; only the jump destinations are sharpened. At tau = 1 this is
// the posterior itself, so the untempered chain is untouched.
Eigen::VectorXd temper_destinations(const Eigen::VectorXd& p, Token current,
                                    double tau) {
  if (tau == 1.0) return p;
  const double stay = p[current];
  const double go = 1.0 - stay;
  if (go <= 0.0) return p;
  Eigen::VectorXd off = p;
  off[current] = 0.0;
  Eigen::VectorXd out = go * temper(off, tau);
  out[current] = stay;
  return out;
}

TokenSeq draw_source(const SamplerConfig& cfg, const TokenSeq& condition,
                     int vocab, RngHandle& rng) {
  TokenSeq x(cfg.gen_length);
  for (int i = 0; i < cfg.gen_length; ++i) {
    if (cfg.source == SourceKind::conditioned) {
      x[i] = sample_index(cfg.source_model->probs(condition, i), rng);
    } else {
      x[i] = static_cast<Token>(rng.next_below(vocab));
    }
  }
  for (std::size_t i = 0; i < cfg.frozen_prefix.size(); ++i) {
    x[i] = cfg.frozen_prefix[i];
  }
  return x;
}

}  // namespace

GenerationResult generate(const PosteriorModel& model,
                          const ConditionedDist* mid, const TokenSeq& condition,
                          const SamplerConfig& cfg, RngHandle& rng,
                          bool keep_trace) {
  validate_sampler_config(cfg, model, mid);
  const int L = cfg.gen_length;
  const int d = model.vocab();
  const int K = cfg.nfe;
  const double h = 1.0 / K;
  const int prefix = static_cast<int>(cfg.frozen_prefix.size());
  const bool with_mid = cfg.include_mid && cfg.schedule.mid_index() >= 0;

  GenerationResult out;
  TokenSeq x = draw_source(cfg, condition, d, rng);
  out.initial = x;
  if (keep_trace) out.trace.reserve(K);

  Eigen::MatrixXd rates(L, d);
  for (int k = 0; k + 1 < K; ++k) {
    // The left grid endpoint of the first step sits on the coefficient
    // singularity at t=0; evaluate that step at the interval midpoint.
    const double t_eval = k == 0 ? 0.5 * h : k * h;
    const VelocityCoeffs coeffs = velocity_coeffs(cfg.schedule, t_eval);
    const Eigen::MatrixXd post = model.predict(x, t_eval, condition);
    rates.setZero();
    for (int i = prefix; i < L; ++i) {
      const Eigen::VectorXd row = temper_destinations(
          post.row(i).transpose(), x[i], cfg.temperature);
      Eigen::VectorXd mid_row;
      if (with_mid) mid_row = mid->probs(condition, i);
      rates.row(i) = marginal_velocity(coeffs, row,
                                       with_mid ? &mid_row : nullptr, x[i],
                                       with_mid)
                         .transpose();
    }
    x = euler_step_scored(x, rates, h, rng, &out.traj_logprob);
    if (keep_trace) out.trace.push_back({k + 1, (k + 1) * h, x});
  }

  // Final transition: tempered draw straight from the posterior.
  const double t_final = (K - 1) * h;
  const Eigen::MatrixXd post = model.predict(x, t_final, condition);
  for (int i = prefix; i < L; ++i) {
    const Eigen::VectorXd p = temper(post.row(i).transpose(), cfg.temperature);
    x[i] = sample_index(p, rng);
    out.traj_logprob += safe_log(p[x[i]]);
  }
  if (keep_trace) out.trace.push_back({K, 1.0, x});

  out.tokens = std::move(x);
  return out;
}

CandidateSet generate_candidates(const PosteriorModel& model,
                                 const ConditionedDist* mid,
                                 const TokenSeq& condition,
                                 const SamplerConfig& cfg, int n,
                                 const RngHandle& rng) {
  if (n < 1) throw DomainError("candidate count must be at least 1");
  CandidateSet set;
  set.candidates.reserve(n);
  for (int j = 0; j < n; ++j) {
    RngHandle child = rng.split(j);
    GenerationResult g = generate(model, mid, condition, cfg, child);
    set.candidates.push_back({std::move(g.tokens), g.traj_logprob});
  }
  return set;
}

TokenSeq select_mode(const CandidateSet& cands) {
  if (cands.empty()) throw PreconditionError("empty candidate set");
  std::map<TokenSeq, std::pair<int, std::size_t>> counts;  // count, first index
  for (std::size_t j = 0; j < cands.size(); ++j) {
    auto [it, fresh] =
        counts.try_emplace(cands.candidates[j].tokens, 0, j);
    it->second.first += 1;
  }
  const TokenSeq* best = nullptr;
  int best_count = -1;
  std::size_t best_first = 0;
  for (const auto& [seq, info] : counts) {
    if (info.first > best_count ||
        (info.first == best_count && info.second < best_first)) {
      best = &seq;
      best_count = info.first;
      best_first = info.second;
    }
  }
  return *best;
}

TokenSeq select_mbr(const CandidateSet& cands, ErrorMetric metric) {
  if (cands.empty()) throw PreconditionError("empty candidate set");
  const std::size_t n = cands.size();
  std::size_t best = 0;
  double best_risk = std::numeric_limits<double>::infinity();
  // Word and symbol granularity coincide for token-id sequences, so both
  // metric choices share the same distance here.
  (void)metric;
  for (std::size_t i = 0; i < n; ++i) {
    double risk = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
      const TokenSeq& hyp = cands.candidates[i].tokens;
      const TokenSeq& ref = cands.candidates[j].tokens;
      const double denom = std::max<std::size_t>(1, ref.size());
      risk += static_cast<double>(edit_distance(hyp, ref)) / denom;
    }
    risk /= static_cast<double>(n);
    if (risk < best_risk - 1e-15) {
      best_risk = risk;
      best = i;
    }
  }
  return cands.candidates[best].tokens;
}

TokenSeq select_external(const CandidateSet& cands, const ExternalScorer& scorer,
                         const TokenSeq& condition) {
  if (cands.empty()) throw PreconditionError("empty candidate set");
  std::vector<TokenSeq> seqs;
  seqs.reserve(cands.size());
  for (const Candidate& c : cands.candidates) seqs.push_back(c.tokens);
  std::vector<double> scores;
  try {
    scores = scorer.score(seqs, condition);
  } catch (const std::exception& e) {
    throw Error(std::string("external scorer failed over ") +
                std::to_string(cands.size()) + " candidates: " + e.what());
  }
  if (scores.size() != cands.size()) {
    throw DimensionError("scorer returned wrong number of scores");
  }
  std::size_t best = 0;
  for (std::size_t i = 1; i < scores.size(); ++i) {
    if (scores[i] > scores[best]) best = i;
  }
  return cands.candidates[best].tokens;
}

TokenSeq select_elbo(const CandidateSet& cands) {
  if (cands.empty()) throw PreconditionError("empty candidate set");
  std::size_t best = 0;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    if (std::isnan(cands.candidates[i].traj_logprob)) {
      throw PreconditionError("candidate lacks a trajectory score");
    }
    if (cands.candidates[i].traj_logprob >
        cands.candidates[best].traj_logprob) {
      best = i;
    }
  }
  return cands.candidates[best].tokens;
}

std::vector<double> MidScorer::score(const std::vector<TokenSeq>& candidates,
                                     const TokenSeq& condition) const {
  std::vector<double> out;
  out.reserve(candidates.size());
  for (const TokenSeq& c : candidates) {
    double s = 0.0;
    for (int i = 0; i < static_cast<int>(c.size()); ++i) {
      s += safe_log(model_.probs(condition, i)[c[i]]);
    }
    out.push_back(s);
  }
  return out;
}

void write_candidates_file(const std::string& path, const CandidateSet& cands) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write candidates file: " + path);
  char buf[32];
  for (std::size_t j = 0; j < cands.size(); ++j) {
    out << j << '\t';
    const TokenSeq& seq = cands.candidates[j].tokens;
    for (std::size_t i = 0; i < seq.size(); ++i) {
      out << (i ? " " : "") << seq[i];
    }
    std::snprintf(buf, sizeof(buf), "%.17g", cands.candidates[j].traj_logprob);
    out << '\t' << buf << '\n';
  }
}

std::vector<double> read_scores_file(const std::string& path, std::size_t n) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open scores file: " + path);
  std::vector<double> scores(n, std::numeric_limits<double>::quiet_NaN());
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::size_t id;
    double score;
    if (!(ls >> id >> score) || id >= n) {
      throw UsageError("malformed scores line: " + line);
    }
    scores[id] = score;
  }
  for (std::size_t i = 0; i < n; ++i) {
    if (std::isnan(scores[i])) {
      throw UsageError("missing score for candidate " + std::to_string(i));
    }
  }
  return scores;
}

// --- speculative decoding ----------------------------------------------------

Token MidTopOne::next_token(const TokenSeq& prefix,
                            const TokenSeq& condition) const {
  const int i = static_cast<int>(prefix.size());
  const Eigen::VectorXd p = model_.probs(condition, i);
  Eigen::Index arg;
  p.maxCoeff(&arg);
  return static_cast<Token>(arg);
}

TokenSeq greedy_decode(const ExternalTopOne& target, const TokenSeq& condition,
                       int max_len, Token eot) {
  TokenSeq out;
  while (static_cast<int>(out.size()) < max_len) {
    const Token tok = target.next_token(out, condition);
    out.push_back(tok);
    if (tok == eot) break;
  }
  return out;
}

SpeculativeResult speculative_decode(const PosteriorModel& draft,
                                     const ConditionedDist* draft_mid,
                                     const ExternalTopOne& target,
                                     const TokenSeq& condition, int block,
                                     const SamplerConfig& draft_cfg, Token eot,
                                     const RngHandle& rng) {
  if (block < 1) throw DomainError("block size must be at least 1");
  const int L = draft_cfg.gen_length;
  SpeculativeResult res;
  TokenSeq accepted;
  accepted.reserve(L);

  while (static_cast<int>(accepted.size()) < L) {
    SamplerConfig cfg = draft_cfg;
    cfg.frozen_prefix = accepted;
    RngHandle child = rng.split(res.rounds);
    const TokenSeq proposal =
        generate(draft, draft_mid, condition, cfg, child).tokens;

    const int start = static_cast<int>(accepted.size());
    const int stop = std::min(start + block, L);
    int matches = 0;
    bool done = false;
    for (int i = start; i < stop; ++i) {
      const Token top = target.next_token(accepted, condition);
      if (top == proposal[i]) {
        accepted.push_back(top);
        ++matches;
      } else {
        accepted.push_back(top);  // greedy fallback at the first mismatch
        if (top == eot) done = true;
        break;
      }
      if (top == eot) {
        done = true;
        break;
      }
    }
    res.matches_per_round.push_back(matches);
    res.matched_total += matches;
    ++res.rounds;
    if (done) break;
  }

  res.tokens = std::move(accepted);
  return res;
}

}  // namespace drax
