// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "drax/core.hpp"
#include "drax/path.hpp"
#include "drax/synthtask.hpp"

namespace drax {

/// Anything that maps (x_t, t, condition) to per-position distributions over
/// the clean token; rows of the returned matrix are positions.
class PosteriorModel {
 public:
  virtual ~PosteriorModel() = default;
  virtual Eigen::MatrixXd predict(const TokenSeq& xt, double t,
                                  const TokenSeq& condition) const = 0;
  virtual int vocab() const = 0;
  virtual int length() const = 0;
};

/// Bayes inversion of the factorized path on an enumerable task: the ground
/// truth every learned model is measured against. Requires a substitution-only
/// channel so the conditional target law has a closed form. A delta source
/// with uniformly drawn x_0 marginalizes to the same per-position likelihood
/// as a uniform source, so both source kinds share one code path.
class ExactPosterior : public PosteriorModel {
 public:
  ExactPosterior(Task task, PathSpec spec, std::size_t cap = kDefaultStateCap);

  Eigen::MatrixXd predict(const TokenSeq& xt, double t,
                          const TokenSeq& condition) const override;
  int vocab() const override { return task_.vocab(); }
  int length() const override { return task_.length(); }

  /// Unnormalized conditional target weights over all of V^L given the
  /// condition (Markov prior times channel likelihood).
  Eigen::VectorXd target_weights(const TokenSeq& condition) const;

  /// Normalized conditional target law as a dense sequence distribution.
  SeqDistribution target_distribution(const TokenSeq& condition) const;

  /// Independent coupling of the path source with the conditional target,
  /// enumerated for the exact marginal-path routines.
  Coupling coupling(const TokenSeq& condition) const;

  const Task& task() const { return task_; }
  const PathSpec& spec() const { return spec_; }

 private:
  Task task_;
  PathSpec spec_;
  std::size_t states_;
};

/// Lookup-table posterior: logits indexed by (time bucket, position,
/// condition feature, current token). The stand-in for a sequence decoder at
/// desk scale; conditioning is positional (feature = condition token at the
/// same position, or a reserved "dropped" feature).
class TabularModel : public PosteriorModel {
 public:
  TabularModel(int vocab, int length, int time_buckets, int features = 0);

  Eigen::MatrixXd predict(const TokenSeq& xt, double t,
                          const TokenSeq& condition) const override;
  int vocab() const override { return vocab_; }
  int length() const override { return length_; }
  int buckets() const { return buckets_; }
  int features() const { return features_; }

  int bucket_of(double t) const;
  int feature_of(const TokenSeq& condition, int position) const;
  Eigen::Index row_index(int bucket, int position, int feature,
                         Token current) const;

  /// Model logits for one position given a soft (relaxed one-hot) input:
  /// the weight-mixed logit rows of the table.
  Eigen::VectorXd soft_logits(int bucket, int position, int feature,
                              const Eigen::VectorXd& input_weights) const;

  Eigen::MatrixXd logits;  // (buckets*length*features*vocab) x vocab

 private:
  int vocab_, length_, buckets_, features_;
};

/// Per-position conditional distribution p_mid(.|a); logits indexed by
/// (position, condition feature). Also reused as the conditioned source and
/// as the desk-scale external model.
class MidModel : public ConditionedDist {
 public:
  MidModel(int vocab, int length, int features = 0);

  Eigen::VectorXd probs(const TokenSeq& condition, int position) const override;
  Eigen::VectorXd logit_row(const TokenSeq& condition, int position) const;
  int feature_of(const TokenSeq& condition, int position) const;
  Eigen::Index row_index(int position, int feature) const;

  int vocab() const { return vocab_; }
  int length() const { return length_; }
  int features() const { return features_; }

  Eigen::MatrixXd logits;  // (length*features) x vocab

 private:
  int vocab_, length_, features_;
};

/// Posterior that ignores everything and predicts uniformly; the random
/// drafter baseline for speculative decoding.
class UniformPosterior : public PosteriorModel {
 public:
  UniformPosterior(int vocab, int length) : vocab_(vocab), length_(length) {}
  Eigen::MatrixXd predict(const TokenSeq&, double,
                          const TokenSeq&) const override {
    return Eigen::MatrixXd::Constant(length_, vocab_, 1.0 / vocab_);
  }
  int vocab() const override { return vocab_; }
  int length() const override { return length_; }

 private:
  int vocab_, length_;
};

/// Fixed per-position distribution wrapped as a ConditionedDist (uniform
/// middles, fixed test middles).
class FixedDist : public ConditionedDist {
 public:
  explicit FixedDist(Eigen::VectorXd probs) : p_(std::move(probs)) {}
  static FixedDist uniform(int d) {
    return FixedDist(Eigen::VectorXd::Constant(d, 1.0 / d));
  }
  Eigen::VectorXd probs(const TokenSeq&, int) const override { return p_; }

 private:
  Eigen::VectorXd p_;
};

/// Mean over the batch of the per-position clean-token cross entropy,
/// -sum_i log p(x1_i | x_t); frozen-prefix positions are excluded (they are
/// deterministically known and carry no learning signal).
double cdfm_loss(const PosteriorModel& model,
                 const std::vector<PathSample>& batch);

/// Auxiliary cross entropy directly on the middle-distribution outputs.
double mid_loss(const MidModel& mid,
                const std::vector<std::pair<TokenSeq, TokenSeq>>& batch);

struct TrainConfig {
  int steps = 30000;
  double lr = 0.5;
  int batch = 8;
  double gumbel_temperature = 0.3;
  double condition_dropout = 0.1;
  double prefix_prob = 0.0;
};

struct TrainResult {
  std::vector<double> loss_curve;  // combined objective per step
  double smoothed_start = 0.0;
  double smoothed_end = 0.0;
};

/// Joint SGD on the combined objective (posterior cross entropy plus the
/// auxiliary middle loss). Gradients through the sampled x_t flow into the
/// learnable component via the Gumbel-Softmax relaxation; gradients of the
/// tabular softmax are the closed-form (probability - one-hot) rows.
///
/// `learnable` may be null (plain two-way paths). When the spec's middle (or
/// conditioned source) points at the same MidModel object, its logits are
/// updated in place.
TrainResult train_toy(const Task& task, const PathSpec& spec,
                      TabularModel& model, MidModel* learnable,
                      const TrainConfig& cfg, RngHandle rng);

// --- checkpoints -------------------------------------------------------------

void save_tabular(const std::string& path, const TabularModel& model);
TabularModel load_tabular(const std::string& path);
void save_mid(const std::string& path, const MidModel& model);
MidModel load_mid(const std::string& path);

}  // namespace drax
