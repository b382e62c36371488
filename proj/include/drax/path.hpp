// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "drax/core.hpp"
#include "drax/scheduler.hpp"

namespace drax {

/// Per-position categorical that depends on the conditioning tokens; the
/// contract implemented by middle distributions and conditioned sources.
class ConditionedDist {
 public:
  virtual ~ConditionedDist() = default;
  virtual Eigen::VectorXd probs(const TokenSeq& condition, int position) const = 0;
};

enum class SourceKind { delta, uniform, conditioned };

/// One conditional probability path: a schedule plus the component
/// distributions it mixes. The middle slot is present exactly when the
/// schedule has three components.
struct PathSpec {
  Schedule schedule = Schedule::two_way_linear();
  int vocab = 0;
  SourceKind source = SourceKind::uniform;
  const ConditionedDist* mid = nullptr;
  const ConditionedDist* source_model = nullptr;  // for SourceKind::conditioned

  void validate() const;
};

struct PathSample {
  double t = 0.0;
  TokenSeq x0;
  TokenSeq x1;
  TokenSeq condition;
  TokenSeq xt;
  int frozen_prefix_len = 0;
};

/// Mixture over one position: kappa-weighted sum of source, optional middle
/// and target component distributions.
Categorical conditional_prob(const PathSpec& spec, double t, const TokenSeq& x0,
                             const TokenSeq& x1, const TokenSeq& condition,
                             int position);

/// Draw x_t position-by-position; positions below frozen_prefix_len are
/// copied from x1 and never resampled.
TokenSeq sample_xt(const PathSpec& spec, double t, const TokenSeq& x0,
                   const TokenSeq& x1, const TokenSeq& condition,
                   RngHandle& rng, int frozen_prefix_len = 0);

/// Gumbel-Softmax draw from the mixture, differentiable in the logits of the
/// learnable component (the middle distribution; for conditioned sources the
/// same machinery applies with the source slot learnable).
struct RelaxedSample {
  Eigen::MatrixXd weights;      // L x d relaxed one-hot rows
  TokenSeq hard;                // argmax per row; an exact draw from the mix
  Eigen::MatrixXd mix;          // mixture probabilities before noise
  Eigen::MatrixXd learn_probs;  // softmax of the learnable logits
  double kappa_learn = 0.0;     // mixture weight of the learnable component
  double tau = 1.0;

  /// Dense d(weights row)/d(logits row) at one position.
  Eigen::MatrixXd jacobian(int position) const;

  /// Vector-Jacobian product: dLoss/dweights -> dLoss/dlogits.
  Eigen::MatrixXd backprop(const Eigen::MatrixXd& grad_weights) const;
};

RelaxedSample sample_xt_relaxed(const PathSpec& spec, double t,
                                const TokenSeq& x0, const TokenSeq& x1,
                                const Eigen::MatrixXd& mid_logits,
                                double gumbel_temperature, RngHandle& rng);

/// Core of the relaxed draw: mixture = fixed_part + kappa_learn *
/// softmax(learn_logits) per row. Used directly by training loops whose
/// learnable component is the source rather than the middle.
RelaxedSample relaxed_mixture_sample(const Eigen::MatrixXd& fixed_part,
                                     double kappa_learn,
                                     const Eigen::MatrixXd& learn_logits,
                                     double tau, RngHandle& rng);

// --- exact marginals over enumerable instances -------------------------------

struct CouplingEntry {
  TokenSeq x0;
  TokenSeq x1;
  double weight = 0.0;
};

using Coupling = std::vector<CouplingEntry>;

/// Exact marginal p_t by summing the factorized conditional path over the
/// coupling support. Only valid under the dense state cap.
SeqDistribution marginal_path(const PathSpec& spec, double t,
                              const Coupling& coupling,
                              const TokenSeq& condition,
                              std::size_t cap = kDefaultStateCap);

}  // namespace drax
