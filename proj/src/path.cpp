// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/path.hpp"

#include <cmath>
#include <string>

namespace drax {

namespace {

Eigen::VectorXd softmax_row(const Eigen::VectorXd& logits) {
  Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
  return w / w.sum();
}

Eigen::VectorXd source_component(const PathSpec& spec, const TokenSeq& x0,
                                 const TokenSeq& condition, int position) {
  switch (spec.source) {
    case SourceKind::delta: {
      Eigen::VectorXd v = Eigen::VectorXd::Zero(spec.vocab);
      v[x0[position]] = 1.0;
      return v;
    }
    case SourceKind::uniform:
      return Eigen::VectorXd::Constant(spec.vocab, 1.0 / spec.vocab);
    case SourceKind::conditioned:
      return spec.source_model->probs(condition, position);
  }
  throw DomainError("unknown source kind");
}

}  // namespace

void PathSpec::validate() const {
  Vocabulary v(vocab);
  const int m = schedule.components();
  if (m == 3 && mid == nullptr) {
    throw PreconditionError("3-component path needs a middle distribution");
  }
  if (source == SourceKind::conditioned && source_model == nullptr) {
    throw PreconditionError("conditioned source needs a source model");
  }
}

Categorical conditional_prob(const PathSpec& spec, double t, const TokenSeq& x0,
                             const TokenSeq& x1, const TokenSeq& condition,
                             int position) {
  spec.validate();
  const Eigen::VectorXd k = kappa(spec.schedule, t);
  Eigen::VectorXd p = Eigen::VectorXd::Zero(spec.vocab);
  if (k[spec.schedule.source_index()] != 0.0) {
    p += k[spec.schedule.source_index()] *
         source_component(spec, x0, condition, position);
  }
  if (spec.schedule.mid_index() >= 0 && k[spec.schedule.mid_index()] != 0.0) {
    p += k[spec.schedule.mid_index()] * spec.mid->probs(condition, position);
  }
  p[x1[position]] += k[spec.schedule.target_index()];
  return Categorical(p);
}

TokenSeq sample_xt(const PathSpec& spec, double t, const TokenSeq& x0,
                   const TokenSeq& x1, const TokenSeq& condition,
                   RngHandle& rng, int frozen_prefix_len) {
  const int L = static_cast<int>(x1.size());
  TokenSeq out(L);
  for (int i = 0; i < L; ++i) {
    if (i < frozen_prefix_len) {
      out[i] = x1[i];
      continue;
    }
    out[i] =
        sample_index(conditional_prob(spec, t, x0, x1, condition, i).p, rng);
  }
  return out;
}

RelaxedSample relaxed_mixture_sample(const Eigen::MatrixXd& fixed_part,
                                     double kappa_learn,
                                     const Eigen::MatrixXd& learn_logits,
                                     double tau, RngHandle& rng) {
  if (!(tau > 0.0)) throw DomainError("gumbel temperature must be positive");
  const int L = static_cast<int>(fixed_part.rows());
  const int d = static_cast<int>(fixed_part.cols());
  if (learn_logits.rows() != L || learn_logits.cols() != d) {
    throw DimensionError("learnable logits must match the mixture shape");
  }

  RelaxedSample s;
  s.tau = tau;
  s.kappa_learn = kappa_learn;
  s.weights.resize(L, d);
  s.hard.resize(L);
  s.mix.resize(L, d);
  s.learn_probs.resize(L, d);

  for (int i = 0; i < L; ++i) {
    const Eigen::VectorXd pm = softmax_row(learn_logits.row(i).transpose());
    const Eigen::VectorXd pi =
        fixed_part.row(i).transpose() + kappa_learn * pm;
    Eigen::VectorXd scaled(d);
    for (int v = 0; v < d; ++v) {
      const double g = rng.next_gumbel();
      // Zero-probability tokens stay at zero weight for any temperature.
      scaled[v] = pi[v] > 0.0 ? (std::log(pi[v]) + g) / tau : -1e300;
    }
    Eigen::Index arg;
    scaled.maxCoeff(&arg);
    s.hard[i] = static_cast<Token>(arg);  // Gumbel-max: an exact draw from pi
    s.weights.row(i) = softmax_row(scaled).transpose();
    s.mix.row(i) = pi.transpose();
    s.learn_probs.row(i) = pm.transpose();
  }
  return s;
}

RelaxedSample sample_xt_relaxed(const PathSpec& spec, double t,
                                const TokenSeq& x0, const TokenSeq& x1,
                                const Eigen::MatrixXd& mid_logits,
                                double gumbel_temperature, RngHandle& rng) {
  spec.validate();
  if (spec.schedule.mid_index() < 0) {
    throw PreconditionError("relaxed sampling differentiates the middle "
                            "component; schedule has none");
  }
  if (spec.source == SourceKind::conditioned) {
    throw PreconditionError(
        "relaxed mid sampling expects a delta or uniform source");
  }
  const int L = static_cast<int>(x1.size());
  const int d = spec.vocab;
  const Eigen::VectorXd k = kappa(spec.schedule, t);

  Eigen::MatrixXd fixed(L, d);
  const TokenSeq no_condition;
  for (int i = 0; i < L; ++i) {
    Eigen::VectorXd f = k[spec.schedule.source_index()] *
                        source_component(spec, x0, no_condition, i);
    f[x1[i]] += k[spec.schedule.target_index()];
    fixed.row(i) = f.transpose();
  }
  return relaxed_mixture_sample(fixed, k[spec.schedule.mid_index()], mid_logits,
                                gumbel_temperature, rng);
}

Eigen::MatrixXd RelaxedSample::jacobian(int position) const {
  const int d = static_cast<int>(weights.cols());
  if (kappa_learn == 0.0) return Eigen::MatrixXd::Zero(d, d);
  const Eigen::VectorXd w = weights.row(position).transpose();
  const Eigen::VectorXd pi = mix.row(position).transpose();
  const Eigen::VectorXd pm = learn_probs.row(position).transpose();
  const Eigen::MatrixXd dw =
      Eigen::MatrixXd(w.asDiagonal()) - w * w.transpose();
  Eigen::VectorXd inv(d);
  for (int v = 0; v < d; ++v) inv[v] = pi[v] > 0.0 ? 1.0 / (tau * pi[v]) : 0.0;
  const Eigen::MatrixXd dpm =
      Eigen::MatrixXd(pm.asDiagonal()) - pm * pm.transpose();
  return dw * inv.asDiagonal() * kappa_learn * dpm;
}

Eigen::MatrixXd RelaxedSample::backprop(
    const Eigen::MatrixXd& grad_weights) const {
  const int L = static_cast<int>(weights.rows());
  const int d = static_cast<int>(weights.cols());
  Eigen::MatrixXd out = Eigen::MatrixXd::Zero(L, d);
  if (kappa_learn == 0.0) return out;
  for (int i = 0; i < L; ++i) {
    const Eigen::VectorXd gw = grad_weights.row(i).transpose();
    const Eigen::VectorXd w = weights.row(i).transpose();
    const Eigen::VectorXd pi = mix.row(i).transpose();
    const Eigen::VectorXd pm = learn_probs.row(i).transpose();
    // (diag(w) - w w^T) gw, scaled by kappa/(tau pi), then the softmax VJP.
    Eigen::VectorXd g = w.cwiseProduct(gw) - w * w.dot(gw);
    for (int v = 0; v < d; ++v) {
      g[v] = pi[v] > 0.0 ? kappa_learn * g[v] / (tau * pi[v]) : 0.0;
    }
    out.row(i) = (pm.cwiseProduct(g) - pm * pm.dot(g)).transpose();
  }
  return out;
}

SeqDistribution marginal_path(const PathSpec& spec, double t,
                              const Coupling& coupling,
                              const TokenSeq& condition, std::size_t cap) {
  spec.validate();
  if (coupling.empty()) throw PreconditionError("empty coupling");
  double total = 0.0;
  for (const CouplingEntry& e : coupling) total += e.weight;
  if (std::abs(total - 1.0) > 1e-9) {
    throw InvalidDistributionError("coupling weights sum to " +
                                   std::to_string(total));
  }
  const int L = static_cast<int>(coupling.front().x1.size());
  const std::size_t n = state_count(spec.vocab, L, cap);

  Eigen::VectorXd p = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(n));
  for (const CouplingEntry& e : coupling) {
    Eigen::VectorXd acc = Eigen::VectorXd::Ones(1);
    for (int i = 0; i < L; ++i) {
      const Eigen::VectorXd m =
          conditional_prob(spec, t, e.x0, e.x1, condition, i).p;
      Eigen::VectorXd next(acc.size() * spec.vocab);
      for (Eigen::Index st = 0; st < acc.size(); ++st) {
        next.segment(st * spec.vocab, spec.vocab) = acc[st] * m;
      }
      acc.swap(next);
    }
    p += e.weight * acc;
  }
  return SeqDistribution(spec.vocab, L, std::move(p), cap);
}

}  // namespace drax
