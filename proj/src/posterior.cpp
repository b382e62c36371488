// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/posterior.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "drax/scheduler.hpp"

namespace drax {

namespace {

Eigen::VectorXd softmax(const Eigen::VectorXd& logits) {
  Eigen::VectorXd w = (logits.array() - logits.maxCoeff()).exp();
  return w / w.sum();
}

}  // namespace

// --- ExactPosterior ----------------------------------------------------------

ExactPosterior::ExactPosterior(Task task, PathSpec spec, std::size_t cap)
    : task_(std::move(task)), spec_(std::move(spec)) {
  spec_.validate();
  if (spec_.vocab != task_.vocab()) {
    throw DimensionError("path and task vocabulary sizes differ");
  }
  states_ = state_count(task_.vocab(), task_.length(), cap);
  if (task_.cfg.del_rate != 0.0 || task_.cfg.ins_rate != 0.0) {
    throw PreconditionError(
        "exact posterior needs the substitution-only channel");
  }
}

Eigen::VectorXd ExactPosterior::target_weights(const TokenSeq& cond) const {
  const int d = task_.vocab();
  const int L = task_.length();
  Eigen::VectorXd w = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(states_));
  for (std::size_t idx = 0; idx < states_; ++idx) {
    const TokenSeq x1 = decode_state(idx, d, L);
    const double prior = task_.reference_prob(x1);
    if (prior == 0.0) continue;
    w[static_cast<Eigen::Index>(idx)] =
        prior * task_.channel_likelihood(cond, x1);
  }
  const double total = w.sum();
  if (total <= 0.0) {
    throw PreconditionError("condition has zero likelihood under the task");
  }
  return w;
}

SeqDistribution ExactPosterior::target_distribution(const TokenSeq& cond) const {
  Eigen::VectorXd w = target_weights(cond);
  w /= w.sum();
  return SeqDistribution(task_.vocab(), task_.length(), std::move(w));
}

Coupling ExactPosterior::coupling(const TokenSeq& cond) const {
  const int d = task_.vocab();
  const int L = task_.length();
  Eigen::VectorXd w = target_weights(cond);
  w /= w.sum();
  Coupling out;
  const TokenSeq dummy_x0(L, 0);
  const bool enumerate_x0 = spec_.source == SourceKind::delta;
  const double x0_w = enumerate_x0 ? 1.0 / static_cast<double>(states_) : 1.0;
  for (std::size_t i1 = 0; i1 < states_; ++i1) {
    const double wi = w[static_cast<Eigen::Index>(i1)];
    if (wi == 0.0) continue;
    const TokenSeq x1 = decode_state(i1, d, L);
    if (!enumerate_x0) {
      out.push_back({dummy_x0, x1, wi});
    } else {
      for (std::size_t i0 = 0; i0 < states_; ++i0) {
        out.push_back({decode_state(i0, d, L), x1, wi * x0_w});
      }
    }
  }
  return out;
}

Eigen::MatrixXd ExactPosterior::predict(const TokenSeq& xt, double t,
                                        const TokenSeq& cond) const {
  const int d = task_.vocab();
  const int L = task_.length();
  const Eigen::VectorXd k = kappa(spec_.schedule, t);

  // Per-position likelihood of the observed x_t token: a constant part from
  // the source/middle components plus the target spike at x_t itself. A delta
  // source with uniform x_0 contributes kappa_src/d, identical to the uniform
  // source component.
  Eigen::VectorXd base(L);
  const double k_src = k[spec_.schedule.source_index()];
  const double k_tgt = k[spec_.schedule.target_index()];
  const int mid_j = spec_.schedule.mid_index();
  for (int i = 0; i < L; ++i) {
    double b = 0.0;
    if (k_src != 0.0) {
      if (spec_.source == SourceKind::conditioned) {
        b += k_src * spec_.source_model->probs(cond, i)[xt[i]];
      } else {
        b += k_src / d;
      }
    }
    if (mid_j >= 0 && k[mid_j] != 0.0) {
      b += k[mid_j] * spec_.mid->probs(cond, i)[xt[i]];
    }
    base[i] = b;
  }

  const Eigen::VectorXd w = target_weights(cond);
  Eigen::MatrixXd post = Eigen::MatrixXd::Zero(L, d);
  for (std::size_t idx = 0; idx < states_; ++idx) {
    const double wi = w[static_cast<Eigen::Index>(idx)];
    if (wi == 0.0) continue;
    const TokenSeq x1 = decode_state(idx, d, L);
    double lik = wi;
    for (int i = 0; i < L; ++i) {
      lik *= base[i] + (x1[i] == xt[i] ? k_tgt : 0.0);
    }
    if (lik == 0.0) continue;
    for (int i = 0; i < L; ++i) post(i, x1[i]) += lik;
  }
  for (int i = 0; i < L; ++i) {
    const double s = post.row(i).sum();
    if (s > 0.0) {
      post.row(i) /= s;
    } else {
      post.row(i).setConstant(1.0 / d);  // x_t impossible under the task
    }
  }
  return post;
}

// --- TabularModel ------------------------------------------------------------

TabularModel::TabularModel(int vocab, int length, int time_buckets,
                           int features)
    : vocab_(vocab),
      length_(length),
      buckets_(time_buckets),
      features_(features > 0 ? features : vocab + 1) {
  Vocabulary v(vocab);
  if (length < 1 || time_buckets < 1 || features_ < 2) {
    throw DomainError("bad tabular model shape");
  }
  logits = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(buckets_) * length_ * features_ * vocab_,
      vocab_);
}

int TabularModel::bucket_of(double t) const {
  if (!(t >= 0.0 && t <= 1.0)) throw DomainError("time outside [0,1]");
  const int b = static_cast<int>(t * buckets_);
  return b >= buckets_ ? buckets_ - 1 : b;
}

int TabularModel::feature_of(const TokenSeq& condition, int position) const {
  if (condition.empty()) return features_ - 1;  // dropped conditioning
  return condition[position] % (features_ - 1);
}

Eigen::Index TabularModel::row_index(int bucket, int position, int feature,
                                     Token current) const {
  return ((static_cast<Eigen::Index>(bucket) * length_ + position) * features_ +
          feature) *
             vocab_ +
         current;
}

Eigen::VectorXd TabularModel::soft_logits(
    int bucket, int position, int feature,
    const Eigen::VectorXd& input_weights) const {
  Eigen::VectorXd s = Eigen::VectorXd::Zero(vocab_);
  for (int v = 0; v < vocab_; ++v) {
    if (input_weights[v] == 0.0) continue;
    s += input_weights[v] * logits.row(row_index(bucket, position, feature, v))
                                .transpose();
  }
  return s;
}

Eigen::MatrixXd TabularModel::predict(const TokenSeq& xt, double t,
                                      const TokenSeq& condition) const {
  const int b = bucket_of(t);
  Eigen::MatrixXd out(length_, vocab_);
  for (int i = 0; i < length_; ++i) {
    const int f = feature_of(condition, i);
    out.row(i) =
        softmax(logits.row(row_index(b, i, f, xt[i])).transpose()).transpose();
  }
  return out;
}

// --- MidModel ----------------------------------------------------------------

MidModel::MidModel(int vocab, int length, int features)
    : vocab_(vocab),
      length_(length),
      features_(features > 0 ? features : vocab + 1) {
  Vocabulary v(vocab);
  if (length < 1 || features_ < 2) throw DomainError("bad mid model shape");
  logits = Eigen::MatrixXd::Zero(
      static_cast<Eigen::Index>(length_) * features_, vocab_);
}

int MidModel::feature_of(const TokenSeq& condition, int position) const {
  if (condition.empty()) return features_ - 1;
  return condition[position] % (features_ - 1);
}

Eigen::Index MidModel::row_index(int position, int feature) const {
  return static_cast<Eigen::Index>(position) * features_ + feature;
}

Eigen::VectorXd MidModel::logit_row(const TokenSeq& condition,
                                    int position) const {
  return logits.row(row_index(position, feature_of(condition, position)))
      .transpose();
}

Eigen::VectorXd MidModel::probs(const TokenSeq& condition, int position) const {
  return softmax(logit_row(condition, position));
}

// --- losses ------------------------------------------------------------------

double cdfm_loss(const PosteriorModel& model,
                 const std::vector<PathSample>& batch) {
  if (batch.empty()) throw PreconditionError("empty batch");
  double total = 0.0;
  for (const PathSample& s : batch) {
    const Eigen::MatrixXd rows = model.predict(s.xt, s.t, s.condition);
    for (int i = s.frozen_prefix_len; i < static_cast<int>(s.x1.size()); ++i) {
      total -= safe_log(rows(i, s.x1[i]));
    }
  }
  return total / static_cast<double>(batch.size());
}

double mid_loss(const MidModel& mid,
                const std::vector<std::pair<TokenSeq, TokenSeq>>& batch) {
  if (batch.empty()) throw PreconditionError("empty batch");
  double total = 0.0;
  for (const auto& [cond, x1] : batch) {
    for (int i = 0; i < static_cast<int>(x1.size()); ++i) {
      total -= safe_log(mid.probs(cond, i)[x1[i]]);
    }
  }
  return total / static_cast<double>(batch.size());
}

// --- training ----------------------------------------------------------------

namespace {

enum class LearnRole { none, mid, source };

struct SparseGrad {
  std::vector<std::pair<Eigen::Index, Eigen::VectorXd>> rows;
  void add(Eigen::Index row, Eigen::VectorXd g) {
    rows.emplace_back(row, std::move(g));
  }
  void apply(Eigen::MatrixXd& params, double scale) {
    for (auto& [r, g] : rows) params.row(r) -= scale * g.transpose();
    rows.clear();
  }
};

}  // namespace

TrainResult train_toy(const Task& task, const PathSpec& spec,
                      TabularModel& model, MidModel* learnable,
                      const TrainConfig& cfg, RngHandle rng) {
  spec.validate();
  if (cfg.steps < 1 || !(cfg.lr > 0.0) || cfg.batch < 1) {
    throw DomainError("training needs positive steps, lr and batch size");
  }
  const int d = task.vocab();
  const int L = task.length();
  if (model.vocab() != d || model.length() != L) {
    throw DimensionError("model shape does not match the task");
  }

  LearnRole role = LearnRole::none;
  if (learnable != nullptr) {
    if (spec.mid == learnable) {
      role = LearnRole::mid;
    } else if (spec.source_model == learnable) {
      role = LearnRole::source;
    } else {
      throw PreconditionError(
          "learnable model is not a component of the path spec");
    }
  }

  SparseGrad theta_grad;
  SparseGrad psi_grad;
  TrainResult result;
  result.loss_curve.reserve(cfg.steps);

  for (int step = 0; step < cfg.steps; ++step) {
    double objective = 0.0;
    for (int b = 0; b < cfg.batch; ++b) {
      SamplePair pair = sample_pair(task, rng);
      const TokenSeq& x1 = pair.reference;
      const bool dropped = rng.next_double() < cfg.condition_dropout;
      const TokenSeq cond_used =
          dropped ? TokenSeq{} : pair.condition.tokens;

      int prefix_len = 0;
      if (cfg.prefix_prob > 0.0 && rng.next_double() < cfg.prefix_prob) {
        prefix_len = 1 + static_cast<int>(rng.next_below(std::max(1, L / 2)));
      }
      const double t = rng.next_double();
      const int bucket = model.bucket_of(t);

      TokenSeq x0(L, 0);
      if (spec.source == SourceKind::delta) {
        for (int i = 0; i < L; ++i) {
          x0[i] = static_cast<Token>(rng.next_below(d));
        }
      }

      // The model always sees hard tokens, exactly as at inference. With a
      // learnable component the hard token is the Gumbel-max draw of the
      // relaxed sample, and the backward pass flows through the relaxation
      // (straight-through estimator).
      TokenSeq xt(L);
      RelaxedSample relaxed;
      const bool soft = role != LearnRole::none;
      if (soft) {
        Eigen::MatrixXd learn_logits(L, d);
        for (int i = 0; i < L; ++i) {
          learn_logits.row(i) = learnable->logit_row(cond_used, i).transpose();
        }
        if (role == LearnRole::mid) {
          relaxed = sample_xt_relaxed(spec, t, x0, x1, learn_logits,
                                      cfg.gumbel_temperature, rng);
        } else {
          const Eigen::VectorXd k = kappa(spec.schedule, t);
          Eigen::MatrixXd fixed = Eigen::MatrixXd::Zero(L, d);
          for (int i = 0; i < L; ++i) {
            fixed(i, x1[i]) += k[spec.schedule.target_index()];
          }
          relaxed = relaxed_mixture_sample(
              fixed, k[spec.schedule.source_index()], learn_logits,
              cfg.gumbel_temperature, rng);
        }
        xt = relaxed.hard;
      } else {
        xt = sample_xt(spec, t, x0, x1, cond_used, rng, prefix_len);
      }

      Eigen::MatrixXd grad_weights = Eigen::MatrixXd::Zero(L, d);
      for (int i = 0; i < L; ++i) {
        // Frozen positions are deterministically known; no loss, no gradient.
        if (i < prefix_len) continue;
        const int f = model.feature_of(cond_used, i);
        const Eigen::Index row = model.row_index(bucket, i, f, xt[i]);
        const Eigen::VectorXd p = softmax(model.logits.row(row).transpose());
        objective -= safe_log(p[x1[i]]);

        Eigen::VectorXd delta = p;
        delta[x1[i]] -= 1.0;
        if (soft) {
          for (int v = 0; v < d; ++v) {
            grad_weights(i, v) =
                model.logits.row(model.row_index(bucket, i, f, v)) * delta;
          }
        }
        theta_grad.add(row, std::move(delta));
      }

      if (soft) {
        const Eigen::MatrixXd glog = relaxed.backprop(grad_weights);
        for (int i = 0; i < L; ++i) {
          if (glog.row(i).isZero(0.0)) continue;
          psi_grad.add(
              learnable->row_index(i, learnable->feature_of(cond_used, i)),
              glog.row(i).transpose());
        }
      }

      // Auxiliary cross entropy straight on the learnable logits.
      if (learnable != nullptr) {
        for (int i = 0; i < L; ++i) {
          const Eigen::VectorXd pm =
              softmax(learnable->logit_row(cond_used, i));
          objective -= safe_log(pm[x1[i]]);
          Eigen::VectorXd delta = pm;
          delta[x1[i]] -= 1.0;
          psi_grad.add(
              learnable->row_index(i, learnable->feature_of(cond_used, i)),
              std::move(delta));
        }
      }
    }

    objective /= cfg.batch;
    if (!std::isfinite(objective)) {
      throw TrainingDivergedError("loss became non-finite at step " +
                                  std::to_string(step));
    }
    result.loss_curve.push_back(objective);
    theta_grad.apply(model.logits, cfg.lr / cfg.batch);
    if (learnable != nullptr) psi_grad.apply(learnable->logits, cfg.lr / cfg.batch);
  }

  const int window = std::max(1, cfg.steps / 10);
  double s0 = 0.0, s1 = 0.0;
  for (int i = 0; i < window; ++i) {
    s0 += result.loss_curve[i];
    s1 += result.loss_curve[cfg.steps - 1 - i];
  }
  result.smoothed_start = s0 / window;
  result.smoothed_end = s1 / window;
  return result;
}

// --- checkpoints -------------------------------------------------------------

namespace {

void write_matrix(std::ofstream& out, const Eigen::MatrixXd& m) {
  char buf[32];
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(r, c));
      out << buf << (c + 1 == m.cols() ? '\n' : ' ');
    }
  }
}

void read_matrix(std::ifstream& in, Eigen::MatrixXd& m) {
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      if (!(in >> m(r, c))) {
        throw UsageError("truncated checkpoint file");
      }
    }
  }
}

void expect_key(std::ifstream& in, const std::string& key, int& value) {
  std::string k;
  if (!(in >> k >> value) || k != key) {
    throw UsageError("malformed checkpoint header, expected " + key);
  }
}

}  // namespace

void save_tabular(const std::string& path, const TabularModel& model) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write checkpoint: " + path);
  out << "drax-tabular-v1\n";
  out << "vocab " << model.vocab() << "\n";
  out << "length " << model.length() << "\n";
  out << "buckets " << model.buckets() << "\n";
  out << "features " << model.features() << "\n";
  write_matrix(out, model.logits);
}

TabularModel load_tabular(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open checkpoint: " + path);
  std::string magic;
  in >> magic;
  if (magic != "drax-tabular-v1") {
    throw UsageError("not a tabular checkpoint: " + path);
  }
  int vocab, length, buckets, features;
  expect_key(in, "vocab", vocab);
  expect_key(in, "length", length);
  expect_key(in, "buckets", buckets);
  expect_key(in, "features", features);
  TabularModel model(vocab, length, buckets, features);
  read_matrix(in, model.logits);
  return model;
}

void save_mid(const std::string& path, const MidModel& model) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write checkpoint: " + path);
  out << "drax-mid-v1\n";
  out << "vocab " << model.vocab() << "\n";
  out << "length " << model.length() << "\n";
  out << "features " << model.features() << "\n";
  write_matrix(out, model.logits);
}

MidModel load_mid(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw UsageError("cannot open checkpoint: " + path);
  std::string magic;
  in >> magic;
  if (magic != "drax-mid-v1") {
    throw UsageError("not a mid checkpoint: " + path);
  }
  int vocab, length, features;
  expect_key(in, "vocab", vocab);
  expect_key(in, "length", length);
  expect_key(in, "features", features);
  MidModel model(vocab, length, features);
  read_matrix(in, model.logits);
  return model;
}

}  // namespace drax
