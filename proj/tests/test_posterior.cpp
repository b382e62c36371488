// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "drax/posterior.hpp"

using namespace drax;

TEST_SUITE_BEGIN("posterior");

namespace {

Task plain_task(int d, int L, double sub, std::uint64_t seed = 3) {
  TaskConfig tc;
  tc.vocab = d;
  tc.length = L;
  tc.sub_rate = sub;
  tc.del_rate = tc.ins_rate = 0.0;
  tc.eot_reserved = false;
  tc.seed = seed;
  return Task::build(tc);
}

PathSpec uniform_two_way(int d) {
  PathSpec spec;
  spec.schedule = Schedule::two_way_linear();
  spec.vocab = d;
  spec.source = SourceKind::uniform;
  return spec;
}

// A posterior that predicts whatever token the state currently holds.
class EchoPosterior : public PosteriorModel {
 public:
  EchoPosterior(int d, int L) : d_(d), L_(L) {}
  Eigen::MatrixXd predict(const TokenSeq& xt, double,
                          const TokenSeq&) const override {
    Eigen::MatrixXd out = Eigen::MatrixXd::Zero(L_, d_);
    for (int i = 0; i < L_; ++i) out(i, xt[i]) = 1.0;
    return out;
  }
  int vocab() const override { return d_; }
  int length() const override { return L_; }

 private:
  int d_, L_;
};

std::vector<PathSample> true_path_batch(const Task& task, const PathSpec& spec,
                                        int n, RngHandle& rng) {
  std::vector<PathSample> batch;
  batch.reserve(n);
  for (int b = 0; b < n; ++b) {
    const SamplePair pair = sample_pair(task, rng);
    PathSample s;
    s.t = rng.next_double();
    s.x1 = pair.reference;
    s.condition = pair.condition.tokens;
    s.x0.assign(task.length(), 0);
    s.xt = sample_xt(spec, s.t, s.x0, s.x1, s.condition, rng);
    batch.push_back(std::move(s));
  }
  return batch;
}

}  // namespace

TEST_CASE("exact posterior is one-hot at t = 1") {
  const Task task = plain_task(3, 2, 0.2);
  const ExactPosterior exact(task, uniform_two_way(3));
  RngHandle rng(1, 1);
  const SamplePair pair = sample_pair(task, rng);
  const Eigen::MatrixXd post =
      exact.predict(pair.reference, 1.0, pair.condition.tokens);
  for (int i = 0; i < 2; ++i) {
    CHECK(post(i, pair.reference[i]) == doctest::Approx(1.0).epsilon(1e-9));
  }
}

TEST_CASE("exact posterior at t = 0 is the conditional target marginal") {
  const Task task = plain_task(3, 2, 0.2);
  const ExactPosterior exact(task, uniform_two_way(3));
  RngHandle rng(2, 5);
  const TokenSeq cond = sample_pair(task, rng).condition.tokens;
  const SeqDistribution target = exact.target_distribution(cond);

  Eigen::MatrixXd marginal = Eigen::MatrixXd::Zero(2, 3);
  for (std::size_t idx = 0; idx < 9; ++idx) {
    const TokenSeq x1 = decode_state(idx, 3, 2);
    for (int i = 0; i < 2; ++i) {
      marginal(i, x1[i]) += target.p[static_cast<Eigen::Index>(idx)];
    }
  }
  for (const TokenSeq& xt : {TokenSeq{0, 0}, TokenSeq{2, 1}}) {
    const Eigen::MatrixXd post = exact.predict(xt, 0.0, cond);
    CHECK((post - marginal).cwiseAbs().maxCoeff() <= 1e-9);
  }
}

TEST_CASE("exact posterior matches the closed form on two equal targets") {
  // d=2, L=1, uninformative channel, forced uniform prior: with a uniform
  // source the posterior after observing x_t = 0 at t = 0.5 is
  // (0.5*(0.25+0.5), 0.5*0.25) normalized = (0.75, 0.25).
  Task task = plain_task(2, 1, 0.5, 2);
  task.init << 0.5, 0.5;
  const ExactPosterior exact(task, uniform_two_way(2));
  const Eigen::MatrixXd post = exact.predict({0}, 0.5, {1});
  CHECK(post(0, 0) == doctest::Approx(0.75).epsilon(1e-12));
  CHECK(post(0, 1) == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("exact posterior refuses non-enumerable tasks") {
  TaskConfig tc;  // d=16, L=12 blows past the dense cap
  const Task task = Task::build(tc);
  CHECK_THROWS_AS(ExactPosterior(task, uniform_two_way(16)),
                  EnumerationCapError);
}

TEST_CASE("a perfect model has zero cross entropy") {
  const EchoPosterior echo(3, 2);
  std::vector<PathSample> batch;
  PathSample s;
  s.t = 0.9;
  s.x1 = {2, 1};
  s.xt = {2, 1};  // state already equals the clean sequence
  s.x0 = {0, 0};
  batch.push_back(s);
  CHECK(cdfm_loss(echo, batch) == 0.0);
}

TEST_CASE("the uniform model scores L log d") {
  const UniformPosterior uniform(4, 3);
  std::vector<PathSample> batch;
  PathSample s;
  s.t = 0.5;
  s.x1 = {0, 1, 2};
  s.xt = {3, 3, 3};
  s.x0 = {0, 0, 0};
  batch.push_back(s);
  CHECK(cdfm_loss(uniform, batch) ==
        doctest::Approx(4.1588830833596715).epsilon(1e-12));
}

TEST_CASE("frozen prefix positions are excluded from the loss") {
  const UniformPosterior uniform(4, 3);
  std::vector<PathSample> batch;
  PathSample s;
  s.t = 0.5;
  s.x1 = {0, 1, 2};
  s.xt = {0, 1, 3};
  s.x0 = {0, 0, 0};
  s.frozen_prefix_len = 2;
  batch.push_back(s);
  CHECK(cdfm_loss(uniform, batch) ==
        doctest::Approx(std::log(4.0)).epsilon(1e-12));
}

TEST_CASE("the exact posterior minimizes the cross entropy") {
  const Task task = plain_task(3, 2, 0.25, 7);
  const PathSpec spec = uniform_two_way(3);
  const ExactPosterior exact(task, spec);
  RngHandle rng(8, 3);
  const std::vector<PathSample> batch = true_path_batch(task, spec, 400, rng);

  const double exact_loss = cdfm_loss(exact, batch);
  CHECK(exact_loss <= cdfm_loss(UniformPosterior(3, 2), batch) + 1e-9);

  RngHandle model_rng(5, 5);
  for (int m = 0; m < 10; ++m) {
    TabularModel random_model(3, 2, 4);
    for (Eigen::Index r = 0; r < random_model.logits.rows(); ++r) {
      for (int v = 0; v < 3; ++v) {
        random_model.logits(r, v) = 2.0 * model_rng.next_double() - 1.0;
      }
    }
    CHECK(exact_loss <= cdfm_loss(random_model, batch) + 1e-9);
  }
}

TEST_CASE("mid loss hand values") {
  MidModel mid(4, 3);
  std::vector<std::pair<TokenSeq, TokenSeq>> batch{
      {TokenSeq{0, 0, 0}, TokenSeq{1, 2, 3}}};
  // Zero logits = uniform output.
  CHECK(mid_loss(mid, batch) ==
        doctest::Approx(4.1588830833596715).epsilon(1e-12));
  // Sharp logits at the clean tokens drive the loss to zero.
  for (int i = 0; i < 3; ++i) {
    const int f = mid.feature_of(batch[0].first, i);
    mid.logits(mid.row_index(i, f), batch[0].second[i]) = 60.0;
  }
  CHECK(mid_loss(mid, batch) < 1e-9);
}

TEST_CASE("analytic cross-entropy gradients match finite differences") {
  const Task task = plain_task(3, 2, 0.25, 13);
  const PathSpec spec = uniform_two_way(3);
  RngHandle rng(17, 4);
  const std::vector<PathSample> batch = true_path_batch(task, spec, 20, rng);

  TabularModel model(3, 2, 4);
  for (Eigen::Index r = 0; r < model.logits.rows(); ++r) {
    for (int v = 0; v < 3; ++v) {
      model.logits(r, v) = 2.0 * rng.next_double() - 1.0;
    }
  }

  // Analytic gradient assembled from the closed form (probability - one-hot).
  Eigen::MatrixXd grad = Eigen::MatrixXd::Zero(model.logits.rows(), 3);
  for (const PathSample& s : batch) {
    const int bucket = model.bucket_of(s.t);
    for (int i = 0; i < 2; ++i) {
      const int f = model.feature_of(s.condition, i);
      const Eigen::Index row = model.row_index(bucket, i, f, s.xt[i]);
      Eigen::VectorXd logits = model.logits.row(row).transpose();
      Eigen::VectorXd p = (logits.array() - logits.maxCoeff()).exp();
      p /= p.sum();
      p[s.x1[i]] -= 1.0;
      grad.row(row) += p.transpose() / batch.size();
    }
  }

  const double eps = 1e-5;
  int checked = 0;
  RngHandle pick(23, 1);
  while (checked < 20) {
    const Eigen::Index r =
        static_cast<Eigen::Index>(pick.next_below(model.logits.rows()));
    const int v = static_cast<int>(pick.next_below(3));
    TabularModel plus = model, minus = model;
    plus.logits(r, v) += eps;
    minus.logits(r, v) -= eps;
    const double fd = (cdfm_loss(plus, batch) - cdfm_loss(minus, batch)) /
                      (2.0 * eps);
    if (std::abs(fd) < 1e-8 && std::abs(grad(r, v)) < 1e-8) continue;
    CHECK(std::abs(fd - grad(r, v)) / std::max(1e-8, std::abs(fd)) < 1e-4);
    ++checked;
  }
}

TEST_CASE("training converges on a deterministic target") {
  // A cyclic deterministic chain with a fixed length: one clean sequence.
  Task task = plain_task(4, 3, 0.0, 1);
  task.init.setZero();
  task.init[1] = 1.0;
  task.trans.setZero();
  for (int i = 0; i < 4; ++i) task.trans(i, (i + 1) % 4) = 1.0;

  TabularModel model(4, 3, 4);
  PathSpec spec = uniform_two_way(4);
  TrainConfig cfg;
  cfg.steps = 5000;
  cfg.lr = 0.5;
  cfg.batch = 4;
  cfg.condition_dropout = 0.1;
  const TrainResult res =
      train_toy(task, spec, model, nullptr, cfg, RngHandle(3, 9));
  CHECK(res.smoothed_end < res.smoothed_start);

  RngHandle rng(31, 2);
  const std::vector<PathSample> batch = true_path_batch(task, spec, 200, rng);
  CHECK(cdfm_loss(model, batch) < 0.05);
}

TEST_CASE("full condition dropout learns the unconditional marginal") {
  const Task task = plain_task(4, 2, 0.15, 21);
  TabularModel model(4, 2, 16);
  PathSpec spec = uniform_two_way(4);
  TrainConfig cfg;
  cfg.steps = 20000;
  cfg.lr = 0.4;
  cfg.batch = 8;
  cfg.condition_dropout = 1.0;
  train_toy(task, spec, model, nullptr, cfg, RngHandle(4, 11));

  // Empirical per-position marginal of the clean references.
  Eigen::MatrixXd marginal = Eigen::MatrixXd::Zero(2, 4);
  RngHandle rng(6, 13);
  const int n = 20000;
  for (int s = 0; s < n; ++s) {
    const SamplePair pair = sample_pair(task, rng);
    for (int i = 0; i < 2; ++i) marginal(i, pair.reference[i]) += 1.0;
  }
  marginal /= n;

  // Early-time predictions averaged over the (uninformative) input token
  // reproduce the marginal; per-input rows keep a small Bayes tilt toward
  // their own token, which the average cancels.
  Eigen::MatrixXd pred = Eigen::MatrixXd::Zero(2, 4);
  for (Token v = 0; v < 4; ++v) {
    pred += 0.25 * model.predict({v, v}, 0.01, {});
  }
  for (int i = 0; i < 2; ++i) {
    const double tv = 0.5 * (pred.row(i) - marginal.row(i)).cwiseAbs().sum();
    CHECK(tv < 0.05);
  }
}

TEST_CASE("training rejects bad settings and reports divergence") {
  const Task task = plain_task(3, 2, 0.2);
  TabularModel model(3, 2, 4);
  PathSpec spec = uniform_two_way(3);
  TrainConfig cfg;
  cfg.steps = 0;
  CHECK_THROWS_AS(train_toy(task, spec, model, nullptr, cfg, RngHandle(1, 1)),
                  DomainError);
}

TEST_CASE("checkpoints round-trip bit for bit") {
  namespace fs = std::filesystem;
  TabularModel model(3, 2, 4);
  RngHandle rng(2, 2);
  for (Eigen::Index r = 0; r < model.logits.rows(); ++r) {
    for (int v = 0; v < 3; ++v) model.logits(r, v) = rng.next_double() * 3 - 1;
  }
  const std::string path = (fs::temp_directory_path() / "drax_ckpt.txt").string();
  save_tabular(path, model);
  const TabularModel loaded = load_tabular(path);
  CHECK(loaded.vocab() == 3);
  CHECK(loaded.buckets() == 4);
  CHECK((loaded.logits - model.logits).cwiseAbs().maxCoeff() == 0.0);

  // Re-saving the loaded model reproduces the file byte for byte.
  const std::string path2 = (fs::temp_directory_path() / "drax_ckpt2.txt").string();
  save_tabular(path2, loaded);
  std::ifstream a(path), b(path2);
  std::stringstream sa, sb;
  sa << a.rdbuf();
  sb << b.rdbuf();
  CHECK(sa.str() == sb.str());
  std::remove(path.c_str());
  std::remove(path2.c_str());

  MidModel mid(3, 2);
  mid.logits.setRandom();
  const std::string mpath = (fs::temp_directory_path() / "drax_mid.txt").string();
  save_mid(mpath, mid);
  const MidModel mloaded = load_mid(mpath);
  CHECK((mloaded.logits - mid.logits).cwiseAbs().maxCoeff() == 0.0);
  std::remove(mpath.c_str());

  CHECK_THROWS_AS(load_tabular(mpath), UsageError);
}

TEST_CASE("identical seeds produce identical trained models") {
  const Task task = plain_task(3, 2, 0.2, 5);
  PathSpec spec = uniform_two_way(3);
  TrainConfig cfg;
  cfg.steps = 300;
  TabularModel a(3, 2, 4), b(3, 2, 4);
  train_toy(task, spec, a, nullptr, cfg, RngHandle(12, 34));
  train_toy(task, spec, b, nullptr, cfg, RngHandle(12, 34));
  CHECK((a.logits - b.logits).cwiseAbs().maxCoeff() == 0.0);
}

TEST_SUITE_END();
