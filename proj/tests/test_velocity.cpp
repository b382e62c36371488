// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "drax/posterior.hpp"
#include "drax/velocity.hpp"

using namespace drax;

TEST_SUITE_BEGIN("velocity");

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

PathSpec uniform_spec(int d, Schedule sched, const ConditionedDist* mid = nullptr) {
  PathSpec spec;
  spec.schedule = std::move(sched);
  spec.vocab = d;
  spec.source = SourceKind::uniform;
  spec.mid = mid;
  return spec;
}

}  // namespace

TEST_CASE("a one-hot posterior at the current token gives a zero rate row") {
  const VelocityCoeffs c = velocity_coeffs(Schedule::two_way_linear(), 0.3);
  Eigen::VectorXd post = Eigen::VectorXd::Zero(4);
  post[2] = 1.0;
  const Eigen::VectorXd row = marginal_velocity(c, post, nullptr, 2, false);
  CHECK(row.cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("two-way rate row closed form at the midpoint") {
  const VelocityCoeffs c = velocity_coeffs(Schedule::two_way_linear(), 0.5);
  Eigen::VectorXd post(2);
  post << 0.3, 0.7;
  const Eigen::VectorXd row = marginal_velocity(c, post, nullptr, 0, false);
  CHECK(row[1] == doctest::Approx(1.4).epsilon(1e-12));
  CHECK(row[0] == doctest::Approx(-1.4).epsilon(1e-12));
}

TEST_CASE("dropping the middle term zeroes its contribution") {
  const VelocityCoeffs c =
      velocity_coeffs(Schedule::tri_factorized(2.0, 2.0 / 3.0), 0.5);
  Eigen::VectorXd post(3), mid(3);
  post << 0.2, 0.5, 0.3;
  mid << 0.6, 0.2, 0.2;
  const Eigen::VectorXd with = marginal_velocity(c, post, &mid, 0, true);
  const Eigen::VectorXd without = marginal_velocity(c, post, &mid, 0, false);
  const Eigen::VectorXd no_mid = marginal_velocity(c, post, nullptr, 0, false);
  CHECK((without - no_mid).cwiseAbs().maxCoeff() == 0.0);
  CHECK((with - without).cwiseAbs().maxCoeff() > 1e-9);
  // Both are still generator rows.
  validate_rate_row(with, 0);
  validate_rate_row(without, 0);
}

TEST_CASE("conditional velocity drops the reference component") {
  const Schedule sched = Schedule::tri_factorized(2.0, 2.0 / 3.0);
  FixedDist mid = FixedDist::uniform(4);
  const PathSpec spec = uniform_spec(4, sched, &mid);
  const VelocityCoeffs c = velocity_coeffs(sched, 0.5);
  REQUIRE(c.ell == 0);
  const TokenSeq x0{3, 3}, x1{1, 2};
  const Eigen::VectorXd row =
      conditional_velocity(c, spec, x0, x1, {}, 0, 0);
  validate_rate_row(row, 0);
  // With ell = source, off-diagonal mass comes only from the target spike
  // and the uniform middle; token 3 (= x0) receives no source bump.
  const double mid_share = c.alpha[1] / 4.0;
  CHECK(row[3] == doctest::Approx(mid_share).epsilon(1e-9));
  CHECK(row[1] == doctest::Approx(mid_share + c.alpha[2]).epsilon(1e-9));
}

TEST_CASE("current token equal to the target gives a zero two-way row") {
  const Schedule sched = Schedule::two_way_linear();
  const PathSpec spec = uniform_spec(3, sched);
  const VelocityCoeffs c = velocity_coeffs(sched, 0.4);
  const Eigen::VectorXd row =
      conditional_velocity(c, spec, {0}, {2}, {}, 2, 0);
  // alpha_target * delta_target cancels against beta * delta_z... both land
  // on the diagonal; off-diagonals carry nothing, so the row vanishes.
  CHECK(row.cwiseAbs().maxCoeff() <= 1e-12);
}

TEST_CASE("tri conditional rows sum to zero") {
  const Schedule sched = Schedule::tri_factorized(2.0, 2.0 / 3.0);
  FixedDist mid = FixedDist::uniform(5);
  const PathSpec spec = uniform_spec(5, sched, &mid);
  const VelocityCoeffs c = velocity_coeffs(sched, 0.5);
  for (Token z = 0; z < 5; ++z) {
    const Eigen::VectorXd row =
        conditional_velocity(c, spec, {0}, {3}, {}, z, 0);
    CHECK(std::abs(row.sum()) <= 1e-12);
    validate_rate_row(row, z);
  }
}

TEST_CASE("rate rows stay valid generator rows across the built-in schedules") {
  Eigen::VectorXd post(4), mid(4);
  post << 0.1, 0.2, 0.3, 0.4;
  mid << 0.25, 0.25, 0.4, 0.1;
  for (const Schedule& sched :
       {Schedule::two_way_linear(), Schedule::tri_factorized(2.0, 2.0 / 3.0)}) {
    for (int i = 1; i < 40; ++i) {
      const VelocityCoeffs c = velocity_coeffs(sched, i / 40.0);
      for (Token z = 0; z < 4; ++z) {
        validate_rate_row(
            marginal_velocity(c, post, sched.components() == 3 ? &mid : nullptr,
                              z, sched.components() == 3),
            z);
      }
    }
  }
}

TEST_CASE("euler step leaves the state unchanged under zero rates") {
  const TokenSeq state{1, 0, 2};
  RngHandle rng(4, 2);
  CHECK(euler_step(state, Eigen::MatrixXd::Zero(3, 4), 0.25, rng) == state);
}

TEST_CASE("euler transition frequency equals h times the rate") {
  const double r = 50.0, h = 1e-3;
  Eigen::MatrixXd rates = Eigen::MatrixXd::Zero(1, 3);
  rates(0, 1) = r;
  rates(0, 2) = 0.0;
  rates(0, 0) = -r;
  RngHandle rng(99, 1);
  int moved = 0;
  const int n = 1000000;
  for (int i = 0; i < n; ++i) {
    moved += euler_step({0}, rates, h, rng)[0] == 1;
  }
  const double freq = static_cast<double>(moved) / n;
  CHECK(std::abs(freq - h * r) < 7e-4);  // ~3 sigma of the binomial
}

TEST_CASE("an oversized step raises a step-size error") {
  Eigen::MatrixXd rates = Eigen::MatrixXd::Zero(1, 2);
  rates(0, 1) = 5.0;
  rates(0, 0) = -5.0;
  RngHandle rng(0, 0);
  CHECK_THROWS_AS(euler_step({0}, rates, 0.5, rng), StepSizeError);
  CHECK_NOTHROW(euler_step({0}, rates, 0.1, rng));
}

TEST_CASE("negative off-diagonal rates are rejected") {
  const VelocityCoeffs c = velocity_coeffs(Schedule::two_way_linear(), 0.5);
  VelocityCoeffs flipped = c;
  flipped.alpha[1] = -flipped.alpha[1];  // an invalid schedule would do this
  Eigen::VectorXd post(3);
  post << 0.2, 0.3, 0.5;
  CHECK_THROWS_AS(marginal_velocity(flipped, post, nullptr, 0, false),
                  InvalidRateError);
}

TEST_CASE("marginal velocity equals the posterior-weighted conditionals") {
  // Enumerable consistency of the mixture-velocity identity.
  const Task task = plain_task(3, 2, 0.2);
  FixedDist mid = FixedDist::uniform(3);
  for (bool tri : {false, true}) {
    const Schedule sched = tri ? Schedule::tri_factorized(2.0, 2.0 / 3.0)
                               : Schedule::two_way_linear();
    const PathSpec spec = uniform_spec(3, sched, tri ? &mid : nullptr);
    const ExactPosterior exact(task, spec);

    RngHandle rng(7, 1);
    const TokenSeq cond = sample_pair(task, rng).condition.tokens;
    Eigen::VectorXd weights = exact.target_weights(cond);
    weights /= weights.sum();

    for (double t : {0.25, 0.6}) {
      const VelocityCoeffs c = velocity_coeffs(sched, t);
      for (std::size_t zi = 0; zi < 9; ++zi) {
        const TokenSeq z = decode_state(zi, 3, 2);
        const Eigen::MatrixXd post = exact.predict(z, t, cond);

        // Joint posterior over the full clean sequence given the state.
        Eigen::VectorXd joint = Eigen::VectorXd::Zero(9);
        for (std::size_t xi = 0; xi < 9; ++xi) {
          const TokenSeq x1 = decode_state(xi, 3, 2);
          double lik = weights[static_cast<Eigen::Index>(xi)];
          for (int i = 0; i < 2; ++i) {
            lik *= conditional_prob(spec, t, {0, 0}, x1, cond, i).p[z[i]];
          }
          joint[static_cast<Eigen::Index>(xi)] = lik;
        }
        joint /= joint.sum();

        for (int i = 0; i < 2; ++i) {
          Eigen::VectorXd mid_row;
          const Eigen::VectorXd* mid_ptr = nullptr;
          if (tri) {
            mid_row = mid.probs(cond, i);
            mid_ptr = &mid_row;
          }
          const Eigen::VectorXd lhs = marginal_velocity(
              c, post.row(i).transpose(), mid_ptr, z[i], tri);
          Eigen::VectorXd rhs = Eigen::VectorXd::Zero(3);
          for (std::size_t xi = 0; xi < 9; ++xi) {
            if (joint[static_cast<Eigen::Index>(xi)] == 0.0) continue;
            rhs += joint[static_cast<Eigen::Index>(xi)] *
                   conditional_velocity(c, spec, {0, 0},
                                        decode_state(xi, 3, 2), cond, z[i], i);
          }
          CHECK((lhs - rhs).cwiseAbs().maxCoeff() <= 1e-9);
        }
      }
    }
  }
}

TEST_CASE("kolmogorov check: two-way point target") {
  const Task task = plain_task(2, 1, 0.5);
  const PathSpec spec = uniform_spec(2, Schedule::two_way_linear());
  const ExactPosterior exact(task, spec);
  const TokenSeq cond{0};
  const PosteriorFn fn = [&](const TokenSeq& z, double t) {
    return exact.predict(z, t, cond);
  };
  std::vector<double> grid;
  for (int i = 1; i <= 10; ++i) grid.push_back(i / 10.0);
  const double defect =
      kolmogorov_check(spec, fn, exact.coupling(cond), cond, grid);
  CHECK(defect < 1e-3);
}

TEST_CASE("kolmogorov check: tri schedule with a fixed middle") {
  const Task task = plain_task(3, 2, 0.25, 11);
  Eigen::VectorXd pm(3);
  pm << 0.5, 0.3, 0.2;
  FixedDist mid{pm};
  const PathSpec spec =
      uniform_spec(3, Schedule::tri_factorized(2.0, 2.0 / 3.0), &mid);
  const ExactPosterior exact(task, spec);
  RngHandle rng(21, 2);
  const TokenSeq cond = sample_pair(task, rng).condition.tokens;
  const PosteriorFn fn = [&](const TokenSeq& z, double t) {
    return exact.predict(z, t, cond);
  };
  std::vector<double> grid{0.2, 0.4, 0.6, 0.8, 1.0};
  const double defect =
      kolmogorov_check(spec, fn, exact.coupling(cond), cond, grid);
  CHECK(defect < 1e-3);
}

TEST_CASE("kolmogorov check: empty grid reports zero defect") {
  const Task task = plain_task(2, 1, 0.5);
  const PathSpec spec = uniform_spec(2, Schedule::two_way_linear());
  const ExactPosterior exact(task, spec);
  const PosteriorFn fn = [&](const TokenSeq& z, double t) {
    return exact.predict(z, t, {0});
  };
  CHECK(kolmogorov_check(spec, fn, exact.coupling({0}), {0}, {}) == 0.0);
}

TEST_SUITE_END();
