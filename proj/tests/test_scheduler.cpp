// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include <doctest.h>

#include "drax/scheduler.hpp"

using namespace drax;

TEST_SUITE_BEGIN("scheduler");

namespace {

const double kDefaultP = 2.0;  // the shipped tri exponents
const double kDefaultQ = 2.0 / 3.0;

Schedule default_tri() { return Schedule::tri_factorized(kDefaultP, kDefaultQ); }

}  // namespace

TEST_CASE("tri boundary conditions") {
  const Schedule s = default_tri();
  const Eigen::VectorXd k0 = kappa(s, 0.0);
  CHECK(k0[0] == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(k0[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(k0[2] == doctest::Approx(0.0).epsilon(1e-12));
  const Eigen::VectorXd k1 = kappa(s, 1.0);
  CHECK(k1[0] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(k1[1] == doctest::Approx(0.0).epsilon(1e-12));
  CHECK(k1[2] == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("tri weights at the midpoint") {
  // Closed forms evaluated at high precision: kappa_target = 0.25,
  // kappa_mid = 0.5^(2/3) * 0.75, kappa_source = the remainder.
  const Eigen::VectorXd k = kappa(default_tri(), 0.5);
  CHECK(k[2] == doctest::Approx(0.25).epsilon(1e-12));
  CHECK(k[1] == doctest::Approx(0.47247039371057745).epsilon(1e-12));
  CHECK(k[0] == doctest::Approx(0.27752960628942255).epsilon(1e-12));
}

TEST_CASE("two-way linear weights and derivatives") {
  const Schedule s = Schedule::two_way_linear();
  for (double t : {0.1, 0.5, 0.9}) {
    const Eigen::VectorXd k = kappa(s, t);
    CHECK(k[0] == doctest::Approx(1.0 - t));
    CHECK(k[1] == doctest::Approx(t));
    const Eigen::VectorXd kd = kappa_dot(s, t);
    CHECK(kd[0] == -1.0);
    CHECK(kd[1] == 1.0);
  }
}

TEST_CASE("weights sum to one and stay non-negative on a fine grid") {
  for (const Schedule& s : {Schedule::two_way_linear(), default_tri(),
                            Schedule::tri_factorized(1.0, 1.0)}) {
    for (int i = 0; i <= 1000; ++i) {
      const Eigen::VectorXd k = kappa(s, i / 1000.0);
      CHECK(std::abs(k.sum() - 1.0) <= 1e-9);
      CHECK(k.minCoeff() >= -1e-12);
    }
  }
}

TEST_CASE("time domain is checked") {
  CHECK_THROWS_AS(kappa(default_tri(), -0.01), DomainError);
  CHECK_THROWS_AS(kappa(default_tri(), 1.01), DomainError);
}

TEST_CASE("analytic derivatives match central finite differences") {
  const double fd_step = 1e-5;
  for (const Schedule& s : {Schedule::two_way_linear(), default_tri(),
                            Schedule::tri_factorized(1.5, 1.2)}) {
    for (int i = 1; i < 99; ++i) {
      const double t = 0.01 + (0.98 * i) / 99.0;
      const Eigen::VectorXd fd =
          (kappa(s, t + fd_step) - kappa(s, t - fd_step)) / (2.0 * fd_step);
      const Eigen::VectorXd kd = kappa_dot(s, t);
      CHECK((fd - kd).cwiseAbs().maxCoeff() <= 1e-6);
    }
  }
}

TEST_CASE("tri target derivative is 2t when p is 2") {
  const Schedule s = default_tri();
  for (double t : {0.2, 0.5, 0.8}) {
    CHECK(kappa_dot(s, t)[2] == doctest::Approx(2.0 * t).epsilon(1e-12));
  }
}

TEST_CASE("derivatives sum to zero") {
  const Schedule s = default_tri();
  for (double t : {0.3, 0.5, 0.7}) {
    CHECK(std::abs(kappa_dot(s, t).sum()) <= 1e-12);
  }
}

TEST_CASE("mid weight is unimodal on the grid") {
  const Schedule s = default_tri();
  int sign_changes = 0;
  double prev = kappa(s, 0.0005)[1];
  bool rising = true;
  for (int i = 1; i <= 1000; ++i) {
    const double cur = kappa(s, 0.0005 + 0.999 * i / 1000.0)[1];
    const bool now_rising = cur >= prev;
    if (rising && !now_rising) ++sign_changes;
    if (!rising && now_rising) ++sign_changes;
    rising = now_rising;
    prev = cur;
  }
  CHECK(sign_changes == 1);
}

TEST_CASE("two-way velocity coefficients in closed form") {
  const Schedule s = Schedule::two_way_linear();
  for (double t : {0.1, 0.4, 0.8}) {
    const VelocityCoeffs c = velocity_coeffs(s, t);
    CHECK(c.ell == 0);
    CHECK(c.beta == doctest::Approx(-1.0 / (1.0 - t)).epsilon(1e-12));
    CHECK(c.alpha[1] == doctest::Approx(1.0 / (1.0 - t)).epsilon(1e-12));
    CHECK(c.alpha[0] == 0.0);
  }
}

TEST_CASE("the source component is the reference rate for the factorized schedule") {
  const Schedule s = default_tri();
  for (int i = 1; i <= 9; ++i) {
    const VelocityCoeffs c = velocity_coeffs(s, i / 10.0);
    CHECK(c.ell == 0);
    CHECK(c.alpha[0] == 0.0);
  }
}

TEST_CASE("coefficients reconstruct from the weights") {
  for (const Schedule& s : {Schedule::two_way_linear(), default_tri()}) {
    for (double t : {0.2, 0.5, 0.9}) {
      const VelocityCoeffs c = velocity_coeffs(s, t);
      const Eigen::VectorXd k = kappa(s, t);
      const Eigen::VectorXd kd = kappa_dot(s, t);
      CHECK(c.beta == doctest::Approx(kd[c.ell] / k[c.ell]).epsilon(1e-12));
      for (int j = 0; j < k.size(); ++j) {
        if (j == c.ell) {
          CHECK(c.alpha[j] == 0.0);
        } else {
          CHECK(c.alpha[j] ==
                doctest::Approx(kd[j] - k[j] * c.beta).epsilon(1e-12));
        }
      }
    }
  }
}

TEST_CASE("velocity coefficients are singular at the endpoints") {
  CHECK_THROWS_AS(velocity_coeffs(default_tri(), 0.0), SingularityError);
  CHECK_THROWS_AS(velocity_coeffs(default_tri(), 1.0), SingularityError);
}

TEST_CASE("mid peak closed form") {
  CHECK(mid_peak(default_tri()) == 0.5);  // exact for p=2, q=2/3
  CHECK(mid_peak(Schedule::tri_factorized(1.0, 1.0)) == doctest::Approx(0.5));
  CHECK(mid_peak(Schedule::tri_factorized(2.0, 2.0)) ==
        doctest::Approx(0.7071067811865476).epsilon(1e-12));
  CHECK_THROWS_AS(mid_peak(Schedule::two_way_linear()),
                  UnsupportedScheduleError);
}

TEST_CASE("mid peak agrees with a dense grid argmax") {
  for (const Schedule& s :
       {default_tri(), Schedule::tri_factorized(1.7, 1.3)}) {
    const double peak = mid_peak(s);
    double best_t = 0.0, best = -1.0;
    const int n = 10000;
    for (int i = 0; i <= n; ++i) {
      const double t = static_cast<double>(i) / n;
      const double v = kappa(s, t)[1];
      if (v > best) {
        best = v;
        best_t = t;
      }
    }
    CHECK(std::abs(best_t - peak) <= 1.0 / n + 1e-12);
  }
}

TEST_CASE("tabulated schedules interpolate and differentiate consistently") {
  // Tabulating the linear schedule reproduces it exactly: the natural cubic
  // spline of linear data is linear.
  const int n = 21;
  std::vector<double> knots(n);
  Eigen::MatrixXd table(n, 2);
  for (int i = 0; i < n; ++i) {
    knots[i] = static_cast<double>(i) / (n - 1);
    table(i, 0) = 1.0 - knots[i];
    table(i, 1) = knots[i];
  }
  const Schedule s = Schedule::tabulated(knots, table);
  for (double t : {0.123, 0.5, 0.987}) {
    CHECK(kappa(s, t)[0] == doctest::Approx(1.0 - t).epsilon(1e-9));
    CHECK(kappa_dot(s, t)[0] == doctest::Approx(-1.0).epsilon(1e-9));
  }

  // A dense tabulation of the tri schedule stays close to the closed form.
  const int m = 201;
  std::vector<double> tk(m);
  Eigen::MatrixXd tri_table(m, 3);
  const Schedule tri = Schedule::tri_factorized(2.0, 1.0);
  for (int i = 0; i < m; ++i) {
    tk[i] = static_cast<double>(i) / (m - 1);
    tri_table.row(i) = kappa(tri, tk[i]).transpose();
  }
  const Schedule tabbed = Schedule::tabulated(tk, tri_table);
  for (double t : {0.2, 0.55, 0.81}) {
    CHECK((kappa(tabbed, t) - kappa(tri, t)).cwiseAbs().maxCoeff() <= 1e-6);
    CHECK((kappa_dot(tabbed, t) - kappa_dot(tri, t)).cwiseAbs().maxCoeff() <=
          1e-3);
  }

  // The spline's own derivative matches its finite differences everywhere.
  const double h = 1e-5;
  for (int i = 1; i < 99; ++i) {
    const double t = 0.01 + (0.98 * i) / 99.0;
    const Eigen::VectorXd fd =
        (kappa(tabbed, t + h) - kappa(tabbed, t - h)) / (2.0 * h);
    CHECK((fd - kappa_dot(tabbed, t)).cwiseAbs().maxCoeff() <= 1e-6);
  }
}

TEST_CASE("tabulated schedules validate their rows") {
  std::vector<double> knots{0.0, 0.5, 1.0};
  Eigen::MatrixXd bad(3, 2);
  bad << 1.0, 0.0, 0.3, 0.6, 0.0, 1.0;  // middle row sums to 0.9
  CHECK_THROWS_AS(Schedule::tabulated(knots, bad), InvalidDistributionError);
}

TEST_SUITE_END();
