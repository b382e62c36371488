// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/scheduler.hpp"

#include <cmath>
#include <string>

namespace drax {

namespace {

constexpr double kZeroWeight = 1e-12;

void check_time(double t) {
  if (!(t >= 0.0 && t <= 1.0)) {
    throw DomainError("time " + std::to_string(t) + " outside [0,1]");
  }
}

// Natural cubic spline second derivatives (zero curvature at both ends).
Eigen::VectorXd spline_second_derivatives(const std::vector<double>& x,
                                          const Eigen::VectorXd& y) {
  const int n = static_cast<int>(x.size());
  Eigen::VectorXd m = Eigen::VectorXd::Zero(n);
  if (n < 3) return m;
  Eigen::VectorXd a(n), b(n), c(n), r(n);
  a[0] = 0;
  b[0] = 1;
  c[0] = 0;
  r[0] = 0;
  for (int i = 1; i < n - 1; ++i) {
    const double h0 = x[i] - x[i - 1];
    const double h1 = x[i + 1] - x[i];
    a[i] = h0;
    b[i] = 2.0 * (h0 + h1);
    c[i] = h1;
    r[i] = 6.0 * ((y[i + 1] - y[i]) / h1 - (y[i] - y[i - 1]) / h0);
  }
  a[n - 1] = 0;
  b[n - 1] = 1;
  c[n - 1] = 0;
  r[n - 1] = 0;
  // Thomas algorithm.
  for (int i = 1; i < n; ++i) {
    const double w = a[i] / b[i - 1];
    b[i] -= w * c[i - 1];
    r[i] -= w * r[i - 1];
  }
  m[n - 1] = r[n - 1] / b[n - 1];
  for (int i = n - 2; i >= 0; --i) m[i] = (r[i] - c[i] * m[i + 1]) / b[i];
  return m;
}

int spline_interval(const std::vector<double>& x, double t) {
  int lo = 0;
  int hi = static_cast<int>(x.size()) - 1;
  while (hi - lo > 1) {
    const int mid = (lo + hi) / 2;
    if (x[mid] <= t) {
      lo = mid;
    } else {
      hi = mid;
    }
  }
  return lo;
}

double spline_value(const std::vector<double>& x, const Eigen::VectorXd& y,
                    const Eigen::VectorXd& m, double t) {
  const int i = spline_interval(x, t);
  const double h = x[i + 1] - x[i];
  const double A = (x[i + 1] - t) / h;
  const double B = (t - x[i]) / h;
  return A * y[i] + B * y[i + 1] +
         ((A * A * A - A) * m[i] + (B * B * B - B) * m[i + 1]) * h * h / 6.0;
}

double spline_derivative(const std::vector<double>& x, const Eigen::VectorXd& y,
                         const Eigen::VectorXd& m, double t) {
  const int i = spline_interval(x, t);
  const double h = x[i + 1] - x[i];
  const double A = (x[i + 1] - t) / h;
  const double B = (t - x[i]) / h;
  return (y[i + 1] - y[i]) / h - (3.0 * A * A - 1.0) / 6.0 * h * m[i] +
         (3.0 * B * B - 1.0) / 6.0 * h * m[i + 1];
}

}  // namespace

int Schedule::components() const {
  switch (kind) {
    case ScheduleKind::two_way_linear:
      return 2;
    case ScheduleKind::tri_factorized:
      return 3;
    case ScheduleKind::custom_tabulated:
      return static_cast<int>(table.cols());
  }
  return 0;
}

Schedule Schedule::two_way_linear() {
  Schedule s;
  s.kind = ScheduleKind::two_way_linear;
  return s;
}

Schedule Schedule::tri_factorized(double p, double q) {
  if (!(p > 0.0) || !(q > 0.0)) {
    throw DomainError("tri_factorized requires positive exponents p, q");
  }
  Schedule s;
  s.kind = ScheduleKind::tri_factorized;
  s.p = p;
  s.q = q;
  return s;
}

Schedule Schedule::tabulated(std::vector<double> t, Eigen::MatrixXd kappas) {
  const int n = static_cast<int>(t.size());
  if (n < 2 || kappas.rows() != n) {
    throw DimensionError("tabulated schedule needs matching knots and rows");
  }
  const int m = static_cast<int>(kappas.cols());
  if (m < 2 || m > 3) {
    throw UnsupportedScheduleError("schedules have 2 or 3 components");
  }
  if (std::abs(t.front()) > 1e-12 || std::abs(t.back() - 1.0) > 1e-12) {
    throw DomainError("tabulated knots must span [0,1]");
  }
  for (int i = 1; i < n; ++i) {
    if (!(t[i] > t[i - 1])) throw DomainError("knots must increase strictly");
  }
  for (int i = 0; i < n; ++i) {
    if (std::abs(kappas.row(i).sum() - 1.0) > 1e-9 ||
        kappas.row(i).minCoeff() < -1e-12) {
      throw InvalidDistributionError("tabulated kappa row " +
                                     std::to_string(i) + " is not a mixture");
    }
  }
  if (std::abs(kappas(0, 0) - 1.0) > 1e-9 ||
      std::abs(kappas(n - 1, m - 1) - 1.0) > 1e-9) {
    throw DomainError("tabulated schedule must start at source, end at target");
  }
  Schedule s;
  s.kind = ScheduleKind::custom_tabulated;
  s.knots = std::move(t);
  s.table = std::move(kappas);
  s.spline_m.resize(n, m);
  for (int j = 0; j < m; ++j) {
    s.spline_m.col(j) = spline_second_derivatives(s.knots, s.table.col(j));
  }
  // Splines can dip below zero between knots; reject such tables up front.
  for (int k = 0; k <= 1000; ++k) {
    const double tt = k / 1000.0;
    for (int j = 0; j < m; ++j) {
      if (spline_value(s.knots, s.table.col(j), s.spline_m.col(j), tt) <
          -1e-9) {
        throw InvalidDistributionError(
            "tabulated schedule goes negative between knots");
      }
    }
  }
  return s;
}

Eigen::VectorXd kappa(const Schedule& sched, double t) {
  check_time(t);
  switch (sched.kind) {
    case ScheduleKind::two_way_linear: {
      Eigen::VectorXd k(2);
      k << 1.0 - t, t;
      return k;
    }
    case ScheduleKind::tri_factorized: {
      const double s = 1.0 - std::pow(t, sched.p);
      const double r = std::pow(t, sched.q);
      Eigen::VectorXd k(3);
      k << (1.0 - r) * s, r * s, 1.0 - s;
      return k;
    }
    case ScheduleKind::custom_tabulated: {
      const int m = sched.components();
      Eigen::VectorXd k(m);
      for (int j = 0; j < m; ++j) {
        k[j] = spline_value(sched.knots, sched.table.col(j),
                            sched.spline_m.col(j), t);
      }
      return k;
    }
  }
  throw UnsupportedScheduleError("unknown schedule kind");
}

Eigen::VectorXd kappa_dot(const Schedule& sched, double t) {
  check_time(t);
  switch (sched.kind) {
    case ScheduleKind::two_way_linear: {
      Eigen::VectorXd k(2);
      k << -1.0, 1.0;
      return k;
    }
    case ScheduleKind::tri_factorized: {
      const double p = sched.p;
      const double q = sched.q;
      const double s = 1.0 - std::pow(t, p);
      const double r = std::pow(t, q);
      const double sd = -p * std::pow(t, p - 1.0);
      const double rd = q * std::pow(t, q - 1.0);
      Eigen::VectorXd k(3);
      k << -rd * s + (1.0 - r) * sd, rd * s + r * sd, -sd;
      return k;
    }
    case ScheduleKind::custom_tabulated: {
      const int m = sched.components();
      Eigen::VectorXd k(m);
      for (int j = 0; j < m; ++j) {
        k[j] = spline_derivative(sched.knots, sched.table.col(j),
                                 sched.spline_m.col(j), t);
      }
      return k;
    }
  }
  throw UnsupportedScheduleError("unknown schedule kind");
}

VelocityCoeffs velocity_coeffs(const Schedule& sched, double t) {
  if (t <= 0.0 || t >= 1.0) {
    throw SingularityError(
        "velocity coefficients are singular at the path endpoints (t = " +
        std::to_string(t) + ")");
  }
  const Eigen::VectorXd k = kappa(sched, t);
  const Eigen::VectorXd kd = kappa_dot(sched, t);
  const int m = static_cast<int>(k.size());

  int ell = -1;
  double best = 0.0;
  for (int j = 0; j < m; ++j) {
    if (k[j] <= kZeroWeight) continue;  // ratio undefined at zero weight
    const double ratio = kd[j] / k[j];
    if (ell < 0 || ratio < best) {
      ell = j;
      best = ratio;
    }
  }
  if (ell < 0) {
    throw SingularityError("no component with positive weight at t = " +
                           std::to_string(t));
  }

  VelocityCoeffs out;
  out.t = t;
  out.ell = ell;
  out.beta = best;
  out.alpha = Eigen::VectorXd::Zero(m);
  for (int j = 0; j < m; ++j) {
    if (j == ell) continue;
    out.alpha[j] = k[j] <= kZeroWeight ? kd[j] : kd[j] - k[j] * out.beta;
  }
  return out;
}

double mid_peak(const Schedule& sched) {
  if (sched.kind != ScheduleKind::tri_factorized) {
    throw UnsupportedScheduleError("mid_peak requires a tri_factorized schedule");
  }
  return std::pow(sched.q / (sched.p + sched.q), 1.0 / sched.p);
}

}  // namespace drax
