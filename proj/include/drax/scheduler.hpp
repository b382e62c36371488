// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <vector>

#include "drax/common.hpp"

namespace drax {

enum class ScheduleKind { two_way_linear, tri_factorized, custom_tabulated };

/// Time-dependent mixing weights kappa_j(t) of a 2- or 3-component mixture
/// path. Component order is [source, (middle,) target]; weights sum to 1,
/// with kappa_source(0) = 1 and kappa_target(1) = 1.
///
/// tri_factorized uses s(t) = 1 - t^p (overall source decay) and r(t) = t^q
/// (mass handover from middle to target):
///   kappa_target = 1 - s,  kappa_mid = r * s,  kappa_source = (1 - r) * s.
struct Schedule {
  ScheduleKind kind = ScheduleKind::two_way_linear;
  double p = 2.0;
  double q = 2.0 / 3.0;

  // custom_tabulated: natural cubic splines through (knots, table) rows.
  std::vector<double> knots;
  Eigen::MatrixXd table;     // rows = knots, cols = components
  Eigen::MatrixXd spline_m;  // spline second derivatives, same shape as table

  int components() const;
  int source_index() const { return 0; }
  int mid_index() const { return components() == 3 ? 1 : -1; }
  int target_index() const { return components() - 1; }

  static Schedule two_way_linear();
  static Schedule tri_factorized(double p, double q);
  /// Piecewise-cubic schedule through explicit (t, kappa) rows. Knots must
  /// start at 0, end at 1, increase strictly, and every row must satisfy the
  /// mixture invariants.
  static Schedule tabulated(std::vector<double> t, Eigen::MatrixXd kappas);
};

/// Component weights at time t in [0,1].
Eigen::VectorXd kappa(const Schedule& sched, double t);

/// Analytic d/dt of kappa; defined on the open interval (0,1).
Eigen::VectorXd kappa_dot(const Schedule& sched, double t);

/// Coefficients of the mixture velocity at one time:
///   beta = kdot_ell / kappa_ell,  alpha_j = kdot_j - kappa_j * beta,
/// with ell the component minimizing kdot_j / kappa_j (components at zero
/// weight are excluded from the argmin; their alpha is just kdot_j).
struct VelocityCoeffs {
  double t = 0.0;
  Eigen::VectorXd alpha;
  double beta = 0.0;
  int ell = 0;
};

VelocityCoeffs velocity_coeffs(const Schedule& sched, double t);

/// Argmax location of kappa_mid for tri_factorized, (q/(p+q))^(1/p).
double mid_peak(const Schedule& sched);

}  // namespace drax
