// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <string>
#include <vector>

#include "drax/core.hpp"
#include "drax/posterior.hpp"
#include "drax/scheduler.hpp"

namespace drax {

/// Time-indexed generator over an enumerable state space (rows = origin
/// states, non-negative off-diagonals, zero row sums).
using RateFieldFn = std::function<Eigen::MatrixXd(double)>;

/// A true velocity field and a model velocity field over the same state
/// space, evaluated jointly so shared work (the exact posterior) is done
/// once per time point.
struct VelocityPair {
  int states = 0;
  std::function<std::pair<Eigen::MatrixXd, Eigen::MatrixXd>(double)> eval;

  static VelocityPair from_fields(int states, RateFieldFn truth,
                                  RateFieldFn model);
};

/// Distribution flow over the time grid; the density together with the
/// uniform time weight is the occupancy measure on [0,1] x S.
struct Occupancy {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> density;
};

struct MasterTrajectory {
  Occupancy occupancy;
  double max_drift = 0.0;  // renormalization drift per step, recorded
};

/// RK4 integration of dp/dt = Q(t)^T p on a uniform grid of `grid_points`
/// intervals. Each output is clamped and renormalized; drift beyond 1e-6
/// raises RefineGridError.
MasterTrajectory integrate_master(const Eigen::VectorXd& p0,
                                  const RateFieldFn& field, int grid_points);

/// Both master equations of a pair plus the pointwise statistics the bounds
/// are built from.
struct PairTrajectories {
  std::vector<double> times;
  std::vector<Eigen::VectorXd> p, q;  // truth / model distributions
  std::vector<double> tv;             // TV(q_t, p_t)
  std::vector<double> err_q;          // E_{q_t} sum_{z!=x} |Delta(x,z)|
  std::vector<double> err_p;          // same under p_t
  std::vector<double> err_inf;        // max_x row-l1 of |Delta|
  double max_drift = 0.0;
};

PairTrajectories integrate_pair(const VelocityPair& pair,
                                const Eigen::VectorXd& p0, int grid_points);

struct CheckFragment {
  double min_slack = 0.0;  // min over evaluated points of rhs - lhs
  double tolerance = 0.0;  // quadrature/finite-difference estimate + 1e-4
  double tightness = 0.0;  // max lhs/rhs over evaluated points (reported)
  bool pass = false;
};

/// TV stability: TV(q_s, p_s) <= integral_0^s E_{q_t}[row-l1 Delta] dt.
CheckFragment check_claim1(const VelocityPair& pair, const Eigen::VectorXd& p0,
                           int grid_points);
CheckFragment claim1_fragment(const PairTrajectories& traj);

/// Instantaneous growth: d/dt TV <= intrinsic error + domain-gap term.
struct Corollary1Fragment : CheckFragment {
  double intrinsic_at_worst = 0.0;
  double domain_gap_at_worst = 0.0;
};
Corollary1Fragment check_corollary1(const VelocityPair& pair,
                                    const Eigen::VectorXd& p0,
                                    int grid_points);
Corollary1Fragment corollary1_fragment(const PairTrajectories& traj);

/// Occupancy TV: E_t TV(q_t,p_t) equals the occupancy TV (an identity,
/// checked by two quadratures) and is bounded by the (1-t)-weighted integral.
struct OccupancyFragment : CheckFragment {
  double occupancy_tv = 0.0;
  double mean_tv = 0.0;
  double equality_gap = 0.0;  // |trapezoid - Simpson| of the same object
  double weighted_bound = 0.0;
};
OccupancyFragment check_occupancy_tv(const VelocityPair& pair,
                                     const Eigen::VectorXd& p0,
                                     int grid_points);
OccupancyFragment occupancy_fragment(const PairTrajectories& traj);

/// Bounded losses on [0,1] x S, sampled on the trajectory grid.
using LossFn = std::function<double(double t, std::size_t state)>;

struct Theorem1Fragment : CheckFragment {
  double selector_gap = 0.0;  // slack of the first inequality under the
                              // sign-selector loss; tight within tolerance
  int losses_checked = 0;
};

/// Generalization bound: E_gen[l] <= E_D[l] + B * occupancy TV
///                               <= E_D[l] + B * weighted velocity-error bound.
Theorem1Fragment check_theorem1(const VelocityPair& pair,
                                const Eigen::VectorXd& p0,
                                const std::vector<LossFn>& losses, double bound,
                                int grid_points);
Theorem1Fragment theorem1_fragment(const PairTrajectories& traj,
                                   const std::vector<LossFn>& losses,
                                   double bound);

/// True and learned velocity fields of an actual engine configuration: the
/// exact posterior versus a trained model on the same enumerable task.
/// Evaluation times are clamped to [t_clamp, 1 - t_clamp]; a trained
/// posterior keeps finite off-target mass, so its rates grow like 1/(1-t)
/// and clamping keeps the integration non-stiff. The bounds hold for any
/// pair of valid generator fields, clamped ones included.
VelocityPair drax_path_pair(const ExactPosterior& exact,
                            const PosteriorModel& model,
                            const TokenSeq& condition, double t_clamp = 2.5e-3);

// --- randomized verification harness -----------------------------------------

struct TheoryTrialResult {
  int trial = 0;
  int states = 0;
  double epsilon = 0.0;
  double claim1_slack = 0.0, claim1_tol = 0.0;
  double corollary1_slack = 0.0, corollary1_tol = 0.0;
  double occupancy_slack = 0.0, occupancy_tol = 0.0, prop1_gap = 0.0;
  double theorem1_slack = 0.0, theorem1_tol = 0.0, selector_gap = 0.0;
  bool pass = false;
};

/// One random engine-style pair: exact velocity of a random task/schedule as
/// the truth, a perturbed valid generator as the model. Modes cycle through
/// multiplicative, additive and combined perturbations.
VelocityPair make_random_pair(int dim, int len, double epsilon, int mode,
                              RngHandle rng);

TheoryTrialResult run_theory_trial(int trial, double eps_max, int grid_points,
                                   std::uint64_t seed);

std::vector<TheoryTrialResult> run_theory_trials(int trials, int grid_points,
                                                 double eps_max,
                                                 std::uint64_t seed,
                                                 int threads = 1);

void write_theory_jsonl(const std::string& path,
                        const std::vector<TheoryTrialResult>& results);
void write_theory_csv(const std::string& path,
                      const std::vector<TheoryTrialResult>& results);

}  // namespace drax
