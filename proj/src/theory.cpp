// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/theory.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <memory>

#include "drax/parallel.hpp"
#include "drax/velocity.hpp"

namespace drax {

namespace {

constexpr double kSlackBase = 1e-4;

void check_generator(const Eigen::MatrixXd& Q, const char* which) {
  const Eigen::Index n = Q.rows();
  for (Eigen::Index x = 0; x < n; ++x) {
    double row = 0.0;
    for (Eigen::Index z = 0; z < n; ++z) {
      if (z != x && Q(x, z) < -1e-9) {
        throw InvalidRateError(std::string(which) +
                               " field has a negative off-diagonal rate");
      }
      row += Q(x, z);
    }
    if (std::abs(row) > 1e-8) {
      throw InvalidRateError(std::string(which) +
                             " field rows do not sum to zero");
    }
  }
}

// Row-wise l1 mass of the off-diagonal part of Delta.
Eigen::VectorXd offdiag_row_l1(const Eigen::MatrixXd& delta) {
  Eigen::VectorXd out = delta.cwiseAbs().rowwise().sum();
  out -= delta.diagonal().cwiseAbs();
  return out;
}

double trapezoid(const std::vector<double>& t, const std::vector<double>& f) {
  double acc = 0.0;
  for (std::size_t k = 1; k < t.size(); ++k) {
    acc += 0.5 * (f[k] + f[k - 1]) * (t[k] - t[k - 1]);
  }
  return acc;
}

// Every-second-point trapezoid; the coarse half of the refinement estimate.
double trapezoid_half(const std::vector<double>& t,
                      const std::vector<double>& f) {
  double acc = 0.0;
  for (std::size_t k = 2; k < t.size(); k += 2) {
    acc += 0.5 * (f[k] + f[k - 2]) * (t[k] - t[k - 2]);
  }
  return acc;
}

double simpson(const std::vector<double>& t, const std::vector<double>& f) {
  const std::size_t n = t.size() - 1;
  if (n % 2 != 0) throw DomainError("Simpson quadrature needs an even grid");
  const double h = (t.back() - t.front()) / static_cast<double>(n);
  double acc = f.front() + f.back();
  for (std::size_t k = 1; k < n; ++k) acc += (k % 2 ? 4.0 : 2.0) * f[k];
  return acc * h / 3.0;
}

void rk4_step(Eigen::VectorXd& p, const Eigen::MatrixXd& q0,
              const Eigen::MatrixXd& qm, const Eigen::MatrixXd& q1, double h,
              double& drift) {
  const Eigen::VectorXd k1 = q0.transpose() * p;
  const Eigen::VectorXd k2 = qm.transpose() * (p + 0.5 * h * k1);
  const Eigen::VectorXd k3 = qm.transpose() * (p + 0.5 * h * k2);
  const Eigen::VectorXd k4 = q1.transpose() * (p + h * k3);
  p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
  double clipped = 0.0;
  for (Eigen::Index i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0) {
      clipped -= p[i];
      p[i] = 0.0;
    }
  }
  const double s = p.sum();
  drift = std::max(drift, std::abs(s - 1.0) + clipped);
  p /= s;
}

}  // namespace

VelocityPair VelocityPair::from_fields(int states, RateFieldFn truth,
                                       RateFieldFn model) {
  VelocityPair out;
  out.states = states;
  out.eval = [truth = std::move(truth), model = std::move(model)](double t) {
    return std::make_pair(truth(t), model(t));
  };
  return out;
}

MasterTrajectory integrate_master(const Eigen::VectorXd& p0,
                                  const RateFieldFn& field, int grid_points) {
  if (grid_points < 2) throw DomainError("grid needs at least two intervals");
  if (std::abs(p0.sum() - 1.0) > 1e-9 || p0.minCoeff() < -1e-12) {
    throw InvalidDistributionError("initial state is not a distribution");
  }
  const int n = grid_points;
  const double h = 1.0 / n;

  MasterTrajectory out;
  out.occupancy.times.reserve(n + 1);
  out.occupancy.density.reserve(n + 1);

  Eigen::VectorXd p = p0.cwiseMax(0.0);
  p /= p.sum();
  Eigen::MatrixXd q_here = field(0.0);
  check_generator(q_here, "master");
  for (int k = 0; k <= n; ++k) {
    const double t = k * h;
    out.occupancy.times.push_back(t);
    out.occupancy.density.push_back(p);
    if (k == n) break;
    const Eigen::MatrixXd q_mid = field(t + 0.5 * h);
    const Eigen::MatrixXd q_next = field(t + h);
    rk4_step(p, q_here, q_mid, q_next, h, out.max_drift);
    if (out.max_drift > 1e-6) {
      throw RefineGridError("integration drift " +
                            std::to_string(out.max_drift) +
                            " exceeds 1e-6; refine the grid");
    }
    q_here = q_next;
  }
  return out;
}

PairTrajectories integrate_pair(const VelocityPair& pair,
                                const Eigen::VectorXd& p0, int grid_points) {
  if (grid_points < 2 || grid_points % 2 != 0) {
    throw DomainError("pair integration needs an even number of intervals");
  }
  const int n = grid_points;
  const double h = 1.0 / n;

  PairTrajectories out;
  out.times.reserve(n + 1);
  out.p.reserve(n + 1);
  out.q.reserve(n + 1);

  Eigen::VectorXd p = p0.cwiseMax(0.0);
  p /= p.sum();
  Eigen::VectorXd q = p;

  auto [qp_here, qq_here] = pair.eval(0.0);
  check_generator(qp_here, "true");
  check_generator(qq_here, "model");

  for (int k = 0; k <= n; ++k) {
    const double t = k * h;
    out.times.push_back(t);
    out.p.push_back(p);
    out.q.push_back(q);
    const Eigen::MatrixXd delta = qq_here - qp_here;
    const Eigen::VectorXd row_l1 = offdiag_row_l1(delta);
    out.tv.push_back(tv_distance(q, p));
    out.err_q.push_back(q.dot(row_l1));
    out.err_p.push_back(p.dot(row_l1));
    out.err_inf.push_back(row_l1.maxCoeff());
    if (k == n) break;

    auto [qp_mid, qq_mid] = pair.eval(t + 0.5 * h);
    auto [qp_next, qq_next] = pair.eval(t + h);
    check_generator(qp_next, "true");
    check_generator(qq_next, "model");
    rk4_step(p, qp_here, qp_mid, qp_next, h, out.max_drift);
    rk4_step(q, qq_here, qq_mid, qq_next, h, out.max_drift);
    if (out.max_drift > 1e-6) {
      throw RefineGridError("pair integration drift exceeds 1e-6");
    }
    qp_here = std::move(qp_next);
    qq_here = std::move(qq_next);
  }
  return out;
}

// --- Claim 1 ------------------------------------------------------------------

CheckFragment claim1_fragment(const PairTrajectories& traj) {
  const std::size_t n = traj.times.size();
  std::vector<double> cum(n, 0.0);
  for (std::size_t k = 1; k < n; ++k) {
    cum[k] = cum[k - 1] + 0.5 * (traj.err_q[k] + traj.err_q[k - 1]) *
                              (traj.times[k] - traj.times[k - 1]);
  }
  const double quad_est =
      std::abs(trapezoid(traj.times, traj.err_q) -
               trapezoid_half(traj.times, traj.err_q));

  CheckFragment out;
  out.tolerance = quad_est + kSlackBase;
  out.min_slack = std::numeric_limits<double>::infinity();
  out.tightness = 0.0;
  for (std::size_t k = 0; k < n; ++k) {
    out.min_slack = std::min(out.min_slack, cum[k] - traj.tv[k]);
    if (cum[k] > 1e-12) {
      out.tightness = std::max(out.tightness, traj.tv[k] / cum[k]);
    }
  }
  out.pass = out.min_slack >= -out.tolerance;
  return out;
}

CheckFragment check_claim1(const VelocityPair& pair, const Eigen::VectorXd& p0,
                           int grid_points) {
  return claim1_fragment(integrate_pair(pair, p0, grid_points));
}

// --- Corollary 1 ---------------------------------------------------------------

Corollary1Fragment corollary1_fragment(const PairTrajectories& traj) {
  const std::size_t n = traj.times.size();
  Corollary1Fragment out;
  out.min_slack = 0.0;
  out.tolerance = kSlackBase;
  double worst_margin = std::numeric_limits<double>::infinity();
  for (std::size_t k = 1; k + 1 < n; ++k) {
    const double h = traj.times[k + 1] - traj.times[k];
    const double fd = (traj.tv[k + 1] - traj.tv[k - 1]) / (2.0 * h);
    const double rhs = traj.err_p[k] + traj.err_inf[k] * traj.tv[k];
    // The TV curve has kinks; bound the central-difference dispersion by the
    // local curvature plus the neighboring variation of the right-hand side.
    const double rhs_prev =
        traj.err_p[k - 1] + traj.err_inf[k - 1] * traj.tv[k - 1];
    const double rhs_next =
        traj.err_p[k + 1] + traj.err_inf[k + 1] * traj.tv[k + 1];
    const double fd_err =
        std::abs(traj.tv[k + 1] - 2.0 * traj.tv[k] + traj.tv[k - 1]) /
            (2.0 * h) +
        0.5 * (std::abs(rhs_next - rhs) + std::abs(rhs - rhs_prev));
    const double slack = rhs - fd;
    const double margin = slack + fd_err;  // distance from hard violation
    if (margin < worst_margin) {
      worst_margin = margin;
      out.min_slack = slack;
      out.tolerance = fd_err + kSlackBase;
      out.intrinsic_at_worst = traj.err_p[k];
      out.domain_gap_at_worst = traj.err_inf[k] * traj.tv[k];
    }
    if (rhs > 1e-12) {
      out.tightness = std::max(out.tightness, fd / rhs);
    }
  }
  out.pass = out.min_slack >= -out.tolerance;
  return out;
}

Corollary1Fragment check_corollary1(const VelocityPair& pair,
                                    const Eigen::VectorXd& p0,
                                    int grid_points) {
  return corollary1_fragment(integrate_pair(pair, p0, grid_points));
}

// --- Proposition 1 -------------------------------------------------------------

OccupancyFragment occupancy_fragment(const PairTrajectories& traj) {
  OccupancyFragment out;
  out.mean_tv = trapezoid(traj.times, traj.tv);
  out.occupancy_tv = simpson(traj.times, traj.tv);
  out.equality_gap = std::abs(out.mean_tv - out.occupancy_tv);

  std::vector<double> weighted(traj.times.size());
  for (std::size_t k = 0; k < traj.times.size(); ++k) {
    weighted[k] = (1.0 - traj.times[k]) * traj.err_q[k];
  }
  out.weighted_bound = trapezoid(traj.times, weighted);
  const double quad_est = std::abs(out.weighted_bound -
                                   trapezoid_half(traj.times, weighted)) +
                          out.equality_gap;
  out.tolerance = quad_est + kSlackBase;
  out.min_slack = out.weighted_bound - out.occupancy_tv;
  if (out.weighted_bound > 1e-12) {
    out.tightness = out.occupancy_tv / out.weighted_bound;
  }
  out.pass = out.min_slack >= -out.tolerance && out.equality_gap < 1e-6;
  return out;
}

OccupancyFragment check_occupancy_tv(const VelocityPair& pair,
                                     const Eigen::VectorXd& p0,
                                     int grid_points) {
  return occupancy_fragment(integrate_pair(pair, p0, grid_points));
}

// --- Theorem 1 -----------------------------------------------------------------

Theorem1Fragment theorem1_fragment(const PairTrajectories& traj,
                                   const std::vector<LossFn>& losses,
                                   double bound) {
  if (!(bound > 0.0)) throw PreconditionError("loss bound must be positive");
  const OccupancyFragment occ = occupancy_fragment(traj);
  const std::size_t n = traj.times.size();
  const std::size_t states = static_cast<std::size_t>(traj.p.front().size());

  Theorem1Fragment out;
  out.tolerance = occ.tolerance + bound * occ.equality_gap + kSlackBase;
  out.min_slack = std::numeric_limits<double>::infinity();

  auto risks = [&](const LossFn& loss) {
    std::vector<double> fp(n), fq(n);
    for (std::size_t k = 0; k < n; ++k) {
      double ep = 0.0, eq = 0.0;
      for (std::size_t x = 0; x < states; ++x) {
        const double l = loss(traj.times[k], x);
        if (l < -1e-12 || l > bound + 1e-12) {
          throw PreconditionError("loss escapes [0, B]");
        }
        ep += l * traj.p[k][static_cast<Eigen::Index>(x)];
        eq += l * traj.q[k][static_cast<Eigen::Index>(x)];
      }
      fp[k] = ep;
      fq[k] = eq;
    }
    return std::make_pair(trapezoid(traj.times, fp),
                          trapezoid(traj.times, fq));
  };

  for (const LossFn& loss : losses) {
    const auto [risk_train, risk_gen] = risks(loss);
    const double slack_tv = risk_train + bound * occ.occupancy_tv - risk_gen;
    const double slack_weighted =
        risk_train + bound * occ.weighted_bound - risk_gen;
    out.min_slack = std::min({out.min_slack, slack_tv, slack_weighted});
    const double rhs = risk_train + bound * occ.occupancy_tv;
    if (std::abs(rhs) > 1e-12) {
      out.tightness = std::max(out.tightness, risk_gen / rhs);
    }
    ++out.losses_checked;
  }

  // The sign selector attains the TV duality: the first inequality must be
  // an equality up to quadrature error.
  LossFn selector = [&traj, bound](double t, std::size_t x) {
    // Find the grid point for t (selector is defined on the trajectory grid).
    const double h = traj.times[1] - traj.times[0];
    std::size_t k = static_cast<std::size_t>(t / h + 0.5);
    if (k >= traj.times.size()) k = traj.times.size() - 1;
    const Eigen::Index xi = static_cast<Eigen::Index>(x);
    return traj.q[k][xi] - traj.p[k][xi] > 0.0 ? bound : 0.0;
  };
  const auto [sel_train, sel_gen] = risks(selector);
  out.selector_gap = sel_train + bound * occ.occupancy_tv - sel_gen;

  if (losses.empty()) out.min_slack = out.selector_gap;
  out.pass = out.min_slack >= -out.tolerance &&
             std::abs(out.selector_gap) <= out.tolerance;
  return out;
}

Theorem1Fragment check_theorem1(const VelocityPair& pair,
                                const Eigen::VectorXd& p0,
                                const std::vector<LossFn>& losses, double bound,
                                int grid_points) {
  return theorem1_fragment(integrate_pair(pair, p0, grid_points), losses,
                           bound);
}

// --- engine-derived pairs -------------------------------------------------------

VelocityPair drax_path_pair(const ExactPosterior& exact,
                            const PosteriorModel& model,
                            const TokenSeq& condition, double t_clamp) {
  const Task& task = exact.task();
  const int L = task.length();
  const std::size_t n = state_count(task.vocab(), L);
  const PathSpec spec = exact.spec();

  auto clamp = [t_clamp](double t) {
    return std::min(std::max(t, t_clamp), 1.0 - t_clamp);
  };
  PosteriorFn exact_fn = [&exact, condition](const TokenSeq& z, double t) {
    return exact.predict(z, t, condition);
  };
  PosteriorFn model_fn = [&model, condition](const TokenSeq& z, double t) {
    return model.predict(z, t, condition);
  };

  VelocityPair out;
  out.states = static_cast<int>(n);
  out.eval = [spec, exact_fn, model_fn, condition, clamp, L](double t) {
    const double tc = clamp(t);
    const bool tri = spec.schedule.mid_index() >= 0;
    return std::make_pair(
        sequence_rate_matrix(spec, tc, exact_fn, condition, tri, L),
        sequence_rate_matrix(spec, tc, model_fn, condition, tri, L));
  };
  return out;
}

VelocityPair make_random_pair(int dim, int len, double epsilon, int mode,
                              RngHandle rng) {
  TaskConfig tc;
  tc.vocab = dim;
  tc.length = len;
  tc.eot_reserved = false;
  tc.sub_rate = 0.05 + 0.25 * rng.next_double();
  tc.del_rate = 0.0;
  tc.ins_rate = 0.0;
  tc.seed = rng.next_u64();
  const Task task = Task::build(tc);

  Schedule sched;
  std::shared_ptr<FixedDist> mid;
  if (rng.next_double() < 0.5) {
    sched = Schedule::two_way_linear();
  } else {
    sched = Schedule::tri_factorized(1.2 + 1.8 * rng.next_double(),
                                     0.8 + 1.0 * rng.next_double());
    Eigen::VectorXd pm(dim);
    for (int v = 0; v < dim; ++v) pm[v] = 0.2 + rng.next_double();
    mid = std::make_shared<FixedDist>(pm / pm.sum());
  }

  PathSpec spec;
  spec.schedule = sched;
  spec.vocab = dim;
  spec.source = SourceKind::uniform;
  spec.mid = mid.get();

  RngHandle cond_rng = rng.split(11);
  const TokenSeq condition = sample_pair(task, cond_rng).condition.tokens;
  auto exact = std::make_shared<ExactPosterior>(task, spec);
  const std::size_t n = state_count(dim, len);
  const Eigen::Index ni = static_cast<Eigen::Index>(n);

  // Perturbation coefficients, fixed per pair; the model field stays a valid
  // generator for every epsilon in [0,1] by construction.
  auto amp = std::make_shared<Eigen::MatrixXd>(ni, ni);
  auto phase = std::make_shared<Eigen::MatrixXd>(ni, ni);
  auto freq = std::make_shared<Eigen::MatrixXd>(ni, ni);
  RngHandle coef_rng = rng.split(13);
  for (Eigen::Index i = 0; i < ni; ++i) {
    for (Eigen::Index j = 0; j < ni; ++j) {
      (*amp)(i, j) = coef_rng.next_double();
      (*phase)(i, j) = 6.283185307179586 * coef_rng.next_double();
      (*freq)(i, j) = 1.0 + 5.0 * coef_rng.next_double();
    }
  }

  PosteriorFn exact_fn = [exact, condition](const TokenSeq& z, double t) {
    return exact->predict(z, t, condition);
  };

  VelocityPair out;
  out.states = static_cast<int>(n);
  out.eval = [spec, exact, exact_fn, condition, mid, amp, phase, freq, epsilon,
              mode, len, ni](double t) {
    const double tcl = std::min(std::max(t, 1e-4), 1.0 - 1e-4);
    const bool tri = spec.schedule.mid_index() >= 0;
    Eigen::MatrixXd truth =
        sequence_rate_matrix(spec, tcl, exact_fn, condition, tri, len);
    Eigen::MatrixXd model = truth;
    for (Eigen::Index x = 0; x < ni; ++x) {
      double diag = 0.0;
      for (Eigen::Index z = 0; z < ni; ++z) {
        if (z == x) continue;
        const double osc =
            std::sin((*freq)(x, z) * tcl + (*phase)(x, z)) * (*amp)(x, z);
        double v = truth(x, z);
        if (mode == 0 || mode == 2) v *= 1.0 + epsilon * osc;
        if (mode == 1 || mode == 2) {
          v += epsilon * (*amp)(x, z) *
               (0.5 + 0.5 * std::sin((*freq)(x, z) * tcl));
        }
        model(x, z) = v;
        diag -= v;
      }
      model(x, x) = diag;
    }
    return std::make_pair(std::move(truth), std::move(model));
  };
  return out;
}

// --- randomized trials ----------------------------------------------------------

TheoryTrialResult run_theory_trial(int trial, double eps_max, int grid_points,
                                   std::uint64_t seed) {
  static constexpr int kDims[3] = {2, 3, 5};
  const int dim = kDims[trial % 3];
  const int len = 3;

  RngHandle rng(seed, 0x7468656fULL + static_cast<std::uint64_t>(trial));
  const double epsilon = eps_max * rng.next_double();
  const int mode = (trial / 3) % 3;
  VelocityPair pair = make_random_pair(dim, len, epsilon, mode, rng.split(1));

  const std::size_t n = state_count(dim, len);
  const Eigen::VectorXd p0 =
      Eigen::VectorXd::Constant(static_cast<Eigen::Index>(n),
                                1.0 / static_cast<double>(n));

  const PairTrajectories traj = integrate_pair(pair, p0, grid_points);
  const CheckFragment c1 = claim1_fragment(traj);
  const Corollary1Fragment c2 = corollary1_fragment(traj);
  const OccupancyFragment c3 = occupancy_fragment(traj);

  RngHandle loss_rng = rng.split(2);
  const double bound = 0.5 + 1.5 * loss_rng.next_double();
  std::vector<LossFn> losses;
  for (int j = 0; j < 20; ++j) {
    std::vector<double> level(n);
    for (std::size_t x = 0; x < n; ++x) level[x] = loss_rng.next_double();
    const double om = 1.0 + 6.0 * loss_rng.next_double();
    const double ph = 6.283185307179586 * loss_rng.next_double();
    losses.push_back([level = std::move(level), om, ph, bound](
                         double t, std::size_t x) {
      return bound * level[x] * (0.5 + 0.5 * std::sin(om * t + ph));
    });
  }
  const Theorem1Fragment c4 = theorem1_fragment(traj, losses, bound);

  TheoryTrialResult res;
  res.trial = trial;
  res.states = static_cast<int>(n);
  res.epsilon = epsilon;
  res.claim1_slack = c1.min_slack;
  res.claim1_tol = c1.tolerance;
  res.corollary1_slack = c2.min_slack;
  res.corollary1_tol = c2.tolerance;
  res.occupancy_slack = c3.min_slack;
  res.occupancy_tol = c3.tolerance;
  res.prop1_gap = c3.equality_gap;
  res.theorem1_slack = c4.min_slack;
  res.theorem1_tol = c4.tolerance;
  res.selector_gap = c4.selector_gap;
  res.pass = c1.pass && c2.pass && c3.pass && c4.pass;
  return res;
}

std::vector<TheoryTrialResult> run_theory_trials(int trials, int grid_points,
                                                 double eps_max,
                                                 std::uint64_t seed,
                                                 int threads) {
  std::vector<TheoryTrialResult> out(trials);
  parallel_for(trials, threads, [&](int i) {
    out[i] = run_theory_trial(i, eps_max, grid_points, seed);
  });
  return out;
}

namespace {

std::string fmt(double v) {
  char buf[32];
  std::snprintf(buf, sizeof(buf), "%.9g", v);
  return buf;
}

}  // namespace

void write_theory_jsonl(const std::string& path,
                        const std::vector<TheoryTrialResult>& results) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  for (const TheoryTrialResult& r : results) {
    out << "{\"trial\":" << r.trial << ",\"states\":" << r.states
        << ",\"epsilon\":" << fmt(r.epsilon)
        << ",\"claim1_slack\":" << fmt(r.claim1_slack)
        << ",\"claim1_tol\":" << fmt(r.claim1_tol)
        << ",\"corollary1_slack\":" << fmt(r.corollary1_slack)
        << ",\"corollary1_tol\":" << fmt(r.corollary1_tol)
        << ",\"occupancy_slack\":" << fmt(r.occupancy_slack)
        << ",\"occupancy_tol\":" << fmt(r.occupancy_tol)
        << ",\"prop1_gap\":" << fmt(r.prop1_gap)
        << ",\"theorem1_slack\":" << fmt(r.theorem1_slack)
        << ",\"theorem1_tol\":" << fmt(r.theorem1_tol)
        << ",\"selector_gap\":" << fmt(r.selector_gap)
        << ",\"pass\":" << (r.pass ? "true" : "false") << "}\n";
  }
}

void write_theory_csv(const std::string& path,
                      const std::vector<TheoryTrialResult>& results) {
  std::ofstream out(path);
  if (!out) throw UsageError("cannot write " + path);
  out << "trial,states,epsilon,claim1_slack,corollary1_slack,occupancy_slack,"
         "theorem1_slack,prop1_gap,selector_gap,pass\n";
  for (const TheoryTrialResult& r : results) {
    out << r.trial << ',' << r.states << ',' << fmt(r.epsilon) << ','
        << fmt(r.claim1_slack) << ',' << fmt(r.corollary1_slack) << ','
        << fmt(r.occupancy_slack) << ',' << fmt(r.theorem1_slack) << ','
        << fmt(r.prop1_gap) << ',' << fmt(r.selector_gap) << ','
        << (r.pass ? "1" : "0") << '\n';
  }
}

}  // namespace drax
