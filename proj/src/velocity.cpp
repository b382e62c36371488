// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#include "drax/velocity.hpp"

#include <cmath>
#include <string>

namespace drax {

namespace {

constexpr double kRateTol = 1e-12;

// Off-diagonal contributions -> validated row with conservation diagonal.
Eigen::VectorXd finish_rate_row(Eigen::VectorXd off, Token current) {
  const int d = static_cast<int>(off.size());
  double total = 0.0;
  for (int a = 0; a < d; ++a) {
    if (a == current) continue;
    if (off[a] < -kRateTol) {
      throw InvalidRateError("negative jump rate " + std::to_string(off[a]) +
                             "; the schedule does not yield a valid velocity");
    }
    if (off[a] < 0.0) off[a] = 0.0;
    total += off[a];
  }
  off[current] = -total;
  return off;
}

}  // namespace

Eigen::VectorXd marginal_velocity(const VelocityCoeffs& coeffs,
                                  const Eigen::VectorXd& posterior,
                                  const Eigen::VectorXd* mid, Token current,
                                  bool include_mid) {
  const int m = static_cast<int>(coeffs.alpha.size());
  const int mid_j = m == 3 ? 1 : -1;
  Eigen::VectorXd row = coeffs.alpha[m - 1] * posterior;
  if (include_mid && mid_j >= 0 && mid != nullptr) {
    row += coeffs.alpha[mid_j] * (*mid);
  }
  return finish_rate_row(std::move(row), current);
}

Eigen::VectorXd conditional_velocity(const VelocityCoeffs& coeffs,
                                     const PathSpec& spec, const TokenSeq& x0,
                                     const TokenSeq& x1,
                                     const TokenSeq& condition, Token current,
                                     int position) {
  spec.validate();
  const Schedule& sched = spec.schedule;
  Eigen::VectorXd row = Eigen::VectorXd::Zero(spec.vocab);

  const int src = sched.source_index();
  if (src != coeffs.ell && coeffs.alpha[src] != 0.0) {
    switch (spec.source) {
      case SourceKind::delta:
        row[x0[position]] += coeffs.alpha[src];
        break;
      case SourceKind::uniform:
        row.array() += coeffs.alpha[src] / spec.vocab;
        break;
      case SourceKind::conditioned:
        row += coeffs.alpha[src] * spec.source_model->probs(condition, position);
        break;
    }
  }
  if (sched.mid_index() >= 0 && sched.mid_index() != coeffs.ell) {
    row += coeffs.alpha[sched.mid_index()] * spec.mid->probs(condition, position);
  }
  if (sched.target_index() != coeffs.ell) {
    row[x1[position]] += coeffs.alpha[sched.target_index()];
  }
  return finish_rate_row(std::move(row), current);
}

void validate_rate_row(const Eigen::VectorXd& row, Token current) {
  double total = 0.0;
  for (int a = 0; a < row.size(); ++a) {
    if (a == current) continue;
    if (row[a] < -kRateTol) {
      throw InvalidRateError("off-diagonal rate below tolerance");
    }
    total += row[a];
  }
  if (std::abs(row[current] + total) > 1e-9) {
    throw InvalidRateError("rate row does not sum to zero");
  }
}

namespace {

TokenSeq euler_step_impl(const TokenSeq& state, const Eigen::MatrixXd& rates,
                         double h, RngHandle& rng, double* logprob) {
  if (!(h > 0.0)) throw DomainError("step size must be positive");
  const int L = static_cast<int>(state.size());
  if (rates.rows() != L) throw DimensionError("one rate row per position");
  const int d = static_cast<int>(rates.cols());

  TokenSeq out(L);
  Eigen::VectorXd v(d);
  for (int i = 0; i < L; ++i) {
    const Token z = state[i];
    v = h * rates.row(i).transpose();
    v[z] += 1.0;
    const double minc = v.minCoeff();
    if (minc < -1e-9 || std::abs(v.sum() - 1.0) > 1e-9) {
      throw StepSizeError(
          "transition probabilities left the simplex at position " +
          std::to_string(i) + "; use a smaller step size h");
    }
    if (minc < 0.0) {
      v = v.cwiseMax(0.0);
      v /= v.sum();
    }
    out[i] = sample_index(v, rng);
    if (logprob != nullptr) *logprob += safe_log(v[out[i]]);
  }
  return out;
}

}  // namespace

TokenSeq euler_step(const TokenSeq& state, const Eigen::MatrixXd& rates,
                    double h, RngHandle& rng) {
  return euler_step_impl(state, rates, h, rng, nullptr);
}

TokenSeq euler_step_scored(const TokenSeq& state, const Eigen::MatrixXd& rates,
                           double h, RngHandle& rng, double* logprob) {
  return euler_step_impl(state, rates, h, rng, logprob);
}

Eigen::MatrixXd sequence_rate_matrix(const PathSpec& spec, double t,
                                     const PosteriorFn& posterior,
                                     const TokenSeq& condition,
                                     bool include_mid, int length,
                                     std::size_t cap) {
  spec.validate();
  const VelocityCoeffs coeffs = velocity_coeffs(spec.schedule, t);
  const int d = spec.vocab;
  const int L = length;
  const std::size_t n = state_count(d, L, cap);
  Eigen::MatrixXd Q = Eigen::MatrixXd::Zero(static_cast<Eigen::Index>(n),
                                            static_cast<Eigen::Index>(n));

  const bool tri = spec.schedule.mid_index() >= 0;
  std::vector<Eigen::VectorXd> mid_rows;
  if (tri) {
    mid_rows.reserve(L);
    for (int i = 0; i < L; ++i) mid_rows.push_back(spec.mid->probs(condition, i));
  }

  std::vector<std::size_t> strides(L);
  strides[L - 1] = 1;
  for (int i = L - 2; i >= 0; --i) {
    strides[i] = strides[i + 1] * static_cast<std::size_t>(d);
  }

  for (std::size_t idx = 0; idx < n; ++idx) {
    const TokenSeq z = decode_state(idx, d, L);
    const Eigen::MatrixXd post = posterior(z, t);
    double diag = 0.0;
    for (int i = 0; i < L; ++i) {
      const Eigen::VectorXd row = marginal_velocity(
          coeffs, post.row(i).transpose(), tri ? &mid_rows[i] : nullptr, z[i],
          include_mid);
      for (int a = 0; a < d; ++a) {
        if (a == z[i] || row[a] == 0.0) continue;
        const std::size_t jdx = idx + strides[i] * (a - z[i]);
        Q(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(jdx)) =
            row[a];
        diag -= row[a];
      }
    }
    Q(static_cast<Eigen::Index>(idx), static_cast<Eigen::Index>(idx)) = diag;
  }
  return Q;
}

double kolmogorov_check(const PathSpec& spec, const PosteriorFn& posterior,
                        const Coupling& coupling, const TokenSeq& condition,
                        const std::vector<double>& grid, double step,
                        std::size_t cap) {
  if (grid.empty()) return 0.0;
  spec.validate();

  const int L = static_cast<int>(coupling.front().x1.size());

  // Velocity coefficients are singular at the endpoints; evaluate the field
  // just inside. The exact-posterior rates have finite limits there.
  const double t_eps = 1e-6;
  auto field = [&](double t) {
    const double tc = std::min(std::max(t, t_eps), 1.0 - t_eps);
    return sequence_rate_matrix(spec, tc, posterior, condition,
                                /*include_mid=*/true, L, cap);
  };

  Eigen::VectorXd p = marginal_path(spec, 0.0, coupling, condition, cap).p;

  double max_defect = 0.0;
  double t = 0.0;
  for (double target : grid) {
    if (target < t - 1e-12) throw DomainError("grid times must be sorted");
    while (t < target - 1e-12) {
      // Schedules with exponents below one have an integrable derivative
      // singularity at t=0; graded substeps keep RK4 accurate there.
      const double local = t < 10.0 * step ? 0.1 * step : step;
      const double h = std::min(local, target - t);
      const Eigen::MatrixXd q1 = field(t);
      const Eigen::MatrixXd qm = field(t + 0.5 * h);
      const Eigen::MatrixXd q2 = field(t + h);
      const Eigen::VectorXd k1 = q1.transpose() * p;
      const Eigen::VectorXd k2 = qm.transpose() * (p + 0.5 * h * k1);
      const Eigen::VectorXd k3 = qm.transpose() * (p + 0.5 * h * k2);
      const Eigen::VectorXd k4 = q2.transpose() * (p + h * k3);
      p += h / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
      p = p.cwiseMax(0.0);
      p /= p.sum();
      t += h;
    }
    const SeqDistribution ref = marginal_path(spec, target, coupling, condition, cap);
    max_defect = std::max(max_defect, tv_distance(p, ref.p));
  }
  return max_defect;
}

}  // namespace drax
