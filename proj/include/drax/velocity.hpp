// Copyright (C) 2026 the drax authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <Eigen/Dense>
#include <functional>
#include <vector>

#include "drax/core.hpp"
#include "drax/path.hpp"
#include "drax/scheduler.hpp"

namespace drax {

/// One position's generator row given the current token z: entry a holds the
/// jump rate to token a for a != z, and the diagonal entry is minus the total
/// off-diagonal rate, so the row sums to zero.
///
/// marginal form:    alpha_1 * p_1|t  (+ alpha_mid * p_mid when included)
/// conditional form: alpha-weighted path components
/// plus, in both, the beta * delta_z mass that lives on the diagonal.
/// Dropping the middle term at inference leaves its mass on the diagonal
/// (the state simply stays put more often); nothing is renormalized.
Eigen::VectorXd marginal_velocity(const VelocityCoeffs& coeffs,
                                  const Eigen::VectorXd& posterior,
                                  const Eigen::VectorXd* mid, Token current,
                                  bool include_mid);

Eigen::VectorXd conditional_velocity(const VelocityCoeffs& coeffs,
                                     const PathSpec& spec, const TokenSeq& x0,
                                     const TokenSeq& x1,
                                     const TokenSeq& condition, Token current,
                                     int position);

/// Throws InvalidRateError when an off-diagonal entry is below -1e-12 or the
/// row does not sum to zero within 1e-9.
void validate_rate_row(const Eigen::VectorXd& row, Token current);

/// One transition of the sampling chain: every position is resampled from
/// delta_z + h * rates(position). Zero rate rows leave a position untouched.
TokenSeq euler_step(const TokenSeq& state, const Eigen::MatrixXd& rates,
                    double h, RngHandle& rng);

/// As euler_step, additionally accumulating the log-probability of the
/// realized transition into *logprob (the trajectory-score ingredient).
TokenSeq euler_step_scored(const TokenSeq& state, const Eigen::MatrixXd& rates,
                           double h, RngHandle& rng, double* logprob);

/// Per-position posterior rows (L x d) for a whole-sequence state.
using PosteriorFn =
    std::function<Eigen::MatrixXd(const TokenSeq& state, double t)>;

/// Full CTMC generator over V^L assembled from per-position marginal
/// velocities; rows are origin states, columns destinations.
Eigen::MatrixXd sequence_rate_matrix(const PathSpec& spec, double t,
                                     const PosteriorFn& posterior,
                                     const TokenSeq& condition,
                                     bool include_mid, int length,
                                     std::size_t cap = kDefaultStateCap);

/// Integrates the master equation with the marginal velocity built from the
/// given (exact) posterior, and returns the largest TV distance between the
/// integrated distribution and marginal_path(t) over the comparison grid.
double kolmogorov_check(const PathSpec& spec, const PosteriorFn& posterior,
                        const Coupling& coupling, const TokenSeq& condition,
                        const std::vector<double>& grid, double step = 1e-3,
                        std::size_t cap = kDefaultStateCap);

}  // namespace drax
