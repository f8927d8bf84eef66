// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Continuous-time Markov chain view of the uniform forward process, used to
// cross-check the variational sampler.
//
// Rates are stored row-major as R(from, to). The time reversal of a forward
// rate with marginals q is Rrev(a, b) = R(b, a) q(b) / q(a).

#pragma once

#include <functional>

#include "ddiff/core.hpp"
#include "ddiff/rng.hpp"

namespace ddiff {

using RateMatrix = Matrix;

// Throws unless off-diagonals are non-negative and rows sum to zero.
void validate_rate(const RateMatrix& rate, double tol = 1e-12);

// R_t = -alpha'_t / (N alpha_t) (1 1^T - N I).
RateMatrix uniform_rate(const NoiseSchedule& schedule, double t, int n);

// marginal(z) returns q_t(z) > 0.
RateMatrix reverse_rate(const RateMatrix& forward, const std::function<double(Token)>& marginal);

// Reverse rate of the parameterized model for a uniform prior: row a uses the
// clean-data prediction made at z_t = a, with
// Rrev(a, b) = R(b, a) xbar_theta(b) / xbar_theta(a), xbar = N alpha x + 1 - alpha.
RateMatrix model_reverse_rate(const NoiseSchedule& schedule, double t,
                              const std::function<std::vector<double>(Token)>& x_theta_at);

// Distribution of one Euler step: delta(z, .) + dt R(z, .).
Categorical euler_transition(Token z, const RateMatrix& rate, double dt);
Token euler_step(Token z, const RateMatrix& rate, double dt, Rng& rng);

// Largest dt accepted by euler_transition for this rate.
double max_euler_dt(const RateMatrix& rate);

RateMatrix guided_rate_cfg(const RateMatrix& cond_rate, const RateMatrix& uncond_rate, double gamma);
// ratio(a, b) = p_phi(y | b) / p_phi(y | a) for a move a -> b.
RateMatrix guided_rate_cbg(const RateMatrix& rate, const std::function<double(Token, Token)>& classifier_ratio,
                           double gamma);

}  // namespace ddiff
