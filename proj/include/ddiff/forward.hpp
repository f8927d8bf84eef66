// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// The interpolating corruption process q(z_t | x) = Cat(alpha_t x + (1 - alpha_t) pi)
// and its exact posteriors q(z_s | z_t, x).
//
// Every posterior takes x as a probability vector: a one-hot row gives the
// true posterior, a denoiser row x_theta gives the parameterized reverse
// step p_theta(z_s | z_t) = q(z_s | z_t, x = x_theta).

#pragma once

#include <span>

#include "ddiff/core.hpp"
#include "ddiff/rng.hpp"

namespace ddiff {

enum class PriorKind { uniform, absorbing, general };

class PriorSpec {
public:
    static PriorSpec uniform(int n);
    static PriorSpec absorbing(int n, Token mask_index);
    static PriorSpec general(Categorical pi);

    PriorKind kind() const { return kind_; }
    const Categorical& pi() const { return pi_; }
    int size() const { return pi_.size(); }
    // Only meaningful for absorbing priors.
    Token mask() const { return mask_; }

private:
    PriorSpec(PriorKind kind, Categorical pi, Token mask) : kind_(kind), pi_(std::move(pi)), mask_(mask) {}

    PriorKind kind_;
    Categorical pi_;
    Token mask_ = -1;
};

std::string to_string(PriorKind kind);

// Marginals ----------------------------------------------------------------

Categorical marginal_at(Token x, double alpha_t, const PriorSpec& prior);
Categorical marginal(const NoiseSchedule& schedule, Token x, double t, const PriorSpec& prior);

Token sample_latent_at(Token x, double alpha_t, const PriorSpec& prior, Rng& rng);
Token sample_latent(const NoiseSchedule& schedule, Token x, double t, const PriorSpec& prior, Rng& rng);
Sequence sample_latent_sequence(const NoiseSchedule& schedule, std::span<const Token> x, double t,
                                const PriorSpec& prior, Rng& rng);

// Posteriors ---------------------------------------------------------------

// General-pi posterior for a (possibly soft) clean-token distribution x.
// Requires alpha_s > alpha_t or equal (zero-width step); throws DomainError
// when z_t has probability zero under x.
Categorical posterior_mean_at(Token z_t, std::span<const double> x, double alpha_t, double alpha_s,
                              const PriorSpec& prior);
Categorical posterior_at(Token z_t, Token x, double alpha_t, double alpha_s, const PriorSpec& prior);
Categorical posterior(const NoiseSchedule& schedule, Token z_t, Token x, double t, double s, const PriorSpec& prior);

// Closed form specialized to pi = 1/N.
Categorical posterior_uniform_mean_at(Token z_t, std::span<const double> x, double alpha_t, double alpha_s);
Categorical posterior_uniform_at(Token z_t, Token x, double alpha_t, double alpha_s, int n);
Categorical posterior_uniform(const NoiseSchedule& schedule, Token z_t, Token x, double t, double s, int n);

// Absorbing fast path: unmasked latents are carried over unchanged.
Categorical posterior_absorbing_mean_at(Token z_t, std::span<const double> x, double alpha_t, double alpha_s,
                                        const PriorSpec& prior);

// Dispatches to the specialized form matching the prior.
Categorical reverse_posterior_at(Token z_t, std::span<const double> x, double alpha_t, double alpha_s,
                                 const PriorSpec& prior);

}  // namespace ddiff
