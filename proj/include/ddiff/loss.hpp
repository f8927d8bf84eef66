// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Variational objectives: the discrete-time NELBO, its continuous-time limit
// for uniform noise (UDLM), the absorbing-state limit (MDLM), and the
// score-parameterized SEDD form of the UDLM integrand.
//
// Discrete time grid: latents live at t(i) = i/T, i = 1..T. Step i goes from
// t(i) to t(i-1); the i = 1 step lands on s = 0 (alpha_s = 1), where the
// reverse "posterior" is the reconstruction p_theta(x | z_{1/T}). The prior
// term KL(q(z_1 | x) || pi) is zero under alpha(1) = 0 but is still computed.

#pragma once

#include <functional>
#include <span>
#include <vector>

#include "ddiff/core.hpp"
#include "ddiff/forward.hpp"
#include "ddiff/model.hpp"
#include "ddiff/rng.hpp"

namespace ddiff {

enum class Objective { nelbo_discrete, udlm_continuous, mdlm_continuous, sedd_form };

std::string to_string(Objective objective);
Objective objective_from_string(const std::string& name);

struct LossSpec {
    Objective objective = Objective::udlm_continuous;
    int T = 1000;  // steps, nelbo_discrete only
    int mc_samples_per_example = 1;
    bool exact_expectation = false;

    void validate() const;
};

// Monte Carlo estimate with its standard error (zero for exact values).
struct Estimate {
    double value = 0.0;
    double std_error = 0.0;
    long samples = 0;
};

// Value and gradient with respect to the x_theta row.
struct TokenLoss {
    double value = 0.0;
    std::vector<double> grad;
};

// KL(q || p) in nats. Infinite when p puts zero mass where q does not.
double kl_divergence(std::span<const double> q, std::span<const double> p);

// KL[q(z_s | z_t, x) || q(z_s | z_t, x_theta)]. alpha_s = 1 gives the
// reconstruction term -log p_theta(x | z_t).
double diffusion_kl_at(Token x, Token z_t, double alpha_t, double alpha_s, std::span<const double> x_theta,
                       const PriorSpec& prior);
double diffusion_kl(const NoiseSchedule& schedule, Token x, Token z_t, double t, double s,
                    const Categorical& x_theta, const PriorSpec& prior);
TokenLoss diffusion_kl_grad_at(Token x, Token z_t, double alpha_t, double alpha_s, std::span<const double> x_theta,
                               const PriorSpec& prior);

// Latent time of step i on a T-step grid.
inline double grid_time(int i, int T) { return static_cast<double>(i) / T; }

// Sum over positions of the step-i term (i = 1 is reconstruction) for one
// fixed latent sequence.
double nelbo_step_term(const Denoiser& denoiser, std::span<const Token> x, std::span<const Token> z, int i, int T);

double nelbo_prior_term(const Denoiser& denoiser, std::span<const Token> x);

// Exact mode enumerates all N^L latents per step.
double nelbo_discrete_exact(std::span<const Token> x, const Denoiser& denoiser, int T);
// Samples a step index and a latent per draw; estimates T * E[step term].
Estimate nelbo_discrete_mc(std::span<const Token> x, const Denoiser& denoiser, int T, Rng& rng, long samples);

// Continuous-time UDLM integrand for one token (uniform prior, N = x_theta.size()).
double udlm_integrand_at(Token x, Token z_t, double alpha, double alpha_prime, std::span<const double> x_theta);
double udlm_integrand(const NoiseSchedule& schedule, Token x, Token z_t, double t, const Categorical& x_theta);
TokenLoss udlm_integrand_grad_at(Token x, Token z_t, double alpha, double alpha_prime,
                                 std::span<const double> x_theta);

using IntegrandFn = std::function<double(Token x, Token z_t, double alpha, double alpha_prime,
                                         std::span<const double> x_theta)>;

// Sum over positions of the integrand for a fixed latent sequence at time t.
double udlm_sequence_integrand(std::span<const Token> x, std::span<const Token> z, double t,
                               const Denoiser& denoiser, const IntegrandFn& integrand = udlm_integrand_at);

// Exact expectation over latents of the sequence integrand at time t.
double udlm_expected_integrand(std::span<const Token> x, double t, const Denoiser& denoiser,
                               const IntegrandFn& integrand = udlm_integrand_at);

// (t_max - t_min) * E_t E_q [sum over positions of the integrand].
Estimate udlm_loss(std::span<const Token> x, const Denoiser& denoiser, Rng& rng, long mc_samples);

// Absorbing-state per-token integrand (alpha' / (1 - alpha)) log x_theta[x]
// for masked latents, zero otherwise.
TokenLoss mdlm_token_grad_at(Token x, Token z_t, double alpha, double alpha_prime, std::span<const double> x_theta,
                             Token mask);
Estimate mdlm_loss(std::span<const Token> x, const Denoiser& denoiser, Rng& rng, long mc_samples);

// Score-entropy form of the integrand: sum over z' != z_t of
// R(z, z') [s - r log s + K(r)], K(a) = a (log a - 1).
double sedd_form_nelbo_at(Token x, Token z_t, double alpha, double alpha_prime, std::span<const double> x_theta);
double sedd_form_nelbo(const NoiseSchedule& schedule, Token x, Token z_t, double t, const Categorical& x_theta);

double bpc(double nelbo_nats, int length);
double ppl(double nelbo_nats, int length);

// Mean and standard error of a sample.
Estimate summarize(std::span<const double> values);

}  // namespace ddiff
