// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Brute-force oracles and identity checks.
//
// The oracles rebuild every quantity from the forward marginals
// q(z_t | x) = alpha_t x + (1 - alpha_t) pi and literal sums, without calling
// the posterior, loss, or guidance code they are used to check.

#pragma once

#include <cstdint>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "ddiff/core.hpp"
#include "ddiff/forward.hpp"
#include "ddiff/loss.hpp"
#include "ddiff/model.hpp"

namespace ddiff {

// All N^L sequences in lexicographic order. Requires N^L <= 10^6.
std::vector<Sequence> enumerate_sequences(int n, int length);

// q(z_s | z_t, x) proportional to q(z_t | z_s) q(z_s | x).
Categorical bayes_posterior_oracle(Token z_t, Token x, double alpha_t, double alpha_s, const PriorSpec& prior);
Categorical bayes_posterior_oracle(const NoiseSchedule& schedule, Token z_t, Token x, double t, double s,
                                   const PriorSpec& prior);

// -log p_theta(x) of the T-step reverse chain, summed over all latent paths
// by forward recursion over the N^L states.
double exact_reverse_nll(const Denoiser& denoiser, std::span<const Token> x, int T);

// Literal N-term tempering of each position by p_phi(y | single-site edit)^gamma.
std::vector<Categorical> tempered_token_oracle(const Classifier& classifier, std::span<const Token> z_t, double time,
                                               std::span<const Categorical> denoiser_rows, int y, double gamma);

// Two-class classifier with log p(0 | X) = c + <W, X> (affine in the relaxed
// one-hot input) and p(1 | X) = 1 - p(0 | X).
class AffineClassifier final : public Classifier {
public:
    AffineClassifier(int vocab, int length, std::uint64_t seed);

    int num_classes() const override { return 2; }
    int length() const override { return weight_.rows; }
    int vocab_size() const override { return weight_.cols; }
    std::vector<double> log_probs(std::span<const Token> z, double t) const override;
    LogProbGrad log_prob_and_grad(std::span<const Token> z, double t, int y) const override;

private:
    Matrix weight_;
    double offset_;
};

// Random uniform or absorbing MLP denoiser without a copy floor.
MlpDenoiser random_denoiser(ModelKind kind, int n, int length, std::uint64_t seed, int classes = 0,
                            double gain = 1.5);

// Checks -----------------------------------------------------------------

struct CheckResult {
    std::string name;
    bool passed = false;
    double deviation = 0.0;
    double tolerance = 0.0;
    std::string detail;
};

CheckResult make_check(std::string name, double deviation, double tolerance, std::string detail = {});

struct SuiteOptions {
    std::uint64_t seed = 1;
    // Replaceable for mutation testing.
    IntegrandFn integrand = udlm_integrand_at;
    int threads = 0;
};

std::vector<CheckResult> check_posteriors();
std::vector<CheckResult> check_zero_at_truth(const SuiteOptions& opt);
std::vector<CheckResult> check_kl_limit(const SuiteOptions& opt);

struct ConvergenceResult {
    std::vector<int> Ts;
    // Per denoiser: errors against the integral and successive error ratios.
    std::vector<std::vector<double>> errors;
    std::vector<std::vector<double>> ratios;
    double min_ratio = 0.0;
    double max_ratio = 0.0;
};
// Integral of the expected integrand over [0, 1] by composite Gauss-Legendre
// with geometric refinement towards both endpoints.
double continuous_nelbo(const Denoiser& denoiser, std::span<const Token> x, const IntegrandFn& integrand);
ConvergenceResult nelbo_convergence(const SuiteOptions& opt, int num_denoisers = 10, int n = 3, int length = 2);
std::vector<CheckResult> check_nelbo_convergence(const SuiteOptions& opt);

std::vector<CheckResult> check_bound_validity(const SuiteOptions& opt);
std::vector<CheckResult> check_mc_agreement(const SuiteOptions& opt);
std::vector<CheckResult> check_sedd_equivalence(const SuiteOptions& opt, int configs = 10000);

std::vector<CheckResult> check_cbg_exact(const SuiteOptions& opt);
// Per-position TV between cbg_taylor and cbg_exact for a random MLP
// classifier at N = 4, L = 3 (seeded).
std::vector<double> taylor_tv_gap(std::uint64_t seed);
std::vector<CheckResult> check_cbg_taylor(const SuiteOptions& opt);
std::vector<CheckResult> check_cfg();

struct SlopeFit {
    std::vector<double> dts;
    std::vector<double> tvs;
    double exponent = 0.0;
};
// TV between CTMC Euler propagation with guided rates and the guided
// variational chain over a fixed interval, as a function of dt.
SlopeFit ctmc_cfg_slope(std::uint64_t seed, double gamma);
SlopeFit ctmc_cbg_slope(std::uint64_t seed, double gamma);
std::vector<CheckResult> check_ctmc(const SuiteOptions& opt);

std::vector<CheckResult> check_gradients(const SuiteOptions& opt);

// Suites -------------------------------------------------------------------

struct SuiteReport {
    std::string suite;
    std::vector<CheckResult> checks;
    double runtime_seconds = 0.0;

    bool passed() const;
};

const std::vector<std::string>& suite_names();  // without "all"
std::vector<SuiteReport> run_suite(const std::string& name, const SuiteOptions& opt = {});
std::string report_json(std::span<const SuiteReport> reports);
void print_report(std::ostream& out, std::span<const SuiteReport> reports);

}  // namespace ddiff
