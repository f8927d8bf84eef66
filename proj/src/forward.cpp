// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/forward.hpp"

#include <cmath>

namespace ddiff {

namespace {

void check_token(Token t, int n, const char* what) {
    if (t < 0 || t >= n) {
        throw ContractError(std::string(what) + " token out of range");
    }
}

void check_step(double alpha_t, double alpha_s) {
    if (!(alpha_t >= 0.0 && alpha_s <= 1.0 && alpha_s >= alpha_t)) {
        throw ContractError("posterior requires 0 <= alpha_t <= alpha_s <= 1");
    }
    if (!(alpha_s > 0.0)) {
        throw DomainError("posterior requires alpha_s > 0");
    }
}

std::vector<double> one_hot_vec(int n, Token x) {
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    v[static_cast<std::size_t>(x)] = 1.0;
    return v;
}

}  // namespace

PriorSpec PriorSpec::uniform(int n) { return PriorSpec(PriorKind::uniform, Categorical::uniform(n), -1); }

PriorSpec PriorSpec::absorbing(int n, Token mask_index) {
    check_token(mask_index, n, "mask");
    return PriorSpec(PriorKind::absorbing, Categorical::one_hot(n, mask_index), mask_index);
}

PriorSpec PriorSpec::general(Categorical pi) { return PriorSpec(PriorKind::general, std::move(pi), -1); }

std::string to_string(PriorKind kind) {
    switch (kind) {
        case PriorKind::uniform:
            return "uniform";
        case PriorKind::absorbing:
            return "absorbing";
        case PriorKind::general:
            return "general";
    }
    return "unknown";
}

Categorical marginal_at(Token x, double alpha_t, const PriorSpec& prior) {
    const int n = prior.size();
    check_token(x, n, "clean");
    if (!(alpha_t >= 0.0 && alpha_t <= 1.0)) {
        throw ContractError("marginal: alpha outside [0, 1]");
    }
    std::vector<double> p(static_cast<std::size_t>(n));
    for (int j = 0; j < n; ++j) {
        p[static_cast<std::size_t>(j)] = (1.0 - alpha_t) * prior.pi()[static_cast<std::size_t>(j)];
    }
    p[static_cast<std::size_t>(x)] += alpha_t;
    return Categorical(std::move(p));
}

Categorical marginal(const NoiseSchedule& schedule, Token x, double t, const PriorSpec& prior) {
    return marginal_at(x, schedule.alpha(t), prior);
}

Token sample_latent_at(Token x, double alpha_t, const PriorSpec& prior, Rng& rng) {
    check_token(x, prior.size(), "clean");
    // Keep x with probability alpha_t, otherwise draw from the prior.
    if (rng.uniform() < alpha_t) {
        return x;
    }
    if (prior.kind() == PriorKind::absorbing) {
        return prior.mask();
    }
    if (prior.kind() == PriorKind::uniform) {
        return rng.uniform_int(prior.size());
    }
    return rng.categorical(prior.pi());
}

Token sample_latent(const NoiseSchedule& schedule, Token x, double t, const PriorSpec& prior, Rng& rng) {
    return sample_latent_at(x, schedule.alpha(t), prior, rng);
}

Sequence sample_latent_sequence(const NoiseSchedule& schedule, std::span<const Token> x, double t,
                                const PriorSpec& prior, Rng& rng) {
    const double a = schedule.alpha(t);
    Sequence z(x.size());
    for (std::size_t l = 0; l < x.size(); ++l) {
        z[l] = sample_latent_at(x[l], a, prior, rng);
    }
    return z;
}

Categorical posterior_mean_at(Token z_t, std::span<const double> x, double alpha_t, double alpha_s,
                              const PriorSpec& prior) {
    const int n = prior.size();
    check_token(z_t, n, "latent");
    if (static_cast<int>(x.size()) != n) {
        throw ContractError("posterior: clean distribution has wrong size");
    }
    check_step(alpha_t, alpha_s);
    const auto& pi = prior.pi().probs();
    const auto zi = static_cast<std::size_t>(z_t);
    const double ratio = alpha_t / alpha_s;
    const double denom = alpha_t * x[zi] + (1.0 - alpha_t) * pi[zi];
    if (!(denom > 0.0)) {
        throw DomainError("posterior: latent has probability zero under the forward process");
    }
    std::vector<double> p(static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double from_zt = (j == zi ? ratio : 0.0) + (1.0 - ratio) * pi[zi];
        const double from_x = alpha_s * x[j] + (1.0 - alpha_s) * pi[j];
        p[j] = from_zt * from_x / denom;
    }
    return Categorical(std::move(p));
}

Categorical posterior_at(Token z_t, Token x, double alpha_t, double alpha_s, const PriorSpec& prior) {
    check_token(x, prior.size(), "clean");
    const auto xv = one_hot_vec(prior.size(), x);
    return posterior_mean_at(z_t, xv, alpha_t, alpha_s, prior);
}

Categorical posterior(const NoiseSchedule& schedule, Token z_t, Token x, double t, double s,
                      const PriorSpec& prior) {
    if (!(s < t)) {
        throw ContractError("posterior requires s < t");
    }
    return posterior_at(z_t, x, schedule.alpha(t), schedule.alpha(s), prior);
}

Categorical posterior_uniform_mean_at(Token z_t, std::span<const double> x, double alpha_t, double alpha_s) {
    const int n = static_cast<int>(x.size());
    check_token(z_t, n, "latent");
    check_step(alpha_t, alpha_s);
    const double nd = static_cast<double>(n);
    const auto zi = static_cast<std::size_t>(z_t);
    const double ratio = alpha_t / alpha_s;
    const double denom = nd * alpha_t * x[zi] + 1.0 - alpha_t;
    if (!(denom > 0.0)) {
        throw DomainError("uniform posterior: zero denominator");
    }
    const double floor = (alpha_s - alpha_t) * (1.0 - alpha_s) / (nd * alpha_s);
    std::vector<double> p(static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < p.size(); ++j) {
        const double zj = (j == zi) ? 1.0 : 0.0;
        p[j] = (nd * alpha_t * zj * x[j] + (ratio - alpha_t) * zj + (alpha_s - alpha_t) * x[j] + floor) / denom;
    }
    return Categorical(std::move(p));
}

Categorical posterior_uniform_at(Token z_t, Token x, double alpha_t, double alpha_s, int n) {
    check_token(x, n, "clean");
    const auto xv = one_hot_vec(n, x);
    return posterior_uniform_mean_at(z_t, xv, alpha_t, alpha_s);
}

Categorical posterior_uniform(const NoiseSchedule& schedule, Token z_t, Token x, double t, double s, int n) {
    if (!(s < t)) {
        throw ContractError("posterior requires s < t");
    }
    return posterior_uniform_at(z_t, x, schedule.alpha(t), schedule.alpha(s), n);
}

Categorical posterior_absorbing_mean_at(Token z_t, std::span<const double> x, double alpha_t, double alpha_s,
                                        const PriorSpec& prior) {
    if (prior.kind() != PriorKind::absorbing) {
        throw ContractError("absorbing posterior needs an absorbing prior");
    }
    const int n = prior.size();
    check_token(z_t, n, "latent");
    check_step(alpha_t, alpha_s);
    const Token m = prior.mask();
    const auto mi = static_cast<std::size_t>(m);
    if (z_t != m) {
        if (!(x[static_cast<std::size_t>(z_t)] > 0.0)) {
            throw DomainError("absorbing posterior: unmasked latent disagrees with clean data");
        }
        return Categorical::one_hot(n, z_t);
    }
    const double denom = alpha_t * x[mi] + 1.0 - alpha_t;
    if (!(denom > 0.0)) {
        throw DomainError("absorbing posterior: zero denominator");
    }
    std::vector<double> p(static_cast<std::size_t>(n));
    for (std::size_t j = 0; j < p.size(); ++j) {
        p[j] = (j == mi) ? (alpha_s * x[j] + 1.0 - alpha_s) / denom : (alpha_s - alpha_t) * x[j] / denom;
    }
    return Categorical(std::move(p));
}

Categorical reverse_posterior_at(Token z_t, std::span<const double> x, double alpha_t, double alpha_s,
                                 const PriorSpec& prior) {
    switch (prior.kind()) {
        case PriorKind::uniform:
            return posterior_uniform_mean_at(z_t, x, alpha_t, alpha_s);
        case PriorKind::absorbing:
            return posterior_absorbing_mean_at(z_t, x, alpha_t, alpha_s, prior);
        case PriorKind::general:
            return posterior_mean_at(z_t, x, alpha_t, alpha_s, prior);
    }
    throw ContractError("unknown prior kind");
}

}  // namespace ddiff
