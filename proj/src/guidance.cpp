// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/guidance.hpp"

#include <cmath>
#include <limits>

namespace ddiff {

std::string to_string(GuidanceMode mode) {
    switch (mode) {
        case GuidanceMode::none:
            return "none";
        case GuidanceMode::cfg:
            return "cfg";
        case GuidanceMode::cbg_exact:
            return "cbg";
        case GuidanceMode::cbg_taylor:
            return "cbg-taylor";
    }
    return "unknown";
}

GuidanceMode guidance_mode_from_string(const std::string& name) {
    for (auto m : {GuidanceMode::none, GuidanceMode::cfg, GuidanceMode::cbg_exact, GuidanceMode::cbg_taylor}) {
        if (to_string(m) == name) {
            return m;
        }
    }
    throw ContractError("unknown guidance mode '" + name + "'");
}

void GuidanceConfig::validate(int num_classes) const {
    if (!std::isfinite(gamma) || gamma < 0.0) {
        throw ContractError("guidance gamma must be finite and non-negative");
    }
    if (mode == GuidanceMode::none) {
        return;
    }
    if (target_class < 0 || target_class >= num_classes) {
        throw ContractError("guidance target class out of range");
    }
}

namespace {

constexpr double kNegInf = -std::numeric_limits<double>::infinity();

double safe_log(double p) { return p > 0.0 ? std::log(p) : kNegInf; }

// c * log p with the convention 0 * log 0 = 0.
double scaled_log(double c, double p) { return c == 0.0 ? 0.0 : c * safe_log(p); }

Categorical normalize_log(std::vector<double> logw) {
    double m = kNegInf;
    for (double v : logw) {
        m = std::max(m, v);
    }
    if (m == kNegInf) {
        throw DomainError("guidance: every candidate has zero mass");
    }
    for (double& v : logw) {
        v = std::exp(v - m);
    }
    return Categorical::normalized(std::move(logw));
}

void check_rows(std::span<const Token> z_t, std::span<const Categorical> rows, const Classifier& classifier) {
    if (rows.size() != z_t.size() || static_cast<int>(z_t.size()) != classifier.length()) {
        throw ContractError("guidance: rows do not match the sequence length");
    }
    for (const auto& r : rows) {
        if (r.size() != classifier.vocab_size()) {
            throw ContractError("guidance: row size does not match the vocabulary");
        }
    }
}

}  // namespace

std::vector<Categorical> cfg_combine(std::span<const Categorical> cond_rows, std::span<const Categorical> uncond_rows,
                                     double gamma) {
    if (cond_rows.size() != uncond_rows.size()) {
        throw ContractError("cfg_combine: row counts differ");
    }
    // The exponent identities hold exactly; skip the log round trip.
    if (gamma == 1.0) {
        return {cond_rows.begin(), cond_rows.end()};
    }
    if (gamma == 0.0) {
        return {uncond_rows.begin(), uncond_rows.end()};
    }
    std::vector<Categorical> out;
    out.reserve(cond_rows.size());
    for (std::size_t l = 0; l < cond_rows.size(); ++l) {
        const auto& c = cond_rows[l];
        const auto& u = uncond_rows[l];
        if (c.size() != u.size()) {
            throw ContractError("cfg_combine: row sizes differ");
        }
        std::vector<double> logw(static_cast<std::size_t>(c.size()));
        for (std::size_t j = 0; j < logw.size(); ++j) {
            logw[j] = scaled_log(gamma, c[j]) + scaled_log(1.0 - gamma, u[j]);
            if (std::isnan(logw[j])) {
                // -inf + inf: one side forbids the token outright.
                logw[j] = kNegInf;
            }
        }
        out.push_back(normalize_log(std::move(logw)));
    }
    return out;
}

std::vector<Categorical> cbg_exact(const Classifier& classifier, std::span<const Token> z_t, double time,
                                   std::span<const Categorical> denoiser_rows, int y, double gamma) {
    check_rows(z_t, denoiser_rows, classifier);
    const int n = classifier.vocab_size();
    Sequence candidate(z_t.begin(), z_t.end());
    std::vector<Categorical> out;
    out.reserve(z_t.size());
    for (std::size_t l = 0; l < z_t.size(); ++l) {
        std::vector<double> logw(static_cast<std::size_t>(n));
        for (int v = 0; v < n; ++v) {
            candidate[l] = v;
            const double log_py = classifier.log_probs(candidate, time).at(static_cast<std::size_t>(y));
            logw[static_cast<std::size_t>(v)] =
                safe_log(denoiser_rows[l][static_cast<std::size_t>(v)]) + (gamma == 0.0 ? 0.0 : gamma * log_py);
        }
        candidate[l] = z_t[l];
        out.push_back(normalize_log(std::move(logw)));
    }
    return out;
}

std::vector<Categorical> cbg_taylor(const Classifier& classifier, std::span<const Token> z_t, double time,
                                    std::span<const Categorical> denoiser_rows, int y, double gamma) {
    check_rows(z_t, denoiser_rows, classifier);
    const int n = classifier.vocab_size();
    const LogProbGrad lg = classifier.log_prob_and_grad(z_t, time, y);
    const double base = lg.log_probs.at(static_cast<std::size_t>(y));
    std::vector<Categorical> out;
    out.reserve(z_t.size());
    for (std::size_t l = 0; l < z_t.size(); ++l) {
        const auto g = lg.grad.row(static_cast<int>(l));
        const double at_current = g[static_cast<std::size_t>(z_t[l])];
        std::vector<double> logw(static_cast<std::size_t>(n));
        for (int v = 0; v < n; ++v) {
            const auto vi = static_cast<std::size_t>(v);
            const double log_py = base + g[vi] - at_current;
            logw[vi] = safe_log(denoiser_rows[l][vi]) + (gamma == 0.0 ? 0.0 : gamma * log_py);
        }
        out.push_back(normalize_log(std::move(logw)));
    }
    return out;
}

}  // namespace ddiff
