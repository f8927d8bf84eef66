// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/core.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <set>

namespace ddiff {

Vocabulary::Vocabulary(std::vector<std::string> symbols, std::optional<Token> mask_index)
    : symbols_(std::move(symbols)), mask_index_(mask_index) {
    if (symbols_.size() < 2) {
        throw ContractError("vocabulary needs at least 2 symbols");
    }
    std::set<std::string> seen;
    for (const auto& s : symbols_) {
        if (s.empty()) {
            throw ContractError("vocabulary symbols must be non-empty");
        }
        if (!seen.insert(s).second) {
            throw ContractError("duplicate vocabulary symbol '" + s + "'");
        }
    }
    if (mask_index_ && (*mask_index_ < 0 || *mask_index_ >= size())) {
        throw ContractError("mask index out of range");
    }
}

Vocabulary Vocabulary::letters(int n_data, bool with_mask) {
    if (n_data < 1 || n_data > 26) {
        throw ContractError("letters vocabulary supports 1..26 data symbols");
    }
    std::vector<std::string> symbols;
    for (int i = 0; i < n_data; ++i) {
        symbols.emplace_back(1, static_cast<char>('a' + i));
    }
    std::optional<Token> mask;
    if (with_mask) {
        mask = n_data;
        symbols.emplace_back("#");
    }
    return Vocabulary(std::move(symbols), mask);
}

const std::string& Vocabulary::symbol(Token t) const {
    if (t < 0 || t >= size()) {
        throw ContractError("token " + std::to_string(t) + " outside vocabulary");
    }
    return symbols_[static_cast<std::size_t>(t)];
}

std::optional<Token> Vocabulary::find(const std::string& symbol) const {
    auto it = std::find(symbols_.begin(), symbols_.end(), symbol);
    if (it == symbols_.end()) {
        return std::nullopt;
    }
    return static_cast<Token>(it - symbols_.begin());
}

void check_sequence(std::span<const Token> seq, int vocab_size) {
    if (seq.empty()) {
        throw ContractError("sequence must have length >= 1");
    }
    for (Token t : seq) {
        if (t < 0 || t >= vocab_size) {
            throw ContractError("token " + std::to_string(t) + " outside [0, " + std::to_string(vocab_size) + ")");
        }
    }
}

Categorical::Categorical(std::vector<double> probs) : probs_(std::move(probs)) {
    if (probs_.empty()) {
        throw ContractError("categorical over an empty support");
    }
    double sum = 0.0;
    for (double p : probs_) {
        if (!std::isfinite(p) || p < 0.0) {
            throw ContractError("categorical entries must be finite and non-negative");
        }
        sum += p;
    }
    if (std::abs(sum - 1.0) > kSumTolerance) {
        throw ContractError("categorical entries sum to " + std::to_string(sum));
    }
}

Categorical Categorical::normalized(std::vector<double> weights) {
    double sum = 0.0;
    for (double w : weights) {
        if (!std::isfinite(w) || w < 0.0) {
            throw ContractError("cannot normalize negative or non-finite weights");
        }
        sum += w;
    }
    if (!(sum > 0.0)) {
        throw DomainError("cannot normalize a zero vector");
    }
    for (double& w : weights) {
        w /= sum;
    }
    return Categorical(std::move(weights), Unchecked{});
}

Categorical Categorical::one_hot(int size, Token index) {
    if (index < 0 || index >= size) {
        throw ContractError("one-hot index out of range");
    }
    std::vector<double> p(static_cast<std::size_t>(size), 0.0);
    p[static_cast<std::size_t>(index)] = 1.0;
    return Categorical(std::move(p), Unchecked{});
}

Categorical Categorical::uniform(int size) {
    if (size < 1) {
        throw ContractError("uniform categorical needs positive size");
    }
    return Categorical(std::vector<double>(static_cast<std::size_t>(size), 1.0 / size), Unchecked{});
}

double total_variation(const Categorical& a, const Categorical& b) {
    if (a.size() != b.size()) {
        throw ContractError("total variation between different supports");
    }
    double acc = 0.0;
    for (int i = 0; i < a.size(); ++i) {
        acc += std::abs(a[i] - b[i]);
    }
    return 0.5 * acc;
}

double max_abs_diff(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size()) {
        throw ContractError("max_abs_diff on different lengths");
    }
    double m = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) {
        m = std::max(m, std::abs(a[i] - b[i]));
    }
    return m;
}

NoiseSchedule::NoiseSchedule(ScheduleKind kind, double t_min, double t_max)
    : kind_(kind), t_min_(t_min), t_max_(t_max) {
    if (!(t_min >= 0.0 && t_min < t_max && t_max <= 1.0)) {
        throw ContractError("schedule clamp must satisfy 0 <= t_min < t_max <= 1");
    }
}

double NoiseSchedule::alpha(double t) const {
    if (!(t >= 0.0 && t <= 1.0)) {
        throw ContractError("alpha: t outside [0, 1]");
    }
    return 1.0 - t;
}

double NoiseSchedule::alpha_prime(double t) const {
    if (!(t > 0.0 && t < 1.0)) {
        throw ContractError("alpha_prime: t outside (0, 1)");
    }
    return -1.0;
}

double NoiseSchedule::alpha_ratio(double t, double s) const {
    if (!(s >= 0.0 && s <= t && t <= 1.0)) {
        throw ContractError("alpha_ratio requires 0 <= s <= t <= 1");
    }
    const double a_s = alpha(s);
    if (a_s <= 0.0) {
        throw DomainError("alpha_ratio: alpha(s) = 0");
    }
    return alpha(t) / a_s;
}

double NoiseSchedule::clamp(double t) const { return std::clamp(t, t_min_, t_max_); }

std::string to_string(ScheduleKind kind) {
    switch (kind) {
        case ScheduleKind::log_linear:
            return "log_linear";
    }
    return "unknown";
}

ScheduleKind schedule_kind_from_string(const std::string& name) {
    if (name == "log_linear") {
        return ScheduleKind::log_linear;
    }
    throw FormatError("unknown schedule kind '" + name + "'");
}

double log_sum_exp(std::span<const double> v) {
    double m = -std::numeric_limits<double>::infinity();
    for (double x : v) {
        m = std::max(m, x);
    }
    if (!std::isfinite(m)) {
        return m;
    }
    double acc = 0.0;
    for (double x : v) {
        acc += std::exp(x - m);
    }
    return m + std::log(acc);
}

}  // namespace ddiff
