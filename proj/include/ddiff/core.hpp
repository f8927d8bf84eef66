// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Token, vocabulary, distribution and schedule primitives shared by every
// other part of the library.

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace ddiff {

// Caller passed arguments outside an operation's contract.
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Mathematical domain violation (zero denominators, probability-zero latents).
class DomainError : public std::domain_error {
public:
    using std::domain_error::domain_error;
};

// Non-finite values produced during evaluation or training.
class NumericError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

// Malformed files (datasets, checkpoints, configs).
class FormatError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

using Token = int;
using Sequence = std::vector<Token>;

class Vocabulary {
public:
    Vocabulary(std::vector<std::string> symbols, std::optional<Token> mask_index = std::nullopt);

    // Convenience: N single-character symbols 'a', 'b', ... plus an optional
    // trailing mask symbol "#".
    static Vocabulary letters(int n_data, bool with_mask = false);

    int size() const { return static_cast<int>(symbols_.size()); }
    const std::optional<Token>& mask_index() const { return mask_index_; }
    bool has_mask() const { return mask_index_.has_value(); }
    const std::vector<std::string>& symbols() const { return symbols_; }
    const std::string& symbol(Token t) const;
    std::optional<Token> find(const std::string& symbol) const;

    bool operator==(const Vocabulary&) const = default;

private:
    std::vector<std::string> symbols_;
    std::optional<Token> mask_index_;
};

void check_sequence(std::span<const Token> seq, int vocab_size);

class Categorical {
public:
    static constexpr double kSumTolerance = 1e-9;

    // Rejects negative, non-finite, or unnormalized vectors.
    explicit Categorical(std::vector<double> probs);

    // Renormalizes a non-negative vector with positive mass.
    static Categorical normalized(std::vector<double> weights);
    static Categorical one_hot(int size, Token index);
    static Categorical uniform(int size);

    int size() const { return static_cast<int>(probs_.size()); }
    double operator[](std::size_t i) const { return probs_[i]; }
    const std::vector<double>& probs() const { return probs_; }
    std::span<const double> span() const { return probs_; }

private:
    struct Unchecked {};
    Categorical(std::vector<double> probs, Unchecked) : probs_(std::move(probs)) {}

    std::vector<double> probs_;
};

double total_variation(const Categorical& a, const Categorical& b);
double max_abs_diff(std::span<const double> a, std::span<const double> b);

enum class ScheduleKind { log_linear };

// alpha(t) = 1 - t for the log-linear schedule. Stochastic evaluations clamp
// t to [t_min, t_max] so that alpha'(t) / alpha(t) stays finite.
class NoiseSchedule {
public:
    explicit NoiseSchedule(ScheduleKind kind = ScheduleKind::log_linear, double t_min = 1e-5,
                           double t_max = 1.0 - 1e-5);

    ScheduleKind kind() const { return kind_; }
    double t_min() const { return t_min_; }
    double t_max() const { return t_max_; }

    double alpha(double t) const;
    double alpha_prime(double t) const;
    // alpha(t) / alpha(s) for s < t.
    double alpha_ratio(double t, double s) const;
    double clamp(double t) const;

    bool operator==(const NoiseSchedule&) const = default;

private:
    ScheduleKind kind_;
    double t_min_;
    double t_max_;
};

std::string to_string(ScheduleKind kind);
ScheduleKind schedule_kind_from_string(const std::string& name);

// Dense row-major matrix used by the model and the rate-matrix code.
struct Matrix {
    int rows = 0;
    int cols = 0;
    std::vector<double> data;

    Matrix() = default;
    Matrix(int r, int c, double fill = 0.0)
        : rows(r), cols(c), data(static_cast<std::size_t>(r) * static_cast<std::size_t>(c), fill) {}

    double& operator()(int r, int c) { return data[static_cast<std::size_t>(r) * cols + c]; }
    double operator()(int r, int c) const { return data[static_cast<std::size_t>(r) * cols + c]; }
    std::span<double> row(int r) { return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)}; }
    std::span<const double> row(int r) const {
        return {data.data() + static_cast<std::size_t>(r) * cols, static_cast<std::size_t>(cols)};
    }
    std::size_t size() const { return data.size(); }
    bool same_shape(const Matrix& o) const { return rows == o.rows && cols == o.cols; }

    bool operator==(const Matrix&) const = default;
};

// Numerically stable log(sum(exp(v))).
double log_sum_exp(std::span<const double> v);

}  // namespace ddiff
