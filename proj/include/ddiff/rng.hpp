// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstdint>
#include <initializer_list>
#include <random>
#include <span>

#include "ddiff/core.hpp"

namespace ddiff {

// Seeded random stream. Independent substreams are derived by hashing the
// base seed together with a list of stream keys (example index, sequence
// index, ...), so results never depend on scheduling order.
class Rng {
public:
    explicit Rng(std::uint64_t seed = 0);

    static Rng substream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys);

    double uniform();  // [0, 1)
    double uniform(double lo, double hi);
    double normal();
    bool bernoulli(double p);
    int uniform_int(int n);  // [0, n)
    // Inverse-CDF draw from non-negative weights (need not be normalized).
    Token categorical(std::span<const double> weights);
    Token categorical(const Categorical& dist) { return categorical(dist.span()); }

    std::mt19937_64& engine() { return engine_; }

private:
    std::mt19937_64 engine_;
};

std::uint64_t splitmix64(std::uint64_t x);

}  // namespace ddiff
