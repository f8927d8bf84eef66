// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/rng.hpp"

#include <cmath>

namespace ddiff {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng::Rng(std::uint64_t seed) : engine_(splitmix64(seed)) {}

Rng Rng::substream(std::uint64_t seed, std::initializer_list<std::uint64_t> keys) {
    std::uint64_t h = splitmix64(seed);
    for (std::uint64_t k : keys) {
        h = splitmix64(h ^ splitmix64(k + 0x632be59bd9b4e019ULL));
    }
    return Rng(h);
}

double Rng::uniform() {
    // 53 random mantissa bits.
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double Rng::uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

double Rng::normal() {
    std::normal_distribution<double> dist(0.0, 1.0);
    return dist(engine_);
}

bool Rng::bernoulli(double p) { return uniform() < p; }

int Rng::uniform_int(int n) {
    if (n <= 0) {
        throw ContractError("uniform_int needs n > 0");
    }
    std::uniform_int_distribution<int> dist(0, n - 1);
    return dist(engine_);
}

Token Rng::categorical(std::span<const double> weights) {
    double total = 0.0;
    for (double w : weights) {
        if (!(w >= 0.0) || !std::isfinite(w)) {
            throw ContractError("categorical draw from invalid weights");
        }
        total += w;
    }
    if (!(total > 0.0)) {
        throw DomainError("categorical draw from zero mass");
    }
    const double u = uniform() * total;
    double acc = 0.0;
    int last_positive = 0;
    for (std::size_t i = 0; i < weights.size(); ++i) {
        if (weights[i] > 0.0) {
            last_positive = static_cast<int>(i);
        }
        acc += weights[i];
        if (u < acc) {
            return static_cast<Token>(i);
        }
    }
    return last_positive;
}

}  // namespace ddiff
