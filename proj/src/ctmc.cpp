// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/ctmc.hpp"

#include <cmath>
#include <limits>

namespace ddiff {

namespace {

void rebuild_diagonal(RateMatrix& r) {
    for (int a = 0; a < r.rows; ++a) {
        double off = 0.0;
        for (int b = 0; b < r.cols; ++b) {
            if (b != a) {
                off += r(a, b);
            }
        }
        r(a, a) = -off;
    }
}

void check_square(const RateMatrix& r) {
    if (r.rows != r.cols || r.rows < 1) {
        throw ContractError("rate matrix must be square");
    }
}

}  // namespace

void validate_rate(const RateMatrix& rate, double tol) {
    check_square(rate);
    for (int a = 0; a < rate.rows; ++a) {
        double sum = 0.0;
        double scale = 0.0;
        for (int b = 0; b < rate.cols; ++b) {
            const double v = rate(a, b);
            if (!std::isfinite(v)) {
                throw NumericError("rate matrix has non-finite entries");
            }
            if (b != a && v < 0.0) {
                throw ContractError("rate matrix has a negative off-diagonal entry");
            }
            sum += v;
            scale = std::max(scale, std::abs(v));
        }
        if (std::abs(sum) > tol * std::max(1.0, scale)) {
            throw ContractError("rate matrix row does not sum to zero");
        }
    }
}

RateMatrix uniform_rate(const NoiseSchedule& schedule, double t, int n) {
    if (n < 2) {
        throw ContractError("rate matrix needs N >= 2");
    }
    const double c = -schedule.alpha_prime(t) / (n * schedule.alpha(t));
    RateMatrix r(n, n, c);
    for (int a = 0; a < n; ++a) {
        r(a, a) = c * (1 - n);
    }
    return r;
}

RateMatrix reverse_rate(const RateMatrix& forward, const std::function<double(Token)>& marginal) {
    check_square(forward);
    RateMatrix r(forward.rows, forward.cols);
    for (int a = 0; a < r.rows; ++a) {
        const double qa = marginal(a);
        if (!(qa > 0.0)) {
            throw DomainError("reverse rate: zero marginal");
        }
        for (int b = 0; b < r.cols; ++b) {
            if (b != a) {
                r(a, b) = forward(b, a) * marginal(b) / qa;
            }
        }
    }
    rebuild_diagonal(r);
    return r;
}

RateMatrix model_reverse_rate(const NoiseSchedule& schedule, double t,
                              const std::function<std::vector<double>(Token)>& x_theta_at) {
    const double alpha = schedule.alpha(t);
    const double c = -schedule.alpha_prime(t) / alpha;
    std::vector<double> first = x_theta_at(0);
    const int n = static_cast<int>(first.size());
    RateMatrix r(n, n);
    for (int a = 0; a < n; ++a) {
        const std::vector<double> x = a == 0 ? first : x_theta_at(a);
        auto xbar = [&](int j) { return n * alpha * x[static_cast<std::size_t>(j)] + 1.0 - alpha; };
        const double base = xbar(a);
        if (!(base > 0.0)) {
            throw DomainError("model reverse rate: zero predicted marginal");
        }
        for (int b = 0; b < n; ++b) {
            if (b != a) {
                r(a, b) = c / n * xbar(b) / base;
            }
        }
    }
    rebuild_diagonal(r);
    return r;
}

double max_euler_dt(const RateMatrix& rate) {
    check_square(rate);
    double worst = 0.0;
    for (int a = 0; a < rate.rows; ++a) {
        worst = std::max(worst, std::abs(rate(a, a)));
    }
    return worst > 0.0 ? 1.0 / worst : std::numeric_limits<double>::infinity();
}

Categorical euler_transition(Token z, const RateMatrix& rate, double dt) {
    check_square(rate);
    if (z < 0 || z >= rate.rows) {
        throw ContractError("euler step: state out of range");
    }
    if (dt < 0.0) {
        throw ContractError("euler step: negative dt");
    }
    if (dt > max_euler_dt(rate)) {
        throw ContractError("euler step: dt exceeds the stability bound of the rate matrix");
    }
    std::vector<double> p(static_cast<std::size_t>(rate.cols));
    for (int b = 0; b < rate.cols; ++b) {
        p[static_cast<std::size_t>(b)] = (b == z ? 1.0 : 0.0) + dt * rate(z, b);
    }
    // Clip rounding noise in the stay probability.
    auto& stay = p[static_cast<std::size_t>(z)];
    stay = std::max(stay, 0.0);
    return Categorical::normalized(std::move(p));
}

Token euler_step(Token z, const RateMatrix& rate, double dt, Rng& rng) {
    return rng.categorical(euler_transition(z, rate, dt));
}

RateMatrix guided_rate_cfg(const RateMatrix& cond_rate, const RateMatrix& uncond_rate, double gamma) {
    check_square(cond_rate);
    if (!cond_rate.same_shape(uncond_rate)) {
        throw ContractError("guided rate: shapes differ");
    }
    if (gamma == 1.0) {
        return cond_rate;
    }
    if (gamma == 0.0) {
        return uncond_rate;
    }
    RateMatrix r(cond_rate.rows, cond_rate.cols);
    for (int a = 0; a < r.rows; ++a) {
        for (int b = 0; b < r.cols; ++b) {
            if (b == a) {
                continue;
            }
            const double c = cond_rate(a, b);
            const double u = uncond_rate(a, b);
            r(a, b) = (c > 0.0 && u > 0.0) ? std::exp(gamma * std::log(c) + (1.0 - gamma) * std::log(u)) : 0.0;
        }
    }
    rebuild_diagonal(r);
    return r;
}

RateMatrix guided_rate_cbg(const RateMatrix& rate, const std::function<double(Token, Token)>& classifier_ratio,
                           double gamma) {
    check_square(rate);
    if (gamma == 0.0) {
        return rate;
    }
    RateMatrix r(rate.rows, rate.cols);
    for (int a = 0; a < r.rows; ++a) {
        for (int b = 0; b < r.cols; ++b) {
            if (b != a) {
                r(a, b) = rate(a, b) * std::pow(classifier_ratio(a, b), gamma);
            }
        }
    }
    rebuild_diagonal(r);
    return r;
}

}  // namespace ddiff
