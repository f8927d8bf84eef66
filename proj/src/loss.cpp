// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/loss.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <sstream>

namespace ddiff {

std::string to_string(Objective objective) {
    switch (objective) {
        case Objective::nelbo_discrete:
            return "nelbo_discrete";
        case Objective::udlm_continuous:
            return "udlm_continuous";
        case Objective::mdlm_continuous:
            return "mdlm_continuous";
        case Objective::sedd_form:
            return "sedd_form";
    }
    return "unknown";
}

Objective objective_from_string(const std::string& name) {
    for (auto o : {Objective::nelbo_discrete, Objective::udlm_continuous, Objective::mdlm_continuous,
                   Objective::sedd_form}) {
        if (to_string(o) == name) {
            return o;
        }
    }
    throw FormatError("unknown objective '" + name + "'");
}

void LossSpec::validate() const {
    if (objective == Objective::nelbo_discrete && T < 1) {
        throw ContractError("discrete objective needs T >= 1");
    }
    if (mc_samples_per_example < 1) {
        throw ContractError("mc_samples_per_example must be positive");
    }
}

double kl_divergence(std::span<const double> q, std::span<const double> p) {
    if (q.size() != p.size()) {
        throw ContractError("kl_divergence: size mismatch");
    }
    double kl = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        if (q[j] <= 0.0) {
            continue;
        }
        if (p[j] <= 0.0) {
            return std::numeric_limits<double>::infinity();
        }
        kl += q[j] * (std::log(q[j]) - std::log(p[j]));
    }
    return std::max(kl, 0.0);
}

namespace {

std::vector<double> one_hot_vec(int n, Token x) {
    std::vector<double> v(static_cast<std::size_t>(n), 0.0);
    v[static_cast<std::size_t>(x)] = 1.0;
    return v;
}

// Calls fn(z, q(z | x)) for every latent sequence with positive probability.
template <class Fn>
void for_each_latent(std::span<const Token> x, double alpha, const PriorSpec& prior, Fn&& fn) {
    const int n = prior.size();
    const std::size_t len = x.size();
    std::vector<Categorical> marg;
    marg.reserve(len);
    for (Token tok : x) {
        marg.push_back(marginal_at(tok, alpha, prior));
    }
    Sequence z(len, 0);
    while (true) {
        double w = 1.0;
        for (std::size_t l = 0; l < len && w > 0.0; ++l) {
            w *= marg[l][static_cast<std::size_t>(z[l])];
        }
        if (w > 0.0) {
            fn(z, w);
        }
        std::size_t l = len;
        while (l > 0 && ++z[l - 1] == n) {
            z[l - 1] = 0;
            --l;
        }
        if (l == 0) {
            break;
        }
    }
}

void check_sizes(std::span<const Token> x, const Denoiser& denoiser) {
    if (static_cast<int>(x.size()) != denoiser.length()) {
        throw ContractError("sequence length does not match the denoiser");
    }
    check_sequence(x, denoiser.vocab_size());
}

std::string describe(double t, std::span<const Token> z) {
    std::ostringstream os;
    os << "t=" << t << " z=[";
    for (std::size_t l = 0; l < z.size(); ++l) {
        os << (l ? "," : "") << z[l];
    }
    os << "]";
    return os.str();
}

}  // namespace

double diffusion_kl_at(Token x, Token z_t, double alpha_t, double alpha_s, std::span<const double> x_theta,
                       const PriorSpec& prior) {
    const auto xv = one_hot_vec(prior.size(), x);
    const Categorical q = reverse_posterior_at(z_t, xv, alpha_t, alpha_s, prior);
    const Categorical p = reverse_posterior_at(z_t, x_theta, alpha_t, alpha_s, prior);
    return kl_divergence(q.span(), p.span());
}

double diffusion_kl(const NoiseSchedule& schedule, Token x, Token z_t, double t, double s,
                    const Categorical& x_theta, const PriorSpec& prior) {
    if (!(s < t)) {
        throw ContractError("diffusion_kl requires s < t");
    }
    return diffusion_kl_at(x, z_t, schedule.alpha(t), schedule.alpha(s), x_theta.span(), prior);
}

TokenLoss diffusion_kl_grad_at(Token x, Token z_t, double alpha_t, double alpha_s, std::span<const double> x_theta,
                               const PriorSpec& prior) {
    const int n = prior.size();
    TokenLoss out;
    out.grad.assign(static_cast<std::size_t>(n), 0.0);
    if (prior.kind() == PriorKind::absorbing && z_t != prior.mask()) {
        // Carry-over: both posteriors are the same point mass.
        out.value = 0.0;
        return out;
    }
    const auto xv = one_hot_vec(n, x);
    const Categorical q = reverse_posterior_at(z_t, xv, alpha_t, alpha_s, prior);
    const auto& pi = prior.pi().probs();
    const auto zi = static_cast<std::size_t>(z_t);
    const double ratio = alpha_t / alpha_s;
    const double denom = alpha_t * x_theta[zi] + (1.0 - alpha_t) * pi[zi];
    // p_j = A_j B_j / denom with B_j linear in x_theta.
    double value = 0.0;
    for (std::size_t j = 0; j < static_cast<std::size_t>(n); ++j) {
        const double qj = q[j];
        if (qj <= 0.0) {
            continue;
        }
        const double a = (j == zi ? ratio : 0.0) + (1.0 - ratio) * pi[zi];
        const double num = a * (alpha_s * x_theta[j] + (1.0 - alpha_s) * pi[j]);
        if (!(num > 0.0) || !(denom > 0.0)) {
            out.value = std::numeric_limits<double>::infinity();
            return out;
        }
        value += qj * (std::log(qj) - std::log(num) + std::log(denom));
        out.grad[j] -= qj * a * alpha_s / num;
    }
    out.grad[zi] += alpha_t / denom;
    out.value = std::max(value, 0.0);
    return out;
}

double nelbo_step_term(const Denoiser& denoiser, std::span<const Token> x, std::span<const Token> z, int i, int T) {
    if (i < 1 || i > T) {
        throw ContractError("step index outside 1..T");
    }
    const auto& schedule = denoiser.schedule();
    const double t = grid_time(i, T);
    const double alpha_t = schedule.alpha(t);
    const double alpha_s = schedule.alpha(grid_time(i - 1, T));
    const Matrix rows = denoiser.predict(z, t);
    double total = 0.0;
    for (std::size_t l = 0; l < x.size(); ++l) {
        total += diffusion_kl_at(x[l], z[l], alpha_t, alpha_s, rows.row(static_cast<int>(l)), denoiser.prior());
    }
    return total;
}

double nelbo_prior_term(const Denoiser& denoiser, std::span<const Token> x) {
    const double alpha_1 = denoiser.schedule().alpha(1.0);
    double total = 0.0;
    for (Token tok : x) {
        total += kl_divergence(marginal_at(tok, alpha_1, denoiser.prior()).span(), denoiser.prior().pi().span());
    }
    return total;
}

double nelbo_discrete_exact(std::span<const Token> x, const Denoiser& denoiser, int T) {
    check_sizes(x, denoiser);
    if (T < 1) {
        throw ContractError("T must be at least 1");
    }
    double total = nelbo_prior_term(denoiser, x);
    for (int i = 1; i <= T; ++i) {
        const double alpha_t = denoiser.schedule().alpha(grid_time(i, T));
        for_each_latent(x, alpha_t, denoiser.prior(),
                        [&](const Sequence& z, double w) { total += w * nelbo_step_term(denoiser, x, z, i, T); });
    }
    return total;
}

Estimate nelbo_discrete_mc(std::span<const Token> x, const Denoiser& denoiser, int T, Rng& rng, long samples) {
    check_sizes(x, denoiser);
    if (T < 1 || samples < 1) {
        throw ContractError("nelbo_discrete_mc needs T >= 1 and samples >= 1");
    }
    const double prior_term = nelbo_prior_term(denoiser, x);
    std::vector<double> values(static_cast<std::size_t>(samples));
    for (auto& v : values) {
        const int i = 1 + rng.uniform_int(T);
        const Sequence z = sample_latent_sequence(denoiser.schedule(), x, grid_time(i, T), denoiser.prior(), rng);
        v = prior_term + T * nelbo_step_term(denoiser, x, z, i, T);
    }
    return summarize(values);
}

// The bracket of the integrand is O(alpha); it is evaluated divided by alpha,
// using log1p(alpha a) / alpha for each logarithm, so no 1/alpha blow-up
// cancels numerically near t = 1.
double udlm_integrand_at(Token x, Token z_t, double alpha, double alpha_prime, std::span<const double> x_theta) {
    const int n = static_cast<int>(x_theta.size());
    check_sequence(std::span(&x, 1), n);
    check_sequence(std::span(&z_t, 1), n);
    const double nd = n;
    auto scaled_log = [alpha](double a) { return alpha > 1e-300 ? std::log1p(alpha * a) / alpha : a; };
    const auto i = static_cast<std::size_t>(z_t);
    auto u = [&](std::size_t j) { return (static_cast<Token>(j) == x ? nd : 0.0) - 1.0; };
    auto u_theta = [&](std::size_t j) { return nd * x_theta[j] - 1.0; };
    const double xbar_i = 1.0 + alpha * u(i);
    const double xbar_theta_i = 1.0 + alpha * u_theta(i);
    double bracket = nd * (u_theta(i) - u(i)) / (xbar_i * xbar_theta_i);
    const double log_i = scaled_log(u(i));
    const double log_theta_i = scaled_log(u_theta(i));
    for (std::size_t j = 0; j < x_theta.size(); ++j) {
        if (j == i) {
            continue;
        }
        const double r = (1.0 + alpha * u(j)) / xbar_i;
        bracket -= r * (log_theta_i - scaled_log(u_theta(j)) + scaled_log(u(j)) - log_i);
    }
    return alpha_prime / nd * bracket;
}

double udlm_integrand(const NoiseSchedule& schedule, Token x, Token z_t, double t, const Categorical& x_theta) {
    if (t < schedule.t_min() || t > schedule.t_max()) {
        throw ContractError("udlm_integrand: t outside the clamped range");
    }
    return udlm_integrand_at(x, z_t, schedule.alpha(t), schedule.alpha_prime(t), x_theta.span());
}

TokenLoss udlm_integrand_grad_at(Token x, Token z_t, double alpha, double alpha_prime,
                                 std::span<const double> x_theta) {
    const int n = static_cast<int>(x_theta.size());
    TokenLoss out;
    out.value = udlm_integrand_at(x, z_t, alpha, alpha_prime, x_theta);
    out.grad.assign(x_theta.size(), 0.0);
    const auto i = static_cast<std::size_t>(z_t);
    auto xbar = [&](std::size_t j) { return n * alpha * (static_cast<Token>(j) == x ? 1.0 : 0.0) + 1.0 - alpha; };
    auto xbar_theta = [&](std::size_t j) { return n * alpha * x_theta[j] + 1.0 - alpha; };
    const double xi = xbar(i);
    const double xti = xbar_theta(i);
    double rsum = 0.0;
    for (std::size_t j = 0; j < x_theta.size(); ++j) {
        if (j == i) {
            continue;
        }
        const double r = xbar(j) / xi;
        rsum += r;
        out.grad[j] = alpha_prime * r / xbar_theta(j);
    }
    out.grad[i] = alpha_prime * (n / (xti * xti) - rsum / xti);
    return out;
}

double udlm_sequence_integrand(std::span<const Token> x, std::span<const Token> z, double t,
                               const Denoiser& denoiser, const IntegrandFn& integrand) {
    const auto& schedule = denoiser.schedule();
    const double alpha = schedule.alpha(t);
    const double alpha_prime = schedule.alpha_prime(t);
    const Matrix rows = denoiser.predict(z, t);
    double total = 0.0;
    for (std::size_t l = 0; l < x.size(); ++l) {
        total += integrand(x[l], z[l], alpha, alpha_prime, rows.row(static_cast<int>(l)));
    }
    return total;
}

double udlm_expected_integrand(std::span<const Token> x, double t, const Denoiser& denoiser,
                               const IntegrandFn& integrand) {
    check_sizes(x, denoiser);
    double total = 0.0;
    for_each_latent(x, denoiser.schedule().alpha(t), denoiser.prior(), [&](const Sequence& z, double w) {
        total += w * udlm_sequence_integrand(x, z, t, denoiser, integrand);
    });
    return total;
}

Estimate udlm_loss(std::span<const Token> x, const Denoiser& denoiser, Rng& rng, long mc_samples) {
    check_sizes(x, denoiser);
    if (denoiser.prior().kind() != PriorKind::uniform) {
        throw ContractError("udlm_loss needs a uniform-prior model");
    }
    if (mc_samples < 1) {
        throw ContractError("mc_samples must be positive");
    }
    const auto& schedule = denoiser.schedule();
    const double width = schedule.t_max() - schedule.t_min();
    std::vector<double> values(static_cast<std::size_t>(mc_samples));
    for (auto& v : values) {
        const double t = rng.uniform(schedule.t_min(), schedule.t_max());
        const Sequence z = sample_latent_sequence(schedule, x, t, denoiser.prior(), rng);
        v = width * udlm_sequence_integrand(x, z, t, denoiser);
        if (!std::isfinite(v)) {
            throw NumericError("udlm_loss: non-finite integrand at " + describe(t, z));
        }
    }
    return summarize(values);
}

TokenLoss mdlm_token_grad_at(Token x, Token z_t, double alpha, double alpha_prime, std::span<const double> x_theta,
                             Token mask) {
    TokenLoss out;
    out.grad.assign(x_theta.size(), 0.0);
    if (z_t != mask) {
        return out;
    }
    const double w = alpha_prime / (1.0 - alpha);
    const double p = x_theta[static_cast<std::size_t>(x)];
    out.value = w * std::log(p);
    out.grad[static_cast<std::size_t>(x)] = w / p;
    return out;
}

Estimate mdlm_loss(std::span<const Token> x, const Denoiser& denoiser, Rng& rng, long mc_samples) {
    check_sizes(x, denoiser);
    if (denoiser.prior().kind() != PriorKind::absorbing) {
        throw ContractError("mdlm_loss needs an absorbing-prior model");
    }
    if (mc_samples < 1) {
        throw ContractError("mc_samples must be positive");
    }
    const auto& schedule = denoiser.schedule();
    const Token mask = denoiser.prior().mask();
    const double width = schedule.t_max() - schedule.t_min();
    std::vector<double> values(static_cast<std::size_t>(mc_samples));
    for (auto& v : values) {
        const double t = rng.uniform(schedule.t_min(), schedule.t_max());
        const Sequence z = sample_latent_sequence(schedule, x, t, denoiser.prior(), rng);
        const double alpha = schedule.alpha(t);
        const double alpha_prime = schedule.alpha_prime(t);
        const Matrix rows = denoiser.predict(z, t);
        double total = 0.0;
        for (std::size_t l = 0; l < x.size(); ++l) {
            total += mdlm_token_grad_at(x[l], z[l], alpha, alpha_prime, rows.row(static_cast<int>(l)), mask).value;
        }
        v = width * total;
        if (!std::isfinite(v)) {
            throw NumericError("mdlm_loss: non-finite integrand at " + describe(t, z));
        }
    }
    return summarize(values);
}

double sedd_form_nelbo_at(Token x, Token z_t, double alpha, double alpha_prime, std::span<const double> x_theta) {
    const int n = static_cast<int>(x_theta.size());
    check_sequence(std::span(&x, 1), n);
    check_sequence(std::span(&z_t, 1), n);
    const double rate = -alpha_prime / (n * alpha);
    const auto i = static_cast<std::size_t>(z_t);
    std::vector<double> q(x_theta.size());
    std::vector<double> m(x_theta.size());
    for (std::size_t j = 0; j < q.size(); ++j) {
        q[j] = alpha * (static_cast<Token>(j) == x ? 1.0 : 0.0) + (1.0 - alpha) / n;
        m[j] = alpha * x_theta[j] + (1.0 - alpha) / n;
    }
    double total = 0.0;
    for (std::size_t j = 0; j < q.size(); ++j) {
        if (j == i) {
            continue;
        }
        const double ratio = q[j] / q[i];
        const double score = m[j] / m[i];
        if (!(ratio > 0.0) || !(score > 0.0)) {
            throw DomainError("sedd_form_nelbo: zero marginal ratio");
        }
        total += rate * (score - ratio * std::log(score) + ratio * (std::log(ratio) - 1.0));
    }
    return total;
}

double sedd_form_nelbo(const NoiseSchedule& schedule, Token x, Token z_t, double t, const Categorical& x_theta) {
    return sedd_form_nelbo_at(x, z_t, schedule.alpha(t), schedule.alpha_prime(t), x_theta.span());
}

double bpc(double nelbo_nats, int length) {
    if (length < 1) {
        throw ContractError("length must be positive");
    }
    return nelbo_nats / (length * std::numbers::ln2);
}

double ppl(double nelbo_nats, int length) {
    if (length < 1) {
        throw ContractError("length must be positive");
    }
    return std::exp(nelbo_nats / length);
}

Estimate summarize(std::span<const double> values) {
    Estimate e;
    e.samples = static_cast<long>(values.size());
    if (values.empty()) {
        return e;
    }
    double mean = 0.0;
    for (double v : values) {
        mean += v;
    }
    mean /= static_cast<double>(values.size());
    double var = 0.0;
    for (double v : values) {
        var += (v - mean) * (v - mean);
    }
    e.value = mean;
    if (values.size() > 1) {
        var /= static_cast<double>(values.size() - 1);
        e.std_error = std::sqrt(var / static_cast<double>(values.size()));
    }
    return e;
}

}  // namespace ddiff
