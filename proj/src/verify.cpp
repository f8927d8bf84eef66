// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/verify.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <iomanip>
#include <limits>
#include <sstream>

#include <json.hpp>

#include "ddiff/ctmc.hpp"
#include "ddiff/guidance.hpp"
#include "ddiff/parallel.hpp"
#include "ddiff/sampler.hpp"
#include "ddiff/train.hpp"

namespace ddiff {

std::vector<Sequence> enumerate_sequences(int n, int length) {
    if (n < 1 || length < 1) {
        throw ContractError("enumerate_sequences needs N >= 1 and L >= 1");
    }
    double count = std::pow(static_cast<double>(n), length);
    if (count > 1e6) {
        throw ContractError("enumerate_sequences: N^L exceeds 10^6");
    }
    std::vector<Sequence> out;
    out.reserve(static_cast<std::size_t>(count));
    Sequence z(static_cast<std::size_t>(length), 0);
    while (true) {
        out.push_back(z);
        std::size_t l = z.size();
        while (l > 0 && ++z[l - 1] == n) {
            z[l - 1] = 0;
            --l;
        }
        if (l == 0) {
            return out;
        }
    }
}

namespace {

// Marginal entry q(z_t = b | z_0 = a) for keep probability `keep`.
double forward_prob(Token a, Token b, double keep, const PriorSpec& prior) {
    return (a == b ? keep : 0.0) + (1.0 - keep) * prior.pi()[static_cast<std::size_t>(b)];
}

// Bayes reverse step with a soft clean distribution x.
std::vector<double> bayes_soft(Token z_t, std::span<const double> x, double alpha_t, double alpha_s,
                               const PriorSpec& prior) {
    if (!(alpha_s > 0.0)) {
        throw DomainError("oracle: alpha_s = 0");
    }
    const double keep = alpha_t / alpha_s;
    const int n = prior.size();
    std::vector<double> w(static_cast<std::size_t>(n), 0.0);
    double total = 0.0;
    for (int j = 0; j < n; ++j) {
        double q_s = 0.0;
        for (int a = 0; a < n; ++a) {
            q_s += x[static_cast<std::size_t>(a)] * forward_prob(a, j, alpha_s, prior);
        }
        w[static_cast<std::size_t>(j)] = forward_prob(j, z_t, keep, prior) * q_s;
        total += w[static_cast<std::size_t>(j)];
    }
    if (!(total > 0.0)) {
        throw DomainError("oracle: latent has probability zero");
    }
    for (double& v : w) {
        v /= total;
    }
    return w;
}

}  // namespace

Categorical bayes_posterior_oracle(Token z_t, Token x, double alpha_t, double alpha_s, const PriorSpec& prior) {
    std::vector<double> xv(static_cast<std::size_t>(prior.size()), 0.0);
    xv.at(static_cast<std::size_t>(x)) = 1.0;
    return Categorical::normalized(bayes_soft(z_t, xv, alpha_t, alpha_s, prior));
}

Categorical bayes_posterior_oracle(const NoiseSchedule& schedule, Token z_t, Token x, double t, double s,
                                   const PriorSpec& prior) {
    if (!(s < t)) {
        throw ContractError("oracle requires s < t");
    }
    return bayes_posterior_oracle(z_t, x, schedule.alpha(t), schedule.alpha(s), prior);
}

double exact_reverse_nll(const Denoiser& denoiser, std::span<const Token> x, int T) {
    if (T < 1) {
        throw ContractError("exact_reverse_nll needs T >= 1");
    }
    const int n = denoiser.vocab_size();
    const int L = denoiser.length();
    if (static_cast<int>(x.size()) != L) {
        throw ContractError("sequence length does not match the denoiser");
    }
    const auto states = enumerate_sequences(n, L);
    if (std::pow(static_cast<double>(states.size()), 2.0) * T > 5e8) {
        throw ContractError("exact_reverse_nll: path budget exceeded");
    }
    const auto& prior = denoiser.prior();
    const auto& schedule = denoiser.schedule();
    // p(z_1) = pi^L.
    std::vector<double> dist(states.size(), 0.0);
    for (std::size_t k = 0; k < states.size(); ++k) {
        double p = 1.0;
        for (Token tok : states[k]) {
            p *= prior.pi()[static_cast<std::size_t>(tok)];
        }
        dist[k] = p;
    }
    auto index_of = [&](const Sequence& z) {
        std::size_t idx = 0;
        for (Token tok : z) {
            idx = idx * static_cast<std::size_t>(n) + static_cast<std::size_t>(tok);
        }
        return idx;
    };
    for (int i = T; i >= 1; --i) {
        const double t = static_cast<double>(i) / T;
        const double alpha_t = schedule.alpha(t);
        const double alpha_s = schedule.alpha(static_cast<double>(i - 1) / T);
        std::vector<double> next(states.size(), 0.0);
        double likelihood = 0.0;
        for (std::size_t k = 0; k < states.size(); ++k) {
            if (dist[k] == 0.0) {
                continue;
            }
            const Matrix rows = denoiser.predict(states[k], t);
            std::vector<std::vector<double>> step(static_cast<std::size_t>(L));
            for (int l = 0; l < L; ++l) {
                step[static_cast<std::size_t>(l)] =
                    bayes_soft(states[k][static_cast<std::size_t>(l)], rows.row(l), alpha_t, alpha_s, prior);
            }
            if (i == 1) {
                double p = 1.0;
                for (int l = 0; l < L; ++l) {
                    p *= step[static_cast<std::size_t>(l)][static_cast<std::size_t>(x[static_cast<std::size_t>(l)])];
                }
                likelihood += dist[k] * p;
                continue;
            }
            for (const auto& target : states) {
                double p = 1.0;
                for (int l = 0; l < L && p > 0.0; ++l) {
                    p *= step[static_cast<std::size_t>(l)][static_cast<std::size_t>(target[static_cast<std::size_t>(l)])];
                }
                next[index_of(target)] += dist[k] * p;
            }
        }
        if (i == 1) {
            return -std::log(likelihood);
        }
        dist = std::move(next);
    }
    return std::numeric_limits<double>::quiet_NaN();
}

std::vector<Categorical> tempered_token_oracle(const Classifier& classifier, std::span<const Token> z_t, double time,
                                               std::span<const Categorical> denoiser_rows, int y, double gamma) {
    const int n = classifier.vocab_size();
    std::vector<Categorical> out;
    for (std::size_t l = 0; l < z_t.size(); ++l) {
        std::vector<double> w(static_cast<std::size_t>(n));
        double total = 0.0;
        for (int v = 0; v < n; ++v) {
            Sequence edit(z_t.begin(), z_t.end());
            edit[l] = v;
            const double p_y = std::exp(classifier.log_probs(edit, time)[static_cast<std::size_t>(y)]);
            const double tempered = gamma == 0.0 ? 1.0 : std::pow(p_y, gamma);
            w[static_cast<std::size_t>(v)] = tempered * denoiser_rows[l][static_cast<std::size_t>(v)];
            total += w[static_cast<std::size_t>(v)];
        }
        if (!(total > 0.0)) {
            throw DomainError("tempered oracle: zero mass");
        }
        for (double& v : w) {
            v /= total;
        }
        out.push_back(Categorical::normalized(std::move(w)));
    }
    return out;
}

AffineClassifier::AffineClassifier(int vocab, int length, std::uint64_t seed) : weight_(length, vocab), offset_(0.0) {
    Rng rng(seed);
    double worst = 0.0;
    for (int l = 0; l < length; ++l) {
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < vocab; ++j) {
            weight_(l, j) = 0.3 * rng.normal();
            m = std::max(m, weight_(l, j));
        }
        worst += m;
    }
    offset_ = -0.1 - worst;
}

std::vector<double> AffineClassifier::log_probs(std::span<const Token> z, double) const {
    check_sequence(z, vocab_size());
    double lp0 = offset_;
    for (std::size_t l = 0; l < z.size(); ++l) {
        lp0 += weight_(static_cast<int>(l), z[l]);
    }
    return {lp0, std::log1p(-std::exp(lp0))};
}

LogProbGrad AffineClassifier::log_prob_and_grad(std::span<const Token> z, double t, int y) const {
    LogProbGrad out;
    out.log_probs = log_probs(z, t);
    out.grad = weight_;
    if (y == 1) {
        const double p0 = std::exp(out.log_probs[0]);
        for (double& g : out.grad.data) {
            g *= -p0 / (1.0 - p0);
        }
    }
    return out;
}

MlpDenoiser random_denoiser(ModelKind kind, int n, int length, std::uint64_t seed, int classes, double gain) {
    TrunkShape shape{n, length, 8, 1, classes};
    std::optional<Token> mask;
    if (kind == ModelKind::absorbing) {
        mask = n - 1;
    }
    return MlpDenoiser(kind, DenoiserParams::random(shape, seed, gain), NoiseSchedule{}, mask, 0.0);
}

CheckResult make_check(std::string name, double deviation, double tolerance, std::string detail) {
    CheckResult c;
    c.name = std::move(name);
    c.deviation = deviation;
    c.tolerance = tolerance;
    c.passed = std::isfinite(deviation) && deviation <= tolerance;
    c.detail = std::move(detail);
    return c;
}

namespace {

std::vector<double> random_simplex(int n, Rng& rng, double floor = 0.0) {
    std::vector<double> w(static_cast<std::size_t>(n));
    for (double& v : w) {
        v = floor + rng.uniform();
    }
    return Categorical::normalized(std::move(w)).probs();
}

Sequence random_sequence(int n, int length, Rng& rng) {
    Sequence s(static_cast<std::size_t>(length));
    for (auto& t : s) {
        t = rng.uniform_int(n);
    }
    return s;
}

std::vector<Categorical> random_rows(int n, int length, Rng& rng) {
    std::vector<Categorical> rows;
    for (int l = 0; l < length; ++l) {
        rows.emplace_back(random_simplex(n, rng, 0.05));
    }
    return rows;
}

double rows_max_abs(std::span<const Categorical> a, std::span<const Categorical> b) {
    double d = 0.0;
    for (std::size_t l = 0; l < a.size(); ++l) {
        d = std::max(d, max_abs_diff(a[l].span(), b[l].span()));
    }
    return d;
}

std::string fmt(double v) {
    std::ostringstream os;
    os << std::setprecision(6) << v;
    return os.str();
}

}  // namespace

// Posteriors ----------------------------------------------------------------

std::vector<CheckResult> check_posteriors() {
    double dev_general = 0.0;
    double dev_uniform = 0.0;
    double dev_absorbing = 0.0;
    double dev_fast = 0.0;
    double dev_ck = 0.0;
    long mismatched_errors = 0;
    long cases = 0;
    Rng rng(2024);
    const NoiseSchedule schedule;
    for (int n = 2; n <= 5; ++n) {
        const std::vector<PriorSpec> priors = {PriorSpec::uniform(n), PriorSpec::absorbing(n, n - 1),
                                               PriorSpec::general(Categorical(random_simplex(n, rng, 0.1)))};
        for (const auto& prior : priors) {
            for (int si = 0; si < 20; ++si) {
                for (int ti = 1; ti <= 20; ++ti) {
                    const double s = si / 20.0;
                    const double t = ti / 20.0;
                    if (!(s < t)) {
                        continue;
                    }
                    const double at = schedule.alpha(t);
                    const double as = schedule.alpha(s);
                    for (Token x = 0; x < n; ++x) {
                        std::vector<double> mixed(static_cast<std::size_t>(n), 0.0);
                        for (Token z = 0; z < n; ++z) {
                            ++cases;
                            std::optional<Categorical> oracle;
                            try {
                                oracle = bayes_posterior_oracle(z, x, at, as, prior);
                            } catch (const DomainError&) {
                            }
                            std::optional<Categorical> general;
                            try {
                                general = posterior(schedule, z, x, t, s, prior);
                            } catch (const DomainError&) {
                            }
                            if (oracle.has_value() != general.has_value()) {
                                ++mismatched_errors;
                                continue;
                            }
                            if (!oracle) {
                                continue;
                            }
                            dev_general = std::max(dev_general, max_abs_diff(oracle->span(), general->span()));
                            if (prior.kind() == PriorKind::uniform) {
                                const auto u = posterior_uniform(schedule, z, x, t, s, n);
                                dev_uniform = std::max(dev_uniform, max_abs_diff(oracle->span(), u.span()));
                                dev_fast = std::max(dev_fast, max_abs_diff(general->span(), u.span()));
                            }
                            if (prior.kind() == PriorKind::absorbing) {
                                std::vector<double> xv(static_cast<std::size_t>(n), 0.0);
                                xv[static_cast<std::size_t>(x)] = 1.0;
                                const auto a = posterior_absorbing_mean_at(z, xv, at, as, prior);
                                dev_absorbing = std::max(dev_absorbing, max_abs_diff(oracle->span(), a.span()));
                            }
                            const double qz = forward_prob(x, z, at, prior);
                            for (std::size_t j = 0; j < mixed.size(); ++j) {
                                mixed[j] += qz * (*general)[j];
                            }
                        }
                        std::vector<double> target(static_cast<std::size_t>(n));
                        for (Token j = 0; j < n; ++j) {
                            target[static_cast<std::size_t>(j)] = forward_prob(x, j, as, prior);
                        }
                        dev_ck = std::max(dev_ck, max_abs_diff(mixed, target));
                    }
                }
            }
        }
    }
    const std::string detail = std::to_string(cases) + " cases";
    return {
        make_check("posterior_general_vs_bayes", dev_general, 1e-12, detail),
        make_check("posterior_uniform_vs_bayes", dev_uniform, 1e-12, detail),
        make_check("posterior_absorbing_vs_bayes", dev_absorbing, 1e-12, detail),
        make_check("posterior_uniform_vs_general", dev_fast, 1e-13, detail),
        make_check("posterior_chapman_kolmogorov", dev_ck, 1e-11, detail),
        make_check("posterior_domain_errors_agree", static_cast<double>(mismatched_errors), 0.0, detail),
    };
}

// Limits --------------------------------------------------------------------

std::vector<CheckResult> check_zero_at_truth(const SuiteOptions& opt) {
    const NoiseSchedule schedule;
    double kl_dev = 0.0;
    double integrand_dev = 0.0;
    for (int n : {2, 3, 5}) {
        for (const auto& prior : {PriorSpec::uniform(n), PriorSpec::absorbing(n, n - 1)}) {
            for (int ti = 1; ti <= 20; ++ti) {
                for (int si = 0; si < ti; ++si) {
                    const double t = ti / 20.0;
                    const double s = si / 20.0;
                    for (Token x = 0; x < n; ++x) {
                        for (Token z = 0; z < n; ++z) {
                            if (forward_prob(x, z, schedule.alpha(t), prior) == 0.0) {
                                continue;
                            }
                            kl_dev = std::max(kl_dev, std::abs(diffusion_kl(schedule, x, z, t, s,
                                                                            Categorical::one_hot(n, x), prior)));
                        }
                    }
                }
            }
        }
        for (int ti = 0; ti <= 50; ++ti) {
            const double t = schedule.t_min() + (schedule.t_max() - schedule.t_min()) * ti / 50.0;
            for (Token x = 0; x < n; ++x) {
                for (Token z = 0; z < n; ++z) {
                    const auto hot = Categorical::one_hot(n, x);
                    integrand_dev = std::max(integrand_dev, std::abs(opt.integrand(x, z, schedule.alpha(t),
                                                                                   schedule.alpha_prime(t),
                                                                                   hot.span())));
                }
            }
        }
    }
    Rng rng = Rng::substream(opt.seed, {11});
    const Sequence xu = random_sequence(3, 4, rng);
    const TabularDenoiser perfect_uniform(PriorSpec::uniform(3), {xu}, {1.0});
    const double udlm = udlm_loss(xu, perfect_uniform, rng, 2000).value;
    const Sequence xa = random_sequence(3, 4, rng);
    const TabularDenoiser perfect_absorbing(PriorSpec::absorbing(4, 3), {xa}, {1.0});
    const double mdlm = mdlm_loss(xa, perfect_absorbing, rng, 2000).value;
    return {
        make_check("zero_at_truth_diffusion_kl", kl_dev, 1e-6),
        make_check("zero_at_truth_udlm_integrand", integrand_dev, 1e-6),
        make_check("zero_at_truth_udlm_loss", std::abs(udlm), 1e-6),
        make_check("zero_at_truth_mdlm_loss", std::abs(mdlm), 1e-6),
    };
}

std::vector<CheckResult> check_kl_limit(const SuiteOptions& opt) {
    Rng rng = Rng::substream(opt.seed, {12});
    const NoiseSchedule schedule;
    const double h = 1e-6;
    double worst = 0.0;
    double most_negative = 0.0;
    for (int k = 0; k < 2000; ++k) {
        const int n = 2 + rng.uniform_int(4);
        const Token x = rng.uniform_int(n);
        const Token z = rng.uniform_int(n);
        const double t = rng.uniform(0.05, 0.95);
        const auto xt = random_simplex(n, rng, 0.02);
        const double value = opt.integrand(x, z, schedule.alpha(t), schedule.alpha_prime(t), xt);
        const double limit = diffusion_kl_at(x, z, schedule.alpha(t), schedule.alpha(t - h), xt,
                                             PriorSpec::uniform(n)) / h;
        worst = std::max(worst, std::abs(value - limit) / std::max(std::abs(limit), 1e-8));
        most_negative = std::min(most_negative, value);
    }
    return {
        make_check("integrand_equals_kl_limit", worst, 1e-4, "2000 random configurations, h = 1e-6"),
        make_check("integrand_nonnegative", -most_negative, 1e-10),
    };
}

double continuous_nelbo(const Denoiser& denoiser, std::span<const Token> x, const IntegrandFn& integrand) {
    static const double nodes[] = {-0.9602898564975363, -0.7966664774136267, -0.5255324099163290,
                                   -0.1834346424956498, 0.1834346424956498,  0.5255324099163290,
                                   0.7966664774136267,  0.9602898564975363};
    static const double weights[] = {0.1012285362903763, 0.2223810344533745, 0.3137066458778873,
                                     0.3626837833783620, 0.3626837833783620, 0.3137066458778873,
                                     0.2223810344533745, 0.1012285362903763};
    std::vector<double> breaks;
    for (double e = 1e-14; e < 0.01; e *= 2.0) {
        breaks.push_back(e);
    }
    for (int k = 1; k <= 99; ++k) {
        breaks.push_back(k / 100.0);
    }
    std::vector<double> top;
    for (double e = 1e-14; e < 0.01; e *= 2.0) {
        top.push_back(1.0 - e);
    }
    breaks.insert(breaks.end(), top.rbegin(), top.rend());
    double total = 0.0;
    for (std::size_t k = 0; k + 1 < breaks.size(); ++k) {
        const double a = breaks[k];
        const double b = breaks[k + 1];
        constexpr int pieces = 4;
        for (int p = 0; p < pieces; ++p) {
            const double lo = a + (b - a) * p / pieces;
            const double hi = a + (b - a) * (p + 1) / pieces;
            double part = 0.0;
            for (int q = 0; q < 8; ++q) {
                const double t = 0.5 * (lo + hi) + 0.5 * (hi - lo) * nodes[q];
                part += weights[q] * udlm_expected_integrand(x, t, denoiser, integrand);
            }
            total += 0.5 * (hi - lo) * part;
        }
    }
    return total + nelbo_prior_term(denoiser, x);
}

ConvergenceResult nelbo_convergence(const SuiteOptions& opt, int num_denoisers, int n, int length) {
    ConvergenceResult r;
    for (int T = 8; T <= 1024; T *= 2) {
        r.Ts.push_back(T);
    }
    r.errors.resize(static_cast<std::size_t>(num_denoisers));
    r.ratios.resize(static_cast<std::size_t>(num_denoisers));
    parallel_for(static_cast<std::size_t>(num_denoisers), opt.threads, [&](std::size_t k) {
        const auto denoiser = random_denoiser(ModelKind::uniform, n, length, opt.seed * 1000 + k);
        Rng rng = Rng::substream(opt.seed, {13, k});
        const Sequence x = random_sequence(n, length, rng);
        const double integral = continuous_nelbo(denoiser, x, opt.integrand);
        for (int T : r.Ts) {
            r.errors[k].push_back(nelbo_discrete_exact(x, denoiser, T) - integral);
        }
        for (std::size_t i = 0; i + 1 < r.errors[k].size(); ++i) {
            r.ratios[k].push_back(r.errors[k][i] / r.errors[k][i + 1]);
        }
    });
    r.min_ratio = std::numeric_limits<double>::infinity();
    r.max_ratio = -std::numeric_limits<double>::infinity();
    for (const auto& rs : r.ratios) {
        for (double v : rs) {
            if (!std::isfinite(v)) {
                r.min_ratio = -std::numeric_limits<double>::infinity();
                r.max_ratio = std::numeric_limits<double>::infinity();
                continue;
            }
            r.min_ratio = std::min(r.min_ratio, v);
            r.max_ratio = std::max(r.max_ratio, v);
        }
    }
    return r;
}

std::vector<CheckResult> check_nelbo_convergence(const SuiteOptions& opt) {
    const auto r = nelbo_convergence(opt);
    const double dev = std::max(std::abs(r.min_ratio - 2.0), std::abs(r.max_ratio - 2.0));
    return {make_check("nelbo_error_halves_per_doubling", dev, 0.4,
                       "ratios in [" + fmt(r.min_ratio) + ", " + fmt(r.max_ratio) + "], T = 8..1024")};
}

std::vector<CheckResult> check_bound_validity(const SuiteOptions& opt) {
    double worst = -std::numeric_limits<double>::infinity();
    long cases = 0;
    for (auto kind : {ModelKind::uniform, ModelKind::absorbing}) {
        for (int k = 0; k < 20; ++k) {
            const auto denoiser = random_denoiser(kind, 3, 1, opt.seed * 7919 + static_cast<std::uint64_t>(k), 0, 2.0);
            Rng rng = Rng::substream(opt.seed, {14, static_cast<std::uint64_t>(kind), static_cast<std::uint64_t>(k)});
            const int data_tokens = kind == ModelKind::absorbing ? 2 : 3;
            const Sequence x = {rng.uniform_int(data_tokens)};
            for (int T : {2, 4, 8}) {
                const double nll = exact_reverse_nll(denoiser, x, T);
                const double bound = nelbo_discrete_exact(x, denoiser, T);
                worst = std::max(worst, nll - bound);
                ++cases;
            }
        }
    }
    return {make_check("nll_below_nelbo", std::max(worst, 0.0), 1e-9,
                       std::to_string(cases) + " cases, max(NLL - NELBO) = " + fmt(worst))};
}

std::vector<CheckResult> check_mc_agreement(const SuiteOptions& opt) {
    std::vector<CheckResult> out;
    Rng rng = Rng::substream(opt.seed, {15});
    {
        const auto denoiser = random_denoiser(ModelKind::uniform, 3, 2, opt.seed + 101);
        const Sequence x = random_sequence(3, 2, rng);
        const double exact = nelbo_discrete_exact(x, denoiser, 8);
        const auto mc = nelbo_discrete_mc(x, denoiser, 8, rng, 100000);
        out.push_back(make_check("nelbo_mc_matches_exact", std::abs(mc.value - exact) / mc.std_error, 3.0,
                                 "exact " + fmt(exact) + ", mc " + fmt(mc.value) + " +- " + fmt(mc.std_error)));
    }
    {
        const auto denoiser = random_denoiser(ModelKind::uniform, 3, 2, opt.seed + 102);
        const Sequence x = random_sequence(3, 2, rng);
        const double exact = nelbo_discrete_exact(x, denoiser, 4096);
        const auto mc = udlm_loss(x, denoiser, rng, 100000);
        out.push_back(make_check("udlm_loss_matches_large_T", std::abs(mc.value - exact) / mc.std_error, 3.0,
                                 "T=4096 " + fmt(exact) + ", mc " + fmt(mc.value) + " +- " + fmt(mc.std_error)));
    }
    {
        const auto denoiser = random_denoiser(ModelKind::absorbing, 4, 2, opt.seed + 103);
        const Sequence x = random_sequence(3, 2, rng);
        const double exact = nelbo_discrete_exact(x, denoiser, 4096);
        const auto mc = mdlm_loss(x, denoiser, rng, 100000);
        out.push_back(make_check("mdlm_loss_matches_large_T", std::abs(mc.value - exact) / mc.std_error, 3.0,
                                 "T=4096 " + fmt(exact) + ", mc " + fmt(mc.value) + " +- " + fmt(mc.std_error)));
    }
    return out;
}

std::vector<CheckResult> check_sedd_equivalence(const SuiteOptions& opt, int configs) {
    Rng rng = Rng::substream(opt.seed, {16});
    const NoiseSchedule schedule;
    double worst = 0.0;
    for (int k = 0; k < configs; ++k) {
        const int n = 2 + rng.uniform_int(5);
        const Token x = rng.uniform_int(n);
        const Token z = rng.uniform_int(n);
        const double t = rng.uniform(schedule.t_min(), schedule.t_max());
        const auto xt = random_simplex(n, rng, 0.0);
        const double a = opt.integrand(x, z, schedule.alpha(t), schedule.alpha_prime(t), xt);
        const double b = sedd_form_nelbo_at(x, z, schedule.alpha(t), schedule.alpha_prime(t), xt);
        worst = std::max(worst, std::abs(a - b) / std::max(1.0, std::abs(b)));
    }
    return {make_check("sedd_form_equals_udlm_integrand", worst, 1e-9,
                       std::to_string(configs) + " random configurations")};
}

// Guidance ------------------------------------------------------------------

namespace {

MlpClassifier random_classifier(int n, int length, int classes, std::uint64_t seed, double gain = 1.5) {
    return MlpClassifier(ClassifierParams::random(TrunkShape{n, length, 8, 1, classes}, seed, gain));
}

}  // namespace

std::vector<CheckResult> check_cbg_exact(const SuiteOptions& opt) {
    const int n = 4;
    const int L = 3;
    Rng rng = Rng::substream(opt.seed, {17});
    const auto mlp = random_classifier(n, L, 3, opt.seed + 17);
    CountingClassifier counter(mlp);
    double dev = 0.0;
    long bad_counts = 0;
    for (int trial = 0; trial < 4; ++trial) {
        const Sequence z = random_sequence(n, L, rng);
        const auto rows = random_rows(n, L, rng);
        const double time = rng.uniform(0.05, 0.95);
        for (double gamma : {0.0, 0.5, 1.0, 2.0, 5.0}) {
            for (int y = 0; y < 3; ++y) {
                counter.reset();
                const auto got = cbg_exact(counter, z, time, rows, y, gamma);
                if (counter.forward_calls() != L * n || counter.backward_calls() != 0) {
                    ++bad_counts;
                }
                dev = std::max(dev, rows_max_abs(got, tempered_token_oracle(mlp, z, time, rows, y, gamma)));
            }
        }
    }
    counter.reset();
    const Sequence z = random_sequence(n, L, rng);
    (void)cbg_taylor(counter, z, 0.5, random_rows(n, L, rng), 0, 1.0);
    const long taylor_bad = (counter.forward_calls() == 1 && counter.backward_calls() == 1) ? 0 : 1;
    return {
        make_check("cbg_exact_matches_tempered_oracle", dev, 1e-12),
        make_check("cbg_exact_calls_L_times_N", static_cast<double>(bad_counts), 0.0),
        make_check("cbg_taylor_single_pass", static_cast<double>(taylor_bad), 0.0),
    };
}

std::vector<double> taylor_tv_gap(std::uint64_t seed) {
    const int n = 4;
    const int L = 3;
    Rng rng = Rng::substream(seed, {18});
    const auto mlp = random_classifier(n, L, 3, seed + 18);
    const Sequence z = random_sequence(n, L, rng);
    const auto rows = random_rows(n, L, rng);
    const auto exact = cbg_exact(mlp, z, 0.5, rows, 0, 1.0);
    const auto taylor = cbg_taylor(mlp, z, 0.5, rows, 0, 1.0);
    std::vector<double> tv;
    for (std::size_t l = 0; l < exact.size(); ++l) {
        tv.push_back(total_variation(exact[l], taylor[l]));
    }
    return tv;
}

std::vector<CheckResult> check_cbg_taylor(const SuiteOptions& opt) {
    Rng rng = Rng::substream(opt.seed, {19});
    double dev = 0.0;
    for (int trial = 0; trial < 10; ++trial) {
        const int n = 2 + rng.uniform_int(4);
        const int L = 1 + rng.uniform_int(4);
        const AffineClassifier affine(n, L, opt.seed * 31 + static_cast<std::uint64_t>(trial));
        const Sequence z = random_sequence(n, L, rng);
        const auto rows = random_rows(n, L, rng);
        for (double gamma : {0.0, 0.5, 1.0, 2.0, 5.0}) {
            dev = std::max(dev, rows_max_abs(cbg_taylor(affine, z, 0.3, rows, 0, gamma),
                                             cbg_exact(affine, z, 0.3, rows, 0, gamma)));
        }
    }
    const auto gap = taylor_tv_gap(opt.seed);
    std::string detail = "per-position TV:";
    for (double g : gap) {
        detail += " " + fmt(g);
    }
    return {
        make_check("cbg_taylor_exact_for_affine_classifier", dev, 1e-9),
        make_check("cbg_taylor_mlp_tv_gap_is_a_distance", *std::max_element(gap.begin(), gap.end()), 1.0, detail),
    };
}

std::vector<CheckResult> check_cfg() {
    Rng rng(20);
    double dev_one = 0.0;
    double dev_zero = 0.0;
    double dev_valid = 0.0;
    long argmax_breaks = 0;
    for (int trial = 0; trial < 200; ++trial) {
        const int n = 2 + rng.uniform_int(5);
        const int L = 1 + rng.uniform_int(4);
        const auto cond = random_rows(n, L, rng);
        const auto uncond = random_rows(n, L, rng);
        dev_one = std::max(dev_one, rows_max_abs(cfg_combine(cond, uncond, 1.0), cond));
        dev_zero = std::max(dev_zero, rows_max_abs(cfg_combine(cond, uncond, 0.0), uncond));
        for (double gamma : {0.0, 0.5, 1.0, 2.0, 5.0}) {
            for (const auto& row : cfg_combine(cond, uncond, gamma)) {
                double sum = 0.0;
                for (double p : row.probs()) {
                    sum += p;
                    dev_valid = std::max(dev_valid, -p);
                }
                dev_valid = std::max(dev_valid, std::abs(sum - 1.0));
            }
        }
        for (int l = 0; l < L; ++l) {
            const auto& c = cond[static_cast<std::size_t>(l)].probs();
            const auto& u = uncond[static_cast<std::size_t>(l)].probs();
            // v must also maximize p_cond / p_uncond; sharing the argmax alone
            // does not keep it for gamma > 1.
            const auto v = std::max_element(c.begin(), c.end()) - c.begin();
            bool top_ratio = true;
            for (std::size_t j = 0; j < c.size(); ++j) {
                top_ratio = top_ratio && c[j] / u[j] <= c[static_cast<std::size_t>(v)] / u[static_cast<std::size_t>(v)];
            }
            if (v != std::max_element(u.begin(), u.end()) - u.begin() || !top_ratio) {
                continue;
            }
            for (double gamma : {1.0, 1.5, 2.0, 5.0}) {
                const auto g = cfg_combine(std::span(&cond[static_cast<std::size_t>(l)], 1),
                                           std::span(&uncond[static_cast<std::size_t>(l)], 1), gamma);
                const auto& gp = g[0].probs();
                if (std::max_element(gp.begin(), gp.end()) - gp.begin() != v) {
                    ++argmax_breaks;
                }
            }
        }
    }
    const Categorical c({0.8, 0.2});
    const Categorical u({0.5, 0.5});
    const auto hand = cfg_combine(std::span(&c, 1), std::span(&u, 1), 2.0);
    const double dev_hand = max_abs_diff(hand[0].span(), std::vector<double>{16.0 / 17.0, 1.0 / 17.0});
    return {
        make_check("cfg_gamma_one_is_conditional", dev_one, 0.0),
        make_check("cfg_gamma_zero_is_unconditional", dev_zero, 0.0),
        make_check("cfg_worked_example", dev_hand, 1e-12),
        make_check("cfg_outputs_are_distributions", dev_valid, 1e-12),
        make_check("cfg_argmax_monotone", static_cast<double>(argmax_breaks), 0.0),
    };
}

// CTMC ------------------------------------------------------------------------

namespace {

double fit_exponent(const std::vector<double>& xs, const std::vector<double>& ys) {
    double mx = 0.0;
    double my = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        mx += std::log(xs[i]);
        my += std::log(ys[i]);
    }
    mx /= static_cast<double>(xs.size());
    my /= static_cast<double>(xs.size());
    double sxy = 0.0;
    double sxx = 0.0;
    for (std::size_t i = 0; i < xs.size(); ++i) {
        const double dx = std::log(xs[i]) - mx;
        sxy += dx * (std::log(ys[i]) - my);
        sxx += dx * dx;
    }
    return sxy / sxx;
}

// Propagates a distribution over N states through both chains from t0 to t1
// in K equal steps and returns the final TV distance.
template <class VarRow, class RateAt>
double propagate_tv(int n, double t0, double t1, int K, VarRow&& var_row, RateAt&& rate_at) {
    std::vector<double> d_var(static_cast<std::size_t>(n), 1.0 / n);
    std::vector<double> d_ctmc = d_var;
    const double dt = (t0 - t1) / K;
    for (int k = 0; k < K; ++k) {
        const double t = t0 - k * dt;
        const double s = t - dt;
        const RateMatrix rate = rate_at(t);
        std::vector<double> nv(d_var.size(), 0.0);
        std::vector<double> nc(d_ctmc.size(), 0.0);
        for (Token a = 0; a < n; ++a) {
            const Categorical pv = var_row(a, t, s);
            const Categorical pc = euler_transition(a, rate, dt);
            for (std::size_t b = 0; b < nv.size(); ++b) {
                nv[b] += d_var[static_cast<std::size_t>(a)] * pv[b];
                nc[b] += d_ctmc[static_cast<std::size_t>(a)] * pc[b];
            }
        }
        d_var = std::move(nv);
        d_ctmc = std::move(nc);
    }
    return total_variation(Categorical::normalized(d_var), Categorical::normalized(d_ctmc));
}

template <class VarRow, class RateAt>
SlopeFit sweep(int n, VarRow&& var_row, RateAt&& rate_at) {
    SlopeFit fit;
    const double t0 = 0.7;
    const double t1 = 0.3;
    for (int K : {8, 16, 32, 64, 128, 256}) {
        fit.dts.push_back((t0 - t1) / K);
        fit.tvs.push_back(propagate_tv(n, t0, t1, K, var_row, rate_at));
    }
    fit.exponent = fit_exponent(fit.dts, fit.tvs);
    return fit;
}

}  // namespace

SlopeFit ctmc_cfg_slope(std::uint64_t seed, double gamma) {
    const int n = 3;
    const auto denoiser = random_denoiser(ModelKind::uniform, n, 1, seed + 21, 2);
    const int y = 1;
    GuidanceConfig cfg{GuidanceMode::cfg, gamma, y};
    auto var_row = [&](Token a, double t, double s) {
        const Sequence z = {a};
        return reverse_rows(z, t, s, denoiser, cfg)[0];
    };
    auto rate_at = [&](double t) {
        auto x_at = [&](int cond) {
            return [&, cond](Token a) {
                const Sequence z = {a};
                const Matrix m = denoiser.predict(z, t, cond);
                return std::vector<double>(m.row(0).begin(), m.row(0).end());
            };
        };
        const auto cond_rate = model_reverse_rate(denoiser.schedule(), t, x_at(y));
        const auto uncond_rate = model_reverse_rate(denoiser.schedule(), t, x_at(kDropped));
        return guided_rate_cfg(cond_rate, uncond_rate, gamma);
    };
    return sweep(n, var_row, rate_at);
}

SlopeFit ctmc_cbg_slope(std::uint64_t seed, double gamma) {
    const int n = 3;
    const auto denoiser = random_denoiser(ModelKind::uniform, n, 1, seed + 22);
    const auto classifier = random_classifier(n, 1, 2, seed + 23);
    const int y = 0;
    GuidanceConfig cfg{GuidanceMode::cbg_exact, gamma, y};
    auto var_row = [&](Token a, double t, double s) {
        const Sequence z = {a};
        return reverse_rows(z, t, s, denoiser, cfg, &classifier)[0];
    };
    auto rate_at = [&](double t) {
        auto x_at = [&](Token a) {
            const Sequence z = {a};
            const Matrix m = denoiser.predict(z, t);
            return std::vector<double>(m.row(0).begin(), m.row(0).end());
        };
        const auto base = model_reverse_rate(denoiser.schedule(), t, x_at);
        auto ratio = [&](Token a, Token b) {
            const Sequence za = {a};
            const Sequence zb = {b};
            return std::exp(classifier.log_probs(zb, t)[y] - classifier.log_probs(za, t)[y]);
        };
        return guided_rate_cbg(base, ratio, gamma);
    };
    return sweep(n, var_row, rate_at);
}

std::vector<CheckResult> check_ctmc(const SuiteOptions& opt) {
    const NoiseSchedule schedule;
    double dev_rows = 0.0;
    double dev_fd = 0.0;
    for (int n = 2; n <= 6; ++n) {
        for (int k = 1; k < 20; ++k) {
            const double t = k / 20.0;
            const auto r = uniform_rate(schedule, t, n);
            for (int a = 0; a < n; ++a) {
                double sum = 0.0;
                for (int b = 0; b < n; ++b) {
                    sum += r(a, b);
                }
                dev_rows = std::max(dev_rows, std::abs(sum));
            }
            // (q(z_t | z_s) - I) / dt from the marginals, s = t - dt.
            const double dt = 1e-6;
            const double keep = schedule.alpha(t) / schedule.alpha(t - dt);
            for (int a = 0; a < n; ++a) {
                for (int b = 0; b < n; ++b) {
                    const double q = (a == b ? keep : 0.0) + (1.0 - keep) / n;
                    const double fd = (q - (a == b ? 1.0 : 0.0)) / dt;
                    dev_fd = std::max(dev_fd, std::abs(fd - r(a, b)) / std::max(1.0, std::abs(r(a, b))));
                }
            }
        }
    }
    const auto cfg = ctmc_cfg_slope(opt.seed, 2.0);
    const auto cbg = ctmc_cbg_slope(opt.seed, 2.0);
    auto detail = [](const SlopeFit& f) {
        std::string s = "exponent " + fmt(f.exponent) + "; TV:";
        for (double v : f.tvs) {
            s += " " + fmt(v);
        }
        return s;
    };
    return {
        make_check("uniform_rate_rows_sum_to_zero", dev_rows, 1e-12),
        make_check("uniform_rate_matches_marginal_difference", dev_fd, 1e-4),
        make_check("ctmc_cfg_tv_slope_one", std::abs(cfg.exponent - 1.0), 0.2, detail(cfg)),
        make_check("ctmc_cbg_tv_slope_one", std::abs(cbg.exponent - 1.0), 0.2, detail(cbg)),
    };
}

// Gradients -----------------------------------------------------------------

namespace {

double rel_err(double g, double fd) { return std::abs(g - fd) / std::max({std::abs(g), std::abs(fd), 1e-4}); }

// Compares analytic gradients of f with central differences on a sample of
// entries of each tensor.
template <class F>
double fd_check_params(ParamSet& params, const std::vector<Matrix>& grads, F&& f, Rng& rng, double h = 1e-6) {
    double worst = 0.0;
    auto& tensors = params.tensors();
    for (std::size_t k = 0; k < tensors.size(); ++k) {
        auto& data = tensors[k].value.data;
        const std::size_t probes = std::min<std::size_t>(data.size(), 10);
        for (std::size_t p = 0; p < probes; ++p) {
            const auto i = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(data.size())));
            const double saved = data[i];
            data[i] = saved + h;
            const double up = f();
            data[i] = saved - h;
            const double down = f();
            data[i] = saved;
            worst = std::max(worst, rel_err(grads[k].data[i], (up - down) / (2.0 * h)));
        }
    }
    return worst;
}

TrunkShape random_shape(Rng& rng, bool classifier) {
    TrunkShape s;
    s.vocab = 2 + rng.uniform_int(4);
    s.length = 1 + rng.uniform_int(4);
    s.hidden = 2 + rng.uniform_int(5);
    s.layers = 1 + rng.uniform_int(3);
    s.classes = classifier ? 1 + rng.uniform_int(3) : rng.uniform_int(4);
    return s;
}

Dataset random_dataset(int n, int length, int count, int classes, Rng& rng) {
    Dataset d;
    d.num_classes = classes;
    for (int i = 0; i < count; ++i) {
        d.sequences.push_back(random_sequence(n, length, rng));
        if (classes > 0) {
            d.labels.push_back(rng.uniform_int(classes));
        }
    }
    return d;
}

}  // namespace

std::vector<CheckResult> check_gradients(const SuiteOptions& opt) {
    Rng rng = Rng::substream(opt.seed, {30});
    double graph_dev = 0.0;
    double input_dev = 0.0;
    for (int trial = 0; trial < 6; ++trial) {
        const bool is_classifier = trial % 2 == 1;
        const TrunkShape shape = random_shape(rng, is_classifier);
        const int batch = 1 + rng.uniform_int(3);
        std::vector<Sequence> zs;
        std::vector<double> alphas;
        std::vector<int> conds;
        for (int b = 0; b < batch; ++b) {
            zs.push_back(random_sequence(shape.vocab, shape.length, rng));
            alphas.push_back(rng.uniform());
            conds.push_back(!is_classifier && shape.classes > 0 ? rng.uniform_int(shape.classes + 1) - 1 : kDropped);
        }
        Matrix input = one_hot_batch(zs, shape.vocab);
        ParamSet params = is_classifier ? ClassifierParams::random(shape, rng.uniform_int(1 << 30)).tensors
                                        : DenoiserParams::random(shape, rng.uniform_int(1 << 30)).tensors;
        auto build = [&](Tape& tape, const Matrix& in, bool input_grad) {
            if (is_classifier) {
                return build_classifier_graph(tape, ClassifierParams{shape, params}, in, alphas, true, input_grad);
            }
            return build_denoiser_graph(tape, DenoiserParams{shape, params}, in, alphas, conds, true, input_grad);
        };
        Tape probe_tape;
        const auto probe = build(probe_tape, input, false);
        Matrix w = probe_tape.value(probe.logits);
        for (double& v : w.data) {
            v = 0.1 * rng.normal();
        }
        auto f_of = [&](const Matrix& in) {
            Tape tape;
            const auto g = build(tape, in, false);
            const Matrix& out = tape.value(g.logits);
            double s = 0.0;
            for (std::size_t i = 0; i < out.size(); ++i) {
                s += w.data[i] * out.data[i];
            }
            return s;
        };
        Tape tape;
        const auto g = build(tape, input, true);
        tape.backward(g.logits, w);
        std::vector<Matrix> grads;
        for (auto p : g.params) {
            grads.push_back(tape.grad(p));
        }
        const Matrix input_grad = tape.grad(g.input);
        graph_dev = std::max(graph_dev, fd_check_params(params, grads, [&] { return f_of(input); }, rng));
        for (int probe_i = 0; probe_i < 10; ++probe_i) {
            const auto i = static_cast<std::size_t>(rng.uniform_int(static_cast<int>(input.size())));
            Matrix up = input;
            Matrix down = input;
            up.data[i] += 1e-6;
            down.data[i] -= 1e-6;
            input_dev = std::max(input_dev, rel_err(input_grad.data[i], (f_of(up) - f_of(down)) / 2e-6));
        }
    }

    double loss_dev = 0.0;
    struct Case {
        ModelKind kind;
        Objective objective;
    };
    for (const Case c : {Case{ModelKind::uniform, Objective::udlm_continuous},
                         Case{ModelKind::uniform, Objective::nelbo_discrete},
                         Case{ModelKind::absorbing, Objective::mdlm_continuous},
                         Case{ModelKind::absorbing, Objective::nelbo_discrete}}) {
        const int n = 4;
        const int L = 3;
        const int classes = c.kind == ModelKind::uniform ? 2 : 0;
        MlpDenoiser model = random_denoiser(c.kind, n, L, rng.uniform_int(1 << 30), classes, 1.0);
        const int data_tokens = c.kind == ModelKind::absorbing ? n - 1 : n;
        const Dataset data = random_dataset(data_tokens, L, 4, classes, rng);
        LossSpec spec;
        spec.objective = c.objective;
        spec.T = 16;
        std::vector<ExampleDraw> draws;
        for (std::size_t e = 0; e < data.size(); ++e) {
            ExampleDraw d;
            d.example = e;
            if (c.objective == Objective::nelbo_discrete) {
                d.step = 1 + rng.uniform_int(spec.T);
                d.t = grid_time(d.step, spec.T);
            } else {
                d.t = rng.uniform(0.05, 0.95);
            }
            d.z = sample_latent_sequence(model.schedule(), data.sequences[e], d.t, model.prior(), rng);
            d.condition = classes > 0 ? rng.uniform_int(classes + 1) - 1 : kDropped;
            draws.push_back(std::move(d));
        }
        const BatchGrad bg = denoiser_batch_grad(model, data, draws, spec);
        loss_dev = std::max(loss_dev, fd_check_params(model.mutable_params().tensors, bg.grads,
                                                      [&] { return denoiser_batch_grad(model, data, draws, spec).loss; },
                                                      rng));
    }
    {
        const int n = 4;
        const int L = 3;
        MlpClassifier model(ClassifierParams::random(TrunkShape{n, L, 6, 2, 3}, rng.uniform_int(1 << 30)));
        const Dataset data = random_dataset(n, L, 5, 3, rng);
        std::vector<ExampleDraw> draws;
        for (std::size_t e = 0; e < data.size(); ++e) {
            ExampleDraw d;
            d.example = e;
            d.t = rng.uniform(0.05, 0.95);
            d.z = sample_latent_sequence(model.schedule(), data.sequences[e], d.t, PriorSpec::uniform(n), rng);
            draws.push_back(std::move(d));
        }
        const BatchGrad bg = classifier_batch_grad(model, data, draws);
        loss_dev = std::max(loss_dev, fd_check_params(model.mutable_params().tensors, bg.grads,
                                                      [&] { return classifier_batch_grad(model, data, draws).loss; },
                                                      rng));
    }

    double onehot_dev = 0.0;
    for (int trial = 0; trial < 20; ++trial) {
        const TrunkShape shape = random_shape(rng, true);
        const auto params = ClassifierParams::random(shape, rng.uniform_int(1 << 30));
        const NoiseSchedule schedule;
        const Sequence z = random_sequence(shape.vocab, shape.length, rng);
        const double t = rng.uniform(0.05, 0.95);
        const int y = rng.uniform_int(shape.classes);
        const Matrix grad = classify_grad_wrt_onehot(params, schedule, z, t, y);
        const double alpha = schedule.alpha(t);
        auto log_py = [&](const Matrix& in) {
            Tape tape;
            const auto g = build_classifier_graph(tape, params, in, std::span(&alpha, 1), false);
            const auto row = tape.value(g.logits).row(0);
            return row[static_cast<std::size_t>(y)] - log_sum_exp(row);
        };
        const Matrix base = one_hot_rows(z, shape.vocab);
        for (std::size_t i = 0; i < base.size(); ++i) {
            Matrix up = base;
            Matrix down = base;
            up.data[i] += 1e-5;
            down.data[i] -= 1e-5;
            onehot_dev = std::max(onehot_dev, rel_err(grad.data[i], (log_py(up) - log_py(down)) / 2e-5));
        }
    }
    return {
        make_check("tape_parameter_gradients", graph_dev, 1e-4, "random shapes, central differences h = 1e-6"),
        make_check("tape_input_gradients", input_dev, 1e-4),
        make_check("loss_parameter_gradients", loss_dev, 1e-4, "udlm, mdlm, discrete nelbo, classifier CE"),
        make_check("classifier_onehot_gradient", onehot_dev, 1e-4, "20 random configurations, h = 1e-5"),
    };
}

// Suites ----------------------------------------------------------------------

bool SuiteReport::passed() const {
    return std::all_of(checks.begin(), checks.end(), [](const CheckResult& c) { return c.passed; });
}

const std::vector<std::string>& suite_names() {
    static const std::vector<std::string> names = {"posteriors", "limits",   "bound",    "equivalence",
                                                   "guidance",   "ctmc",     "gradients"};
    return names;
}

namespace {

std::vector<CheckResult> run_checks(const std::string& name, const SuiteOptions& opt) {
    auto concat = [](std::vector<CheckResult> a, const std::vector<CheckResult>& b) {
        a.insert(a.end(), b.begin(), b.end());
        return a;
    };
    if (name == "posteriors") {
        return check_posteriors();
    }
    if (name == "limits") {
        auto out = concat(check_zero_at_truth(opt), check_kl_limit(opt));
        out = concat(std::move(out), check_nelbo_convergence(opt));
        return concat(std::move(out), check_mc_agreement(opt));
    }
    if (name == "bound") {
        return check_bound_validity(opt);
    }
    if (name == "equivalence") {
        return check_sedd_equivalence(opt);
    }
    if (name == "guidance") {
        return concat(concat(check_cbg_exact(opt), check_cbg_taylor(opt)), check_cfg());
    }
    if (name == "ctmc") {
        return check_ctmc(opt);
    }
    if (name == "gradients") {
        return check_gradients(opt);
    }
    throw ContractError("unknown suite '" + name + "'");
}

}  // namespace

std::vector<SuiteReport> run_suite(const std::string& name, const SuiteOptions& opt) {
    std::vector<std::string> names;
    if (name == "all") {
        names = suite_names();
    } else {
        if (std::find(suite_names().begin(), suite_names().end(), name) == suite_names().end()) {
            throw ContractError("unknown suite '" + name + "'");
        }
        names = {name};
    }
    std::vector<SuiteReport> reports(names.size());
    // Suites are independent; reports keep the requested order.
    parallel_for(names.size(), opt.threads, [&](std::size_t i) {
        const auto start = std::chrono::steady_clock::now();
        reports[i].suite = names[i];
        reports[i].checks = run_checks(names[i], opt);
        reports[i].runtime_seconds =
            std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    });
    return reports;
}

std::string report_json(std::span<const SuiteReport> reports) {
    nlohmann::ordered_json root;
    bool all = true;
    nlohmann::ordered_json suites = nlohmann::ordered_json::array();
    for (const auto& r : reports) {
        nlohmann::ordered_json s;
        s["suite"] = r.suite;
        s["passed"] = r.passed();
        s["runtime_seconds"] = r.runtime_seconds;
        nlohmann::ordered_json checks = nlohmann::ordered_json::array();
        for (const auto& c : r.checks) {
            nlohmann::ordered_json j;
            j["name"] = c.name;
            j["passed"] = c.passed;
            j["deviation"] = std::isfinite(c.deviation) ? nlohmann::ordered_json(c.deviation) : nlohmann::ordered_json();
            j["tolerance"] = c.tolerance;
            j["detail"] = c.detail;
            checks.push_back(std::move(j));
        }
        s["checks"] = std::move(checks);
        all = all && r.passed();
        suites.push_back(std::move(s));
    }
    root["passed"] = all;
    root["suites"] = std::move(suites);
    return root.dump(2) + "\n";
}

void print_report(std::ostream& out, std::span<const SuiteReport> reports) {
    for (const auto& r : reports) {
        out << "suite " << r.suite << ": " << (r.passed() ? "PASS" : "FAIL") << " (" << std::fixed
            << std::setprecision(2) << r.runtime_seconds << " s)\n";
        out.unsetf(std::ios::fixed);
        for (const auto& c : r.checks) {
            out << "  " << (c.passed ? "ok  " : "FAIL") << " " << c.name << "  deviation=" << std::setprecision(4)
                << c.deviation << " tolerance=" << c.tolerance;
            if (!c.detail.empty()) {
                out << "  [" << c.detail << "]";
            }
            out << '\n';
        }
    }
}

}  // namespace ddiff
