#include <doctest.h>

#include <cmath>

#include "ddiff/loss.hpp"
#include "ddiff/verify.hpp"

using namespace ddiff;

namespace {

// Continuous-time integrand at N = 2, alpha = 0.5, x = z_t = 0,
// x_theta = [0.75, 0.25]. Frozen from the KL / dt limit oracle below.
constexpr double kWorkedIntegrand = 0.07073777837;

}  // namespace

TEST_CASE("kl divergence") {
    const std::vector<double> p = {0.3, 0.7};
    CHECK(kl_divergence(p, p) == 0.0);
    const std::vector<double> q = {1.0, 0.0};
    CHECK(kl_divergence(q, p) == doctest::Approx(std::log(1.0 / 0.3)));
    CHECK(std::isinf(kl_divergence(p, q)));
}

TEST_CASE("diffusion kl worked example") {
    const std::vector<double> xt = {0.5, 0.5};
    const double got = diffusion_kl_at(0, 0, 0.4, 0.8, xt, PriorSpec::uniform(2));
    // q = [27/28, 1/28]; p from the soft posterior: [0.75, 0.25].
    const double want = 27.0 / 28.0 * std::log((27.0 / 28.0) / 0.75) + 1.0 / 28.0 * std::log((1.0 / 28.0) / 0.25);
    CHECK(std::abs(got - want) <= 1e-15);
}

TEST_CASE("diffusion kl vanishes at the truth and is nonnegative") {
    Rng rng(2);
    double min_value = 0.0;
    for (int k = 0; k < 2000; ++k) {
        const int n = 2 + rng.uniform_int(4);
        const Token x = rng.uniform_int(n);
        const Token z = rng.uniform_int(n);
        const double at = rng.uniform(0.0, 0.9);
        const double as = at + rng.uniform(0.0, 1.0 - at);
        std::vector<double> w(static_cast<std::size_t>(n));
        for (double& v : w) {
            v = rng.uniform() + 1e-3;
        }
        const auto xt = Categorical::normalized(w);
        min_value = std::min(min_value, diffusion_kl_at(x, z, at, as, xt.span(), PriorSpec::uniform(n)));
        CHECK(diffusion_kl_at(x, z, at, as, Categorical::one_hot(n, x).span(), PriorSpec::uniform(n)) <= 1e-12);
    }
    CHECK(min_value >= -1e-12);
}

TEST_CASE("udlm integrand worked value") {
    const std::vector<double> xt = {0.75, 0.25};
    const double value = udlm_integrand_at(0, 0, 0.5, -1.0, xt);
    CHECK(std::abs(value - kWorkedIntegrand) <= 1e-10);
    // Independent limit: KL between posteriors over a short step, per unit time.
    const double h = 1e-7;
    const double limit = diffusion_kl_at(0, 0, 0.5, 0.5 + h, xt, PriorSpec::uniform(2)) / h;
    CHECK(std::abs(limit - value) / value < 1e-5);
    CHECK(std::abs(sedd_form_nelbo_at(0, 0, 0.5, -1.0, xt) - kWorkedIntegrand) <= 1e-10);
}

TEST_CASE("udlm integrand vanishes at the truth and rejects unclamped times") {
    const NoiseSchedule s;
    for (int n = 2; n <= 6; ++n) {
        for (Token x = 0; x < n; ++x) {
            for (Token z = 0; z < n; ++z) {
                const auto hot = Categorical::one_hot(n, x);
                CHECK(std::abs(udlm_integrand(s, x, z, 0.3, hot)) <= 1e-12);
                CHECK(std::abs(sedd_form_nelbo(s, x, z, 0.3, hot)) <= 1e-12);
            }
        }
    }
    CHECK_THROWS_AS(udlm_integrand(s, 0, 0, 0.0, Categorical::uniform(2)), ContractError);
    CHECK_THROWS_AS(udlm_integrand(s, 0, 0, 1.0, Categorical::uniform(2)), ContractError);
}

TEST_CASE("udlm integrand gradient") {
    Rng rng(8);
    for (int k = 0; k < 50; ++k) {
        const int n = 2 + rng.uniform_int(5);
        const Token x = rng.uniform_int(n);
        const Token z = rng.uniform_int(n);
        const double a = rng.uniform(0.05, 0.95);
        std::vector<double> xt(static_cast<std::size_t>(n));
        for (double& v : xt) {
            v = rng.uniform() + 0.05;
        }
        const auto tl = udlm_integrand_grad_at(x, z, a, -1.0, xt);
        CHECK(tl.value == doctest::Approx(udlm_integrand_at(x, z, a, -1.0, xt)).epsilon(1e-12));
        for (std::size_t j = 0; j < xt.size(); ++j) {
            auto up = xt;
            auto down = xt;
            up[j] += 1e-6;
            down[j] -= 1e-6;
            const double fd = (udlm_integrand_at(x, z, a, -1.0, up) - udlm_integrand_at(x, z, a, -1.0, down)) / 2e-6;
            CHECK(std::abs(fd - tl.grad[j]) / std::max({std::abs(fd), std::abs(tl.grad[j]), 1e-4}) < 1e-5);
        }
    }
}

TEST_CASE("mdlm token term ignores unmasked positions") {
    const std::vector<double> xt = {0.2, 0.8, 0.0};
    const auto unmasked = mdlm_token_grad_at(1, 1, 0.4, -1.0, xt, 2);
    CHECK(unmasked.value == 0.0);
    for (double g : unmasked.grad) {
        CHECK(g == 0.0);
    }
    const auto masked = mdlm_token_grad_at(1, 2, 0.4, -1.0, xt, 2);
    CHECK(masked.value == doctest::Approx(-std::log(0.8) / 0.6));
}

TEST_CASE("perfect tabular model has zero loss") {
    Rng rng(1);
    const Sequence x = {2, 0, 1};
    const TabularDenoiser uni(PriorSpec::uniform(3), {x}, {1.0});
    CHECK(nelbo_discrete_exact(x, uni, 16) <= 1e-6);
    CHECK(udlm_loss(x, uni, rng, 500).value <= 1e-6);
    const TabularDenoiser abs(PriorSpec::absorbing(4, 3), {x}, {1.0});
    CHECK(nelbo_discrete_exact(x, abs, 16) <= 1e-6);
    CHECK(mdlm_loss(x, abs, rng, 500).value <= 1e-6);
}

TEST_CASE("prior term is zero at full noise") {
    const auto d = random_denoiser(ModelKind::uniform, 3, 2, 4);
    CHECK(nelbo_prior_term(d, Sequence{0, 1}) == doctest::Approx(0.0).epsilon(1e-15));
}

TEST_CASE("doubling mc samples halves the estimator variance") {
    const auto d = random_denoiser(ModelKind::uniform, 3, 2, 21);
    const Sequence x = {1, 2};
    auto variance = [&](long m) {
        std::vector<double> values;
        for (std::uint64_t r = 0; r < 3000; ++r) {
            Rng rng = Rng::substream(99, {static_cast<std::uint64_t>(m), r});
            values.push_back(udlm_loss(x, d, rng, m).value);
        }
        const auto s = summarize(values);
        return s.std_error * s.std_error * static_cast<double>(values.size());
    };
    const double ratio = variance(4) / variance(8);
    CHECK(ratio >= 1.7);
    CHECK(ratio <= 2.3);
}

TEST_CASE("bpc and perplexity") {
    const int L = 7;
    CHECK(bpc(L * std::log(2.0), L) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(ppl(L * std::log(5.0), L) == doctest::Approx(5.0).epsilon(1e-14));
    const double nelbo = 12.345;
    CHECK(std::abs(bpc(nelbo, L) * std::log(2.0) * L - nelbo) <= 1e-12);
}

TEST_CASE("loss spec validation and names") {
    LossSpec spec;
    spec.T = 0;
    spec.objective = Objective::nelbo_discrete;
    CHECK_THROWS_AS(spec.validate(), ContractError);
    for (auto o : {Objective::nelbo_discrete, Objective::udlm_continuous, Objective::mdlm_continuous,
                   Objective::sedd_form}) {
        CHECK(objective_from_string(to_string(o)) == o);
    }
    CHECK_THROWS(objective_from_string("elbo"));
}
