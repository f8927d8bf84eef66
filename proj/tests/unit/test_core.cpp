#include <doctest.h>

#include <cmath>

#include "ddiff/core.hpp"
#include "ddiff/rng.hpp"

using namespace ddiff;

TEST_CASE("log-linear schedule endpoints and derivative") {
    const NoiseSchedule s;
    CHECK(s.alpha(0.0) == 1.0);
    CHECK(s.alpha(1.0) == 0.0);
    CHECK(s.alpha(0.25) == 0.75);
    CHECK(s.alpha_prime(0.5) == -1.0);
    CHECK(s.alpha_prime(0.01) == -1.0);
    const double h = 1e-6;
    for (double t : {0.1, 0.3, 0.7, 0.9}) {
        CHECK(std::abs((s.alpha(t + h) - s.alpha(t - h)) / (2 * h) - s.alpha_prime(t)) < 1e-8);
    }
}

TEST_CASE("schedule rejects times outside [0, 1]") {
    const NoiseSchedule s;
    CHECK_THROWS_AS(s.alpha(-0.1), ContractError);
    CHECK_THROWS_AS(s.alpha(1.5), ContractError);
}

TEST_CASE("alpha ratio") {
    const NoiseSchedule s;
    CHECK(s.alpha_ratio(0.5, 0.25) == doctest::Approx(2.0 / 3.0).epsilon(1e-15));
    CHECK(s.alpha_ratio(0.4, 0.4) == 1.0);
    CHECK_THROWS(s.alpha_ratio(1.0, 1.0));
}

TEST_CASE("clamp keeps stochastic evaluations away from the endpoints") {
    const NoiseSchedule s;
    CHECK(s.clamp(0.0) == s.t_min());
    CHECK(s.clamp(1.0) == s.t_max());
    CHECK(s.clamp(0.5) == 0.5);
}

TEST_CASE("categorical validation") {
    CHECK_THROWS_AS(Categorical({0.5, 0.6}), ContractError);
    CHECK_THROWS_AS(Categorical({-0.1, 1.1}), ContractError);
    CHECK_THROWS_AS(Categorical({NAN, 1.0}), ContractError);
    CHECK_THROWS_AS(Categorical::normalized({0.0, 0.0}), DomainError);
    const auto c = Categorical::normalized({1.0, 3.0});
    CHECK(c[1] == 0.75);
    CHECK(Categorical::one_hot(3, 2).probs() == std::vector<double>{0, 0, 1});
    CHECK(total_variation(Categorical::one_hot(2, 0), Categorical::one_hot(2, 1)) == 1.0);
}

TEST_CASE("vocabulary") {
    const auto v = Vocabulary::letters(3, true);
    CHECK(v.size() == 4);
    CHECK(v.mask_index() == 3);
    CHECK(v.symbol(0) == "a");
    CHECK(v.find("c") == 2);
    CHECK_FALSE(v.find("z").has_value());
    CHECK_THROWS(Vocabulary({"a", "a"}));
}

TEST_CASE("log_sum_exp is stable") {
    const std::vector<double> v = {1000.0, 1000.0};
    CHECK(log_sum_exp(v) == doctest::Approx(1000.0 + std::log(2.0)));
    const std::vector<double> w = {-1e300, 0.0};
    CHECK(log_sum_exp(w) == doctest::Approx(0.0));
}

TEST_CASE("rng streams are reproducible and substreams independent of order") {
    Rng a(42);
    Rng b(42);
    for (int i = 0; i < 100; ++i) {
        CHECK(a.uniform() == b.uniform());
    }
    Rng s1 = Rng::substream(7, {1, 2});
    Rng s2 = Rng::substream(7, {1, 2});
    Rng s3 = Rng::substream(7, {2, 1});
    const double x1 = s1.uniform();
    CHECK(x1 == s2.uniform());
    CHECK(x1 != s3.uniform());
}

TEST_CASE("rng categorical frequencies") {
    Rng rng(3);
    const std::vector<double> w = {1.0, 3.0};
    const int n = 100000;
    int ones = 0;
    for (int i = 0; i < n; ++i) {
        ones += rng.categorical(w);
    }
    const double sigma = std::sqrt(0.75 * 0.25 / n);
    CHECK(std::abs(ones / static_cast<double>(n) - 0.75) < 4 * sigma);
}
