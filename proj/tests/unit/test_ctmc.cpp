#include <doctest.h>

#include <cmath>

#include "ddiff/ctmc.hpp"
#include "ddiff/forward.hpp"
#include "ddiff/verify.hpp"

using namespace ddiff;

TEST_CASE("uniform rate worked value") {
    const auto r = uniform_rate(NoiseSchedule{}, 0.5, 2);
    CHECK(r(0, 0) == doctest::Approx(-1.0).epsilon(1e-15));
    CHECK(r(0, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r(1, 0) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(r(1, 1) == doctest::Approx(-1.0).epsilon(1e-15));
}

TEST_CASE("uniform rate rows sum to zero") {
    for (int n = 2; n <= 6; ++n) {
        for (int k = 1; k < 20; ++k) {
            CHECK_NOTHROW(validate_rate(uniform_rate(NoiseSchedule{}, k / 20.0, n)));
        }
    }
}

TEST_CASE("reverse rate") {
    const auto r = uniform_rate(NoiseSchedule{}, 0.3, 3);
    SUBCASE("uniform marginal gives the transpose") {
        const auto rev = reverse_rate(r, [](Token) { return 1.0 / 3.0; });
        for (int a = 0; a < 3; ++a) {
            for (int b = 0; b < 3; ++b) {
                CHECK(rev(a, b) == doctest::Approx(r(b, a)).epsilon(1e-14));
            }
        }
        validate_rate(rev);
    }
    SUBCASE("two-state hand value") {
        const auto r2 = uniform_rate(NoiseSchedule{}, 0.5, 2);
        // Off-diagonal: R(b, a) q(b) / q(a) = 1 * 0.75 / 0.25 = 3 from 0 to 1.
        const auto rev = reverse_rate(r2, [](Token z) { return z == 0 ? 0.25 : 0.75; });
        CHECK(rev(0, 1) == doctest::Approx(3.0).epsilon(1e-15));
        CHECK(rev(0, 0) == doctest::Approx(-3.0).epsilon(1e-15));
        CHECK(rev(1, 0) == doctest::Approx(1.0 / 3.0).epsilon(1e-15));
        validate_rate(rev);
    }
}

TEST_CASE("euler transition") {
    const auto r = uniform_rate(NoiseSchedule{}, 0.5, 3);
    CHECK(euler_transition(1, r, 0.0).probs() == Categorical::one_hot(3, 1).probs());
    const auto p = euler_transition(1, r, 0.1);
    double s = 0.0;
    for (double v : p.probs()) {
        CHECK(v >= 0.0);
        s += v;
    }
    CHECK(s == doctest::Approx(1.0));
    CHECK_THROWS(euler_transition(1, r, 2.0 * max_euler_dt(r)));
}

TEST_CASE("euler step matches the uniform posterior to first order in dt") {
    // Variational step from t to t - dt with x_theta equal to the true
    // posterior mean, against one Euler step of the model reverse rate.
    const auto model = random_denoiser(ModelKind::uniform, 3, 1, 4);
    const NoiseSchedule s;
    const double t = 0.6;
    std::vector<double> dts;
    std::vector<double> tvs;
    const auto rate = model_reverse_rate(s, t, [&](Token a) {
        const Sequence z = {a};
        const Matrix m = model.predict(z, t);
        return std::vector<double>(m.row(0).begin(), m.row(0).end());
    });
    for (double dt : {0.04, 0.02, 0.01, 0.005, 0.0025}) {
        const Sequence z = {1};
        const Matrix m = model.predict(z, t);
        const auto var = posterior_uniform_mean_at(1, m.row(0), s.alpha(t), s.alpha(t - dt));
        dts.push_back(dt);
        tvs.push_back(total_variation(var, euler_transition(1, rate, dt)));
    }
    double mx = 0, my = 0;
    for (std::size_t i = 0; i < dts.size(); ++i) {
        mx += std::log(dts[i]);
        my += std::log(tvs[i]);
    }
    mx /= dts.size();
    my /= dts.size();
    double sxy = 0, sxx = 0;
    for (std::size_t i = 0; i < dts.size(); ++i) {
        sxy += (std::log(dts[i]) - mx) * (std::log(tvs[i]) - my);
        sxx += (std::log(dts[i]) - mx) * (std::log(dts[i]) - mx);
    }
    const double slope = sxy / sxx;
    MESSAGE("single-step TV slope " << slope);
    // TV is O(dt^2) per step, so the slope lies well above the linear rate.
    CHECK(slope >= 1.0);
    CHECK(slope <= 2.0 * 1.05);
}

TEST_CASE("guided rates") {
    const auto a = uniform_rate(NoiseSchedule{}, 0.3, 3);
    const auto b = reverse_rate(a, [](Token z) { return 0.2 + 0.3 * z; });
    const auto one = guided_rate_cfg(a, b, 1.0);
    const auto zero = guided_rate_cfg(a, b, 0.0);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(one(i, j) == doctest::Approx(a(i, j)).epsilon(1e-15));
            CHECK(zero(i, j) == doctest::Approx(b(i, j)).epsilon(1e-15));
        }
    }
    const auto same = guided_rate_cbg(b, [](Token, Token) { return 1.0; }, 3.0);
    const auto none = guided_rate_cbg(b, [](Token x, Token y) { return (1.0 + x) / (1.0 + y); }, 0.0);
    for (int i = 0; i < 3; ++i) {
        for (int j = 0; j < 3; ++j) {
            CHECK(same(i, j) == doctest::Approx(b(i, j)).epsilon(1e-15));
            CHECK(none(i, j) == doctest::Approx(b(i, j)).epsilon(1e-15));
        }
    }
    validate_rate(guided_rate_cfg(a, b, 2.5), 1e-10);
}

TEST_CASE("guided CTMC and guided variational chains agree at rate one in dt") {
    const auto cfg = ctmc_cfg_slope(1, 2.0);
    const auto cbg = ctmc_cbg_slope(1, 2.0);
    CHECK(cfg.exponent >= 0.8);
    CHECK(cfg.exponent <= 1.2);
    CHECK(cbg.exponent >= 0.8);
    CHECK(cbg.exponent <= 1.2);
}
