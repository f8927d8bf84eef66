#include <doctest.h>

#include <cmath>

#include "ddiff/verify.hpp"

using namespace ddiff;

namespace {

bool all_passed(const std::vector<CheckResult>& checks) {
    for (const auto& c : checks) {
        if (!c.passed) {
            MESSAGE(c.name << " deviation " << c.deviation << " tolerance " << c.tolerance << " " << c.detail);
            return false;
        }
    }
    return !checks.empty();
}

}  // namespace

TEST_CASE("enumeration") {
    const auto all = enumerate_sequences(3, 2);
    REQUIRE(all.size() == 9);
    CHECK(all.front() == Sequence{0, 0});
    CHECK(all[1] == Sequence{0, 1});
    CHECK(all.back() == Sequence{2, 2});
    CHECK_THROWS_AS(enumerate_sequences(11, 6), ContractError);
}

TEST_CASE("exact reverse likelihood sums to one") {
    const auto model = random_denoiser(ModelKind::uniform, 2, 2, 5);
    double total = 0.0;
    for (const auto& x : enumerate_sequences(2, 2)) {
        total += std::exp(-exact_reverse_nll(model, x, 4));
    }
    CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
}

TEST_CASE("quick suites pass") {
    const SuiteOptions opt;
    CHECK(all_passed(check_posteriors()));
    CHECK(all_passed(check_zero_at_truth(opt)));
    CHECK(all_passed(check_kl_limit(opt)));
    CHECK(all_passed(check_bound_validity(opt)));
    CHECK(all_passed(check_cbg_exact(opt)));
    CHECK(all_passed(check_cfg()));
}

TEST_CASE("a sign-flipped integrand is caught") {
    SuiteOptions opt;
    opt.integrand = [](Token x, Token z, double a, double ap, std::span<const double> xt) {
        return -udlm_integrand_at(x, z, a, ap, xt);
    };
    const auto checks = check_kl_limit(opt);
    CHECK_FALSE(all_passed(checks));
    const auto reports = run_suite("limits", opt);
    REQUIRE(reports.size() == 1);
    CHECK_FALSE(reports[0].passed());
}

TEST_CASE("suite names") {
    CHECK(suite_names().size() == 7);
    CHECK_THROWS_AS(run_suite("nonsense"), ContractError);
    const auto reports = run_suite("posteriors");
    CHECK(report_json(reports).find("\"suite\"") != std::string::npos);
}
