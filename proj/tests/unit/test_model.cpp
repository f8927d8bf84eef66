#include <doctest.h>

#include <cmath>

#include "ddiff/model.hpp"
#include "ddiff/verify.hpp"

using namespace ddiff;

namespace {

double row_sum(std::span<const double> r) {
    double s = 0.0;
    for (double v : r) {
        s += v;
    }
    return s;
}

}  // namespace

TEST_CASE("zero parameters give uniform rows") {
    const TrunkShape shape{5, 4, 8, 2, 0};
    const auto rows = denoise(DenoiserParams::zeros(shape), NoiseSchedule{}, Sequence{0, 1, 2, 3}, 0.5);
    for (const auto& r : rows) {
        for (double p : r.probs()) {
            CHECK(p == doctest::Approx(0.2).epsilon(1e-15));
        }
    }
    const TrunkShape cshape{5, 4, 8, 2, 3};
    for (double lp : classify(ClassifierParams::zeros(cshape), NoiseSchedule{}, Sequence{0, 1, 2, 3}, 0.5)) {
        CHECK(lp == doctest::Approx(std::log(1.0 / 3.0)));
    }
}

TEST_CASE("denoiser rows normalize and calls are deterministic") {
    Rng rng(4);
    const TrunkShape shape{6, 5, 16, 2, 3};
    const auto params = DenoiserParams::random(shape, 11, 2.0);
    double worst = 0.0;
    for (int k = 0; k < 100; ++k) {
        Sequence z(5);
        for (auto& t : z) {
            t = rng.uniform_int(6);
        }
        const double t = rng.uniform();
        const int cond = rng.uniform_int(4) - 1;
        const auto a = denoise(params, NoiseSchedule{}, z, t, cond);
        const auto b = denoise(params, NoiseSchedule{}, z, t, cond);
        for (std::size_t l = 0; l < a.size(); ++l) {
            worst = std::max(worst, std::abs(row_sum(a[l].span()) - 1.0));
            CHECK(a[l].probs() == b[l].probs());
        }
    }
    CHECK(worst <= 1e-12);
}

TEST_CASE("classifier log-probs normalize") {
    Rng rng(5);
    const TrunkShape shape{4, 3, 8, 2, 3};
    const auto params = ClassifierParams::random(shape, 3, 2.0);
    for (int k = 0; k < 100; ++k) {
        Sequence z = {rng.uniform_int(4), rng.uniform_int(4), rng.uniform_int(4)};
        const double t = rng.uniform();
        const auto lp = classify(params, NoiseSchedule{}, z, t);
        double s = 0.0;
        for (double v : lp) {
            s += std::exp(v);
        }
        CHECK(std::abs(s - 1.0) <= 1e-12);
        CHECK(lp == classify(params, NoiseSchedule{}, z, t));
    }
}

TEST_CASE("condition validation") {
    const TrunkShape shape{3, 2, 4, 1, 2};
    const auto params = DenoiserParams::random(shape, 1);
    CHECK_THROWS_AS(denoise(params, NoiseSchedule{}, Sequence{0, 1}, 0.5, 2), ContractError);
    CHECK_NOTHROW(denoise(params, NoiseSchedule{}, Sequence{0, 1}, 0.5, kDropped));
    CHECK_THROWS_AS(denoise(params, NoiseSchedule{}, Sequence{0, 1, 2}, 0.5), ContractError);
    const auto uncond = DenoiserParams::random(TrunkShape{3, 2, 4, 1, 0}, 1);
    CHECK_THROWS_AS(denoise(uncond, NoiseSchedule{}, Sequence{0, 1}, 0.5, 0), ContractError);
}

TEST_CASE("copy floor") {
    const TrunkShape shape{4, 3, 8, 1, 0};
    const auto params = DenoiserParams::random(shape, 2, 1.5);
    const Sequence z = {3, 0, 2};
    const auto copied = denoise_with_copy_floor(params, NoiseSchedule{}, z, 1e-6);
    for (std::size_t l = 0; l < z.size(); ++l) {
        CHECK(copied[l].probs() == Categorical::one_hot(4, z[l]).probs());
    }
    const auto passed = denoise_with_copy_floor(params, NoiseSchedule{}, z, 0.5);
    const auto plain = denoise(params, NoiseSchedule{}, z, 0.5);
    for (std::size_t l = 0; l < z.size(); ++l) {
        CHECK(passed[l].probs() == plain[l].probs());
    }
    const MlpDenoiser model(ModelKind::uniform, params);
    const Matrix m = model.predict(z, 1e-5);
    for (int l = 0; l < 3; ++l) {
        CHECK(m(l, z[static_cast<std::size_t>(l)]) == 1.0);
    }
}

TEST_CASE("absorbing parameterization") {
    const TrunkShape shape{4, 3, 8, 2, 0};
    const MlpDenoiser model(ModelKind::absorbing, DenoiserParams::random(shape, 8, 2.0), NoiseSchedule{}, 3);
    const Sequence z = {3, 1, 3};
    const Matrix m = model.predict(z, 0.6);
    for (int l = 0; l < 3; ++l) {
        CHECK(m(l, 3) == 0.0);
        CHECK(std::abs(row_sum(m.row(l)) - 1.0) <= 1e-12);
    }
    CHECK(m(1, 1) == 1.0);
    CHECK_THROWS_AS(MlpDenoiser(ModelKind::absorbing, DenoiserParams::random(shape, 8)), ContractError);
}

TEST_CASE("tabular denoiser is the leave-one-out posterior mean") {
    const auto prior = PriorSpec::uniform(3);
    const std::vector<Sequence> support = {{0, 1}, {2, 2}};
    const TabularDenoiser model(prior, support, {0.25, 0.75});
    const double t = 0.4;
    const double a = 1.0 - t;
    const Sequence z = {0, 2};
    // Row l weighs each support sequence by q(z^m | x^m) over m != l.
    auto q = [&](Token x, Token zz) { return (x == zz ? a : 0.0) + (1 - a) / 3.0; };
    const double r0 = 0.25 * q(1, 2);
    const double r1 = 0.75 * q(2, 2);
    const double c0 = 0.25 * q(0, 0);
    const double c1 = 0.75 * q(2, 0);
    const Matrix m = model.predict(z, t);
    CHECK(m(0, 0) == doctest::Approx(r0 / (r0 + r1)).epsilon(1e-14));
    CHECK(m(0, 2) == doctest::Approx(r1 / (r0 + r1)).epsilon(1e-14));
    CHECK(m(1, 1) == doctest::Approx(c0 / (c0 + c1)).epsilon(1e-14));
    CHECK(m(1, 2) == doctest::Approx(c1 / (c0 + c1)).epsilon(1e-14));
}

TEST_CASE("classifier one-hot gradient") {
    const TrunkShape shape{4, 3, 8, 2, 3};
    const Sequence z = {0, 3, 1};
    SUBCASE("zero head gives zero gradient") {
        auto params = ClassifierParams::random(shape, 5);
        for (auto& t : params.tensors.tensors()) {
            if (t.name == "output_weight" || t.name == "output_bias") {
                std::fill(t.value.data.begin(), t.value.data.end(), 0.0);
            }
        }
        const Matrix g = classify_grad_wrt_onehot(params, NoiseSchedule{}, z, 0.5, 1);
        for (double v : g.data) {
            CHECK(v == 0.0);
        }
    }
    SUBCASE("affine classifier has an input-independent gradient") {
        const AffineClassifier affine(4, 3, 17);
        const auto g1 = affine.log_prob_and_grad(Sequence{0, 0, 0}, 0.5, 0).grad;
        const auto g2 = affine.log_prob_and_grad(Sequence{3, 2, 1}, 0.5, 0).grad;
        CHECK(g1 == g2);
    }
}

TEST_CASE("counting classifier") {
    const MlpClassifier mlp(ClassifierParams::random(TrunkShape{3, 2, 4, 1, 2}, 1));
    CountingClassifier counter(mlp);
    (void)counter.log_probs(Sequence{0, 1}, 0.5);
    (void)counter.log_prob_and_grad(Sequence{0, 1}, 0.5, 1);
    CHECK(counter.forward_calls() == 2);
    CHECK(counter.backward_calls() == 1);
    counter.reset();
    CHECK(counter.forward_calls() == 0);
}

TEST_CASE("parameter layout") {
    const TrunkShape shape{5, 7, 16, 3, 4};
    const auto params = DenoiserParams::random(shape, 1);
    const auto layout = denoiser_layout(shape);
    REQUIRE(params.tensors.tensors().size() == layout.size());
    for (std::size_t i = 0; i < layout.size(); ++i) {
        CHECK(params.tensors.tensors()[i].name == layout[i].first);
        CHECK(params.tensors.tensors()[i].value.rows == layout[i].second.first);
        CHECK(params.tensors.tensors()[i].value.cols == layout[i].second.second);
    }
    CHECK(layout.front().first == "token_embedding");
    CHECK(std::any_of(layout.begin(), layout.end(), [](const auto& e) { return e.first == "condition_embedding"; }));
}
