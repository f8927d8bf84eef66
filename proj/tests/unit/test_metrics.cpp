#include <doctest.h>

#include <cmath>
#include <sstream>

#include "ddiff/data.hpp"
#include "ddiff/metrics.hpp"
#include "ddiff/model.hpp"
#include "ddiff/verify.hpp"

using namespace ddiff;

TEST_CASE("kmer js") {
    const std::vector<Sequence> a = {{0, 1, 2}, {1, 1, 0}};
    const std::vector<Sequence> b = {{2, 2, 2}};
    const std::vector<Sequence> c = {{0, 0, 1}, {2, 1, 1}, {1, 0, 0}};
    CHECK(kmer_js(a, a, 2) == 0.0);
    CHECK(kmer_js(std::vector<Sequence>{{0, 0}}, b, 1) == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(kmer_js(a, c, 2) == doctest::Approx(kmer_js(c, a, 2)).epsilon(1e-15));
    // Unigrams: a -> {0: 2/6, 1: 3/6, 2: 1/6}, b -> {2: 1}.
    const double m2 = 0.5 * (1.0 / 6 + 1.0);
    const double expected = 0.5 * ((2.0 / 6) * 1.0 + (3.0 / 6) * 1.0 + (1.0 / 6) * std::log2((1.0 / 6) / m2)) +
                            0.5 * std::log2(1.0 / m2);
    CHECK(kmer_js(a, b, 1) == doctest::Approx(expected).epsilon(1e-14));
    CHECK_THROWS_AS(kmer_js(a, b, 4), ContractError);
    CHECK_THROWS_AS(kmer_js({}, b, 1), ContractError);
}

TEST_CASE("control accuracy") {
    const auto data = gen_labeled_corpus(3, 6, 2000, LabelRule::majority_token, 4);
    const RuleOracle oracle = [](std::span<const Token> s) { return label_by_rule(LabelRule::majority_token, s, 3, 3); };
    SUBCASE("labels of the data itself") {
        const auto r = control_accuracy(data.sequences, data.labels, 3, oracle);
        CHECK(r.accuracy == 1.0);
        CHECK(r.macro_recall == 1.0);
    }
    SUBCASE("random requests") {
        Rng rng(8);
        std::vector<int> req;
        for (std::size_t i = 0; i < data.size(); ++i) {
            req.push_back(rng.uniform_int(3));
        }
        const auto r = control_accuracy(data.sequences, req, 3, oracle);
        const double sd = std::sqrt((1.0 / 3) * (2.0 / 3) / data.size());
        CHECK(std::abs(r.accuracy - 1.0 / 3) < 3 * sd);
        long total = 0;
        for (const auto& row : r.confusion) {
            for (long v : row) {
                total += v;
            }
        }
        CHECK(total == static_cast<long>(data.size()));
    }
    CHECK_THROWS_AS(control_accuracy({}, {}, 3, oracle), ContractError);
    const std::vector<Sequence> one = {{0, 0, 0, 0, 0, 0}};
    CHECK_THROWS_AS(control_accuracy(one, std::vector<int>{1, 2}, 3, oracle), ContractError);
}

TEST_CASE("novelty") {
    const std::vector<Sequence> train = {{0, 0}, {1, 1}};
    const std::vector<Sequence> samples = {{0, 0}, {0, 1}, {0, 1}, {1, 0}, {2, 2}};
    const auto valid = [](std::span<const Token> s) { return s[0] != 2; };
    const auto prop = [](std::span<const Token> s) { return static_cast<double>(s[0] + 2 * s[1]); };
    const auto r = validity_novelty_property(samples, valid, train, prop);
    CHECK(r.num_valid == 4);
    CHECK(r.num_novel == 2);
    REQUIRE(r.property_mean.has_value());
    CHECK(*r.property_mean == doctest::Approx(1.5));
    const auto none = validity_novelty_property(train, valid, train, prop);
    CHECK(none.num_novel == 0);
    CHECK_FALSE(none.property_mean.has_value());
}

TEST_CASE("gamma sweep") {
    const auto model = random_denoiser(ModelKind::uniform, 3, 4, 5, 3);
    const auto data = gen_labeled_corpus(3, 4, 500, LabelRule::majority_token, 2);
    const RuleOracle oracle = [](std::span<const Token> s) { return label_by_rule(LabelRule::majority_token, s, 3, 3); };
    SampleRequest req;
    req.num_sequences = 31;
    req.length = 4;
    req.T = 8;
    req.seed = 3;
    req.guidance.mode = GuidanceMode::cfg;
    const std::vector<double> gammas = {0.0, 1.0, 2.0};
    const auto rows = gamma_sweep(model, nullptr, gammas, req, 3, oracle, data.sequences, 2);
    REQUIRE(rows.size() == 3);
    for (std::size_t i = 0; i < rows.size(); ++i) {
        CHECK(rows[i].gamma == gammas[i]);
        CHECK(rows[i].control_accuracy >= 0.0);
        CHECK(rows[i].control_accuracy <= 1.0);
        CHECK(rows[i].kmer_js >= 0.0);
        CHECK(rows[i].num_novel <= 31);
    }
    std::ostringstream out;
    write_gamma_sweep_tsv(out, rows);
    CHECK(out.str().rfind("gamma\tcontrol_accuracy\tkmer_js\tnum_novel\n", 0) == 0);
    CHECK(gamma_sweep(model, nullptr, gammas, req, 3, oracle, data.sequences, 2)[2].kmer_js == rows[2].kmer_js);
}
