#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddiff/metrics.hpp"
#include "ddiff/sampler.hpp"
#include "ddiff/verify.hpp"

using namespace ddiff;

TEST_CASE("prior draws") {
    Rng rng(1);
    const auto masked = prior_draw(PriorSpec::absorbing(4, 3), 9, rng);
    CHECK(masked == Sequence(9, 3));
    long ones = 0;
    const long n = 1000000;
    const auto tokens = prior_draw(PriorSpec::uniform(2), static_cast<int>(n), rng);
    CHECK(tokens.size() == static_cast<std::size_t>(n));
    for (Token t : tokens) {
        ones += t;
    }
    CHECK(std::abs(ones - n / 2.0) < 3.0 * std::sqrt(n * 0.25));
}

TEST_CASE("a tiny step of the perfect denoiser keeps the latent") {
    const std::vector<Sequence> support = {{0, 1, 2}, {2, 2, 0}, {1, 0, 1}};
    const TabularDenoiser model(PriorSpec::uniform(3), support, {0.2, 0.5, 0.3});
    Rng rng(2);
    for (int k = 0; k < 50; ++k) {
        const Sequence z = {rng.uniform_int(3), rng.uniform_int(3), rng.uniform_int(3)};
        const double t = rng.uniform(0.1, 0.9);
        const auto rows = reverse_rows(z, t, t - 1e-4, model, GuidanceConfig{});
        for (std::size_t l = 0; l < rows.size(); ++l) {
            CHECK(total_variation(rows[l], Categorical::one_hot(3, z[l])) < 1e-3);
        }
    }
}

TEST_CASE("unguided conditional sampling equals cfg at gamma one") {
    const auto model = random_denoiser(ModelKind::uniform, 4, 3, 5, 3);
    const Sequence z = {0, 3, 1};
    const auto a = reverse_rows(z, 0.5, 0.4, model, GuidanceConfig{GuidanceMode::none, 1.0, 2});
    const auto b = reverse_rows(z, 0.5, 0.4, model, GuidanceConfig{GuidanceMode::cfg, 1.0, 2});
    for (std::size_t l = 0; l < a.size(); ++l) {
        CHECK(max_abs_diff(a[l].span(), b[l].span()) <= 1e-15);
    }
}

TEST_CASE("absorbing samples never revise an unmasked token") {
    const auto model = random_denoiser(ModelKind::absorbing, 5, 6, 7);
    SampleRequest req;
    req.num_sequences = 200;
    req.length = 6;
    req.T = 32;
    req.seed = 3;
    const auto result = generate(req, model);
    for (std::size_t i = 0; i < result.sequences.size(); ++i) {
        for (Token t : result.sequences[i]) {
            CHECK(t != 4);
        }
        CHECK(result.diagnostics[i].total_revisions() == 0);
        for (int e : result.diagnostics[i].edits) {
            CHECK(e == 1);
        }
    }
}

TEST_CASE("uniform samples revise tokens") {
    const auto model = random_denoiser(ModelKind::uniform, 4, 6, 7);
    SampleRequest req;
    req.num_sequences = 50;
    req.length = 6;
    req.T = 64;
    req.seed = 3;
    const auto result = generate(req, model);
    long revisions = 0;
    for (const auto& d : result.diagnostics) {
        revisions += d.total_revisions();
        CHECK(d.steps == 64);
    }
    CHECK(revisions > 0);
}

TEST_CASE("single-step absorbing generation unmasks everything") {
    const auto model = random_denoiser(ModelKind::absorbing, 4, 5, 1);
    SampleRequest req;
    req.num_sequences = 20;
    req.length = 5;
    req.T = 1;
    for (const auto& s : generate(req, model).sequences) {
        for (Token t : s) {
            CHECK(t != 3);
        }
    }
}

TEST_CASE("generation is reproducible and thread-count invariant") {
    const auto model = random_denoiser(ModelKind::uniform, 3, 4, 2, 2);
    SampleRequest req;
    req.num_sequences = 40;
    req.length = 4;
    req.T = 16;
    req.seed = 77;
    req.guidance = GuidanceConfig{GuidanceMode::cfg, 2.0, 1};
    req.threads = 1;
    const auto a = generate(req, model);
    req.threads = 4;
    const auto b = generate(req, model);
    CHECK(a.sequences == b.sequences);
    req.seed = 78;
    CHECK(generate(req, model).sequences != a.sequences);
    req.seed = 77;
    req.final_decode = FinalDecode::argmax;
    CHECK(generate(req, model).sequences == generate(req, model).sequences);
}

TEST_CASE("generation contracts") {
    const auto model = random_denoiser(ModelKind::uniform, 3, 4, 2);
    SampleRequest req;
    req.length = 5;
    CHECK_THROWS_AS(generate(req, model), ContractError);
    req.length = 4;
    req.T = 0;
    CHECK_THROWS_AS(generate(req, model), ContractError);
    req.T = 4;
    req.guidance.mode = GuidanceMode::cbg_exact;
    CHECK_THROWS_AS(generate(req, model), ContractError);
}

TEST_CASE("perfect tabular model reproduces the data distribution") {
    // All nine sequences of N = 3, L = 2 with unequal weights.
    const auto support = enumerate_sequences(3, 2);
    std::vector<double> weights = {9, 1, 4, 2, 6, 3, 5, 7, 8};
    const TabularDenoiser model(PriorSpec::uniform(3), support, weights);
    // Reference corpus with the exact data proportions (weights sum to 45).
    std::vector<Sequence> reference;
    for (std::size_t i = 0; i < support.size(); ++i) {
        for (int c = 0; c < static_cast<int>(weights[i]) * 1000; ++c) {
            reference.push_back(support[i]);
        }
    }
    std::vector<double> js;
    for (int T : {4, 16, 64, 256}) {
        SampleRequest req;
        req.num_sequences = T == 256 ? 100000 : 30000;
        req.length = 2;
        req.T = T;
        req.seed = 10 + static_cast<std::uint64_t>(T);
        js.push_back(kmer_js(generate(req, model).sequences, reference, 2));
    }
    MESSAGE("JS by T: " << js[0] << " " << js[1] << " " << js[2] << " " << js[3]);
    CHECK(js.back() < 0.01);
    for (std::size_t i = 0; i + 1 < js.size(); ++i) {
        CHECK(js[i + 1] <= js[i] + 5e-4);
    }
}

TEST_CASE("sample files") {
    const auto dir = std::filesystem::temp_directory_path() / "ddiff_sampler_test";
    std::filesystem::create_directories(dir);
    const std::vector<Sequence> seqs = {{0, 1}, {1, 1}};
    write_samples(dir / "s.txt", seqs, Vocabulary::letters(2));
    std::ifstream in(dir / "s.txt");
    std::stringstream ss;
    ss << in.rdbuf();
    CHECK(ss.str() == "ab\nbb\n");
    SampleRequest req;
    req.seed = 123;
    req.T = 9;
    write_sample_sidecar(dir / "s.json", req);
    std::ifstream js(dir / "s.json");
    std::stringstream jss;
    jss << js.rdbuf();
    CHECK(jss.str().find("\"seed\": 123") != std::string::npos);
    CHECK(jss.str().find("\"T\": 9") != std::string::npos);
}
