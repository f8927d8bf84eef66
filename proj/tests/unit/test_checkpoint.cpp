#include <doctest.h>

#include <filesystem>

#include "ddiff/checkpoint.hpp"

using namespace ddiff;

namespace {

DenoiserCheckpoint sample_checkpoint() {
    DenoiserCheckpoint c;
    c.kind = ModelKind::absorbing;
    c.vocab = Vocabulary::letters(3, true);
    c.params = DenoiserParams::random(TrunkShape{4, 5, 6, 2, 2}, 3);
    c.copy_floor = 2.5e-4;
    return c;
}

}  // namespace

TEST_CASE("denoiser checkpoints round trip bit for bit") {
    const auto c = sample_checkpoint();
    const std::string text = serialize(c);
    const auto back = parse_denoiser_checkpoint(text);
    CHECK(back.kind == c.kind);
    CHECK(back.vocab == c.vocab);
    CHECK(back.schedule == c.schedule);
    CHECK(back.params.shape == c.params.shape);
    CHECK(back.params.tensors == c.params.tensors);
    CHECK(back.copy_floor == c.copy_floor);
    CHECK(serialize(back) == text);

    const auto path = std::filesystem::temp_directory_path() / "ddiff_ckpt_test.json";
    save_checkpoint(path, c);
    CHECK(serialize(load_denoiser_checkpoint(path)) == text);

    const auto a = c.make_denoiser();
    const auto b = back.make_denoiser();
    const Sequence z = {3, 1, 3, 0, 2};
    CHECK(a.predict(z, 0.4, 1) == b.predict(z, 0.4, 1));
}

TEST_CASE("classifier checkpoints round trip") {
    ClassifierCheckpoint c;
    c.vocab = Vocabulary::letters(3);
    c.params = ClassifierParams::random(TrunkShape{3, 4, 5, 1, 2}, 8);
    const auto back = parse_classifier_checkpoint(serialize(c));
    CHECK(back.params.tensors == c.params.tensors);
    CHECK_THROWS_AS(parse_denoiser_checkpoint(serialize(c)), FormatError);
    CHECK_THROWS_AS(parse_classifier_checkpoint(serialize(sample_checkpoint())), FormatError);
}

TEST_CASE("malformed checkpoints") {
    const std::string good = serialize(sample_checkpoint());
    CHECK_THROWS_AS(parse_denoiser_checkpoint("{"), FormatError);
    CHECK_THROWS_AS(parse_denoiser_checkpoint("{}"), FormatError);
    CHECK_THROWS_AS(parse_denoiser_checkpoint(good.substr(0, good.size() / 2)), FormatError);
    std::string v2 = good;
    const auto at = v2.find("\"format_version\":1");
    REQUIRE(at != std::string::npos);
    v2.replace(at, 18, "\"format_version\":2");
    CHECK_THROWS_AS(parse_denoiser_checkpoint(v2), FormatError);
    CHECK_THROWS_AS(load_denoiser_checkpoint("/nonexistent/ckpt.json"), FormatError);
}
