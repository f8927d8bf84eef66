#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <fstream>

#include "ddiff/data.hpp"
#include "ddiff/rng.hpp"

using namespace ddiff;

namespace {

std::filesystem::path scratch(const std::string& name) {
    const auto dir = std::filesystem::temp_directory_path() / "ddiff_data_test";
    std::filesystem::create_directories(dir);
    return dir / name;
}

void write_file(const std::filesystem::path& p, const std::string& text) {
    std::ofstream out(p);
    out << text;
}

}  // namespace

TEST_CASE("tokenization") {
    const auto vocab = Vocabulary::letters(3);
    CHECK(tokenize("ab", vocab) == Sequence{0, 1});
    CHECK(detokenize(Sequence{2, 0}, vocab) == "ca");
    CHECK_THROWS_AS(tokenize("", vocab), ContractError);
    CHECK_THROWS_AS(tokenize("ad", vocab), FormatError);
    Rng rng(5);
    for (int i = 0; i < 1000; ++i) {
        std::string s;
        const int len = 1 + rng.uniform_int(12);
        for (int j = 0; j < len; ++j) {
            s.push_back(static_cast<char>('a' + rng.uniform_int(3)));
        }
        CHECK(detokenize(tokenize(s, vocab), vocab) == s);
    }
}

TEST_CASE("text datasets") {
    const auto vocab = Vocabulary::letters(3);
    const auto seqs = scratch("seqs.txt");
    const auto labels = scratch("labels.txt");
    write_file(seqs, "abc\ncab\nbba\n");
    write_file(labels, "0\n2\n1\n");
    const auto data = load_text_dataset(seqs, vocab, 3, labels, 3);
    CHECK(data.size() == 3);
    CHECK(data.sequences[1] == Sequence{2, 0, 1});
    CHECK(data.labels == std::vector<int>{0, 2, 1});

    write_text_dataset(scratch("out.txt"), data, vocab, scratch("out_labels.txt"));
    const auto again = load_text_dataset(scratch("out.txt"), vocab, 3, scratch("out_labels.txt"), 3);
    CHECK(again.sequences == data.sequences);
    CHECK(again.labels == data.labels);

    SUBCASE("wrong length names the line") {
        write_file(seqs, "abc\nab\n");
        try {
            load_text_dataset(seqs, vocab, 3);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find(":2:") != std::string::npos);
        }
    }
    SUBCASE("bad character names the line") {
        write_file(seqs, "abc\nabc\nazc\n");
        try {
            load_text_dataset(seqs, vocab, 3);
            FAIL("expected FormatError");
        } catch (const FormatError& e) {
            CHECK(std::string(e.what()).find(":3:") != std::string::npos);
        }
    }
    SUBCASE("label count mismatch") {
        write_file(labels, "0\n1\n");
        CHECK_THROWS_AS(load_text_dataset(seqs, vocab, 3, labels, 3), FormatError);
    }
    SUBCASE("label out of range") {
        write_file(labels, "0\n3\n1\n");
        CHECK_THROWS_AS(load_text_dataset(seqs, vocab, 3, labels, 3), FormatError);
    }
}

TEST_CASE("vocabulary files") {
    const Vocabulary v({"x", "y", "#"}, 2);
    save_vocabulary(scratch("vocab.json"), v);
    CHECK(load_vocabulary(scratch("vocab.json")) == v);
    write_file(scratch("bad.json"), "{\"symbols\": 3}");
    CHECK_THROWS_AS(load_vocabulary(scratch("bad.json")), FormatError);
}

TEST_CASE("stationary distribution") {
    Matrix flat(3, 3, 1.0 / 3.0);
    for (double p : stationary_distribution(flat)) {
        CHECK(p == doctest::Approx(1.0 / 3.0).epsilon(1e-12));
    }
    Matrix two(2, 2);
    two(0, 0) = 0.9;
    two(0, 1) = 0.1;
    two(1, 0) = 0.3;
    two(1, 1) = 0.7;
    const auto pi = stationary_distribution(two);
    CHECK(pi[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(pi[1] == doctest::Approx(0.25).epsilon(1e-12));
}

TEST_CASE("markov corpora") {
    SUBCASE("a sticky chain repeats the first token") {
        // The identity has no unique stationary distribution.
        Matrix sticky(3, 3, 0.0);
        for (int i = 0; i < 3; ++i) {
            for (int j = 0; j < 3; ++j) {
                sticky(i, j) = i == j ? 1.0 - 2e-12 : 1e-12;
            }
        }
        const auto corpus = gen_markov_corpus(3, 6, sticky, 500, 3);
        for (const auto& s : corpus.data.sequences) {
            for (Token t : s) {
                CHECK(t == s.front());
            }
        }
    }
    SUBCASE("bigram frequencies match the transition matrix") {
        Matrix p(2, 2);
        p(0, 0) = 0.8;
        p(0, 1) = 0.2;
        p(1, 0) = 0.4;
        p(1, 1) = 0.6;
        const auto corpus = gen_markov_corpus(2, 20, p, 5000, 11);
        std::vector<double> from(2, 0.0);
        std::vector<double> to01(2, 0.0);
        for (const auto& s : corpus.data.sequences) {
            for (std::size_t i = 0; i + 1 < s.size(); ++i) {
                from[static_cast<std::size_t>(s[i])] += 1;
                to01[static_cast<std::size_t>(s[i])] += s[i + 1] == 1;
            }
        }
        for (int a = 0; a < 2; ++a) {
            const double n = from[static_cast<std::size_t>(a)];
            const double est = to01[static_cast<std::size_t>(a)] / n;
            const double sd = std::sqrt(p(a, 1) * (1 - p(a, 1)) / n);
            CHECK(std::abs(est - p(a, 1)) < 4 * sd);
        }
    }
}

TEST_CASE("label rules") {
    CHECK(label_by_rule(LabelRule::majority_token, Sequence{2, 1, 2, 0}, 3, 3) == 2);
    CHECK(label_by_rule(LabelRule::majority_token, Sequence{2, 1, 1, 2}, 3, 3) == 1);
    CHECK(label_by_rule(LabelRule::majority_token, Sequence{2, 0, 1}, 3, 3) == 0);
    CHECK(label_by_rule(LabelRule::prefix_class, Sequence{3, 0}, 6, 2) == 1);
    CHECK(label_by_rule(LabelRule::prefix_class, Sequence{2, 5}, 6, 2) == 0);
    CHECK(label_by_rule(LabelRule::prefix_class, Sequence{5}, 6, 3) == 2);
    CHECK_THROWS_AS(label_by_rule(LabelRule::prefix_class, Sequence{0}, 3, 4), ContractError);
    CHECK(label_rule_from_string(to_string(LabelRule::prefix_class)) == LabelRule::prefix_class);
}

TEST_CASE("labeled corpus") {
    const auto data = gen_labeled_corpus(4, 5, 300, LabelRule::majority_token, 9);
    CHECK(data.num_classes == 4);
    CHECK(data.size() == 300);
    for (std::size_t i = 0; i < data.size(); ++i) {
        CHECK(data.labels[i] == label_by_rule(LabelRule::majority_token, data.sequences[i], 4, 4));
    }
    CHECK_NOTHROW(data.validate(4));
    CHECK(gen_labeled_corpus(4, 5, 300, LabelRule::majority_token, 9).sequences == data.sequences);
}
