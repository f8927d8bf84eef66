// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/data.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "ddiff/rng.hpp"

namespace ddiff {

void Dataset::validate(int vocab_size) const {
    if (sequences.empty()) {
        throw ContractError("dataset is empty");
    }
    const auto len = sequences.front().size();
    if (len == 0) {
        throw ContractError("dataset sequences must be non-empty");
    }
    for (const auto& s : sequences) {
        if (s.size() != len) {
            throw ContractError("dataset sequences differ in length");
        }
        check_sequence(s, vocab_size);
    }
    if (!labels.empty()) {
        if (labels.size() != sequences.size()) {
            throw ContractError("dataset labels misaligned with sequences");
        }
        for (int y : labels) {
            if (y < 0 || y >= num_classes) {
                throw ContractError("dataset label out of range");
            }
        }
    }
}

Sequence tokenize(const std::string& text, const Vocabulary& vocab) {
    if (text.empty()) {
        throw ContractError("cannot tokenize an empty string");
    }
    Sequence seq;
    seq.reserve(text.size());
    for (char c : text) {
        const auto tok = vocab.find(std::string(1, c));
        if (!tok) {
            throw FormatError(std::string("character '") + c + "' is not in the vocabulary");
        }
        seq.push_back(*tok);
    }
    return seq;
}

std::string detokenize(std::span<const Token> seq, const Vocabulary& vocab) {
    std::string out;
    for (Token t : seq) {
        out += vocab.symbol(t);
    }
    return out;
}

namespace {

std::ifstream open_in(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open '" + path.string() + "'");
    }
    return in;
}

std::ofstream open_out(const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    return out;
}

void strip_cr(std::string& line) {
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
}

}  // namespace

Dataset load_text_dataset(const std::filesystem::path& path, const Vocabulary& vocab, int length,
                          const std::optional<std::filesystem::path>& labels_path, int num_classes) {
    if (length < 1) {
        throw ContractError("sequence length must be positive");
    }
    Dataset data;
    auto in = open_in(path);
    std::string line;
    int line_no = 0;
    while (std::getline(in, line)) {
        ++line_no;
        strip_cr(line);
        if (line.empty() && in.peek() == std::char_traits<char>::eof()) {
            break;
        }
        if (static_cast<int>(line.size()) != length) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": expected length " +
                              std::to_string(length) + ", got " + std::to_string(line.size()));
        }
        try {
            data.sequences.push_back(tokenize(line, vocab));
        } catch (const FormatError& e) {
            throw FormatError(path.string() + ":" + std::to_string(line_no) + ": " + e.what());
        }
    }
    if (data.sequences.empty()) {
        throw FormatError("dataset '" + path.string() + "' has no sequences");
    }
    if (labels_path) {
        if (num_classes < 1) {
            throw ContractError("labels need a positive class count");
        }
        data.num_classes = num_classes;
        auto lin = open_in(*labels_path);
        int label_no = 0;
        while (std::getline(lin, line)) {
            ++label_no;
            strip_cr(line);
            if (line.empty()) {
                continue;
            }
            std::size_t used = 0;
            int y = 0;
            try {
                y = std::stoi(line, &used);
            } catch (const std::exception&) {
                used = 0;
            }
            if (used != line.size()) {
                throw FormatError(labels_path->string() + ":" + std::to_string(label_no) + ": not an integer");
            }
            if (y < 0 || y >= num_classes) {
                throw FormatError(labels_path->string() + ":" + std::to_string(label_no) + ": label " +
                                  std::to_string(y) + " out of range");
            }
            data.labels.push_back(y);
        }
        if (data.labels.size() != data.sequences.size()) {
            throw FormatError("label count " + std::to_string(data.labels.size()) + " does not match sequence count " +
                              std::to_string(data.sequences.size()));
        }
    }
    return data;
}

void write_text_dataset(const std::filesystem::path& path, const Dataset& data, const Vocabulary& vocab,
                        const std::optional<std::filesystem::path>& labels_path) {
    data.validate(vocab.size());
    auto out = open_out(path);
    for (const auto& s : data.sequences) {
        out << detokenize(s, vocab) << '\n';
    }
    if (labels_path) {
        if (!data.labeled()) {
            throw ContractError("dataset has no labels to write");
        }
        auto lout = open_out(*labels_path);
        for (int y : data.labels) {
            lout << y << '\n';
        }
    }
}

Vocabulary load_vocabulary(const std::filesystem::path& path) {
    auto in = open_in(path);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(in);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("vocabulary '" + path.string() + "': " + e.what());
    }
    std::vector<std::string> symbols;
    std::optional<Token> mask;
    try {
        const auto& list = j.is_array() ? j : j.at("symbols");
        symbols = list.get<std::vector<std::string>>();
        if (j.is_object() && j.contains("mask") && !j.at("mask").is_null()) {
            const auto m = j.at("mask").get<std::string>();
            for (std::size_t i = 0; i < symbols.size(); ++i) {
                if (symbols[i] == m) {
                    mask = static_cast<Token>(i);
                }
            }
            if (!mask) {
                symbols.push_back(m);
                mask = static_cast<Token>(symbols.size() - 1);
            }
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("vocabulary '" + path.string() + "': " + e.what());
    }
    return Vocabulary(std::move(symbols), mask);
}

void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab) {
    nlohmann::ordered_json j;
    j["symbols"] = vocab.symbols();
    if (vocab.has_mask()) {
        j["mask"] = vocab.symbol(*vocab.mask_index());
    }
    open_out(path) << j.dump(2) << '\n';
}

std::vector<double> stationary_distribution(const Matrix& transition) {
    const int n = transition.rows;
    std::vector<double> p(static_cast<std::size_t>(n), 1.0 / n);
    for (int it = 0; it < 100000; ++it) {
        std::vector<double> next(p.size(), 0.0);
        for (int a = 0; a < n; ++a) {
            for (int b = 0; b < n; ++b) {
                next[static_cast<std::size_t>(b)] += p[static_cast<std::size_t>(a)] * transition(a, b);
            }
        }
        const double diff = max_abs_diff(next, p);
        p = std::move(next);
        if (diff < 1e-15) {
            break;
        }
    }
    return Categorical::normalized(std::move(p)).probs();
}

MarkovCorpus gen_markov_corpus(int n, int length, const Matrix& transition, int count, std::uint64_t seed) {
    if (n < 2 || length < 1 || count < 1) {
        throw ContractError("markov corpus needs N >= 2, L >= 1, count >= 1");
    }
    if (transition.rows != n || transition.cols != n) {
        throw ContractError("transition matrix must be N x N");
    }
    for (int a = 0; a < n; ++a) {
        Categorical(std::vector<double>(transition.row(a).begin(), transition.row(a).end()));
    }
    MarkovCorpus corpus;
    corpus.transition = transition;
    corpus.stationary = stationary_distribution(transition);
    Rng rng(seed);
    corpus.data.sequences.reserve(static_cast<std::size_t>(count));
    for (int c = 0; c < count; ++c) {
        Sequence s(static_cast<std::size_t>(length));
        s[0] = rng.categorical(corpus.stationary);
        for (std::size_t l = 1; l < s.size(); ++l) {
            s[l] = rng.categorical(transition.row(s[l - 1]));
        }
        corpus.data.sequences.push_back(std::move(s));
    }
    // Self-check: every observed transition must have positive probability.
    for (const auto& s : corpus.data.sequences) {
        for (std::size_t l = 1; l < s.size(); ++l) {
            if (!(transition(s[l - 1], s[l]) > 0.0)) {
                throw NumericError("markov corpus self-check failed");
            }
        }
    }
    corpus.data.validate(n);
    return corpus;
}

std::string to_string(LabelRule rule) { return rule == LabelRule::majority_token ? "majority_token" : "prefix_class"; }

LabelRule label_rule_from_string(const std::string& name) {
    if (name == "majority_token") {
        return LabelRule::majority_token;
    }
    if (name == "prefix_class") {
        return LabelRule::prefix_class;
    }
    throw ContractError("unknown label rule '" + name + "'");
}

int label_by_rule(LabelRule rule, std::span<const Token> seq, int n, int num_classes) {
    check_sequence(seq, n);
    if (seq.empty()) {
        throw ContractError("cannot label an empty sequence");
    }
    if (rule == LabelRule::majority_token) {
        std::vector<int> counts(static_cast<std::size_t>(n), 0);
        for (Token t : seq) {
            ++counts[static_cast<std::size_t>(t)];
        }
        int best = 0;
        for (int j = 1; j < n; ++j) {
            if (counts[static_cast<std::size_t>(j)] > counts[static_cast<std::size_t>(best)]) {
                best = j;
            }
        }
        return best;
    }
    if (num_classes < 1 || num_classes > n) {
        throw ContractError("prefix_class needs 1 <= K <= N");
    }
    return seq.front() * num_classes / n;
}

Dataset gen_labeled_corpus(int n, int length, int count, LabelRule rule, std::uint64_t seed, int num_classes) {
    if (n < 2 || length < 1 || count < 1) {
        throw ContractError("labeled corpus needs N >= 2, L >= 1, count >= 1");
    }
    if (rule == LabelRule::majority_token) {
        num_classes = n;
    } else if (num_classes < 1 || num_classes > n) {
        throw ContractError("prefix_class needs 1 <= K <= N");
    }
    Dataset data;
    data.num_classes = num_classes;
    Rng rng(seed);
    for (int c = 0; c < count; ++c) {
        Sequence s(static_cast<std::size_t>(length));
        for (auto& t : s) {
            t = rng.uniform_int(n);
        }
        data.labels.push_back(label_by_rule(rule, s, n, num_classes));
        data.sequences.push_back(std::move(s));
    }
    for (std::size_t i = 0; i < data.size(); ++i) {
        if (label_by_rule(rule, data.sequences[i], n, num_classes) != data.labels[i]) {
            throw NumericError("labeled corpus self-check failed");
        }
    }
    data.validate(n);
    return data;
}

}  // namespace ddiff
