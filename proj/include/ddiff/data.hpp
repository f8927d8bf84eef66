// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Character-level tokenization, dataset files, and synthetic corpora with
// known statistics.

#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "ddiff/core.hpp"

namespace ddiff {

struct Dataset {
    std::vector<Sequence> sequences;
    std::vector<int> labels;  // empty when unlabeled
    int num_classes = 0;

    bool labeled() const { return !labels.empty(); }
    int length() const { return sequences.empty() ? 0 : static_cast<int>(sequences.front().size()); }
    std::size_t size() const { return sequences.size(); }
    // Throws ContractError on ragged lengths, misaligned labels or bad tokens.
    void validate(int vocab_size) const;
};

// Each symbol must be a single character for tokenization.
Sequence tokenize(const std::string& text, const Vocabulary& vocab);
std::string detokenize(std::span<const Token> seq, const Vocabulary& vocab);

Dataset load_text_dataset(const std::filesystem::path& path, const Vocabulary& vocab, int length,
                          const std::optional<std::filesystem::path>& labels_path = std::nullopt,
                          int num_classes = 0);
void write_text_dataset(const std::filesystem::path& path, const Dataset& data, const Vocabulary& vocab,
                        const std::optional<std::filesystem::path>& labels_path = std::nullopt);

// JSON: {"symbols": [...], "mask": "#"} with "mask" optional.
Vocabulary load_vocabulary(const std::filesystem::path& path);
void save_vocabulary(const std::filesystem::path& path, const Vocabulary& vocab);

// Markov chain corpus: first token from the stationary distribution of the
// row-stochastic N x N transition matrix, the rest from its rows.
struct MarkovCorpus {
    Dataset data;
    Matrix transition;
    std::vector<double> stationary;
};

MarkovCorpus gen_markov_corpus(int n, int length, const Matrix& transition, int count, std::uint64_t seed);
std::vector<double> stationary_distribution(const Matrix& transition);

enum class LabelRule { majority_token, prefix_class };

std::string to_string(LabelRule rule);
LabelRule label_rule_from_string(const std::string& name);

// majority_token: most frequent token, ties to the smallest index (K = N).
// prefix_class: first token bucketed into K classes, floor(x0 * K / N).
int label_by_rule(LabelRule rule, std::span<const Token> seq, int n, int num_classes);

// i.i.d. uniform tokens labeled by the rule.
Dataset gen_labeled_corpus(int n, int length, int count, LabelRule rule, std::uint64_t seed, int num_classes = 0);

}  // namespace ddiff
