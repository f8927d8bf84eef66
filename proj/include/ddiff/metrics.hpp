// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Sample-quality and controllability metrics.

#pragma once

#include <functional>
#include <optional>
#include <ostream>
#include <span>
#include <vector>

#include "ddiff/core.hpp"
#include "ddiff/model.hpp"
#include "ddiff/sampler.hpp"

namespace ddiff {

// Base-2 Jensen-Shannon divergence between k-mer histograms, in [0, 1].
double kmer_js(std::span<const Sequence> samples, std::span<const Sequence> reference, int k);

struct ControlReport {
    double accuracy = 0.0;
    double macro_recall = 0.0;   // mean over requested classes present
    std::vector<std::vector<long>> confusion;  // [requested][rule label]
};

using RuleOracle = std::function<int(std::span<const Token>)>;

ControlReport control_accuracy(std::span<const Sequence> samples, std::span<const int> requested, int num_classes,
                               const RuleOracle& oracle);

struct NoveltyReport {
    long num_valid = 0;
    long num_novel = 0;
    std::optional<double> property_mean;  // over novel sequences, absent when none
};

NoveltyReport validity_novelty_property(std::span<const Sequence> samples,
                                        const std::function<bool(std::span<const Token>)>& validator,
                                        std::span<const Sequence> train_set,
                                        const std::function<double(std::span<const Token>)>& property);

struct GammaSweepRow {
    double gamma = 0.0;
    double control_accuracy = 0.0;
    double kmer_js = 0.0;
    long num_novel = 0;
};

// For each gamma, one generation batch per class c with target_class c and
// seed template.seed + c * 0x9e3779b97f4a7c15; the template's sequence count
// is split evenly over the classes.
std::vector<GammaSweepRow> gamma_sweep(const Denoiser& denoiser, const Classifier* classifier,
                                       std::span<const double> gammas, const SampleRequest& request_template,
                                       int num_classes, const RuleOracle& oracle,
                                       std::span<const Sequence> reference, int k);

// Tab-separated with a header row.
void write_gamma_sweep_tsv(std::ostream& out, std::span<const GammaSweepRow> rows);

}  // namespace ddiff
