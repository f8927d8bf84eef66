// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Ancestral sampling from the parameterized reverse process.
//
// Guidance is applied to the per-position reverse distributions
// p_theta(z_s | z_t): CFG geometrically mixes the conditional and
// unconditional reverse rows, classifier guidance tempers the unconditional
// reverse rows by the classifier.

#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "ddiff/core.hpp"
#include "ddiff/guidance.hpp"
#include "ddiff/model.hpp"
#include "ddiff/rng.hpp"

namespace ddiff {

enum class FinalDecode { sample, argmax };

std::string to_string(FinalDecode decode);
FinalDecode final_decode_from_string(const std::string& name);

struct SampleRequest {
    int num_sequences = 1;
    int length = 0;
    int T = 128;
    GuidanceConfig guidance;
    std::uint64_t seed = 0;
    FinalDecode final_decode = FinalDecode::sample;
    int threads = 0;  // 0 = all cores
};

struct SampleDiagnostics {
    int steps = 0;
    // Token changes per position over the whole trajectory.
    std::vector<int> edits;
    // Changes per position after its first change.
    std::vector<int> revisions;

    int total_edits() const;
    int total_revisions() const;
};

struct GenerationResult {
    std::vector<Sequence> sequences;
    std::vector<SampleDiagnostics> diagnostics;
};

Sequence prior_draw(const PriorSpec& prior, int length, Rng& rng);

// Guided reverse distributions p(z_s | z_t), one row per position. s = 0
// gives the decoding distribution p(x | z_t).
std::vector<Categorical> reverse_rows(std::span<const Token> z_t, double t, double s, const Denoiser& denoiser,
                                      const GuidanceConfig& guidance, const Classifier* classifier = nullptr);

Sequence reverse_step(std::span<const Token> z_t, double t, double s, const Denoiser& denoiser,
                      const GuidanceConfig& guidance, Rng& rng, const Classifier* classifier = nullptr);

// Runs t over k/T for k = T..1, stepping to (k-1)/T; the last step decodes.
GenerationResult generate(const SampleRequest& request, const Denoiser& denoiser,
                          const Classifier* classifier = nullptr);

// Index of the largest entry; exact ties broken by the stream.
Token argmax_token(const Categorical& dist, Rng& rng);

void write_samples(const std::filesystem::path& path, std::span<const Sequence> sequences, const Vocabulary& vocab);
void write_sample_sidecar(const std::filesystem::path& path, const SampleRequest& request);

}  // namespace ddiff
