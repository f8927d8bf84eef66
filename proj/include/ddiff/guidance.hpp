// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Per-token guidance transforms applied to reverse distributions
// p_theta(z_s | z_t), one Categorical per position.

#pragma once

#include <span>
#include <vector>

#include "ddiff/core.hpp"
#include "ddiff/model.hpp"

namespace ddiff {

enum class GuidanceMode { none, cfg, cbg_exact, cbg_taylor };

std::string to_string(GuidanceMode mode);
GuidanceMode guidance_mode_from_string(const std::string& name);

struct GuidanceConfig {
    GuidanceMode mode = GuidanceMode::none;
    double gamma = 1.0;
    int target_class = kDropped;
    // Classifier guidance evaluates candidates at the destination time s by
    // default; set to use the source time t instead.
    bool classifier_at_source_time = false;

    bool needs_classifier() const { return mode == GuidanceMode::cbg_exact || mode == GuidanceMode::cbg_taylor; }
    // Checks gamma and the target class against K classes.
    void validate(int num_classes) const;
};

// normalize(p_cond^gamma * p_uncond^(1 - gamma)) per position, in log space.
std::vector<Categorical> cfg_combine(std::span<const Categorical> cond_rows, std::span<const Categorical> uncond_rows,
                                     double gamma);

// Tempers each position by p_phi(y | z with position l set to v)^gamma over
// all N candidates v. Exactly L * N classifier evaluations.
std::vector<Categorical> cbg_exact(const Classifier& classifier, std::span<const Token> z_t, double time,
                                   std::span<const Categorical> denoiser_rows, int y, double gamma);

// First-order approximation of cbg_exact from one forward and one backward
// classifier pass at z_t.
std::vector<Categorical> cbg_taylor(const Classifier& classifier, std::span<const Token> z_t, double time,
                                    std::span<const Categorical> denoiser_rows, int y, double gamma);

}  // namespace ddiff
