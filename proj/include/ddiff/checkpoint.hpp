// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Versioned JSON checkpoints:
//
//   {format_version: 1, model_kind, vocab, schedule, shapes, copy_floor,
//    params: [{name, rows, cols, values}, ...]}
//
// Keys and tensors are written in a fixed order, and doubles use shortest
// round-trip formatting, so identical models serialize to identical bytes.
// Classifiers are stored as separate documents with model_kind "classifier".

#pragma once

#include <filesystem>
#include <string>

#include "ddiff/core.hpp"
#include "ddiff/model.hpp"

namespace ddiff {

inline constexpr int kCheckpointVersion = 1;

struct DenoiserCheckpoint {
    ModelKind kind = ModelKind::uniform;
    Vocabulary vocab{{"a", "b"}};
    NoiseSchedule schedule;
    DenoiserParams params;
    double copy_floor = 1e-4;

    MlpDenoiser make_denoiser() const;
};

struct ClassifierCheckpoint {
    Vocabulary vocab{{"a", "b"}};
    NoiseSchedule schedule;
    ClassifierParams params;

    MlpClassifier make_classifier() const;
};

std::string serialize(const DenoiserCheckpoint& ckpt);
std::string serialize(const ClassifierCheckpoint& ckpt);
DenoiserCheckpoint parse_denoiser_checkpoint(const std::string& text);
ClassifierCheckpoint parse_classifier_checkpoint(const std::string& text);

void save_checkpoint(const std::filesystem::path& path, const DenoiserCheckpoint& ckpt);
void save_checkpoint(const std::filesystem::path& path, const ClassifierCheckpoint& ckpt);
DenoiserCheckpoint load_denoiser_checkpoint(const std::filesystem::path& path);
ClassifierCheckpoint load_classifier_checkpoint(const std::filesystem::path& path);

}  // namespace ddiff
