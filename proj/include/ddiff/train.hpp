// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Optimizers and training loops for the denoiser and the noised-latent
// classifier.
//
// Each example draws its own (t, z_t) and condition-dropout decision from a
// substream keyed by (seed, epoch, example index). Batch gradients are summed
// over fixed-size chunks in chunk order, so results do not depend on the
// thread count.

#pragma once

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "ddiff/data.hpp"
#include "ddiff/loss.hpp"
#include "ddiff/model.hpp"

namespace ddiff {

enum class OptimizerKind { sgd, adam };

struct OptimizerConfig {
    OptimizerKind kind = OptimizerKind::adam;
    double lr = 1e-3;
    double momentum = 0.0;  // sgd only
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Optimizer {
public:
    explicit Optimizer(OptimizerConfig config) : config_(config) {}

    // grads are aligned with params.tensors(). Throws NumericError on
    // non-finite gradients, leaving params untouched.
    void step(ParamSet& params, std::span<const Matrix> grads);
    long steps() const { return steps_; }
    const OptimizerConfig& config() const { return config_; }

private:
    OptimizerConfig config_;
    long steps_ = 0;
    std::vector<Matrix> m_;
    std::vector<Matrix> v_;
};

struct TrainConfig {
    LossSpec loss;
    int epochs = 10;
    int batch_size = 64;
    OptimizerConfig optimizer{};
    double condition_dropout = 0.10;
    std::uint64_t seed = 0;
    int threads = 0;
    std::function<void(int epoch, double mean_loss)> on_epoch;
};

struct TrainResult {
    DenoiserParams params;
    std::vector<double> loss_trace;  // mean loss per epoch
};

// Condition fed to the network for one example: kDropped with probability
// `dropout`, otherwise the label.
int drop_condition(int label, double dropout, Rng& rng);

// Trains from `init` (random init from the seed when absent).
TrainResult train_denoiser(const Dataset& data, ModelKind kind, const TrunkShape& shape,
                           const NoiseSchedule& schedule, const TrainConfig& config,
                           std::optional<DenoiserParams> init = std::nullopt);

struct ClassifierTrainResult {
    ClassifierParams params;
    std::vector<double> loss_trace;
};

// Cross-entropy on latents z_t ~ q(. | x) under `prior`, t uniform on the
// clamped interval.
ClassifierTrainResult train_classifier(const Dataset& data, const PriorSpec& prior, const TrunkShape& shape,
                                       const NoiseSchedule& schedule, const TrainConfig& config,
                                       std::optional<ClassifierParams> init = std::nullopt);

// Gradient of the mean per-example loss of one batch, exposed for gradient
// checks. `draws` fixes each example's time and latent.
struct ExampleDraw {
    std::size_t example = 0;
    double t = 0.0;
    int step = 0;  // discrete objective step index
    Sequence z;
    int condition = kDropped;
};

struct BatchGrad {
    double loss = 0.0;
    std::vector<Matrix> grads;
};

BatchGrad denoiser_batch_grad(const MlpDenoiser& model, const Dataset& data, std::span<const ExampleDraw> draws,
                              const LossSpec& loss);
BatchGrad classifier_batch_grad(const MlpClassifier& model, const Dataset& data, std::span<const ExampleDraw> draws);

}  // namespace ddiff
