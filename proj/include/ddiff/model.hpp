// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Clean-data predictors x_theta(z_t, t[, y]) and noised-latent classifiers
// p_phi(y | z_t).
//
// Both share one trunk. For a batch of B sequences of length L over N
// tokens with relaxed one-hot input X ((B*L) x N):
//
//   h0 = X E_tok + P[pos] + bcast(mean_l(X) E_ctx + [a, 1 - a] W_time + C[y])
//   h  = tanh(h W_k + b_k)            for each hidden layer k
//
// The denoiser head maps h to N logits per position; the classifier head
// mean-pools h over positions and maps to K logits.

#pragma once

#include <atomic>
#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "ddiff/autodiff.hpp"
#include "ddiff/core.hpp"
#include "ddiff/forward.hpp"
#include "ddiff/rng.hpp"

namespace ddiff {

// Condition value selecting the "condition dropped" embedding row. Also the
// only legal condition for unconditional models.
inline constexpr int kDropped = -1;

enum class ModelKind { uniform, absorbing };

std::string to_string(ModelKind kind);
ModelKind model_kind_from_string(const std::string& name);

struct NamedTensor {
    std::string name;
    Matrix value;
};

// Ordered list of named tensors. Order is the declared field order used by
// checkpoints and optimizers.
class ParamSet {
public:
    void add(std::string name, Matrix value);
    Matrix& at(const std::string& name);
    const Matrix& at(const std::string& name) const;
    bool contains(const std::string& name) const;

    std::vector<NamedTensor>& tensors() { return tensors_; }
    const std::vector<NamedTensor>& tensors() const { return tensors_; }
    std::size_t count() const;  // total number of scalars
    bool all_finite() const;

    bool operator==(const ParamSet&) const;

private:
    std::vector<NamedTensor> tensors_;
};

struct TrunkShape {
    int vocab = 0;    // N
    int length = 0;   // L
    int hidden = 32;  // d
    int layers = 2;   // number of tanh layers, >= 1
    int classes = 0;  // K condition classes (denoiser) or output classes (classifier)

    bool operator==(const TrunkShape&) const = default;
};

struct DenoiserParams {
    TrunkShape shape;
    ParamSet tensors;

    static DenoiserParams zeros(const TrunkShape& shape);
    // Gaussian init; weights scaled by gain / sqrt(fan_in), biases and
    // embeddings by gain.
    static DenoiserParams random(const TrunkShape& shape, std::uint64_t seed, double gain = 1.0);
    bool conditional() const { return shape.classes > 0; }
    void validate() const;
};

struct ClassifierParams {
    TrunkShape shape;
    ParamSet tensors;

    static ClassifierParams zeros(const TrunkShape& shape);
    static ClassifierParams random(const TrunkShape& shape, std::uint64_t seed, double gain = 1.0);
    void validate() const;
};

// Expected tensor names and shapes, in declared order.
std::vector<std::pair<std::string, std::pair<int, int>>> denoiser_layout(const TrunkShape& shape);
std::vector<std::pair<std::string, std::pair<int, int>>> classifier_layout(const TrunkShape& shape);

// Variables bound on a tape for one forward pass.
struct TrunkGraph {
    std::vector<Tape::Var> params;  // same order as the ParamSet
    Tape::Var input;
    Tape::Var logits;
};

// Builds the denoiser graph for a batch. `alphas` has one entry per
// sequence, `conditions` one entry per sequence (kDropped allowed).
TrunkGraph build_denoiser_graph(Tape& tape, const DenoiserParams& params, const Matrix& onehot_input,
                                std::span<const double> alphas, std::span<const int> conditions,
                                bool params_require_grad, bool input_requires_grad = false);
TrunkGraph build_classifier_graph(Tape& tape, const ClassifierParams& params, const Matrix& onehot_input,
                                  std::span<const double> alphas, bool params_require_grad,
                                  bool input_requires_grad = false);

// (B*L) x N one-hot encoding of a batch of sequences.
Matrix one_hot_batch(std::span<const Sequence> batch, int vocab);
Matrix one_hot_rows(std::span<const Token> seq, int vocab);

// Raw per-position softmax of the denoiser logits (no parameterization).
std::vector<Categorical> denoise(const DenoiserParams& params, const NoiseSchedule& schedule,
                                 std::span<const Token> z, double t, int condition = kDropped);

// Copies the latent for t <= copy_floor_t, otherwise defers to denoise().
std::vector<Categorical> denoise_with_copy_floor(const DenoiserParams& params, const NoiseSchedule& schedule,
                                                 std::span<const Token> z, double t, int condition = kDropped,
                                                 double copy_floor_t = 1e-4);

std::vector<double> classify(const ClassifierParams& params, const NoiseSchedule& schedule,
                             std::span<const Token> z, double t);
// d log p_phi(y | X) / dX at X = one_hot(z), an L x N matrix.
Matrix classify_grad_wrt_onehot(const ClassifierParams& params, const NoiseSchedule& schedule,
                                std::span<const Token> z, double t, int y);

// Row-wise softmax of logits, optionally excluding one column (mass 0).
Matrix softmax_rows(const Matrix& logits, int excluded_column = -1);

// Denoiser interface used by losses and samplers --------------------------

class Denoiser {
public:
    virtual ~Denoiser() = default;

    virtual const PriorSpec& prior() const = 0;
    virtual const NoiseSchedule& schedule() const = 0;
    virtual int length() const = 0;
    virtual int num_classes() const { return 0; }
    int vocab_size() const { return prior().size(); }

    // x_theta rows (L x N) after the model kind's parameterization.
    virtual Matrix predict(std::span<const Token> z, double t, int condition = kDropped) const = 0;
};

// Trainable MLP denoiser. Uniform models copy their input below the copy
// floor; absorbing models put zero mass on the mask token and carry
// unmasked latents over unchanged.
class MlpDenoiser final : public Denoiser {
public:
    MlpDenoiser(ModelKind kind, DenoiserParams params, NoiseSchedule schedule = NoiseSchedule{},
                std::optional<Token> mask_index = std::nullopt, double copy_floor_t = 1e-4);

    const PriorSpec& prior() const override { return prior_; }
    const NoiseSchedule& schedule() const override { return schedule_; }
    int length() const override { return params_.shape.length; }
    int num_classes() const override { return params_.shape.classes; }
    Matrix predict(std::span<const Token> z, double t, int condition = kDropped) const override;

    ModelKind kind() const { return kind_; }
    const DenoiserParams& params() const { return params_; }
    DenoiserParams& mutable_params() { return params_; }
    double copy_floor() const { return copy_floor_t_; }

    // Maps per-row gradients with respect to the parameterized x_theta
    // rows to gradients with respect to the logits of a batch.
    Matrix logits_grad(const Matrix& logits, std::span<const Sequence> z_batch, std::span<const double> times,
                       const Matrix& dloss_dprobs) const;
    // Parameterized probabilities for a batch given its logits.
    Matrix probs_from_logits(const Matrix& logits, std::span<const Sequence> z_batch,
                             std::span<const double> times) const;

private:
    ModelKind kind_;
    DenoiserParams params_;
    NoiseSchedule schedule_;
    PriorSpec prior_;
    double copy_floor_t_;
};

// Optimal denoiser for a finite, weighted set of sequences:
// x_theta^l(z_t) = E[x^l | z_t^{-l}], the posterior mean of token l given all
// other latent positions. With this choice q(z_s | z_t, x_theta) is the true
// per-position reverse step for uniform and absorbing noise alike. (The full
// posterior mean E[x^l | z_t] is not optimal under uniform noise.) Unmasked
// absorbing positions are copied. Optional labels make it conditional.
class TabularDenoiser final : public Denoiser {
public:
    TabularDenoiser(PriorSpec prior, std::vector<Sequence> support, std::vector<double> weights,
                    std::vector<int> labels = {}, int num_classes = 0, NoiseSchedule schedule = NoiseSchedule{});

    const PriorSpec& prior() const override { return prior_; }
    const NoiseSchedule& schedule() const override { return schedule_; }
    int length() const override { return length_; }
    int num_classes() const override { return num_classes_; }
    Matrix predict(std::span<const Token> z, double t, int condition = kDropped) const override;

private:
    PriorSpec prior_;
    NoiseSchedule schedule_;
    std::vector<Sequence> support_;
    std::vector<double> weights_;
    std::vector<int> labels_;
    int num_classes_;
    int length_;
};

// Classifier interface ----------------------------------------------------

struct LogProbGrad {
    std::vector<double> log_probs;  // log p_phi(. | z), length K
    Matrix grad;                    // d log p_phi(y | X) / dX at X = one_hot(z), L x N
};

class Classifier {
public:
    virtual ~Classifier() = default;

    virtual int num_classes() const = 0;
    virtual int length() const = 0;
    virtual int vocab_size() const = 0;
    // log p_phi(. | z) at time t, length K.
    virtual std::vector<double> log_probs(std::span<const Token> z, double t) const = 0;
    // One forward and one backward pass.
    virtual LogProbGrad log_prob_and_grad(std::span<const Token> z, double t, int y) const = 0;
};

class MlpClassifier final : public Classifier {
public:
    MlpClassifier(ClassifierParams params, NoiseSchedule schedule = NoiseSchedule{});

    int num_classes() const override { return params_.shape.classes; }
    int length() const override { return params_.shape.length; }
    int vocab_size() const override { return params_.shape.vocab; }
    std::vector<double> log_probs(std::span<const Token> z, double t) const override;
    LogProbGrad log_prob_and_grad(std::span<const Token> z, double t, int y) const override;

    const ClassifierParams& params() const { return params_; }
    ClassifierParams& mutable_params() { return params_; }
    const NoiseSchedule& schedule() const { return schedule_; }

private:
    ClassifierParams params_;
    NoiseSchedule schedule_;
};

// Forwards to another classifier and counts forward and gradient calls.
class CountingClassifier final : public Classifier {
public:
    explicit CountingClassifier(const Classifier& inner) : inner_(inner) {}

    int num_classes() const override { return inner_.num_classes(); }
    int length() const override { return inner_.length(); }
    int vocab_size() const override { return inner_.vocab_size(); }
    std::vector<double> log_probs(std::span<const Token> z, double t) const override;
    LogProbGrad log_prob_and_grad(std::span<const Token> z, double t, int y) const override;

    long forward_calls() const { return forward_calls_.load(); }
    long backward_calls() const { return backward_calls_.load(); }
    void reset() {
        forward_calls_ = 0;
        backward_calls_ = 0;
    }

private:
    const Classifier& inner_;
    mutable std::atomic<long> forward_calls_{0};
    mutable std::atomic<long> backward_calls_{0};
};

}  // namespace ddiff
