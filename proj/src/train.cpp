// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/train.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

#include "ddiff/forward.hpp"
#include "ddiff/parallel.hpp"

namespace ddiff {

void Optimizer::step(ParamSet& params, std::span<const Matrix> grads) {
    auto& tensors = params.tensors();
    if (grads.size() != tensors.size()) {
        throw ContractError("optimizer: gradient count does not match parameters");
    }
    for (std::size_t k = 0; k < grads.size(); ++k) {
        if (!grads[k].same_shape(tensors[k].value)) {
            throw ContractError("optimizer: gradient shape mismatch for '" + tensors[k].name + "'");
        }
        for (double g : grads[k].data) {
            if (!std::isfinite(g)) {
                throw NumericError("optimizer: non-finite gradient in '" + tensors[k].name + "' at step " +
                                   std::to_string(steps_));
            }
        }
    }
    if (m_.empty()) {
        for (const auto& t : tensors) {
            m_.emplace_back(t.value.rows, t.value.cols);
            v_.emplace_back(t.value.rows, t.value.cols);
        }
    }
    ++steps_;
    const auto& c = config_;
    const double bc1 = 1.0 - std::pow(c.beta1, static_cast<double>(steps_));
    const double bc2 = 1.0 - std::pow(c.beta2, static_cast<double>(steps_));
    for (std::size_t k = 0; k < grads.size(); ++k) {
        auto& w = tensors[k].value.data;
        const auto& g = grads[k].data;
        auto& m = m_[k].data;
        auto& v = v_[k].data;
        for (std::size_t i = 0; i < w.size(); ++i) {
            if (c.kind == OptimizerKind::sgd) {
                m[i] = c.momentum * m[i] + g[i];
                w[i] -= c.lr * (c.momentum == 0.0 ? g[i] : m[i]);
            } else {
                m[i] = c.beta1 * m[i] + (1.0 - c.beta1) * g[i];
                v[i] = c.beta2 * v[i] + (1.0 - c.beta2) * g[i] * g[i];
                w[i] -= c.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + c.eps);
            }
        }
    }
}

int drop_condition(int label, double dropout, Rng& rng) { return rng.bernoulli(dropout) ? kDropped : label; }

namespace {

constexpr std::size_t kChunk = 16;

std::string describe_draw(const ExampleDraw& d) {
    std::ostringstream os;
    os << "example " << d.example << " t=" << d.t << " z=[";
    for (std::size_t l = 0; l < d.z.size(); ++l) {
        os << (l ? "," : "") << d.z[l];
    }
    os << "]";
    return os.str();
}

std::vector<Matrix> param_grads(const Tape& tape, const TrunkGraph& g) {
    std::vector<Matrix> out;
    out.reserve(g.params.size());
    for (auto p : g.params) {
        out.push_back(tape.grad(p));
    }
    return out;
}

void accumulate(std::vector<Matrix>& into, const std::vector<Matrix>& add, double weight) {
    if (into.empty()) {
        for (const auto& m : add) {
            into.emplace_back(m.rows, m.cols);
        }
    }
    for (std::size_t k = 0; k < add.size(); ++k) {
        for (std::size_t i = 0; i < add[k].size(); ++i) {
            into[k].data[i] += weight * add[k].data[i];
        }
    }
}

// Sums chunk gradients of one batch in chunk order.
template <class ChunkFn>
BatchGrad reduce_batch(std::span<const ExampleDraw> draws, int threads, ChunkFn&& chunk_fn) {
    const std::size_t chunks = (draws.size() + kChunk - 1) / kChunk;
    std::vector<BatchGrad> parts(chunks);
    parallel_for(chunks, threads, [&](std::size_t c) {
        const std::size_t begin = c * kChunk;
        const std::size_t end = std::min(draws.size(), begin + kChunk);
        parts[c] = chunk_fn(draws.subspan(begin, end - begin));
    });
    BatchGrad total;
    for (std::size_t c = 0; c < chunks; ++c) {
        const double weight = static_cast<double>(std::min(kChunk, draws.size() - c * kChunk)) /
                              static_cast<double>(draws.size());
        total.loss += weight * parts[c].loss;
        accumulate(total.grads, parts[c].grads, weight);
    }
    return total;
}

std::vector<std::size_t> epoch_order(std::size_t n, std::uint64_t seed, int epoch) {
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    Rng rng = Rng::substream(seed, {0x5eed, static_cast<std::uint64_t>(epoch)});
    for (std::size_t i = n; i > 1; --i) {
        std::swap(order[i - 1], order[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(i)))]);
    }
    return order;
}

}  // namespace

BatchGrad denoiser_batch_grad(const MlpDenoiser& model, const Dataset& data, std::span<const ExampleDraw> draws,
                              const LossSpec& loss) {
    if (draws.empty()) {
        throw ContractError("empty batch");
    }
    const auto& schedule = model.schedule();
    const auto& prior = model.prior();
    const int L = model.length();
    const int n = model.vocab_size();
    std::vector<Sequence> zs;
    std::vector<double> times;
    std::vector<double> alphas;
    std::vector<int> conds;
    for (const auto& d : draws) {
        zs.push_back(d.z);
        times.push_back(d.t);
        alphas.push_back(schedule.alpha(d.t));
        conds.push_back(d.condition);
    }
    Tape tape;
    const auto g =
        build_denoiser_graph(tape, model.params(), one_hot_batch(zs, n), alphas, conds, true, false);
    const Matrix& logits = tape.value(g.logits);
    const Matrix probs = model.probs_from_logits(logits, zs, times);
    Matrix dprobs(probs.rows, probs.cols);
    const double width = schedule.t_max() - schedule.t_min();
    const double inv_b = 1.0 / static_cast<double>(draws.size());
    BatchGrad out;
    for (std::size_t b = 0; b < draws.size(); ++b) {
        const auto& d = draws[b];
        const auto& x = data.sequences.at(d.example);
        double example_loss = 0.0;
        for (int l = 0; l < L; ++l) {
            const int r = static_cast<int>(b) * L + l;
            const Token xl = x[static_cast<std::size_t>(l)];
            const Token zl = d.z[static_cast<std::size_t>(l)];
            const auto row = probs.row(r);
            TokenLoss tl;
            double scale = width;
            switch (loss.objective) {
                case Objective::udlm_continuous:
                case Objective::sedd_form:
                    tl = udlm_integrand_grad_at(xl, zl, alphas[b], schedule.alpha_prime(d.t), row);
                    break;
                case Objective::mdlm_continuous:
                    tl = mdlm_token_grad_at(xl, zl, alphas[b], schedule.alpha_prime(d.t), row, prior.mask());
                    break;
                case Objective::nelbo_discrete:
                    tl = diffusion_kl_grad_at(xl, zl, alphas[b], schedule.alpha(grid_time(d.step - 1, loss.T)), row,
                                              prior);
                    scale = loss.T;
                    break;
            }
            example_loss += scale * tl.value;
            auto dr = dprobs.row(r);
            for (std::size_t j = 0; j < dr.size(); ++j) {
                dr[j] = scale * tl.grad[j] * inv_b;
            }
        }
        if (!std::isfinite(example_loss)) {
            throw NumericError("non-finite training loss at " + describe_draw(d));
        }
        out.loss += example_loss * inv_b;
    }
    tape.backward(g.logits, model.logits_grad(logits, zs, times, dprobs));
    out.grads = param_grads(tape, g);
    return out;
}

BatchGrad classifier_batch_grad(const MlpClassifier& model, const Dataset& data, std::span<const ExampleDraw> draws) {
    if (draws.empty()) {
        throw ContractError("empty batch");
    }
    const int K = model.num_classes();
    std::vector<Sequence> zs;
    std::vector<double> alphas;
    for (const auto& d : draws) {
        zs.push_back(d.z);
        alphas.push_back(model.schedule().alpha(d.t));
    }
    Tape tape;
    const auto g = build_classifier_graph(tape, model.params(), one_hot_batch(zs, model.vocab_size()), alphas, true);
    const Matrix& logits = tape.value(g.logits);
    const Matrix p = softmax_rows(logits);
    Matrix seed(logits.rows, K);
    const double inv_b = 1.0 / static_cast<double>(draws.size());
    BatchGrad out;
    for (std::size_t b = 0; b < draws.size(); ++b) {
        const int y = data.labels.at(draws[b].example);
        const int r = static_cast<int>(b);
        out.loss -= inv_b * (logits(r, y) - log_sum_exp(logits.row(r)));
        for (int k = 0; k < K; ++k) {
            seed(r, k) = inv_b * (p(r, k) - (k == y ? 1.0 : 0.0));
        }
    }
    if (!std::isfinite(out.loss)) {
        throw NumericError("non-finite classifier loss");
    }
    tape.backward(g.logits, seed);
    out.grads = param_grads(tape, g);
    return out;
}

TrainResult train_denoiser(const Dataset& data, ModelKind kind, const TrunkShape& shape,
                           const NoiseSchedule& schedule, const TrainConfig& config,
                           std::optional<DenoiserParams> init) {
    config.loss.validate();
    data.validate(shape.vocab);
    if (data.length() != shape.length) {
        throw ContractError("dataset length does not match the model shape");
    }
    if (config.epochs < 0 || config.batch_size < 1) {
        throw ContractError("training needs epochs >= 0 and batch_size >= 1");
    }
    if (!(config.condition_dropout >= 0.0 && config.condition_dropout <= 1.0)) {
        throw ContractError("condition dropout must lie in [0, 1]");
    }
    const bool conditional = shape.classes > 0;
    if (conditional && (!data.labeled() || data.num_classes != shape.classes)) {
        throw ContractError("conditional model needs labels with matching class count");
    }
    const bool absorbing = kind == ModelKind::absorbing;
    if (absorbing != (config.loss.objective == Objective::mdlm_continuous) &&
        config.loss.objective != Objective::nelbo_discrete) {
        throw ContractError("objective '" + to_string(config.loss.objective) + "' does not fit a " + to_string(kind) +
                            " model");
    }
    // Absorbing models reserve the last token as the mask.
    const std::optional<Token> mask = absorbing ? std::optional<Token>(shape.vocab - 1) : std::nullopt;
    if (absorbing) {
        for (const auto& s : data.sequences) {
            if (std::find(s.begin(), s.end(), *mask) != s.end()) {
                throw ContractError("training data contains the mask token");
            }
        }
    }
    DenoiserParams params = init ? std::move(*init) : DenoiserParams::random(shape, config.seed);
    if (!(params.shape == shape)) {
        throw ContractError("initial parameters do not match the model shape");
    }
    MlpDenoiser model(kind, std::move(params), schedule, mask);
    const PriorSpec& prior = model.prior();
    Optimizer opt(config.optimizer);
    const int m = config.loss.mc_samples_per_example;
    TrainResult result;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = epoch_order(data.size(), config.seed, epoch);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<ExampleDraw> draws;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                for (int rep = 0; rep < m; ++rep) {
                    Rng rng = Rng::substream(config.seed, {static_cast<std::uint64_t>(epoch), idx,
                                                           static_cast<std::uint64_t>(rep)});
                    ExampleDraw d;
                    d.example = idx;
                    if (config.loss.objective == Objective::nelbo_discrete) {
                        d.step = 1 + rng.uniform_int(config.loss.T);
                        d.t = grid_time(d.step, config.loss.T);
                    } else {
                        d.t = rng.uniform(schedule.t_min(), schedule.t_max());
                    }
                    d.z = sample_latent_sequence(schedule, data.sequences[idx], d.t, prior, rng);
                    d.condition = conditional ? drop_condition(data.labels[idx], config.condition_dropout, rng)
                                              : kDropped;
                    draws.push_back(std::move(d));
                }
            }
            const BatchGrad bg = reduce_batch(draws, config.threads, [&](std::span<const ExampleDraw> part) {
                return denoiser_batch_grad(model, data, part, config.loss);
            });
            opt.step(model.mutable_params().tensors, bg.grads);
            epoch_loss += bg.loss * static_cast<double>(end - start);
        }
        epoch_loss /= static_cast<double>(data.size());
        result.loss_trace.push_back(epoch_loss);
        if (config.on_epoch) {
            config.on_epoch(epoch, epoch_loss);
        }
    }
    result.params = model.params();
    return result;
}

ClassifierTrainResult train_classifier(const Dataset& data, const PriorSpec& prior, const TrunkShape& shape,
                                       const NoiseSchedule& schedule, const TrainConfig& config,
                                       std::optional<ClassifierParams> init) {
    data.validate(shape.vocab);
    if (!data.labeled() || data.num_classes != shape.classes) {
        throw ContractError("classifier training needs labels with matching class count");
    }
    if (data.length() != shape.length || prior.size() != shape.vocab) {
        throw ContractError("dataset or prior does not match the classifier shape");
    }
    if (config.epochs < 0 || config.batch_size < 1) {
        throw ContractError("training needs epochs >= 0 and batch_size >= 1");
    }
    ClassifierParams params = init ? std::move(*init) : ClassifierParams::random(shape, config.seed);
    MlpClassifier model(std::move(params), schedule);
    Optimizer opt(config.optimizer);
    ClassifierTrainResult result;
    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const auto order = epoch_order(data.size(), config.seed, epoch);
        double epoch_loss = 0.0;
        for (std::size_t start = 0; start < order.size(); start += static_cast<std::size_t>(config.batch_size)) {
            const std::size_t end = std::min(order.size(), start + static_cast<std::size_t>(config.batch_size));
            std::vector<ExampleDraw> draws;
            for (std::size_t k = start; k < end; ++k) {
                const std::size_t idx = order[k];
                Rng rng = Rng::substream(config.seed, {static_cast<std::uint64_t>(epoch), idx, 0xc1a5});
                ExampleDraw d;
                d.example = idx;
                d.t = rng.uniform(schedule.t_min(), schedule.t_max());
                d.z = sample_latent_sequence(schedule, data.sequences[idx], d.t, prior, rng);
                draws.push_back(std::move(d));
            }
            const BatchGrad bg = reduce_batch(draws, config.threads, [&](std::span<const ExampleDraw> part) {
                return classifier_batch_grad(model, data, part);
            });
            opt.step(model.mutable_params().tensors, bg.grads);
            epoch_loss += bg.loss * static_cast<double>(end - start);
        }
        epoch_loss /= static_cast<double>(data.size());
        result.loss_trace.push_back(epoch_loss);
        if (config.on_epoch) {
            config.on_epoch(epoch, epoch_loss);
        }
    }
    result.params = model.params();
    return result;
}

}  // namespace ddiff
