// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/model.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace ddiff {

std::string to_string(ModelKind kind) {
    switch (kind) {
        case ModelKind::uniform:
            return "uniform";
        case ModelKind::absorbing:
            return "absorbing";
    }
    return "unknown";
}

ModelKind model_kind_from_string(const std::string& name) {
    if (name == "uniform") {
        return ModelKind::uniform;
    }
    if (name == "absorbing") {
        return ModelKind::absorbing;
    }
    throw FormatError("unknown model kind '" + name + "'");
}

// ParamSet -----------------------------------------------------------------

void ParamSet::add(std::string name, Matrix value) {
    if (contains(name)) {
        throw ContractError("duplicate parameter '" + name + "'");
    }
    tensors_.push_back({std::move(name), std::move(value)});
}

Matrix& ParamSet::at(const std::string& name) {
    for (auto& t : tensors_) {
        if (t.name == name) {
            return t.value;
        }
    }
    throw ContractError("no parameter named '" + name + "'");
}

const Matrix& ParamSet::at(const std::string& name) const { return const_cast<ParamSet*>(this)->at(name); }

bool ParamSet::contains(const std::string& name) const {
    return std::any_of(tensors_.begin(), tensors_.end(), [&](const NamedTensor& t) { return t.name == name; });
}

std::size_t ParamSet::count() const {
    std::size_t n = 0;
    for (const auto& t : tensors_) {
        n += t.value.size();
    }
    return n;
}

bool ParamSet::all_finite() const {
    for (const auto& t : tensors_) {
        for (double v : t.value.data) {
            if (!std::isfinite(v)) {
                return false;
            }
        }
    }
    return true;
}

bool ParamSet::operator==(const ParamSet& o) const {
    if (tensors_.size() != o.tensors_.size()) {
        return false;
    }
    for (std::size_t i = 0; i < tensors_.size(); ++i) {
        if (tensors_[i].name != o.tensors_[i].name || !(tensors_[i].value == o.tensors_[i].value)) {
            return false;
        }
    }
    return true;
}

// Layouts ------------------------------------------------------------------

namespace {

using Layout = std::vector<std::pair<std::string, std::pair<int, int>>>;

void check_shape(const TrunkShape& s) {
    if (s.vocab < 2 || s.length < 1 || s.hidden < 1 || s.layers < 1 || s.classes < 0) {
        throw ContractError("invalid trunk shape");
    }
}

Layout trunk_layout(const TrunkShape& s, bool with_condition, int outputs) {
    check_shape(s);
    Layout out;
    out.push_back({"token_embedding", {s.vocab, s.hidden}});
    out.push_back({"position_encoding", {s.length, s.hidden}});
    out.push_back({"context_projection", {s.vocab, s.hidden}});
    out.push_back({"time_projection", {2, s.hidden}});
    if (with_condition) {
        out.push_back({"condition_embedding", {s.classes + 1, s.hidden}});
    }
    for (int k = 0; k < s.layers; ++k) {
        out.push_back({"hidden_" + std::to_string(k) + "_weight", {s.hidden, s.hidden}});
        out.push_back({"hidden_" + std::to_string(k) + "_bias", {1, s.hidden}});
    }
    out.push_back({"output_weight", {s.hidden, outputs}});
    out.push_back({"output_bias", {1, outputs}});
    return out;
}

ParamSet zero_params(const Layout& layout) {
    ParamSet p;
    for (const auto& [name, dims] : layout) {
        p.add(name, Matrix(dims.first, dims.second));
    }
    return p;
}

ParamSet random_params(const Layout& layout, std::uint64_t seed, double gain) {
    Rng rng(seed);
    ParamSet p;
    for (const auto& [name, dims] : layout) {
        Matrix m(dims.first, dims.second);
        double scale = 0.5 * gain;
        if (name.ends_with("_weight")) {
            scale = gain / std::sqrt(static_cast<double>(dims.first));
        } else if (name.ends_with("_bias")) {
            scale = 0.1 * gain;
        }
        for (double& v : m.data) {
            v = scale * rng.normal();
        }
        p.add(name, std::move(m));
    }
    return p;
}

void validate_against(const ParamSet& p, const Layout& layout) {
    const auto& ts = p.tensors();
    if (ts.size() != layout.size()) {
        throw FormatError("parameter count does not match layout");
    }
    for (std::size_t i = 0; i < ts.size(); ++i) {
        if (ts[i].name != layout[i].first || ts[i].value.rows != layout[i].second.first ||
            ts[i].value.cols != layout[i].second.second) {
            throw FormatError("parameter '" + ts[i].name + "' does not match layout");
        }
    }
    if (!p.all_finite()) {
        throw NumericError("non-finite parameter values");
    }
}

}  // namespace

Layout denoiser_layout(const TrunkShape& shape) { return trunk_layout(shape, shape.classes > 0, shape.vocab); }

Layout classifier_layout(const TrunkShape& shape) {
    if (shape.classes < 1) {
        throw ContractError("classifier needs at least one class");
    }
    return trunk_layout(shape, false, shape.classes);
}

DenoiserParams DenoiserParams::zeros(const TrunkShape& shape) { return {shape, zero_params(denoiser_layout(shape))}; }

DenoiserParams DenoiserParams::random(const TrunkShape& shape, std::uint64_t seed, double gain) {
    return {shape, random_params(denoiser_layout(shape), seed, gain)};
}

void DenoiserParams::validate() const { validate_against(tensors, denoiser_layout(shape)); }

ClassifierParams ClassifierParams::zeros(const TrunkShape& shape) {
    return {shape, zero_params(classifier_layout(shape))};
}

ClassifierParams ClassifierParams::random(const TrunkShape& shape, std::uint64_t seed, double gain) {
    return {shape, random_params(classifier_layout(shape), seed, gain)};
}

void ClassifierParams::validate() const { validate_against(tensors, classifier_layout(shape)); }

// Graph construction -------------------------------------------------------

Matrix one_hot_rows(std::span<const Token> seq, int vocab) {
    check_sequence(seq, vocab);
    Matrix m(static_cast<int>(seq.size()), vocab);
    for (std::size_t l = 0; l < seq.size(); ++l) {
        m(static_cast<int>(l), seq[l]) = 1.0;
    }
    return m;
}

Matrix one_hot_batch(std::span<const Sequence> batch, int vocab) {
    if (batch.empty()) {
        throw ContractError("empty batch");
    }
    const auto len = batch.front().size();
    Matrix m(static_cast<int>(batch.size() * len), vocab);
    for (std::size_t b = 0; b < batch.size(); ++b) {
        if (batch[b].size() != len) {
            throw ContractError("batch sequences differ in length");
        }
        check_sequence(batch[b], vocab);
        for (std::size_t l = 0; l < len; ++l) {
            m(static_cast<int>(b * len + l), batch[b][l]) = 1.0;
        }
    }
    return m;
}

namespace {

TrunkGraph build_trunk(Tape& tape, const ParamSet& params, const TrunkShape& shape, const Matrix& input,
                       std::span<const double> alphas, std::span<const int> conditions, bool with_condition,
                       bool pool, bool params_require_grad, bool input_requires_grad) {
    const int L = shape.length;
    if (input.cols != shape.vocab || input.rows % L != 0 || input.rows == 0) {
        throw ContractError("input matrix does not match model shape");
    }
    const int batch = input.rows / L;
    if (static_cast<int>(alphas.size()) != batch) {
        throw ContractError("one time value per sequence required");
    }

    TrunkGraph g;
    for (const auto& t : params.tensors()) {
        g.params.push_back(tape.leaf(t.value, params_require_grad));
    }
    std::size_t next = 0;
    auto param = [&]() { return g.params.at(next++); };
    const auto tok_emb = param();
    const auto pos_enc = param();
    const auto ctx_proj = param();
    const auto time_proj = param();

    g.input = tape.leaf(input, input_requires_grad);
    auto tok = tape.matmul(g.input, tok_emb);

    std::vector<int> pos_index(static_cast<std::size_t>(input.rows));
    for (int r = 0; r < input.rows; ++r) {
        pos_index[static_cast<std::size_t>(r)] = r % L;
    }
    auto pos = tape.gather_rows(pos_enc, std::move(pos_index));

    auto ctx = tape.matmul(tape.group_mean(g.input, L), ctx_proj);
    Matrix time_features(batch, 2);
    for (int b = 0; b < batch; ++b) {
        time_features(b, 0) = alphas[static_cast<std::size_t>(b)];
        time_features(b, 1) = 1.0 - alphas[static_cast<std::size_t>(b)];
    }
    auto per_sequence = tape.add(ctx, tape.matmul(tape.leaf(std::move(time_features)), time_proj));

    if (with_condition) {
        const auto cond_emb = param();
        if (static_cast<int>(conditions.size()) != batch) {
            throw ContractError("one condition per sequence required");
        }
        std::vector<int> rows(conditions.size());
        for (std::size_t b = 0; b < conditions.size(); ++b) {
            const int c = conditions[b];
            if (c != kDropped && (c < 0 || c >= shape.classes)) {
                throw ContractError("condition index out of range");
            }
            rows[b] = (c == kDropped) ? shape.classes : c;
        }
        per_sequence = tape.add(per_sequence, tape.gather_rows(cond_emb, std::move(rows)));
    } else {
        for (int c : conditions) {
            if (c != kDropped) {
                throw ContractError("unconditional model given a condition");
            }
        }
    }

    auto h = tape.add(tape.add(tok, pos), tape.group_broadcast(per_sequence, L));
    for (int k = 0; k < shape.layers; ++k) {
        const auto w = param();
        const auto b = param();
        h = tape.tanh(tape.add_row(tape.matmul(h, w), b));
    }
    if (pool) {
        h = tape.group_mean(h, L);
    }
    const auto out_w = param();
    const auto out_b = param();
    g.logits = tape.add_row(tape.matmul(h, out_w), out_b);
    return g;
}

}  // namespace

TrunkGraph build_denoiser_graph(Tape& tape, const DenoiserParams& params, const Matrix& onehot_input,
                                std::span<const double> alphas, std::span<const int> conditions,
                                bool params_require_grad, bool input_requires_grad) {
    return build_trunk(tape, params.tensors, params.shape, onehot_input, alphas, conditions, params.conditional(),
                       false, params_require_grad, input_requires_grad);
}

TrunkGraph build_classifier_graph(Tape& tape, const ClassifierParams& params, const Matrix& onehot_input,
                                  std::span<const double> alphas, bool params_require_grad,
                                  bool input_requires_grad) {
    return build_trunk(tape, params.tensors, params.shape, onehot_input, alphas, {}, false, true,
                       params_require_grad, input_requires_grad);
}

Matrix softmax_rows(const Matrix& logits, int excluded_column) {
    Matrix out(logits.rows, logits.cols);
    for (int r = 0; r < logits.rows; ++r) {
        auto in = logits.row(r);
        auto o = out.row(r);
        double m = -std::numeric_limits<double>::infinity();
        for (int j = 0; j < logits.cols; ++j) {
            if (j != excluded_column) {
                m = std::max(m, in[static_cast<std::size_t>(j)]);
            }
        }
        double sum = 0.0;
        for (int j = 0; j < logits.cols; ++j) {
            const auto jj = static_cast<std::size_t>(j);
            o[jj] = (j == excluded_column) ? 0.0 : std::exp(in[jj] - m);
            sum += o[jj];
        }
        for (double& v : o) {
            v /= sum;
        }
    }
    return out;
}

namespace {

Matrix raw_logits(const DenoiserParams& params, const NoiseSchedule& schedule, std::span<const Token> z, double t,
                  int condition) {
    if (static_cast<int>(z.size()) != params.shape.length) {
        throw ContractError("sequence length does not match the model");
    }
    Tape tape;
    const double alpha = schedule.alpha(t);
    const int cond = condition;
    auto g = build_denoiser_graph(tape, params, one_hot_rows(z, params.shape.vocab), std::span(&alpha, 1),
                                  std::span(&cond, 1), false);
    return tape.value(g.logits);
}

std::vector<Categorical> rows_to_categoricals(const Matrix& m) {
    std::vector<Categorical> rows;
    rows.reserve(static_cast<std::size_t>(m.rows));
    for (int r = 0; r < m.rows; ++r) {
        auto row = m.row(r);
        rows.push_back(Categorical::normalized({row.begin(), row.end()}));
    }
    return rows;
}

}  // namespace

std::vector<Categorical> denoise(const DenoiserParams& params, const NoiseSchedule& schedule,
                                 std::span<const Token> z, double t, int condition) {
    return rows_to_categoricals(softmax_rows(raw_logits(params, schedule, z, t, condition)));
}

std::vector<Categorical> denoise_with_copy_floor(const DenoiserParams& params, const NoiseSchedule& schedule,
                                                 std::span<const Token> z, double t, int condition,
                                                 double copy_floor_t) {
    if (t <= copy_floor_t) {
        check_sequence(z, params.shape.vocab);
        std::vector<Categorical> rows;
        for (Token tok : z) {
            rows.push_back(Categorical::one_hot(params.shape.vocab, tok));
        }
        return rows;
    }
    return denoise(params, schedule, z, t, condition);
}

// MlpDenoiser ---------------------------------------------------------------

namespace {

PriorSpec prior_for(ModelKind kind, int vocab, std::optional<Token> mask) {
    if (kind == ModelKind::absorbing) {
        if (!mask) {
            throw ContractError("absorbing model needs a mask token");
        }
        return PriorSpec::absorbing(vocab, *mask);
    }
    return PriorSpec::uniform(vocab);
}

}  // namespace

MlpDenoiser::MlpDenoiser(ModelKind kind, DenoiserParams params, NoiseSchedule schedule,
                         std::optional<Token> mask_index, double copy_floor_t)
    : kind_(kind),
      params_(std::move(params)),
      schedule_(schedule),
      prior_(prior_for(kind, params_.shape.vocab, mask_index)),
      copy_floor_t_(copy_floor_t) {
    params_.validate();
}

Matrix MlpDenoiser::probs_from_logits(const Matrix& logits, std::span<const Sequence> z_batch,
                                      std::span<const double> times) const {
    const int L = params_.shape.length;
    const int excluded = (kind_ == ModelKind::absorbing) ? prior_.mask() : -1;
    Matrix probs = softmax_rows(logits, excluded);
    for (std::size_t b = 0; b < z_batch.size(); ++b) {
        for (int l = 0; l < L; ++l) {
            const Token tok = z_batch[b][static_cast<std::size_t>(l)];
            const bool copy = (kind_ == ModelKind::uniform) ? times[b] <= copy_floor_t_ : tok != prior_.mask();
            if (copy) {
                auto row = probs.row(static_cast<int>(b) * L + l);
                std::fill(row.begin(), row.end(), 0.0);
                row[static_cast<std::size_t>(tok)] = 1.0;
            }
        }
    }
    return probs;
}

Matrix MlpDenoiser::logits_grad(const Matrix& logits, std::span<const Sequence> z_batch,
                                std::span<const double> times, const Matrix& dloss_dprobs) const {
    const int L = params_.shape.length;
    const int excluded = (kind_ == ModelKind::absorbing) ? prior_.mask() : -1;
    const Matrix soft = softmax_rows(logits, excluded);
    Matrix out(logits.rows, logits.cols);
    for (std::size_t b = 0; b < z_batch.size(); ++b) {
        for (int l = 0; l < L; ++l) {
            const Token tok = z_batch[b][static_cast<std::size_t>(l)];
            const bool copy = (kind_ == ModelKind::uniform) ? times[b] <= copy_floor_t_ : tok != prior_.mask();
            if (copy) {
                continue;
            }
            const int r = static_cast<int>(b) * L + l;
            auto p = soft.row(r);
            auto g = dloss_dprobs.row(r);
            double dot = 0.0;
            for (std::size_t j = 0; j < p.size(); ++j) {
                dot += p[j] * g[j];
            }
            auto o = out.row(r);
            for (std::size_t j = 0; j < p.size(); ++j) {
                o[j] = p[j] * (g[j] - dot);
            }
        }
    }
    return out;
}

Matrix MlpDenoiser::predict(std::span<const Token> z, double t, int condition) const {
    const Sequence seq(z.begin(), z.end());
    const Matrix logits = raw_logits(params_, schedule_, seq, t, condition);
    return probs_from_logits(logits, std::span(&seq, 1), std::span(&t, 1));
}

// TabularDenoiser -----------------------------------------------------------

TabularDenoiser::TabularDenoiser(PriorSpec prior, std::vector<Sequence> support, std::vector<double> weights,
                                 std::vector<int> labels, int num_classes, NoiseSchedule schedule)
    : prior_(std::move(prior)),
      schedule_(schedule),
      support_(std::move(support)),
      weights_(std::move(weights)),
      labels_(std::move(labels)),
      num_classes_(num_classes),
      length_(0) {
    if (support_.empty() || support_.size() != weights_.size()) {
        throw ContractError("tabular denoiser needs one weight per support sequence");
    }
    if (!labels_.empty() && labels_.size() != support_.size()) {
        throw ContractError("tabular denoiser labels misaligned");
    }
    length_ = static_cast<int>(support_.front().size());
    for (const auto& s : support_) {
        if (static_cast<int>(s.size()) != length_) {
            throw ContractError("tabular support sequences differ in length");
        }
        check_sequence(s, prior_.size());
    }
}

Matrix TabularDenoiser::predict(std::span<const Token> z, double t, int condition) const {
    const int n = prior_.size();
    if (static_cast<int>(z.size()) != length_) {
        throw ContractError("sequence length does not match the model");
    }
    if (condition != kDropped && (labels_.empty() || condition < 0 || condition >= num_classes_)) {
        throw ContractError("condition index out of range");
    }
    const double a = schedule_.alpha(t);
    const auto& pi = prior_.pi().probs();
    const auto likelihood = [&](Token x, Token zl) {
        return (zl == x ? a : 0.0) + (1.0 - a) * pi[static_cast<std::size_t>(zl)];
    };
    Matrix out(length_, n);
    for (int l = 0; l < length_; ++l) {
        const Token zl = z[static_cast<std::size_t>(l)];
        if (prior_.kind() == PriorKind::absorbing && zl != prior_.mask()) {
            out(l, zl) = 1.0;
            continue;
        }
        // Evidence from every other position. Position l's own latent is
        // left out: the reverse step q(z_s | z_t, x_theta) already conditions
        // on it, and leaving it in double-counts it under uniform noise.
        double total = 0.0;
        double marginal_total = 0.0;
        std::vector<double> marginal(static_cast<std::size_t>(n), 0.0);
        for (std::size_t k = 0; k < support_.size(); ++k) {
            if (condition != kDropped && labels_[k] != condition) {
                continue;
            }
            const Token x = support_[k][static_cast<std::size_t>(l)];
            double w = weights_[k];
            marginal[static_cast<std::size_t>(x)] += w;
            marginal_total += w;
            for (int m = 0; m < length_ && w > 0.0; ++m) {
                if (m != l) {
                    w *= likelihood(support_[k][static_cast<std::size_t>(m)], z[static_cast<std::size_t>(m)]);
                }
            }
            out(l, x) += w;
            total += w;
        }
        if (!(total > 0.0)) {
            // No support sequence explains the other positions: fall back to
            // the data marginal of position l.
            if (!(marginal_total > 0.0)) {
                throw DomainError("tabular denoiser: no support sequence for this condition");
            }
            for (int j = 0; j < n; ++j) {
                out(l, j) = marginal[static_cast<std::size_t>(j)];
            }
            total = marginal_total;
        }
        for (int j = 0; j < n; ++j) {
            out(l, j) /= total;
        }
    }
    return out;
}

// Classifiers ---------------------------------------------------------------

MlpClassifier::MlpClassifier(ClassifierParams params, NoiseSchedule schedule)
    : params_(std::move(params)), schedule_(schedule) {
    params_.validate();
}

namespace {

std::vector<double> log_softmax(std::span<const double> logits) {
    const double lse = log_sum_exp(logits);
    std::vector<double> out(logits.begin(), logits.end());
    for (double& v : out) {
        v -= lse;
    }
    return out;
}

}  // namespace

std::vector<double> MlpClassifier::log_probs(std::span<const Token> z, double t) const {
    if (static_cast<int>(z.size()) != params_.shape.length) {
        throw ContractError("sequence length does not match the classifier");
    }
    Tape tape;
    const double alpha = schedule_.alpha(t);
    auto g = build_classifier_graph(tape, params_, one_hot_rows(z, params_.shape.vocab), std::span(&alpha, 1), false);
    return log_softmax(tape.value(g.logits).row(0));
}

LogProbGrad MlpClassifier::log_prob_and_grad(std::span<const Token> z, double t, int y) const {
    if (static_cast<int>(z.size()) != params_.shape.length) {
        throw ContractError("sequence length does not match the classifier");
    }
    if (y < 0 || y >= params_.shape.classes) {
        throw ContractError("class index out of range");
    }
    Tape tape;
    const double alpha = schedule_.alpha(t);
    auto g = build_classifier_graph(tape, params_, one_hot_rows(z, params_.shape.vocab), std::span(&alpha, 1),
                                    false, true);
    LogProbGrad out;
    out.log_probs = log_softmax(tape.value(g.logits).row(0));
    Matrix seed(1, params_.shape.classes);
    for (int k = 0; k < params_.shape.classes; ++k) {
        seed(0, k) = (k == y ? 1.0 : 0.0) - std::exp(out.log_probs[static_cast<std::size_t>(k)]);
    }
    tape.backward(g.logits, seed);
    out.grad = tape.grad(g.input);
    return out;
}

std::vector<double> classify(const ClassifierParams& params, const NoiseSchedule& schedule, std::span<const Token> z,
                             double t) {
    return MlpClassifier(params, schedule).log_probs(z, t);
}

Matrix classify_grad_wrt_onehot(const ClassifierParams& params, const NoiseSchedule& schedule,
                                std::span<const Token> z, double t, int y) {
    return MlpClassifier(params, schedule).log_prob_and_grad(z, t, y).grad;
}

std::vector<double> CountingClassifier::log_probs(std::span<const Token> z, double t) const {
    ++forward_calls_;
    return inner_.log_probs(z, t);
}

LogProbGrad CountingClassifier::log_prob_and_grad(std::span<const Token> z, double t, int y) const {
    ++forward_calls_;
    ++backward_calls_;
    return inner_.log_prob_and_grad(z, t, y);
}

}  // namespace ddiff
