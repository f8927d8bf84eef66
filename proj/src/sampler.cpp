// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/sampler.hpp"

#include <fstream>
#include <numeric>

#include <json.hpp>

#include "ddiff/data.hpp"
#include "ddiff/forward.hpp"
#include "ddiff/parallel.hpp"

namespace ddiff {

std::string to_string(FinalDecode decode) { return decode == FinalDecode::argmax ? "argmax" : "sample"; }

FinalDecode final_decode_from_string(const std::string& name) {
    if (name == "sample") {
        return FinalDecode::sample;
    }
    if (name == "argmax") {
        return FinalDecode::argmax;
    }
    throw ContractError("unknown final decode '" + name + "'");
}

int SampleDiagnostics::total_edits() const { return std::accumulate(edits.begin(), edits.end(), 0); }

int SampleDiagnostics::total_revisions() const { return std::accumulate(revisions.begin(), revisions.end(), 0); }

Sequence prior_draw(const PriorSpec& prior, int length, Rng& rng) {
    if (length < 1) {
        throw ContractError("length must be positive");
    }
    Sequence z(static_cast<std::size_t>(length));
    for (auto& tok : z) {
        switch (prior.kind()) {
            case PriorKind::absorbing:
                tok = prior.mask();
                break;
            case PriorKind::uniform:
                tok = rng.uniform_int(prior.size());
                break;
            case PriorKind::general:
                tok = rng.categorical(prior.pi());
                break;
        }
    }
    return z;
}

namespace {

std::vector<Categorical> posterior_rows(std::span<const Token> z_t, const Matrix& x_rows, double alpha_t,
                                        double alpha_s, const PriorSpec& prior) {
    std::vector<Categorical> rows;
    rows.reserve(z_t.size());
    for (std::size_t l = 0; l < z_t.size(); ++l) {
        rows.push_back(reverse_posterior_at(z_t[l], x_rows.row(static_cast<int>(l)), alpha_t, alpha_s, prior));
    }
    return rows;
}

}  // namespace

std::vector<Categorical> reverse_rows(std::span<const Token> z_t, double t, double s, const Denoiser& denoiser,
                                      const GuidanceConfig& guidance, const Classifier* classifier) {
    if (!(s < t)) {
        throw ContractError("reverse step requires s < t");
    }
    if (static_cast<int>(z_t.size()) != denoiser.length()) {
        throw ContractError("sequence length does not match the denoiser");
    }
    const auto& schedule = denoiser.schedule();
    const double alpha_t = schedule.alpha(t);
    const double alpha_s = schedule.alpha(s);
    const double t_model = std::min(t, schedule.t_max());
    const auto& prior = denoiser.prior();

    switch (guidance.mode) {
        case GuidanceMode::none: {
            const int cond = guidance.target_class;
            return posterior_rows(z_t, denoiser.predict(z_t, t_model, cond), alpha_t, alpha_s, prior);
        }
        case GuidanceMode::cfg: {
            guidance.validate(denoiser.num_classes());
            if (guidance.gamma == 1.0 || guidance.gamma == 0.0) {
                const int only = guidance.gamma == 1.0 ? guidance.target_class : kDropped;
                return posterior_rows(z_t, denoiser.predict(z_t, t_model, only), alpha_t, alpha_s, prior);
            }
            const auto cond = posterior_rows(z_t, denoiser.predict(z_t, t_model, guidance.target_class), alpha_t,
                                             alpha_s, prior);
            const auto uncond = posterior_rows(z_t, denoiser.predict(z_t, t_model, kDropped), alpha_t, alpha_s, prior);
            return cfg_combine(cond, uncond, guidance.gamma);
        }
        case GuidanceMode::cbg_exact:
        case GuidanceMode::cbg_taylor: {
            if (classifier == nullptr) {
                throw ContractError("classifier guidance needs a classifier");
            }
            guidance.validate(classifier->num_classes());
            const auto base = posterior_rows(z_t, denoiser.predict(z_t, t_model, kDropped), alpha_t, alpha_s, prior);
            const double time = guidance.classifier_at_source_time ? t_model : s;
            if (guidance.mode == GuidanceMode::cbg_exact) {
                return cbg_exact(*classifier, z_t, time, base, guidance.target_class, guidance.gamma);
            }
            return cbg_taylor(*classifier, z_t, time, base, guidance.target_class, guidance.gamma);
        }
    }
    throw ContractError("unknown guidance mode");
}

Sequence reverse_step(std::span<const Token> z_t, double t, double s, const Denoiser& denoiser,
                      const GuidanceConfig& guidance, Rng& rng, const Classifier* classifier) {
    const auto rows = reverse_rows(z_t, t, s, denoiser, guidance, classifier);
    Sequence z_s(z_t.size());
    for (std::size_t l = 0; l < rows.size(); ++l) {
        z_s[l] = rng.categorical(rows[l]);
    }
    return z_s;
}

Token argmax_token(const Categorical& dist, Rng& rng) {
    double best = -1.0;
    std::vector<Token> ties;
    for (int j = 0; j < dist.size(); ++j) {
        const double p = dist[static_cast<std::size_t>(j)];
        if (p > best) {
            best = p;
            ties.assign(1, j);
        } else if (p == best) {
            ties.push_back(j);
        }
    }
    return ties.size() == 1 ? ties.front() : ties[static_cast<std::size_t>(rng.uniform_int(static_cast<int>(ties.size())))];
}

GenerationResult generate(const SampleRequest& request, const Denoiser& denoiser, const Classifier* classifier) {
    if (request.T < 1 || request.num_sequences < 0) {
        throw ContractError("sample request needs T >= 1 and a non-negative count");
    }
    if (request.length != denoiser.length()) {
        throw ContractError("requested length does not match the denoiser");
    }
    if (request.guidance.needs_classifier() != (classifier != nullptr)) {
        throw ContractError("a classifier is required exactly for classifier guidance");
    }
    const int L = request.length;
    const int T = request.T;
    GenerationResult result;
    result.sequences.resize(static_cast<std::size_t>(request.num_sequences));
    result.diagnostics.resize(static_cast<std::size_t>(request.num_sequences));

    parallel_for(result.sequences.size(), request.threads, [&](std::size_t n) {
        Rng rng = Rng::substream(request.seed, {static_cast<std::uint64_t>(n)});
        Sequence z = prior_draw(denoiser.prior(), L, rng);
        SampleDiagnostics diag;
        diag.steps = T;
        diag.edits.assign(static_cast<std::size_t>(L), 0);
        diag.revisions.assign(static_cast<std::size_t>(L), 0);
        for (int k = T; k >= 1; --k) {
            const double t = static_cast<double>(k) / T;
            const double s = static_cast<double>(k - 1) / T;
            Sequence next;
            if (k == 1 && request.final_decode == FinalDecode::argmax) {
                const auto rows = reverse_rows(z, t, s, denoiser, request.guidance, classifier);
                next.resize(rows.size());
                for (std::size_t l = 0; l < rows.size(); ++l) {
                    next[l] = argmax_token(rows[l], rng);
                }
            } else {
                next = reverse_step(z, t, s, denoiser, request.guidance, rng, classifier);
            }
            for (std::size_t l = 0; l < next.size(); ++l) {
                if (next[l] != z[l]) {
                    if (diag.edits[l] > 0) {
                        ++diag.revisions[l];
                    }
                    ++diag.edits[l];
                }
            }
            z = std::move(next);
        }
        result.sequences[n] = std::move(z);
        result.diagnostics[n] = std::move(diag);
    });
    return result;
}

void write_samples(const std::filesystem::path& path, std::span<const Sequence> sequences, const Vocabulary& vocab) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    for (const auto& seq : sequences) {
        out << detokenize(seq, vocab) << '\n';
    }
}

void write_sample_sidecar(const std::filesystem::path& path, const SampleRequest& request) {
    nlohmann::ordered_json j;
    j["seed"] = request.seed;
    j["T"] = request.T;
    j["num_sequences"] = request.num_sequences;
    j["length"] = request.length;
    j["mode"] = to_string(request.guidance.mode);
    j["gamma"] = request.guidance.gamma;
    j["target_class"] = request.guidance.target_class;
    j["final_decode"] = to_string(request.final_decode);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    out << j.dump(2) << '\n';
}

}  // namespace ddiff
