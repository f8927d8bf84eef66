// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

namespace ddiff {

namespace {

using Histogram = std::map<Sequence, long>;

Histogram kmer_histogram(std::span<const Sequence> seqs, int k) {
    Histogram h;
    for (const auto& s : seqs) {
        if (k > static_cast<int>(s.size())) {
            throw ContractError("kmer_js: k exceeds the sequence length");
        }
        for (std::size_t i = 0; i + static_cast<std::size_t>(k) <= s.size(); ++i) {
            ++h[Sequence(s.begin() + static_cast<long>(i), s.begin() + static_cast<long>(i) + k)];
        }
    }
    return h;
}

long total(const Histogram& h) {
    long n = 0;
    for (const auto& [_, c] : h) {
        n += c;
    }
    return n;
}

double half_term(double p, double m) { return p > 0.0 ? p * std::log2(p / m) : 0.0; }

}  // namespace

double kmer_js(std::span<const Sequence> samples, std::span<const Sequence> reference, int k) {
    if (k < 1) {
        throw ContractError("kmer_js: k must be positive");
    }
    if (samples.empty() || reference.empty()) {
        throw ContractError("kmer_js: empty corpus");
    }
    const Histogram a = kmer_histogram(samples, k);
    const Histogram b = kmer_histogram(reference, k);
    const double na = static_cast<double>(total(a));
    const double nb = static_cast<double>(total(b));
    std::set<Sequence> keys;
    for (const auto& [key, _] : a) {
        keys.insert(key);
    }
    for (const auto& [key, _] : b) {
        keys.insert(key);
    }
    double js = 0.0;
    for (const auto& key : keys) {
        const auto ia = a.find(key);
        const auto ib = b.find(key);
        const double p = ia == a.end() ? 0.0 : static_cast<double>(ia->second) / na;
        const double q = ib == b.end() ? 0.0 : static_cast<double>(ib->second) / nb;
        const double m = 0.5 * (p + q);
        js += 0.5 * (half_term(p, m) + half_term(q, m));
    }
    return std::clamp(js, 0.0, 1.0);
}

ControlReport control_accuracy(std::span<const Sequence> samples, std::span<const int> requested, int num_classes,
                               const RuleOracle& oracle) {
    if (samples.empty()) {
        throw ContractError("control_accuracy: no samples");
    }
    if (samples.size() != requested.size()) {
        throw ContractError("control_accuracy: one requested label per sample required");
    }
    if (num_classes < 1) {
        throw ContractError("control_accuracy: need at least one class");
    }
    ControlReport r;
    r.confusion.assign(static_cast<std::size_t>(num_classes), std::vector<long>(static_cast<std::size_t>(num_classes), 0));
    long correct = 0;
    for (std::size_t i = 0; i < samples.size(); ++i) {
        const int want = requested[i];
        const int got = oracle(samples[i]);
        if (want < 0 || want >= num_classes || got < 0 || got >= num_classes) {
            throw ContractError("control_accuracy: label out of range");
        }
        ++r.confusion[static_cast<std::size_t>(want)][static_cast<std::size_t>(got)];
        correct += (want == got);
    }
    r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    double recall_sum = 0.0;
    int present = 0;
    for (int c = 0; c < num_classes; ++c) {
        const auto& row = r.confusion[static_cast<std::size_t>(c)];
        long n = 0;
        for (long v : row) {
            n += v;
        }
        if (n > 0) {
            recall_sum += static_cast<double>(row[static_cast<std::size_t>(c)]) / static_cast<double>(n);
            ++present;
        }
    }
    r.macro_recall = recall_sum / present;
    return r;
}

NoveltyReport validity_novelty_property(std::span<const Sequence> samples,
                                        const std::function<bool(std::span<const Token>)>& validator,
                                        std::span<const Sequence> train_set,
                                        const std::function<double(std::span<const Token>)>& property) {
    const std::set<Sequence> train(train_set.begin(), train_set.end());
    std::set<Sequence> novel;
    NoveltyReport r;
    double sum = 0.0;
    for (const auto& s : samples) {
        if (!validator(s)) {
            continue;
        }
        ++r.num_valid;
        if (train.contains(s) || !novel.insert(s).second) {
            continue;
        }
        sum += property(s);
    }
    r.num_novel = static_cast<long>(novel.size());
    if (r.num_novel > 0) {
        r.property_mean = sum / static_cast<double>(r.num_novel);
    }
    return r;
}

std::vector<GammaSweepRow> gamma_sweep(const Denoiser& denoiser, const Classifier* classifier,
                                       std::span<const double> gammas, const SampleRequest& request_template,
                                       int num_classes, const RuleOracle& oracle,
                                       std::span<const Sequence> reference, int k) {
    if (num_classes < 1) {
        throw ContractError("gamma_sweep: need at least one class");
    }
    std::vector<GammaSweepRow> rows;
    for (double gamma : gammas) {
        std::vector<Sequence> samples;
        std::vector<int> requested;
        for (int c = 0; c < num_classes; ++c) {
            SampleRequest req = request_template;
            req.num_sequences = request_template.num_sequences / num_classes +
                                (c < request_template.num_sequences % num_classes ? 1 : 0);
            req.seed = request_template.seed + static_cast<std::uint64_t>(c) * 0x9e3779b97f4a7c15ULL;
            req.guidance.gamma = gamma;
            req.guidance.target_class = c;
            auto result = generate(req, denoiser, classifier);
            for (auto& s : result.sequences) {
                samples.push_back(std::move(s));
                requested.push_back(c);
            }
        }
        GammaSweepRow row;
        row.gamma = gamma;
        row.control_accuracy = control_accuracy(samples, requested, num_classes, oracle).accuracy;
        row.kmer_js = kmer_js(samples, reference, k);
        row.num_novel = validity_novelty_property(
                            samples, [](std::span<const Token>) { return true; }, reference,
                            [](std::span<const Token>) { return 0.0; })
                            .num_novel;
        rows.push_back(row);
    }
    return rows;
}

void write_gamma_sweep_tsv(std::ostream& out, std::span<const GammaSweepRow> rows) {
    out << "gamma\tcontrol_accuracy\tkmer_js\tnum_novel\n";
    for (const auto& r : rows) {
        out << r.gamma << '\t' << r.control_accuracy << '\t' << r.kmer_js << '\t' << r.num_novel << '\n';
    }
}

}  // namespace ddiff
