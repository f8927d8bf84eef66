// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// ddiff: train, sample, evaluate, score and verify discrete diffusion models.
//
// Every command takes an optional --config file of key = value lines; any key
// can also be given as --key value (underscores become dashes), which wins
// over the file. The resolved configuration is printed to stderr before work
// starts.
//
// Exit codes: 0 success, 1 usage or input error, 2 verification failure,
// 3 numeric failure.

#include <CLI11.hpp>

#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <map>
#include <memory>
#include <sstream>

#include "ddiff/checkpoint.hpp"
#include "ddiff/config.hpp"
#include "ddiff/data.hpp"
#include "ddiff/loss.hpp"
#include "ddiff/metrics.hpp"
#include "ddiff/parallel.hpp"
#include "ddiff/sampler.hpp"
#include "ddiff/train.hpp"
#include "ddiff/verify.hpp"

using namespace ddiff;

namespace {

constexpr int kExitUsage = 1;
constexpr int kExitVerify = 2;
constexpr int kExitNumeric = 3;

struct Command {
    std::string name;
    std::vector<ConfigKey> schema;
    std::string config_path;
    std::map<std::string, std::string> overrides;
    CLI::App* app = nullptr;
};

std::string flag_name(std::string key) {
    std::replace(key.begin(), key.end(), '_', '-');
    return "--" + key;
}

void add_keys(Command& cmd) {
    cmd.app->add_option("--config", cmd.config_path, "key = value configuration file");
    for (const auto& k : cmd.schema) {
        std::string help = k.help;
        if (k.required) {
            help += " (required)";
        } else if (!k.default_value.empty()) {
            help += " [" + k.default_value + "]";
        }
        cmd.app->add_option(flag_name(k.name), cmd.overrides[k.name], help);
    }
}

Config resolve(const Command& cmd) {
    Config config(cmd.schema);
    if (!cmd.config_path.empty()) {
        config.load_file(cmd.config_path);
    }
    for (const auto& k : cmd.schema) {
        if (cmd.app->count(flag_name(k.name)) > 0) {
            config.set(k.name, cmd.overrides.at(k.name));
        }
    }
    config.check_required();
    std::cerr << "# ddiff " << cmd.name << " resolved configuration\n";
    config.write(std::cerr);
    return config;
}

int infer_length(const std::string& path) {
    std::ifstream in(path);
    std::string line;
    if (!in || !std::getline(in, line)) {
        throw FormatError("cannot read a sequence from '" + path + "'");
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    return static_cast<int>(line.size());
}

Vocabulary resolve_vocab(const Config& c, bool with_mask) {
    if (c.has("vocab")) {
        Vocabulary v = load_vocabulary(c.get("vocab"));
        if (with_mask && !v.has_mask()) {
            throw ContractError("absorbing models need a vocabulary with a mask symbol");
        }
        return v;
    }
    if (!c.has("n")) {
        throw ContractError("give either vocab or n");
    }
    return Vocabulary::letters(c.get_int("n"), with_mask);
}

std::optional<std::filesystem::path> optional_path(const Config& c, const std::string& key) {
    if (!c.has(key)) {
        return std::nullopt;
    }
    return std::filesystem::path(c.get(key));
}

// train ------------------------------------------------------------------

std::vector<ConfigKey> train_schema() {
    return {
        {"data", "", "training sequences, one per line", true},
        {"labels", "", "class labels, one per line"},
        {"classes", "0", "number of condition classes (0 = unconditional)"},
        {"vocab", "", "vocabulary JSON"},
        {"n", "", "number of data symbols a, b, ... when no vocab is given"},
        {"length", "0", "sequence length (0 = first line of data)"},
        {"model", "uniform", "uniform | absorbing"},
        {"objective", "auto", "udlm_continuous | mdlm_continuous | nelbo_discrete | sedd_form | auto"},
        {"steps", "1000", "T for nelbo_discrete"},
        {"mc_samples", "1", "latent draws per example"},
        {"hidden", "32", "hidden width"},
        {"layers", "2", "hidden layers"},
        {"epochs", "10", "passes over the data"},
        {"batch", "64", "batch size"},
        {"optimizer", "adam", "adam | sgd"},
        {"lr", "0.001", "learning rate"},
        {"condition_dropout", "0.10", "probability of dropping the label"},
        {"copy_floor", "0.0001", "times at or below which the denoiser copies its input"},
        {"seed", "0", "random seed"},
        {"out", "", "denoiser checkpoint path", true},
        {"classifier_out", "", "also train a noisy-latent classifier and save it here"},
        {"classifier_hidden", "32", "classifier hidden width"},
        {"classifier_layers", "2", "classifier hidden layers"},
        {"classifier_epochs", "0", "classifier epochs (0 = epochs)"},
        {"threads", "0", "worker threads (0 = all cores)"},
    };
}

int run_train(const Config& c) {
    const ModelKind kind = model_kind_from_string(c.get("model"));
    const bool absorbing = kind == ModelKind::absorbing;
    const Vocabulary vocab = resolve_vocab(c, absorbing);
    const int length = c.get_int("length") > 0 ? c.get_int("length") : infer_length(c.get("data"));
    const int classes = c.get_int("classes");
    if (c.has("labels") != (classes > 0)) {
        throw ContractError("labels and a positive class count go together");
    }
    const Dataset data = load_text_dataset(c.get("data"), vocab, length, optional_path(c, "labels"), classes);
    if (absorbing) {
        for (const auto& s : data.sequences) {
            if (std::find(s.begin(), s.end(), *vocab.mask_index()) != s.end()) {
                throw ContractError("training data contains the mask symbol");
            }
        }
    }

    TrainConfig tc;
    std::string objective = c.get("objective");
    if (objective == "auto") {
        objective = absorbing ? "mdlm_continuous" : "udlm_continuous";
    }
    tc.loss.objective = objective_from_string(objective);
    tc.loss.T = c.get_int("steps");
    tc.loss.mc_samples_per_example = c.get_int("mc_samples");
    tc.loss.validate();
    tc.epochs = c.get_int("epochs");
    tc.batch_size = c.get_int("batch");
    tc.optimizer.kind = c.get("optimizer") == "sgd" ? OptimizerKind::sgd : OptimizerKind::adam;
    if (c.get("optimizer") != "sgd" && c.get("optimizer") != "adam") {
        throw ContractError("optimizer must be adam or sgd");
    }
    tc.optimizer.lr = c.get_double("lr");
    tc.condition_dropout = c.get_double("condition_dropout");
    tc.seed = c.get_u64("seed");
    tc.threads = c.get_int("threads");
    tc.on_epoch = [](int epoch, double loss) {
        std::cerr << "epoch " << epoch << " loss " << std::setprecision(6) << loss << '\n';
    };

    const NoiseSchedule schedule;
    const TrunkShape shape{vocab.size(), length, c.get_int("hidden"), c.get_int("layers"), classes};
    const auto trained = train_denoiser(data, kind, shape, schedule, tc);
    DenoiserCheckpoint ckpt;
    ckpt.kind = kind;
    ckpt.vocab = vocab;
    ckpt.schedule = schedule;
    ckpt.params = trained.params;
    ckpt.copy_floor = c.get_double("copy_floor");
    save_checkpoint(c.get("out"), ckpt);
    std::cout << "wrote " << c.get("out") << '\n';

    if (c.has("classifier_out")) {
        if (classes < 1) {
            throw ContractError("a classifier needs labels");
        }
        TrainConfig cc = tc;
        if (c.get_int("classifier_epochs") > 0) {
            cc.epochs = c.get_int("classifier_epochs");
        }
        cc.seed = tc.seed + 1;
        const TrunkShape cshape{vocab.size(), length, c.get_int("classifier_hidden"), c.get_int("classifier_layers"),
                                classes};
        const PriorSpec prior = absorbing ? PriorSpec::absorbing(vocab.size(), *vocab.mask_index())
                                          : PriorSpec::uniform(vocab.size());
        const auto cls = train_classifier(data, prior, cshape, schedule, cc);
        ClassifierCheckpoint cck;
        cck.vocab = vocab;
        cck.schedule = schedule;
        cck.params = cls.params;
        save_checkpoint(c.get("classifier_out"), cck);
        std::cout << "wrote " << c.get("classifier_out") << '\n';
    }
    return 0;
}

// sample -----------------------------------------------------------------

std::vector<ConfigKey> sample_schema() {
    return {
        {"checkpoint", "", "denoiser checkpoint", true},
        {"classifier", "", "classifier checkpoint for cbg and cbg-taylor"},
        {"num", "16", "number of sequences"},
        {"steps", "128", "reverse steps T"},
        {"guidance", "none", "none | cfg | cbg | cbg-taylor"},
        {"gamma", "1", "guidance strength"},
        {"label", "", "target class for guidance"},
        {"decode", "sample", "final step: sample | argmax"},
        {"seed", "0", "random seed"},
        {"out", "", "output file, one sequence per line", true},
        {"threads", "0", "worker threads (0 = all cores)"},
    };
}

int run_sample(const Config& c) {
    const auto ckpt = load_denoiser_checkpoint(c.get("checkpoint"));
    const auto denoiser = ckpt.make_denoiser();
    SampleRequest req;
    req.num_sequences = c.get_int("num");
    req.length = denoiser.length();
    req.T = c.get_int("steps");
    req.guidance.mode = guidance_mode_from_string(c.get("guidance"));
    req.guidance.gamma = c.get_double("gamma");
    if (c.has("label")) {
        req.guidance.target_class = c.get_int("label");
    } else if (req.guidance.mode != GuidanceMode::none) {
        throw ContractError("guidance needs a target label");
    }
    req.final_decode = final_decode_from_string(c.get("decode"));
    req.seed = c.get_u64("seed");
    req.threads = c.get_int("threads");

    std::unique_ptr<MlpClassifier> classifier;
    if (req.guidance.needs_classifier()) {
        if (!c.has("classifier")) {
            throw ContractError("guidance '" + c.get("guidance") + "' needs a classifier checkpoint");
        }
        const auto cck = load_classifier_checkpoint(c.get("classifier"));
        if (!(cck.vocab == ckpt.vocab)) {
            throw ContractError("classifier and denoiser vocabularies differ");
        }
        classifier = std::make_unique<MlpClassifier>(cck.make_classifier());
    }
    const auto result = generate(req, denoiser, classifier.get());
    write_samples(c.get("out"), result.sequences, ckpt.vocab);
    write_sample_sidecar(c.get("out") + ".json", req);
    long edits = 0;
    long revisions = 0;
    for (const auto& d : result.diagnostics) {
        edits += d.total_edits();
        revisions += d.total_revisions();
    }
    std::cout << "wrote " << result.sequences.size() << " sequences to " << c.get("out") << '\n'
              << "mean edits per sequence " << static_cast<double>(edits) / req.num_sequences
              << ", mean revisions per sequence " << static_cast<double>(revisions) / req.num_sequences << '\n';
    return 0;
}

// eval -------------------------------------------------------------------

std::vector<ConfigKey> eval_schema() {
    return {
        {"checkpoint", "", "denoiser checkpoint (omit with model = tabular)"},
        {"data", "", "evaluation sequences", true},
        {"model", "checkpoint", "checkpoint | tabular (Bayes-optimal model of the data itself)"},
        {"kind", "uniform", "prior for model = tabular: uniform | absorbing"},
        {"vocab", "", "vocabulary JSON for model = tabular"},
        {"n", "", "number of data symbols for model = tabular"},
        {"mode", "mc", "exact | mc"},
        {"objective", "auto", "nelbo_discrete | udlm_continuous | mdlm_continuous | auto (mc mode)"},
        {"steps", "1000", "T for nelbo_discrete"},
        {"samples", "64", "Monte Carlo draws per sequence"},
        {"seed", "0", "random seed"},
        {"threads", "0", "worker threads (0 = all cores)"},
    };
}

int run_eval(const Config& c) {
    std::unique_ptr<Denoiser> owned;
    Vocabulary vocab = Vocabulary::letters(2);
    ModelKind kind = ModelKind::uniform;
    if (c.get("model") == "checkpoint") {
        if (!c.has("checkpoint")) {
            throw ContractError("missing required setting(s): checkpoint");
        }
        const auto ckpt = load_denoiser_checkpoint(c.get("checkpoint"));
        vocab = ckpt.vocab;
        kind = ckpt.kind;
        owned = std::make_unique<MlpDenoiser>(ckpt.make_denoiser());
    } else if (c.get("model") != "tabular") {
        throw ContractError("model must be checkpoint or tabular");
    } else {
        kind = model_kind_from_string(c.get("kind"));
        vocab = resolve_vocab(c, kind == ModelKind::absorbing);
    }
    const int length = owned ? owned->length() : infer_length(c.get("data"));
    const Dataset data = load_text_dataset(c.get("data"), vocab, length);
    if (!owned) {
        const PriorSpec prior = kind == ModelKind::absorbing ? PriorSpec::absorbing(vocab.size(), *vocab.mask_index())
                                                             : PriorSpec::uniform(vocab.size());
        owned = std::make_unique<TabularDenoiser>(prior, data.sequences,
                                                  std::vector<double>(data.size(), 1.0 / static_cast<double>(data.size())));
    }
    const Denoiser& model = *owned;

    const bool exact = c.get("mode") == "exact";
    if (!exact && c.get("mode") != "mc") {
        throw ContractError("mode must be exact or mc");
    }
    std::string objective = c.get("objective");
    if (exact) {
        objective = "nelbo_discrete";
    } else if (objective == "auto") {
        objective = kind == ModelKind::absorbing ? "mdlm_continuous" : "udlm_continuous";
    }
    const Objective obj = objective_from_string(objective);
    const int T = c.get_int("steps");
    const long samples = c.get_long("samples");
    const std::uint64_t seed = c.get_u64("seed");

    std::vector<Estimate> per(data.size());
    parallel_for(data.size(), c.get_int("threads"), [&](std::size_t i) {
        Rng rng = Rng::substream(seed, {i});
        const auto& x = data.sequences[i];
        if (exact) {
            per[i] = Estimate{nelbo_discrete_exact(x, model, T), 0.0, 1};
        } else if (obj == Objective::nelbo_discrete) {
            per[i] = nelbo_discrete_mc(x, model, T, rng, samples);
        } else if (obj == Objective::udlm_continuous) {
            per[i] = udlm_loss(x, model, rng, samples);
        } else if (obj == Objective::mdlm_continuous) {
            per[i] = mdlm_loss(x, model, rng, samples);
        } else {
            throw ContractError("objective '" + objective + "' cannot be evaluated");
        }
    });
    double mean = 0.0;
    double var = 0.0;
    for (const auto& e : per) {
        mean += e.value;
        var += e.std_error * e.std_error;
    }
    const double count = static_cast<double>(per.size());
    mean /= count;
    const double se = std::sqrt(var) / count;
    std::cout << std::setprecision(8) << "metric\tvalue\tstd_error\n"
              << "nelbo_nats\t" << mean << '\t' << se << '\n'
              << "bpc\t" << bpc(mean, length) << '\t' << bpc(se, length) << '\n'
              << "ppl\t" << ppl(mean, length) << "\t-\n"
              << "sequences\t" << data.size() << "\t-\n"
              << "objective\t" << objective << "\t-\n";
    return 0;
}

// metrics ----------------------------------------------------------------

std::vector<ConfigKey> metrics_schema() {
    return {
        {"samples", "", "generated sequences", true},
        {"reference", "", "reference sequences", true},
        {"vocab", "", "vocabulary JSON"},
        {"n", "", "number of data symbols a, b, ... when no vocab is given"},
        {"k", "2", "k-mer length"},
        {"rule", "", "label rule for control accuracy: majority_token | prefix_class"},
        {"requested", "", "requested label per sample, one per line"},
        {"classes", "0", "number of classes for the label rule"},
        {"threads", "0", "worker threads (unused; accepted for uniformity)"},
    };
}

int run_metrics(const Config& c) {
    const Vocabulary vocab = resolve_vocab(c, false);
    const int length = infer_length(c.get("samples"));
    const Dataset samples = load_text_dataset(c.get("samples"), vocab, length);
    const Dataset reference = load_text_dataset(c.get("reference"), vocab, infer_length(c.get("reference")));
    const NoveltyReport nov = validity_novelty_property(
        samples.sequences, [](std::span<const Token>) { return true; }, reference.sequences,
        [](std::span<const Token>) { return 0.0; });
    std::cout << std::setprecision(8) << "metric\tvalue\n"
              << "kmer_js\t" << kmer_js(samples.sequences, reference.sequences, c.get_int("k")) << '\n'
              << "num_novel\t" << nov.num_novel << '\n';
    if (c.has("rule")) {
        const int classes = c.get_int("classes");
        if (!c.has("requested") || classes < 1) {
            throw ContractError("control accuracy needs requested labels and a class count");
        }
        const Dataset labeled = load_text_dataset(c.get("samples"), vocab, length, c.get("requested"), classes);
        const LabelRule rule = label_rule_from_string(c.get("rule"));
        const int n = vocab.has_mask() ? vocab.size() - 1 : vocab.size();
        const auto report = control_accuracy(labeled.sequences, labeled.labels, classes, [&](std::span<const Token> s) {
            return label_by_rule(rule, s, n, classes);
        });
        std::cout << "control_accuracy\t" << report.accuracy << '\n'
                  << "macro_recall\t" << report.macro_recall << '\n';
    }
    return 0;
}

// corpus -----------------------------------------------------------------

std::vector<ConfigKey> corpus_schema() {
    return {
        {"n", "6", "number of data symbols"},
        {"length", "16", "sequence length"},
        {"count", "10000", "number of sequences"},
        {"rule", "majority_token", "majority_token | prefix_class"},
        {"classes", "0", "number of classes (0 = rule default)"},
        {"seed", "0", "random seed"},
        {"out", "", "sequence file", true},
        {"labels_out", "", "label file", true},
        {"vocab_out", "", "vocabulary JSON"},
        {"threads", "0", "worker threads (unused; accepted for uniformity)"},
    };
}

int run_corpus(const Config& c) {
    const int n = c.get_int("n");
    const Dataset d = gen_labeled_corpus(n, c.get_int("length"), c.get_int("count"),
                                         label_rule_from_string(c.get("rule")), c.get_u64("seed"), c.get_int("classes"));
    const Vocabulary vocab = Vocabulary::letters(n);
    write_text_dataset(c.get("out"), d, vocab, std::filesystem::path(c.get("labels_out")));
    if (c.has("vocab_out")) {
        save_vocabulary(c.get("vocab_out"), vocab);
    }
    std::cout << "wrote " << d.size() << " sequences, " << d.num_classes << " classes\n";
    return 0;
}

// verify -----------------------------------------------------------------

std::vector<ConfigKey> verify_schema() {
    return {
        {"suite", "all", "posteriors | limits | bound | equivalence | guidance | ctmc | gradients | all"},
        {"seed", "1", "random seed"},
        {"json", "", "also write the report as JSON here"},
        {"threads", "0", "worker threads (0 = all cores)"},
    };
}

int run_verify(const Config& c) {
    SuiteOptions opt;
    opt.seed = c.get_u64("seed");
    opt.threads = c.get_int("threads");
    const auto reports = run_suite(c.get("suite"), opt);
    print_report(std::cout, reports);
    if (c.has("json")) {
        std::ofstream out(c.get("json"));
        if (!out) {
            throw FormatError("cannot write '" + c.get("json") + "'");
        }
        out << report_json(reports);
    }
    const bool ok = std::all_of(reports.begin(), reports.end(), [](const SuiteReport& r) { return r.passed(); });
    return ok ? 0 : kExitVerify;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Discrete diffusion language models"};
    app.require_subcommand(1);

    std::vector<std::pair<Command, int (*)(const Config&)>> commands;
    commands.push_back({Command{"train", train_schema(), {}, {}, nullptr}, run_train});
    commands.push_back({Command{"sample", sample_schema(), {}, {}, nullptr}, run_sample});
    commands.push_back({Command{"eval", eval_schema(), {}, {}, nullptr}, run_eval});
    commands.push_back({Command{"metrics", metrics_schema(), {}, {}, nullptr}, run_metrics});
    commands.push_back({Command{"corpus", corpus_schema(), {}, {}, nullptr}, run_corpus});
    commands.push_back({Command{"verify", verify_schema(), {}, {}, nullptr}, run_verify});
    const std::map<std::string, std::string> descriptions = {
        {"train", "train a denoiser (and optionally a classifier)"},
        {"sample", "generate sequences from a checkpoint"},
        {"eval", "report NELBO, BPC and perplexity on a dataset"},
        {"metrics", "k-mer JS, novelty and control accuracy of samples"},
        {"corpus", "write a synthetic labeled corpus"},
        {"verify", "run the verification suites"},
    };
    std::string verify_positional;
    for (auto& [cmd, fn] : commands) {
        cmd.app = app.add_subcommand(cmd.name, descriptions.at(cmd.name));
        add_keys(cmd);
        if (cmd.name == "verify") {
            cmd.app->add_option("suite_name", verify_positional, "suite to run");
        }
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    for (auto& [cmd, fn] : commands) {
        if (!cmd.app->parsed()) {
            continue;
        }
        try {
            if (!verify_positional.empty()) {
                if (cmd.app->count("--suite") > 0) {
                    throw ContractError("give the suite once");
                }
                cmd.overrides["suite"] = verify_positional;
                cmd.app->get_option("--suite")->add_result(verify_positional);
            }
            const Config config = resolve(cmd);
            return fn(config);
        } catch (const NumericError& e) {
            std::cerr << "ddiff " << cmd.name << ": numeric failure: " << e.what() << '\n';
            return kExitNumeric;
        } catch (const std::exception& e) {
            std::cerr << "ddiff " << cmd.name << ": " << e.what() << '\n';
            return kExitUsage;
        }
    }
    return kExitUsage;
}
