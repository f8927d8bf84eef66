// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/checkpoint.hpp"

#include <fstream>
#include <sstream>

#include <json.hpp>

namespace ddiff {

using nlohmann::ordered_json;

namespace {

ordered_json vocab_json(const Vocabulary& v) {
    ordered_json j;
    j["symbols"] = v.symbols();
    if (v.has_mask()) {
        j["mask_index"] = *v.mask_index();
    } else {
        j["mask_index"] = nullptr;
    }
    return j;
}

Vocabulary vocab_from(const ordered_json& j) {
    std::optional<Token> mask;
    if (!j.at("mask_index").is_null()) {
        mask = j.at("mask_index").get<int>();
    }
    return Vocabulary(j.at("symbols").get<std::vector<std::string>>(), mask);
}

ordered_json schedule_json(const NoiseSchedule& s) {
    ordered_json j;
    j["kind"] = to_string(s.kind());
    j["t_min"] = s.t_min();
    j["t_max"] = s.t_max();
    return j;
}

NoiseSchedule schedule_from(const ordered_json& j) {
    return NoiseSchedule(schedule_kind_from_string(j.at("kind").get<std::string>()), j.at("t_min").get<double>(),
                         j.at("t_max").get<double>());
}

ordered_json shape_json(const TrunkShape& s) {
    ordered_json j;
    j["vocab"] = s.vocab;
    j["length"] = s.length;
    j["hidden"] = s.hidden;
    j["layers"] = s.layers;
    j["classes"] = s.classes;
    return j;
}

TrunkShape shape_from(const ordered_json& j) {
    TrunkShape s;
    s.vocab = j.at("vocab").get<int>();
    s.length = j.at("length").get<int>();
    s.hidden = j.at("hidden").get<int>();
    s.layers = j.at("layers").get<int>();
    s.classes = j.at("classes").get<int>();
    return s;
}

ordered_json params_json(const ParamSet& p) {
    ordered_json arr = ordered_json::array();
    for (const auto& t : p.tensors()) {
        ordered_json j;
        j["name"] = t.name;
        j["rows"] = t.value.rows;
        j["cols"] = t.value.cols;
        j["values"] = t.value.data;
        arr.push_back(std::move(j));
    }
    return arr;
}

ParamSet params_from(const ordered_json& arr) {
    ParamSet p;
    for (const auto& j : arr) {
        Matrix m(j.at("rows").get<int>(), j.at("cols").get<int>());
        auto values = j.at("values").get<std::vector<double>>();
        if (values.size() != m.size()) {
            throw FormatError("checkpoint tensor '" + j.at("name").get<std::string>() + "' has the wrong size");
        }
        m.data = std::move(values);
        p.add(j.at("name").get<std::string>(), std::move(m));
    }
    return p;
}

ordered_json parse_json(const std::string& text) {
    try {
        return ordered_json::parse(text);
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint is not valid JSON: ") + e.what());
    }
}

void check_version(const ordered_json& j) {
    const int v = j.at("format_version").get<int>();
    if (v != kCheckpointVersion) {
        throw FormatError("unsupported checkpoint format_version " + std::to_string(v));
    }
}

template <class Fn>
auto guarded(Fn&& fn) {
    try {
        return fn();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed checkpoint: ") + e.what());
    } catch (const ContractError& e) {
        throw FormatError(std::string("malformed checkpoint: ") + e.what());
    }
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError("cannot open '" + path.string() + "'");
    }
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

void write_file(const std::filesystem::path& path, const std::string& text) {
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError("cannot open '" + path.string() + "' for writing");
    }
    out << text;
}

}  // namespace

MlpDenoiser DenoiserCheckpoint::make_denoiser() const {
    std::optional<Token> mask;
    if (kind == ModelKind::absorbing) {
        if (!vocab.has_mask()) {
            throw FormatError("absorbing checkpoint without a mask token");
        }
        mask = vocab.mask_index();
    }
    return MlpDenoiser(kind, params, schedule, mask, copy_floor);
}

MlpClassifier ClassifierCheckpoint::make_classifier() const { return MlpClassifier(params, schedule); }

std::string serialize(const DenoiserCheckpoint& ckpt) {
    ckpt.params.validate();
    ordered_json j;
    j["format_version"] = kCheckpointVersion;
    j["model_kind"] = to_string(ckpt.kind);
    j["vocab"] = vocab_json(ckpt.vocab);
    j["schedule"] = schedule_json(ckpt.schedule);
    j["shapes"] = shape_json(ckpt.params.shape);
    j["copy_floor"] = ckpt.copy_floor;
    j["params"] = params_json(ckpt.params.tensors);
    return j.dump() + "\n";
}

std::string serialize(const ClassifierCheckpoint& ckpt) {
    ckpt.params.validate();
    ordered_json j;
    j["format_version"] = kCheckpointVersion;
    j["model_kind"] = "classifier";
    j["vocab"] = vocab_json(ckpt.vocab);
    j["schedule"] = schedule_json(ckpt.schedule);
    j["shapes"] = shape_json(ckpt.params.shape);
    j["params"] = params_json(ckpt.params.tensors);
    return j.dump() + "\n";
}

DenoiserCheckpoint parse_denoiser_checkpoint(const std::string& text) {
    const auto j = parse_json(text);
    return guarded([&] {
        check_version(j);
        const auto kind_name = j.at("model_kind").get<std::string>();
        if (kind_name == "classifier") {
            throw FormatError("expected a denoiser checkpoint, found a classifier");
        }
        DenoiserCheckpoint c;
        c.kind = model_kind_from_string(kind_name);
        c.vocab = vocab_from(j.at("vocab"));
        c.schedule = schedule_from(j.at("schedule"));
        c.params.shape = shape_from(j.at("shapes"));
        c.params.tensors = params_from(j.at("params"));
        c.copy_floor = j.at("copy_floor").get<double>();
        c.params.validate();
        if (c.vocab.size() != c.params.shape.vocab) {
            throw FormatError("checkpoint vocabulary size does not match its shapes");
        }
        return c;
    });
}

ClassifierCheckpoint parse_classifier_checkpoint(const std::string& text) {
    const auto j = parse_json(text);
    return guarded([&] {
        check_version(j);
        if (j.at("model_kind").get<std::string>() != "classifier") {
            throw FormatError("expected a classifier checkpoint");
        }
        ClassifierCheckpoint c;
        c.vocab = vocab_from(j.at("vocab"));
        c.schedule = schedule_from(j.at("schedule"));
        c.params.shape = shape_from(j.at("shapes"));
        c.params.tensors = params_from(j.at("params"));
        c.params.validate();
        return c;
    });
}

void save_checkpoint(const std::filesystem::path& path, const DenoiserCheckpoint& ckpt) {
    write_file(path, serialize(ckpt));
}

void save_checkpoint(const std::filesystem::path& path, const ClassifierCheckpoint& ckpt) {
    write_file(path, serialize(ckpt));
}

DenoiserCheckpoint load_denoiser_checkpoint(const std::filesystem::path& path) {
    return parse_denoiser_checkpoint(read_file(path));
}

ClassifierCheckpoint load_classifier_checkpoint(const std::filesystem::path& path) {
    return parse_classifier_checkpoint(read_file(path));
}

}  // namespace ddiff
