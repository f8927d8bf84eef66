// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0

#include "ddiff/config.hpp"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "ddiff/core.hpp"

namespace ddiff {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) {
        return "";
    }
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

template <class T>
T parse_number(const std::string& key, const std::string& text) {
    T value{};
    const char* first = text.data();
    const char* last = text.data() + text.size();
    const auto [ptr, ec] = std::from_chars(first, last, value);
    if (ec != std::errc() || ptr != last) {
        throw ContractError("config key '" + key + "': cannot parse '" + text + "'");
    }
    return value;
}

}  // namespace

Config::Config(std::vector<ConfigKey> schema) : schema_(std::move(schema)) {
    for (const auto& k : schema_) {
        if (!k.default_value.empty()) {
            values_[k.name] = k.default_value;
        }
    }
}

const ConfigKey& Config::key(const std::string& name) const {
    const auto it = std::find_if(schema_.begin(), schema_.end(), [&](const ConfigKey& k) { return k.name == name; });
    if (it == schema_.end()) {
        throw ContractError("unknown config key '" + name + "'");
    }
    return *it;
}

void Config::load_file(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) {
        throw ContractError("cannot open config '" + path.string() + "'");
    }
    std::ostringstream os;
    os << in.rdbuf();
    load_text(os.str(), path.string());
}

void Config::load_text(const std::string& text, const std::string& origin) {
    std::istringstream in(text);
    std::string line;
    int line_no = 0;
    std::set<std::string> seen;
    while (std::getline(in, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) {
            line.resize(hash);
        }
        line = trim(line);
        if (line.empty()) {
            continue;
        }
        const auto where = origin + ":" + std::to_string(line_no);
        const auto eq = line.find('=');
        if (eq == std::string::npos) {
            throw ContractError(where + ": expected key = value");
        }
        const auto name = trim(line.substr(0, eq));
        if (!seen.insert(name).second) {
            throw ContractError(where + ": key '" + name + "' repeated");
        }
        try {
            set(name, trim(line.substr(eq + 1)));
        } catch (const ContractError& e) {
            throw ContractError(where + ": " + e.what());
        }
    }
}

void Config::set(const std::string& name, const std::string& value) {
    (void)key(name);
    values_[name] = value;
}

void Config::check_required() const {
    std::string missing;
    for (const auto& k : schema_) {
        if (k.required && !has(k.name)) {
            missing += (missing.empty() ? "" : ", ") + k.name;
        }
    }
    if (!missing.empty()) {
        throw ContractError("missing required setting(s): " + missing);
    }
}

bool Config::has(const std::string& name) const {
    (void)key(name);
    const auto it = values_.find(name);
    return it != values_.end() && !it->second.empty();
}

std::string Config::get(const std::string& name) const {
    (void)key(name);
    const auto it = values_.find(name);
    return it == values_.end() ? std::string() : it->second;
}

int Config::get_int(const std::string& name) const { return parse_number<int>(name, get(name)); }

long Config::get_long(const std::string& name) const { return parse_number<long>(name, get(name)); }

std::uint64_t Config::get_u64(const std::string& name) const { return parse_number<std::uint64_t>(name, get(name)); }

double Config::get_double(const std::string& name) const { return parse_number<double>(name, get(name)); }

bool Config::get_bool(const std::string& name) const {
    const auto v = get(name);
    if (v == "true" || v == "1" || v == "yes") {
        return true;
    }
    if (v == "false" || v == "0" || v == "no") {
        return false;
    }
    throw ContractError("config key '" + name + "': expected true or false, got '" + v + "'");
}

void Config::write(std::ostream& out) const {
    for (const auto& k : schema_) {
        out << k.name << " = " << get(k.name) << '\n';
    }
}

}  // namespace ddiff
