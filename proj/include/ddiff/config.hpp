// Copyright 2026 The ddiff Authors
// SPDX-License-Identifier: Apache-2.0
//
// Flat key=value configuration with a fixed key set per command.

#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace ddiff {

struct ConfigKey {
    std::string name;
    std::string default_value;  // empty with required = true means no default
    std::string help;
    bool required = false;
};

class Config {
public:
    explicit Config(std::vector<ConfigKey> schema);

    // Lines are "key = value"; '#' starts a comment. Unknown keys and repeated
    // keys throw ContractError naming the line.
    void load_file(const std::filesystem::path& path);
    void load_text(const std::string& text, const std::string& origin = "<config>");
    void set(const std::string& key, const std::string& value);

    // Throws ContractError listing every required key without a value.
    void check_required() const;

    const std::vector<ConfigKey>& schema() const { return schema_; }
    bool has(const std::string& key) const;
    std::string get(const std::string& key) const;
    int get_int(const std::string& key) const;
    long get_long(const std::string& key) const;
    double get_double(const std::string& key) const;
    bool get_bool(const std::string& key) const;
    std::uint64_t get_u64(const std::string& key) const;

    // Every key in schema order, in the file format.
    void write(std::ostream& out) const;

private:
    const ConfigKey& key(const std::string& name) const;

    std::vector<ConfigKey> schema_;
    std::map<std::string, std::string> values_;
};

}  // namespace ddiff
