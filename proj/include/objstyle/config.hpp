// SPDX-License-Identifier: Apache-2.0
#pragma once

// Flat `key = value` configuration. Later sources override earlier ones:
// built-in defaults, then the config file, then command-line flags.

#include <filesystem>
#include <istream>
#include <map>
#include <string>
#include <vector>

#include "objstyle/backends.hpp"
#include "objstyle/trainer.hpp"

namespace objstyle {

struct AppConfig {
    TrainConfig train;
    BackendConfig backends;
    std::string parser = "rule";  // "rule" | "command"
    std::string parser_command;
};

using KeyValues = std::map<std::string, std::string>;

/// Parses `key = value` lines. '#' starts a comment, blank lines are
/// ignored, values are trimmed. Throws ConfigError (with the line number)
/// on lines without '=' or with an empty key.
KeyValues parse_key_values(std::istream& in, const std::string& origin = "<config>");
KeyValues load_key_values(const std::filesystem::path& path);

/// Throws ConfigError on unknown keys or unparsable values.
void apply_key_value(AppConfig& config, const std::string& key, const std::string& value);
void apply_key_values(AppConfig& config, const KeyValues& kv);

/// Canonical echo of every setting, sufficient to rebuild the config.
KeyValues to_key_values(const AppConfig& config);
std::string dump_key_values(const KeyValues& kv);

/// 16 hex digits of FNV-1a over the canonical echo.
std::string config_hash(const AppConfig& config);

/// Documented keys with their defaults, in file order.
std::vector<std::pair<std::string, std::string>> default_key_values();

}  // namespace objstyle
