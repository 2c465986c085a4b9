#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "gcagc/model.hpp"
#include "gcagc/train.hpp"

namespace gcagc {

/// Everything a training or inference run needs.
struct RunConfig {
  ModelConfig model;
  TrainConfig train;
  std::size_t group_size = 5;  // N
};

struct IniEntry {
  std::string section;
  std::string key;
  std::string value;
  std::size_t line = 0;
};

/// Line-based format: `[section]` headers, `key = value` pairs, `#` comments
/// (full-line or trailing). Keys before any header belong to section "".
std::vector<IniEntry> parse_ini(const std::string& text, const std::string& source = "<config>");

/// Applies `section.key = value`. Unknown keys and malformed values are
/// ConfigErrors.
void apply_setting(RunConfig& cfg, const std::string& section, const std::string& key,
                   const std::string& value);
/// "section.key=value" form, as used for command-line overrides.
void apply_override(RunConfig& cfg, const std::string& assignment);

RunConfig load_run_config(const std::filesystem::path& path);

/// Every recognised key with its current value, in file syntax.
std::string format_run_config(const RunConfig& cfg);

}  // namespace gcagc
