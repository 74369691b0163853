// SPDX-FileCopyrightText: 2026 The PointForge Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "pointforge/harness.hpp"
#include "pointforge/synthetic.hpp"

namespace pf {

enum class KeyType { String, Path, Int, Float, Bool, Enum, FloatList };

struct ConfigKey {
  std::string name;
  KeyType type = KeyType::String;
  std::string default_value;
  std::vector<std::string> choices;  // for Enum
  std::string help;
};

/// Every accepted key, in emit order.
const std::vector<ConfigKey>& config_keys();

/// Flat key = value settings. Later set() calls win, so applying defaults,
/// then a file, then command-line overrides gives the documented precedence.
class RunConfig {
 public:
  RunConfig();

  /// Throws ParseError naming the key for unknown keys or bad values.
  void set(const std::string& key, const std::string& value);
  const std::string& get(const std::string& key) const;
  bool is_set(const std::string& key) const { return !get(key).empty(); }

  /// "key = value" lines; '#' starts a comment; blank lines are skipped.
  void apply_text(std::string_view text, const std::string& origin = "config");
  void apply_file(const std::filesystem::path& path);
  /// Canonical dump, one "key = value" line per documented key.
  std::string emit() const;

  int get_int(const std::string& key) const;
  double get_float(const std::string& key) const;
  bool get_bool(const std::string& key) const;
  std::vector<double> get_float_list(const std::string& key) const;

  TrainConfig train_config() const;
  GeneratorSpec generator_spec() const;
  SplitCounts split_counts() const;
  EmbeddingSpec embedding_spec() const;

 private:
  std::map<std::string, std::string> values_;
};

bool parse_bool(std::string_view text);

}  // namespace pf
