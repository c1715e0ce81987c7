#pragma once

#include <filesystem>
#include <functional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "gazeattn/backbone.hpp"
#include "gazeattn/dataset.hpp"
#include "gazeattn/training.hpp"

namespace gazeattn {

/// Everything a train/eval run needs, merged from defaults, a key = value
/// file, and command-line flags (in that order of precedence).
struct RunConfig {
  std::string data_dir;
  std::string out_dir;
  std::string fold = "0";  // fold index, test-user id, or "all"
  FoldMode fold_mode = FoldMode::Strict;
  int dst_fps = 5;
  int eval_batch = 32;
  TrainConfig train{};
  BackboneConfig model{};

  std::set<std::string> explicit_keys;  // keys set by file or flag; not serialized

  /// Fills geometry/class keys that were not set explicitly from the dataset;
  /// explicit values that disagree with the data are a ConfigError.
  void resolve(const DatasetInfo& data);
  void validate() const;
};

struct ConfigKey {
  std::string name;
  std::string help;
  std::function<std::string(const RunConfig&)> get;
  std::function<void(RunConfig&, std::string_view)> set;
};

const std::vector<ConfigKey>& config_keys();

/// Throws ConfigError for unknown keys or malformed values.
void set_config_value(RunConfig& config, std::string_view key, std::string_view value);
std::string get_config_value(const RunConfig& config, std::string_view key);

/// Applies every line of a key = value text on top of `config`.
void apply_config_text(RunConfig& config, std::string_view text);
/// Every key in registry order, doubles printed round-trip exact.
std::string format_run_config(const RunConfig& config);

}  // namespace gazeattn
