#pragma once

#include <filesystem>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "pepco/data.hpp"
#include "pepco/training.hpp"

namespace pepco::config {

// Flat `key = value` run configuration. Every key has a default; unknown keys
// are rejected on load and on override.
class RunConfig {
 public:
  RunConfig();

  static RunConfig from_text(std::string_view text);
  static RunConfig from_file(const std::filesystem::path& path);

  void set(std::string_view key, std::string_view value);
  // `key=value` as given on the command line.
  void apply_override(std::string_view assignment);
  const std::string& get(std::string_view key) const;
  bool known(std::string_view key) const;

  // Canonical text with every key, lambda resolved against the task.
  std::string to_text() const;

  std::filesystem::path dataset() const;
  std::filesystem::path out_dir() const;
  data::TaskKind task() const;
  data::SplitRatios ratios() const;
  train::TrainConfig train_config() const;

 private:
  std::vector<std::pair<std::string, std::string>> entries_;
};

}  // namespace pepco::config
