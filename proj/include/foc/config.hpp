// Flat INI-style run configuration shared by every CLI command.
//
//   # comment
//   seed = 7
//   [train]
//   epochs = 200        -> key "train.epochs"
//
// Every key has a default; unknown or repeated keys are rejected.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <vector>

#include "foc/data.hpp"
#include "foc/model.hpp"
#include "foc/trainer.hpp"

namespace foc {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

struct RunConfig {
  std::uint64_t seed = 0;
  // input_dim and k_gt come from the dataset at train time.
  ModelConfig model;
  TrainConfig train;
  GeneratorConfig generator = GeneratorConfig::fuzzy_three_blobs();
  std::vector<int> exclude_components;

  void validate() const;
  // Canonical "key = value" listing of every key, in documentation order.
  std::string dump() const;
};

RunConfig parse_run_config(std::istream& in);
RunConfig parse_run_config_string(const std::string& text);
RunConfig load_run_config(const std::filesystem::path& path);

// All recognised keys with their default values, one per line.
std::string default_config_text();

}  // namespace foc
