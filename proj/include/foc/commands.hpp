// Implementations behind the `foc` command-line subcommands.
#pragma once

#include <filesystem>
#include <iosfwd>
#include <optional>
#include <string>

#include "foc/config.hpp"

namespace foc {

inline constexpr int kExitOk = 0;
inline constexpr int kExitUsage = 1;
inline constexpr int kExitRuntime = 2;

struct TrainOutputs {
  std::filesystem::path checkpoint;
  std::filesystem::path metrics_log;
  std::filesystem::path manifest;
};

void cmd_gen_data(const RunConfig& config, const std::filesystem::path& out, std::ostream& log);

// `init` optionally seeds the model from an existing checkpoint (e.g. a
// pretext run before fine-tuning).
TrainOutputs cmd_train(const RunConfig& config, const std::filesystem::path& data_path,
                       const std::filesystem::path& out_dir, const std::optional<std::filesystem::path>& init,
                       std::ostream& log);

// Returns the metrics document as pretty JSON text.
std::string cmd_eval(const std::filesystem::path& checkpoint, const std::filesystem::path& data_path,
                     const RunConfig& config);

void cmd_report(const std::filesystem::path& metrics_log, const std::filesystem::path& out,
                const std::optional<std::filesystem::path>& eval_doc,
                const std::optional<std::filesystem::path>& scatter_out);

std::string version();

}  // namespace foc
