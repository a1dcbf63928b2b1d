// Training schedule: pretext, fine-tuning with a head-only window, and the
// single-stage warm-up variant; head selection; checkpoints and metric logs.
#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <iosfwd>
#include <string>
#include <vector>

#include "foc/data.hpp"
#include "foc/losses.hpp"
#include "foc/model.hpp"

namespace foc {

enum class Stage { pretext, finetune, warmup_single_stage };
enum class FitSplit { labeled, unlabeled, train };

const char* to_string(Stage s);
Stage parse_stage(const std::string& s);
const char* to_string(FitSplit s);
FitSplit parse_fit_split(const std::string& s);

struct TrainConfig {
  Stage stage = Stage::warmup_single_stage;
  std::size_t epochs = 500;         // pretext or fine-tune epochs
  std::size_t warmup_epochs = 100;  // warmup_single_stage only
  double lr = 1e-4;
  std::size_t head_only_epochs = 100;
  double head_only_lr = 1e-3;
  LossWeights weights;
  SamplerConfig sampler;
  AugmentationPolicy augmentation;
  bool supervised_aug = true;
  FitSplit fit_split = FitSplit::train;
  std::uint64_t seed = 0;

  void validate() const;
};

struct MetricsRecord {
  std::size_t epoch = 0;  // 1-based, counted across phases
  std::string phase;      // pretext | head_only | full
  // Mean per-batch losses of the active head type, averaged over head copies.
  // NaN when that head type had no batch (or no labeled rows) this epoch.
  double normal_ce = 0.0;
  double normal_mi_loss = 0.0;
  double over_ce_inv = 0.0;
  double over_mi_loss = 0.0;
  std::vector<double> normal_val_acc;
  std::vector<double> over_val_acc;
  std::size_t selected_normal = 0;
  std::size_t selected_over = 0;
  std::size_t rows_processed = 0;
  std::size_t batches = 0;
  double wall_seconds = 0.0;  // kept out of the log file

  // Equality on everything but wall-clock time.
  bool same_values(const MetricsRecord& other) const;
};

struct HeadSelection {
  std::size_t normal = 0;
  std::size_t over = 0;
  std::vector<double> normal_acc;  // permutation-mapped validation accuracy
  std::vector<double> over_acc;    // majority-mapped validation accuracy
};

// Rows used to fit the overclustering majority mapping.
std::vector<std::size_t> fit_rows(const Dataset& data, FitSplit split);

HeadSelection select_best_head(const ModelState& model, const Dataset& data, FitSplit fit_split);

struct TrainResult {
  ModelState model;
  std::vector<MetricsRecord> metrics;
};

using EpochCallback = std::function<void(const MetricsRecord&)>;

TrainResult run_pretext(ModelState model, const Dataset& data, const TrainConfig& config,
                        const EpochCallback& on_epoch = {});
TrainResult run_finetune(ModelState model, const Dataset& data, const TrainConfig& config,
                         const EpochCallback& on_epoch = {});
TrainResult run_warmup_single_stage(ModelState model, const Dataset& data, const TrainConfig& config,
                                    const EpochCallback& on_epoch = {});
// Dispatches on config.stage.
TrainResult run_stage(ModelState model, const Dataset& data, const TrainConfig& config,
                      const EpochCallback& on_epoch = {});

class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void save_checkpoint(const ModelState& model, const std::filesystem::path& path);
void write_checkpoint(const ModelState& model, std::ostream& out);
ModelState load_checkpoint(const std::filesystem::path& path);
ModelState load_checkpoint(const std::filesystem::path& path, const ModelConfig& expected);
ModelState read_checkpoint(std::istream& in);

// Line-delimited metrics log: one header record then one record per epoch.
std::string metrics_header_line(const TrainConfig& config);
std::string metrics_line(const MetricsRecord& record);
MetricsRecord parse_metrics_line(const std::string& line);
bool is_metrics_header(const std::string& line);

}  // namespace foc
