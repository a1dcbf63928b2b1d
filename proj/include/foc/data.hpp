// Datasets, synthetic fuzzy mixtures, augmentation, triplet batches and the
// restricted-ratio epoch planner.
#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "foc/random.hpp"
#include "foc/tensor.hpp"

namespace foc {

enum class Split { labeled, unlabeled, validation };

const char* to_string(Split s);
Split parse_split(const std::string& s);

class DataError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct Dataset {
  std::size_t dim = 0;
  std::size_t num_classes = 0;  // k_gt; width of the annotation block when present
  std::vector<long> ids;
  std::vector<double> features;  // n x dim, row-major
  std::vector<std::optional<int>> labels;
  std::vector<Split> split;
  std::vector<std::optional<int>> component;
  std::vector<double> annotation;  // n x num_classes, or empty

  std::size_t size() const { return split.size(); }
  bool has_annotation() const { return !annotation.empty(); }
  bool has_components() const;
  std::span<const double> row(std::size_t i) const { return {features.data() + i * dim, dim}; }

  std::vector<std::size_t> rows_with(Split s) const;
  // Distinct labels over rows tagged labeled.
  std::vector<int> labeled_classes() const;
  nd::Tensor feature_tensor(std::span<const std::size_t> rows) const;

  // Throws DataError describing the first violated invariant.
  void validate() const;

  bool operator==(const Dataset&) const = default;
};

struct ComponentSpec {
  std::vector<double> mean;
  double scale = 1.0;  // isotropic standard deviation
  std::size_t count = 0;
  std::vector<double> annotation;  // distribution over classes

  bool fuzzy() const;
};

struct GeneratorConfig {
  std::vector<ComponentSpec> components;
  // Fractions of each certain component; the remainder is unlabeled.
  double labeled_fraction = 0.1;
  double validation_fraction = 0.2;

  // Two certain classes at (+-3, 0) and one 50/50 fuzzy component at the origin.
  static GeneratorConfig fuzzy_three_blobs(std::size_t per_component = 200, double scale = 0.5);
  void validate() const;
};

Dataset generate_fuzzy_mixture(const GeneratorConfig& config, std::uint64_t seed);

void save_dataset(const Dataset& data, const std::filesystem::path& path);
void write_dataset(const Dataset& data, std::ostream& out);
Dataset load_dataset(const std::filesystem::path& path);
Dataset read_dataset(std::istream& in);

struct AugmentationPolicy {
  double noise_sigma = 0.2;
  double scale_jitter = 0.05;

  void validate() const;
};

// x * u + n with u ~ U[1 - s, 1 + s] and n ~ N(0, sigma^2 I).
std::vector<double> augment(std::span<const double> x, const AugmentationPolicy& policy, Rng& rng);

struct TripletBatch {
  nd::Tensor x1, x2, x3;
  std::vector<int> labels;  // -1 for rows without a training label
  std::vector<bool> labeled_mask;
  // Dataset rows the three views were drawn from; x3 of unlabeled rows is -1.
  std::vector<long> source1, source2, source3;

  std::size_t size() const { return labels.size(); }
  std::vector<std::size_t> labeled_rows() const;
};

// Rows of one planned batch, by role.
struct PlannedBatch {
  std::vector<std::size_t> labeled;
  std::vector<std::size_t> unlabeled;

  std::size_t size() const { return labeled.size() + unlabeled.size(); }
};

TripletBatch make_triplet_batch(const Dataset& data, const PlannedBatch& rows,
                                const AugmentationPolicy& policy, Rng& rng, bool supervised_aug,
                                std::size_t repeats);

struct SamplerConfig {
  std::size_t batch_size = 8;
  double ratio = 0.5;
  std::size_t repeats = 3;

  std::size_t unlabeled_slots() const;
  void validate() const;
};

// Plans epochs over a fixed dataset. The unlabeled cursor persists between
// calls to plan_epoch so that all unlabeled rows are eventually visited.
class EpochPlanner {
 public:
  EpochPlanner(const SamplerConfig& config, const Dataset& data, std::uint64_t seed);

  std::vector<PlannedBatch> plan_epoch();

  std::size_t labeled_count() const { return labeled_.size(); }
  std::size_t unlabeled_count() const { return unlabeled_.size(); }

 private:
  std::size_t next_unlabeled();

  SamplerConfig config_;
  Rng rng_;
  std::vector<std::size_t> labeled_;
  std::vector<std::size_t> unlabeled_;
  std::vector<std::size_t> unlabeled_order_;
  std::size_t cursor_ = 0;
};

}  // namespace foc
