// Cluster evaluation: confusion matrices, cluster-to-class mappings,
// accuracy, macro-F1 and component consistency.
#pragma once

#include <cstdint>
#include <span>
#include <vector>

namespace foc {

struct ConfusionMatrix {
  std::size_t rows = 0;  // predicted clusters
  std::size_t cols = 0;  // reference classes
  std::vector<std::int64_t> counts;

  std::int64_t operator()(std::size_t r, std::size_t c) const { return counts[r * cols + c]; }
  std::int64_t& at(std::size_t r, std::size_t c) { return counts[r * cols + c]; }
  std::int64_t total() const;
};

enum class MappingKind { permutation, majority };

struct ClusterMapping {
  std::vector<int> assign;  // cluster -> class
  MappingKind kind = MappingKind::permutation;
};

struct PermutationResult {
  ClusterMapping mapping;
  double accuracy = 0.0;
};

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> ref, std::size_t rows, std::size_t cols);

// Exact maximum-weight assignment; among optimal permutations the
// lexicographically smallest is returned.
PermutationResult best_permutation_mapping(const ConfusionMatrix& cm);

// Each cluster goes to its most frequent class (ties and empty rows -> lowest index).
ClusterMapping majority_mapping(const ConfusionMatrix& cm);

std::vector<int> apply_mapping(std::span<const int> pred, const ClusterMapping& mapping);

double accuracy(std::span<const int> pred, std::span<const int> ref);

double macro_f1(std::span<const int> mapped_pred, std::span<const int> ref, std::size_t num_classes);

struct ClusterConsistency {
  int cluster = 0;
  std::size_t size = 0;
  std::size_t consistent = 0;
  int majority_component = 0;
  double value = 0.0;
};

struct ConsistencyReport {
  double overall = 0.0;  // size-weighted
  std::vector<ClusterConsistency> per_cluster;  // non-empty clusters, ascending id
  double cluster_mean = 0.0;  // unweighted over clusters
  double cluster_stddev = 0.0;
  std::size_t evaluated = 0;
};

// A sample is consistent when its component equals the majority component of
// its cluster. Samples whose component is listed in `exclude` are skipped.
ConsistencyReport consistency(std::span<const int> clusters, std::span<const int> components,
                              std::span<const int> exclude = {});

// Minimum-cost assignment of a square integer cost matrix (row -> column).
std::vector<int> hungarian_min_cost(std::span<const std::int64_t> cost, std::size_t n);

}  // namespace foc
