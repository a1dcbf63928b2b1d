#include "foc/eval.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <stdexcept>
#include <string>

namespace foc {

std::int64_t ConfusionMatrix::total() const {
  std::int64_t s = 0;
  for (auto c : counts) s += c;
  return s;
}

ConfusionMatrix confusion(std::span<const int> pred, std::span<const int> ref, std::size_t rows, std::size_t cols) {
  if (pred.size() != ref.size()) throw std::invalid_argument("confusion: prediction/reference length mismatch");
  ConfusionMatrix cm{rows, cols, std::vector<std::int64_t>(rows * cols, 0)};
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || static_cast<std::size_t>(pred[i]) >= rows || ref[i] < 0 ||
        static_cast<std::size_t>(ref[i]) >= cols) {
      throw std::out_of_range("confusion: index out of range at sample " + std::to_string(i));
    }
    ++cm.at(static_cast<std::size_t>(pred[i]), static_cast<std::size_t>(ref[i]));
  }
  return cm;
}

std::vector<int> hungarian_min_cost(std::span<const std::int64_t> cost, std::size_t n) {
  if (cost.size() != n * n) throw std::invalid_argument("hungarian: cost matrix is not n x n");
  if (n == 0) return {};
  // Potentials formulation, 1-indexed; p[j] is the row matched to column j.
  constexpr std::int64_t inf = std::numeric_limits<std::int64_t>::max() / 4;
  std::vector<std::int64_t> u(n + 1, 0), v(n + 1, 0);
  std::vector<std::size_t> p(n + 1, 0), way(n + 1, 0);
  for (std::size_t i = 1; i <= n; ++i) {
    p[0] = i;
    std::size_t j0 = 0;
    std::vector<std::int64_t> minv(n + 1, inf);
    std::vector<char> used(n + 1, 0);
    do {
      used[j0] = 1;
      const std::size_t i0 = p[j0];
      std::int64_t delta = inf;
      std::size_t j1 = 0;
      for (std::size_t j = 1; j <= n; ++j) {
        if (used[j]) continue;
        const std::int64_t cur = cost[(i0 - 1) * n + (j - 1)] - u[i0] - v[j];
        if (cur < minv[j]) {
          minv[j] = cur;
          way[j] = j0;
        }
        if (minv[j] < delta) {
          delta = minv[j];
          j1 = j;
        }
      }
      for (std::size_t j = 0; j <= n; ++j) {
        if (used[j]) {
          u[p[j]] += delta;
          v[j] -= delta;
        } else {
          minv[j] -= delta;
        }
      }
      j0 = j1;
    } while (p[j0] != 0);
    do {
      const std::size_t j1 = way[j0];
      p[j0] = p[j1];
      j0 = j1;
    } while (j0 != 0);
  }
  std::vector<int> assign(n, -1);
  for (std::size_t j = 1; j <= n; ++j) assign[p[j] - 1] = static_cast<int>(j - 1);
  return assign;
}

namespace {

// Maximum total weight over perfect matchings of rows x cols of `w` (width k).
std::int64_t max_weight(const std::vector<std::int64_t>& w, std::size_t k, std::span<const std::size_t> rows,
                        std::span<const std::size_t> cols) {
  const std::size_t n = rows.size();
  if (n == 0) return 0;
  std::vector<std::int64_t> cost(n * n);
  for (std::size_t a = 0; a < n; ++a) {
    for (std::size_t b = 0; b < n; ++b) cost[a * n + b] = -w[rows[a] * k + cols[b]];
  }
  const auto assign = hungarian_min_cost(cost, n);
  std::int64_t total = 0;
  for (std::size_t a = 0; a < n; ++a) total += w[rows[a] * k + cols[static_cast<std::size_t>(assign[a])]];
  return total;
}

}  // namespace

PermutationResult best_permutation_mapping(const ConfusionMatrix& cm) {
  if (cm.rows != cm.cols) {
    throw std::invalid_argument("best_permutation_mapping: confusion matrix must be square, got " +
                                std::to_string(cm.rows) + "x" + std::to_string(cm.cols));
  }
  const std::size_t k = cm.rows;
  std::vector<std::size_t> rows(k), cols(k);
  for (std::size_t i = 0; i < k; ++i) rows[i] = cols[i] = i;
  const std::int64_t optimum = max_weight(cm.counts, k, rows, cols);

  // Fix clusters in order, each to the smallest class that keeps the optimum reachable.
  PermutationResult result;
  result.mapping.kind = MappingKind::permutation;
  result.mapping.assign.assign(k, -1);
  std::int64_t fixed = 0;
  std::vector<std::size_t> free_cols = cols;
  for (std::size_t c = 0; c < k; ++c) {
    std::span<const std::size_t> rest_rows(rows.data() + c + 1, k - c - 1);
    for (std::size_t idx = 0; idx < free_cols.size(); ++idx) {
      const std::size_t j = free_cols[idx];
      std::vector<std::size_t> rest_cols = free_cols;
      rest_cols.erase(rest_cols.begin() + static_cast<std::ptrdiff_t>(idx));
      const std::int64_t here = fixed + cm(c, j);
      if (here + max_weight(cm.counts, k, rest_rows, rest_cols) == optimum) {
        result.mapping.assign[c] = static_cast<int>(j);
        fixed = here;
        free_cols = std::move(rest_cols);
        break;
      }
    }
  }
  const std::int64_t total = cm.total();
  result.accuracy = total > 0 ? static_cast<double>(optimum) / static_cast<double>(total) : 0.0;
  return result;
}

ClusterMapping majority_mapping(const ConfusionMatrix& cm) {
  ClusterMapping m;
  m.kind = MappingKind::majority;
  m.assign.assign(cm.rows, 0);
  for (std::size_t r = 0; r < cm.rows; ++r) {
    std::size_t best = 0;
    for (std::size_t c = 1; c < cm.cols; ++c) {
      if (cm(r, c) > cm(r, best)) best = c;
    }
    m.assign[r] = static_cast<int>(best);
  }
  return m;
}

std::vector<int> apply_mapping(std::span<const int> pred, const ClusterMapping& mapping) {
  std::vector<int> out(pred.size());
  for (std::size_t i = 0; i < pred.size(); ++i) {
    if (pred[i] < 0 || static_cast<std::size_t>(pred[i]) >= mapping.assign.size()) {
      throw std::out_of_range("apply_mapping: cluster " + std::to_string(pred[i]) + " not covered by mapping of size " +
                              std::to_string(mapping.assign.size()));
    }
    out[i] = mapping.assign[static_cast<std::size_t>(pred[i])];
  }
  return out;
}

double accuracy(std::span<const int> pred, std::span<const int> ref) {
  if (pred.size() != ref.size()) throw std::invalid_argument("accuracy: length mismatch");
  if (pred.empty()) return 0.0;
  std::size_t hit = 0;
  for (std::size_t i = 0; i < pred.size(); ++i) hit += pred[i] == ref[i];
  return static_cast<double>(hit) / static_cast<double>(pred.size());
}

double macro_f1(std::span<const int> mapped_pred, std::span<const int> ref, std::size_t num_classes) {
  if (mapped_pred.size() != ref.size()) throw std::invalid_argument("macro_f1: length mismatch");
  if (num_classes == 0) return 0.0;
  std::vector<double> tp(num_classes, 0.0), fp(num_classes, 0.0), fn(num_classes, 0.0);
  for (std::size_t i = 0; i < ref.size(); ++i) {
    const int p = mapped_pred[i], r = ref[i];
    if (p < 0 || r < 0 || static_cast<std::size_t>(p) >= num_classes || static_cast<std::size_t>(r) >= num_classes) {
      throw std::out_of_range("macro_f1: class index out of range at sample " + std::to_string(i));
    }
    if (p == r) {
      tp[static_cast<std::size_t>(p)] += 1.0;
    } else {
      fp[static_cast<std::size_t>(p)] += 1.0;
      fn[static_cast<std::size_t>(r)] += 1.0;
    }
  }
  double sum = 0.0;
  for (std::size_t c = 0; c < num_classes; ++c) {
    const double precision = tp[c] + fp[c] > 0.0 ? tp[c] / (tp[c] + fp[c]) : 0.0;
    const double recall = tp[c] + fn[c] > 0.0 ? tp[c] / (tp[c] + fn[c]) : 0.0;
    if (precision + recall > 0.0) sum += 2.0 * precision * recall / (precision + recall);
  }
  return sum / static_cast<double>(num_classes);
}

ConsistencyReport consistency(std::span<const int> clusters, std::span<const int> components,
                              std::span<const int> exclude) {
  if (clusters.size() != components.size()) throw std::invalid_argument("consistency: length mismatch");
  const std::set<int> skip(exclude.begin(), exclude.end());
  std::map<int, std::map<int, std::size_t>> tally;
  std::size_t evaluated = 0;
  for (std::size_t i = 0; i < clusters.size(); ++i) {
    if (skip.contains(components[i])) continue;
    ++tally[clusters[i]][components[i]];
    ++evaluated;
  }

  ConsistencyReport report;
  report.evaluated = evaluated;
  std::size_t consistent_total = 0;
  for (const auto& [cluster, comps] : tally) {
    ClusterConsistency cc;
    cc.cluster = cluster;
    for (const auto& [comp, count] : comps) {
      cc.size += count;
      if (count > cc.consistent) {  // map order makes ties go to the lowest id
        cc.consistent = count;
        cc.majority_component = comp;
      }
    }
    cc.value = static_cast<double>(cc.consistent) / static_cast<double>(cc.size);
    consistent_total += cc.consistent;
    report.per_cluster.push_back(cc);
  }
  if (evaluated == 0) return report;
  report.overall = static_cast<double>(consistent_total) / static_cast<double>(evaluated);
  double mean = 0.0;
  for (const auto& cc : report.per_cluster) mean += cc.value;
  mean /= static_cast<double>(report.per_cluster.size());
  double var = 0.0;
  for (const auto& cc : report.per_cluster) var += (cc.value - mean) * (cc.value - mean);
  report.cluster_mean = mean;
  report.cluster_stddev = std::sqrt(var / static_cast<double>(report.per_cluster.size()));
  return report;
}

}  // namespace foc
