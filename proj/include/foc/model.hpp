// Shared MLP backbone with H copies each of a normal head (k_gt outputs) and
// an overclustering head (k_over outputs).
#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "foc/tensor.hpp"

namespace foc {

enum class HeadType { normal, over };

const char* to_string(HeadType t);

struct ModelConfig {
  std::size_t input_dim = 2;
  std::vector<std::size_t> hidden_dims = {64, 64};
  std::size_t k_gt = 2;
  std::size_t k_over = 10;
  std::size_t head_copies = 5;

  // Throws std::invalid_argument on hard violations.
  void validate() const;
  // Empty when k_over lies in [5 k_gt, 10 k_gt].
  std::string overclustering_warning() const;

  bool operator==(const ModelConfig&) const = default;
};

struct Dense {
  nd::Tensor weight;  // fan_in x fan_out
  nd::Tensor bias;    // 1 x fan_out
};

struct ModelState {
  ModelConfig config;
  std::vector<Dense> backbone;
  std::vector<Dense> normal_heads;
  std::vector<Dense> over_heads;
  std::uint64_t seed = 0;

  std::vector<Dense>& heads(HeadType t) { return t == HeadType::normal ? normal_heads : over_heads; }
  const std::vector<Dense>& heads(HeadType t) const {
    return t == HeadType::normal ? normal_heads : over_heads;
  }
  std::size_t feature_dim() const;

  // Deep copy; the result shares no storage with *this.
  ModelState clone() const;

  // Named parameters in a fixed order (backbone, normal heads, over heads).
  std::vector<std::pair<std::string, nd::Tensor>> named_parameters() const;
  std::vector<nd::Tensor> backbone_parameters() const;
  std::vector<nd::Tensor> head_parameters(HeadType t) const;
};

ModelState init_model(const ModelConfig& config, std::uint64_t seed);

// Re-draws only the given head type. Backbone and the other head type keep
// their values.
void reset_heads(ModelState& state, HeadType type, std::uint64_t seed);

nd::Tensor backbone_forward(const ModelState& state, const nd::Tensor& x);
nd::Tensor head_forward(const ModelState& state, const nd::Tensor& features, HeadType type,
                        std::size_t head_index);
nd::Tensor forward(const ModelState& state, const nd::Tensor& x, HeadType type, std::size_t head_index);

// Row-wise argmax; ties go to the lowest index.
std::vector<int> argmax_rows(const nd::Tensor& probs);
std::vector<int> predict(const ModelState& state, const nd::Tensor& x, HeadType type,
                         std::size_t head_index);

// FNV-1a over the raw bytes of the backbone parameters.
std::uint64_t backbone_hash(const ModelState& state);

}  // namespace foc
