#include "foc/model.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

#include "foc/random.hpp"

namespace foc {

const char* to_string(HeadType t) { return t == HeadType::normal ? "normal" : "over"; }

void ModelConfig::validate() const {
  if (input_dim == 0) throw std::invalid_argument("model: input_dim must be > 0");
  for (auto h : hidden_dims) {
    if (h == 0) throw std::invalid_argument("model: hidden layer widths must be > 0");
  }
  if (k_gt < 2) throw std::invalid_argument("model: k_gt must be >= 2");
  if (k_over <= k_gt) {
    throw std::invalid_argument("model: k_over (" + std::to_string(k_over) +
                                ") must exceed k_gt (" + std::to_string(k_gt) + ")");
  }
  if (head_copies == 0) throw std::invalid_argument("model: head_copies must be >= 1");
}

std::string ModelConfig::overclustering_warning() const {
  if (k_over < 5 * k_gt || k_over > 10 * k_gt) {
    return "k_over=" + std::to_string(k_over) + " outside the recommended range [" +
           std::to_string(5 * k_gt) + ", " + std::to_string(10 * k_gt) + "]";
  }
  return {};
}

namespace {

Dense make_dense(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double a = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  std::vector<double> w(fan_in * fan_out);
  for (double& v : w) v = rng.uniform(-a, a);
  return Dense{nd::Tensor({fan_in, fan_out}, std::move(w), true), nd::Tensor::zeros(1, fan_out, true)};
}

std::vector<Dense> make_heads(std::size_t feat, std::size_t width, std::size_t copies, Rng& rng) {
  std::vector<Dense> heads;
  heads.reserve(copies);
  for (std::size_t h = 0; h < copies; ++h) heads.push_back(make_dense(feat, width, rng));
  return heads;
}

Dense clone_dense(const Dense& d) {
  return Dense{nd::Tensor(d.weight.shape(), {d.weight.values().begin(), d.weight.values().end()}, true),
               nd::Tensor(d.bias.shape(), {d.bias.values().begin(), d.bias.values().end()}, true)};
}

std::uint64_t head_seed(std::uint64_t seed, HeadType t) {
  return derive_seed(seed, t == HeadType::normal ? "heads.normal" : "heads.over");
}

}  // namespace

std::size_t ModelState::feature_dim() const {
  return config.hidden_dims.empty() ? config.input_dim : config.hidden_dims.back();
}

ModelState ModelState::clone() const {
  ModelState out;
  out.config = config;
  out.seed = seed;
  for (const auto& d : backbone) out.backbone.push_back(clone_dense(d));
  for (const auto& d : normal_heads) out.normal_heads.push_back(clone_dense(d));
  for (const auto& d : over_heads) out.over_heads.push_back(clone_dense(d));
  return out;
}

std::vector<std::pair<std::string, nd::Tensor>> ModelState::named_parameters() const {
  std::vector<std::pair<std::string, nd::Tensor>> out;
  for (std::size_t i = 0; i < backbone.size(); ++i) {
    out.emplace_back("backbone." + std::to_string(i) + ".weight", backbone[i].weight);
    out.emplace_back("backbone." + std::to_string(i) + ".bias", backbone[i].bias);
  }
  for (HeadType t : {HeadType::normal, HeadType::over}) {
    const auto& hs = heads(t);
    for (std::size_t i = 0; i < hs.size(); ++i) {
      const std::string prefix = std::string(to_string(t)) + "_head." + std::to_string(i);
      out.emplace_back(prefix + ".weight", hs[i].weight);
      out.emplace_back(prefix + ".bias", hs[i].bias);
    }
  }
  return out;
}

std::vector<nd::Tensor> ModelState::backbone_parameters() const {
  std::vector<nd::Tensor> out;
  for (const auto& d : backbone) {
    out.push_back(d.weight);
    out.push_back(d.bias);
  }
  return out;
}

std::vector<nd::Tensor> ModelState::head_parameters(HeadType t) const {
  std::vector<nd::Tensor> out;
  for (const auto& d : heads(t)) {
    out.push_back(d.weight);
    out.push_back(d.bias);
  }
  return out;
}

ModelState init_model(const ModelConfig& config, std::uint64_t seed) {
  config.validate();
  ModelState state;
  state.config = config;
  state.seed = seed;
  Rng rng(derive_seed(seed, "backbone"));
  std::size_t fan_in = config.input_dim;
  for (auto width : config.hidden_dims) {
    state.backbone.push_back(make_dense(fan_in, width, rng));
    fan_in = width;
  }
  for (HeadType t : {HeadType::normal, HeadType::over}) reset_heads(state, t, seed);
  return state;
}

void reset_heads(ModelState& state, HeadType type, std::uint64_t seed) {
  Rng rng(head_seed(seed, type));
  const std::size_t width = type == HeadType::normal ? state.config.k_gt : state.config.k_over;
  state.heads(type) = make_heads(state.feature_dim(), width, state.config.head_copies, rng);
}

nd::Tensor backbone_forward(const ModelState& state, const nd::Tensor& x) {
  if (x.cols() != state.config.input_dim) {
    throw nd::ShapeError("forward: input has " + std::to_string(x.cols()) + " columns, model expects " +
                         std::to_string(state.config.input_dim));
  }
  nd::Tensor h = x;
  for (const auto& layer : state.backbone) h = nd::relu(nd::affine(h, layer.weight, layer.bias));
  return h;
}

nd::Tensor head_forward(const ModelState& state, const nd::Tensor& features, HeadType type,
                        std::size_t head_index) {
  const auto& hs = state.heads(type);
  if (head_index >= hs.size()) {
    throw std::out_of_range("forward: head index " + std::to_string(head_index) + " >= " +
                            std::to_string(hs.size()));
  }
  const auto& head = hs[head_index];
  return nd::softmax_rows(nd::affine(features, head.weight, head.bias));
}

nd::Tensor forward(const ModelState& state, const nd::Tensor& x, HeadType type, std::size_t head_index) {
  if (head_index >= state.heads(type).size()) {
    throw std::out_of_range("forward: head index " + std::to_string(head_index) + " out of range");
  }
  return head_forward(state, backbone_forward(state, x), type, head_index);
}

std::vector<int> argmax_rows(const nd::Tensor& probs) {
  std::vector<int> out(probs.rows());
  for (std::size_t i = 0; i < probs.rows(); ++i) {
    std::size_t best = 0;
    for (std::size_t j = 1; j < probs.cols(); ++j) {
      if (probs(i, j) > probs(i, best)) best = j;
    }
    out[i] = static_cast<int>(best);
  }
  return out;
}

std::vector<int> predict(const ModelState& state, const nd::Tensor& x, HeadType type,
                         std::size_t head_index) {
  return argmax_rows(forward(state, x.detach(), type, head_index));
}

std::uint64_t backbone_hash(const ModelState& state) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : state.backbone_parameters()) {
    for (double v : p.values()) {
      unsigned char bytes[sizeof(double)];
      std::memcpy(bytes, &v, sizeof v);
      for (unsigned char b : bytes) {
        h ^= b;
        h *= 0x100000001b3ULL;
      }
    }
  }
  return h;
}

}  // namespace foc
