#pragma once

#include <cstddef>
#include <cstdint>
#include <string>
#include <vector>

#include "rbo/correlation.hpp"
#include "rbo/geometry.hpp"
#include "rbo/graph.hpp"
#include "rbo/keyvalue.hpp"
#include "rbo/raster.hpp"

namespace rbo {

// Toy Siamese tracker: a shared conv backbone, a matching network (dw or pw
// correlation) and 1x1-conv classification / localization heads.
struct ModelConfig {
  corr::Mode mode = corr::Mode::dw;
  std::size_t template_size = 64;
  std::size_t search_size = 128;
  std::size_t in_channels = 3;
  std::vector<std::size_t> channels{16, 32, 32};
  std::size_t kernel = 2;
  std::size_t layer_stride = 2;
  std::size_t head_hidden = 32;

  std::size_t total_stride() const;
  std::size_t receptive_field() const;
  std::size_t feature_size(std::size_t image_size) const;
  std::size_t feature_channels() const { return channels.back(); }
  std::size_t head_channels() const;
  geom::HeadGrid head_grid() const;

  void validate() const;
  void write(KeyValues& kv) const;
  static ModelConfig read(const KeyValues& kv);
  static const std::vector<std::string>& keys();
};

struct Param {
  std::string name;
  Tensor value;
};

struct ModelParams {
  ModelConfig config;
  std::vector<Param> params;

  // Uniform in [-1/sqrt(fan_in), 1/sqrt(fan_in)] for weights and biases.
  static ModelParams init(const ModelConfig& config, std::uint64_t seed);

  Tensor& at(const std::string& name);
  const Tensor& at(const std::string& name) const;
  std::size_t num_weights() const;
  void zero_grad();
  bool all_finite() const;
};

// Parameters recorded on a graph, in ModelParams order.
struct BoundModel {
  const ModelConfig* config = nullptr;
  std::vector<Var> params;
};

// Leaves accumulate into the tensors' grads (when they require grad).
BoundModel bind(Graph& g, ModelParams& model);
// Constant leaves, for inference.
BoundModel bind_frozen(Graph& g, const ModelParams& model);

struct HeadOutput {
  Var cls;         // [2,H,W] logits, channel 1 = foreground
  Var loc;         // [4,H,W] ltrb offsets in search pixels (exp-activated)
  Var similarity;  // matching-network output
  geom::HeadGrid grid;
};

Var image_input(Graph& g, const Raster& raster);
Var backbone(const BoundModel& m, Var image);
HeadOutput heads(const BoundModel& m, Var template_features, Var search_features);
HeadOutput forward(Graph& g, const BoundModel& m, const Raster& templ, const Raster& search);

}  // namespace rbo
