#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seqft/ops.hpp"
#include "seqft/tensor.hpp"

namespace seqft {

struct DenseNetConfig {
  int64_t input_channels = 1;
  int64_t input_height = 16;
  int64_t input_width = 16;
  int64_t initial_kernel = 3;    // stem conv, padded to (kernel-1)/2
  int64_t initial_stride = 1;
  int64_t initial_channels = 8;
  int64_t num_blocks = 2;
  std::vector<int64_t> layers_per_block = {2, 2};
  int64_t growth_rate = 4;               // channels added per dense layer
  double transition_compression = 0.5;   // in (0, 1]
  int64_t num_classes = 3;
};

/// The freezing granularity: one weighted layer (conv or fully connected)
/// together with its adjacent batch-norm parameters. Index 0 is closest to
/// the input; the head group is always last.
struct LayerGroup {
  int index = 0;
  std::string name;
  std::vector<Tensor> parameters;
  bool is_head = false;
};

struct ConvUnit {
  Tensor weight;  // [out x in x kh x kw]
  int stride = 1;
  int padding = 0;
};

struct NormUnit {
  Tensor gamma;
  Tensor beta;
  std::vector<double> running_mean;
  std::vector<double> running_var;
};

// One dense layer: batch_norm -> relu -> conv3x3 producing growth_rate
// channels, concatenated onto the block's running feature map.
struct DenseUnit {
  NormUnit norm;
  ConvUnit conv;
};

// Between blocks: batch_norm -> relu -> conv1x1 (compression) -> avg_pool 2x2.
struct TransitionUnit {
  NormUnit norm;
  ConvUnit conv;
};

/// Dense-block classification network. Parameters are shared Tensor handles;
/// copying a Network would alias them, so Network is move-only and clone()
/// produces a deep copy.
class Network {
 public:
  Network() = default;
  Network(const Network&) = delete;
  Network& operator=(const Network&) = delete;
  Network(Network&&) = default;
  Network& operator=(Network&&) = default;

  DenseNetConfig config;
  ConvUnit stem;
  NormUnit stem_norm;
  std::vector<std::vector<DenseUnit>> blocks;
  std::vector<TransitionUnit> transitions;
  NormUnit final_norm;
  Tensor head_weight;  // [features x num_classes]
  Tensor head_bias;    // [num_classes]
  std::vector<LayerGroup> groups;

  /// Raw logits [N x num_classes]. In training mode batch statistics drive
  /// the norm layers and their running statistics are updated; eval mode
  /// reads running statistics and performs no mutation.
  Tensor forward(const Tensor& batch, bool training);

  /// All trainable parameters, in group order.
  std::vector<Tensor> parameters() const;

  /// Batch-norm running statistics, in depth order. Not trainable, but part
  /// of the forward-identical state.
  std::vector<std::pair<std::string, std::vector<double>*>> named_buffers();
  std::vector<std::pair<std::string, const std::vector<double>*>> named_buffers() const;

  int group_count() const { return static_cast<int>(groups.size()); }

  Network clone() const;
};

void validate_config(const DenseNetConfig& config);

/// Builds the network with seeded He-style initialization (gamma=1, beta=0,
/// bias=0). Two builds with the same seed are bitwise identical.
Network build_densenet_lite(const DenseNetConfig& config, uint64_t seed);

/// Number of layers with trainable weights, excluding batch norm: the convs
/// plus the fully connected head. Equals the number of layer groups.
int count_weighted_layers(const Network& network);

/// Group count the config would build, without building it.
int layer_group_count(const DenseNetConfig& config);

/// Transfer-learning head swap: every non-head parameter keeps its exact
/// value, the head is freshly initialized for the new class count, and the
/// group structure is preserved with the new head last.
Network replace_head(const Network& network, int64_t new_num_classes, uint64_t seed);

}  // namespace seqft
