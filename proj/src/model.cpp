#include "seqft/model.hpp"

#include <cmath>
#include <random>

#include "seqft/errors.hpp"

namespace seqft {

namespace {

Tensor he_normal(Shape shape, int64_t fan_in, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, std::sqrt(2.0 / static_cast<double>(fan_in)));
  Tensor t = Tensor::zeros(std::move(shape));
  for (double& v : t.data()) v = dist(rng);
  return t;
}

NormUnit make_norm(int64_t channels) {
  NormUnit norm;
  norm.gamma = Tensor::full({channels}, 1.0);
  norm.beta = Tensor::zeros({channels});
  norm.running_mean.assign(static_cast<std::size_t>(channels), 0.0);
  norm.running_var.assign(static_cast<std::size_t>(channels), 1.0);
  return norm;
}

void append_norm_params(LayerGroup& group, NormUnit& norm) {
  group.parameters.push_back(norm.gamma);
  group.parameters.push_back(norm.beta);
}

}  // namespace

void validate_config(const DenseNetConfig& c) {
  if (c.input_channels < 1 || c.input_height < 1 || c.input_width < 1)
    throw ConfigError("input dimensions must be positive");
  if (c.initial_kernel < 1 || c.initial_stride < 1 || c.initial_channels < 1)
    throw ConfigError("initial conv parameters must be positive");
  if (c.num_blocks < 0) throw ConfigError("num_blocks must be >= 0");
  if (static_cast<int64_t>(c.layers_per_block.size()) != c.num_blocks)
    throw ConfigError("layers_per_block length " + std::to_string(c.layers_per_block.size()) +
                      " does not match num_blocks " + std::to_string(c.num_blocks));
  for (int64_t l : c.layers_per_block) {
    if (l < 0) throw ConfigError("layers_per_block entries must be >= 0");
  }
  if (c.growth_rate < 1) throw ConfigError("growth_rate must be >= 1");
  if (c.transition_compression <= 0.0 || c.transition_compression > 1.0)
    throw ConfigError("transition_compression must be in (0, 1]");
  if (c.num_classes < 2) throw ConfigError("num_classes must be >= 2");

  const int64_t stem_pad = (c.initial_kernel - 1) / 2;
  int64_t height = (c.input_height + 2 * stem_pad - c.initial_kernel) / c.initial_stride + 1;
  int64_t width = (c.input_width + 2 * stem_pad - c.initial_kernel) / c.initial_stride + 1;
  if (c.input_height + 2 * stem_pad < c.initial_kernel ||
      c.input_width + 2 * stem_pad < c.initial_kernel || height < 1 || width < 1)
    throw ConfigError("initial conv collapses the spatial size below 1");
  int64_t channels = c.initial_channels;
  for (int64_t b = 0; b < c.num_blocks; ++b) {
    channels += c.layers_per_block[b] * c.growth_rate;
    if (b + 1 < c.num_blocks) {
      const auto compressed =
          static_cast<int64_t>(std::floor(c.transition_compression * static_cast<double>(channels)));
      if (compressed < 1)
        throw ConfigError("transition_compression collapses channel count to zero");
      if (height < 2 || width < 2)
        throw ConfigError("spatial size collapses below 1 before the final block (transition " +
                          std::to_string(b) + " cannot pool a " + std::to_string(height) + "x" +
                          std::to_string(width) + " map)");
      height = (height - 2) / 2 + 1;
      width = (width - 2) / 2 + 1;
      channels = compressed;
    }
  }
}

Network build_densenet_lite(const DenseNetConfig& config, uint64_t seed) {
  validate_config(config);
  std::mt19937_64 rng(seed);
  Network net;
  net.config = config;

  const int stem_pad = static_cast<int>((config.initial_kernel - 1) / 2);
  net.stem.weight = he_normal(
      {config.initial_channels, config.input_channels, config.initial_kernel, config.initial_kernel},
      config.input_channels * config.initial_kernel * config.initial_kernel, rng);
  net.stem.stride = static_cast<int>(config.initial_stride);
  net.stem.padding = stem_pad;
  net.stem_norm = make_norm(config.initial_channels);

  int64_t channels = config.initial_channels;
  {
    LayerGroup stem_group;
    stem_group.name = "stem";
    stem_group.parameters.push_back(net.stem.weight);
    append_norm_params(stem_group, net.stem_norm);
    net.groups.push_back(std::move(stem_group));
  }

  for (int64_t b = 0; b < config.num_blocks; ++b) {
    std::vector<DenseUnit> block;
    for (int64_t l = 0; l < config.layers_per_block[b]; ++l) {
      DenseUnit unit;
      unit.norm = make_norm(channels);
      unit.conv.weight =
          he_normal({config.growth_rate, channels, 3, 3}, channels * 9, rng);
      unit.conv.stride = 1;
      unit.conv.padding = 1;
      LayerGroup group;
      group.name = "block" + std::to_string(b) + ".dense" + std::to_string(l);
      append_norm_params(group, unit.norm);
      group.parameters.push_back(unit.conv.weight);
      net.groups.push_back(std::move(group));
      block.push_back(std::move(unit));
      channels += config.growth_rate;
    }
    net.blocks.push_back(std::move(block));

    if (b + 1 < config.num_blocks) {
      const auto compressed =
          static_cast<int64_t>(std::floor(config.transition_compression * static_cast<double>(channels)));
      TransitionUnit transition;
      transition.norm = make_norm(channels);
      transition.conv.weight = he_normal({compressed, channels, 1, 1}, channels, rng);
      transition.conv.stride = 1;
      transition.conv.padding = 0;
      LayerGroup group;
      group.name = "transition" + std::to_string(b);
      append_norm_params(group, transition.norm);
      group.parameters.push_back(transition.conv.weight);
      net.groups.push_back(std::move(group));
      net.transitions.push_back(std::move(transition));
      channels = compressed;
    }
  }

  // The post-block norm rides with the deepest non-head group so that
  // replace_head touches only the fully connected parameters.
  net.final_norm = make_norm(channels);
  append_norm_params(net.groups.back(), net.final_norm);

  net.head_weight = he_normal({channels, config.num_classes}, channels, rng);
  net.head_bias = Tensor::zeros({config.num_classes});
  {
    LayerGroup head_group;
    head_group.name = "head";
    head_group.is_head = true;
    head_group.parameters.push_back(net.head_weight);
    head_group.parameters.push_back(net.head_bias);
    net.groups.push_back(std::move(head_group));
  }
  for (std::size_t i = 0; i < net.groups.size(); ++i) net.groups[i].index = static_cast<int>(i);
  // A fresh network is fully trainable; freeze states narrow this later.
  for (LayerGroup& group : net.groups) {
    for (Tensor& p : group.parameters) p.set_requires_grad(true);
  }
  return net;
}

Tensor Network::forward(const Tensor& batch, bool training) {
  if (batch.shape().size() != 4 || batch.dim(1) != config.input_channels ||
      batch.dim(2) != config.input_height || batch.dim(3) != config.input_width) {
    throw DimensionError("forward expects [N x " + std::to_string(config.input_channels) + " x " +
                         std::to_string(config.input_height) + " x " +
                         std::to_string(config.input_width) + "], got " +
                         shape_to_string(batch.shape()));
  }
  Tensor x = conv2d(batch, stem.weight, stem.stride, stem.padding);
  x = batch_norm(x, stem_norm.gamma, stem_norm.beta, stem_norm.running_mean,
                 stem_norm.running_var, training);
  x = relu(x);

  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (DenseUnit& unit : blocks[b]) {
      Tensor y = batch_norm(x, unit.norm.gamma, unit.norm.beta, unit.norm.running_mean,
                            unit.norm.running_var, training);
      y = relu(y);
      y = conv2d(y, unit.conv.weight, unit.conv.stride, unit.conv.padding);
      x = concat_channels(x, y);
    }
    if (b < transitions.size()) {
      TransitionUnit& t = transitions[b];
      Tensor y = batch_norm(x, t.norm.gamma, t.norm.beta, t.norm.running_mean,
                            t.norm.running_var, training);
      y = relu(y);
      y = conv2d(y, t.conv.weight, t.conv.stride, t.conv.padding);
      x = avg_pool2d(y, 2, 2);
    }
  }

  x = batch_norm(x, final_norm.gamma, final_norm.beta, final_norm.running_mean,
                 final_norm.running_var, training);
  x = relu(x);
  x = global_avg_pool(x);
  return add_bias_rows(matmul(x, head_weight), head_bias);
}

std::vector<Tensor> Network::parameters() const {
  std::vector<Tensor> params;
  for (const LayerGroup& group : groups) {
    for (const Tensor& p : group.parameters) params.push_back(p);
  }
  return params;
}

std::vector<std::pair<std::string, std::vector<double>*>> Network::named_buffers() {
  std::vector<std::pair<std::string, std::vector<double>*>> buffers;
  auto add = [&buffers](const std::string& name, NormUnit& norm) {
    buffers.emplace_back(name + ".running_mean", &norm.running_mean);
    buffers.emplace_back(name + ".running_var", &norm.running_var);
  };
  add("stem.norm", stem_norm);
  for (std::size_t b = 0; b < blocks.size(); ++b) {
    for (std::size_t l = 0; l < blocks[b].size(); ++l) {
      add("block" + std::to_string(b) + ".dense" + std::to_string(l) + ".norm", blocks[b][l].norm);
    }
    if (b < transitions.size()) add("transition" + std::to_string(b) + ".norm", transitions[b].norm);
  }
  add("final.norm", final_norm);
  return buffers;
}

std::vector<std::pair<std::string, const std::vector<double>*>> Network::named_buffers() const {
  auto mutable_buffers = const_cast<Network*>(this)->named_buffers();
  std::vector<std::pair<std::string, const std::vector<double>*>> buffers;
  buffers.reserve(mutable_buffers.size());
  for (auto& [name, ptr] : mutable_buffers) buffers.emplace_back(name, ptr);
  return buffers;
}

Network Network::clone() const {
  Network copy = build_densenet_lite(config, 0);
  auto src_params = parameters();
  auto dst_params = copy.parameters();
  for (std::size_t i = 0; i < src_params.size(); ++i) {
    std::copy(src_params[i].data().begin(), src_params[i].data().end(),
              dst_params[i].data().begin());
    dst_params[i].set_requires_grad(src_params[i].requires_grad());
  }
  auto src_buffers = named_buffers();
  auto dst_buffers = copy.named_buffers();
  for (std::size_t i = 0; i < src_buffers.size(); ++i) {
    *dst_buffers[i].second = *src_buffers[i].second;
  }
  return copy;
}

int count_weighted_layers(const Network& network) {
  int count = 1;  // stem conv
  for (const auto& block : network.blocks) count += static_cast<int>(block.size());
  count += static_cast<int>(network.transitions.size());
  count += 1;  // fully connected head
  return count;
}

int layer_group_count(const DenseNetConfig& config) {
  validate_config(config);
  int64_t groups = 2;  // stem + head
  for (int64_t layers : config.layers_per_block) groups += layers;
  if (config.num_blocks > 0) groups += config.num_blocks - 1;
  return static_cast<int>(groups);
}

Network replace_head(const Network& network, int64_t new_num_classes, uint64_t seed) {
  if (new_num_classes < 2) throw ConfigError("num_classes must be >= 2");
  DenseNetConfig config = network.config;
  config.num_classes = new_num_classes;
  Network out = build_densenet_lite(config, seed);

  for (std::size_t g = 0; g + 1 < out.groups.size(); ++g) {
    const auto& src = network.groups[g].parameters;
    auto& dst = out.groups[g].parameters;
    for (std::size_t i = 0; i < src.size(); ++i) {
      std::copy(src[i].data().begin(), src[i].data().end(), dst[i].data().begin());
    }
  }
  auto src_buffers = network.named_buffers();
  auto dst_buffers = out.named_buffers();
  for (std::size_t i = 0; i < src_buffers.size(); ++i) {
    *dst_buffers[i].second = *src_buffers[i].second;
  }
  return out;
}

}  // namespace seqft
