#include "seqft/training.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

#include "seqft/errors.hpp"
#include "seqft/ops.hpp"

namespace seqft {

std::string to_string(ClassWeightPolicy policy) {
  switch (policy) {
    case ClassWeightPolicy::UNIFORM: return "uniform";
    case ClassWeightPolicy::INVERSE_FREQUENCY: return "inverse_frequency";
  }
  throw ContractError("unknown class weight policy");
}

ClassWeightPolicy weight_policy_from_string(const std::string& token) {
  if (token == "uniform") return ClassWeightPolicy::UNIFORM;
  if (token == "inverse_frequency") return ClassWeightPolicy::INVERSE_FREQUENCY;
  throw ConfigError("unknown class weight policy '" + token +
                    "' (expected uniform or inverse_frequency)");
}

void validate_train_config(const TrainConfig& config) {
  validate_schedule(config.schedule);
  if (!(config.learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (config.momentum < 0.0 || config.momentum >= 1.0)
    throw ConfigError("momentum must be in [0, 1)");
  if (config.batch_size < 1) throw ConfigError("batch_size must be >= 1");
}

std::vector<double> class_weights(const std::vector<int64_t>& label_counts,
                                  ClassWeightPolicy policy) {
  if (label_counts.empty()) throw ConfigError("class_weights needs at least one class");
  std::vector<double> weights(label_counts.size(), 1.0);
  if (policy == ClassWeightPolicy::UNIFORM) return weights;
  const auto k = static_cast<double>(label_counts.size());
  const double total = static_cast<double>(
      std::accumulate(label_counts.begin(), label_counts.end(), static_cast<int64_t>(0)));
  for (std::size_t c = 0; c < label_counts.size(); ++c) {
    if (label_counts[c] < 1) {
      throw ConfigError("inverse-frequency weights undefined: class " + std::to_string(c) +
                        " has no samples");
    }
    weights[c] = total / (k * static_cast<double>(label_counts[c]));
  }
  return weights;
}

Tensor weighted_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                              const std::vector<double>& weights) {
  if (logits.shape().size() != 2) {
    throw DimensionError("weighted_cross_entropy expects [N x K] logits, got " +
                         shape_to_string(logits.shape()));
  }
  const int64_t n = logits.dim(0), k = logits.dim(1);
  if (static_cast<int64_t>(labels.size()) != n) {
    throw ContractError("got " + std::to_string(labels.size()) + " labels for " +
                        std::to_string(n) + " logit rows");
  }
  if (static_cast<int64_t>(weights.size()) != k) {
    throw DimensionError("got " + std::to_string(weights.size()) + " class weights for " +
                         std::to_string(k) + " classes");
  }
  for (int label : labels) {
    if (label < 0 || label >= k) {
      throw ContractError("label " + std::to_string(label) + " outside 0.." +
                          std::to_string(k - 1));
    }
  }

  const double* pz = logits.data().data();
  std::vector<double> probs(static_cast<std::size_t>(n * k));
  double total = 0.0;
  for (int64_t i = 0; i < n; ++i) {
    const double* row = pz + i * k;
    const double mx = *std::max_element(row, row + k);
    double sum = 0.0;
    for (int64_t j = 0; j < k; ++j) sum += std::exp(row[j] - mx);
    const double lse = mx + std::log(sum);
    for (int64_t j = 0; j < k; ++j) probs[static_cast<std::size_t>(i * k + j)] = std::exp(row[j] - lse);
    total += weights[static_cast<std::size_t>(labels[static_cast<std::size_t>(i)])] *
             (lse - row[labels[static_cast<std::size_t>(i)]]);
  }

  const bool track = Graph::active() != nullptr && logits.requires_grad();
  Tensor loss = Tensor::zeros({1}, track);
  loss.data()[0] = total / static_cast<double>(n);
  if (track) {
    auto iz = logits.impl_ptr();
    auto il = loss.impl_ptr();
    Graph::active()->record("weighted_cross_entropy",
                            [iz, il, probs = std::move(probs), labels, weights, n, k]() {
                              if (il->grad.empty() || !iz->requires_grad) return;
                              if (iz->grad.empty()) iz->grad.assign(iz->data.size(), 0.0);
                              const double g = il->grad[0] / static_cast<double>(n);
                              for (int64_t i = 0; i < n; ++i) {
                                const double w =
                                    g * weights[static_cast<std::size_t>(
                                            labels[static_cast<std::size_t>(i)])];
                                for (int64_t j = 0; j < k; ++j) {
                                  const std::size_t idx = static_cast<std::size_t>(i * k + j);
                                  const double onehot = j == labels[static_cast<std::size_t>(i)] ? 1.0 : 0.0;
                                  iz->grad[idx] += w * (probs[idx] - onehot);
                                }
                              }
                            });
  }
  return loss;
}

void sgd_step(Network& network, double learning_rate, double momentum, SgdState& state) {
  if (!(learning_rate > 0.0)) throw ContractError("learning_rate must be > 0");
  if (momentum < 0.0 || momentum >= 1.0) throw ContractError("momentum must be in [0, 1)");
  for (LayerGroup& group : network.groups) {
    for (Tensor& p : group.parameters) {
      if (!p.requires_grad()) continue;
      if (!p.has_grad()) {
        throw ContractError("sgd_step before backward: trainable parameter in group '" +
                            group.name + "' has no gradient");
      }
      auto& velocity = state.velocity[p.impl()];
      if (velocity.size() != p.data().size()) velocity.assign(p.data().size(), 0.0);
      auto grad = p.grad();
      auto data = p.data();
      for (std::size_t i = 0; i < data.size(); ++i) {
        velocity[i] = momentum * velocity[i] + grad[i];
        data[i] -= learning_rate * velocity[i];
      }
      p.drop_grad();
    }
  }
}

namespace {

Checkpoint snapshot(const Network& network, int epoch, double validation_accuracy) {
  Checkpoint ckpt;
  ckpt.epoch = epoch;
  ckpt.validation_accuracy = validation_accuracy;
  for (const Tensor& p : network.parameters()) {
    ckpt.parameter_values.emplace_back(p.data().begin(), p.data().end());
  }
  for (const auto& [name, data] : network.named_buffers()) {
    ckpt.buffer_values.push_back(*data);
  }
  return ckpt;
}

std::pair<Tensor, std::vector<int>> make_batch(const std::vector<Sample>& samples,
                                               const std::vector<std::size_t>& order,
                                               std::size_t first, std::size_t last) {
  const Sample& probe = samples[order[first]];
  const Shape& img = probe.image.shape();
  if (img.size() != 3) {
    throw DimensionError("sample '" + probe.id + "' image must be [C x H x W], got " +
                         shape_to_string(img));
  }
  const auto count = static_cast<int64_t>(last - first);
  Tensor batch = Tensor::zeros({count, img[0], img[1], img[2]});
  std::vector<int> labels;
  labels.reserve(last - first);
  double* pb = batch.data().data();
  const std::size_t pixels = probe.image.data().size();
  for (std::size_t i = first; i < last; ++i) {
    const Sample& sample = samples[order[i]];
    if (sample.image.shape() != img) {
      throw DimensionError("sample '" + sample.id + "' image shape " +
                           shape_to_string(sample.image.shape()) + " differs from " +
                           shape_to_string(img));
    }
    std::copy_n(sample.image.data().data(), pixels, pb + (i - first) * pixels);
    labels.push_back(sample.label);
  }
  return {std::move(batch), std::move(labels)};
}

}  // namespace

void restore(const Checkpoint& checkpoint, Network& network) {
  auto params = network.parameters();
  if (checkpoint.parameter_values.size() != params.size()) {
    throw ContractError("checkpoint holds " + std::to_string(checkpoint.parameter_values.size()) +
                        " parameters but the network has " + std::to_string(params.size()));
  }
  auto buffers = network.named_buffers();
  if (checkpoint.buffer_values.size() != buffers.size()) {
    throw ContractError("checkpoint holds " + std::to_string(checkpoint.buffer_values.size()) +
                        " buffers but the network has " + std::to_string(buffers.size()));
  }
  for (std::size_t i = 0; i < params.size(); ++i) {
    if (checkpoint.parameter_values[i].size() != params[i].data().size()) {
      throw ContractError("checkpoint parameter " + std::to_string(i) + " size mismatch");
    }
    std::copy(checkpoint.parameter_values[i].begin(), checkpoint.parameter_values[i].end(),
              params[i].data().begin());
  }
  for (std::size_t i = 0; i < buffers.size(); ++i) {
    if (checkpoint.buffer_values[i].size() != buffers[i].second->size()) {
      throw ContractError("checkpoint buffer " + std::to_string(i) + " size mismatch");
    }
    *buffers[i].second = checkpoint.buffer_values[i];
  }
}

Checkpoint fit(Network& network, const Dataset& train, const Dataset& val,
               const TrainConfig& config, std::vector<EpochRecord>* epoch_log,
               const EpochCallback& on_epoch_end) {
  validate_train_config(config);
  if (train.samples.empty()) throw ConfigError("fit needs a non-empty training set");
  if (val.samples.empty()) throw ConfigError("fit needs a non-empty validation set");
  const auto k = static_cast<int64_t>(train.class_names.size());
  if (network.config.num_classes != k) {
    throw ConfigError("network head has " + std::to_string(network.config.num_classes) +
                      " outputs but the dataset has " + std::to_string(k) + " classes");
  }
  if (config.schedule.m != static_cast<int>(network.groups.size())) {
    throw ConfigError("schedule describes m=" + std::to_string(config.schedule.m) +
                      " groups but the network has " + std::to_string(network.groups.size()));
  }

  const std::vector<double> weights =
      class_weights(train.label_counts(), config.class_weight_policy);
  std::mt19937_64 shuffle_rng(config.seed);
  SgdState sgd;
  Checkpoint best;
  best.validation_accuracy = -1.0;

  std::vector<std::size_t> order(train.samples.size());
  std::iota(order.begin(), order.end(), 0);
  const auto batch_size = static_cast<std::size_t>(config.batch_size);

  for (int epoch = 0; epoch < config.schedule.n; ++epoch) {
    const FreezeState state = freeze_state_at_epoch(config.schedule, epoch);
    apply_freeze_state(network, state);
    std::shuffle(order.begin(), order.end(), shuffle_rng);

    double loss_sum = 0.0;
    for (std::size_t first = 0; first < order.size(); first += batch_size) {
      const std::size_t last = std::min(first + batch_size, order.size());
      auto [batch, labels] = make_batch(train.samples, order, first, last);
      Graph graph;
      Tensor loss;
      {
        TapeScope scope(graph);
        Tensor logits = network.forward(batch, true);
        loss = weighted_cross_entropy(logits, labels, weights);
      }
      graph.backward(loss);
      sgd_step(network, config.learning_rate, config.momentum, sgd);
      loss_sum += loss.item() * static_cast<double>(last - first);
    }

    const Predictions val_pred = predict(network, val.samples);
    int correct = 0;
    for (std::size_t i = 0; i < val.samples.size(); ++i) {
      if (val_pred.labels[i] == val.samples[i].label) ++correct;
    }
    const double val_acc = static_cast<double>(correct) / static_cast<double>(val.samples.size());

    EpochRecord record{epoch, static_cast<int>(state.trainable.size()),
                       loss_sum / static_cast<double>(train.samples.size()), val_acc};
    if (epoch_log != nullptr) epoch_log->push_back(record);
    if (on_epoch_end) on_epoch_end(record, network);
    if (val_acc > best.validation_accuracy) best = snapshot(network, epoch, val_acc);
  }
  return best;
}

Predictions predict(Network& network, const std::vector<Sample>& samples) {
  Predictions out;
  if (samples.empty()) return out;
  const int64_t k = network.config.num_classes;
  const auto n = static_cast<int64_t>(samples.size());
  out.probabilities = Tensor::zeros({n, k});
  double* po = out.probabilities.data().data();

  std::vector<std::size_t> order(samples.size());
  std::iota(order.begin(), order.end(), 0);
  constexpr std::size_t kChunk = 64;
  for (std::size_t first = 0; first < samples.size(); first += kChunk) {
    const std::size_t last = std::min(first + kChunk, samples.size());
    auto [batch, labels] = make_batch(samples, order, first, last);
    const Tensor probs = softmax_rows(network.forward(batch, false));
    std::copy(probs.data().begin(), probs.data().end(),
              po + static_cast<int64_t>(first) * k);
  }
  out.labels = argmax_rows(out.probabilities);
  return out;
}

Predictions predict(Network& network, const Dataset& dataset) {
  return predict(network, dataset.samples);
}

std::vector<int> argmax_rows(const Tensor& matrix) {
  if (matrix.shape().size() != 2) {
    throw DimensionError("argmax_rows expects a rank-2 tensor, got " +
                         shape_to_string(matrix.shape()));
  }
  const int64_t n = matrix.dim(0), k = matrix.dim(1);
  const double* p = matrix.data().data();
  std::vector<int> labels(static_cast<std::size_t>(n));
  for (int64_t i = 0; i < n; ++i) {
    const double* row = p + i * k;
    int arg = 0;
    for (int64_t j = 1; j < k; ++j) {
      if (row[j] > row[arg]) arg = static_cast<int>(j);
    }
    labels[static_cast<std::size_t>(i)] = arg;
  }
  return labels;
}

}  // namespace seqft
