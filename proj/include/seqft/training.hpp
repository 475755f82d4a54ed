#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <string>
#include <vector>

#include "seqft/data_io.hpp"
#include "seqft/model.hpp"
#include "seqft/scheduler.hpp"
#include "seqft/tensor.hpp"

namespace seqft {

enum class ClassWeightPolicy {
  UNIFORM,
  INVERSE_FREQUENCY,  // w_c = N / (K * count_c), so weights average to 1
};

std::string to_string(ClassWeightPolicy policy);
ClassWeightPolicy weight_policy_from_string(const std::string& token);

struct TrainConfig {
  SftSchedule schedule;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 16;
  uint64_t seed = 0;
  ClassWeightPolicy class_weight_policy = ClassWeightPolicy::INVERSE_FREQUENCY;
};

void validate_train_config(const TrainConfig& config);

std::vector<double> class_weights(const std::vector<int64_t>& label_counts,
                                  ClassWeightPolicy policy);

/// Mean over samples of w_{y_i} * (-log softmax(logits_i)[y_i]), computed in
/// log space. Differentiable through the logits.
Tensor weighted_cross_entropy(const Tensor& logits, const std::vector<int>& labels,
                              const std::vector<double>& weights);

/// Momentum buffers keyed by parameter identity; reusable across steps.
struct SgdState {
  std::map<const detail::TensorImpl*, std::vector<double>> velocity;
};

/// v <- momentum * v + grad; p <- p - learning_rate * v, for every parameter
/// with requires_grad true. Gradients are cleared afterwards. A trainable
/// parameter without a gradient means backward never ran: contract error.
void sgd_step(Network& network, double learning_rate, double momentum, SgdState& state);

struct Checkpoint {
  int epoch = 0;
  double validation_accuracy = 0.0;
  std::vector<std::vector<double>> parameter_values;  // group order
  std::vector<std::vector<double>> buffer_values;     // named_buffers order
};

/// Copies a checkpoint's values back into a structurally identical network.
void restore(const Checkpoint& checkpoint, Network& network);

struct EpochRecord {
  int epoch = 0;
  int trainable_groups = 0;
  double train_loss = 0.0;  // sample-weighted mean over the epoch
  double validation_accuracy = 0.0;
};

using EpochCallback = std::function<void(const EpochRecord&, const Network&)>;

/// Runs the schedule for schedule.n epochs: applies the epoch's freeze
/// state, shuffles the training set with a seeded RNG, steps SGD per batch
/// and measures validation accuracy. Returns the checkpoint with the
/// highest validation accuracy (ties to the earliest epoch). The network is
/// left in its final-epoch state; restore() the checkpoint to get the
/// selected model.
Checkpoint fit(Network& network, const Dataset& train, const Dataset& val,
               const TrainConfig& config, std::vector<EpochRecord>* epoch_log = nullptr,
               const EpochCallback& on_epoch_end = {});

struct Predictions {
  Tensor probabilities;     // [N x K]; undefined when there are no samples
  std::vector<int> labels;  // argmax, ties to the lowest class index
};

/// Eval-mode forward + softmax. Batching is internal and does not affect
/// the result. Call outside any recording scope.
Predictions predict(Network& network, const std::vector<Sample>& samples);
Predictions predict(Network& network, const Dataset& dataset);

std::vector<int> argmax_rows(const Tensor& matrix);

}  // namespace seqft
