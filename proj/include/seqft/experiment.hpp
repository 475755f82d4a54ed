#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "seqft/data_io.hpp"
#include "seqft/evaluation.hpp"
#include "seqft/model.hpp"
#include "seqft/scheduler.hpp"
#include "seqft/training.hpp"

namespace seqft {

/// Deterministic fan-out of one global seed into independent RNG streams
/// (splitmix64 of seed + stream). Streams used by the harness:
///   0 fold split, 1 part-A train/val split, 2 part-B train/val split,
///   3 target dataset generation, 4 source dataset generation,
///   5 pretrain train/val split, 6 pretrain training,
///   10 + 2*mode_index + fold training, 100 + 2*mode_index + fold head init,
/// with mode_index 0 = ft_all, 1 = ft_fc, 2 = sft.
uint64_t derive_seed(uint64_t seed, uint64_t stream);

struct DataSource {
  bool use_synthetic = true;
  SyntheticSpec synthetic;
  std::string index_path;  // used when use_synthetic is false
};

/// Parses "key=value,key=value" synthetic dataset descriptions on top of
/// `base`. Keys: counts=a:b:c, names=x:y:z, size=N, height=N, width=N,
/// channels=N, base-freq=F, freq-step=F, orientation=DEG, amplitude=F,
/// noise=F, task=source|target.
SyntheticSpec parse_synthetic_spec(const std::string& text, SyntheticSpec base = {});

struct PretrainConfig {
  DataSource data;
  DenseNetConfig model;
  int epochs = 30;
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 16;
  ClassWeightPolicy class_weight_policy = ClassWeightPolicy::INVERSE_FREQUENCY;
  double train_fraction = 0.7;
  uint64_t seed = 0;
  std::string weights_path;
};

struct PretrainResult {
  std::string weights_path;
  int best_epoch = 0;
  double validation_accuracy = 0.0;
};

/// Trains a fresh network on the source task (all layers, scratch init) and
/// saves the selected checkpoint's weights.
PretrainResult run_pretrain(const PretrainConfig& config);

struct ExperimentConfig {
  DataSource data;
  DenseNetConfig model;
  std::string weights_path;     // pretrained weights to transfer from
  bool pretrain_inline = false; // pretrain on the source task first
  bool random_init = false;     // no transfer: fresh random weights per fold
  int pretrain_epochs = 30;
  std::vector<FineTuneMode> modes = {FineTuneMode::FT_ALL, FineTuneMode::FT_FC,
                                     FineTuneMode::SFT};
  int epochs = 30;           // n
  int step_epochs = 2;       // x
  int unfreeze_per_step = 1; // s
  double learning_rate = 0.01;
  double momentum = 0.9;
  int batch_size = 16;
  ClassWeightPolicy class_weight_policy = ClassWeightPolicy::INVERSE_FREQUENCY;
  double train_fraction = 0.7;
  uint64_t seed = 0;
  std::string out_dir;
};

struct FoldOutcome {
  int fold = 0;
  int best_epoch = 0;
  double validation_accuracy = 0.0;
};

struct ModeOutcome {
  FineTuneMode mode = FineTuneMode::FT_ALL;
  bool ok = false;
  std::string error;
  EvalReport report;  // valid when ok
  std::vector<FoldOutcome> folds;
  double seconds = 0.0;
};

struct ExperimentResult {
  std::vector<ModeOutcome> outcomes;
  std::string out_dir;
};

/// Full protocol: resolve starting weights, split two folds, and for every
/// requested mode train fold A->B and B->A, pool the held-out predictions,
/// and write report/ROC/confusion/prediction/epoch files plus manifest.json
/// and table.csv. A failure in one mode is recorded and does not stop the
/// others.
ExperimentResult run_experiment(const ExperimentConfig& config);

std::string predictions_csv(const std::vector<std::string>& ids,
                            const std::vector<int>& true_labels,
                            const std::vector<int>& predicted_labels, const Tensor& probabilities,
                            const std::vector<std::string>& class_names);

struct LoadedPredictions {
  std::vector<std::string> ids;
  std::vector<int> true_labels;
  std::vector<int> predicted_labels;
  Tensor probabilities;
  std::vector<std::string> class_names;
};

LoadedPredictions load_predictions_csv(const std::string& path);

/// Rebuilds the full metric report from a saved predictions CSV.
EvalReport evaluate_predictions(const std::string& path);

std::string epochs_csv(const std::vector<EpochRecord>& records);

}  // namespace seqft
