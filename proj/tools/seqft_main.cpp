#include <cstdio>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "seqft/errors.hpp"
#include "seqft/experiment.hpp"

namespace {

struct ModelFlags {
  int64_t input_size = 16;
  int64_t channels = 1;
  int64_t initial_kernel = 3;
  int64_t initial_stride = 1;
  int64_t initial_channels = 8;
  std::string blocks = "2,2";
  int64_t growth_rate = 4;
  double compression = 0.5;
};

void add_model_flags(CLI::App* cmd, ModelFlags& flags) {
  cmd->add_option("--input-size", flags.input_size, "Square input size (overridden by the data)");
  cmd->add_option("--input-channels", flags.channels, "Input channels (overridden by the data)");
  cmd->add_option("--initial-kernel", flags.initial_kernel, "Stem convolution kernel size");
  cmd->add_option("--initial-stride", flags.initial_stride, "Stem convolution stride");
  cmd->add_option("--initial-channels", flags.initial_channels, "Stem convolution output channels");
  cmd->add_option("--blocks", flags.blocks, "Dense layers per block, e.g. 2,2");
  cmd->add_option("--growth-rate", flags.growth_rate, "Channels each dense layer adds");
  cmd->add_option("--compression", flags.compression, "Transition channel compression in (0,1]");
}

seqft::DenseNetConfig to_model_config(const ModelFlags& flags) {
  seqft::DenseNetConfig config;
  config.input_channels = flags.channels;
  config.input_height = flags.input_size;
  config.input_width = flags.input_size;
  config.initial_kernel = flags.initial_kernel;
  config.initial_stride = flags.initial_stride;
  config.initial_channels = flags.initial_channels;
  config.layers_per_block.clear();
  std::size_t start = 0;
  const std::string& text = flags.blocks;
  while (start <= text.size()) {
    const std::size_t comma = text.find(',', start);
    const std::string item =
        comma == std::string::npos ? text.substr(start) : text.substr(start, comma - start);
    if (item.empty()) throw seqft::ConfigError("--blocks has an empty entry in '" + text + "'");
    try {
      std::size_t used = 0;
      config.layers_per_block.push_back(std::stoll(item, &used));
      if (used != item.size()) throw std::invalid_argument(item);
    } catch (const std::exception&) {
      throw seqft::ConfigError("--blocks entry '" + item + "' is not an integer");
    }
    if (comma == std::string::npos) break;
    start = comma + 1;
  }
  config.num_blocks = static_cast<int64_t>(config.layers_per_block.size());
  config.growth_rate = flags.growth_rate;
  config.transition_compression = flags.compression;
  return config;
}

struct DataFlags {
  std::string synthetic_spec;
  std::string index_path;
};

seqft::DataSource to_data_source(const DataFlags& flags, bool source_task_default) {
  seqft::DataSource source;
  if (!flags.index_path.empty()) {
    source.use_synthetic = false;
    source.index_path = flags.index_path;
    return source;
  }
  seqft::SyntheticSpec base;
  base.source_task = source_task_default;
  source.use_synthetic = true;
  source.synthetic = seqft::parse_synthetic_spec(flags.synthetic_spec, base);
  return source;
}

void print_report_summary(const std::string& label, const seqft::EvalReport& report) {
  std::printf("%s: acc %.4f", label.c_str(), report.acc);
  for (const auto& [projection, curve] : report.projections) {
    std::printf("  auc(%s) %.4f", seqft::to_string(projection).c_str(), curve.auc);
  }
  std::printf("\n  per-class accuracy:");
  for (std::size_t c = 0; c < report.per_class_accuracy.size(); ++c) {
    std::printf(" %s %.4f", report.confusion.class_names[c].c_str(),
                report.per_class_accuracy[c]);
  }
  std::printf("\n");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Sequential fine-tuning trainer and experiment harness"};
  app.require_subcommand(1);

  ModelFlags model_flags;
  DataFlags data_flags;
  uint64_t seed = 0;
  double learning_rate = 0.01, momentum = 0.9, train_fraction = 0.7;
  int batch_size = 16;
  std::string weight_policy = "inverse_frequency";

  auto add_train_flags = [&](CLI::App* cmd) {
    cmd->add_option("--seed", seed, "Global seed; all RNG streams derive from it");
    cmd->add_option("--lr", learning_rate, "SGD learning rate");
    cmd->add_option("--momentum", momentum, "SGD momentum in [0,1)");
    cmd->add_option("--batch-size", batch_size, "Training batch size");
    cmd->add_option("--weight-policy", weight_policy,
                    "Loss class weights: uniform or inverse_frequency");
    cmd->add_option("--train-fraction", train_fraction, "Train share of each fold");
    add_model_flags(cmd, model_flags);
  };
  auto add_data_flags = [&](CLI::App* cmd) {
    auto* synthetic = cmd->add_option("--synthetic", data_flags.synthetic_spec,
                                      "Synthetic dataset spec, e.g. counts=81:76:277,size=16");
    auto* index = cmd->add_option("--data-index", data_flags.index_path, "Dataset index CSV");
    synthetic->excludes(index);
    index->excludes(synthetic);
  };

  auto* pretrain = app.add_subcommand("pretrain", "Train on the source task and save weights");
  std::string pretrain_out;
  int pretrain_epochs = 30;
  pretrain->add_option("--out", pretrain_out, "Output weights path")->required();
  pretrain->add_option("--epochs", pretrain_epochs, "Training epochs");
  add_data_flags(pretrain);
  add_train_flags(pretrain);

  auto* experiment =
      app.add_subcommand("experiment", "Run the 2-fold cross-validation over fine-tuning modes");
  std::string out_dir, weights_path;
  std::vector<std::string> mode_tokens;
  bool pretrain_inline = false, random_init = false;
  int epochs = 30, step_epochs = 2, unfreeze_per_step = 1, inline_epochs = 30;
  experiment->add_option("--out-dir", out_dir, "Output directory")->required();
  experiment->add_option("--weights", weights_path, "Pretrained weights to transfer from");
  experiment->add_flag("--pretrain-inline", pretrain_inline,
                       "Pretrain on the source task before the experiment");
  experiment->add_option("--pretrain-epochs", inline_epochs, "Inline pretraining epochs");
  experiment->add_flag("--random-init", random_init, "Skip transfer; start from random weights");
  experiment->add_option("--mode", mode_tokens,
                         "Fine-tuning mode (repeatable): ft_all, ft_fc, sft; default all");
  experiment->add_option("--epochs", epochs, "Training epochs per fold (n)");
  experiment->add_option("--step-epochs", step_epochs, "Epochs per sequential step (x)");
  experiment->add_option("--unfreeze-per-step", unfreeze_per_step,
                         "Groups unfrozen per step (s)");
  add_data_flags(experiment);
  add_train_flags(experiment);

  auto* preview = app.add_subcommand("schedule-preview", "Print the unfreeze timeline");
  int pv_epochs = 30, pv_step = 2, pv_unfreeze = 1, pv_groups = 0;
  std::string pv_mode = "sft";
  preview->add_option("--epochs", pv_epochs, "Training epochs (n)");
  preview->add_option("--step-epochs", pv_step, "Epochs per sequential step (x)");
  preview->add_option("--unfreeze-per-step", pv_unfreeze, "Groups unfrozen per step (s)");
  preview->add_option("--groups", pv_groups, "Layer groups (m); default from the model flags");
  preview->add_option("--mode", pv_mode, "ft_all, ft_fc or sft");
  add_model_flags(preview, model_flags);

  auto* evaluate = app.add_subcommand("evaluate", "Recompute metrics from saved predictions");
  std::string predictions_path, report_out;
  evaluate->add_option("--predictions", predictions_path, "predictions_<mode>.csv path")
      ->required();
  evaluate->add_option("--out", report_out, "Also write the report JSON here");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 1;
  }

  try {
    if (*pretrain) {
      seqft::PretrainConfig config;
      config.data = to_data_source(data_flags, true);
      config.model = to_model_config(model_flags);
      config.epochs = pretrain_epochs;
      config.learning_rate = learning_rate;
      config.momentum = momentum;
      config.batch_size = batch_size;
      config.class_weight_policy = seqft::weight_policy_from_string(weight_policy);
      config.train_fraction = train_fraction;
      config.seed = seed;
      config.weights_path = pretrain_out;
      const seqft::PretrainResult result = seqft::run_pretrain(config);
      std::printf("saved %s (best epoch %d, validation accuracy %.4f)\n",
                  result.weights_path.c_str(), result.best_epoch, result.validation_accuracy);
      return 0;
    }

    if (*experiment) {
      seqft::ExperimentConfig config;
      config.data = to_data_source(data_flags, false);
      config.model = to_model_config(model_flags);
      config.weights_path = weights_path;
      config.pretrain_inline = pretrain_inline;
      config.random_init = random_init;
      config.pretrain_epochs = inline_epochs;
      if (!mode_tokens.empty()) {
        config.modes.clear();
        for (const std::string& token : mode_tokens) {
          config.modes.push_back(seqft::mode_from_string(token));
        }
      }
      config.epochs = epochs;
      config.step_epochs = step_epochs;
      config.unfreeze_per_step = unfreeze_per_step;
      config.learning_rate = learning_rate;
      config.momentum = momentum;
      config.batch_size = batch_size;
      config.class_weight_policy = seqft::weight_policy_from_string(weight_policy);
      config.train_fraction = train_fraction;
      config.seed = seed;
      config.out_dir = out_dir;

      const seqft::ExperimentResult result = seqft::run_experiment(config);
      bool all_ok = true;
      for (const seqft::ModeOutcome& outcome : result.outcomes) {
        if (outcome.ok) {
          print_report_summary(seqft::to_string(outcome.mode), outcome.report);
        } else {
          all_ok = false;
          std::fprintf(stderr, "%s failed: %s\n", seqft::to_string(outcome.mode).c_str(),
                       outcome.error.c_str());
        }
      }
      std::printf("outputs in %s\n", result.out_dir.c_str());
      return all_ok ? 0 : 2;
    }

    if (*preview) {
      const int groups =
          pv_groups > 0 ? pv_groups : seqft::layer_group_count(to_model_config(model_flags));
      seqft::SftSchedule schedule{pv_epochs, pv_step, pv_unfreeze, groups,
                                  seqft::mode_from_string(pv_mode)};
      for (const std::string& line : seqft::schedule_summary_text(schedule)) {
        std::printf("%s\n", line.c_str());
      }
      for (const std::string& warning : seqft::schedule_warnings(schedule)) {
        std::printf("warning: %s\n", warning.c_str());
      }
      return 0;
    }

    if (*evaluate) {
      const seqft::EvalReport report = seqft::evaluate_predictions(predictions_path);
      print_report_summary(predictions_path, report);
      if (!report_out.empty()) {
        seqft::write_text_file(report_out, seqft::report_json(report));
        std::printf("report written to %s\n", report_out.c_str());
      }
      return 0;
    }
  } catch (const seqft::ConfigError& e) {
    std::fprintf(stderr, "configuration error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 2;
  }
  return 0;
}
