#include "seqft/experiment.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>
#include <optional>

#include <json.hpp>

#include "seqft/errors.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace seqft {

namespace {

constexpr uint64_t kStreamFoldSplit = 0;
constexpr uint64_t kStreamTrainValA = 1;
constexpr uint64_t kStreamTrainValB = 2;
constexpr uint64_t kStreamTargetData = 3;
constexpr uint64_t kStreamSourceData = 4;
constexpr uint64_t kStreamPretrainSplit = 5;
constexpr uint64_t kStreamPretrainTrain = 6;
constexpr uint64_t kStreamTrainBase = 10;
constexpr uint64_t kStreamHeadBase = 100;

int mode_index(FineTuneMode mode) {
  switch (mode) {
    case FineTuneMode::FT_ALL: return 0;
    case FineTuneMode::FT_FC: return 1;
    case FineTuneMode::SFT: return 2;
  }
  throw ContractError("unknown fine-tune mode");
}

uint64_t train_stream(FineTuneMode mode, int fold) {
  return kStreamTrainBase + 2 * static_cast<uint64_t>(mode_index(mode)) +
         static_cast<uint64_t>(fold);
}

uint64_t head_stream(FineTuneMode mode, int fold) {
  return kStreamHeadBase + 2 * static_cast<uint64_t>(mode_index(mode)) +
         static_cast<uint64_t>(fold);
}

double parse_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const double parsed = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError("synthetic spec: cannot parse " + key + "=" + value + " as a number");
  }
}

int64_t parse_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    const long long parsed = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return parsed;
  } catch (const std::exception&) {
    throw ConfigError("synthetic spec: cannot parse " + key + "=" + value + " as an integer");
  }
}

std::vector<std::string> split_on(const std::string& text, char sep) {
  std::vector<std::string> parts;
  std::size_t start = 0;
  while (true) {
    const std::size_t pos = text.find(sep, start);
    if (pos == std::string::npos) {
      parts.push_back(text.substr(start));
      return parts;
    }
    parts.push_back(text.substr(start, pos - start));
    start = pos + 1;
  }
}

Dataset resolve_dataset(const DataSource& source, uint64_t generation_seed) {
  if (source.use_synthetic) return generate_synthetic_dataset(source.synthetic, generation_seed);
  return load_dataset(source.index_path);
}

DenseNetConfig adapt_model_to_data(DenseNetConfig model, const Dataset& dataset) {
  if (dataset.samples.empty()) throw ConfigError("dataset is empty");
  const Shape& image = dataset.samples.front().image.shape();
  model.input_channels = image[0];
  model.input_height = image[1];
  model.input_width = image[2];
  model.num_classes = static_cast<int64_t>(dataset.class_names.size());
  validate_config(model);
  return model;
}

std::string architecture_mismatch(const DenseNetConfig& stored, const DenseNetConfig& wanted) {
  DenseNetConfig a = stored, b = wanted;
  a.num_classes = b.num_classes;  // the head is replaced anyway
  std::string diff;
  auto add = [&diff](const char* name) {
    if (!diff.empty()) diff += ", ";
    diff += name;
  };
  if (a.input_channels != b.input_channels) add("input_channels");
  if (a.input_height != b.input_height) add("input_height");
  if (a.input_width != b.input_width) add("input_width");
  if (a.initial_kernel != b.initial_kernel) add("initial_kernel");
  if (a.initial_stride != b.initial_stride) add("initial_stride");
  if (a.initial_channels != b.initial_channels) add("initial_channels");
  if (a.num_blocks != b.num_blocks) add("num_blocks");
  if (a.layers_per_block != b.layers_per_block) add("layers_per_block");
  if (a.growth_rate != b.growth_rate) add("growth_rate");
  if (a.transition_compression != b.transition_compression) add("transition_compression");
  return diff;
}

json config_json(const ExperimentConfig& config, const DenseNetConfig& model) {
  json j;
  if (config.data.use_synthetic) {
    const SyntheticSpec& s = config.data.synthetic;
    j["data"]["synthetic"] = {
        {"class_counts", s.class_counts},
        {"class_names", s.class_names},
        {"channels", s.channels},
        {"height", s.height},
        {"width", s.width},
        {"base_frequency", s.base_frequency},
        {"frequency_step", s.frequency_step},
        {"orientation_offset_deg", s.orientation_offset_deg},
        {"amplitude", s.amplitude},
        {"noise_sigma", s.noise_sigma},
        {"source_task", s.source_task},
    };
  } else {
    j["data"]["index_path"] = config.data.index_path;
  }
  j["model"] = {
      {"input_channels", model.input_channels},
      {"input_height", model.input_height},
      {"input_width", model.input_width},
      {"initial_kernel", model.initial_kernel},
      {"initial_stride", model.initial_stride},
      {"initial_channels", model.initial_channels},
      {"num_blocks", model.num_blocks},
      {"layers_per_block", model.layers_per_block},
      {"growth_rate", model.growth_rate},
      {"transition_compression", model.transition_compression},
      {"num_classes", model.num_classes},
  };
  std::vector<std::string> mode_names;
  for (FineTuneMode mode : config.modes) mode_names.push_back(to_string(mode));
  j["modes"] = mode_names;
  j["epochs"] = config.epochs;
  j["step_epochs"] = config.step_epochs;
  j["unfreeze_per_step"] = config.unfreeze_per_step;
  j["learning_rate"] = config.learning_rate;
  j["momentum"] = config.momentum;
  j["batch_size"] = config.batch_size;
  j["class_weight_policy"] = to_string(config.class_weight_policy);
  j["train_fraction"] = config.train_fraction;
  j["seed"] = config.seed;
  j["weights"] = config.random_init          ? "random_init"
                 : config.weights_path.empty() ? "pretrain_inline"
                                               : config.weights_path;
  if (config.pretrain_inline) j["pretrain_epochs"] = config.pretrain_epochs;
  return j;
}

json seed_stream_doc(uint64_t seed) {
  json j;
  j["derivation"] =
      "derive(seed, stream) = splitmix64(seed + 0x9E3779B97F4A7C15 * (stream + 1))";
  j["streams"] = {
      {"fold_split", 0},
      {"train_val_part_a", 1},
      {"train_val_part_b", 2},
      {"target_data", 3},
      {"source_data", 4},
      {"pretrain_split", 5},
      {"pretrain_train", 6},
      {"training", "10 + 2*mode_index + fold"},
      {"head_init", "100 + 2*mode_index + fold"},
      {"mode_index", "ft_all=0, ft_fc=1, sft=2"},
  };
  j["seed"] = seed;
  return j;
}

}  // namespace

uint64_t derive_seed(uint64_t seed, uint64_t stream) {
  uint64_t z = seed + 0x9E3779B97F4A7C15ULL * (stream + 1);
  z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
  z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
  return z ^ (z >> 31);
}

SyntheticSpec parse_synthetic_spec(const std::string& text, SyntheticSpec base) {
  SyntheticSpec spec = std::move(base);
  if (text.empty()) return spec;
  for (const std::string& item : split_on(text, ',')) {
    if (item.empty()) continue;
    const std::size_t eq = item.find('=');
    if (eq == std::string::npos) {
      throw ConfigError("synthetic spec item '" + item + "' is not key=value");
    }
    const std::string key = item.substr(0, eq);
    const std::string value = item.substr(eq + 1);
    if (key == "counts") {
      spec.class_counts.clear();
      for (const std::string& part : split_on(value, ':')) {
        spec.class_counts.push_back(parse_int(key, part));
      }
    } else if (key == "names") {
      spec.class_names = split_on(value, ':');
    } else if (key == "size") {
      spec.height = spec.width = parse_int(key, value);
    } else if (key == "height") {
      spec.height = parse_int(key, value);
    } else if (key == "width") {
      spec.width = parse_int(key, value);
    } else if (key == "channels") {
      spec.channels = parse_int(key, value);
    } else if (key == "base-freq") {
      spec.base_frequency = parse_double(key, value);
    } else if (key == "freq-step") {
      spec.frequency_step = parse_double(key, value);
    } else if (key == "orientation") {
      spec.orientation_offset_deg = parse_double(key, value);
    } else if (key == "amplitude") {
      spec.amplitude = parse_double(key, value);
    } else if (key == "noise") {
      spec.noise_sigma = parse_double(key, value);
    } else if (key == "task") {
      if (value == "source") {
        spec.source_task = true;
      } else if (value == "target") {
        spec.source_task = false;
      } else {
        throw ConfigError("synthetic spec: task must be source or target, got '" + value + "'");
      }
    } else {
      throw ConfigError("synthetic spec: unknown key '" + key + "'");
    }
  }
  if (spec.class_counts.size() != spec.class_names.size()) {
    throw ConfigError("synthetic spec: " + std::to_string(spec.class_counts.size()) +
                      " counts vs " + std::to_string(spec.class_names.size()) + " names");
  }
  return spec;
}

PretrainResult run_pretrain(const PretrainConfig& config) {
  if (config.weights_path.empty()) throw ConfigError("pretrain needs an output weights path");
  if (config.epochs < 1) throw ConfigError("pretrain needs epochs >= 1");
  Dataset dataset = resolve_dataset(config.data, derive_seed(config.seed, kStreamSourceData));
  const DenseNetConfig model = adapt_model_to_data(config.model, dataset);
  auto [train, val] =
      split_train_val(dataset, config.train_fraction, derive_seed(config.seed, kStreamPretrainSplit));

  Network network = build_densenet_lite(model, derive_seed(config.seed, kStreamPretrainTrain));
  SftSchedule schedule{config.epochs, 1, 1, static_cast<int>(network.groups.size()),
                       FineTuneMode::FT_ALL};
  TrainConfig train_config{schedule,        config.learning_rate,
                           config.momentum, config.batch_size,
                           derive_seed(config.seed, kStreamPretrainTrain),
                           config.class_weight_policy};
  const Checkpoint checkpoint = fit(network, train, val, train_config);
  restore(checkpoint, network);
  save_weights(network, config.weights_path);
  return {config.weights_path, checkpoint.epoch, checkpoint.validation_accuracy};
}

std::string predictions_csv(const std::vector<std::string>& ids,
                            const std::vector<int>& true_labels,
                            const std::vector<int>& predicted_labels, const Tensor& probabilities,
                            const std::vector<std::string>& class_names) {
  const std::size_t n = ids.size();
  if (true_labels.size() != n || predicted_labels.size() != n ||
      probabilities.shape().size() != 2 || probabilities.dim(0) != static_cast<int64_t>(n) ||
      probabilities.dim(1) != static_cast<int64_t>(class_names.size())) {
    throw ContractError("predictions_csv inputs disagree in size");
  }
  std::string csv = "id,true_class,predicted_class";
  for (const std::string& name : class_names) csv += ",p_" + name;
  csv += "\n";
  const double* p = probabilities.data().data();
  const std::size_t k = class_names.size();
  for (std::size_t i = 0; i < n; ++i) {
    csv += ids[i] + "," + class_names[static_cast<std::size_t>(true_labels[i])] + "," +
           class_names[static_cast<std::size_t>(predicted_labels[i])];
    for (std::size_t j = 0; j < k; ++j) csv += "," + format_double(p[i * k + j]);
    csv += "\n";
  }
  return csv;
}

LoadedPredictions load_predictions_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open " + path);
  LoadedPredictions out;
  std::string line;
  int row = 0;
  std::vector<double> probs;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_on(line, ',');
    if (row == 1) {
      if (fields.size() < 5 || fields[0] != "id" || fields[1] != "true_class" ||
          fields[2] != "predicted_class") {
        throw FormatError(path + " row 1: expected header id,true_class,predicted_class,p_...");
      }
      for (std::size_t i = 3; i < fields.size(); ++i) {
        if (fields[i].rfind("p_", 0) != 0) {
          throw FormatError(path + " row 1: probability column '" + fields[i] +
                            "' must start with p_");
        }
        out.class_names.push_back(fields[i].substr(2));
      }
      continue;
    }
    if (fields.size() != 3 + out.class_names.size()) {
      throw FormatError(path + " row " + std::to_string(row) + ": expected " +
                        std::to_string(3 + out.class_names.size()) + " fields, got " +
                        std::to_string(fields.size()));
    }
    auto class_of = [&](const std::string& name) {
      const auto it = std::find(out.class_names.begin(), out.class_names.end(), name);
      if (it == out.class_names.end()) {
        throw FormatError(path + " row " + std::to_string(row) + ": unknown class '" + name + "'");
      }
      return static_cast<int>(it - out.class_names.begin());
    };
    out.ids.push_back(fields[0]);
    out.true_labels.push_back(class_of(fields[1]));
    out.predicted_labels.push_back(class_of(fields[2]));
    for (std::size_t i = 3; i < fields.size(); ++i) {
      try {
        probs.push_back(std::stod(fields[i]));
      } catch (const std::exception&) {
        throw FormatError(path + " row " + std::to_string(row) + ": cannot parse probability '" +
                          fields[i] + "'");
      }
    }
  }
  if (out.class_names.empty()) throw FormatError(path + " is empty");
  if (out.ids.empty()) throw FormatError(path + " holds no prediction rows");
  out.probabilities =
      Tensor::from_data({static_cast<int64_t>(out.ids.size()),
                         static_cast<int64_t>(out.class_names.size())},
                        std::move(probs));
  return out;
}

EvalReport evaluate_predictions(const std::string& path) {
  const LoadedPredictions loaded = load_predictions_csv(path);
  return build_report(loaded.probabilities, loaded.true_labels, loaded.predicted_labels,
                      loaded.class_names);
}

std::string epochs_csv(const std::vector<EpochRecord>& records) {
  std::string csv = "epoch,trainable_groups,train_loss,val_accuracy\n";
  for (const EpochRecord& r : records) {
    csv += std::to_string(r.epoch) + "," + std::to_string(r.trainable_groups) + "," +
           format_double(r.train_loss) + "," + format_double(r.validation_accuracy) + "\n";
  }
  return csv;
}

ExperimentResult run_experiment(const ExperimentConfig& config) {
  if (config.out_dir.empty()) throw ConfigError("experiment needs an output directory");
  if (config.modes.empty()) throw ConfigError("experiment needs at least one mode");
  if (config.epochs < 1) throw ConfigError("experiment needs epochs >= 1");
  if (config.random_init && (config.pretrain_inline || !config.weights_path.empty())) {
    throw ConfigError("random_init excludes pretrained weights");
  }

  std::error_code ec;
  fs::create_directories(config.out_dir, ec);
  if (ec) throw IoError("cannot create " + config.out_dir + ": " + ec.message());
  const fs::path out_dir(config.out_dir);

  Dataset dataset = resolve_dataset(config.data, derive_seed(config.seed, kStreamTargetData));
  if (dataset.class_names.size() != 3) {
    throw ConfigError("the experiment protocol needs exactly 3 classes, got " +
                      std::to_string(dataset.class_names.size()));
  }
  const DenseNetConfig model = adapt_model_to_data(config.model, dataset);

  // Resolve the starting weights once so every mode transfers from the
  // exact same network.
  std::optional<Network> pretrained;
  std::string weights_origin = "random_init";
  json pretrain_meta;
  if (!config.random_init) {
    std::string weights_path = config.weights_path;
    if (weights_path.empty()) {
      if (!config.pretrain_inline) {
        throw ConfigError(
            "experiment needs pretrained weights, inline pretraining or random_init");
      }
      if (!config.data.use_synthetic) {
        throw ConfigError("inline pretraining needs a synthetic data source");
      }
      PretrainConfig pre;
      pre.data.use_synthetic = true;
      pre.data.synthetic = config.data.synthetic;
      pre.data.synthetic.source_task = true;
      pre.model = model;
      pre.epochs = config.pretrain_epochs;
      pre.learning_rate = config.learning_rate;
      pre.momentum = config.momentum;
      pre.batch_size = config.batch_size;
      pre.class_weight_policy = config.class_weight_policy;
      pre.train_fraction = config.train_fraction;
      pre.seed = config.seed;
      pre.weights_path = (out_dir / "pretrained.sftw").string();
      const PretrainResult result = run_pretrain(pre);
      weights_path = result.weights_path;
      pretrain_meta = {{"best_epoch", result.best_epoch},
                       {"validation_accuracy", result.validation_accuracy},
                       {"weights_path", result.weights_path}};
    }
    const DenseNetConfig stored = read_weights_config(weights_path);
    const std::string diff = architecture_mismatch(stored, model);
    if (!diff.empty()) {
      throw ConfigError(weights_path + " holds a different architecture (" + diff +
                        "); pretrain with matching model options");
    }
    pretrained = load_weights(weights_path);
    weights_origin = weights_path;
  }

  auto [part_a, part_b] = split_two_fold(dataset, derive_seed(config.seed, kStreamFoldSplit));
  auto [train_a, val_a] =
      split_train_val(part_a, config.train_fraction, derive_seed(config.seed, kStreamTrainValA));
  auto [train_b, val_b] =
      split_train_val(part_b, config.train_fraction, derive_seed(config.seed, kStreamTrainValB));

  std::vector<FineTuneMode> modes = config.modes;
  std::sort(modes.begin(), modes.end(),
            [](FineTuneMode a, FineTuneMode b) { return mode_index(a) < mode_index(b); });
  modes.erase(std::unique(modes.begin(), modes.end()), modes.end());

  ExperimentResult result;
  result.out_dir = config.out_dir;
  json manifest;
  manifest["config"] = config_json(config, model);
  manifest["seeds"] = seed_stream_doc(config.seed);
  manifest["splits"] = {
      {"strategy", "stratified by class"},
      {"fold_sizes", {part_a.size(), part_b.size()}},
      {"train_val",
       {{"part_a", {train_a.size(), val_a.size()}}, {"part_b", {train_b.size(), val_b.size()}}}},
  };
  if (!pretrain_meta.is_null()) manifest["pretrain"] = pretrain_meta;
  manifest["weights_origin"] = weights_origin;

  const auto wall_start = std::chrono::steady_clock::now();
  for (FineTuneMode mode : modes) {
    const std::string token = to_string(mode);
    ModeOutcome outcome;
    outcome.mode = mode;
    const auto mode_start = std::chrono::steady_clock::now();
    try {
      const int m = layer_group_count(model);
      SftSchedule schedule{config.epochs, config.step_epochs, config.unfreeze_per_step, m, mode};
      validate_schedule(schedule);
      manifest["schedule"][token]["summary"] = schedule_summary_text(schedule);
      manifest["schedule"][token]["warnings"] = schedule_warnings(schedule);
      manifest["schedule"][token]["step_count"] = step_count(schedule);

      std::vector<std::string> pooled_ids;
      std::vector<int> pooled_true, pooled_pred;
      std::vector<double> pooled_probs;
      for (int fold = 0; fold < 2; ++fold) {
        const Dataset& train = fold == 0 ? train_a : train_b;
        const Dataset& val = fold == 0 ? val_a : val_b;
        const Dataset& test = fold == 0 ? part_b : part_a;

        Network network =
            config.random_init
                ? build_densenet_lite(model, derive_seed(config.seed, head_stream(mode, fold)))
                : replace_head(*pretrained, model.num_classes,
                               derive_seed(config.seed, head_stream(mode, fold)));
        TrainConfig train_config{schedule,
                                 config.learning_rate,
                                 config.momentum,
                                 config.batch_size,
                                 derive_seed(config.seed, train_stream(mode, fold)),
                                 config.class_weight_policy};
        std::vector<EpochRecord> epoch_log;
        const Checkpoint checkpoint = fit(network, train, val, train_config, &epoch_log);
        restore(checkpoint, network);
        write_text_file(
            (out_dir / ("epochs_" + token + "_" + std::to_string(fold) + ".csv")).string(),
            epochs_csv(epoch_log));
        outcome.folds.push_back({fold, checkpoint.epoch, checkpoint.validation_accuracy});

        const Predictions predictions = predict(network, test.samples);
        const double* p = predictions.probabilities.data().data();
        pooled_probs.insert(pooled_probs.end(), p, p + test.size() * 3);
        for (std::size_t i = 0; i < test.size(); ++i) {
          pooled_ids.push_back(test.samples[i].id);
          pooled_true.push_back(test.samples[i].label);
          pooled_pred.push_back(predictions.labels[i]);
        }
      }

      const Tensor probabilities = Tensor::from_data(
          {static_cast<int64_t>(pooled_ids.size()), 3}, std::move(pooled_probs));
      outcome.report = build_report(probabilities, pooled_true, pooled_pred, dataset.class_names);
      write_text_file((out_dir / ("report_" + token + ".json")).string(),
                      report_json(outcome.report));
      write_text_file((out_dir / ("confusion_" + token + ".csv")).string(),
                      confusion_csv(outcome.report.confusion, outcome.report.normalized));
      for (const auto& [projection, curve] : outcome.report.projections) {
        write_text_file(
            (out_dir / ("roc_" + token + "_" + to_string(projection) + ".csv")).string(),
            roc_csv(curve));
      }
      write_text_file((out_dir / ("predictions_" + token + ".csv")).string(),
                      predictions_csv(pooled_ids, pooled_true, pooled_pred, probabilities,
                                      dataset.class_names));
      outcome.ok = true;
    } catch (const std::exception& error) {
      outcome.ok = false;
      outcome.error = error.what();
    }
    outcome.seconds =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - mode_start).count();
    result.outcomes.push_back(std::move(outcome));
  }

  json modes_json = json::array();
  std::vector<std::pair<double, std::string>> ranking;
  for (const ModeOutcome& outcome : result.outcomes) {
    json m;
    m["mode"] = to_string(outcome.mode);
    m["ok"] = outcome.ok;
    m["seconds"] = outcome.seconds;
    if (outcome.ok) {
      m["accuracy"] = outcome.report.acc;
      for (const auto& [projection, curve] : outcome.report.projections) {
        m["auc"][to_string(projection)] = curve.auc;
      }
      json folds = json::array();
      for (const FoldOutcome& fold : outcome.folds) {
        folds.push_back({{"fold", fold.fold},
                         {"best_epoch", fold.best_epoch},
                         {"validation_accuracy", fold.validation_accuracy}});
      }
      m["folds"] = folds;
      ranking.emplace_back(outcome.report.acc, to_string(outcome.mode));
    } else {
      m["error"] = outcome.error;
    }
    modes_json.push_back(std::move(m));
  }
  manifest["modes"] = modes_json;

  std::stable_sort(ranking.begin(), ranking.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  json ranked = json::array();
  for (const auto& [acc, name] : ranking) ranked.push_back(name);
  manifest["mode_ranking_by_accuracy"] = ranked;
  manifest["mode_ranking_note"] =
      "ranking is reported for inspection only; no ordering is asserted";

  std::string table = "mode,acc";
  for (BinaryProjection projection : kAllProjections) {
    table += ",auc_" + to_string(projection);
  }
  table += "\n";
  for (const ModeOutcome& outcome : result.outcomes) {
    if (!outcome.ok) continue;
    table += to_string(outcome.mode) + "," + format_double(outcome.report.acc);
    for (const auto& [projection, curve] : outcome.report.projections) {
      table += "," + format_double(curve.auc);
    }
    table += "\n";
  }
  write_text_file((out_dir / "table.csv").string(), table);

  manifest["tool_version"] = "1.0.0";
  manifest["total_seconds"] =
      std::chrono::duration<double>(std::chrono::steady_clock::now() - wall_start).count();
  write_text_file((out_dir / "manifest.json").string(), manifest.dump(2) + "\n");
  return result;
}

}  // namespace seqft
