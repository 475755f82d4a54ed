#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "seqft/model.hpp"
#include "seqft/tensor.hpp"

namespace seqft {

struct Sample {
  Tensor image;  // [C x H x W], values in [0, 1]
  int label = 0;
  std::string id;
};

struct Dataset {
  std::vector<Sample> samples;
  std::vector<std::string> class_names;

  std::size_t size() const { return samples.size(); }
  std::vector<int64_t> label_counts() const;
};

/// Parsed dataset index: rows of (relative path, class name) plus the ordered
/// class list from the header line `classes,<name0>,<name1>,...`.
struct DatasetIndex {
  std::vector<std::pair<std::string, std::string>> entries;
  std::vector<std::string> class_names;
};

enum class RasterKind : uint8_t {
  U8 = 0,   // bytes, value = round(pixel * 255)
  F64 = 1,  // little-endian IEEE doubles
};

/// Corner-aligned bilinear resize of a [C x H x W] image.
Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w);

/// Writes via a temp file plus rename so readers never see partial output.
void write_text_file(const std::string& path, const std::string& contents);

/// Raster file: "SFR1", kind u8, channels u8, height u32le, width u32le,
/// then the row-major C*H*W payload.
void save_raster(const std::string& path, const Tensor& image, RasterKind kind);
Tensor load_raster(const std::string& path);

DatasetIndex load_dataset_index(const std::string& index_path);

/// Loads every raster named by the index; paths resolve relative to the
/// index file's directory.
Dataset load_dataset(const std::string& index_path);

/// Writes one raster per sample (named <id>.sfr) plus an index CSV into
/// `directory`, creating it if needed.
void save_dataset(const Dataset& dataset, const std::string& directory,
                  const std::string& index_name = "index.csv",
                  RasterKind kind = RasterKind::F64);

/// Weights file: "SFTW", version u8, network config echo, per-group named
/// parameter payloads, named running statistics, then a trailing FNV-1a-64
/// checksum over everything before it. Round-trips bitwise.
void save_weights(const Network& network, const std::string& path);
DenseNetConfig read_weights_config(const std::string& path);
Network load_weights(const std::string& path);
Network load_weights(const std::string& path, const DenseNetConfig& expected);

/// Stratified 50/50 split; odd per-class counts alternate which side gets
/// the extra sample so the halves differ by at most one overall.
std::pair<Dataset, Dataset> split_two_fold(const Dataset& dataset, uint64_t seed);

/// Stratified train/val split. Train size is round(fraction * size); the
/// per-class shares are floors topped up by largest remainder.
std::pair<Dataset, Dataset> split_train_val(const Dataset& part, double fraction, uint64_t seed);

/// Oriented sinusoidal gratings, one orientation and frequency per class.
/// `source_task` shifts both so pretraining sees related but distinct data.
struct SyntheticSpec {
  std::vector<int64_t> class_counts = {81, 76, 277};
  std::vector<std::string> class_names = {"normal", "tb", "cancer"};
  int64_t channels = 1;
  int64_t height = 16;
  int64_t width = 16;
  double base_frequency = 2.0;
  double frequency_step = 1.0;
  double orientation_offset_deg = 0.0;
  double amplitude = 0.35;
  double noise_sigma = 0.15;
  bool source_task = false;
};

Dataset generate_synthetic_dataset(const SyntheticSpec& spec, uint64_t seed);

}  // namespace seqft
