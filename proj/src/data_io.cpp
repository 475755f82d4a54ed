#include "seqft/data_io.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numbers>
#include <numeric>
#include <random>
#include <string_view>

#include "seqft/errors.hpp"

namespace fs = std::filesystem;

namespace seqft {

namespace {

uint64_t fnv1a(std::string_view bytes) {
  uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char b : bytes) {
    h ^= b;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path);
  std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (in.bad()) throw IoError("cannot read " + path);
  return bytes;
}

void write_file_atomic(const std::string& path, const std::string& bytes) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + tmp + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("cannot write " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  if (ec) throw IoError("cannot move " + tmp + " to " + path + ": " + ec.message());
}

struct ByteWriter {
  std::string bytes;

  void raw(const void* data, std::size_t n) { bytes.append(static_cast<const char*>(data), n); }
  void u8(uint8_t v) { bytes.push_back(static_cast<char>(v)); }
  void u32(uint32_t v) {
    for (int i = 0; i < 4; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void u64(uint64_t v) {
    for (int i = 0; i < 8; ++i) u8(static_cast<uint8_t>(v >> (8 * i)));
  }
  void i64(int64_t v) { u64(static_cast<uint64_t>(v)); }
  void f64(double v) {
    uint64_t bits;
    std::memcpy(&bits, &v, sizeof bits);
    u64(bits);
  }
  void str(const std::string& s) {
    u32(static_cast<uint32_t>(s.size()));
    bytes.append(s);
  }
};

struct ByteReader {
  std::string_view bytes;
  std::size_t pos = 0;
  std::string label;

  ByteReader(std::string_view b, std::string l) : bytes(b), label(std::move(l)) {}

  void need(std::size_t n) const {
    if (pos + n > bytes.size()) throw FormatError(label + " is truncated");
  }
  uint8_t u8() {
    need(1);
    return static_cast<uint8_t>(bytes[pos++]);
  }
  uint32_t u32() {
    need(4);
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(static_cast<uint8_t>(bytes[pos++])) << (8 * i);
    return v;
  }
  uint64_t u64() {
    need(8);
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(static_cast<uint8_t>(bytes[pos++])) << (8 * i);
    return v;
  }
  int64_t i64() { return static_cast<int64_t>(u64()); }
  double f64() {
    const uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str() {
    const uint32_t n = u32();
    need(n);
    std::string s(bytes.substr(pos, n));
    pos += n;
    return s;
  }
};

constexpr std::string_view kRasterMagic = "SFR1";
constexpr std::string_view kWeightsMagic = "SFTW";

}  // namespace

void write_text_file(const std::string& path, const std::string& contents) {
  write_file_atomic(path, contents);
}

std::vector<int64_t> Dataset::label_counts() const {
  std::vector<int64_t> counts(class_names.size(), 0);
  for (const Sample& s : samples) {
    if (s.label < 0 || s.label >= static_cast<int>(class_names.size())) {
      throw ContractError("sample '" + s.id + "' has label " + std::to_string(s.label) +
                          " outside the " + std::to_string(class_names.size()) + " classes");
    }
    ++counts[static_cast<std::size_t>(s.label)];
  }
  return counts;
}

Tensor resize_bilinear(const Tensor& image, int64_t out_h, int64_t out_w) {
  if (image.shape().size() != 3) {
    throw DimensionError("resize_bilinear expects a [C x H x W] image, got " +
                         shape_to_string(image.shape()));
  }
  if (out_h < 1 || out_w < 1) throw ContractError("resize_bilinear target dims must be >= 1");
  const int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  Tensor out = Tensor::zeros({c, out_h, out_w});
  const double sy = out_h > 1 ? static_cast<double>(h - 1) / static_cast<double>(out_h - 1) : 0.0;
  const double sx = out_w > 1 ? static_cast<double>(w - 1) / static_cast<double>(out_w - 1) : 0.0;
  const double* pin = image.data().data();
  double* po = out.data().data();
  for (int64_t ic = 0; ic < c; ++ic) {
    const double* plane = pin + ic * h * w;
    double* oplane = po + ic * out_h * out_w;
    for (int64_t oy = 0; oy < out_h; ++oy) {
      const double fy = static_cast<double>(oy) * sy;
      const int64_t y0 = static_cast<int64_t>(fy);
      const int64_t y1 = std::min(y0 + 1, h - 1);
      const double ty = fy - static_cast<double>(y0);
      for (int64_t ox = 0; ox < out_w; ++ox) {
        const double fx = static_cast<double>(ox) * sx;
        const int64_t x0 = static_cast<int64_t>(fx);
        const int64_t x1 = std::min(x0 + 1, w - 1);
        const double tx = fx - static_cast<double>(x0);
        const double top = plane[y0 * w + x0] * (1.0 - tx) + plane[y0 * w + x1] * tx;
        const double bottom = plane[y1 * w + x0] * (1.0 - tx) + plane[y1 * w + x1] * tx;
        oplane[oy * out_w + ox] = top * (1.0 - ty) + bottom * ty;
      }
    }
  }
  return out;
}

void save_raster(const std::string& path, const Tensor& image, RasterKind kind) {
  if (image.shape().size() != 3) {
    throw DimensionError("save_raster expects a [C x H x W] image, got " +
                         shape_to_string(image.shape()));
  }
  const int64_t c = image.dim(0), h = image.dim(1), w = image.dim(2);
  if (c > 255) throw ContractError("raster format stores at most 255 channels");
  ByteWriter out;
  out.raw(kRasterMagic.data(), kRasterMagic.size());
  out.u8(static_cast<uint8_t>(kind));
  out.u8(static_cast<uint8_t>(c));
  out.u32(static_cast<uint32_t>(h));
  out.u32(static_cast<uint32_t>(w));
  if (kind == RasterKind::U8) {
    for (double v : image.data()) {
      const double clamped = std::clamp(v, 0.0, 1.0);
      out.u8(static_cast<uint8_t>(std::llround(clamped * 255.0)));
    }
  } else if (kind == RasterKind::F64) {
    for (double v : image.data()) out.f64(v);
  } else {
    throw ContractError("unknown raster kind");
  }
  write_file_atomic(path, out.bytes);
}

Tensor load_raster(const std::string& path) {
  const std::string bytes = read_file(path);
  ByteReader in(bytes, "raster " + path);
  in.need(kRasterMagic.size());
  if (bytes.compare(0, kRasterMagic.size(), kRasterMagic) != 0) {
    throw FormatError(path + " is not a raster file (bad magic)");
  }
  in.pos = kRasterMagic.size();
  const uint8_t kind = in.u8();
  const int64_t c = in.u8();
  const int64_t h = in.u32();
  const int64_t w = in.u32();
  if (c < 1 || h < 1 || w < 1) throw FormatError(path + " declares empty raster dimensions");
  const int64_t count = c * h * w;
  Tensor image = Tensor::zeros({c, h, w});
  double* po = image.data().data();
  if (kind == static_cast<uint8_t>(RasterKind::U8)) {
    for (int64_t i = 0; i < count; ++i) po[i] = static_cast<double>(in.u8()) / 255.0;
  } else if (kind == static_cast<uint8_t>(RasterKind::F64)) {
    for (int64_t i = 0; i < count; ++i) {
      po[i] = in.f64();
      if (!std::isfinite(po[i])) throw FormatError(path + " contains a non-finite pixel");
    }
  } else {
    throw FormatError(path + " declares unknown raster kind " + std::to_string(kind));
  }
  if (in.pos != bytes.size()) throw FormatError(path + " has trailing bytes after the payload");
  return image;
}

namespace {

std::vector<std::string> split_csv_row(const std::string& line) {
  std::vector<std::string> fields;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    if (comma == std::string::npos) {
      fields.push_back(line.substr(start));
      return fields;
    }
    fields.push_back(line.substr(start, comma - start));
    start = comma + 1;
  }
}

}  // namespace

DatasetIndex load_dataset_index(const std::string& index_path) {
  std::ifstream in(index_path);
  if (!in) throw IoError("cannot open " + index_path);
  DatasetIndex index;
  std::string line;
  int row = 0;
  while (std::getline(in, line)) {
    ++row;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    const std::vector<std::string> fields = split_csv_row(line);
    if (row == 1) {
      if (fields.size() < 2 || fields[0] != "classes") {
        throw FormatError(index_path + " row 1: expected header 'classes,<name>,...', got '" +
                          line + "'");
      }
      index.class_names.assign(fields.begin() + 1, fields.end());
      for (std::size_t i = 0; i < index.class_names.size(); ++i) {
        if (index.class_names[i].empty())
          throw FormatError(index_path + " row 1: empty class name");
        for (std::size_t j = i + 1; j < index.class_names.size(); ++j) {
          if (index.class_names[i] == index.class_names[j])
            throw FormatError(index_path + " row 1: duplicate class name '" +
                              index.class_names[i] + "'");
        }
      }
      continue;
    }
    if (fields.size() != 2 || fields[0].empty()) {
      throw FormatError(index_path + " row " + std::to_string(row) +
                        ": expected 'path,class', got '" + line + "'");
    }
    if (std::find(index.class_names.begin(), index.class_names.end(), fields[1]) ==
        index.class_names.end()) {
      throw FormatError(index_path + " row " + std::to_string(row) + ": unknown class name '" +
                        fields[1] + "'");
    }
    for (const auto& [path, name] : index.entries) {
      if (path == fields[0]) {
        throw FormatError(index_path + " row " + std::to_string(row) + ": duplicate path '" +
                          fields[0] + "'");
      }
    }
    index.entries.emplace_back(fields[0], fields[1]);
  }
  if (index.class_names.empty()) throw FormatError(index_path + " is empty");
  return index;
}

Dataset load_dataset(const std::string& index_path) {
  const DatasetIndex index = load_dataset_index(index_path);
  const fs::path base = fs::path(index_path).parent_path();
  Dataset dataset;
  dataset.class_names = index.class_names;
  for (const auto& [relpath, class_name] : index.entries) {
    Sample sample;
    sample.image = load_raster((base / relpath).string());
    sample.label = static_cast<int>(
        std::find(index.class_names.begin(), index.class_names.end(), class_name) -
        index.class_names.begin());
    sample.id = relpath;
    dataset.samples.push_back(std::move(sample));
  }
  return dataset;
}

void save_dataset(const Dataset& dataset, const std::string& directory,
                  const std::string& index_name, RasterKind kind) {
  std::error_code ec;
  fs::create_directories(directory, ec);
  if (ec) throw IoError("cannot create " + directory + ": " + ec.message());
  std::string csv = "classes";
  for (const std::string& name : dataset.class_names) csv += "," + name;
  csv += "\n";
  for (const Sample& sample : dataset.samples) {
    if (sample.label < 0 || sample.label >= static_cast<int>(dataset.class_names.size())) {
      throw ContractError("sample '" + sample.id + "' has label outside the class list");
    }
    const std::string relpath = sample.id + ".sfr";
    save_raster((fs::path(directory) / relpath).string(), sample.image, kind);
    csv += relpath + "," + dataset.class_names[static_cast<std::size_t>(sample.label)] + "\n";
  }
  write_file_atomic((fs::path(directory) / index_name).string(), csv);
}

namespace {

void write_config(ByteWriter& out, const DenseNetConfig& c) {
  out.i64(c.input_channels);
  out.i64(c.input_height);
  out.i64(c.input_width);
  out.i64(c.initial_kernel);
  out.i64(c.initial_stride);
  out.i64(c.initial_channels);
  out.i64(c.num_blocks);
  out.u32(static_cast<uint32_t>(c.layers_per_block.size()));
  for (int64_t l : c.layers_per_block) out.i64(l);
  out.i64(c.growth_rate);
  out.f64(c.transition_compression);
  out.i64(c.num_classes);
}

DenseNetConfig read_config(ByteReader& in) {
  DenseNetConfig c;
  c.input_channels = in.i64();
  c.input_height = in.i64();
  c.input_width = in.i64();
  c.initial_kernel = in.i64();
  c.initial_stride = in.i64();
  c.initial_channels = in.i64();
  c.num_blocks = in.i64();
  const uint32_t blocks = in.u32();
  c.layers_per_block.clear();
  for (uint32_t i = 0; i < blocks; ++i) c.layers_per_block.push_back(in.i64());
  c.growth_rate = in.i64();
  c.transition_compression = in.f64();
  c.num_classes = in.i64();
  return c;
}

struct ParsedParam {
  Shape shape;
  std::vector<double> data;
};

struct ParsedGroup {
  std::string name;
  bool is_head = false;
  std::vector<ParsedParam> params;
};

struct ParsedWeights {
  DenseNetConfig config;
  std::vector<ParsedGroup> groups;
  std::vector<std::pair<std::string, std::vector<double>>> buffers;
};

ParsedWeights parse_weights(const std::string& bytes, const std::string& path) {
  if (bytes.size() < kWeightsMagic.size() ||
      bytes.compare(0, kWeightsMagic.size(), kWeightsMagic) != 0) {
    throw FormatError(path + " is not a weights file (bad magic)");
  }
  if (bytes.size() < kWeightsMagic.size() + 8) throw FormatError(path + " is truncated");
  ByteReader tail(bytes, path);
  tail.pos = bytes.size() - 8;
  const uint64_t stored = tail.u64();
  const uint64_t computed = fnv1a(std::string_view(bytes).substr(0, bytes.size() - 8));
  if (stored != computed) {
    throw ChecksumError(path + " checksum mismatch (file corrupted)");
  }

  ByteReader in(std::string_view(bytes).substr(0, bytes.size() - 8), "weights file " + path);
  in.pos = kWeightsMagic.size();
  const uint8_t version = in.u8();
  if (version != 1) {
    throw FormatError(path + " has unsupported version " + std::to_string(version));
  }
  ParsedWeights parsed;
  parsed.config = read_config(in);
  const uint32_t group_count = in.u32();
  for (uint32_t g = 0; g < group_count; ++g) {
    ParsedGroup group;
    group.name = in.str();
    group.is_head = in.u8() != 0;
    const uint32_t param_count = in.u32();
    for (uint32_t p = 0; p < param_count; ++p) {
      ParsedParam param;
      const uint32_t rank = in.u32();
      for (uint32_t d = 0; d < rank; ++d) param.shape.push_back(in.i64());
      const int64_t count = shape_numel(param.shape);
      if (count < 0 || count > static_cast<int64_t>(bytes.size()))
        throw FormatError(path + " declares an implausible parameter size");
      param.data.resize(static_cast<std::size_t>(count));
      for (double& v : param.data) v = in.f64();
      group.params.push_back(std::move(param));
    }
    parsed.groups.push_back(std::move(group));
  }
  const uint32_t buffer_count = in.u32();
  for (uint32_t b = 0; b < buffer_count; ++b) {
    std::string name = in.str();
    const uint64_t count = in.u64();
    if (count > bytes.size()) throw FormatError(path + " declares an implausible buffer size");
    std::vector<double> data(count);
    for (double& v : data) v = in.f64();
    parsed.buffers.emplace_back(std::move(name), std::move(data));
  }
  if (in.pos != in.bytes.size()) throw FormatError(path + " has trailing bytes");
  return parsed;
}

Network realize_weights(const ParsedWeights& parsed, const std::string& path) {
  Network net = build_densenet_lite(parsed.config, 0);
  if (parsed.groups.size() != net.groups.size()) {
    throw FormatError(path + " stores " + std::to_string(parsed.groups.size()) +
                      " groups but its config builds " + std::to_string(net.groups.size()));
  }
  for (std::size_t g = 0; g < net.groups.size(); ++g) {
    const ParsedGroup& src = parsed.groups[g];
    LayerGroup& dst = net.groups[g];
    if (src.name != dst.name || src.is_head != dst.is_head ||
        src.params.size() != dst.parameters.size()) {
      throw FormatError(path + " group '" + src.name + "' does not match the built network");
    }
    for (std::size_t p = 0; p < src.params.size(); ++p) {
      if (src.params[p].shape != dst.parameters[p].shape()) {
        throw DimensionError(path + " group '" + src.name + "' parameter " + std::to_string(p) +
                             " has shape " + shape_to_string(src.params[p].shape) +
                             " but the config requires " +
                             shape_to_string(dst.parameters[p].shape()));
      }
      std::copy(src.params[p].data.begin(), src.params[p].data.end(),
                dst.parameters[p].data().begin());
    }
  }
  auto buffers = net.named_buffers();
  if (parsed.buffers.size() != buffers.size()) {
    throw FormatError(path + " stores " + std::to_string(parsed.buffers.size()) +
                      " running-stat buffers but the network has " +
                      std::to_string(buffers.size()));
  }
  for (const auto& [name, data] : parsed.buffers) {
    auto it = std::find_if(buffers.begin(), buffers.end(),
                           [&name](const auto& b) { return b.first == name; });
    if (it == buffers.end()) throw FormatError(path + " names unknown buffer '" + name + "'");
    if (it->second->size() != data.size()) {
      throw DimensionError(path + " buffer '" + name + "' has " + std::to_string(data.size()) +
                           " values but the network expects " +
                           std::to_string(it->second->size()));
    }
    *it->second = data;
  }
  return net;
}

std::string config_mismatch(const DenseNetConfig& a, const DenseNetConfig& b) {
  auto field = [](const char* name, auto x, auto y) -> std::string {
    if (x == y) return "";
    return std::string(name) + " (" + std::to_string(x) + " vs " + std::to_string(y) + ")";
  };
  std::string diff;
  auto add = [&diff](const std::string& d) {
    if (d.empty()) return;
    if (!diff.empty()) diff += ", ";
    diff += d;
  };
  add(field("input_channels", a.input_channels, b.input_channels));
  add(field("input_height", a.input_height, b.input_height));
  add(field("input_width", a.input_width, b.input_width));
  add(field("initial_kernel", a.initial_kernel, b.initial_kernel));
  add(field("initial_stride", a.initial_stride, b.initial_stride));
  add(field("initial_channels", a.initial_channels, b.initial_channels));
  add(field("num_blocks", a.num_blocks, b.num_blocks));
  if (a.layers_per_block != b.layers_per_block) add("layers_per_block");
  add(field("growth_rate", a.growth_rate, b.growth_rate));
  add(field("transition_compression", a.transition_compression, b.transition_compression));
  add(field("num_classes", a.num_classes, b.num_classes));
  return diff;
}

}  // namespace

void save_weights(const Network& network, const std::string& path) {
  ByteWriter out;
  out.raw(kWeightsMagic.data(), kWeightsMagic.size());
  out.u8(1);
  write_config(out, network.config);
  out.u32(static_cast<uint32_t>(network.groups.size()));
  for (const LayerGroup& group : network.groups) {
    out.str(group.name);
    out.u8(group.is_head ? 1 : 0);
    out.u32(static_cast<uint32_t>(group.parameters.size()));
    for (const Tensor& p : group.parameters) {
      out.u32(static_cast<uint32_t>(p.shape().size()));
      for (int64_t d : p.shape()) out.i64(d);
      for (double v : p.data()) out.f64(v);
    }
  }
  const auto buffers = network.named_buffers();
  out.u32(static_cast<uint32_t>(buffers.size()));
  for (const auto& [name, data] : buffers) {
    out.str(name);
    out.u64(data->size());
    for (double v : *data) out.f64(v);
  }
  out.u64(fnv1a(out.bytes));
  write_file_atomic(path, out.bytes);
}

DenseNetConfig read_weights_config(const std::string& path) {
  return parse_weights(read_file(path), path).config;
}

Network load_weights(const std::string& path) {
  return realize_weights(parse_weights(read_file(path), path), path);
}

Network load_weights(const std::string& path, const DenseNetConfig& expected) {
  ParsedWeights parsed = parse_weights(read_file(path), path);
  const std::string diff = config_mismatch(parsed.config, expected);
  if (!diff.empty()) {
    throw DimensionError(path + " stores a different network config than requested: " + diff);
  }
  return realize_weights(parsed, path);
}

namespace {

std::vector<std::vector<std::size_t>> indices_by_class(const Dataset& dataset) {
  std::vector<std::vector<std::size_t>> by_class(dataset.class_names.size());
  dataset.label_counts();  // validates label range
  for (std::size_t i = 0; i < dataset.samples.size(); ++i) {
    by_class[static_cast<std::size_t>(dataset.samples[i].label)].push_back(i);
  }
  return by_class;
}

}  // namespace

std::pair<Dataset, Dataset> split_two_fold(const Dataset& dataset, uint64_t seed) {
  if (dataset.samples.empty()) throw ConfigError("cannot split an empty dataset");
  auto by_class = indices_by_class(dataset);
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    if (by_class[c].size() < 2) {
      throw ConfigError("class '" + dataset.class_names[c] + "' has " +
                        std::to_string(by_class[c].size()) +
                        " samples; two-fold splitting needs at least 2");
    }
  }
  std::mt19937_64 rng(seed);
  Dataset a, b;
  a.class_names = b.class_names = dataset.class_names;
  bool extra_to_a = true;
  for (auto& indices : by_class) {
    std::shuffle(indices.begin(), indices.end(), rng);
    std::size_t take_a = indices.size() / 2;
    if (indices.size() % 2 != 0) {
      if (extra_to_a) ++take_a;
      extra_to_a = !extra_to_a;
    }
    for (std::size_t i = 0; i < indices.size(); ++i) {
      (i < take_a ? a : b).samples.push_back(dataset.samples[indices[i]]);
    }
  }
  return {std::move(a), std::move(b)};
}

std::pair<Dataset, Dataset> split_train_val(const Dataset& part, double fraction, uint64_t seed) {
  if (part.samples.empty()) throw ConfigError("cannot split an empty dataset");
  if (!(fraction > 0.0 && fraction < 1.0)) {
    throw ConfigError("train fraction must be in (0, 1), got " + std::to_string(fraction));
  }
  auto by_class = indices_by_class(part);
  const auto total_train =
      std::llround(fraction * static_cast<double>(part.samples.size()));

  std::vector<std::size_t> take(by_class.size());
  std::vector<std::pair<double, std::size_t>> remainders;
  int64_t assigned = 0;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    const double exact = fraction * static_cast<double>(by_class[c].size());
    take[c] = static_cast<std::size_t>(exact);
    assigned += static_cast<int64_t>(take[c]);
    remainders.emplace_back(exact - static_cast<double>(take[c]), c);
  }
  std::sort(remainders.begin(), remainders.end(), [](const auto& l, const auto& r) {
    if (l.first != r.first) return l.first > r.first;
    return l.second < r.second;
  });
  for (std::size_t i = 0; i < remainders.size() && assigned < total_train; ++i) {
    const std::size_t c = remainders[i].second;
    if (take[c] < by_class[c].size()) {
      ++take[c];
      ++assigned;
    }
  }

  std::mt19937_64 rng(seed);
  Dataset train, val;
  train.class_names = val.class_names = part.class_names;
  for (std::size_t c = 0; c < by_class.size(); ++c) {
    auto& indices = by_class[c];
    std::shuffle(indices.begin(), indices.end(), rng);
    for (std::size_t i = 0; i < indices.size(); ++i) {
      (i < take[c] ? train : val).samples.push_back(part.samples[indices[i]]);
    }
  }
  return {std::move(train), std::move(val)};
}

Dataset generate_synthetic_dataset(const SyntheticSpec& spec, uint64_t seed) {
  if (spec.class_counts.empty() || spec.class_counts.size() != spec.class_names.size()) {
    throw ConfigError("synthetic spec needs matching class_counts and class_names");
  }
  for (std::size_t c = 0; c < spec.class_counts.size(); ++c) {
    if (spec.class_counts[c] < 2) {
      throw ConfigError("synthetic class '" + spec.class_names[c] + "' needs at least 2 samples");
    }
  }
  if (spec.channels < 1 || spec.height < 1 || spec.width < 1) {
    throw ConfigError("synthetic image dimensions must be >= 1");
  }
  if (spec.amplitude < 0.0 || spec.noise_sigma < 0.0) {
    throw ConfigError("synthetic amplitude and noise_sigma must be >= 0");
  }

  const double tau = 2.0 * std::numbers::pi;
  const double deg = std::numbers::pi / 180.0;
  const double freq_shift = spec.source_task ? 0.5 : 0.0;
  const double angle_shift = spec.source_task ? 15.0 : 0.0;
  const auto k = static_cast<double>(spec.class_counts.size());
  const double scale = static_cast<double>(std::max(spec.height, spec.width));

  std::mt19937_64 rng(seed);
  std::uniform_real_distribution<double> phase_dist(0.0, tau);
  std::normal_distribution<double> noise_dist(0.0, 1.0);

  Dataset dataset;
  dataset.class_names = spec.class_names;
  for (std::size_t c = 0; c < spec.class_counts.size(); ++c) {
    const double theta =
        (spec.orientation_offset_deg + angle_shift + static_cast<double>(c) * (180.0 / k)) * deg;
    const double freq = spec.base_frequency + freq_shift + static_cast<double>(c) * spec.frequency_step;
    const double cos_t = std::cos(theta), sin_t = std::sin(theta);
    for (int64_t i = 0; i < spec.class_counts[c]; ++i) {
      const double phi = phase_dist(rng);
      Tensor image = Tensor::zeros({spec.channels, spec.height, spec.width});
      double* px = image.data().data();
      for (int64_t ch = 0; ch < spec.channels; ++ch) {
        for (int64_t y = 0; y < spec.height; ++y) {
          for (int64_t x = 0; x < spec.width; ++x) {
            double v = 0.5 + spec.amplitude *
                                 std::sin(tau * freq *
                                              (static_cast<double>(x) * cos_t +
                                               static_cast<double>(y) * sin_t) /
                                              scale +
                                          phi);
            if (spec.noise_sigma > 0.0) v += spec.noise_sigma * noise_dist(rng);
            px[(ch * spec.height + y) * spec.width + x] = std::clamp(v, 0.0, 1.0);
          }
        }
      }
      Sample sample;
      sample.image = std::move(image);
      sample.label = static_cast<int>(c);
      sample.id = spec.class_names[c] + "_" + std::to_string(i);
      dataset.samples.push_back(std::move(sample));
    }
  }
  return dataset;
}

}  // namespace seqft
