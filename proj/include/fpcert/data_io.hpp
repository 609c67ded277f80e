#pragma once

// Datasets (MNIST IDX, CSV), synthetic attack cases, model files and
// atomic CSV/TSV output.
//
// Model files are JSON. Every float is stored as its 16-hex-digit IEEE bit
// pattern; a decimal rendering sits alongside for humans. Loading prefers
// the hex field, so a save/load cycle never perturbs a weight by even one ULP.

#include <algorithm>
#include <cerrno>
#include <cinttypes>
#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <iterator>
#include <optional>
#include <span>
#include <sstream>
#include <string>
#include <utility>
#include <variant>
#include <vector>

#include "json.hpp"

#include "fpcert/error.hpp"
#include "fpcert/fp_core.hpp"
#include "fpcert/models.hpp"
#include "fpcert/rng.hpp"

namespace fpcert {

struct Dataset {
  Matrix features;            // one row per example
  std::vector<long> labels;
  Domain domain{0.0, 255.0};

  std::size_t size() const noexcept { return labels.size(); }
  std::size_t dim() const noexcept { return features.cols(); }
  std::span<const double> row(std::size_t i) const { return features.row(i); }
};

namespace io {

inline std::vector<unsigned char> read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + path.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline std::uint32_t read_be32(const std::vector<unsigned char>& buf, std::size_t offset) {
  if (offset + 4 > buf.size()) throw Error(ErrorCode::TruncatedFile, "IDX header truncated");
  return (std::uint32_t{buf[offset]} << 24) | (std::uint32_t{buf[offset + 1]} << 16) |
         (std::uint32_t{buf[offset + 2]} << 8) | std::uint32_t{buf[offset + 3]};
}

/// Writes to a sibling temporary file and renames it into place, so a failed
/// run never leaves a partial output behind.
inline void write_atomic(const std::filesystem::path& path, const std::string& content) {
  std::filesystem::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw Error(ErrorCode::IoError, "cannot write " + tmp.string());
    out << content;
    out.flush();
    if (!out) throw Error(ErrorCode::IoError, "write failed for " + tmp.string());
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw Error(ErrorCode::IoError, "cannot rename into " + path.string() + ": " + ec.message());
  }
}

inline std::string read_text(const std::filesystem::path& path) {
  auto bytes = read_file(path);
  return {bytes.begin(), bytes.end()};
}

}  // namespace io

inline constexpr std::uint32_t kIdxImageMagic = 2051;
inline constexpr std::uint32_t kIdxLabelMagic = 2049;

/// MNIST-style IDX pair: unsigned-byte images (magic 2051) and labels
/// (magic 2049). Pixels stay in [0,255] unless rescale maps them to [0,1].
inline Dataset load_idx(const std::filesystem::path& images_path, const std::filesystem::path& labels_path,
                        bool rescale = false) {
  auto img = io::read_file(images_path);
  auto lab = io::read_file(labels_path);
  if (io::read_be32(img, 0) != kIdxImageMagic) throw Error(ErrorCode::BadMagic, "image file magic is not 2051");
  if (io::read_be32(lab, 0) != kIdxLabelMagic) throw Error(ErrorCode::BadMagic, "label file magic is not 2049");
  std::uint32_t count = io::read_be32(img, 4);
  std::uint32_t rows = io::read_be32(img, 8);
  std::uint32_t cols = io::read_be32(img, 12);
  std::uint32_t label_count = io::read_be32(lab, 4);
  if (count != label_count)
    throw Error(ErrorCode::CountMismatch,
                "images=" + std::to_string(count) + " labels=" + std::to_string(label_count));
  std::size_t dim = std::size_t{rows} * cols;
  if (img.size() < 16 + std::size_t{count} * dim) throw Error(ErrorCode::TruncatedFile, "image payload truncated");
  if (lab.size() < 8 + std::size_t{count}) throw Error(ErrorCode::TruncatedFile, "label payload truncated");

  Dataset ds;
  ds.features = Matrix(count, dim);
  ds.labels.resize(count);
  ds.domain = rescale ? Domain{0.0, 1.0} : Domain{0.0, 255.0};
  for (std::size_t i = 0; i < count; ++i) {
    auto row = ds.features.row(i);
    for (std::size_t j = 0; j < dim; ++j) {
      double p = img[16 + i * dim + j];
      row[j] = rescale ? p / 255.0 : p;
    }
    ds.labels[i] = lab[8 + i];
  }
  return ds;
}

/// Writes an IDX pair (used for fixtures and synthetic image sets). Pixels
/// are rounded and saturated to unsigned bytes.
inline void save_idx(const Dataset& ds, std::uint32_t rows, std::uint32_t cols,
                     const std::filesystem::path& images_path, const std::filesystem::path& labels_path) {
  if (std::size_t{rows} * cols != ds.dim()) throw Error(ErrorCode::DimensionMismatch, "rows*cols != feature dim");
  auto be32 = [](std::string& s, std::uint32_t v) {
    for (int shift = 24; shift >= 0; shift -= 8) s.push_back(static_cast<char>((v >> shift) & 0xff));
  };
  std::string img, lab;
  be32(img, kIdxImageMagic);
  be32(img, static_cast<std::uint32_t>(ds.size()));
  be32(img, rows);
  be32(img, cols);
  for (std::size_t i = 0; i < ds.size(); ++i)
    for (double v : ds.row(i)) img.push_back(static_cast<char>(static_cast<unsigned char>(std::lround(std::clamp(v, 0.0, 255.0)))));
  be32(lab, kIdxLabelMagic);
  be32(lab, static_cast<std::uint32_t>(ds.size()));
  for (long l : ds.labels) lab.push_back(static_cast<char>(l));
  io::write_atomic(images_path, img);
  io::write_atomic(labels_path, lab);
}

/// Rows of the dataset whose label is `neg` or `pos`, relabelled -1 / +1.
inline Dataset binary_subset(const Dataset& ds, long neg, long pos) {
  std::vector<std::size_t> keep;
  for (std::size_t i = 0; i < ds.size(); ++i)
    if (ds.labels[i] == neg || ds.labels[i] == pos) keep.push_back(i);
  Dataset out;
  out.domain = ds.domain;
  out.features = Matrix(keep.size(), ds.dim());
  out.labels.resize(keep.size());
  for (std::size_t r = 0; r < keep.size(); ++r) {
    auto src = ds.row(keep[r]);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
    out.labels[r] = ds.labels[keep[r]] == pos ? 1 : -1;
  }
  return out;
}

/// Contiguous slice [begin, begin + count) clamped to the dataset.
inline Dataset slice(const Dataset& ds, std::size_t begin, std::size_t count) {
  begin = std::min(begin, ds.size());
  count = std::min(count, ds.size() - begin);
  Dataset out;
  out.domain = ds.domain;
  out.features = Matrix(count, ds.dim());
  out.labels.assign(ds.labels.begin() + static_cast<long>(begin), ds.labels.begin() + static_cast<long>(begin + count));
  for (std::size_t r = 0; r < count; ++r) {
    auto src = ds.row(begin + r);
    std::copy(src.begin(), src.end(), out.features.row(r).begin());
  }
  return out;
}

inline std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

inline std::string to_hex(double v) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016" PRIx64, fp::to_bits(v));
  return buf;
}

inline double from_hex(const std::string& s) {
  if (s.size() != 16) throw Error(ErrorCode::SchemaError, "hex float must have 16 digits: '" + s + "'");
  std::uint64_t u = 0;
  for (char c : s) {
    int d;
    if (c >= '0' && c <= '9') d = c - '0';
    else if (c >= 'a' && c <= 'f') d = c - 'a' + 10;
    else if (c >= 'A' && c <= 'F') d = c - 'A' + 10;
    else throw Error(ErrorCode::SchemaError, "bad hex digit in '" + s + "'");
    u = (u << 4) | static_cast<std::uint64_t>(d);
  }
  return fp::from_bits(u);
}

inline double parse_double(const std::string& s) {
  errno = 0;
  char* end = nullptr;
  double v = std::strtod(s.c_str(), &end);
  if (end == s.c_str() || *end != '\0') throw Error(ErrorCode::SchemaError, "not a number: '" + s + "'");
  return v;
}

/// CSV dataset: one example per line, "label,f1,f2,...", optional header
/// line starting with '#'. Floats use 17 significant digits so values
/// survive the text round trip.
inline void save_csv_dataset(const Dataset& ds, const std::filesystem::path& path) {
  std::string s = "# label,features... domain=" + format_double(ds.domain.lo) + "," + format_double(ds.domain.hi) + "\n";
  for (std::size_t i = 0; i < ds.size(); ++i) {
    s += std::to_string(ds.labels[i]);
    for (double v : ds.row(i)) s += "," + format_double(v);
    s += "\n";
  }
  io::write_atomic(path, s);
}

inline Dataset load_csv_dataset(const std::filesystem::path& path) {
  std::istringstream in(io::read_text(path));
  std::string line;
  std::vector<std::vector<double>> rows;
  Dataset ds;
  bool have_domain = false;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    if (line[0] == '#') {
      auto pos = line.find("domain=");
      if (pos != std::string::npos) {
        auto comma = line.find(',', pos);
        ds.domain.lo = parse_double(line.substr(pos + 7, comma - pos - 7));
        ds.domain.hi = parse_double(line.substr(comma + 1));
        have_domain = true;
      }
      continue;
    }
    std::vector<double> vals;
    std::stringstream ls(line);
    std::string cell;
    while (std::getline(ls, cell, ',')) vals.push_back(parse_double(cell));
    if (vals.size() < 2) throw Error(ErrorCode::SchemaError, "dataset row needs a label and features");
    if (!rows.empty() && vals.size() != rows.front().size())
      throw Error(ErrorCode::DimensionMismatch, "ragged dataset rows");
    rows.push_back(std::move(vals));
  }
  if (rows.empty()) throw Error(ErrorCode::SchemaError, "empty dataset");
  std::size_t dim = rows.front().size() - 1;
  ds.features = Matrix(rows.size(), dim);
  ds.labels.resize(rows.size());
  for (std::size_t i = 0; i < rows.size(); ++i) {
    ds.labels[i] = static_cast<long>(rows[i][0]);
    std::copy(rows[i].begin() + 1, rows[i].end(), ds.features.row(i).begin());
  }
  if (!have_domain) {
    ds.domain = {ds.features.data().front(), ds.features.data().front()};
    for (double v : ds.features.data()) {
      ds.domain.lo = std::min(ds.domain.lo, v);
      ds.domain.hi = std::max(ds.domain.hi, v);
    }
  }
  return ds;
}

/// `*.csv` loads a CSV dataset; anything else is an IDX prefix, tried as
/// PREFIX-images-idx3-ubyte / PREFIX-labels-idx1-ubyte and then with the
/// dotted spelling PREFIX-images.idx3-ubyte.
inline Dataset load_dataset(const std::string& spec, bool rescale = false) {
  namespace fs = std::filesystem;
  if (spec.size() >= 4 && spec.compare(spec.size() - 4, 4, ".csv") == 0) return load_csv_dataset(spec);
  for (const char* sep : {"-", "."}) {
    fs::path img = spec + "-images" + sep + "idx3-ubyte";
    fs::path lab = spec + "-labels" + sep + "idx1-ubyte";
    if (fs::exists(img) && fs::exists(lab)) return load_idx(img, lab, rescale);
  }
  throw Error(ErrorCode::IoError, "no CSV file or IDX pair found for '" + spec + "'");
}

struct LinearCase {
  LinearModel model;
  Vector x;
};

/// Uniform [-1,1] draws, in the order w_1..w_D, b, x_1..x_D.
inline LinearCase gen_random_linear_case(std::size_t dim, std::uint64_t seed) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "dimension must be >= 1");
  SplitMix64 g(seed);
  LinearCase c;
  c.model.w.resize(dim);
  for (double& v : c.model.w) v = uniform(g, -1.0, 1.0);
  c.model.b = uniform(g, -1.0, 1.0);
  c.x.resize(dim);
  for (double& v : c.x) v = uniform(g, -1.0, 1.0);
  return c;
}

inline constexpr double kErrorScaleWeight = 3.3e-9;
inline constexpr double kErrorScaleBias = 3.3e9;
inline constexpr double kErrorScaleInput = 3.3e9;

/// Model and input with badly scaled magnitudes that inflate the rounding
/// error of the radius computation.
inline LinearCase gen_error_scale_case(std::size_t dim) {
  if (dim == 0) throw Error(ErrorCode::InvalidArgument, "dimension must be >= 1");
  return LinearCase{LinearModel{Vector(dim, kErrorScaleWeight), kErrorScaleBias}, Vector(dim, kErrorScaleInput)};
}

/// Isotropic Gaussian blobs for K classes. Class k is centred at
/// offset + separation * e_(k mod dim); labels cycle 0, 1, ..., K-1. The
/// domain is the observed feature range.
inline Dataset gen_gaussian_blobs(std::size_t n_per_class, std::size_t dim, std::size_t num_classes,
                                  double separation, double stddev, std::uint64_t seed, double offset = 0.0) {
  if (dim == 0 || num_classes < 2 || n_per_class == 0)
    throw Error(ErrorCode::InvalidArgument, "blobs need dim >= 1, K >= 2, n >= 1");
  if (!(stddev >= 0.0)) throw Error(ErrorCode::InvalidArgument, "stddev must be >= 0");
  SplitMix64 g(seed);
  NormalSampler<SplitMix64> normal(g);
  const std::size_t n = n_per_class * num_classes;
  Dataset ds{Matrix(n, dim), std::vector<long>(n), Domain{0.0, 0.0}};
  for (std::size_t i = 0; i < n; ++i) {
    std::size_t k = i % num_classes;
    ds.labels[i] = static_cast<long>(k);
    auto row = ds.features.row(i);
    for (std::size_t j = 0; j < dim; ++j)
      row[j] = offset + (j == k % dim ? separation : 0.0) + stddev * normal();
  }
  const auto& f = ds.features.data();
  auto [lo, hi] = std::minmax_element(f.begin(), f.end());
  ds.domain = Domain{*lo, *hi};
  return ds;
}

/// Random MLP dim -> hidden... -> K. Hidden layers draw weights and biases
/// from [0,1] when nonnegative is set (else [-1,1]); the output layer is
/// always [-1,1].
inline ReluNetwork gen_random_relu_net(std::size_t dim, std::span<const std::size_t> hidden, std::size_t num_classes,
                                       std::uint64_t seed, bool nonnegative) {
  SplitMix64 g(seed);
  std::vector<std::size_t> sizes{dim};
  sizes.insert(sizes.end(), hidden.begin(), hidden.end());
  sizes.push_back(num_classes);
  std::vector<Layer> layers;
  for (std::size_t i = 0; i + 1 < sizes.size(); ++i) {
    bool out = i + 2 == sizes.size();
    double lo = nonnegative && !out ? 0.0 : -1.0;
    Layer l{Matrix(sizes[i + 1], sizes[i]), Vector(sizes[i + 1])};
    for (double& v : l.weights.data()) v = uniform(g, lo, 1.0);
    for (double& v : l.bias) v = uniform(g, lo, 1.0);
    layers.push_back(std::move(l));
  }
  return ReluNetwork(std::move(layers));
}

using Model = std::variant<LinearModel, ReluNetwork>;

struct LoadedModel {
  Model model;
  nlohmann::json metadata = nlohmann::json::object();
  bool decimal_fallback = false;  // some field had no hex rendering
};

inline constexpr int kModelSchemaVersion = 1;

namespace detail {

inline nlohmann::json hex_array(std::span<const double> v) {
  nlohmann::json a = nlohmann::json::array();
  for (double d : v) a.push_back(to_hex(d));
  return a;
}

inline nlohmann::json dec_array(std::span<const double> v) {
  nlohmann::json a = nlohmann::json::array();
  for (double d : v) a.push_back(format_double(d));
  return a;
}

/// Reads one flat array of floats from the hex field, falling back to the
/// decimal one. When both exist they must agree bit for bit.
inline std::vector<double> read_floats(const nlohmann::json& hex, const nlohmann::json& dec, bool& fallback) {
  std::vector<double> out;
  if (!hex.is_null()) {
    if (!hex.is_array()) throw Error(ErrorCode::SchemaError, "hex field must be an array");
    for (const auto& h : hex) {
      if (!h.is_string()) throw Error(ErrorCode::SchemaError, "hex entries must be strings");
      out.push_back(from_hex(h.get<std::string>()));
    }
    if (!dec.is_null()) {
      if (!dec.is_array() || dec.size() != out.size())
        throw Error(ErrorCode::SchemaError, "decimal field length differs from hex field");
      for (std::size_t i = 0; i < out.size(); ++i) {
        double d = dec[i].is_string() ? parse_double(dec[i].get<std::string>()) : dec[i].get<double>();
        if (fp::to_bits(d) != fp::to_bits(out[i]) && !(d == 0.0 && out[i] == 0.0 && std::signbit(d) == std::signbit(out[i])))
          throw Error(ErrorCode::BitPatternMismatch,
                      "decimal " + format_double(d) + " disagrees with hex " + to_hex(out[i]));
      }
    }
  } else {
    if (!dec.is_array()) throw Error(ErrorCode::SchemaError, "missing weights");
    fallback = true;
    for (const auto& d : dec) out.push_back(d.is_string() ? parse_double(d.get<std::string>()) : d.get<double>());
  }
  for (double v : out)
    if (!std::isfinite(v)) throw Error(ErrorCode::SchemaError, "non-finite parameter in model file");
  return out;
}

}  // namespace detail

/// Serializes to the v1 schema. A linear model is stored as a single 1 x D
/// layer so both model types share one layout.
inline std::string model_to_json(const Model& model, const nlohmann::json& metadata = nlohmann::json::object()) {
  nlohmann::json j;
  j["schema"] = kModelSchemaVersion;
  nlohmann::json dims = nlohmann::json::array();
  nlohmann::json wh = nlohmann::json::array(), bh = nlohmann::json::array();
  nlohmann::json wd = nlohmann::json::array(), bd = nlohmann::json::array();
  if (const auto* lin = std::get_if<LinearModel>(&model)) {
    j["type"] = "linear";
    dims = {lin->dim(), 1};
    wh.push_back(detail::hex_array(lin->w));
    wd.push_back(detail::dec_array(lin->w));
    const double b[1] = {lin->b};
    bh.push_back(detail::hex_array(b));
    bd.push_back(detail::dec_array(b));
  } else {
    const auto& net = std::get<ReluNetwork>(model);
    j["type"] = "relu";
    dims.push_back(net.input_dim());
    for (const Layer& l : net.layers()) {
      dims.push_back(l.out_dim());
      wh.push_back(detail::hex_array(l.weights.data()));
      wd.push_back(detail::dec_array(l.weights.data()));
      bh.push_back(detail::hex_array(l.bias));
      bd.push_back(detail::dec_array(l.bias));
    }
  }
  j["dims"] = dims;
  j["weights_hex"] = wh;
  j["biases_hex"] = bh;
  j["weights_dec"] = wd;
  j["biases_dec"] = bd;
  j["metadata"] = metadata;
  return j.dump(1) + "\n";
}

inline LoadedModel model_from_json(const std::string& text) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw Error(ErrorCode::SchemaError, std::string("model file is not JSON: ") + e.what());
  }
  if (!j.is_object() || j.value("schema", 0) != kModelSchemaVersion)
    throw Error(ErrorCode::SchemaError, "unsupported or missing schema version");
  if (!j.contains("type") || !j.contains("dims") || !j["dims"].is_array())
    throw Error(ErrorCode::SchemaError, "model needs type and dims");
  std::string type = j["type"].get<std::string>();
  std::vector<std::size_t> dims;
  for (const auto& d : j["dims"]) dims.push_back(d.get<std::size_t>());
  if (dims.size() < 2) throw Error(ErrorCode::SchemaError, "dims needs at least input and output sizes");
  std::size_t n_layers = dims.size() - 1;
  auto field = [&](const char* key) { return j.contains(key) ? j[key] : nlohmann::json(); };
  nlohmann::json wh = field("weights_hex"), bh = field("biases_hex"), wd = field("weights_dec"),
                 bd = field("biases_dec");
  auto layer_of = [&](const nlohmann::json& arr, std::size_t i) {
    if (arr.is_null()) return nlohmann::json();
    if (!arr.is_array() || arr.size() != n_layers) throw Error(ErrorCode::SchemaError, "layer count differs from dims");
    return arr[i];
  };
  LoadedModel out;
  out.metadata = j.contains("metadata") ? j["metadata"] : nlohmann::json::object();
  std::vector<Layer> layers;
  for (std::size_t i = 0; i < n_layers; ++i) {
    auto w = detail::read_floats(layer_of(wh, i), layer_of(wd, i), out.decimal_fallback);
    auto b = detail::read_floats(layer_of(bh, i), layer_of(bd, i), out.decimal_fallback);
    if (w.size() != dims[i] * dims[i + 1] || b.size() != dims[i + 1])
      throw Error(ErrorCode::SchemaError, "layer " + std::to_string(i) + " sizes disagree with dims");
    layers.push_back(Layer{Matrix(dims[i + 1], dims[i], std::move(w)), std::move(b)});
  }
  if (type == "linear") {
    if (n_layers != 1 || dims[1] != 1) throw Error(ErrorCode::SchemaError, "linear model must have dims [D, 1]");
    LinearModel m{layers[0].weights.data(), layers[0].bias[0]};
    m.validate();
    out.model = std::move(m);
  } else if (type == "relu") {
    try {
      out.model = ReluNetwork(std::move(layers));
    } catch (const Error& e) {
      throw Error(ErrorCode::SchemaError, e.what());
    }
  } else {
    throw Error(ErrorCode::SchemaError, "unknown model type '" + type + "'");
  }
  return out;
}

inline void save_model(const std::filesystem::path& path, const Model& model,
                       const nlohmann::json& metadata = nlohmann::json::object()) {
  io::write_atomic(path, model_to_json(model, metadata));
}

inline LoadedModel load_model(const std::filesystem::path& path) { return model_from_json(io::read_text(path)); }

}  // namespace fpcert
